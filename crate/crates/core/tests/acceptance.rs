//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time budget.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::*;
use transit_typology::autoencoder::{train, Architecture, Autoencoder, TrainConfig};
use transit_typology::clustering::{agglomerate, cut, cuts, Linkage, LinkageConfig, Metric};
use transit_typology::features::{aggregate_all, build_features, RegionFeatureVector};
use transit_typology::gtfs::{
    default_analysis_date, departure_events, load_feed, validate_feed, HeadsignPolicy, HourWindow,
};
use transit_typology::normalize::{fit, Block, NormalizationMode};
use transit_typology::pipeline::{run, validate_config_str, RunOptions};
use transit_typology::region::{assign_stops, cell_of, CoverageReport};
use transit_typology::report::share_table;
use transit_typology::synthetic;
use transit_typology::Percent;

// Tolerances and budgets.
const FIXTURE_BUDGET: Duration = Duration::from_secs(1);
const NORMALIZATION_CORPORA: u32 = 128;
const ROUND_TRIP_REL: f64 = 1e-9;
const GRAD_EPS: f64 = 1e-5;
const GRAD_MAX_REL: f64 = 1e-4;
/// Denominator floor of the relative error, for gradients that are
/// numerically zero.
const GRAD_REL_FLOOR: f64 = 1e-6;
const GRAD_MIN_PARAMS: usize = 1000;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const TRAIN_SAMPLES: usize = 200;
const TRAIN_RATIO: f64 = 0.1;
const TRAIN_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_INSTANCES: usize = 200;
const ORACLE_MAX_N: usize = 12;
const ORACLE_MAX_D: usize = 4;
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const E2E_BUDGET: Duration = Duration::from_secs(120);
const SCALE_INSTANCES: usize = 200;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "minicity fixture features",
            budget: Some(FIXTURE_BUDGET),
            check: fixture_exactness,
        },
        Criterion {
            id: 2,
            name: "percentage arithmetic",
            budget: None,
            check: percentages,
        },
        Criterion {
            id: 3,
            name: "normalization properties",
            budget: None,
            check: normalization_suite,
        },
        Criterion {
            id: 4,
            name: "gradient check",
            budget: Some(GRAD_BUDGET),
            check: gradient_check,
        },
        Criterion {
            id: 5,
            name: "training sanity",
            budget: Some(TRAIN_BUDGET),
            check: training_sanity,
        },
        Criterion {
            id: 6,
            name: "clustering oracle",
            budget: Some(ORACLE_BUDGET),
            check: clustering_oracle,
        },
        Criterion {
            id: 7,
            name: "dendrogram properties",
            budget: None,
            check: dendrogram_properties,
        },
        Criterion {
            id: 8,
            name: "end-to-end determinism",
            budget: Some(E2E_BUDGET),
            check: end_to_end,
        },
        Criterion {
            id: 9,
            name: "cosine scale invariance",
            budget: None,
            check: cosine_scale_invariance,
        },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:.0?}")),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {}: {} [{elapsed:.2?}] {detail}",
            c.id, c.name
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

// 1 ---------------------------------------------------------------------------

fn fixture_exactness() -> Outcome {
    let mut feed = load_feed(&fixture("minicity"), "minicity").map_err(|e| e.to_string())?;
    ensure!(
        feed.trips.len() == 4,
        "expected 4 trips, got {}",
        feed.trips.len()
    );
    let report = validate_feed(&mut feed, HeadsignPolicy::Strict);
    ensure!(
        report.accepted && report.substitutions == 0,
        "validation: {report:?}"
    );
    let date = default_analysis_date(&feed).map_err(|e| e.to_string())?;
    ensure!(date.to_string() == "2021-01-06", "analysis date {date}");

    let window = HourWindow::DAYTIME;
    let events = departure_events(&feed, date, window).map_err(|e| e.to_string())?;
    let per_trip = |t: &str| events.iter().filter(|e| e.trip_id == t).count();
    // T1: 07:10, 07:40, final stop 08:05 excluded.
    ensure!(per_trip("T1") == 2, "T1 events {}", per_trip("T1"));
    // T3: frequencies 08:00-09:00 every 1200 s from a two-stop pattern.
    let t3: Vec<u32> = events
        .iter()
        .filter(|e| e.trip_id == "T3")
        .map(|e| e.hour_bucket)
        .collect();
    ensure!(t3 == vec![8, 8, 8], "T3 hour buckets {t3:?}");
    // T4 leaves at 23:00, outside the window.
    ensure!(per_trip("T4") == 0, "T4 events {}", per_trip("T4"));
    ensure!(events.len() == 6, "event count {}", events.len());

    let regions = assign_stops(&feed, 8).map_err(|e| e.to_string())?;
    ensure!(
        regions.region_count() == 2,
        "regions {}",
        regions.region_count()
    );
    let features =
        build_features("minicity", &events, &regions, window).map_err(|e| e.to_string())?;
    let market = regions.cell_of_stop("minicity", "S1").unwrap();
    ensure!(
        regions.cell_of_stop("minicity", "S2") == Some(market),
        "S1 and S2 share a cell"
    );
    let gate = regions.cell_of_stop("minicity", "S3").unwrap();

    let expect = |trips: &[(u32, u32)], dirs: &[(u32, u32)]| {
        let mut fv = RegionFeatureVector::zeros(market, "minicity", window);
        for &(h, v) in trips {
            fv.trips[window.offset(h).unwrap()] = v;
        }
        for &(h, v) in dirs {
            fv.directions[window.offset(h).unwrap()] = v;
        }
        fv
    };
    let mut want_market = expect(&[(7, 2), (8, 1)], &[(7, 1), (8, 1)]);
    want_market.region = market;
    let mut want_gate = expect(&[(8, 3)], &[(8, 1)]);
    want_gate.region = gate;
    let mut want = vec![want_market, want_gate];
    want.sort_by_key(|fv| fv.region);
    ensure!(features == want, "features {features:?}");

    let aggregates = aggregate_all("minicity", &features, &events, &regions);
    let agg = aggregates.iter().find(|a| a.region == market).unwrap();
    ensure!(
        (agg.sum_trips, agg.directions_whole_day) == (3, 2),
        "aggregate {agg:?}"
    );
    Ok("trips_at_7=2 directions_at_7=1 trips_at_8=1; frequency region trips_at_8=3".into())
}

// 2 ---------------------------------------------------------------------------

fn percentages() -> Outcome {
    let a = CoverageReport::from_counts(8, 6478, 2104).unwrap();
    ensure!(
        a.to_string() == "resolution 8: 2104 of 6478 cells without a stop (32.48%)",
        "2104/6478 printed {a}"
    );
    let b = CoverageReport::from_counts(8, 45412, 33063).unwrap();
    ensure!(
        b.to_string().ends_with("(72.81%)"),
        "33063/45412 printed {b}"
    );

    let labels: Vec<usize> = (0..120).map(|i| usize::from(i >= 66)).collect();
    let split = transit_typology::clustering::ClusterCut { k: 2, labels };
    let cities = vec!["barcelona".to_owned()];
    let table = share_table(&split, &vec!["barcelona"; 120], &cities).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let csv = String::from_utf8(csv).unwrap();
    ensure!(
        csv == "label,barcelona\n0,55.00\n1,45.00\n",
        "share table printed {csv:?}"
    );
    ensure!(
        Percent::of(66, 120).map(|p| p.hundredths()) == Some(5500),
        "66/120"
    );
    Ok("32.48%, 72.81%, 55.00/45.00".into())
}

// 3 ---------------------------------------------------------------------------

fn corpus_strategy() -> impl Strategy<Value = Vec<RegionFeatureVector>> {
    (0u32..=20, 1u32..=5).prop_flat_map(|(first, len)| {
        let last = (first + len - 1).min(23);
        let width = (last - first + 1) as usize;
        prop::collection::vec(
            (0usize..4, prop::collection::vec(0u32..2000, 2 * width)),
            1..30,
        )
        .prop_map(move |rows| {
            let window = HourWindow::new(first, last).unwrap();
            let cell = cell_of(51.1, 17.0, 8).unwrap();
            rows.into_iter()
                .map(|(city, values)| {
                    let mut fv = RegionFeatureVector::zeros(cell, &format!("c{city}"), window);
                    fv.trips.copy_from_slice(&values[..width]);
                    fv.directions.copy_from_slice(&values[width..]);
                    fv
                })
                .collect()
        })
    })
}

fn check_normalization(rows: &[RegionFeatureVector]) -> Result<(), TestCaseError> {
    let width = rows[0].trips.len();
    let block_of = |i: usize| {
        if i < width {
            Block::Trips
        } else {
            Block::Directions
        }
    };
    for mode in [NormalizationMode::Global, NormalizationMode::Local] {
        let params = fit(rows, mode).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let scope = |fv: &RegionFeatureVector| match mode {
            NormalizationMode::Global => "corpus".to_owned(),
            NormalizationMode::Local => fv.city.clone(),
        };
        // (scope, block) -> [(raw, scaled)]
        let mut groups: BTreeMap<(String, Block), Vec<(f64, f64)>> = BTreeMap::new();
        for fv in rows {
            let raw = fv.values();
            let scaled = params
                .transform(fv)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            // Inversion is defined only when neither block is degenerate.
            let back = params.inverse_transform(&fv.city, &scaled).ok();
            for (i, (&r, &s)) in raw.iter().zip(&scaled).enumerate() {
                prop_assert!(
                    (0.0..=1.0).contains(&s),
                    "{mode:?}: value {s} outside [0, 1]"
                );
                if let Some(back) = &back {
                    prop_assert!(
                        (back[i] - r).abs() <= ROUND_TRIP_REL * r.abs().max(1.0),
                        "{mode:?}: round trip {r} -> {}",
                        back[i]
                    );
                }
                groups
                    .entry((scope(fv), block_of(i)))
                    .or_default()
                    .push((r, s));
            }
        }
        for ((scope, block), pairs) in &groups {
            let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            for &(r, s) in pairs {
                if hi > lo {
                    if r == hi {
                        prop_assert_eq!(
                            s,
                            1.0,
                            "{:?} {} {}: max must map to 1",
                            mode,
                            scope,
                            block
                        );
                    }
                    if r == lo {
                        prop_assert_eq!(
                            s,
                            0.0,
                            "{:?} {} {}: min must map to 0",
                            mode,
                            scope,
                            block
                        );
                    }
                } else {
                    prop_assert_eq!(s, 0.0, "degenerate block maps to 0");
                }
            }
            // Monotone within the block, strictly when the raw values differ.
            for &(r1, s1) in pairs {
                for &(r2, s2) in pairs {
                    if r1 < r2 {
                        prop_assert!(
                            s1 < s2,
                            "{mode:?} {scope} {block}: {r1}->{s1} vs {r2}->{s2}"
                        );
                    }
                }
            }
        }
        if mode == NormalizationMode::Global {
            // One scope for all cities, so cross-city order is preserved.
            for a in rows {
                for b in rows {
                    let (sa, sb) = (params.transform(a).unwrap(), params.transform(b).unwrap());
                    for (i, (ra, rb)) in a.values().iter().zip(b.values()).enumerate() {
                        if *ra < rb {
                            prop_assert!(sa[i] < sb[i], "global order across cities");
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn normalization_suite() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: NORMALIZATION_CORPORA,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&corpus_strategy(), |rows| check_normalization(&rows))
        .map_err(|e| e.to_string())?;

    // Local mode: a weak city's block max still maps to 1.0, while global
    // scaling keeps it well below the strong city.
    let mut rows = synthetic::corpus(3, &[("strong", 2.0), ("weak", 0.2)], 20);
    rows.iter_mut().for_each(|fv| fv.directions[0] += 1);
    let local = fit(&rows, NormalizationMode::Local).unwrap();
    let global = fit(&rows, NormalizationMode::Global).unwrap();
    for city in ["strong", "weak"] {
        let members: Vec<_> = rows.iter().filter(|fv| fv.city == city).collect();
        let best = members.iter().map(|fv| {
            local.transform(fv).unwrap()[..17]
                .iter()
                .cloned()
                .fold(0.0, f64::max)
        });
        ensure!(
            best.fold(0.0, f64::max) == 1.0,
            "local trips max of {city} is not 1"
        );
    }
    let weak_global_max = rows
        .iter()
        .filter(|fv| fv.city == "weak")
        .flat_map(|fv| global.transform(fv).unwrap()[..17].to_vec())
        .fold(0.0, f64::max);
    ensure!(weak_global_max < 0.5, "global weak max {weak_global_max}");
    Ok(format!(
        "{NORMALIZATION_CORPORA} random corpora, both modes"
    ))
}

// 4 ---------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..4u64 {
        let cfg = TrainConfig {
            seed: 100 + round,
            ..TrainConfig::default()
        };
        let mut model = Autoencoder::init(Architecture::REGION, &cfg);
        // Non-zero biases so their gradients are exercised away from init.
        for layer in &mut model.layers {
            layer
                .biases
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let batch: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..34).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let loss = model.loss(&batch).unwrap();
        let reference = reference_loss(&model, &batch);
        ensure!(
            (loss - reference).abs() <= 1e-12 * reference.max(1.0),
            "loss {loss} vs reference {reference}"
        );
        let analytic = model.gradients(&batch).unwrap().flat();
        let count = model.parameter_count();
        ensure!(analytic.len() == count, "gradient length");
        let mut indices: BTreeSet<usize> = BTreeSet::new();
        while indices.len() < 300 {
            indices.insert(rng.random_range(0..count));
        }
        for &i in &indices {
            let Some(numeric) = central_difference(&model, &batch, i, GRAD_EPS) else {
                skipped += 1;
                continue;
            };
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_REL_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure!(
        checked >= GRAD_MIN_PARAMS,
        "only {checked} parameters checked"
    );
    ensure!(
        worst <= GRAD_MAX_REL,
        "max relative error {worst:e} > {GRAD_MAX_REL:e}"
    );
    Ok(format!(
        "{checked} parameters, max relative error {worst:.2e}, {skipped} skipped at rectifier kinks"
    ))
}

// 5 ---------------------------------------------------------------------------

fn training_data() -> Vec<Vec<f64>> {
    let raw = synthetic::corpus(
        11,
        &[("a", 1.0), ("b", 0.6), ("c", 1.5), ("d", 0.8)],
        TRAIN_SAMPLES / 4,
    );
    let params = fit(&raw, NormalizationMode::Global).unwrap();
    raw.iter().map(|fv| params.transform(fv).unwrap()).collect()
}

fn training_sanity() -> Outcome {
    let data = training_data();
    ensure!(data.len() == TRAIN_SAMPLES, "corpus size {}", data.len());
    let cfg = TrainConfig::default();
    let run_once = || train(Autoencoder::init(Architecture::REGION, &cfg), &data, &cfg).unwrap();
    let first = run_once();
    let history = &first.loss_history;
    let (start, end) = (history[0], *history.last().unwrap());
    ensure!(
        end < TRAIN_RATIO * start,
        "final {end} is not below {TRAIN_RATIO} x first-epoch {start}"
    );
    let second = run_once();
    let a = serde_json::to_vec(&first.model).unwrap();
    let b = serde_json::to_vec(&second.model).unwrap();
    ensure!(a == b, "same seed produced different serialized models");
    let bits = |m: &Autoencoder| -> Vec<u64> {
        (0..m.parameter_count())
            .map(|i| m.parameter(i).to_bits())
            .collect()
    };
    ensure!(
        bits(&first.model) == bits(&second.model),
        "parameter bits differ"
    );
    Ok(format!(
        "first-epoch {start:.4}, final {end:.4} (ratio {:.4}), identical reruns",
        end / start
    ))
}

// 6 ---------------------------------------------------------------------------

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn compare_with_oracle(points: &[Vec<f64>], config: LinkageConfig) -> Result<(), String> {
    let tree = agglomerate(points, config).map_err(|e| e.to_string())?;
    let oracle = naive_agglomerate(points, config.linkage, config.metric);
    let leaves = node_leaves(&tree);
    let n = points.len();
    for (m, o) in tree.merges().iter().zip(&oracle) {
        ensure!(
            (m.height - o.height).abs() <= ORACLE_TOL,
            "step {}: height {} vs oracle {}",
            m.step,
            m.height,
            o.height
        );
        let got = BTreeSet::from([leaves[m.left].clone(), leaves[m.right].clone()]);
        let want = BTreeSet::from([o.a.clone(), o.b.clone()]);
        ensure!(
            got == want,
            "step {}: merged {got:?}, oracle {want:?}",
            m.step
        );
    }
    // Flat partitions at every k.
    let mut oracle_parts: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    let all = cuts(&tree, &(1..=n).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    for k in (1..=n).rev() {
        let mut sorted = oracle_parts.clone();
        sorted.sort();
        ensure!(
            partition_of(&all[k - 1].labels) == sorted,
            "k = {k}: partition differs from oracle"
        );
        if k > 1 {
            let o = &oracle[n - k];
            oracle_parts.retain(|p| p != &o.a && p != &o.b);
            oracle_parts.push(o.a.union(&o.b).copied().collect());
        }
    }
    if config.linkage == Linkage::Ward {
        for m in tree.merges() {
            let before = sse(points, &partition_after(&tree, m.step));
            let after = sse(points, &partition_after(&tree, m.step + 1));
            let delta = after - before;
            ensure!(
                (m.height * m.height - 2.0 * delta).abs() <= ORACLE_TOL,
                "step {}: height^2 {} vs 2 dSSE {}",
                m.step,
                m.height * m.height,
                2.0 * delta
            );
        }
    }
    Ok(())
}

fn clustering_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let configs = [LinkageConfig::WARD, LinkageConfig::AVERAGE_COSINE];
    for i in 0..ORACLE_INSTANCES {
        let n = rng.random_range(2..=ORACLE_MAX_N);
        let d = rng.random_range(1..=ORACLE_MAX_D);
        let points = random_points(&mut rng, n, d);
        for config in configs {
            compare_with_oracle(&points, config)
                .map_err(|e| format!("instance {i} ({config:?}): {e}"))?;
        }
    }
    Ok(format!(
        "{ORACLE_INSTANCES} instances x {{ward/euclidean, average/cosine}}, n <= {ORACLE_MAX_N}, d <= {ORACLE_MAX_D}"
    ))
}

// 7 ---------------------------------------------------------------------------

fn check_nesting(labels_by_k: &[Vec<usize>]) -> Result<(), String> {
    for pair in labels_by_k.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let k = coarse.iter().max().unwrap() + 1;
        // Every fine cluster sits in one coarse cluster.
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        for (&c, &f) in coarse.iter().zip(fine) {
            ensure!(
                *parent.entry(f).or_insert(c) == c,
                "k = {}: not nested",
                k + 1
            );
        }
        // Exactly one coarse cluster splits, into its own label and label k.
        let mut children: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (&f, &c) in &parent {
            children.entry(c).or_default().insert(f);
        }
        let split: Vec<_> = children.iter().filter(|(_, ch)| ch.len() > 1).collect();
        ensure!(
            split.len() == 1,
            "k = {}: {} clusters split",
            k + 1,
            split.len()
        );
        let (&label, ch) = split[0];
        ensure!(
            ch == &BTreeSet::from([label, k]),
            "k = {}: cluster {label} split into {ch:?}",
            k + 1
        );
        for (c, ch) in &children {
            if *c != label {
                ensure!(ch == &BTreeSet::from([*c]), "label {c} was renamed");
            }
        }
    }
    Ok(())
}

fn dendrogram_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let n = rng.random_range(2..=20);
        let points = random_points(&mut rng, n, 3);
        for config in [LinkageConfig::WARD, LinkageConfig::AVERAGE_COSINE] {
            let tree = agglomerate(&points, config).unwrap();
            for w in tree.merges().windows(2) {
                ensure!(
                    w[1].height >= w[0].height,
                    "instance {i}: heights {} then {}",
                    w[0].height,
                    w[1].height
                );
            }
            let all = cuts(&tree, &(1..=n).collect::<Vec<_>>()).unwrap();
            let labels: Vec<Vec<usize>> = all.into_iter().map(|c| c.labels).collect();
            check_nesting(&labels).map_err(|e| format!("instance {i}: {e}"))?;
        }
    }

    // A large tight group (label 0), then a far group that splits twice
    // before the tight group finally splits at the fourth refinement.
    let values = [
        0.0, 0.1, 0.2, 0.3, 1.0, 1.1, 1.2, 1.3, // leaves 0..8
        10.0, 10.1, 20.0, 20.1, 35.0, 35.1, // leaves 8..14
    ];
    let points: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let tree = agglomerate(&points, LinkageConfig::WARD).unwrap();
    let label_rows = |k: usize| cut(&tree, k).unwrap().labels;
    let expect = [
        (2, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]),
        (3, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2]),
        (4, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 3, 3, 2, 2]),
        (5, vec![0, 0, 0, 0, 4, 4, 4, 4, 1, 1, 3, 3, 2, 2]),
    ];
    for (k, want) in expect {
        let got = label_rows(k);
        ensure!(got == want, "k = {k}: labels {got:?}");
    }
    Ok("monotone, nested; at k = 5 cluster 0 forms clusters 0 and 4".into())
}

// 8 ---------------------------------------------------------------------------

const COMPARED: [&str; 5] = [
    "embed/corpus/embeddings.csv",
    "cluster/corpus/merges.csv",
    "cluster/corpus/assignments.csv",
    "report/corpus/shares_k2.csv",
    "report/corpus/regions_k2.geojson",
];

fn run_fixture_pipeline(out: &Path) -> Result<(), String> {
    let config = serde_json::json!({
        "cities": [
            {"city_tag": "northport", "feed_path": fixture("northport"),
             "boundary_path": fixture("northport_boundary.geojson")},
            {"city_tag": "southvale", "feed_path": fixture("southvale")},
        ],
        "output_dir": out,
        "seed": 42,
    });
    let config =
        validate_config_str(&config.to_string(), Path::new("/")).map_err(|e| e.to_string())?;
    run(&config, &RunOptions::default()).map_err(|e| e.to_string())?;
    Ok(())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_fixture_pipeline(&a)?;
    run_fixture_pipeline(&b)?;
    let mut compared = 0;
    for rel in COMPARED
        .iter()
        .map(|s| s.to_string())
        .chain((2..=9).flat_map(|k| {
            [
                format!("report/corpus/shares_k{k}.csv"),
                format!("report/corpus/regions_k{k}.geojson"),
            ]
        }))
    {
        let x = std::fs::read(a.join(&rel)).map_err(|e| format!("{rel}: {e}"))?;
        let y = std::fs::read(b.join(&rel)).map_err(|e| format!("{rel}: {e}"))?;
        ensure!(!x.is_empty() && x == y, "{rel} differs between runs");
        compared += 1;
    }
    Ok(format!(
        "two fixture cities, seed 42, {compared} artifacts bytewise identical"
    ))
}

// 9 ---------------------------------------------------------------------------

fn cosine_scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..SCALE_INSTANCES {
        let n = rng.random_range(3..=15);
        let points = random_points(&mut rng, n, 16);
        let mut scaled = points.clone();
        let target = rng.random_range(0..n);
        let factor = 10f64.powf(rng.random_range(-3.0..3.0));
        scaled[target].iter_mut().for_each(|v| *v *= factor);
        let ks: Vec<usize> = (1..=n).collect();
        let config = LinkageConfig::new(Linkage::Average, Metric::Cosine).unwrap();
        let before = cuts(&agglomerate(&points, config).unwrap(), &ks).unwrap();
        let after = cuts(&agglomerate(&scaled, config).unwrap(), &ks).unwrap();
        for (x, y) in before.iter().zip(&after) {
            ensure!(
                partition_of(&x.labels) == partition_of(&y.labels),
                "instance {i}: k = {} partition changed after scaling vector {target} by {factor}",
                x.k
            );
        }
    }
    Ok(format!(
        "{SCALE_INSTANCES} instances, factors 1e-3..1e3, all k"
    ))
}
