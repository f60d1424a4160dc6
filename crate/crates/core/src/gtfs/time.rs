/// Parses a GTFS `HH:MM:SS` time into seconds past service-day midnight.
///
/// Hours may exceed 23 and may be written with a single digit.
pub fn parse_gtfs_time(raw: &str) -> Result<u32, String> {
    let raw = raw.trim();
    let mut parts = raw.split(':');
    let (Some(h), Some(m), Some(s), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(format!("time `{raw}` is not HH:MM:SS"));
    };
    let field = |v: &str, name: &str| {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("time `{raw}` has a non-numeric {name}"));
        }
        v.parse::<u32>()
            .map_err(|_| format!("time `{raw}` has an out-of-range {name}"))
    };
    let (h, m, s) = (field(h, "hour")?, field(m, "minute")?, field(s, "second")?);
    if m > 59 || s > 59 {
        return Err(format!("time `{raw}` has minutes or seconds above 59"));
    }
    h.checked_mul(3600)
        .and_then(|v| v.checked_add(m * 60 + s))
        .ok_or_else(|| format!("time `{raw}` overflows"))
}

pub fn format_gtfs_time(secs: u32) -> String {
    format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}
