use super::ClusterError;

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), ClusterError> {
    if x.len() == y.len() {
        Ok(())
    } else {
        Err(ClusterError::LengthMismatch(x.len(), y.len()))
    }
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64, ClusterError> {
    check_lengths(x, y)?;
    Ok(squared_euclidean(x, y).sqrt())
}

pub(crate) fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `1 - cos(x, y)`, in `[0, 2]`.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64, ClusterError> {
    check_lengths(x, y)?;
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 || ny == 0.0 {
        return Err(ClusterError::ZeroVector);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot / (nx * ny)).clamp(0.0, 2.0))
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
