//! Least-squares convergence-rate fits on log-log data.

/// Slope of the least-squares line through `(ln x_i, ln y_i)`.
///
/// `None` with fewer than two points, non-positive entries or all `x` equal.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs = [0.1, 0.01, 0.001, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(loglog_slope(&[1.0], &[1.0]), None);
        assert_eq!(loglog_slope(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(loglog_slope(&[1.0, 2.0], &[0.0, 2.0]), None);
    }
}
