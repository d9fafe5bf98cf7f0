use serde::Serialize;

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub error: f64,
    pub stderr: f64,
}

/// Least-squares line through `(log N, log error)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

pub fn fit_rate(points: &[RatePoint]) -> Result<RateFit, HarnessError> {
    if points.len() < 4 {
        return Err(HarnessError::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| p.n == 0 || !(p.error > 0.0) || !p.error.is_finite()) {
        return Err(HarnessError::Fit("step counts and errors must be positive".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all step counts are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(RateFit { points: points.to_vec(), slope, slope_stderr, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<RatePoint> {
        (4..=9).map(|m| 1usize << m).map(|n| RatePoint { n, error: f(n as f64), stderr: 0.0 }).collect()
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_rate(&pts(|n| 3.0 / n)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
        assert!(fit.slope_stderr < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        let fit = fit_rate(&pts(|n| 0.2 / n.sqrt())).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
    }

    #[test]
    fn log_over_n_slope() {
        // Reference slope from numpy.polyfit on the same six points.
        let fit = fit_rate(&pts(|n| n.ln() / n)).unwrap();
        assert!((fit.slope + 0.7683933387461167).abs() < 1e-12, "{}", fit.slope);
        assert!(fit.slope >= -1.0 && fit.slope <= -0.75);
    }

    #[test]
    fn degenerate_inputs() {
        let same: Vec<RatePoint> = (0..5).map(|_| RatePoint { n: 16, error: 0.1, stderr: 0.0 }).collect();
        assert!(fit_rate(&same).is_err());
        assert!(fit_rate(&pts(|n| 1.0 / n)[..3]).is_err());
    }
}
