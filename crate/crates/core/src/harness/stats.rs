use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::streams;

/// Draws `total` rows of `width` numbers in fixed-size chunks, each chunk on
/// its own stream `base + c`, and concatenates them in chunk order.
pub(crate) fn par_rows<F>(seed: u64, base: u64, total: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>) + Sync,
{
    let parts: Vec<Vec<f64>> = streams::chunks(total)
        .into_par_iter()
        .enumerate()
        .map(|(c, (_, len))| {
            let mut rng = streams::stream(seed, base + c as u64);
            let mut out = Vec::with_capacity(len * width);
            for _ in 0..len {
                f(&mut rng, &mut out);
            }
            debug_assert_eq!(out.len(), len * width);
            out
        })
        .collect();
    parts.concat()
}

pub(crate) fn column(rows: &[f64], width: usize, j: usize) -> Vec<f64> {
    rows.chunks_exact(width).map(|r| r[j]).collect()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean and its standard error.
pub(crate) fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Covariance estimate and the standard error of the mean of centred products.
pub(crate) fn cov_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (c, se) = mean_se(&prods);
    let n = x.len() as f64;
    (c * n / (n - 1.0), se)
}

pub(crate) fn var_se(x: &[f64]) -> (f64, f64) {
    cov_se(x, x)
}

/// Fourth cumulant `m₄ − 3m₂²` of centred data.
pub(crate) fn fourth_cumulant(x: &[f64]) -> f64 {
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    m4 - 3.0 * m2 * m2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_samples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&x);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let (v, _) = var_se(&x);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        let (c, _) = cov_se(&x, &[2.0, 4.0, 6.0, 8.0]);
        assert!((c - 10.0 / 3.0).abs() < 1e-15);
        // m₂ = 1.25, m₄ = 2.5625 for 1..4.
        assert!((fourth_cumulant(&x) - (2.5625 - 3.0 * 1.5625)).abs() < 1e-15);
    }

    #[test]
    fn rows_do_not_depend_on_thread_count() {
        let draw = |r: &mut ChaCha8Rng, out: &mut Vec<f64>| {
            use rand::Rng;
            out.push(r.random::<f64>());
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| par_rows(9, 0, 10_000, 1, draw));
        let b = three.install(|| par_rows(9, 0, 10_000, 1, draw));
        assert_eq!(a, b);
    }
}
