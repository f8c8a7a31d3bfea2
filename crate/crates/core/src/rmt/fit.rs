use super::{MpModel, RmtError};
use crate::linalg::Matrix;

/// Finite-size outlier buffer `2·n^{-2/3}` on the relative edge position.
pub fn finite_size_buffer(n: usize) -> f64 {
    2.0 * (n.max(1) as f64).powf(-2.0 / 3.0)
}

fn population_std<'a>(values: impl Iterator<Item = &'a f64> + Clone, count: usize) -> Result<f64, RmtError> {
    if count < 2 {
        return Err(RmtError::TooFewEntries(count));
    }
    let mut it = values.clone();
    let first = *it.next().unwrap_or(&0.0);
    if it.all(|&x| x == first) {
        return Err(RmtError::ZeroVariance);
    }
    let mean = values.clone().sum::<f64>() / count as f64;
    let var = values.map(|&x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    if !(var > 0.0) {
        return Err(RmtError::ZeroVariance);
    }
    Ok(var.sqrt())
}

/// `σ̃ = σ̂ √n` from the population variance of all entries (mean removed),
/// with `n` the larger dimension.
pub fn fit_sigma(w: &Matrix) -> Result<f64, RmtError> {
    if !w.is_finite() {
        return Err(crate::linalg::LinalgError::NonFinite.into());
    }
    let sd = population_std(w.as_slice().iter(), w.len())?;
    Ok(sd * (w.rows().max(w.cols()) as f64).sqrt())
}

/// [`fit_sigma`] over the pooled entries of same-shaped matrices.
pub fn fit_sigma_pooled(ws: &[Matrix]) -> Result<f64, RmtError> {
    let first = ws.first().ok_or(RmtError::TooFewEntries(0))?;
    for w in ws {
        if w.shape() != first.shape() {
            return Err(RmtError::ShapeMismatch(first.shape(), w.shape()));
        }
        if !w.is_finite() {
            return Err(crate::linalg::LinalgError::NonFinite.into());
        }
    }
    let all = ws.iter().flat_map(|w| w.as_slice().iter());
    let sd = population_std(all, first.len() * ws.len())?;
    Ok(sd * (first.rows().max(first.cols()) as f64).sqrt())
}

/// `(left, right)` counts outside the buffered bulk edges. The left edge is
/// only tested when `ν− > 0`.
pub fn count_outliers(svals: &[f64], mp: &MpModel, buffer: f64) -> (usize, usize) {
    let hi = mp.nu_plus * (1.0 + buffer);
    let right = svals.iter().filter(|&&s| s > hi).count();
    let left = if mp.nu_minus > 0.0 {
        let lo = mp.nu_minus * (1.0 - buffer);
        svals.iter().filter(|&&s| s < lo).count()
    } else {
        0
    };
    (left, right)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `svals` and the
/// law's CDF, evaluated on both sides of every sample.
pub fn ks_distance(svals: &[f64], mp: &MpModel) -> Result<f64, RmtError> {
    if svals.is_empty() {
        return Err(RmtError::EmptySpectrum);
    }
    let mut sorted = svals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = mp.cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    });
    Ok(d.clamp(0.0, 1.0))
}
