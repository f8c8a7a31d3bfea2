//! Marchenko–Pastur law for singular values, empirical fits, outlier counts,
//! KS distance and spectrum reports.
//!
//! For a matrix `W ∈ R^{m×n}` oriented so that `m <= n`, with i.i.d. entries
//! of standard deviation `σ`, the singular values concentrate on
//! `[ν−, ν+] = σ̃ (1 ∓ √(m/n))` with `σ̃ = σ √n` and density
//!
//! ```text
//! P(ν) = (n/m) / (π σ̃² ν) · sqrt((ν+² − ν²)(ν² − ν−²))
//! ```

mod fit;
mod quadrature;
mod report;

pub use fit::{count_outliers, finite_size_buffer, fit_sigma, fit_sigma_pooled, ks_distance};
pub use quadrature::adaptive_simpson;
pub use report::{
    spectrum_report, spectrum_report_pooled, Histogram, SpectrumReport, OUTLIER_RULE, SPECTRUM_CSV_SCHEMA,
};

use serde::{Deserialize, Serialize};

use crate::linalg::LinalgError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RmtError {
    #[error("sigma_tilde must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("matrix dimensions must be at least 1, got {0}x{1}")]
    InvalidShape(usize, usize),
    #[error("zero variance: all entries are equal")]
    ZeroVariance,
    #[error("need at least 2 entries to fit a variance, got {0}")]
    TooFewEntries(usize),
    #[error("singular value list is empty")]
    EmptySpectrum,
    #[error("histogram needs at least one bin")]
    InvalidBins,
    #[error("pooled matrices must share a shape: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// CDF quadrature tolerance (absolute).
pub const CDF_TOLERANCE: f64 = 1e-8;

/// Marchenko–Pastur singular-value law for an oriented `m×n` shape (`m <= n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpModel {
    pub sigma_tilde: f64,
    /// `m / n` in `(0, 1]`.
    pub ratio: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub m: usize,
    pub n: usize,
}

pub fn mp_density(nu: f64, mp: &MpModel) -> f64 {
    mp.density(nu)
}

pub fn mp_cdf(nu: f64, mp: &MpModel) -> f64 {
    mp.cdf(nu)
}

pub fn mp_quantile(p: f64, mp: &MpModel) -> f64 {
    mp.quantile(p)
}

/// Bulk edges `σ̃ (1 ∓ √(m/n))`, orienting so the ratio is at most 1.
pub fn mp_bounds(m: usize, n: usize, sigma_tilde: f64) -> Result<(f64, f64), RmtError> {
    let mp = MpModel::new(m, n, sigma_tilde)?;
    Ok((mp.nu_minus, mp.nu_plus))
}

impl MpModel {
    pub fn new(m: usize, n: usize, sigma_tilde: f64) -> Result<Self, RmtError> {
        if m == 0 || n == 0 {
            return Err(RmtError::InvalidShape(m, n));
        }
        if !(sigma_tilde > 0.0) || !sigma_tilde.is_finite() {
            return Err(RmtError::InvalidSigma(sigma_tilde));
        }
        let (m, n) = (m.min(n), m.max(n));
        let ratio = m as f64 / n as f64;
        let root = ratio.sqrt();
        Ok(Self {
            sigma_tilde,
            ratio,
            nu_minus: sigma_tilde * (1.0 - root),
            nu_plus: sigma_tilde * (1.0 + root),
            m,
            n,
        })
    }

    /// Density `P(ν)`; zero outside `[ν−, ν+]`.
    pub fn density(&self, nu: f64) -> f64 {
        if !(nu >= self.nu_minus && nu <= self.nu_plus) {
            return 0.0;
        }
        let s2 = self.sigma_tilde * self.sigma_tilde;
        let pre = 1.0 / (self.ratio * std::f64::consts::PI * s2);
        let upper = self.nu_plus * self.nu_plus - nu * nu;
        if self.nu_minus == 0.0 {
            // sqrt(ν²)/ν cancels, which also covers ν = 0.
            return pre * upper.max(0.0).sqrt();
        }
        if nu == 0.0 {
            return 0.0;
        }
        let lower = nu * nu - self.nu_minus * self.nu_minus;
        pre * (upper * lower).max(0.0).sqrt() / nu
    }

    /// Angle parameterization `ν² = c − R cos θ` of the squared support.
    fn theta_of(&self, nu: f64) -> f64 {
        let a = self.nu_minus * self.nu_minus;
        let b = self.nu_plus * self.nu_plus;
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        ((c - nu * nu) / r).clamp(-1.0, 1.0).acos()
    }

    /// Density in the angle variable; smooth on `[0, π]`, so adaptive
    /// quadrature converges without endpoint singularities.
    fn angle_density(&self, theta: f64) -> f64 {
        let a = self.nu_minus * self.nu_minus;
        let b = self.nu_plus * self.nu_plus;
        let r = 0.5 * (b - a);
        let norm = 2.0 * std::f64::consts::PI * self.ratio * self.sigma_tilde * self.sigma_tilde;
        let (sh, ch) = (0.5 * theta).sin_cos();
        if a == 0.0 {
            // R² sin²θ / (2R sin²(θ/2)) = 2R cos²(θ/2)
            return 2.0 * r * ch * ch / norm;
        }
        let sin_t = theta.sin();
        r * r * sin_t * sin_t / (norm * (a + 2.0 * r * sh * sh))
    }

    /// CDF by adaptive Simpson quadrature (absolute tolerance 1e-8).
    pub fn cdf(&self, nu: f64) -> f64 {
        if nu <= self.nu_minus {
            return 0.0;
        }
        if nu >= self.nu_plus {
            return 1.0;
        }
        let theta = self.theta_of(nu);
        adaptive_simpson(|t| self.angle_density(t), 0.0, theta, CDF_TOLERANCE).clamp(0.0, 1.0)
    }

    /// Inverse CDF by bisection on [`MpModel::cdf`].
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (self.nu_minus, self.nu_plus);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Rescales the law as for `c·W` (`c > 0`).
    pub fn scaled(&self, c: f64) -> Result<Self, RmtError> {
        Self::new(self.m, self.n, self.sigma_tilde * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bounds_examples() {
        assert_eq!(mp_bounds(16, 16, 1.0).unwrap(), (0.0, 2.0));
        let (lo, hi) = mp_bounds(512, 1024, 1.0).unwrap();
        assert!((lo - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((hi - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
        assert!((lo - 0.29289).abs() < 1e-5 && (hi - 1.70711).abs() < 1e-5);
        let (lo, hi) = mp_bounds(1024, 1024, 0.02).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.04).abs() < 1e-15);
        // orientation does not matter
        assert_eq!(mp_bounds(1024, 512, 1.0).unwrap(), mp_bounds(512, 1024, 1.0).unwrap());
        assert!(matches!(mp_bounds(4, 4, 0.0), Err(RmtError::InvalidSigma(_))));
        assert!(matches!(mp_bounds(4, 4, -1.0), Err(RmtError::InvalidSigma(_))));
    }

    #[test]
    fn quarter_circle_density() {
        let mp = MpModel::new(100, 100, 1.0).unwrap();
        let want = 2f64.sqrt() / PI;
        assert!((mp.density(2f64.sqrt()) - want).abs() < 1e-12);
        assert!((want - 0.45016).abs() < 1e-5);
        // P(ν) = sqrt(4 − ν²)/π on a grid
        for i in 0..=20 {
            let nu = 0.1 * i as f64;
            assert!((mp.density(nu) - (4.0 - nu * nu).max(0.0).sqrt() / PI).abs() < 1e-12);
        }
        assert_eq!(mp.density(2.1), 0.0);
    }

    #[test]
    fn density_vanishes_at_rectangular_edges() {
        let mp = MpModel::new(256, 1024, 1.3).unwrap();
        assert_eq!(mp.density(mp.nu_minus), 0.0);
        assert_eq!(mp.density(mp.nu_plus), 0.0);
        assert_eq!(mp.density(mp.nu_plus + 0.1), 0.0);
        assert_eq!(mp.density(mp.nu_minus * 0.5), 0.0);
        assert!(mp.density(0.5 * (mp.nu_minus + mp.nu_plus)) > 0.0);
    }

    #[test]
    fn quarter_circle_cdf_closed_form() {
        // ∫_0^t sqrt(4 − u²) du = t sqrt(4 − t²)/2 + 2 asin(t/2)
        let mp = MpModel::new(64, 64, 1.0).unwrap();
        let closed = |t: f64| (t * (4.0 - t * t).sqrt() / 2.0 + 2.0 * (t / 2.0).asin()) / PI;
        let r2 = 2f64.sqrt();
        assert!((closed(r2) - (1.0 + PI / 2.0) / PI).abs() < 1e-14);
        assert!((mp.cdf(r2) - (1.0 + PI / 2.0) / PI).abs() < 1e-8);
        assert!((mp.cdf(r2) - 0.81831).abs() < 1e-5);
        for i in 1..40 {
            let t = 0.05 * i as f64;
            assert!((mp.cdf(t) - closed(t)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn cdf_endpoints_and_monotonicity() {
        for (m, n) in [(50, 50), (50, 100), (25, 100)] {
            let mp = MpModel::new(m, n, 0.8).unwrap();
            assert_eq!(mp.cdf(mp.nu_minus), 0.0);
            assert_eq!(mp.cdf(mp.nu_plus), 1.0);
            let mut prev = 0.0;
            for i in 0..1000 {
                let nu = mp.nu_minus - 0.1 + (mp.nu_plus - mp.nu_minus + 0.2) * i as f64 / 999.0;
                let c = mp.cdf(nu);
                assert!(c >= prev, "cdf decreased at {nu}: {c} < {prev}");
                prev = c;
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for (m, n) in [(40, 40), (40, 80), (20, 80)] {
            let mp = MpModel::new(m, n, 1.0).unwrap();
            for i in 1..10 {
                let p = i as f64 / 10.0;
                assert!((mp.cdf(mp.quantile(p)) - p).abs() < 1e-6);
            }
        }
    }
}
