use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{count_outliers, finite_size_buffer, fit_sigma, fit_sigma_pooled, ks_distance, MpModel, RmtError};
use crate::linalg::{singular_values, Matrix};
use crate::tensorstore::MatrixRole;

/// Label carried by every report so the outlier criterion is explicit.
pub const OUTLIER_RULE: &str = "buffered 2*n^(-2/3): right if nu > nu_plus*(1+b), left if nu < nu_minus*(1-b) and nu_minus > 0";

pub const SPECTRUM_CSV_SCHEMA: &str = "svlens.spectrum.v1 index,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` uniform edges starting at 0.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Uniform bins over `[0, hi]`; values at or past `hi` land in the last bin.
    pub fn uniform(values: &[f64], hi: f64, bins: usize) -> Result<Self, RmtError> {
        if bins == 0 {
            return Err(RmtError::InvalidBins);
        }
        let hi = if hi > 0.0 { hi } else { 1.0 };
        let width = hi / bins as f64;
        let edges = (0..=bins).map(|i| width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub role: MatrixRole,
    /// Descending.
    pub svals: Vec<f64>,
    pub mp: MpModel,
    pub buffer: f64,
    pub left_outliers: usize,
    pub right_outliers: usize,
    pub ks: f64,
    pub histogram: Histogram,
    /// Number of matrices whose singular values were pooled (1 for a single matrix).
    pub pooled: usize,
}

fn assemble(role: MatrixRole, mut svals: Vec<f64>, mp: MpModel, bins: usize, pooled: usize) -> Result<SpectrumReport, RmtError> {
    if bins == 0 {
        return Err(RmtError::InvalidBins);
    }
    svals.sort_by(|a, b| b.total_cmp(a));
    let buffer = finite_size_buffer(mp.n);
    let (left_outliers, right_outliers) = count_outliers(&svals, &mp, buffer);
    let ks = ks_distance(&svals, &mp)?;
    let top = svals.first().copied().unwrap_or(0.0);
    let histogram = Histogram::uniform(&svals, mp.nu_plus.max(top) * 1.05, bins)?;
    Ok(SpectrumReport {
        role,
        svals,
        mp,
        buffer,
        left_outliers,
        right_outliers,
        ks,
        histogram,
        pooled,
    })
}

/// Singular values, fitted law, buffered outlier counts, KS distance and
/// histogram for one matrix.
pub fn spectrum_report(w: &Matrix, role: MatrixRole, bins: usize) -> Result<SpectrumReport, RmtError> {
    if bins == 0 {
        return Err(RmtError::InvalidBins);
    }
    let sigma = fit_sigma(w)?;
    let mp = MpModel::new(w.rows(), w.cols(), sigma)?;
    let svals = singular_values(w)?;
    assemble(role, svals, mp, bins, 1)
}

/// One report over the pooled singular values of same-shaped matrices, with
/// the law fitted to their pooled entries.
pub fn spectrum_report_pooled(ws: &[Matrix], role: MatrixRole, bins: usize) -> Result<SpectrumReport, RmtError> {
    if bins == 0 {
        return Err(RmtError::InvalidBins);
    }
    let sigma = fit_sigma_pooled(ws)?;
    let (m, n) = ws[0].shape();
    let mp = MpModel::new(m, n, sigma)?;
    let mut svals = Vec::with_capacity(ws.len() * m.min(n));
    for w in ws {
        svals.extend(singular_values(w)?);
    }
    assemble(role, svals, mp, bins, ws.len())
}

impl SpectrumReport {
    pub fn max_sval(&self) -> f64 {
        self.svals.first().copied().unwrap_or(0.0)
    }

    pub fn to_json(&self, include_svals: bool) -> Value {
        let mut v = json!({
            "role": self.role,
            "m": self.mp.m,
            "n": self.mp.n,
            "sigma_tilde": self.mp.sigma_tilde,
            "ratio": self.mp.ratio,
            "nu_minus": self.mp.nu_minus,
            "nu_plus": self.mp.nu_plus,
            "ks": self.ks,
            "left_outliers": self.left_outliers,
            "right_outliers": self.right_outliers,
            "outlier_buffer": self.buffer,
            "outlier_rule": OUTLIER_RULE,
            "pooled_matrices": self.pooled,
            "histogram": self.histogram,
        });
        if include_svals {
            v["svals"] = json!(self.svals);
        }
        v
    }

    /// `index,value` rows after a schema comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {SPECTRUM_CSV_SCHEMA}\nindex,value\n");
        for (i, s) in self.svals.iter().enumerate() {
            out.push_str(&format!("{i},{s:e}\n"));
        }
        out
    }
}
