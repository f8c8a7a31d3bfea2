use serde::Serialize;
use serde_json::{json, Value};

use super::{CovAccumulator, CovError};
use crate::linalg::{eigh, svd, Matrix};
use crate::tensorstore::{ActivationBatch, MatrixRole, RoleTable, TensorMap};

/// Overlaps above this value are flagged in output; presentation only.
pub const OVERLAP_FLAG: f64 = 0.5;

const WARN_DEFECT: f64 = 1e-8;
const MAX_DEFECT: f64 = 1e-3;

pub const OVERLAP_CSV_SCHEMA: &str = "svlens.overlap.v1 k,sval,O_k,argmax_j";
pub const TIMELINE_CSV_SCHEMA: &str = "svlens.overlap-timeline.v1 step,k,sval,O_k,argmax_j";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapProfile {
    /// `O_k` for each right singular vector, in descending singular value order.
    pub overlaps: Vec<f64>,
    /// 0-based index of the best matching eigenvector (descending eigenvalue).
    pub argmax: Vec<usize>,
    /// Singular values paired with `overlaps`, when known.
    pub svals: Option<Vec<f64>>,
}

fn check_basis(m: &Matrix, which: &'static str) -> Result<(), CovError> {
    let defect = m.orthonormality_defect();
    if !(defect <= MAX_DEFECT) {
        return Err(CovError::NotOrthonormal { which, defect });
    }
    if defect > WARN_DEFECT {
        log::warn!("{which} vectors deviate from orthonormality by {defect:e}");
    }
    Ok(())
}

/// `O_k = max_j |v_k · f_j|` over the columns of `v` and `f`. Ties go to the
/// smaller `j`.
pub fn overlap_profile(v: &Matrix, f: &Matrix) -> Result<OverlapProfile, CovError> {
    if v.rows() != f.rows() {
        return Err(CovError::DimensionMismatch {
            expected: v.rows(),
            found: f.rows(),
        });
    }
    check_basis(v, "singular")?;
    check_basis(f, "eigen")?;
    let g = v.matmul_tn(f);
    let mut overlaps = Vec::with_capacity(g.rows());
    let mut argmax = Vec::with_capacity(g.rows());
    for k in 0..g.rows() {
        let (mut best, mut at) = (f64::NEG_INFINITY, 0);
        for (j, x) in g.row(k).iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                at = j;
            }
        }
        overlaps.push(best);
        argmax.push(at);
    }
    Ok(OverlapProfile {
        overlaps,
        argmax,
        svals: None,
    })
}

impl OverlapProfile {
    pub fn len(&self) -> usize {
        self.overlaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overlaps.is_empty()
    }

    pub fn max_overlap(&self) -> f64 {
        self.overlaps.iter().cloned().fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> Vec<bool> {
        self.overlaps.iter().map(|&o| o > OVERLAP_FLAG).collect()
    }

    fn rows(&self, prefix: &str, out: &mut String) {
        for (k, (&o, &j)) in self.overlaps.iter().zip(&self.argmax).enumerate() {
            let s = self.svals.as_ref().map_or(String::new(), |s| format!("{:e}", s[k]));
            out.push_str(&format!("{prefix}{},{s},{o:.12},{}\n", k + 1, j + 1));
        }
    }

    /// `k,sval,O_k,argmax_j` rows with 1-based ranks and indices.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {OVERLAP_CSV_SCHEMA}\nk,sval,O_k,argmax_j\n");
        self.rows("", &mut out);
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "overlaps": self.overlaps,
            "argmax_j": self.argmax.iter().map(|j| j + 1).collect::<Vec<_>>(),
            "svals": self.svals,
            "flag_threshold": OVERLAP_FLAG,
            "flagged": self.flagged(),
        })
    }
}

/// Right singular vectors of `w` (`[out, in]`) against the eigenvectors of
/// the covariance of `inputs` (`[samples, in]` batches).
pub fn overlap_for_matrix(w: &Matrix, inputs: &[ActivationBatch]) -> Result<OverlapProfile, CovError> {
    let mut acc = CovAccumulator::new(w.cols());
    for b in inputs {
        acc.update(b)?;
    }
    let cov = acc.finalize()?;
    let eig = eigh(&cov)?;
    let d = svd(w)?;
    let k = w.rows().min(w.cols());
    let mut p = overlap_profile(&d.v.leading_columns(k), &eig.eigenvectors)?;
    p.svals = Some(d.s[..k].to_vec());
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelinePoint {
    pub step: u64,
    pub tensor: String,
    pub profile: OverlapProfile,
}

/// Batches recorded for `tensor`, keyed by its name without the `.weight`
/// suffix (or by the full name).
pub fn activations_for<'a>(dump: &'a [ActivationBatch], tensor: &str) -> Vec<&'a ActivationBatch> {
    let stem = tensor.strip_suffix(".weight").unwrap_or(tensor);
    let hit: Vec<_> = dump.iter().filter(|b| b.layer_id == stem).collect();
    if !hit.is_empty() {
        return hit;
    }
    dump.iter().filter(|b| b.layer_id == tensor).collect()
}

/// One profile per checkpoint for the first matrix matching `role` (kind and
/// block), ordered by the `step` metadata (checkpoint position when absent).
/// `dumps[i]` holds the inputs to that matrix at checkpoint `i`, keyed by the
/// tensor name without its `.weight` suffix.
pub fn overlap_timeline(
    checkpoints: &[TensorMap],
    role: MatrixRole,
    dumps: &[Vec<ActivationBatch>],
    table: &RoleTable,
) -> Result<Vec<TimelinePoint>, CovError> {
    if checkpoints.len() != dumps.len() {
        return Err(CovError::CountMismatch {
            checkpoints: checkpoints.len(),
            dumps: dumps.len(),
        });
    }
    let mut out = Vec::with_capacity(checkpoints.len());
    for (i, (ckpt, dump)) in checkpoints.iter().zip(dumps).enumerate() {
        let (name, tensor, _) = ckpt
            .matrices_with_roles(table)
            .find(|(_, _, r)| r.kind == role.kind && r.block == role.block)
            .ok_or_else(|| CovError::MissingMatrix(role.to_string(), i))?;
        let w = tensor.to_matrix().expect("rank-2 tensor");
        let batches: Vec<ActivationBatch> = activations_for(dump, name).into_iter().cloned().collect();
        if batches.is_empty() {
            return Err(CovError::MissingActivations {
                layer: name.to_string(),
                index: i,
            });
        }
        out.push(TimelinePoint {
            step: ckpt.step().unwrap_or(i as u64),
            tensor: name.to_string(),
            profile: overlap_for_matrix(&w, &batches)?,
        });
    }
    out.sort_by_key(|p| p.step);
    Ok(out)
}

pub fn timeline_csv(points: &[TimelinePoint]) -> String {
    let mut out = format!("# schema: {TIMELINE_CSV_SCHEMA}\nstep,k,sval,O_k,argmax_j\n");
    for p in points {
        p.profile.rows(&format!("{},", p.step), &mut out);
    }
    out
}
