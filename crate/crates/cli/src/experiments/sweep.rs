use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use svlens_core::linalg::Matrix;
use svlens_core::surgery::{apply_plan, remove_decile, BlockScope, RemovalMode, SurgeryPlan};
use svlens_core::tensorstore::{RoleKind, RoleTable, TokenStream};
use svlens_nets::data::LabeledData;
use svlens_nets::{perplexity, Mlp, Transformer};

use crate::error::Result;

pub const SWEEP_CSV_SCHEMA: &str = "svlens.decile_sweep.v1 role,decile,metric,value,delta";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Role kind for transformers, layer name for MLPs.
    pub role: String,
    pub decile: usize,
    pub value: f64,
    /// `value − baseline`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// `perplexity` or `accuracy`.
    pub metric: String,
    pub baseline: f64,
    pub roles: Vec<String>,
    pub deciles: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn deltas(&self, role: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.role == role)
            .map(|r| (r.decile, r.delta))
            .collect()
    }

    /// Decile with the largest damage: the largest perplexity increase, or
    /// the largest accuracy decrease. Ties go to the lower decile.
    pub fn worst_decile(&self, role: &str) -> Option<usize> {
        let sign = if self.metric == "accuracy" { -1.0 } else { 1.0 };
        let mut best: Option<(usize, f64)> = None;
        for (d, delta) in self.deltas(role) {
            let v = sign * delta;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((d, v));
            }
        }
        best.map(|(d, _)| d)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {SWEEP_CSV_SCHEMA}\nrole,decile,metric,value,delta\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.12e},{:.12e}\n", r.role, r.decile, self.metric, r.value, r.delta));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let worst: serde_json::Map<String, Value> = self
            .roles
            .iter()
            .map(|r| (r.clone(), json!(self.worst_decile(r))))
            .collect();
        json!({
            "metric": self.metric,
            "baseline": self.baseline,
            "roles": self.roles,
            "deciles": self.deciles,
            "worst_decile": worst,
            "rows": self.rows,
        })
    }
}

/// Perplexity change from zeroing decile `d` in every matrix of one kind,
/// for each `(kind, d)` pair. Pairs are evaluated in parallel; rows keep
/// kind-major, decile-minor order.
pub fn decile_sweep(
    model: &Transformer,
    tokens: &TokenStream,
    kinds: &[RoleKind],
    deciles: &[usize],
    table: &RoleTable,
) -> Result<SweepResult> {
    let map = model.to_map();
    let baseline = perplexity(model, tokens)?.value();
    let pairs: Vec<(RoleKind, usize)> = kinds.iter().flat_map(|&k| deciles.iter().map(move |&d| (k, d))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(kind, d)| -> Result<SweepRow> {
            let plan = SurgeryPlan::new(vec![kind], RemovalMode::Decile(d), BlockScope::All);
            let (pruned, _) = apply_plan(&map, &plan, table)?;
            let m = Transformer::from_map(&model.config, &pruned)?;
            let value = perplexity(&m, tokens)?.value();
            Ok(SweepRow {
                role: kind.to_string(),
                decile: d,
                value,
                delta: value - baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        metric: "perplexity".into(),
        baseline,
        roles: kinds.iter().map(|k| k.to_string()).collect(),
        deciles: deciles.to_vec(),
        rows,
    })
}

/// Accuracy change from zeroing decile `d` of one weight matrix at a time.
pub fn mlp_decile_sweep(model: &Mlp, data: &LabeledData, layers: &[usize], deciles: &[usize]) -> Result<SweepResult> {
    let baseline = model.accuracy(data)?;
    let pairs: Vec<(usize, usize)> = layers.iter().flat_map(|&l| deciles.iter().map(move |&d| (l, d))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(l, d)| -> Result<SweepRow> {
            let mut m = model.clone();
            let w: &Matrix = &model.weights[l];
            m.weights[l] = remove_decile(w, d)?.matrix;
            let value = m.accuracy(data)?;
            Ok(SweepRow {
                role: Mlp::weight_name(l),
                decile: d,
                value,
                delta: value - baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        metric: "accuracy".into(),
        baseline,
        roles: layers.iter().map(|&l| Mlp::weight_name(l)).collect(),
        deciles: deciles.to_vec(),
        rows,
    })
}
