use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{remove_by_mode, SurgeryError};
use crate::tensorstore::{DType, DenseTensor, MatrixRole, RoleKind, RoleTable, TensorMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalMode {
    Decile(usize),
    Mass(f64),
    Ranks(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum BlockScope {
    #[default]
    All,
    List(Vec<usize>),
}

impl BlockScope {
    /// Matrices without a block index only match [`BlockScope::All`].
    pub fn admits(&self, block: Option<usize>) -> bool {
        match self {
            BlockScope::All => true,
            BlockScope::List(l) => block.is_some_and(|b| l.contains(&b)),
        }
    }
}

impl Serialize for BlockScope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BlockScope::All => s.serialize_str("all"),
            BlockScope::List(l) => l.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for BlockScope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<usize>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "all" => Ok(BlockScope::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"all\" or a block list, got {w:?}"))),
            Raw::List(l) => Ok(BlockScope::List(l)),
        }
    }
}

/// `{"kinds": [...], "mode": {"decile": d} | {"mass": f} | {"ranks": [...]}, "blocks": "all" | [...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryPlan {
    pub kinds: Vec<RoleKind>,
    pub mode: RemovalMode,
    #[serde(default)]
    pub blocks: BlockScope,
}

impl SurgeryPlan {
    pub fn new(kinds: Vec<RoleKind>, mode: RemovalMode, blocks: BlockScope) -> Self {
        Self { kinds, mode, blocks }
    }

    pub fn from_json(text: &str) -> Result<Self, SurgeryError> {
        let p: Self = serde_json::from_str(text).map_err(|e| SurgeryError::InvalidPlan(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<(), SurgeryError> {
        if self.kinds.is_empty() {
            return Err(SurgeryError::InvalidPlan("no kinds".into()));
        }
        match self.mode {
            RemovalMode::Decile(d) if !(1..=10).contains(&d) => Err(SurgeryError::InvalidDecile(d)),
            RemovalMode::Mass(f) if !(0.0..=1.0).contains(&f) => Err(SurgeryError::InvalidFraction(f)),
            _ => Ok(()),
        }
    }

    pub fn targets(&self, role: &MatrixRole) -> bool {
        self.kinds.contains(&role.kind) && self.blocks.admits(role.block)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSurgery {
    pub name: String,
    pub role: MatrixRole,
    pub removed_ranks: Vec<usize>,
    /// `Σ ν_r²` over removed ranks.
    pub energy_removed: f64,
    pub mass_removed: f64,
    pub total_mass: f64,
    pub total_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurgeryReport {
    pub plan: SurgeryPlan,
    pub tensors: Vec<TensorSurgery>,
}

impl SurgeryReport {
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "plan": self.plan, "tensors": self.tensors });
        if matches!(self.plan.mode, RemovalMode::Mass(_)) {
            v["mass_order"] = json!("smallest-first");
        }
        v
    }
}

/// Applies `plan` to every targeted rank-2 tensor. Other tensors are copied
/// untouched; dtypes are kept. Applied plans accumulate in the
/// `surgery.plans` metadata entry.
pub fn apply_plan(map: &TensorMap, plan: &SurgeryPlan, table: &RoleTable) -> Result<(TensorMap, SurgeryReport), SurgeryError> {
    plan.validate()?;
    let targets: Vec<(String, MatrixRole)> = map
        .matrices_with_roles(table)
        .filter(|(_, _, r)| plan.targets(r))
        .map(|(n, _, r)| (n.to_string(), r))
        .collect();
    if targets.is_empty() {
        return Err(SurgeryError::NoMatch(plan.to_json()));
    }
    let mut out = map.clone();
    let mut tensors = Vec::with_capacity(targets.len());
    for (name, role) in targets {
        let t = map.get(&name).expect("listed above");
        let dtype: DType = t.dtype();
        let w = t.to_matrix().expect("rank-2");
        let r = remove_by_mode(&w, &plan.mode)?;
        tensors.push(TensorSurgery {
            name: name.clone(),
            role,
            energy_removed: r.energy(),
            mass_removed: r.mass(),
            total_mass: r.total_mass(),
            total_energy: r.svals.iter().map(|s| s * s).sum(),
            removed_ranks: r.removed.clone(),
        });
        if !r.removed.is_empty() {
            out.replace(name, DenseTensor::from_matrix(&r.matrix, dtype));
        }
    }
    let mut history: Vec<Value> = out
        .metadata_value("surgery.plans")
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default();
    history.push(serde_json::to_value(plan).expect("plan serializes"));
    out.set_metadata("surgery.plans", Value::Array(history).to_string());
    if matches!(plan.mode, RemovalMode::Mass(_)) {
        out.set_metadata("surgery.mass_order", "smallest-first");
    }
    Ok((
        out,
        SurgeryReport {
            plan: plan.clone(),
            tensors,
        },
    ))
}
