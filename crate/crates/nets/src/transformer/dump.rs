use std::path::Path;

use svlens_core::linalg::Matrix;
use svlens_core::tensorstore::{
    activations_to_map, classify_role, write_checkpoint, ActivationBatch, RoleKind, TensorMap, TokenStream,
};

use super::forward::{BlockCache, Cache};
use super::Transformer;
use crate::{NetsError, Result};

/// Which weight matrices to record inputs for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    All,
    Kinds(Vec<RoleKind>),
    Names(Vec<String>),
}

impl Selector {
    /// `all`, a comma list of role kinds (`query,value`), or a comma list of
    /// weight tensor names.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(NetsError::InvalidSelector(text.into()));
        }
        if text == "all" {
            return Ok(Selector::All);
        }
        let items: Vec<&str> = text.split(',').map(str::trim).collect();
        if let Ok(kinds) = items.iter().map(|s| s.parse::<RoleKind>()).collect::<std::result::Result<Vec<_>, _>>() {
            return Ok(Selector::Kinds(kinds));
        }
        Ok(Selector::Names(items.iter().map(|s| s.to_string()).collect()))
    }
}

/// Weight matrices that consume a recorded activation, with their input.
fn inputs<'a>(model: &Transformer, cache: &'a Cache) -> Vec<(String, &'a Matrix)> {
    let mut out = Vec::new();
    for (i, bc) in cache.blocks.iter().enumerate() {
        let bc: &BlockCache = bc;
        let p = format!("blocks.{i}");
        for proj in ["q_proj", "k_proj", "v_proj"] {
            out.push((format!("{p}.attn.{proj}.weight"), &bc.h1));
        }
        out.push((format!("{p}.attn.o_proj.weight"), &bc.attn));
        out.push((format!("{p}.mlp.up_proj.weight"), &bc.h2));
        if model.blocks[i].w_gate.is_some() {
            out.push((format!("{p}.mlp.gate_proj.weight"), &bc.h2));
        }
        out.push((format!("{p}.mlp.down_proj.weight"), &bc.m));
    }
    out.push(("lm_head.weight".into(), &cache.hf));
    out
}

fn selected(model: &Transformer, selector: &Selector) -> Result<Vec<String>> {
    let (_, cache) = model.forward_cached(&[0])?;
    let all: Vec<String> = inputs(model, &cache).into_iter().map(|(n, _)| n).collect();
    let picked: Vec<String> = match selector {
        Selector::All => all,
        Selector::Kinds(kinds) => all.into_iter().filter(|n| kinds.contains(&classify_role(n).kind)).collect(),
        Selector::Names(names) => {
            if let Some(bad) = names.iter().find(|n| !all.contains(n)) {
                return Err(NetsError::InvalidSelector(bad.clone()));
            }
            all.into_iter().filter(|n| names.contains(n)).collect()
        }
    };
    if picked.is_empty() {
        return Err(NetsError::InvalidSelector(format!("{selector:?} matches no weight matrix")));
    }
    Ok(picked)
}

/// Inputs to each selected weight matrix (after layer norm, before the
/// multiplication) over consecutive non-overlapping windows of `context`
/// tokens. Layer ids are tensor names without `.weight`; batch index is the
/// window index.
pub fn dump_activations_to_map(model: &Transformer, tokens: &TokenStream, selector: &Selector) -> Result<TensorMap> {
    let names = selected(model, selector)?;
    let ids = tokens.tokens();
    if ids.is_empty() {
        return Err(NetsError::Empty("token stream".into()));
    }
    let mut batches = Vec::new();
    for (w, chunk) in ids.chunks(model.config.context).enumerate() {
        let (_, cache) = model.forward_cached(chunk)?;
        for (name, x) in inputs(model, &cache) {
            if names.contains(&name) {
                batches.push(ActivationBatch {
                    layer_id: name.trim_end_matches(".weight").to_string(),
                    batch_index: w,
                    values: x.clone(),
                });
            }
        }
    }
    Ok(activations_to_map(&batches)?)
}

pub fn dump_activations(model: &Transformer, tokens: &TokenStream, selector: &Selector, path: impl AsRef<Path>) -> Result<()> {
    Ok(write_checkpoint(&dump_activations_to_map(model, tokens, selector)?, path)?)
}
