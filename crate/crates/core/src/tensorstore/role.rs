//! Matrix-role classification from parameter names.
//!
//! Names are lowercased and checked against an ordered substring table; the
//! first rule whose pattern occurs anywhere in the name wins. Order matters:
//! fused projections are rejected first, feed-forward names before attention
//! output names, and the generic `output.dense` (Bert's down projection)
//! last. Unmatched names classify as [`RoleKind::Other`].
//!
//! The block index is the leading decimal integer of the path segment that
//! follows a `blocks`, `layers`, `layer` or `h` segment (segments are split on
//! `.` and `/`). `Other` never carries a block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    Query,
    Key,
    Value,
    AttnOutput,
    Up,
    Down,
    Gate,
    Embedding,
    Other,
}

impl RoleKind {
    pub const ALL: [RoleKind; 9] = [
        RoleKind::Query,
        RoleKind::Key,
        RoleKind::Value,
        RoleKind::AttnOutput,
        RoleKind::Up,
        RoleKind::Down,
        RoleKind::Gate,
        RoleKind::Embedding,
        RoleKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleKind::Query => "query",
            RoleKind::Key => "key",
            RoleKind::Value => "value",
            RoleKind::AttnOutput => "attn_output",
            RoleKind::Up => "up",
            RoleKind::Down => "down",
            RoleKind::Gate => "gate",
            RoleKind::Embedding => "embedding",
            RoleKind::Other => "other",
        }
    }
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown matrix kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for RoleKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "query" | "q" => RoleKind::Query,
            "key" | "k" => RoleKind::Key,
            "value" | "v" => RoleKind::Value,
            "attn_output" | "attention_output" | "o" => RoleKind::AttnOutput,
            "up" => RoleKind::Up,
            "down" => RoleKind::Down,
            "gate" => RoleKind::Gate,
            "embedding" => RoleKind::Embedding,
            "other" => RoleKind::Other,
            _ => return Err(UnknownKind(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatrixRole {
    pub kind: RoleKind,
    pub block: Option<usize>,
    /// Training checkpoint index, when known.
    pub step: Option<u64>,
}

impl MatrixRole {
    pub fn new(kind: RoleKind, block: Option<usize>) -> Self {
        Self {
            kind,
            block,
            step: None,
        }
    }

    pub fn with_step(mut self, step: Option<u64>) -> Self {
        self.step = step;
        self
    }
}

impl fmt::Display for MatrixRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(b) = self.block {
            write!(f, "@{b}")?;
        }
        if let Some(s) = self.step {
            write!(f, "#{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRule {
    pub pattern: String,
    pub kind: RoleKind,
}

/// Ordered substring table used by [`classify_role`]; loadable from JSON as
/// `{"rules": [{"pattern": "...", "kind": "query"}, ...], "block_segments": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleTable {
    pub rules: Vec<RoleRule>,
    #[serde(default = "default_block_segments")]
    pub block_segments: Vec<String>,
}

fn default_block_segments() -> Vec<String> {
    ["blocks", "layers", "layer", "h"].iter().map(|s| s.to_string()).collect()
}

impl Default for RoleTable {
    fn default() -> Self {
        use RoleKind::*;
        let table: &[(&str, RoleKind)] = &[
            // fused projections cannot be assigned a single role
            ("query_key_value", Other),
            ("qkv", Other),
            ("gate_proj", Gate),
            ("up_proj", Up),
            ("dense_h_to_4h", Up),
            ("intermediate.dense", Up),
            ("c_fc", Up),
            ("down_proj", Down),
            ("dense_4h_to_h", Down),
            ("mlp.c_proj", Down),
            ("o_proj", AttnOutput),
            ("out_proj", AttnOutput),
            ("attn.out", AttnOutput),
            ("attention.output.dense", AttnOutput),
            ("attention.dense", AttnOutput),
            ("attn.c_proj", AttnOutput),
            ("q_proj", Query),
            ("query", Query),
            ("k_proj", Key),
            ("key", Key),
            ("v_proj", Value),
            ("value", Value),
            ("embed", Embedding),
            ("wte", Embedding),
            ("wpe", Embedding),
            ("output.dense", Down),
        ];
        Self {
            rules: table
                .iter()
                .map(|&(p, k)| RoleRule {
                    pattern: p.to_string(),
                    kind: k,
                })
                .collect(),
            block_segments: default_block_segments(),
        }
    }
}

impl RoleTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut t: Self = serde_json::from_str(text)?;
        for r in &mut t.rules {
            r.pattern = r.pattern.to_ascii_lowercase();
        }
        Ok(t)
    }

    pub fn classify(&self, name: &str) -> MatrixRole {
        let lower = name.to_ascii_lowercase();
        let kind = self
            .rules
            .iter()
            .find(|r| lower.contains(r.pattern.as_str()))
            .map_or(RoleKind::Other, |r| r.kind);
        let block = match kind {
            RoleKind::Other => None,
            _ => self.block_of(&lower),
        };
        MatrixRole::new(kind, block)
    }

    fn block_of(&self, lower: &str) -> Option<usize> {
        let segments: Vec<&str> = lower.split(['.', '/']).collect();
        for pair in segments.windows(2) {
            if self.block_segments.iter().any(|s| s == pair[0]) {
                let digits: String = pair[1].chars().take_while(char::is_ascii_digit).collect();
                if let Ok(b) = digits.parse() {
                    return Some(b);
                }
            }
        }
        None
    }
}

/// Classifies with the default table.
pub fn classify_role(name: &str) -> MatrixRole {
    thread_local! {
        static TABLE: RoleTable = RoleTable::default();
    }
    TABLE.with(|t| t.classify(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_examples() {
        assert_eq!(
            classify_role("blocks.20.attn.q_proj.weight"),
            MatrixRole::new(RoleKind::Query, Some(20))
        );
        assert_eq!(
            classify_role("blocks.2.mlp.down_proj.weight"),
            MatrixRole::new(RoleKind::Down, Some(2))
        );
        assert_eq!(classify_role("lm_head.weight"), MatrixRole::new(RoleKind::Other, None));
    }

    #[test]
    fn common_families() {
        let cases = [
            ("model.layers.7.self_attn.k_proj.weight", RoleKind::Key, Some(7)),
            ("model.layers.7.self_attn.o_proj.weight", RoleKind::AttnOutput, Some(7)),
            ("model.layers.0.mlp.gate_proj.weight", RoleKind::Gate, Some(0)),
            ("model.layers.31.mlp.up_proj.weight", RoleKind::Up, Some(31)),
            ("bert.encoder.layer.3.attention.self.value.weight", RoleKind::Value, Some(3)),
            ("bert.encoder.layer.3.attention.output.dense.weight", RoleKind::AttnOutput, Some(3)),
            ("bert.encoder.layer.3.intermediate.dense.weight", RoleKind::Up, Some(3)),
            ("bert.encoder.layer.3.output.dense.weight", RoleKind::Down, Some(3)),
            ("gpt_neox.layers.5.attention.dense.weight", RoleKind::AttnOutput, Some(5)),
            ("gpt_neox.layers.5.mlp.dense_4h_to_h.weight", RoleKind::Down, Some(5)),
            ("gpt_neox.layers.5.attention.query_key_value.weight", RoleKind::Other, None),
            ("transformer.h.11.attn.c_proj.weight", RoleKind::AttnOutput, Some(11)),
            ("embed.tokens.weight", RoleKind::Embedding, None),
        ];
        for (name, kind, block) in cases {
            assert_eq!(classify_role(name), MatrixRole::new(kind, block), "{name}");
        }
    }

    #[test]
    fn user_table_overrides_default() {
        let t = RoleTable::from_json(r#"{"rules":[{"pattern":"W_Q","kind":"query"}]}"#).unwrap();
        assert_eq!(t.classify("layers.3.w_q").kind, RoleKind::Query);
        assert_eq!(t.classify("layers.3.w_q").block, Some(3));
        assert_eq!(t.classify("layers.3.q_proj").kind, RoleKind::Other);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Query".parse::<RoleKind>().unwrap(), RoleKind::Query);
        assert_eq!("attn-output".parse::<RoleKind>().unwrap(), RoleKind::AttnOutput);
        assert!("nope".parse::<RoleKind>().is_err());
        for k in RoleKind::ALL {
            assert_eq!(k.as_str().parse::<RoleKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn classification_is_total_and_deterministic(name in "\\PC{0,64}") {
            let a = classify_role(&name);
            let b = classify_role(&name);
            prop_assert_eq!(a, b);
            prop_assert!(a.step.is_none());
        }
    }
}
