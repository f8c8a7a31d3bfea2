use serde_json::json;
use svlens_nets::{mlp_eval, next_token_accuracy, perplexity, Transformer};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::EvalArgs;

const EVAL_SCHEMA: &str = "svlens.eval.v1 metric,value,n_items";

pub fn run(ctx: &mut Ctx, args: &EvalArgs) -> Result<()> {
    let map = ctx.checkpoint(&args.checkpoint)?;
    let results = match (&args.tokens, &args.data) {
        (Some(path), _) => {
            let tokens = ctx.tokens(path)?;
            let model = Transformer::from_map(&Transformer::config_from_map(&map)?, &map)?;
            vec![perplexity(&model, &tokens)?, next_token_accuracy(&model, &tokens)?]
        }
        (None, Some(path)) => {
            let data = ctx.labeled(path)?;
            vec![mlp_eval(&map, &data)?]
        }
        (None, None) => return Err(CliError::Usage("eval needs --tokens or --data".into())),
    };
    ctx.record_config(&json!({}))?;
    let mut csv = format!("# schema: {EVAL_SCHEMA}\nmetric,value,n_items\n");
    let mut j = serde_json::Map::new();
    for r in &results {
        let name = r.metric.name();
        csv.push_str(&format!("{name},{:.12e},{}\n", r.value(), r.n_items));
        j.insert(name.to_string(), json!({ "value": r.value(), "n_items": r.n_items }));
    }
    ctx.out.csv("eval.csv", &csv)?;
    ctx.out.json("eval.json", &serde_json::Value::Object(j))?;
    Ok(())
}
