use serde::{Deserialize, Serialize};
use serde_json::json;
use svlens_core::tensorstore::RoleKind;
use svlens_nets::{Mlp, Transformer};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::experiments::{
    decile_sweep as run_decile_sweep, finetune_order as run_finetune_order, lazy_experiment, mlp_decile_sweep, pretrain, present_kinds, score,
    FinetuneConfig, LazyConfig, PretrainConfig, SweepResult,
};
use crate::svg::{grid_svg, lines_svg, Panel, Series};
use crate::{FinetuneArgs, SweepArgs};

/// Config shared by the ablations; each reads its own sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub lazy: LazyConfig,
}

fn load(ctx: &mut Ctx) -> Result<AblateConfig> {
    let mut cfg: AblateConfig = ctx.config()?;
    if let Some(s) = ctx.cli.seed {
        cfg.pretrain.reseed(s);
        cfg.finetune.reseed(s);
        cfg.lazy.reseed(s);
    }
    Ok(cfg)
}

/// The `--checkpoint` transformer, or a freshly pretrained one (saved as
/// `model.safetensors`).
fn pretrained(ctx: &mut Ctx, checkpoint: Option<&std::path::Path>, cfg: &mut PretrainConfig) -> Result<Transformer> {
    match checkpoint {
        Some(path) => {
            let map = ctx.checkpoint(path)?;
            let model_cfg = Transformer::config_from_map(&map)?;
            let model = Transformer::from_map(&model_cfg, &map)?;
            cfg.model = model_cfg;
            Ok(model)
        }
        None => {
            ctx.log.seed("pretrain.model", cfg.model.seed);
            ctx.log.seed("pretrain.train", cfg.train.seed);
            ctx.log.seed("pretrain.data", cfg.data_seed);
            let run = pretrain(cfg).map_err(|e| e.in_step("pretrain"))?;
            ctx.out.checkpoint("model.safetensors", &run.model.to_map())?;
            Ok(run.model)
        }
    }
}

fn deciles_or_all(d: &[usize]) -> Result<Vec<usize>> {
    if let Some(bad) = d.iter().find(|d| !(1..=10).contains(*d)) {
        return Err(CliError::Usage(format!("decile {bad} is not in 1..=10")));
    }
    Ok(if d.is_empty() { (1..=10).collect() } else { d.to_vec() })
}

fn sweep_svg(result: &SweepResult) -> String {
    let categories: Vec<String> = result.deciles.iter().map(|d| d.to_string()).collect();
    let panels: Vec<Panel> = result
        .roles
        .iter()
        .map(|r| Panel {
            label: r.clone(),
            values: result.deltas(r).into_iter().map(|(_, v)| v).collect(),
        })
        .collect();
    grid_svg(
        &format!("Change in {} from zeroing each decile", result.metric),
        &categories,
        &format!("delta {}", result.metric),
        &panels,
    )
}

pub fn decile_sweep(ctx: &mut Ctx, args: &SweepArgs) -> Result<()> {
    let mut cfg = load(ctx)?;
    let deciles = deciles_or_all(&args.deciles)?;
    let mlp_checkpoint = match &args.checkpoint {
        Some(path) if args.data.is_some() => Some(path.clone()),
        _ => None,
    };
    let result = if let Some(path) = mlp_checkpoint {
        if !args.kinds.is_empty() {
            return Err(CliError::Usage("--kind applies to transformer checkpoints only".into()));
        }
        let map = ctx.checkpoint(&path)?;
        let model = Mlp::from_map(&map)?;
        let data = ctx.labeled(args.data.as_ref().expect("checked"))?;
        ctx.record_config(&json!({ "deciles": deciles }))?;
        let layers: Vec<usize> = (0..model.num_layers()).collect();
        mlp_decile_sweep(&model, &data, &layers, &deciles)?
    } else {
        if args.data.is_some() {
            return Err(CliError::Usage("--data needs an MLP --checkpoint".into()));
        }
        let model = pretrained(ctx, args.checkpoint.as_deref(), &mut cfg.pretrain)?;
        let tokens = match &args.tokens {
            Some(p) => ctx.tokens(p)?,
            None => cfg.pretrain.test_stream()?,
        };
        let kinds: Vec<RoleKind> = if args.kinds.is_empty() {
            present_kinds(&model.to_map(), &ctx.table)
        } else {
            args.kinds.clone()
        };
        ctx.record_config(&json!({ "pretrain": cfg.pretrain, "kinds": kinds, "deciles": deciles }))?;
        let result = run_decile_sweep(&model, &tokens, &kinds, &deciles, &ctx.table)?;
        let s = score(&model, &tokens)?;
        ctx.out.json("model_score.json", &json!(s))?;
        result
    };
    ctx.out.csv("decile_sweep.csv", &result.to_csv())?;
    ctx.out.json("decile_sweep.json", &result.to_json())?;
    ctx.out.svg("decile_sweep.svg", &sweep_svg(&result))?;
    Ok(())
}

pub fn finetune_order(ctx: &mut Ctx, args: &FinetuneArgs) -> Result<()> {
    let mut cfg = load(ctx)?;
    if !args.deciles.is_empty() {
        cfg.finetune.deciles = deciles_or_all(&args.deciles)?;
    }
    let model = pretrained(ctx, args.checkpoint.as_deref(), &mut cfg.pretrain)?;
    ctx.log.seed("finetune.train", cfg.finetune.train.seed);
    ctx.log.seed("finetune.data", cfg.finetune.data_seed);
    ctx.record_config(&json!({ "pretrain": cfg.pretrain, "finetune": cfg.finetune }))?;
    let result = run_finetune_order(&model, &cfg.finetune, &ctx.table)?;
    ctx.out.csv("finetune_order.csv", &result.to_csv())?;
    ctx.out.json("finetune_order.json", &result.to_json())?;
    let pick = |f: fn(&crate::experiments::OrderRow) -> f64| -> Vec<(f64, f64)> {
        result.rows.iter().map(|r| (r.decile as f64, f(r))).collect()
    };
    let deciles: Vec<f64> = result.rows.iter().map(|r| r.decile as f64).collect();
    let series = vec![
        Series {
            label: "remove then finetune".into(),
            points: pick(|r| r.remove_then_finetune.perplexity),
        },
        Series {
            label: "finetune then remove".into(),
            points: pick(|r| r.finetune_then_remove.perplexity),
        },
        Series {
            label: "finetuned, no removal".into(),
            points: deciles.iter().map(|&d| (d, result.finetuned.perplexity)).collect(),
        },
    ];
    ctx.out.svg(
        "finetune_order.svg",
        &lines_svg("Task-B perplexity by removal order", "decile removed", "perplexity", &series),
    )?;
    Ok(())
}

pub fn lazy(ctx: &mut Ctx) -> Result<()> {
    let cfg = load(ctx)?.lazy;
    ctx.log.seed("lazy.mlp", cfg.mlp.seed);
    ctx.log.seed("lazy.means", cfg.data.means_seed);
    ctx.log.seed("lazy.data", cfg.data_seed);
    ctx.record_config(&cfg)?;
    let result = lazy_experiment(&cfg)?;
    ctx.out.csv("lazy.csv", &result.to_csv())?;
    ctx.out.json("lazy.json", &result.to_json())?;
    let series: Vec<Series> = result
        .curves
        .iter()
        .map(|c| Series {
            label: format!("alpha = {}", c.alpha),
            points: c.points.iter().map(|&(f, a)| (f, a / c.accuracy)).collect(),
        })
        .collect();
    ctx.out.svg(
        "lazy.svg",
        &lines_svg("Accuracy after removing the smallest singular values", "fraction removed", "normalized accuracy", &series),
    )?;
    Ok(())
}
