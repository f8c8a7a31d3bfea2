use serde_json::json;
use svlens_core::linalg::gaussian_matrix;
use svlens_core::tensorstore::{encode_tokens, DType, DenseTensor, TensorMap};
use svlens_nets::data::ClusterSpec;
use svlens_nets::language::SyntheticLanguage;
use svlens_nets::transformer::dump_activations_to_map;
use svlens_nets::{Selector, Transformer, TransformerConfig};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::{ClustersArgs, DumpArgs, GaussianArgs, LanguageArgs, Task};

fn seed(ctx: &mut Ctx, name: &str) -> u64 {
    let s = ctx.cli.seed.unwrap_or(0);
    ctx.log.seed(name, s);
    s
}

pub fn clusters(ctx: &mut Ctx, args: &ClustersArgs) -> Result<()> {
    let spec = ClusterSpec {
        classes: args.classes,
        dim: args.dim,
        separation: args.separation,
        noise: args.noise,
        means_seed: args.means_seed,
    };
    let s = seed(ctx, "sample");
    ctx.log.seed("means", spec.means_seed);
    ctx.record_config(&json!({ "clusters": spec, "n": args.n }))?;
    let data = spec.sample(args.n, s)?;
    ctx.out.checkpoint("data.safetensors", &data.to_map())?;
    ctx.out.json("summary.json", &json!({ "n": data.len(), "dim": data.dim(), "classes": data.num_classes() }))?;
    Ok(())
}

pub fn language(ctx: &mut Ctx, args: &LanguageArgs) -> Result<()> {
    let lang = match args.task {
        Task::A => SyntheticLanguage::task_a(args.vocab),
        Task::B => SyntheticLanguage::task_b(args.vocab),
    };
    let s = seed(ctx, "tokens");
    let task = match args.task {
        Task::A => "a",
        Task::B => "b",
    };
    ctx.record_config(&json!({ "task": task, "len": args.len, "vocab": args.vocab }))?;
    let stream = lang.generate(args.len, s)?;
    ctx.out.data("tokens.bin", &encode_tokens(&stream))?;
    ctx.out.json(
        "summary.json",
        &json!({ "len": stream.len(), "vocab": stream.vocab_size(), "determined_fraction": lang.determined_fraction() }),
    )?;
    Ok(())
}

pub fn gaussian(ctx: &mut Ctx, args: &GaussianArgs) -> Result<()> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let sigma = args.sigma.unwrap_or(1.0 / (args.rows.max(args.cols) as f64).sqrt());
    let s = seed(ctx, "matrices");
    ctx.record_config(&json!({ "rows": args.rows, "cols": args.cols, "sigma": sigma, "count": args.count }))?;
    let mut map = TensorMap::new();
    for i in 0..args.count {
        let w = gaussian_matrix(args.rows, args.cols, sigma, s.wrapping_add(i as u64))?;
        map.insert(format!("gaussian.{i}.weight"), DenseTensor::from_matrix(&w, DType::F64))?;
    }
    ctx.out.checkpoint("gaussian.safetensors", &map)?;
    Ok(())
}

pub fn lm_init(ctx: &mut Ctx) -> Result<()> {
    let mut cfg: TransformerConfig = ctx.config()?;
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    ctx.log.seed("model", cfg.seed);
    ctx.record_config(&cfg)?;
    let model = Transformer::init(&cfg)?;
    ctx.out.checkpoint("model.safetensors", &model.to_map())?;
    Ok(())
}

pub fn dump(ctx: &mut Ctx, args: &DumpArgs) -> Result<()> {
    let map = ctx.checkpoint(&args.checkpoint)?;
    let tokens = ctx.tokens(&args.tokens)?;
    let model = Transformer::from_map(&Transformer::config_from_map(&map)?, &map)?;
    let selector = Selector::parse(&args.layers)?;
    ctx.record_config(&json!({ "layers": args.layers }))?;
    let dumps = dump_activations_to_map(&model, &tokens, &selector)?;
    ctx.out.checkpoint("activations.safetensors", &dumps)?;
    Ok(())
}
