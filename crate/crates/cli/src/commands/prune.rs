use std::fs;
use std::path::Path;

use serde_json::json;
use svlens_core::surgery::{apply_plan, SurgeryPlan};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::PruneArgs;

const PRUNE_SCHEMA: &str =
    "svlens.prune.v1 name,kind,block,removed_ranks,energy_removed,total_energy,mass_removed,total_mass";

fn load_plan(ctx: &mut Ctx, text: &str) -> Result<SurgeryPlan> {
    let trimmed = text.trim_start();
    let body = if trimmed.starts_with('{') {
        trimmed.to_string()
    } else {
        let path = Path::new(text);
        ctx.log.input(path)?;
        fs::read_to_string(path).map_err(|e| CliError::io(path, e))?
    };
    Ok(SurgeryPlan::from_json(&body)?)
}

pub fn run(ctx: &mut Ctx, args: &PruneArgs) -> Result<()> {
    let Some(out_name) = args.output.to_str().filter(|_| args.output.is_relative()) else {
        return Err(CliError::Usage(format!(
            "--output must be a relative path inside the output directory, got {}",
            args.output.display()
        )));
    };
    let map = ctx.checkpoint(&args.checkpoint)?;
    let plan = load_plan(ctx, &args.plan)?;
    ctx.record_config(&json!({ "plan": plan, "output": out_name }))?;
    let (pruned, mut report) = apply_plan(&map, &plan, &ctx.table)?;
    report
        .tensors
        .sort_by(|a, b| (a.role.kind, a.role.block, &a.name).cmp(&(b.role.kind, b.role.block, &b.name)));
    ctx.out.checkpoint(out_name, &pruned)?;

    let mut csv = format!("# schema: {PRUNE_SCHEMA}\nname,kind,block,removed_ranks,energy_removed,total_energy,mass_removed,total_mass\n");
    for t in &report.tensors {
        let ranks: Vec<String> = t.removed_ranks.iter().map(|r| r.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            t.name,
            t.role.kind,
            t.role.block.map_or(String::new(), |b| b.to_string()),
            ranks.join(";"),
            t.energy_removed,
            t.total_energy,
            t.mass_removed,
            t.total_mass
        ));
    }
    let mut j = report.to_json();
    j["output"] = json!(out_name);
    j["energy_removed"] = json!(report.tensors.iter().map(|t| t.energy_removed).sum::<f64>());
    ctx.out.json("prune_report.json", &j)?;
    ctx.out.csv("prune_report.csv", &csv)?;
    Ok(())
}
