use rayon::prelude::*;
use serde_json::{json, Value};
use svlens_core::covlap::{activations_for, overlap_for_matrix, timeline_csv, OverlapProfile, TimelinePoint, OVERLAP_FLAG};
use svlens_core::linalg::Matrix;
use svlens_core::rmt::{fit_sigma, MpModel};
use svlens_core::tensorstore::{read_activations, ActivationBatch, MatrixRole, TensorMap};

use super::{select, Ctx};
use crate::error::{CliError, Result};
use crate::output::file_stem;
use crate::svg::{lines_svg, overlap_svg, Series};
use crate::OverlapArgs;

/// Ranks whose singular values fall outside the fitted bulk `[ν−, ν+]`.
fn outside_bulk(w: &Matrix, svals: &[f64]) -> Result<(Vec<bool>, MpModel)> {
    let mp = MpModel::new(w.rows(), w.cols(), fit_sigma(w)?)?;
    Ok((svals.iter().map(|&s| s > mp.nu_plus || s < mp.nu_minus).collect(), mp))
}

struct Measured {
    profile: OverlapProfile,
    outside: Vec<bool>,
    mp: MpModel,
}

fn measure(w: &Matrix, batches: &[ActivationBatch]) -> Result<Measured> {
    let profile = overlap_for_matrix(w, batches)?;
    let svals = profile.svals.clone().unwrap_or_default();
    let (outside, mp) = outside_bulk(w, &svals)?;
    Ok(Measured { profile, outside, mp })
}

fn profile_json(name: &str, role: MatrixRole, m: &Measured) -> Value {
    let mut j = m.profile.to_json();
    j["name"] = json!(name);
    j["role"] = json!(role);
    j["nu_minus"] = json!(m.mp.nu_minus);
    j["nu_plus"] = json!(m.mp.nu_plus);
    j["outside_bulk"] = json!(m.outside);
    j
}

fn emit_profile(ctx: &mut Ctx, stem: &str, heading: &str, name: &str, role: MatrixRole, m: &Measured) -> Result<()> {
    ctx.out.json(&format!("overlap/{stem}.json"), &profile_json(name, role, m))?;
    ctx.out.csv(&format!("overlap/{stem}.csv"), &m.profile.to_csv())?;
    ctx.out.svg(
        &format!("overlap/{stem}.svg"),
        &overlap_svg(heading, &m.profile.overlaps, &m.outside, OVERLAP_FLAG),
    )?;
    Ok(())
}

pub fn run(ctx: &mut Ctx, args: &OverlapArgs) -> Result<()> {
    if args.activations.len() != args.checkpoints.len() {
        return Err(CliError::MissingDumps(format!(
            "{} checkpoints but {} activation dumps",
            args.checkpoints.len(),
            args.activations.len()
        )));
    }
    let mut maps: Vec<TensorMap> = Vec::with_capacity(args.checkpoints.len());
    let mut dumps: Vec<Vec<ActivationBatch>> = Vec::with_capacity(args.activations.len());
    for (c, a) in args.checkpoints.iter().zip(&args.activations) {
        maps.push(ctx.checkpoint(c)?);
        ctx.log.input(a)?;
        dumps.push(read_activations(a)?);
    }
    ctx.record_config(&json!({
        "kinds": args.filter.kinds,
        "blocks": args.filter.blocks,
        "names": args.filter.names,
        "flag_threshold": OVERLAP_FLAG,
    }))?;
    let selected = select(&maps[0], &ctx.table, &args.filter);
    if selected.is_empty() {
        return Err(CliError::NoMatrices);
    }
    let (covered, skipped): (Vec<_>, Vec<_>) = selected
        .into_iter()
        .partition(|(name, _)| dumps.iter().all(|d| !activations_for(d, name).is_empty()));
    if covered.is_empty() {
        return Err(CliError::MissingDumps(format!(
            "no recorded inputs for {}",
            skipped.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    for (name, _) in &skipped {
        log::warn!("skipping {name}: no recorded inputs");
    }

    // One entry per (matrix, checkpoint), computed in parallel.
    let jobs: Vec<(usize, usize)> = (0..covered.len()).flat_map(|i| (0..maps.len()).map(move |c| (i, c))).collect();
    let measured = jobs
        .par_iter()
        .map(|&(i, c)| {
            let name = covered[i].0.as_str();
            let w = maps[c]
                .matrix(name)
                .ok_or_else(|| CliError::Config(format!("{name} missing from checkpoint {}", c + 1)))?;
            let batches: Vec<ActivationBatch> = activations_for(&dumps[c], name).into_iter().cloned().collect();
            measure(&w, &batches).map_err(|e| e.in_step(name.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let steps: Vec<u64> = maps.iter().enumerate().map(|(i, m)| m.step().unwrap_or(i as u64)).collect();
    let mut summary = Vec::new();
    for (i, (name, role)) in covered.iter().enumerate() {
        let stem = file_stem(name);
        let per_ckpt = &measured[i * maps.len()..(i + 1) * maps.len()];
        if maps.len() == 1 {
            emit_profile(ctx, &stem, name, name, *role, &per_ckpt[0])?;
        } else {
            let mut order: Vec<usize> = (0..maps.len()).collect();
            order.sort_by_key(|&c| (steps[c], c));
            let points: Vec<TimelinePoint> = order
                .iter()
                .map(|&c| TimelinePoint {
                    step: steps[c],
                    tensor: name.to_string(),
                    profile: per_ckpt[c].profile.clone(),
                })
                .collect();
            ctx.out.csv(&format!("overlap/{stem}_timeline.csv"), &timeline_csv(&points))?;
            let entries: Vec<Value> = order
                .iter()
                .map(|&c| {
                    let mut j = profile_json(name, role.with_step(Some(steps[c])), &per_ckpt[c]);
                    j["step"] = json!(steps[c]);
                    j
                })
                .collect();
            ctx.out.json(&format!("overlap/{stem}_timeline.json"), &json!({ "name": name, "timeline": entries }))?;
            let series: Vec<Series> = order
                .iter()
                .map(|&c| Series {
                    label: format!("step {}", steps[c]),
                    points: per_ckpt[c].profile.overlaps.iter().enumerate().map(|(k, &o)| ((k + 1) as f64, o)).collect(),
                })
                .collect();
            ctx.out.svg(
                &format!("overlap/{stem}_timeline.svg"),
                &lines_svg(&format!("{name} over training"), "rank k", "O_k", &series),
            )?;
            for &c in &order {
                let heading = format!("{name} at step {}", steps[c]);
                emit_profile(ctx, &format!("{stem}_step{}", steps[c]), &heading, name, role.with_step(Some(steps[c])), &per_ckpt[c])?;
            }
        }
        let last = &per_ckpt[per_ckpt.len() - 1];
        summary.push(json!({
            "name": name,
            "role": role,
            "max_overlap": last.profile.max_overlap(),
            "flagged": last.profile.flagged().iter().filter(|&&f| f).count(),
            "outside_bulk": last.outside.iter().filter(|&&o| o).count(),
        }));
    }
    ctx.out.json(
        "summary.json",
        &json!({
            "checkpoints": steps,
            "matrices": summary,
            "skipped": skipped.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}
