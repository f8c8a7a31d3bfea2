use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::{json, Value};
use svlens_core::linalg::Matrix;
use svlens_core::rmt::{spectrum_report, spectrum_report_pooled, SpectrumReport};
use svlens_core::tensorstore::{MatrixRole, RoleKind};

use super::{select, Ctx};
use crate::error::{CliError, Result};
use crate::output::file_stem;
use crate::svg::histogram_svg;
use crate::SpectrumArgs;

const SUMMARY_SCHEMA: &str =
    "svlens.spectrum_summary.v1 name,kind,block,m,n,sigma_tilde,nu_minus,nu_plus,ks,left_outliers,right_outliers,max_sval";

const POOLING_NOTE: &str = "singular values of all listed matrices pooled into one histogram; law fitted to their pooled entries";

fn summary_line(name: &str, r: &SpectrumReport) -> String {
    let block = r.role.block.map_or(String::new(), |b| b.to_string());
    format!(
        "{name},{},{block},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{:.12e}\n",
        r.role.kind, r.mp.m, r.mp.n, r.mp.sigma_tilde, r.mp.nu_minus, r.mp.nu_plus, r.ks, r.left_outliers, r.right_outliers,
        r.max_sval()
    )
}

fn emit(ctx: &mut Ctx, stem: &str, name: &str, report: &SpectrumReport, extra: Value, include_svals: bool) -> Result<()> {
    let mut j = report.to_json(include_svals);
    j["name"] = json!(name);
    if let (Value::Object(dst), Value::Object(src)) = (&mut j, extra) {
        dst.extend(src);
    }
    ctx.out.json(&format!("spectrum/{stem}.json"), &j)?;
    ctx.out.csv(&format!("spectrum/{stem}.csv"), &report.to_csv())?;
    ctx.out.svg(&format!("spectrum/{stem}.svg"), &histogram_svg(name, &report.histogram, &report.mp))?;
    Ok(())
}

pub fn run(ctx: &mut Ctx, args: &SpectrumArgs) -> Result<()> {
    let map = ctx.checkpoint(&args.checkpoint)?;
    ctx.record_config(&json!({
        "bins": args.bins,
        "average_blocks": args.average_blocks,
        "include_svals": args.include_svals,
        "kinds": args.filter.kinds,
        "blocks": args.filter.blocks,
        "names": args.filter.names,
    }))?;
    let selected = select(&map, &ctx.table, &args.filter);
    if selected.is_empty() {
        return Err(CliError::NoMatrices);
    }
    let step = map.step();
    let reports = selected
        .par_iter()
        .map(|(name, role)| {
            let w = map.matrix(name).expect("selected rank-2 tensor");
            spectrum_report(&w, role.with_step(step), args.bins).map_err(|e| CliError::from(e).in_step(name.as_str()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = format!("# schema: {SUMMARY_SCHEMA}\nname,kind,block,m,n,sigma_tilde,nu_minus,nu_plus,ks,left_outliers,right_outliers,max_sval\n");
    let mut rows = Vec::with_capacity(reports.len());
    for ((name, _), report) in selected.iter().zip(&reports) {
        emit(ctx, &file_stem(name), name, report, json!({}), args.include_svals)?;
        summary.push_str(&summary_line(name, report));
        rows.push(json!({
            "name": name,
            "role": report.role,
            "m": report.mp.m,
            "n": report.mp.n,
            "sigma_tilde": report.mp.sigma_tilde,
            "ks": report.ks,
            "left_outliers": report.left_outliers,
            "right_outliers": report.right_outliers,
            "max_sval": report.max_sval(),
        }));
    }

    let mut pooled_rows = Vec::new();
    if args.average_blocks {
        // Pool per kind and oriented shape, since the law needs one shape.
        let mut groups: BTreeMap<(RoleKind, (usize, usize)), Vec<&str>> = BTreeMap::new();
        for (name, role) in &selected {
            let w = map.get(name).expect("selected");
            let s = w.shape();
            groups.entry((role.kind, (s[0], s[1]))).or_default().push(name.as_str());
        }
        let shapes_per_kind = |k: RoleKind| groups.keys().filter(|(g, _)| *g == k).count();
        for ((kind, (m, n)), names) in &groups {
            let ws: Vec<Matrix> = names.iter().map(|n| map.matrix(n).expect("selected")).collect();
            let report = spectrum_report_pooled(&ws, MatrixRole::new(*kind, None).with_step(step), args.bins)?;
            let label = if shapes_per_kind(*kind) > 1 {
                format!("pooled_{kind}_{m}x{n}")
            } else {
                format!("pooled_{kind}")
            };
            let extra = json!({ "pooling": POOLING_NOTE, "pooled_names": names });
            emit(ctx, &label, &label, &report, extra, args.include_svals)?;
            summary.push_str(&summary_line(&label, &report));
            pooled_rows.push(json!({
                "name": label,
                "role": report.role,
                "pooled_matrices": report.pooled,
                "sigma_tilde": report.mp.sigma_tilde,
                "ks": report.ks,
                "left_outliers": report.left_outliers,
                "right_outliers": report.right_outliers,
            }));
        }
    }
    ctx.out.csv("summary.csv", &summary)?;
    ctx.out.json(
        "summary.json",
        &json!({ "checkpoint_step": step, "matrices": rows, "pooled": pooled_rows, "pooling": POOLING_NOTE }),
    )?;
    Ok(())
}
