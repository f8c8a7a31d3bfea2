//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p svlens-cli --test acceptance`.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde_json::Value;
use svlens_cli::read_manifest;
use svlens_core::covlap::{overlap_for_matrix, overlap_profile};
use svlens_core::linalg::{gaussian_matrix, random_orthogonal, random_unit_vector, svd, GaussianRng, Matrix};
use svlens_core::rmt::{spectrum_report, MpModel};
use svlens_core::surgery::{apply_plan, remove_by_mass, remove_decile, remove_ranks, BlockScope, RemovalMode, SurgeryPlan};
use svlens_core::tensorstore::{
    decode_checkpoint, decode_tokens, encode_checkpoint, encode_tokens, read_checkpoint, ActivationBatch, MatrixRole,
    RoleKind, RoleTable,
};
use svlens_nets::data::ClusterSpec;
use svlens_nets::language::SyntheticLanguage;
use svlens_nets::transformer::{window_gradients, window_loss};
use svlens_nets::{perplexity, FfnKind, Mlp, Transformer, TransformerConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_svlens"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("svlens {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
        }
    }

    fn json(&self, rel: &str) -> Result<Value, String> {
        let text = fs::read_to_string(self.path(rel)).map_err(|e| format!("{rel}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{rel}: {e}"))
    }
}

fn num(v: &Value, what: &str) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("{what} missing"))
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn c1_mp_null() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for seed in [1u64, 2, 3] {
        let w = gaussian_matrix(1024, 1024, 1.0 / 32.0, seed).map_err(|e| e.to_string())?;
        let r = spectrum_report(&w, MatrixRole::new(RoleKind::Other, None), 50).map_err(|e| e.to_string())?;
        let st = r.mp.sigma_tilde;
        ensure((0.98..=1.02).contains(&st), format!("seed {seed}: sigma_tilde {st}"))?;
        ensure(r.ks < 0.03, format!("seed {seed}: ks {}", r.ks))?;
        ensure(
            (r.left_outliers, r.right_outliers) == (0, 0),
            format!("seed {seed}: outliers ({}, {})", r.left_outliers, r.right_outliers),
        )?;
        notes.push(format!("s~={st:.4} ks={:.4}", r.ks));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("{} outliers (0,0) in {secs:.1} s", notes.join(", ")))
}

fn c2_mp_math() -> Check {
    let q = MpModel::new(500, 500, 1.0).map_err(|e| e.to_string())?;
    let r2 = 2f64.sqrt();
    let dp = (q.density(r2) - r2 / PI).abs();
    let dc = (q.cdf(r2) - (1.0 + PI / 2.0) / PI).abs();
    ensure(dp < 1e-6, format!("P(sqrt2) off by {dp:e}"))?;
    ensure(dc < 1e-6, format!("CDF(sqrt2) off by {dc:e}"))?;
    let mut worst: f64 = 0.0;
    for (m, n) in [(400, 400), (200, 400), (100, 400)] {
        let mp = MpModel::new(m, n, 1.0).map_err(|e| e.to_string())?;
        let half = 0.5 * (mp.nu_plus - mp.nu_minus);
        let total = simpson(|t| mp.density(mp.nu_minus + half * (1.0 - t.cos())) * half * t.sin(), 0.0, PI, 20_000);
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst < 1e-6, format!("normalization off by {worst:e}"))?;
    Ok(format!("|dP|={dp:.1e} |dCDF|={dc:.1e} max |1-int P|={worst:.1e}"))
}

fn c3_spike() -> Check {
    let n = 512;
    let mut overlaps = Vec::new();
    for seed in 0..5u64 {
        let mut w = gaussian_matrix(n, n, 1.0 / (n as f64).sqrt(), 100 + seed).map_err(|e| e.to_string())?;
        let mut rng = GaussianRng::new(200 + seed);
        let u = random_unit_vector(n, &mut rng);
        let v = random_unit_vector(n, &mut rng);
        w.add_outer(3.0, &u, &v);
        let r = spectrum_report(&w, MatrixRole::new(RoleKind::Other, None), 50).map_err(|e| e.to_string())?;
        ensure(r.right_outliers == 1, format!("seed {seed}: {} right outliers", r.right_outliers))?;
        let d = svd(&w).map_err(|e| e.to_string())?;
        let o: f64 = d.v.column(0).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs();
        ensure(o > 0.8, format!("seed {seed}: overlap {o}"))?;
        overlaps.push(o);
    }
    let min = overlaps.iter().cloned().fold(1.0, f64::min);
    Ok(format!("1 right outlier on 5 seeds, min overlap {min:.3}"))
}

fn c4_overlap() -> Check {
    let n = 512;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let p = overlap_profile(&random_orthogonal(n, 1000 + 2 * seed), &random_orthogonal(n, 1001 + 2 * seed))
            .map_err(|e| e.to_string())?;
        worst = worst.max(p.max_overlap());
    }
    ensure(worst < 0.3, format!("random max overlap {worst}"))?;
    // W = U diag(s) Bᵀ, inputs with covariance B diag(c²) Bᵀ
    let (dim, k) = (64, 4);
    let basis = random_orthogonal(dim, 5);
    let u = random_orthogonal(dim, 6);
    let s: Vec<f64> = (0..dim).map(|i| if i < k { 10.0 - i as f64 } else { 0.5 / (1 + i) as f64 }).collect();
    let w = u.matmul(&Matrix::diag(&s)).matmul(&basis.transpose());
    let c: Vec<f64> = (0..dim).map(|j| if j < k { 6.0 - j as f64 } else { 0.5 }).collect();
    let mut rng = GaussianRng::new(7);
    let x = Matrix::from_fn(5000, dim, |_, _| rng.standard_normal()).matmul(&Matrix::diag(&c)).matmul(&basis.transpose());
    let batch = ActivationBatch {
        layer_id: "w".into(),
        batch_index: 0,
        values: x,
    };
    let p = overlap_for_matrix(&w, &[batch]).map_err(|e| e.to_string())?;
    let planted_min = p.overlaps[..k].iter().cloned().fold(1.0, f64::min);
    ensure(planted_min > 0.9, format!("planted overlaps {:?}", &p.overlaps[..k]))?;
    Ok(format!("random max {worst:.3} over 20 seeds, planted min {planted_min:.4}"))
}

fn c5_energy() -> Check {
    let mut worst: f64 = 0.0;
    for (m, n, seed) in [(64, 64, 1u64), (48, 96, 2)] {
        let w = gaussian_matrix(m, n, 1.0, seed).map_err(|e| e.to_string())?;
        let mut cases: Vec<Vec<usize>> = vec![vec![1], vec![3, 9, 20], (30..=48).collect()];
        cases.extend((1..=10).map(|d| remove_decile(&w, d).unwrap().removed));
        for ranks in cases {
            let r = remove_ranks(&w, &ranks).map_err(|e| e.to_string())?;
            let diff = w.sub(&r.matrix).frobenius_norm().powi(2);
            worst = worst.max((diff - r.energy()).abs() / r.energy());
        }
    }
    ensure(worst < 1e-8, format!("relative energy error {worst:e}"))?;
    let r = remove_by_mass(&Matrix::diag(&[4.0, 3.0, 2.0, 1.0]), 0.3).map_err(|e| e.to_string())?;
    let removed: Vec<f64> = r.removed.iter().map(|&k| r.svals[k - 1]).collect();
    ensure(removed == [2.0, 1.0], format!("mass case removed values {removed:?}"))?;
    Ok(format!("max relative error {worst:.1e}; [4,3,2,1]@0.3 removes values {{1,2}}"))
}

const EPS: f64 = 1e-5;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn mlp_grad_error(alpha: f64) -> Result<f64, String> {
    let data = ClusterSpec {
        classes: 4,
        dim: 6,
        ..ClusterSpec::default()
    }
    .sample(16, 31)
    .map_err(|e| e.to_string())?;
    let m = Mlp::init(&[6, 9, 7, 4], alpha, 32);
    let (_, g) = m.gradients(&data).map_err(|e| e.to_string())?;
    let loss = |p: &Mlp| p.loss(&data).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..m.num_layers() {
        for i in 0..m.weights[l].len() {
            let mut p = m.clone();
            p.weights[l].as_mut_slice()[i] += EPS;
            let up = loss(&p);
            p.weights[l].as_mut_slice()[i] -= 2.0 * EPS;
            let fd = (up - loss(&p)) / (2.0 * EPS);
            worst = worst.max(rel(g.weights[l].as_slice()[i], fd));
        }
        for i in 0..m.biases[l].len() {
            let mut p = m.clone();
            p.biases[l][i] += EPS;
            let up = loss(&p);
            p.biases[l][i] -= 2.0 * EPS;
            let fd = (up - loss(&p)) / (2.0 * EPS);
            worst = worst.max(rel(g.biases[l][i], fd));
        }
    }
    Ok(worst)
}

fn transformer_grad_error() -> Result<f64, String> {
    let cfg = TransformerConfig {
        vocab: 16,
        d_model: 12,
        n_heads: 3,
        n_blocks: 1,
        d_ff: 20,
        ffn_kind: FfnKind::Plain,
        context: 6,
        seed: 41,
    };
    let mut m = Transformer::init(&cfg).map_err(|e| e.to_string())?;
    let mut rng = GaussianRng::new(42);
    for (name, _, p) in m.params_mut() {
        if name.contains("ln") || name.ends_with(".bias") {
            p.iter_mut().for_each(|v| *v += 0.2 * rng.standard_normal());
        }
    }
    let ids = [2u32, 9, 4, 4, 15, 0];
    let targets = [9u32, 4, 4, 15, 0, 7];
    let mut g = m.zeros_like();
    window_gradients(&m, &ids, &targets, 1.0, &mut g).map_err(|e| e.to_string())?;
    let flat: Vec<f64> = g.params().iter().flat_map(|(_, _, p)| p.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.below(flat.len());
        let eval = |delta: f64| {
            let mut p = m.clone();
            let mut seen = 0;
            for (_, _, v) in p.params_mut() {
                if k < seen + v.len() {
                    v[k - seen] += delta;
                    break;
                }
                seen += v.len();
            }
            window_loss(&p, &ids, &targets).unwrap()
        };
        let fd = (eval(EPS) - eval(-EPS)) / (2.0 * EPS);
        worst = worst.max(rel(flat[k], fd));
    }
    Ok(worst)
}

fn c6_gradients() -> Check {
    let a1 = mlp_grad_error(1.0)?;
    let a15 = mlp_grad_error(15.0)?;
    let tr = transformer_grad_error()?;
    ensure(a1 < 1e-4, format!("MLP alpha=1 rel {a1:e}"))?;
    ensure(a15 < 1e-4, format!("MLP alpha=15 rel {a15:e}"))?;
    ensure(tr < 1e-3, format!("transformer rel {tr:e}"))?;
    Ok(format!("MLP a=1 {a1:.1e}, a=15 {a15:.1e}; transformer {tr:.1e} over 100 params"))
}

fn c7_lazy(ws: &Workspace) -> Check {
    let start = Instant::now();
    ws.run(&["ablate", "lazy", "--out", "lazy"])?;
    let secs = start.elapsed().as_secs_f64();
    let j = ws.json("lazy/lazy.json")?;
    let curves = j["curves"].as_array().ok_or("no curves")?;
    let find = |a: f64| curves.iter().find(|c| c["alpha"].as_f64() == Some(a)).ok_or(format!("no alpha {a} curve"));
    let (std, lazy) = (find(1.0)?, find(15.0)?);
    let (m1, m15) = (num(&std["relative_movement"], "movement")?, num(&lazy["relative_movement"], "movement")?);
    let (d1, d15) = (num(&std["probe_drop"], "drop")?, num(&lazy["probe_drop"], "drop")?);
    ensure(m15 < 0.25 * m1, format!("movement {m15} vs {m1}"))?;
    ensure(d15 > d1, format!("20% drop: lazy {d15} vs standard {d1}"))?;
    ensure(secs < 300.0, format!("took {secs:.0} s"))?;
    Ok(format!(
        "movement {m15:.4} vs {m1:.4} (x{:.2}); 20% drop {d15:.3} vs {d1:.3}; {secs:.0} s",
        m15 / m1
    ))
}

fn c8_sweep(ws: &Workspace) -> Check {
    let start = Instant::now();
    ws.run(&["ablate", "decile-sweep", "--out", "sweep"])?;
    let secs = start.elapsed().as_secs_f64();
    let ppl = num(&ws.json("sweep/model_score.json")?["perplexity"], "perplexity")?;
    ensure(ppl <= 1.5, format!("trained perplexity {ppl}"))?;
    let j = ws.json("sweep/decile_sweep.json")?;
    let worst = j["worst_decile"].as_object().ok_or("no worst_decile")?;
    ensure(worst.len() >= 4, format!("only {} role kinds swept", worst.len()))?;
    for (role, d) in worst {
        ensure(d.as_u64() == Some(1), format!("{role}: worst decile {d}"))?;
    }
    // empty plan: every kind, no ranks
    let map = read_checkpoint(ws.path("sweep/model.safetensors")).map_err(|e| e.to_string())?;
    let cfg = Transformer::config_from_map(&map).map_err(|e| e.to_string())?;
    let model = Transformer::from_map(&cfg, &map).map_err(|e| e.to_string())?;
    let plan = SurgeryPlan::new(RoleKind::ALL.to_vec(), RemovalMode::Ranks(Vec::new()), BlockScope::All);
    let (same, _) = apply_plan(&map, &plan, &RoleTable::default()).map_err(|e| e.to_string())?;
    let tokens = SyntheticLanguage::task_a(cfg.vocab).generate(4000, 2).map_err(|e| e.to_string())?;
    let before = perplexity(&model, &tokens).map_err(|e| e.to_string())?.value();
    let after = perplexity(&Transformer::from_map(&cfg, &same).map_err(|e| e.to_string())?, &tokens)
        .map_err(|e| e.to_string())?
        .value();
    ensure(after - before == 0.0, format!("empty plan delta {}", after - before))?;
    ensure(secs < 600.0, format!("took {secs:.0} s"))?;
    let roles: Vec<&str> = worst.keys().map(String::as_str).collect();
    Ok(format!("PPL {ppl:.4}; decile 1 worst for {}; empty-plan delta 0; {secs:.0} s", roles.join(",")))
}

fn c9_finetune(ws: &Workspace) -> Check {
    let checkpoint = ws.path("sweep/model.safetensors");
    let mut args = vec!["ablate", "finetune-order", "--deciles", "1,10", "--out", "finetune"];
    let ckpt = checkpoint.to_string_lossy().into_owned();
    if checkpoint.exists() {
        args.extend(["--checkpoint", ckpt.as_str()]);
    }
    ws.run(&args)?;
    let j = ws.json("finetune/finetune_order.json")?;
    let floor = num(&j["floor_perplexity"], "floor")?;
    let rows = j["rows"].as_array().ok_or("no rows")?;
    let row = |d: u64| rows.iter().find(|r| r["decile"].as_u64() == Some(d)).ok_or(format!("no decile {d}"));
    let ppl = |r: &Value, order: &str| num(&r[order]["perplexity"], order);
    let (r10, r1) = (row(10)?, row(1)?);
    let (rf10, fr10) = (ppl(r10, "remove_then_finetune")?, ppl(r10, "finetune_then_remove")?);
    let (rf1, fr1) = (ppl(r1, "remove_then_finetune")?, ppl(r1, "finetune_then_remove")?);
    // task-B perplexity: lower is better
    ensure(rf10 <= fr10, format!("decile 10: remove->ft {rf10} worse than ft->remove {fr10}"))?;
    ensure(rf1 > floor && fr1 > floor, format!("decile 1: {rf1}, {fr1} vs floor {floor}"))?;
    Ok(format!(
        "decile 10 PPL remove->ft {rf10:.4} <= ft->remove {fr10:.4}; decile 1 {rf1:.3}, {fr1:.2} above floor {floor:.4}"
    ))
}

fn tree(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const SMALL_LM: &str = r#"{"model":{"d_model":16,"n_heads":2,"n_blocks":1,"d_ff":32,"context":8},"train":{"steps":30,"lr":0.5,"batch_size":4,"checkpoint_every":10},"train_tokens":600,"test_tokens":300}"#;
const SMALL_MLP: &str = r#"{"mlp":{"layer_dims":[64,32,10],"epochs":3},"train_size":200,"test_size":100}"#;
const SMALL_ABLATE: &str = r#"{"pretrain":{"model":{"d_model":16,"n_heads":2,"n_blocks":1,"d_ff":32,"context":8},"train":{"steps":30,"lr":0.5,"batch_size":4},"train_tokens":600,"test_tokens":300},"finetune":{"train":{"steps":10,"lr":0.1,"batch_size":4},"train_tokens":300,"test_tokens":200,"deciles":[1,10]},"lazy":{"train_size":100,"test_size":50,"mlp":{"layer_dims":[64,32,32,10],"epochs":2},"removal_layers":[0,1],"frozen":{"layer_dims":[64,32,32,10],"freeze_layers":[0],"layers":[0]}}}"#;

fn c10_exactness(ws: &Workspace) -> Check {
    // uniform logits
    let mut m = Transformer::init(&TransformerConfig {
        vocab: 37,
        ..TransformerConfig::default()
    })
    .map_err(|e| e.to_string())?;
    m.lm_head = Matrix::zeros(m.lm_head.rows(), m.lm_head.cols());
    let tokens = SyntheticLanguage::task_a(37).generate(500, 3).map_err(|e| e.to_string())?;
    let ppl = perplexity(&m, &tokens).map_err(|e| e.to_string())?.value();
    ensure((ppl - 37.0).abs() <= 1e-9 * 37.0, format!("uniform PPL {ppl}"))?;

    // container round trips
    let map = m.to_map();
    let bytes = encode_checkpoint(&map).map_err(|e| e.to_string())?;
    let again = encode_checkpoint(&decode_checkpoint(&bytes).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(bytes == again, "checkpoint re-encode differs")?;
    let tb = encode_tokens(&tokens);
    ensure(encode_tokens(&decode_tokens(&tb).map_err(|e| e.to_string())?) == tb, "token re-encode differs")?;

    // every subcommand twice
    fs::write(ws.path("small_lm.json"), SMALL_LM).map_err(|e| e.to_string())?;
    fs::write(ws.path("small_mlp.json"), SMALL_MLP).map_err(|e| e.to_string())?;
    fs::write(ws.path("small_ablate.json"), SMALL_ABLATE).map_err(|e| e.to_string())?;
    let runs: Vec<Vec<&str>> = vec![
        vec!["gen-data", "language", "--task", "b", "--len", "400", "--seed", "3"],
        vec!["gen-data", "clusters", "--n", "100", "--seed", "4"],
        vec!["gen-data", "gaussian", "--rows", "96", "--cols", "64", "--count", "2", "--seed", "5"],
        vec!["gen-data", "lm-init", "--seed", "6"],
        vec!["train-lm", "--config", "small_lm.json", "--seed", "7"],
        vec!["train-mlp", "--config", "small_mlp.json", "--seed", "8"],
        vec!["spectrum", "base/lm/model.safetensors", "--average-blocks", "--include-svals"],
        vec!["prune", "base/lm/model.safetensors", "--plan", r#"{"kinds":["query","up"],"mode":{"mass":0.5}}"#],
        vec!["eval", "base/lm/model.safetensors", "--tokens", "base/tok/tokens.bin"],
        vec!["dump-activations", "--checkpoint", "base/lm/model.safetensors", "--tokens", "base/tok/tokens.bin"],
        vec![
            "overlap", "--checkpoint", "base/lm/model.safetensors", "--activations", "base/dump/activations.safetensors",
        ],
        vec!["ablate", "decile-sweep", "--config", "small_ablate.json", "--seed", "9"],
        vec!["ablate", "finetune-order", "--config", "small_ablate.json", "--seed", "10"],
        vec!["ablate", "lazy", "--config", "small_ablate.json", "--seed", "11"],
    ];
    ws.run(&["gen-data", "language", "--len", "300", "--seed", "12", "--out", "base/tok"])?;
    ws.run(&["gen-data", "lm-init", "--seed", "13", "--out", "base/lm"])?;
    ws.run(&["dump-activations", "--checkpoint", "base/lm/model.safetensors", "--tokens", "base/tok/tokens.bin", "--out", "base/dump"])?;
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let dirs = [format!("rep/a{i}"), format!("rep/b{i}")];
        for d in &dirs {
            let mut full = args.clone();
            full.extend(["--out", d.as_str()]);
            ws.run(&full)?;
        }
        let (a, b) = (ws.path(&dirs[0]), ws.path(&dirs[1]));
        let files = tree(&a);
        ensure(files == tree(&b), format!("{}: different file sets", args.join(" ")))?;
        ensure(files.iter().filter(|f| f.as_os_str() == "manifest.json").count() == 1, "manifest count")?;
        for f in &files {
            if f.as_os_str() == "manifest.json" {
                continue;
            }
            let same = fs::read(a.join(f)).map_err(|e| e.to_string())? == fs::read(b.join(f)).map_err(|e| e.to_string())?;
            ensure(same, format!("{}: {} differs", args.join(" "), f.display()))?;
            compared += 1;
        }
        let ma = read_manifest(&a).map_err(|e| e.to_string())?;
        let mut mb = read_manifest(&b).map_err(|e| e.to_string())?.without_timestamp();
        ensure(mb.command_line.last() == Some(&dirs[1]), "command line")?;
        mb.command_line = ma.command_line.clone();
        ensure(ma.without_timestamp() == mb, format!("{}: manifests differ", args.join(" ")))?;
        ensure(ma.status == "complete", "status")?;
    }
    Ok(format!("uniform PPL {ppl}; containers re-encode identically; {} commands x2, {compared} files identical", runs.len()))
}

fn main() {
    let ws = Workspace {
        dir: tempfile::tempdir().expect("temp dir"),
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("MP null", Box::new(c1_mp_null)),
        ("MP math", Box::new(c2_mp_math)),
        ("spike detection", Box::new(c3_spike)),
        ("overlap null and plant", Box::new(c4_overlap)),
        ("surgery energy identity", Box::new(c5_energy)),
        ("gradient oracles", Box::new(c6_gradients)),
        ("lazy analog", Box::new(|| c7_lazy(&ws))),
        ("decile sweep analog", Box::new(|| c8_sweep(&ws))),
        ("finetune-order analog", Box::new(|| c9_finetune(&ws))),
        ("perplexity exactness and reproducibility", Box::new(|| c10_exactness(&ws))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
