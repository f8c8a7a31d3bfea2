//! Analytic gradients against central finite differences.

use svlens_core::linalg::{GaussianRng, Matrix};
use svlens_nets::data::{ClusterSpec, LabeledData};
use svlens_nets::transformer::{window_gradients, window_loss};
use svlens_nets::{FfnKind, Mlp, Transformer, TransformerConfig};

const EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn mlp_case(alpha: f64) -> (Mlp, LabeledData) {
    let data = ClusterSpec {
        classes: 3,
        dim: 5,
        ..ClusterSpec::default()
    }
    .sample(12, 4)
    .unwrap();
    let mut m = Mlp::init(&[5, 7, 6, 3], alpha, 9);
    let mut rng = GaussianRng::new(1);
    for b in &mut m.biases {
        b.iter_mut().for_each(|v| *v = 0.1 * rng.standard_normal());
    }
    (m, data)
}

fn check_mlp(alpha: f64) -> f64 {
    let (m, data) = mlp_case(alpha);
    let (_, g) = m.gradients(&data).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..m.num_layers() {
        for idx in 0..m.weights[l].len() {
            let mut p = m.clone();
            p.weights[l].as_mut_slice()[idx] += EPS;
            let up = p.loss(&data).unwrap();
            p.weights[l].as_mut_slice()[idx] -= 2.0 * EPS;
            let down = p.loss(&data).unwrap();
            let fd = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(g.weights[l].as_slice()[idx], fd));
        }
        for idx in 0..m.biases[l].len() {
            let mut p = m.clone();
            p.biases[l][idx] += EPS;
            let up = p.loss(&data).unwrap();
            p.biases[l][idx] -= 2.0 * EPS;
            let down = p.loss(&data).unwrap();
            let fd = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(g.biases[l][idx], fd));
        }
    }
    worst
}

#[test]
fn mlp_gradients_standard_softmax() {
    let e = check_mlp(1.0);
    assert!(e < 1e-4, "worst relative error {e}");
}

#[test]
fn mlp_gradients_lazy_softmax() {
    let e = check_mlp(15.0);
    assert!(e < 1e-4, "worst relative error {e}");
}

#[test]
fn lazy_path_at_alpha_one_equals_standard_gradient() {
    let (m, data) = mlp_case(1.0);
    let (l, g) = m.gradients(&data).unwrap();
    assert!((l - m.standard_loss(&data).unwrap()).abs() < 1e-12);
    // standard cross-entropy gradient of the last layer, computed directly
    let last = m.num_layers() - 1;
    let mut acts = data.x.clone();
    for i in 0..last {
        acts = acts.matmul_nt(&m.weights[i]);
        for r in 0..acts.rows() {
            for (v, b) in acts.row_mut(r).iter_mut().zip(&m.biases[i]) {
                *v = (*v + b).max(0.0);
            }
        }
    }
    let z = acts.matmul_nt(&m.weights[last]);
    let n = data.len() as f64;
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let row: Vec<f64> = z.row(r).iter().zip(&m.biases[last]).map(|(a, b)| a + b).collect();
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        for c in 0..row.len() {
            dz[(r, c)] = ((row[c] - mx).exp() / s - f64::from(u8::from(c == data.y[r]))) / n;
        }
    }
    let gw = dz.matmul_tn(&acts);
    assert!(gw.sub(&g.weights[last]).max_abs() < 1e-12);
}

fn perturbed_transformer(ffn_kind: FfnKind) -> Transformer {
    let cfg = TransformerConfig {
        vocab: 16,
        d_model: 8,
        n_heads: 2,
        n_blocks: 1,
        d_ff: 12,
        ffn_kind,
        context: 4,
        seed: 3,
    };
    let mut m = Transformer::init(&cfg).unwrap();
    let mut rng = GaussianRng::new(77);
    // move layer-norm gains and biases off their defaults
    for (name, _, p) in m.params_mut() {
        if name.contains("ln") || name.ends_with(".bias") {
            p.iter_mut().for_each(|v| *v += 0.3 * rng.standard_normal());
        }
    }
    m
}

fn check_transformer(ffn_kind: FfnKind) -> f64 {
    let m = perturbed_transformer(ffn_kind);
    let ids = [3u32, 7, 1, 12];
    let targets = [7u32, 1, 12, 5];
    let mut g = m.zeros_like();
    window_gradients(&m, &ids, &targets, 1.0, &mut g).unwrap();
    let flat: Vec<f64> = g.params().iter().flat_map(|(_, _, p)| p.to_vec()).collect();
    let total = flat.len();
    let mut rng = GaussianRng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.below(total);
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
        worst = worst.max(rel_err(flat[k], fd));
    }
    worst
}

#[test]
fn transformer_gradients_plain_ffn() {
    let e = check_transformer(FfnKind::Plain);
    assert!(e < 1e-3, "worst relative error {e}");
}

#[test]
fn transformer_gradients_gated_ffn() {
    let e = check_transformer(FfnKind::Glu);
    assert!(e < 1e-3, "worst relative error {e}");
}

#[test]
fn every_transformer_parameter_receives_gradient() {
    let m = perturbed_transformer(FfnKind::Glu);
    let mut g = m.zeros_like();
    window_gradients(&m, &[1, 2, 3, 4], &[2, 3, 4, 5], 1.0, &mut g).unwrap();
    for (name, _, p) in g.params() {
        if name == "embed.tokens.weight" || name == "embed.positions.weight" {
            continue;
        }
        assert!(p.iter().any(|&v| v != 0.0), "{name} has zero gradient");
    }
}
