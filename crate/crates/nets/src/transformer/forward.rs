use svlens_core::linalg::{dot, Matrix};
use svlens_core::tensorstore::{TensorMap, TokenStream};

use super::{FfnKind, Transformer, TransformerConfig};
use crate::{log_softmax_at, softmax_in_place, NetsError, Result};

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

pub(crate) struct LnCache {
    xhat: Matrix,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Matrix, g: &[f64], b: &[f64]) -> (Matrix, LnCache) {
    let (t, d) = x.shape();
    let mut xhat = Matrix::zeros(t, d);
    let mut y = Matrix::zeros(t, d);
    let mut rstd = Vec::with_capacity(t);
    for i in 0..t {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(r);
        let xh = xhat.row_mut(i);
        for j in 0..d {
            xh[j] = (row[j] - mean) * r;
        }
        let yr = y.row_mut(i);
        for j in 0..d {
            yr[j] = xhat[(i, j)] * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_back(dy: &Matrix, c: &LnCache, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Matrix {
    let (t, d) = dy.shape();
    let mut dx = Matrix::zeros(t, d);
    let mut dxhat = vec![0.0; d];
    for i in 0..t {
        let dyr = dy.row(i);
        let xh = c.xhat.row(i);
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dot(&dxhat, xh) / d as f64;
        let r = c.rstd[i];
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            *o = r * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

fn linear(x: &Matrix, w: &Matrix, b: Option<&[f64]>) -> Matrix {
    let mut y = x.matmul_nt(w);
    if let Some(b) = b {
        for i in 0..y.rows() {
            for (v, bb) in y.row_mut(i).iter_mut().zip(b) {
                *v += bb;
            }
        }
    }
    y
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (a, b) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *a += b;
    }
}

fn add_col_sums(dst: &mut [f64], m: &Matrix) {
    for i in 0..m.rows() {
        for (a, b) in dst.iter_mut().zip(m.row(i)) {
            *a += b;
        }
    }
}

pub(crate) struct BlockCache {
    ln1: LnCache,
    pub(crate) h1: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    pub(crate) attn: Matrix,
    ln2: LnCache,
    pub(crate) h2: Matrix,
    u: Matrix,
    gate: Option<Matrix>,
    pub(crate) m: Matrix,
}

pub(crate) struct Cache {
    ids: Vec<u32>,
    pub(crate) blocks: Vec<BlockCache>,
    lnf: LnCache,
    pub(crate) hf: Matrix,
}

impl Transformer {
    pub(crate) fn check_ids(&self, ids: &[u32]) -> Result<()> {
        let c = &self.config;
        if ids.is_empty() {
            return Err(NetsError::Empty("token window".into()));
        }
        if ids.len() > c.context {
            return Err(NetsError::ContextOverflow {
                len: ids.len(),
                context: c.context,
            });
        }
        if let Some(&t) = ids.iter().find(|&&t| t as usize >= c.vocab) {
            return Err(NetsError::TokenOutOfRange { token: t, vocab: c.vocab });
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, ids: &[u32]) -> Result<(Matrix, Cache)> {
        self.check_ids(ids)?;
        let c = &self.config;
        let (t_len, d, dk) = (ids.len(), c.d_model, c.d_k());
        let scale = 1.0 / (dk as f64).sqrt();
        let mut x = Matrix::from_fn(t_len, d, |t, j| self.tok_emb[(ids[t] as usize, j)] + self.pos_emb[(t, j)]);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (h1, ln1) = layer_norm(&x, &b.ln1_g, &b.ln1_b);
            let q = linear(&h1, &b.wq, None);
            let k = linear(&h1, &b.wk, None);
            let v = linear(&h1, &b.wv, None);
            let mut attn = Matrix::zeros(t_len, d);
            let mut probs = Vec::with_capacity(c.n_heads);
            for h in 0..c.n_heads {
                let off = h * dk;
                let mut p = Matrix::zeros(t_len, t_len);
                for t in 0..t_len {
                    let qr = &q.row(t)[off..off + dk];
                    let pr = &mut p.row_mut(t)[..=t];
                    for (s, ps) in pr.iter_mut().enumerate() {
                        *ps = dot(qr, &k.row(s)[off..off + dk]) * scale;
                    }
                    softmax_in_place(pr);
                    let pr = p.row(t)[..=t].to_vec();
                    let out = &mut attn.row_mut(t)[off..off + dk];
                    for (s, &ps) in pr.iter().enumerate() {
                        for (o, vv) in out.iter_mut().zip(&v.row(s)[off..off + dk]) {
                            *o += ps * vv;
                        }
                    }
                }
                probs.push(p);
            }
            add_into(&mut x, &attn.matmul_nt(&b.wo));
            let (h2, ln2) = layer_norm(&x, &b.ln2_g, &b.ln2_b);
            let u = linear(&h2, &b.w_up, Some(&b.b_up));
            let gate = match c.ffn_kind {
                FfnKind::Plain => None,
                FfnKind::Glu => Some(linear(
                    &h2,
                    b.w_gate.as_ref().expect("gated block"),
                    b.b_gate.as_deref(),
                )),
            };
            let mut m = Matrix::from_vec(t_len, c.d_ff, u.as_slice().iter().map(|&z| gelu(z)).collect());
            if let Some(g) = &gate {
                for (a, gg) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a *= gg;
                }
            }
            add_into(&mut x, &m.matmul_nt(&b.w_down));
            caches.push(BlockCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                h2,
                u,
                gate,
                m,
            });
        }
        let (hf, lnf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let logits = hf.matmul_nt(&self.lm_head);
        Ok((
            logits,
            Cache {
                ids: ids.to_vec(),
                blocks: caches,
                lnf,
                hf,
            },
        ))
    }

    /// Logits `[len, vocab]` for one window of at most `context` tokens.
    pub fn logits(&self, ids: &[u32]) -> Result<Matrix> {
        Ok(self.forward_cached(ids)?.0)
    }

    /// Accumulates parameter gradients for upstream `dlogits` into `grads`.
    pub(crate) fn backward(&self, cache: &Cache, dlogits: &Matrix, grads: &mut Transformer) {
        let c = &self.config;
        let t_len = cache.ids.len();
        let dk = c.d_k();
        let scale = 1.0 / (dk as f64).sqrt();
        add_into(&mut grads.lm_head, &dlogits.matmul_tn(&cache.hf));
        let dhf = dlogits.matmul(&self.lm_head);
        let mut dx = layer_norm_back(&dhf, &cache.lnf, &self.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);
        for (bi, (b, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let g = &mut grads.blocks[bi];
            // feed-forward
            add_into(&mut g.w_down, &dx.matmul_tn(&bc.m));
            let dm = dx.matmul(&b.w_down);
            let mut du = dm.clone();
            let mut dh2 = Matrix::zeros(t_len, c.d_model);
            if let Some(gate) = &bc.gate {
                let mut dgate = dm;
                for ((d, dg), (&z, &gv)) in du
                    .as_mut_slice()
                    .iter_mut()
                    .zip(dgate.as_mut_slice())
                    .zip(bc.u.as_slice().iter().zip(gate.as_slice()))
                {
                    *dg *= gelu(z);
                    *d *= gv * gelu_grad(z);
                }
                add_into(g.w_gate.as_mut().expect("gated"), &dgate.matmul_tn(&bc.h2));
                add_col_sums(g.b_gate.as_mut().expect("gated"), &dgate);
                dh2 = dgate.matmul(b.w_gate.as_ref().expect("gated"));
            } else {
                for (d, &z) in du.as_mut_slice().iter_mut().zip(bc.u.as_slice()) {
                    *d *= gelu_grad(z);
                }
            }
            add_into(&mut g.w_up, &du.matmul_tn(&bc.h2));
            add_col_sums(&mut g.b_up, &du);
            add_into(&mut dh2, &du.matmul(&b.w_up));
            add_into(&mut dx, &layer_norm_back(&dh2, &bc.ln2, &b.ln2_g, &mut g.ln2_g, &mut g.ln2_b));
            attention_back(b, bc, g, &mut dx, c.n_heads, dk, scale, t_len);
        }
        for t in 0..t_len {
            let id = cache.ids[t] as usize;
            for (a, v) in grads.tok_emb.row_mut(id).iter_mut().zip(dx.row(t)) {
                *a += v;
            }
            for (a, v) in grads.pos_emb.row_mut(t).iter_mut().zip(dx.row(t)) {
                *a += v;
            }
        }
    }
}

/// Backpropagates through `x + attn(LN₁(x))·W_Oᵀ`; `dx` enters as the
/// gradient at the residual output and leaves as the gradient at `x`.
#[allow(clippy::too_many_arguments)]
fn attention_back(
    b: &super::Block,
    bc: &BlockCache,
    g: &mut super::Block,
    dx: &mut Matrix,
    n_heads: usize,
    dk: usize,
    scale: f64,
    t_len: usize,
) {
    let d = dx.cols();
    add_into(&mut g.wo, &dx.matmul_tn(&bc.attn));
    let dattn = dx.matmul(&b.wo);
    let mut dq = Matrix::zeros(t_len, d);
    let mut dkm = Matrix::zeros(t_len, d);
    let mut dv = Matrix::zeros(t_len, d);
    let mut dp = vec![0.0; t_len];
    for h in 0..n_heads {
        let off = h * dk;
        let p = &bc.probs[h];
        for t in 0..t_len {
            let d_o = &dattn.row(t)[off..off + dk];
            let pr = &p.row(t)[..=t];
            for s in 0..=t {
                dp[s] = dot(d_o, &bc.v.row(s)[off..off + dk]);
                let w = pr[s];
                for (a, &o) in dv.row_mut(s)[off..off + dk].iter_mut().zip(d_o) {
                    *a += w * o;
                }
            }
            let mix: f64 = pr.iter().zip(&dp[..=t]).map(|(a, b)| a * b).sum();
            for s in 0..=t {
                let ds = pr[s] * (dp[s] - mix) * scale;
                if ds == 0.0 {
                    continue;
                }
                for (a, &kv) in dq.row_mut(t)[off..off + dk].iter_mut().zip(&bc.k.row(s)[off..off + dk]) {
                    *a += ds * kv;
                }
                for (a, &qv) in dkm.row_mut(s)[off..off + dk].iter_mut().zip(&bc.q.row(t)[off..off + dk]) {
                    *a += ds * qv;
                }
            }
        }
    }
    add_into(&mut g.wq, &dq.matmul_tn(&bc.h1));
    add_into(&mut g.wk, &dkm.matmul_tn(&bc.h1));
    add_into(&mut g.wv, &dv.matmul_tn(&bc.h1));
    let mut dh1 = dq.matmul(&b.wq);
    add_into(&mut dh1, &dkm.matmul(&b.wk));
    add_into(&mut dh1, &dv.matmul(&b.wv));
    let dln = layer_norm_back(&dh1, &bc.ln1, &b.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    add_into(dx, &dln);
}

fn check_targets(model: &Transformer, ids: &[u32], targets: &[u32]) -> Result<()> {
    if ids.len() != targets.len() {
        return Err(NetsError::Shape(format!("{} inputs vs {} targets", ids.len(), targets.len())));
    }
    model.check_ids(targets)
}

/// Mean next-token cross-entropy of `targets[t]` given `ids[..=t]`.
pub fn window_loss(model: &Transformer, ids: &[u32], targets: &[u32]) -> Result<f64> {
    check_targets(model, ids, targets)?;
    let logits = model.logits(ids)?;
    let s: f64 = (0..ids.len()).map(|t| log_softmax_at(logits.row(t), targets[t] as usize)).sum();
    Ok(-s / ids.len() as f64)
}

/// Adds `weight · ∇ window_loss` into `grads` and returns the loss.
pub fn window_gradients(
    model: &Transformer,
    ids: &[u32],
    targets: &[u32],
    weight: f64,
    grads: &mut Transformer,
) -> Result<f64> {
    check_targets(model, ids, targets)?;
    let (mut logits, cache) = model.forward_cached(ids)?;
    let n = ids.len() as f64;
    let mut loss = 0.0;
    for t in 0..ids.len() {
        let row = logits.row_mut(t);
        let y = targets[t] as usize;
        loss -= log_softmax_at(row, y);
        softmax_in_place(row);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= weight / n);
    }
    model.backward(&cache, &logits, grads);
    Ok(loss / n)
}

/// Logits `[len, vocab]` of a model loaded from `weights`.
pub fn transformer_forward(config: &TransformerConfig, weights: &TensorMap, tokens: &TokenStream) -> Result<Matrix> {
    let model = Transformer::from_map(config, weights)?;
    model.logits(tokens.tokens())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn single_position_attention_is_value_then_output() {
        let cfg = TransformerConfig {
            vocab: 3,
            d_model: 2,
            n_heads: 1,
            n_blocks: 1,
            d_ff: 2,
            ffn_kind: FfnKind::Plain,
            context: 1,
            seed: 0,
        };
        let mut m = Transformer::init(&cfg).unwrap();
        m.tok_emb = Matrix::from_vec(3, 2, vec![0.0, 0.0, 3.0, -1.0, 0.0, 0.0]);
        m.pos_emb = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let b = &mut m.blocks[0];
        b.ln1_g = vec![2.0, 0.5];
        b.ln1_b = vec![0.25, -1.0];
        b.wv = Matrix::from_vec(2, 2, vec![1.0, 2.0, -0.5, 3.0]);
        b.wo = Matrix::from_vec(2, 2, vec![0.0, 1.0, 4.0, -2.0]);
        let (_, cache) = m.forward_cached(&[1]).unwrap();

        // x = (3, -1): mean 1, variance 4, so x̂ = (1, -1)·2/sqrt(4 + eps)
        let s = 2.0 / (4.0 + LN_EPS).sqrt();
        let h = [2.0 * s + 0.25, -0.5 * s - 1.0];
        let v = [h[0] + 2.0 * h[1], -0.5 * h[0] + 3.0 * h[1]];
        let att = [v[1], 4.0 * v[0] - 2.0 * v[1]];
        let c = &cache.blocks[0];
        for j in 0..2 {
            assert!((c.h1[(0, j)] - h[j]).abs() < 1e-14);
            assert!((c.attn[(0, j)] - v[j]).abs() < 1e-14);
        }
        let projected = c.attn.matmul_nt(&m.blocks[0].wo);
        for j in 0..2 {
            assert!((projected[(0, j)] - att[j]).abs() < 1e-13);
        }
        assert_eq!(c.probs[0][(0, 0)], 1.0);
    }
}
