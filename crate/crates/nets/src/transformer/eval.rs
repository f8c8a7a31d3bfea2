use svlens_core::tensorstore::TokenStream;

use super::Transformer;
use crate::{argmax, log_softmax_at, EvalResult, Metric, NetsError, Result};

/// One evaluation window: inputs `tokens[start..start + width]`, scoring the
/// targets from `first_target` through `start + width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub width: usize,
    pub first_target: usize,
}

/// Sliding windows of at most `context` inputs with stride `context/2`
/// (at least 1). Every target `1..len` is scored exactly once, and after the
/// first window each target sees at least `context/2` tokens of history.
pub fn scored_windows(len: usize, context: usize) -> Vec<Window> {
    let mut out = Vec::new();
    if len < 2 || context == 0 {
        return out;
    }
    let stride = (context / 2).max(1);
    let mut next = 1;
    let mut start = 0;
    loop {
        let width = context.min(len - 1 - start);
        let end = start + width;
        if next <= end {
            out.push(Window {
                start,
                width,
                first_target: next.max(start + 1),
            });
            next = end + 1;
        }
        if end + 1 >= len {
            break;
        }
        start += stride;
    }
    out
}

fn for_each_prediction(
    model: &Transformer,
    tokens: &TokenStream,
    mut f: impl FnMut(&[f64], usize),
) -> Result<usize> {
    let ids = tokens.tokens();
    if ids.len() < 2 {
        return Err(NetsError::Empty("need at least 2 tokens to evaluate".into()));
    }
    let mut n = 0;
    for w in scored_windows(ids.len(), model.config.context) {
        let logits = model.logits(&ids[w.start..w.start + w.width])?;
        for t in w.first_target..=w.start + w.width {
            f(logits.row(t - w.start - 1), ids[t] as usize);
            n += 1;
        }
    }
    Ok(n)
}

/// Summed negative log-likelihood and number of scored targets.
pub fn window_nll(model: &Transformer, tokens: &TokenStream) -> Result<(f64, usize)> {
    let mut nll = 0.0;
    let n = for_each_prediction(model, tokens, |row, y| nll -= log_softmax_at(row, y))?;
    Ok((nll, n))
}

/// `exp` of the mean next-token negative log-likelihood over targets `2..=L`.
pub fn perplexity(model: &Transformer, tokens: &TokenStream) -> Result<EvalResult> {
    let (nll, n) = window_nll(model, tokens)?;
    Ok(EvalResult {
        metric: Metric::Perplexity((nll / n as f64).exp()),
        n_items: n,
    })
}

/// Share of targets equal to the argmax logit (lowest index on ties).
pub fn next_token_accuracy(model: &Transformer, tokens: &TokenStream) -> Result<EvalResult> {
    let mut hits = 0usize;
    let n = for_each_prediction(model, tokens, |row, y| hits += usize::from(argmax(row) == y))?;
    Ok(EvalResult {
        metric: Metric::Accuracy(hits as f64 / n as f64),
        n_items: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_every_target_once() {
        for len in [2, 3, 10, 33, 34, 100] {
            for context in [1, 2, 5, 8, 32] {
                let mut seen = Vec::new();
                for w in scored_windows(len, context) {
                    assert!(w.width <= context && w.width >= 1);
                    assert!(w.first_target > w.start);
                    seen.extend(w.first_target..=w.start + w.width);
                }
                assert_eq!(seen, (1..len).collect::<Vec<_>>(), "len {len} context {context}");
            }
        }
        assert!(scored_windows(1, 4).is_empty());
    }
}
