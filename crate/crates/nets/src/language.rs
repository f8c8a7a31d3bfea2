//! Synthetic languages for next-token training: segments of a second-order
//! recurrence `x_t = (a·x_{t−1} + b·x_{t−2} + c) mod V` started from a random
//! pair, with an optional per-token corruption probability. Within a segment
//! every token after the first two is determined by its two predecessors, so
//! the sequences are eventually periodic.

use serde::{Deserialize, Serialize};
use svlens_core::linalg::GaussianRng;
use svlens_core::tensorstore::TokenStream;

use crate::{NetsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLanguage {
    pub vocab: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub segment_len: usize,
    /// Probability of replacing a token by a uniform draw.
    pub noise: f64,
}

impl SyntheticLanguage {
    /// Pretraining task: Fibonacci-like recurrence.
    pub fn task_a(vocab: usize) -> Self {
        Self {
            vocab,
            a: 1,
            b: 1,
            c: 0,
            segment_len: 64,
            noise: 0.0,
        }
    }

    /// Fine-tuning task: same order and vocabulary, different coefficients.
    pub fn task_b(vocab: usize) -> Self {
        Self {
            vocab,
            a: 1,
            b: 2,
            c: 3,
            segment_len: 64,
            noise: 0.0,
        }
    }

    pub fn next(&self, prev2: u32, prev1: u32) -> u32 {
        ((self.a * prev1 as usize + self.b * prev2 as usize + self.c) % self.vocab) as u32
    }

    pub fn generate(&self, len: usize, seed: u64) -> Result<TokenStream> {
        if self.vocab < 2 || self.segment_len < 3 {
            return Err(NetsError::InvalidConfig("language needs vocab >= 2 and segment_len >= 3".into()));
        }
        let mut rng = GaussianRng::new(seed);
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let mut x2 = rng.below(self.vocab) as u32;
            let mut x1 = rng.below(self.vocab) as u32;
            out.push(x2);
            out.push(x1);
            for _ in 2..self.segment_len {
                let mut t = self.next(x2, x1);
                if self.noise > 0.0 && rng.uniform() < self.noise {
                    t = rng.below(self.vocab) as u32;
                }
                out.push(t);
                x2 = x1;
                x1 = t;
            }
        }
        out.truncate(len);
        Ok(TokenStream::new(self.vocab as u32, out)?)
    }

    /// Share of tokens determined by their two predecessors under the rule,
    /// i.e. the best achievable next-token accuracy without noise (up to
    /// chance hits at segment starts).
    pub fn determined_fraction(&self) -> f64 {
        (self.segment_len - 2) as f64 / self.segment_len as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn follows_recurrence_within_segments() {
        let lang = SyntheticLanguage::task_a(16);
        let s = lang.generate(200, 3).unwrap();
        let t = s.tokens();
        assert_eq!(t.len(), 200);
        for i in 0..200 {
            if i % 64 >= 2 {
                assert_eq!(t[i], lang.next(t[i - 2], t[i - 1]));
            }
        }
        assert_eq!(lang.generate(200, 3).unwrap(), s);
        assert_ne!(SyntheticLanguage::task_b(16).generate(200, 3).unwrap(), s);
    }
}
