use sha2::{Digest, Sha256};

use super::ProviderError;

pub const DEFAULT_EMBED_DIM: usize = 8;

/// Scales `v` to unit length. Zero vectors are returned unchanged.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Deterministic bag-of-words embedding by feature hashing.
///
/// Each lowercase alphanumeric token adds a signed, hash-derived weight to
/// every dimension, so texts sharing words point in similar directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBED_DIM }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    fn features(&self, token: &str, out: &mut [f64]) {
        let mut counter = 0u32;
        let mut filled = 0;
        while filled < out.len() {
            let mut h = Sha256::new();
            h.update(token.as_bytes());
            h.update(counter.to_le_bytes());
            for pair in h.finalize().chunks(2) {
                if filled == out.len() {
                    break;
                }
                let v = u16::from_le_bytes([pair[0], pair[1]]) as f64 / u16::MAX as f64;
                out[filled] += 2.0 * v - 1.0;
                filled += 1;
            }
            counter += 1;
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            self.features(&lower, &mut v);
        }
        for t in tokens {
            self.features(t, &mut v);
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        normalize(v)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest("nothing to embed".into()));
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_distinct() {
        let e = HashEmbedder::default();
        assert_eq!(e.embed_one("a"), e.embed_one("a"));
        assert_ne!(e.embed_one("a"), e.embed_one("b"));
        assert_eq!(e.embed_one("a").len(), 8);
        assert!(e.embed(&[]).is_err());
    }

    #[test]
    fn shared_words_are_closer() {
        let e = HashEmbedder::new(64);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let q = e.embed_one("chop the tree with the axe");
        let near = e.embed_one("use the axe on a tree");
        let far = e.embed_one("open the water menu");
        assert!(dot(&q, &near) > dot(&q, &far));
    }

    proptest! {
        #[test]
        fn unit_norm(text in ".{0,40}") {
            let v = HashEmbedder::default().embed_one(&text);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-6);
        }
    }
}
