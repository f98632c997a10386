use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedItem, EmbeddingBackend, EmbeddingError};

/// Texts containing `keyword` (case-insensitive) belong to `family`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRule {
    pub keyword: String,
    pub family: String,
}

/// Deterministic stand-in for a sentence encoder.
///
/// Every text hashes to a point on the unit sphere. Texts matched by a
/// [`FamilyRule`] are placed around their family's own hashed direction,
/// displaced by `spread` times the text's hashed direction, so synthetic
/// corpora get tight, well-separated intent families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub spread: f64,
    pub families: Vec<FamilyRule>,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder {
            dim,
            seed,
            spread: 0.0,
            families: Vec::new(),
        }
    }

    pub fn with_families(mut self, families: Vec<FamilyRule>, spread: f64) -> Self {
        self.families = families;
        self.spread = spread;
        self
    }

    fn hashed_direction(&self, key: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = super::norm(&v);
            if n > 0.0 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    pub fn family_of(&self, text: &str) -> Option<&str> {
        let lower = text.to_lowercase();
        self.families
            .iter()
            .find(|r| lower.contains(&r.keyword.to_lowercase()))
            .map(|r| r.family.as_str())
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let own = self.hashed_direction(&format!("text:{text}"));
        let v = match self.family_of(text) {
            Some(family) => {
                let center = self.hashed_direction(&format!("family:{family}"));
                center.iter().zip(&own).map(|(c, o)| c + self.spread * o).collect()
            }
            None => own,
        };
        let n = super::norm(&v);
        v.into_iter().map(|x| (x / n) as f32).collect()
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn id(&self) -> String {
        format!(
            "mock:dim={},seed={},spread={},families={}",
            self.dim,
            self.seed,
            self.spread,
            self.families.len()
        )
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::Format("mock dimension must be positive".into()));
        }
        Ok(items.iter().map(|i| self.embed_text(i.text)).collect())
    }
}
