//! Encoder, residual quantizer, and decoder.

mod kmeans;
mod losses;
mod quantize;

pub use kmeans::{init_codebooks, kmeans, KMEANS_ITERATIONS};
pub use losses::{reconstruction_grad, reconstruction_loss, rq_loss, RqLoss};
pub use quantize::{quantize, quantize_one, quantized_matrix, Codebook, SemanticId};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Mlp, Parameter, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub d_in: usize,
    /// Latent (codeword) dimension.
    pub d: usize,
    /// Number of residual layers, i.e. SID length.
    pub layers: usize,
    pub codebook_size: usize,
    pub beta_commit: f64,
    /// Re-initialize codes unused for this many steps; 0 disables.
    pub dead_code_steps: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            d_in: 768,
            d: 32,
            layers: 3,
            codebook_size: 256,
            beta_commit: 0.25,
            dead_code_steps: 0,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("tokenizer.layers must be >= 1".into()));
        }
        if self.codebook_size < 2 {
            return Err(Error::Config("tokenizer.codebook_size must be >= 2".into()));
        }
        if self.d < 1 || self.d_in < 1 {
            return Err(Error::Config("tokenizer dimensions must be >= 1".into()));
        }
        if !(self.beta_commit >= 0.0 && self.beta_commit.is_finite()) {
            return Err(Error::Config("tokenizer.beta_commit must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Encoder, decoder and codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: TokenizerConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub codebooks: Vec<Codebook>,
}

impl ModelState {
    /// Fresh networks (`d_in -> 2d -> d` and `d -> 2d -> d_in`) with
    /// codebooks k-means-initialized from the encoded `corpus`.
    pub fn init(config: &TokenizerConfig, corpus: &Matrix, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let encoder = Mlp::init("encoder", [config.d_in, 2 * d, d], rng);
        let decoder = Mlp::init("decoder", [d, 2 * d, config.d_in], rng);
        let latents = encoder.apply(corpus)?;
        let codebooks = init_codebooks(&latents, config.layers, config.codebook_size, rng)?;
        Ok(Self {
            config: config.clone(),
            encoder,
            decoder,
            codebooks,
        })
    }

    pub fn encode(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.config.d_in {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects d_in = {}",
                features.cols(),
                self.config.d_in
            )));
        }
        let z = self.encoder.apply(features)?;
        z.ensure_finite("encoder output")?;
        Ok(z)
    }

    pub fn quantize(&self, z: &Matrix) -> Result<Vec<SemanticId>> {
        quantize(z, &self.codebooks)
    }

    pub fn decode(&self, quantized: &Matrix) -> Result<Matrix> {
        if quantized.cols() != self.config.d {
            return Err(Error::Dimension(format!(
                "quantized embeddings have {} columns, model expects d = {}",
                quantized.cols(),
                self.config.d
            )));
        }
        let x = self.decoder.apply(quantized)?;
        x.ensure_finite("decoder output")?;
        Ok(x)
    }

    /// Parameters in their fixed declaration order: encoder, decoder,
    /// then codebooks by layer.
    pub fn parameters(&self) -> Vec<&Parameter> {
        self.encoder
            .parameters()
            .chain(self.decoder.parameters())
            .chain(self.codebooks.iter().map(|c| &c.codewords))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.encoder
            .parameters_mut()
            .chain(self.decoder.parameters_mut())
            .chain(self.codebooks.iter_mut().map(|c| &mut c.codewords))
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model(seed: u64) -> (ModelState, Matrix) {
        let cfg = TokenizerConfig {
            d_in: 6,
            d: 3,
            layers: 2,
            codebook_size: 4,
            ..TokenizerConfig::default()
        };
        let mut rng = RngState::new(seed);
        let corpus = Matrix::from_vec(20, 6, (0..120).map(|_| rng.uniform() - 0.5).collect()).unwrap();
        (ModelState::init(&cfg, &corpus, &mut rng).unwrap(), corpus)
    }

    #[test]
    fn encode_decode_shapes_and_determinism() {
        let (model, corpus) = small_model(2);
        let z = model.encode(&corpus).unwrap();
        assert_eq!(z.shape(), (20, 3));
        let dup = corpus.select_rows(&[4, 4]);
        let zd = model.encode(&dup).unwrap();
        assert_eq!(zd.row(0), zd.row(1));
        let x = model.decode(&z).unwrap();
        assert_eq!(x.shape(), (20, 6));
        let zero = model.decode(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(zero.row(0), zero.row(1));
        assert!(zero.is_finite());
    }

    #[test]
    fn default_sized_encoder_width() {
        let cfg = TokenizerConfig::default();
        let mut rng = RngState::new(0);
        let enc = Mlp::init("encoder", [cfg.d_in, 2 * cfg.d, cfg.d], &mut rng);
        assert_eq!(enc.apply(&Matrix::zeros(1, 768)).unwrap().cols(), 32);
    }

    #[test]
    fn dimension_mismatch() {
        let (model, _) = small_model(3);
        assert!(matches!(model.encode(&Matrix::zeros(1, 5)), Err(Error::Dimension(_))));
        assert!(matches!(model.decode(&Matrix::zeros(1, 4)), Err(Error::Dimension(_))));
    }

    #[test]
    fn config_invariants() {
        let bad = TokenizerConfig {
            codebook_size: 1,
            ..TokenizerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TokenizerConfig {
            layers: 0,
            ..TokenizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
