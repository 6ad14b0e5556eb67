//! Joint training of encoder, quantizer and decoder under the full
//! objective `rec + rq + lambda_col * col_ada + lambda_cf * cf`.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{TrainConfig, STATIC_PROGRESS};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::collaborative::{infonce_loss, PairBatch};
use crate::data::{batch_iter, batch_rows, ItemFeatureTable, PairList};
use crate::error::{Error, Result};
use crate::numeric::{adam_step, Matrix, RngState};
use crate::overlap::{adaptive_collision_loss, build_records, OverlapRecord, Stages};
use crate::schedule::{objective_weights, progress, ObjectiveWeights};
use crate::sid_table::SidTable;
use crate::tokenizer::{quantized_matrix, reconstruction_grad, reconstruction_loss, rq_loss, ModelState, SemanticId};

/// Per-step loss components, one line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: u64,
    pub rec: f64,
    pub rq: f64,
    pub col_ada: f64,
    pub cf: f64,
    pub lambda_col: f64,
    pub lambda_cf: f64,
    pub total: f64,
    pub overlap_pairs: usize,
    pub active_pairs: usize,
    pub gated_pairs: usize,
    pub max_scale: f64,
}

impl LossBreakdown {
    pub fn recomputed_total(&self) -> f64 {
        self.rec + self.rq + self.lambda_col * self.col_ada + self.lambda_cf * self.cf
    }
}

/// Everything the forward pass decided for one batch. Exposed so that
/// callers can re-evaluate the objective with these decisions frozen.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub features: Matrix,
    pub layout: PairBatch,
    pub latents: Matrix,
    pub sids: Vec<SemanticId>,
    pub records: Vec<OverlapRecord>,
    pub weights: ObjectiveWeights,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: ModelState,
    step: u64,
    rng: RngState,
    last_used: Vec<Vec<u64>>,
}

impl Trainer {
    /// Builds the networks and k-means-initializes the codebooks from the
    /// encoded corpus.
    pub fn new(config: TrainConfig, corpus: &Matrix) -> Result<Self> {
        config.validate()?;
        let mut rng = RngState::new(config.seed);
        let model = ModelState::init(&config.tokenizer, corpus, &mut rng)?;
        Ok(Self::from_parts(config, model, 0, rng))
    }

    pub fn from_parts(config: TrainConfig, model: ModelState, step: u64, rng: RngState) -> Self {
        let k = config.tokenizer.codebook_size;
        let last_used = vec![vec![step; k]; config.tokenizer.layers];
        Self {
            config,
            model,
            step,
            rng,
            last_used,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rng(&self) -> &RngState {
        &self.rng
    }

    pub fn weights_at(&self, t: u64) -> Result<ObjectiveWeights> {
        let tau = if self.config.enable_par {
            progress(t, &self.config.schedule)?
        } else {
            STATIC_PROGRESS
        };
        objective_weights(tau, &self.config.schedule)
    }

    /// Forward pass plus gradient accumulation into every parameter, with
    /// no optimizer update. Gradients are zeroed first.
    pub fn forward_backward(
        &mut self,
        features: &Matrix,
        layout: &PairBatch,
        t: u64,
    ) -> Result<(LossBreakdown, StepTrace)> {
        let cfg = &self.config;
        let weights = self.weights_at(t)?;
        let model = &mut self.model;
        model.zero_grad();

        let z = model.encoder.forward(features)?;
        z.ensure_finite("encoder output")?;
        let sids = crate::tokenizer::quantize(&z, &model.codebooks)?;
        let z_hat = quantized_matrix(&sids);
        let x_rec = model.decoder.forward(&z_hat)?;
        let rec = reconstruction_loss(features, &x_rec)?;
        let mut grad_z_hat = model.decoder.backward(&reconstruction_grad(features, &x_rec)?)?;

        let rq = rq_loss(&sids, &model.codebooks, cfg.tokenizer.beta_commit)?;

        let positives: HashSet<(usize, usize)> = layout
            .triggers
            .iter()
            .copied()
            .zip(layout.targets.iter().copied())
            .collect();
        let codes: Vec<&[usize]> = sids.iter().map(|s| s.indices.as_slice()).collect();
        let stages = Stages {
            relaxation: cfg.enable_sear,
            load_scaling: cfg.enable_las,
        };
        let mut records = build_records(&z, &codes, &positives, &cfg.regulation, stages)?;
        let col = adaptive_collision_loss(&z, &mut records)?;

        let tr = z_hat.select_rows(&layout.triggers);
        let ta = z_hat.select_rows(&layout.targets);
        let cf = infonce_loss(&tr, &ta, cfg.temperature)?;
        for (k, (&ri, &rj)) in layout.triggers.iter().zip(&layout.targets).enumerate() {
            for (g, v) in grad_z_hat.row_mut(ri).iter_mut().zip(cf.grad_triggers.row(k)) {
                *g += weights.lambda_cf * v;
            }
            for (g, v) in grad_z_hat.row_mut(rj).iter_mut().zip(cf.grad_targets.row(k)) {
                *g += weights.lambda_cf * v;
            }
        }

        // straight-through: the quantized embedding's gradient lands on z
        let mut grad_z = grad_z_hat;
        grad_z.add_assign(&rq.grad_latent)?;
        let mut col_grad = col.grad_latent.clone();
        col_grad.scale(weights.lambda_col);
        grad_z.add_assign(&col_grad)?;
        model.encoder.backward(&grad_z)?;
        for (cb, g) in model.codebooks.iter_mut().zip(&rq.grad_codebooks) {
            cb.codewords.gradient.add_assign(g)?;
        }

        let breakdown = LossBreakdown {
            step: t,
            rec,
            rq: rq.value,
            col_ada: col.value,
            cf: cf.value,
            lambda_col: weights.lambda_col,
            lambda_cf: weights.lambda_cf,
            total: rec + rq.value + weights.lambda_col * col.value + weights.lambda_cf * cf.value,
            overlap_pairs: records.len(),
            active_pairs: col.active,
            gated_pairs: col.gated,
            max_scale: records.iter().map(|r| r.scale).fold(1.0, f64::max),
        };
        for (v, name) in [
            (breakdown.total, "total loss"),
            (rec, "reconstruction loss"),
            (cf.value, "collaborative loss"),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite {name}")));
            }
        }
        let trace = StepTrace {
            features: features.clone(),
            layout: layout.clone(),
            latents: z,
            sids,
            records,
            weights,
        };
        Ok((breakdown, trace))
    }

    /// One optimizer step on a batch of `(trigger, target)` item rows.
    pub fn train_step(&mut self, table: &ItemFeatureTable, batch: &[(usize, usize)]) -> Result<LossBreakdown> {
        let t = self.step;
        let (rows, layout) = batch_rows(batch);
        let features = table.features.select_rows(&rows);
        let run = |this: &mut Self| -> Result<LossBreakdown> {
            let (breakdown, trace) = this.forward_backward(&features, &layout, t)?;
            adam_step(this.model.parameters_mut(), &this.config.optimizer, t + 1)?;
            this.refresh_dead_codes(&trace, t)?;
            Ok(breakdown)
        };
        let out = run(self).map_err(|e| e.at_step(t))?;
        self.step += 1;
        Ok(out)
    }

    fn refresh_dead_codes(&mut self, trace: &StepTrace, t: u64) -> Result<()> {
        let patience = self.config.tokenizer.dead_code_steps;
        if patience == 0 {
            return Ok(());
        }
        for sid in &trace.sids {
            for (l, &k) in sid.indices.iter().enumerate() {
                self.last_used[l][k] = t;
            }
        }
        for l in 0..self.model.codebooks.len() {
            for k in 0..self.config.tokenizer.codebook_size {
                if t.saturating_sub(self.last_used[l][k]) < patience {
                    continue;
                }
                let pick = self.rng.below(trace.sids.len());
                let source = trace.sids[pick].residuals[l].clone();
                let p = &mut self.model.codebooks[l].codewords;
                p.value.row_mut(k).copy_from_slice(&source);
                p.moment1.row_mut(k).fill(0.0);
                p.moment2.row_mut(k).fill(0.0);
                self.last_used[l][k] = t;
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.model, self.step, &self.rng)
    }
}

/// Runs `config.total_steps` optimizer steps with a seeded batch order and
/// hands every step's breakdown to `log`.
pub fn train<F>(config: &TrainConfig, table: &ItemFeatureTable, pairs: &PairList, mut log: F) -> Result<Checkpoint>
where
    F: FnMut(&LossBreakdown) -> Result<()>,
{
    config.validate()?;
    if table.dim() != config.tokenizer.d_in {
        return Err(Error::Dimension(format!(
            "features have dimension {}, config expects d_in = {}",
            table.dim(),
            config.tokenizer.d_in
        )));
    }
    let mut trainer = Trainer::new(config.clone(), &table.features)?;
    let mut epoch = 0u64;
    let mut batches = Vec::new().into_iter();
    while trainer.step() < config.total_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                let next = batch_iter(pairs, config.batch_size, config.seed, epoch);
                if next.is_empty() {
                    return Err(Error::Data(format!(
                        "{} pairs cannot fill a batch of at least 2",
                        pairs.len()
                    )));
                }
                epoch += 1;
                batches = next.into_iter();
                continue;
            }
        };
        let breakdown = trainer.train_step(table, &batch)?;
        log(&breakdown)?;
    }
    Ok(trainer.checkpoint())
}

/// SIDs for every item under a frozen model.
pub fn encode_corpus(model: &ModelState, table: &ItemFeatureTable) -> Result<SidTable> {
    let z = model.encode(&table.features)?;
    let sids = model.quantize(&z)?;
    SidTable::new(table.ids.clone(), sids.into_iter().map(|s| s.indices).collect())
}
