//! In-batch SID overlap regulation.
//!
//! Pairs of batch items whose semantic IDs agree on at least one layer are
//! collected, and each pair receives a hinge repulsion on the cosine distance
//! of their encoder outputs. Two adaptive stages modulate that repulsion:
//! a depth-aware semantic gate that waives it for sufficiently similar
//! pairs, and a load-dependent scale that strengthens it for signatures that
//! recur often within the batch.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cosine_with_grad, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegulationConfig {
    /// Similarity threshold per overlap depth; must be nondecreasing.
    pub eta: Vec<f64>,
    pub f_max: f64,
    pub d_max: u32,
    pub alpha: f64,
    pub m_base: f64,
    pub exclude_positive_pairs: bool,
}

impl Default for RegulationConfig {
    fn default() -> Self {
        Self {
            eta: vec![0.18, 0.24, 0.30],
            f_max: 2.0,
            d_max: 8,
            alpha: 1.0,
            m_base: 0.5,
            exclude_positive_pairs: true,
        }
    }
}

impl RegulationConfig {
    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.eta.len() != layers {
            return Err(Error::Config(format!(
                "regulation.eta has {} entries, expected one per layer ({layers})",
                self.eta.len()
            )));
        }
        if self.eta.windows(2).any(|w| w[0] > w[1]) || self.eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("regulation.eta must be finite and nondecreasing".into()));
        }
        if !(self.f_max >= 1.0 && self.f_max.is_finite()) {
            return Err(Error::Config("regulation.f_max must be >= 1".into()));
        }
        if self.d_max == 0 {
            return Err(Error::Config("regulation.d_max must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("regulation.alpha must be positive".into()));
        }
        if !(self.m_base > 0.0 && self.m_base <= 1.0) {
            return Err(Error::Config("regulation.m_base must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Layer-wise agreement pattern between two SIDs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub Vec<bool>);

impl Signature {
    pub fn depth(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRecord {
    pub i: usize,
    pub j: usize,
    pub depth: usize,
    pub signature: Signature,
    pub load: usize,
    pub scale: f64,
    pub similarity: f64,
    pub gate: bool,
    pub margin: f64,
    pub penalty: f64,
}

impl OverlapRecord {
    /// Coefficient in front of the hinge: `a * (1 - g)`.
    pub fn weight(&self) -> f64 {
        if self.gate {
            0.0
        } else {
            self.scale
        }
    }
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "semantic ids of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn overlap_depth(a: &[usize], b: &[usize]) -> Result<usize> {
    check_lengths(a, b)?;
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count())
}

pub fn collision_signature(a: &[usize], b: &[usize]) -> Result<Signature> {
    check_lengths(a, b)?;
    Ok(Signature(a.iter().zip(b).map(|(x, y)| x == y).collect()))
}

/// All unordered pairs `i < j` with nonzero overlap depth. Pairs listed in
/// `positives` (in either orientation) are skipped when `exclude_positives`
/// is set.
pub fn collect_overlap_pairs<S: AsRef<[usize]>>(
    sids: &[S],
    positives: &HashSet<(usize, usize)>,
    exclude_positives: bool,
) -> Result<Vec<OverlapRecord>> {
    let mut out = Vec::new();
    for i in 0..sids.len() {
        for j in i + 1..sids.len() {
            if exclude_positives && (positives.contains(&(i, j)) || positives.contains(&(j, i))) {
                continue;
            }
            let signature = collision_signature(sids[i].as_ref(), sids[j].as_ref())?;
            let depth = signature.depth();
            if depth == 0 {
                continue;
            }
            out.push(OverlapRecord {
                i,
                j,
                depth,
                signature,
                load: 1,
                scale: 1.0,
                similarity: 0.0,
                gate: false,
                margin: 0.0,
                penalty: 0.0,
            });
        }
    }
    Ok(out)
}

pub fn semantic_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    cosine_with_grad(a, b)
        .map(|(c, _, _)| c)
        .ok_or_else(|| Error::Numeric("cosine similarity of a zero-norm vector".into()))
}

/// `1` iff `similarity >= eta[depth - 1]`.
pub fn relaxation_gate(similarity: f64, depth: usize, eta: &[f64]) -> Result<bool> {
    if depth == 0 || depth > eta.len() {
        return Err(Error::Dimension(format!(
            "overlap depth {depth} outside 1..={}",
            eta.len()
        )));
    }
    Ok(similarity >= eta[depth - 1])
}

/// Fills `load` with the number of records sharing each record's signature.
pub fn collision_loads(records: &mut [OverlapRecord]) {
    let mut counts: HashMap<&Signature, usize> = HashMap::new();
    for r in records.iter() {
        *counts.entry(&r.signature).or_default() += 1;
    }
    let loads: Vec<usize> = records.iter().map(|r| counts[&r.signature]).collect();
    for (r, load) in records.iter_mut().zip(loads) {
        r.load = load;
    }
}

/// `1 + (f_max - 1) * (min(load, d_max) / d_max)^alpha`
pub fn load_scale(load: usize, config: &RegulationConfig) -> f64 {
    let d_max = f64::from(config.d_max);
    let frac = (load as f64).min(d_max) / d_max;
    1.0 + (config.f_max - 1.0) * frac.powf(config.alpha)
}

/// `m_base * depth / layers`
pub fn margin(depth: usize, m_base: f64, layers: usize) -> Result<f64> {
    if depth == 0 || depth > layers {
        return Err(Error::Dimension(format!("overlap depth {depth} outside 1..={layers}")));
    }
    Ok(m_base * depth as f64 / layers as f64)
}

/// Which adaptive stages are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub relaxation: bool,
    pub load_scaling: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            relaxation: true,
            load_scaling: true,
        }
    }
}

/// Builds fully populated overlap records for one batch. Similarities use
/// the encoder outputs `z`; gates and scales are plain numbers, not part of
/// the differentiated graph.
pub fn build_records<S: AsRef<[usize]>>(
    z: &Matrix,
    sids: &[S],
    positives: &HashSet<(usize, usize)>,
    config: &RegulationConfig,
    stages: Stages,
) -> Result<Vec<OverlapRecord>> {
    if z.rows() != sids.len() {
        return Err(Error::Dimension(format!(
            "{} latents for {} semantic ids",
            z.rows(),
            sids.len()
        )));
    }
    let layers = config.eta.len();
    let mut records = collect_overlap_pairs(sids, positives, config.exclude_positive_pairs)?;
    collision_loads(&mut records);
    for r in &mut records {
        r.similarity = semantic_similarity(z.row(r.i), z.row(r.j))?;
        r.gate = stages.relaxation && relaxation_gate(r.similarity, r.depth, &config.eta)?;
        r.scale = if stages.load_scaling {
            load_scale(r.load, config)
        } else {
            1.0
        };
        r.margin = margin(r.depth, config.m_base, layers)?;
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct CollisionLoss {
    pub value: f64,
    pub grad_latent: Matrix,
    /// Records with a nonzero contribution.
    pub active: usize,
    pub gated: usize,
}

/// `sum_r a_r * (1 - g_r) * max(0, m_r - (1 - cos(z_i, z_j)))`, with the
/// gradient with respect to `z`. Writes each record's unweighted hinge into
/// `penalty`.
pub fn adaptive_collision_loss(z: &Matrix, records: &mut [OverlapRecord]) -> Result<CollisionLoss> {
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    let mut value = 0.0;
    let mut active = 0;
    let mut gated = 0;
    for r in records.iter_mut() {
        let (cos, gi, gj) = cosine_with_grad(z.row(r.i), z.row(r.j))
            .ok_or_else(|| Error::Numeric(format!("zero-norm latent in pair ({}, {})", r.i, r.j)))?;
        let hinge = (r.margin - (1.0 - cos)).max(0.0);
        r.penalty = hinge;
        if r.gate {
            gated += 1;
        }
        let w = r.weight();
        if w == 0.0 || hinge == 0.0 {
            continue;
        }
        active += 1;
        value += w * hinge;
        for (g, v) in grad.row_mut(r.i).iter_mut().zip(&gi) {
            *g += w * v;
        }
        for (g, v) in grad.row_mut(r.j).iter_mut().zip(&gj) {
            *g += w * v;
        }
    }
    Ok(CollisionLoss {
        value,
        grad_latent: grad,
        active,
        gated,
    })
}
