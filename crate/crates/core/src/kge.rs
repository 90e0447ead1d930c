//! Knowledge-graph embedding models, the self-adversarial negative sampling
//! loss, negative sampling, training and filtered ranking.
//!
//! RotatE stores each entity as `d` complex numbers interleaved `(re, im)`
//! and each relation as `d` phases; the relation element is
//! `(cos θ, sin θ)`, so its modulus is one by construction. Scores are
//! negated distances: higher is more plausible.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::embed::EmbeddingTable;
use crate::error::{check_len, invalid, Error, Result};
use crate::kg::{EntityId, EntityKind, KnowledgeGraph, RelationId, Side, Triple};
use crate::math;
use crate::nn::Adam;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    RotatE,
    TransE,
    DistMult,
}

impl ModelKind {
    pub fn code(self) -> u32 {
        match self {
            Self::RotatE => 1,
            Self::TransE => 2,
            Self::DistMult => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            1 => Self::RotatE,
            2 => Self::TransE,
            3 => Self::DistMult,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RotatE => "rotate",
            Self::TransE => "transe",
            Self::DistMult => "distmult",
        }
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotate" => Ok(Self::RotatE),
            "transe" => Ok(Self::TransE),
            "distmult" => Ok(Self::DistMult),
            other => Err(invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// Distance norm for RotatE and TransE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgeModel {
    pub kind: ModelKind,
    pub norm: Norm,
    pub dim: usize,
    pub gamma: f64,
    pub entity_emb: Vec<f64>,
    pub relation_param: Vec<f64>,
}

pub fn entity_width(kind: ModelKind, dim: usize) -> usize {
    match kind {
        ModelKind::RotatE => 2 * dim,
        ModelKind::TransE | ModelKind::DistMult => dim,
    }
}

impl KgeModel {
    pub fn from_parts(
        kind: ModelKind,
        norm: Norm,
        dim: usize,
        gamma: f64,
        entity_emb: Vec<f64>,
        relation_param: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        let ew = entity_width(kind, dim);
        if !entity_emb.len().is_multiple_of(ew) || !relation_param.len().is_multiple_of(dim) {
            return Err(invalid("parameter buffers are not a whole number of rows"));
        }
        if entity_emb.iter().chain(&relation_param).any(|v| !v.is_finite()) || !gamma.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            kind,
            norm,
            dim,
            gamma,
            entity_emb,
            relation_param,
        })
    }

    pub fn entity_width(&self) -> usize {
        entity_width(self.kind, self.dim)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_emb.len() / self.entity_width()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_param.len() / self.dim
    }

    pub fn entity(&self, id: EntityId) -> Result<&[f64]> {
        let w = self.entity_width();
        self.entity_emb
            .get(id.index() * w..(id.index() + 1) * w)
            .ok_or(Error::IdOutOfRange(id.index()))
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Result<&mut [f64]> {
        let w = self.entity_width();
        self.entity_emb
            .get_mut(id.index() * w..(id.index() + 1) * w)
            .ok_or(Error::IdOutOfRange(id.index()))
    }

    pub fn relation(&self, id: RelationId) -> Result<&[f64]> {
        let d = self.dim;
        self.relation_param
            .get(id.index() * d..(id.index() + 1) * d)
            .ok_or(Error::IdOutOfRange(id.index()))
    }

    /// Replace one entity's embedding, e.g. to install a zero-shot vector.
    pub fn set_entity(&mut self, id: EntityId, emb: &[f64]) -> Result<()> {
        check_len(self.entity_width(), emb.len())?;
        if emb.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("entity embedding"));
        }
        self.entity_mut(id)?.copy_from_slice(emb);
        Ok(())
    }

    pub fn score(&self, head: EntityId, relation: RelationId, tail: EntityId) -> Result<f64> {
        self.score_vectors(self.entity(head)?, relation, self.entity(tail)?)
    }

    /// Score with an explicit head vector.
    pub fn score_vectors(&self, head: &[f64], relation: RelationId, tail: &[f64]) -> Result<f64> {
        check_len(self.entity_width(), head.len())?;
        check_len(self.entity_width(), tail.len())?;
        Ok(-distance(self.kind, self.norm, head, self.relation(relation)?, tail))
    }

    /// Scores of every candidate tail for a head vector.
    pub fn score_tails(&self, head: &[f64], relation: RelationId, candidates: &[EntityId]) -> Result<Vec<f64>> {
        check_len(self.entity_width(), head.len())?;
        let rel = Prepared::new(self.kind, self.relation(relation)?);
        candidates
            .iter()
            .map(|&c| Ok(-prepared_distance(self.kind, self.norm, head, &rel, self.entity(c)?)))
            .collect()
    }
}

/// Relation parameters ready for repeated scoring: rotation phases are
/// turned into (cos, sin) pairs once.
enum Prepared<'a> {
    Rotation(Vec<(f64, f64)>),
    Plain(&'a [f64]),
}

impl<'a> Prepared<'a> {
    fn new(kind: ModelKind, rel: &'a [f64]) -> Self {
        match kind {
            ModelKind::RotatE => Self::Rotation(rel.iter().map(|&t| (math::cos(t), math::sin(t))).collect()),
            _ => Self::Plain(rel),
        }
    }
}

fn rotate_into(trig: &[(f64, f64)], head: &[f64], out: &mut [f64]) {
    for (j, &(c, s)) in trig.iter().enumerate() {
        let (hr, hi) = (head[2 * j], head[2 * j + 1]);
        out[2 * j] = hr * c - hi * s;
        out[2 * j + 1] = hr * s + hi * c;
    }
}

fn residual_norm(norm: Norm, resid: impl Iterator<Item = f64>) -> f64 {
    match norm {
        Norm::L1 => resid.map(f64::abs).sum(),
        Norm::L2 => math::sqrt(resid.map(|x| x * x).sum()),
    }
}

fn prepared_distance(kind: ModelKind, norm: Norm, head: &[f64], rel: &Prepared<'_>, tail: &[f64]) -> f64 {
    match rel {
        Prepared::Rotation(trig) => residual_norm(
            norm,
            trig.iter().enumerate().flat_map(|(j, &(c, s))| {
                let (hr, hi) = (head[2 * j], head[2 * j + 1]);
                [hr * c - hi * s - tail[2 * j], hr * s + hi * c - tail[2 * j + 1]]
            }),
        ),
        Prepared::Plain(rel) => match kind {
            ModelKind::DistMult => -(0..rel.len()).map(|j| head[j] * rel[j] * tail[j]).sum::<f64>(),
            _ => residual_norm(norm, (0..rel.len()).map(|j| head[j] + rel[j] - tail[j])),
        },
    }
}

/// Distance (= negated score) between `head ∘ rel` and `tail`.
pub fn distance(kind: ModelKind, norm: Norm, head: &[f64], rel: &[f64], tail: &[f64]) -> f64 {
    prepared_distance(kind, norm, head, &Prepared::new(kind, rel), tail)
}

/// Accumulate `scale · ∂distance/∂(head, rel, tail)` into the given buffers.
#[allow(clippy::too_many_arguments)]
fn prepared_grad(
    kind: ModelKind,
    norm: Norm,
    head: &[f64],
    rel: &Prepared<'_>,
    tail: &[f64],
    scale: f64,
    g_head: &mut [f64],
    g_rel: &mut [f64],
    g_tail: &mut [f64],
) {
    match rel {
        Prepared::Rotation(trig) => {
            let d = trig.len();
            let mut rotated = vec![0.0; 2 * d];
            rotate_into(trig, head, &mut rotated);
            let resid: Vec<f64> = rotated.iter().zip(tail).map(|(r, t)| r - t).collect();
            let Some(unit) = residual_direction(norm, &resid) else {
                return;
            };
            for (j, &(c, s)) in trig.iter().enumerate() {
                let (gr, gi) = (scale * unit[2 * j], scale * unit[2 * j + 1]);
                g_head[2 * j] += c * gr + s * gi;
                g_head[2 * j + 1] += -s * gr + c * gi;
                g_tail[2 * j] -= gr;
                g_tail[2 * j + 1] -= gi;
                g_rel[j] += -gr * rotated[2 * j + 1] + gi * rotated[2 * j];
            }
        }
        Prepared::Plain(rel) if kind == ModelKind::DistMult => {
            for j in 0..rel.len() {
                g_head[j] -= scale * rel[j] * tail[j];
                g_rel[j] -= scale * head[j] * tail[j];
                g_tail[j] -= scale * head[j] * rel[j];
            }
        }
        Prepared::Plain(rel) => {
            let resid: Vec<f64> = (0..rel.len()).map(|j| head[j] + rel[j] - tail[j]).collect();
            let Some(unit) = residual_direction(norm, &resid) else {
                return;
            };
            for j in 0..rel.len() {
                let g = scale * unit[j];
                g_head[j] += g;
                g_rel[j] += g;
                g_tail[j] -= g;
            }
        }
    }
}

/// Gradient of the norm w.r.t. the residual; `None` at the origin.
fn residual_direction(norm: Norm, resid: &[f64]) -> Option<Vec<f64>> {
    match norm {
        Norm::L2 => {
            let n = math::norm(resid);
            (n > 0.0).then(|| resid.iter().map(|r| r / n).collect())
        }
        Norm::L1 => Some(resid.iter().map(|r| if *r > 0.0 { 1.0 } else if *r < 0.0 { -1.0 } else { 0.0 }).collect()),
    }
}

/// Dense gradient buffers shaped like a model.
#[derive(Clone, Debug, PartialEq)]
pub struct KgeGrads {
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl KgeGrads {
    pub fn zeros_like(model: &KgeModel) -> Self {
        Self {
            entity: vec![0.0; model.entity_emb.len()],
            relation: vec![0.0; model.relation_param.len()],
        }
    }

    fn clear(&mut self) {
        self.entity.iter_mut().for_each(|g| *g = 0.0);
        self.relation.iter_mut().for_each(|g| *g = 0.0);
    }
}

fn row_range(id: usize, width: usize) -> core::ops::Range<usize> {
    id * width..(id + 1) * width
}

fn accumulate_distance_grad(
    model: &KgeModel,
    t: &Triple,
    rel: &Prepared<'_>,
    scale: f64,
    grads: &mut KgeGrads,
) -> Result<()> {
    let ew = model.entity_width();
    let head = model.entity(t.head)?;
    let tail = model.entity(t.tail)?;
    let mut gh = vec![0.0; ew];
    let mut gt = vec![0.0; ew];
    let mut gr = vec![0.0; model.dim];
    prepared_grad(model.kind, model.norm, head, rel, tail, scale, &mut gh, &mut gr, &mut gt);
    for (a, g) in grads.entity[row_range(t.head.index(), ew)].iter_mut().zip(&gh) {
        *a += g;
    }
    for (a, g) in grads.entity[row_range(t.tail.index(), ew)].iter_mut().zip(&gt) {
        *a += g;
    }
    for (a, g) in grads.relation[row_range(t.relation.index(), model.dim)].iter_mut().zip(&gr) {
        *a += g;
    }
    Ok(())
}

fn triple_distance(model: &KgeModel, t: &Triple, rel: &Prepared<'_>) -> Result<f64> {
    Ok(prepared_distance(
        model.kind,
        model.norm,
        model.entity(t.head)?,
        rel,
        model.entity(t.tail)?,
    ))
}

/// Self-adversarial weights `softmax(α·(γ − dᵢ))` over negative distances.
pub fn adversarial_weights(distances: &[f64], gamma: f64, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| temperature * (gamma - d)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| math::exp(l - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// NSSA loss for one positive and its negatives, accumulating `scale ·`
/// gradients. The adversarial weights are treated as constants.
pub fn nssa_accumulate(
    model: &KgeModel,
    positive: &Triple,
    negatives: &[Triple],
    adv_temperature: f64,
    scale: f64,
    grads: &mut KgeGrads,
) -> Result<f64> {
    if negatives.is_empty() {
        return Err(invalid("NSSA loss needs at least one negative"));
    }
    if negatives.iter().any(|t| t.relation != positive.relation) {
        return Err(invalid("negatives must share the positive's relation"));
    }
    let gamma = model.gamma;
    let rel = Prepared::new(model.kind, model.relation(positive.relation)?);
    let d_pos = triple_distance(model, positive, &rel)?;
    let d_neg = negatives
        .iter()
        .map(|t| triple_distance(model, t, &rel))
        .collect::<Result<Vec<_>>>()?;
    let p = adversarial_weights(&d_neg, gamma, adv_temperature);

    let mut loss = -math::log_sigmoid(gamma - d_pos);
    accumulate_distance_grad(model, positive, &rel, scale * math::sigmoid(d_pos - gamma), grads)?;
    for ((t, d), w) in negatives.iter().zip(&d_neg).zip(&p) {
        loss -= w * math::log_sigmoid(d - gamma);
        accumulate_distance_grad(model, t, &rel, -scale * w * math::sigmoid(gamma - d), grads)?;
    }
    Ok(loss)
}

/// NSSA loss and its full gradient for one positive.
pub fn nssa_loss(model: &KgeModel, positive: &Triple, negatives: &[Triple], adv_temperature: f64) -> Result<(f64, KgeGrads)> {
    let mut grads = KgeGrads::zeros_like(model);
    let loss = nssa_accumulate(model, positive, negatives, adv_temperature, 1.0, &mut grads)?;
    Ok((loss, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionMode {
    Head,
    Tail,
    Both,
}

/// Uniform corruption of heads or tails by entities of the matching kind,
/// resampling (up to 100 tries) to avoid known positives.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    pools: BTreeMap<(RelationId, bool), Vec<EntityId>>,
    known: BTreeSet<Triple>,
}

const RESAMPLE_TRIES: usize = 100;

impl NegativeSampler {
    pub fn new(kg: &KnowledgeGraph, known: &[Triple]) -> Self {
        let mut pools = BTreeMap::new();
        let relations: BTreeSet<RelationId> = known.iter().map(|t| t.relation).collect();
        for r in relations {
            pools.insert((r, true), kg.candidates(r, Side::Head));
            pools.insert((r, false), kg.candidates(r, Side::Tail));
        }
        Self {
            pools,
            known: known.iter().copied().collect(),
        }
    }

    fn pool(&self, relation: RelationId, head: bool) -> &[EntityId] {
        self.pools.get(&(relation, head)).map(Vec::as_slice).unwrap_or(&[])
    }

    fn draw(&self, positive: &Triple, head: bool, rng: &mut Rng) -> Result<Triple> {
        let pool = self.pool(positive.relation, head);
        let original = if head { positive.head } else { positive.tail };
        let alternatives = pool.len() - usize::from(pool.binary_search(&original).is_ok());
        if alternatives == 0 {
            return Err(Error::Invalid(format!(
                "no alternative {} entities for relation {}",
                if head { "head" } else { "tail" },
                positive.relation.0
            )));
        }
        let mut candidate = *positive;
        for _ in 0..RESAMPLE_TRIES {
            let e = loop {
                let e = pool[rng.gen_range(0..pool.len())];
                if e != original {
                    break e;
                }
            };
            candidate = *positive;
            if head {
                candidate.head = e;
            } else {
                candidate.tail = e;
            }
            if !self.known.contains(&candidate) {
                break;
            }
        }
        Ok(candidate)
    }

    pub fn sample(&self, positive: &Triple, n: usize, mode: CorruptionMode, rng: &mut Rng) -> Result<Vec<Triple>> {
        (0..n)
            .map(|_| {
                let head = match mode {
                    CorruptionMode::Head => true,
                    CorruptionMode::Tail => false,
                    CorruptionMode::Both => rng.gen::<bool>(),
                };
                self.draw(positive, head, rng)
            })
            .collect()
    }
}

/// One-shot negative sampling against a training graph.
pub fn sample_negatives(
    kg_train: &KnowledgeGraph,
    positive: &Triple,
    n: usize,
    mode: CorruptionMode,
    seed: u64,
) -> Result<Vec<Triple>> {
    let sampler = NegativeSampler::new(kg_train, kg_train.triples());
    let mut rng = rng::stream(seed, "kge/negatives");
    sampler.sample(positive, n, mode, &mut rng)
}

pub const GRID_DIMS: [usize; 6] = [32, 64, 128, 256, 512, 768];
pub const GRID_LRS: [f64; 3] = [0.01, 0.001, 0.0001];
pub const GRID_NEGATIVES: [usize; 5] = [1, 5, 10, 50, 100];
pub const GRID_GAMMAS: [f64; 4] = [1.0, 5.0, 10.0, 20.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub norm: Norm,
    pub dim: usize,
    pub lr: f64,
    pub negatives: usize,
    pub gamma: f64,
    pub adv_temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub corruption: CorruptionMode,
    pub seed: u64,
    /// Permit values outside the hyperparameter grid.
    pub allow_off_grid: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::RotatE,
            norm: Norm::L2,
            dim: 32,
            lr: 0.01,
            negatives: 10,
            gamma: 5.0,
            adv_temperature: 1.0,
            epochs: 100,
            batch_size: 64,
            corruption: CorruptionMode::Both,
            seed: 0,
            allow_off_grid: false,
        }
    }
}

impl TrainConfig {
    pub fn on_grid(&self) -> bool {
        GRID_DIMS.contains(&self.dim)
            && GRID_LRS.contains(&self.lr)
            && GRID_NEGATIVES.contains(&self.negatives)
            && GRID_GAMMAS.contains(&self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.negatives == 0 || self.batch_size == 0 {
            return Err(invalid("dim, negatives and batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.gamma.is_finite() && self.adv_temperature.is_finite()) {
            return Err(invalid("learning rate, margin and temperature must be finite"));
        }
        if !self.allow_off_grid && !self.on_grid() {
            return Err(invalid(format!(
                "hyperparameters (d={}, lr={}, n-={}, gamma={}) are off the search grid",
                self.dim, self.lr, self.negatives, self.gamma
            )));
        }
        Ok(())
    }
}

/// Entity initialization source.
#[derive(Clone, Copy, Debug)]
pub enum Init<'a> {
    Random,
    /// Text vectors keyed by entity name; must have width `dim`.
    Pretrained(&'a EmbeddingTable),
}

/// Fresh model for `kg`'s vocabulary.
pub fn init_model(kg: &KnowledgeGraph, config: &TrainConfig, init: Init<'_>) -> Result<KgeModel> {
    config.validate()?;
    let d = config.dim;
    let ew = entity_width(config.kind, d);
    let range = config.gamma / d as f64;
    let mut rng = rng::stream(config.seed, "kge/init");
    let mut entity_emb = vec![0.0; kg.num_entities() * ew];
    for v in &mut entity_emb {
        *v = rng::uniform(&mut rng, -range, range);
    }
    let mut relation_param = vec![0.0; kg.num_relations() * d];
    for v in &mut relation_param {
        *v = match config.kind {
            ModelKind::RotatE => PI - 2.0 * PI * rng::uniform(&mut rng, 0.0, 1.0),
            _ => rng::uniform(&mut rng, -range, range),
        };
    }
    if let Init::Pretrained(table) = init {
        if table.dim() != d {
            return Err(invalid(format!(
                "pretrained width {} does not match embedding dimension {d}",
                table.dim()
            )));
        }
        // the placeholder has no text and keeps its random vector
        let targets: Vec<EntityId> = kg.entities().filter(|&e| kg.kind(e) != EntityKind::Placeholder).collect();
        let mut max_abs = 0.0f64;
        for &e in &targets {
            let row = table.require(kg.entity_name(e))?;
            max_abs = row.iter().fold(max_abs, |m, v| m.max(v.abs()));
        }
        let scale = if max_abs > 0.0 { range / max_abs } else { 1.0 };
        for &e in &targets {
            let row = table.require(kg.entity_name(e))?;
            let dst = &mut entity_emb[row_range(e.index(), ew)];
            match config.kind {
                ModelKind::RotatE => {
                    for j in 0..d {
                        dst[2 * j] = scale * row[j];
                        dst[2 * j + 1] = 0.0;
                    }
                }
                _ => {
                    for j in 0..d {
                        dst[j] = scale * row[j];
                    }
                }
            }
        }
    }
    KgeModel::from_parts(config.kind, config.norm, d, config.gamma, entity_emb, relation_param)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: KgeModel,
    /// Mean NSSA loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Train on `train` (ids from `kg`) with shuffled mini-batches of NSSA + Adam.
pub fn train_kge(kg: &KnowledgeGraph, train: &[Triple], config: &TrainConfig, init: Init<'_>) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut model = init_model(kg, config, init)?;
    let sampler = NegativeSampler::new(kg, train);
    let mut adam = Adam::new(model.entity_emb.len() + model.relation_param.len(), config.lr);
    let mut grads = KgeGrads::zeros_like(&model);
    let mut rng = rng::stream(config.seed, "kge/train");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let pos = &train[i];
                let negs = sampler.sample(pos, config.negatives, config.corruption, &mut rng)?;
                loss += nssa_accumulate(&model, pos, &negs, config.adv_temperature, scale, &mut grads)?;
            }
            batch_losses.push(loss * scale);
            adam.step_segments(&mut [
                (&mut model.entity_emb, &grads.entity),
                (&mut model.relation_param, &grads.relation),
            ])?;
        }
        loss_history.push(math::mean(&batch_losses));
    }
    Ok(TrainOutcome { model, loss_history })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedCandidate {
    pub entity: EntityId,
    pub score: f64,
    /// 1-based; tied scores share the mean of the positions they span.
    pub rank: f64,
}

/// Rank tail candidates for `(head, relation, ?)`, dropping `filter` members.
pub fn rank_candidates(
    model: &KgeModel,
    head: EntityId,
    relation: RelationId,
    candidates: &[EntityId],
    filter: &BTreeSet<EntityId>,
) -> Result<Vec<RankedCandidate>> {
    rank_for_vector(model, model.entity(head)?, relation, candidates, filter)
}

/// As [`rank_candidates`] but with an explicit head vector.
pub fn rank_for_vector(
    model: &KgeModel,
    head: &[f64],
    relation: RelationId,
    candidates: &[EntityId],
    filter: &BTreeSet<EntityId>,
) -> Result<Vec<RankedCandidate>> {
    let kept: Vec<EntityId> = candidates.iter().copied().filter(|c| !filter.contains(c)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores = model.score_tails(head, relation, &kept)?;
    let ranks = math::tied_ranks_desc(&scores);
    let mut out: Vec<RankedCandidate> = kept
        .iter()
        .zip(scores.iter().zip(&ranks))
        .map(|(&entity, (&score, &rank))| RankedCandidate { entity, score, rank })
        .collect();
    out.sort_by(|a, b| a.rank.total_cmp(&b.rank).then(a.entity.cmp(&b.entity)));
    Ok(out)
}

/// Mean-of-ties rank of `target` among `scores` (one entry per candidate).
pub fn tied_rank(scores: &[f64], target_score: f64) -> f64 {
    let greater = scores.iter().filter(|&&s| s > target_score).count();
    let equal = scores.iter().filter(|&&s| s == target_score).count();
    greater as f64 + (equal as f64 + 1.0) / 2.0
}

/// Filtered rank of each query's tail among `candidates`.
///
/// With `filtered`, every known positive of the query's `(head, relation)`
/// other than the target is removed from the candidate list first.
pub fn link_prediction_ranks(
    model: &KgeModel,
    queries: &[Triple],
    candidates: &[EntityId],
    known: &BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    filtered: bool,
) -> Result<Vec<f64>> {
    queries
        .iter()
        .map(|q| query_rank(model, q, candidates, known, filtered))
        .collect()
}

pub fn query_rank(
    model: &KgeModel,
    q: &Triple,
    candidates: &[EntityId],
    known: &BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    filtered: bool,
) -> Result<f64> {
    let head = model.entity(q.head)?;
    let empty = Vec::new();
    let skip = if filtered {
        known.get(&(q.head, q.relation)).unwrap_or(&empty)
    } else {
        &empty
    };
    let target = model.score_vectors(head, q.relation, model.entity(q.tail)?)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &c in candidates {
        if c != q.tail && skip.binary_search(&c).is_ok() {
            continue;
        }
        scores.push(model.score_vectors(head, q.relation, model.entity(c)?)?);
    }
    if !candidates.contains(&q.tail) {
        return Err(Error::Invalid(format!("target entity {} is not a candidate", q.tail.0)));
    }
    Ok(tied_rank(&scores, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{rel, NamedTriple};

    fn rotate_model(head: [f64; 2], theta: f64, tail: [f64; 2]) -> KgeModel {
        KgeModel::from_parts(
            ModelKind::RotatE,
            Norm::L2,
            1,
            1.0,
            vec![head[0], head[1], tail[0], tail[1]],
            vec![theta],
        )
        .unwrap()
    }

    #[test]
    fn rotate_identity_and_half_turn() {
        let m = rotate_model([1.0, 0.0], 0.0, [1.0, 0.0]);
        assert_eq!(m.score(EntityId(0), RelationId(0), EntityId(1)).unwrap(), 0.0);
        let m = rotate_model([1.0, 0.0], PI, [1.0, 0.0]);
        assert!((m.score(EntityId(0), RelationId(0), EntityId(1)).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn score_unknown_id() {
        let m = rotate_model([1.0, 0.0], 0.0, [1.0, 0.0]);
        assert!(matches!(m.score(EntityId(5), RelationId(0), EntityId(1)), Err(Error::IdOutOfRange(5))));
    }

    #[test]
    fn nssa_cancellation_cases() {
        // gamma = 0, d_pos = 0, one negative at distance 0
        let mut m = rotate_model([1.0, 0.0], 0.0, [1.0, 0.0]);
        m.gamma = 0.0;
        let pos = Triple::new(EntityId(0), RelationId(0), EntityId(1));
        let neg = Triple::new(EntityId(1), RelationId(0), EntityId(0));
        let (loss, _) = nssa_loss(&m, &pos, &[neg], 1.0).unwrap();
        assert!((loss - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);

        // gamma = 2, both distances 2: head (1,0) rotated by pi vs tail (1,0)
        let mut m = rotate_model([1.0, 0.0], PI, [1.0, 0.0]);
        m.gamma = 2.0;
        let (loss, _) = nssa_loss(&m, &pos, &[neg], 1.0).unwrap();
        assert!((loss - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!(nssa_loss(&m, &pos, &[], 1.0).is_err());
    }

    #[test]
    fn ranking_ties_and_single() {
        let m = KgeModel::from_parts(
            ModelKind::DistMult,
            Norm::L2,
            1,
            1.0,
            vec![1.0, 5.0, 5.0, 1.0],
            vec![1.0],
        )
        .unwrap();
        let cands = [EntityId(1), EntityId(2), EntityId(3)];
        let r = rank_candidates(&m, EntityId(0), RelationId(0), &cands, &BTreeSet::new()).unwrap();
        assert_eq!(r[0].rank, 1.5);
        assert_eq!(r[1].rank, 1.5);
        assert_eq!(r[2].rank, 3.0);
        let single = rank_candidates(&m, EntityId(0), RelationId(0), &cands[..1], &BTreeSet::new()).unwrap();
        assert_eq!(single[0].rank, 1.0);
        let all: BTreeSet<EntityId> = cands.iter().copied().collect();
        assert!(matches!(
            rank_candidates(&m, EntityId(0), RelationId(0), &cands, &all),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn tied_rank_matches_position_mean() {
        assert_eq!(tied_rank(&[5.0, 5.0, 1.0], 5.0), 1.5);
        assert_eq!(tied_rank(&[5.0, 5.0, 1.0], 1.0), 3.0);
        assert_eq!(tied_rank(&[2.0], 2.0), 1.0);
    }

    fn bipartite() -> KnowledgeGraph {
        let mut named = Vec::new();
        for p in 0..3 {
            for r in 0..4 {
                if (p + r) % 2 == 0 {
                    named.push(NamedTriple::new(format!("PSN:{p}"), rel::LIKES, format!("RCP:{r}")));
                }
            }
        }
        KnowledgeGraph::from_named(&named).unwrap()
    }

    #[test]
    fn negatives_single_alternative() {
        let kg = KnowledgeGraph::from_named(&[
            NamedTriple::new("PSN:1", rel::LIKES, "RCP:1"),
            NamedTriple::new("PSN:2", rel::LIKES, "RCP:2"),
        ])
        .unwrap();
        let pos = kg.triples()[0];
        let negs = sample_negatives(&kg, &pos, 5, CorruptionMode::Tail, 1).unwrap();
        let rcp2 = kg.entity("RCP:2").unwrap();
        assert!(negs.iter().all(|t| t.tail == rcp2 && t.head == pos.head));
    }

    #[test]
    fn negatives_tail_mode_keeps_head_relation() {
        let kg = bipartite();
        let pos = kg.triples()[0];
        let negs = sample_negatives(&kg, &pos, 20, CorruptionMode::Tail, 7).unwrap();
        assert_eq!(negs.len(), 20);
        for n in &negs {
            assert_eq!((n.head, n.relation), (pos.head, pos.relation));
            assert_ne!(n.tail, pos.tail);
            assert!(!kg.contains(n));
        }
        let negs = sample_negatives(&kg, &pos, 20, CorruptionMode::Head, 7).unwrap();
        assert!(negs.iter().all(|n| n.tail == pos.tail && kg.kind(n.head) == EntityKind::Person));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let kg = bipartite();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_kge(&kg, kg.triples(), &cfg, Init::Random).unwrap();
        assert_eq!(out.model, init_model(&kg, &cfg, Init::Random).unwrap());
        assert!(out.loss_history.is_empty());
    }

    #[test]
    fn pretrained_init_fills_real_parts() {
        let kg = bipartite();
        let mut table = EmbeddingTable::new(2);
        for (i, name) in kg.entity_names().iter().enumerate() {
            table.insert(name.as_str(), vec![i as f64 + 1.0, -(i as f64)]).unwrap();
        }
        let cfg = TrainConfig {
            dim: 2,
            gamma: 4.0,
            allow_off_grid: true,
            ..TrainConfig::default()
        };
        let m = init_model(&kg, &cfg, Init::Pretrained(&table)).unwrap();
        let max = (kg.num_entities()) as f64;
        let e0 = m.entity(EntityId(0)).unwrap();
        assert!((e0[0] - 2.0 / max).abs() < 1e-12);
        assert_eq!(e0[1], 0.0);
        assert_eq!(e0[3], 0.0);

        let mut partial = EmbeddingTable::new(2);
        partial.insert("PSN:0", vec![1.0, 1.0]).unwrap();
        let err = init_model(&kg, &cfg, Init::Pretrained(&partial)).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding(_)));
    }

    #[test]
    fn off_grid_needs_override() {
        let cfg = TrainConfig {
            dim: 7,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig { allow_off_grid: true, ..cfg }.validate().is_ok());
    }
}
