//! Alignment network from text-embedding space into KG-embedding space, and
//! zero-shot (cold-start) embedding assignment for the placeholder user.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{check_len, invalid, Error, Result};
use crate::kg::{rel, EntityId, KnowledgeGraph, Side, PLACEHOLDER};
use crate::kge::{self, KgeModel, RankedCandidate};
use crate::math;
use crate::nn::{self, Activation, Adam, Mlp};
use crate::rng;

/// Two dense layers: `d_nlp → hidden` (Tanh) then `hidden → d_kg` (linear).
/// `d_kg` is the real width of a KG entity embedding (`2d` for RotatE).
#[derive(Clone, Debug, PartialEq)]
pub struct AlignerModel {
    pub network: Mlp,
    pub d_nlp: usize,
    pub d_kg: usize,
}

impl AlignerModel {
    pub fn new(d_nlp: usize, hidden: usize, d_kg: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, "aligner/init");
        let network = Mlp::with_widths(&[d_nlp, hidden, d_kg], Activation::Tanh, Activation::Identity, &mut r)?;
        Ok(Self { network, d_nlp, d_kg })
    }

    pub fn from_network(network: Mlp) -> Result<Self> {
        if network.layers.len() != 2 {
            return Err(invalid("aligner expects exactly two layers"));
        }
        Ok(Self {
            d_nlp: network.input_dim(),
            d_kg: network.output_dim(),
            network,
        })
    }
}

#[derive(Clone, Debug)]
pub struct AlignerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of pairs held out for early stopping; 0 trains on all pairs
    /// for the full budget.
    pub valid_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 300,
            batch_size: 16,
            lr: 0.005,
            valid_fraction: 0.0,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlignerFit {
    pub model: AlignerModel,
    /// Training MSE after each epoch.
    pub history: Vec<f64>,
    /// Held-out MSE after each epoch (empty without a validation part).
    pub valid_history: Vec<f64>,
    /// Epoch whose parameters were kept (equals the number of epochs run
    /// without early stopping).
    pub best_epoch: usize,
    /// Training MSE of the returned model.
    pub final_mse: f64,
}

fn pairs_mse(model: &AlignerModel, pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    let losses = pairs
        .iter()
        .map(|(x, y)| Ok(nn::mse(&model.network.forward(x)?, y)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(math::mean(&losses))
}

/// Fit the aligner on (text embedding, KG embedding) pairs by MSE and Adam.
pub fn train_aligner(pairs: &[(&[f64], &[f64])], config: &AlignerConfig) -> Result<AlignerFit> {
    if pairs.len() < 10 {
        return Err(invalid(format!("need at least 10 alignment pairs, got {}", pairs.len())));
    }
    if !(0.0..1.0).contains(&config.valid_fraction) {
        return Err(invalid("validation fraction must lie in [0, 1)"));
    }
    let d_nlp = pairs[0].0.len();
    let d_kg = pairs[0].1.len();
    for (x, y) in pairs {
        check_len(d_nlp, x.len())?;
        check_len(d_kg, y.len())?;
    }
    let mut rng = rng::stream(config.seed, "aligner/train");
    let mut shuffled: Vec<usize> = (0..pairs.len()).collect();
    let n_valid = libm::round(config.valid_fraction * pairs.len() as f64) as usize;
    if n_valid > 0 {
        shuffled.shuffle(&mut rng);
    }
    let valid: Vec<(&[f64], &[f64])> = shuffled[..n_valid].iter().map(|&i| pairs[i]).collect();
    let train: Vec<(&[f64], &[f64])> = shuffled[n_valid..].iter().map(|&i| pairs[i]).collect();

    let mut model = AlignerModel::new(d_nlp, config.hidden, d_kg, config.seed)?;
    let mut adam = Adam::new(model.network.param_count(), config.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut valid_history = Vec::new();
    let mut best = (f64::INFINITY, 0, model.network.params());
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grads = alloc::vec![0.0; model.network.param_count()];
            for &i in chunk {
                let (x, y) = train[i];
                let trace = model.network.forward_trace(x)?;
                let (_, g) = nn::mse(&trace.output, y)?;
                model.network.backward(&trace, &g, &mut grads)?;
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            model.network.apply_adam(&mut adam, &grads)?;
        }
        history.push(pairs_mse(&model, &train)?);
        if !valid.is_empty() {
            let v = pairs_mse(&model, &valid)?;
            valid_history.push(v);
            if v < best.0 {
                best = (v, epoch, model.network.params());
            } else if epoch - best.1 >= config.patience {
                break;
            }
        }
    }
    let best_epoch = if valid.is_empty() {
        history.len()
    } else {
        model.network.set_params(&best.2)?;
        best.1
    };
    let final_mse = pairs_mse(&model, &train)?;
    Ok(AlignerFit {
        model,
        history,
        valid_history,
        best_epoch,
        final_mse,
    })
}

/// Map a text embedding into KG space.
pub fn align_embedding(model: &AlignerModel, text_emb: &[f64]) -> Result<Vec<f64>> {
    check_len(model.d_nlp, text_emb.len())?;
    model.network.forward(text_emb)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroShotMode {
    /// Copy of a uniformly chosen existing user's embedding.
    Rand,
    /// Componentwise mean of all existing users.
    Avg,
    /// Aligned text embedding of the new user.
    KgAligned,
}

impl FromStr for ZeroShotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rand" => Ok(Self::Rand),
            "avg" => Ok(Self::Avg),
            "kg-aligned" | "aligned" => Ok(Self::KgAligned),
            other => Err(invalid(format!("unknown zero-shot mode `{other}`"))),
        }
    }
}

/// Users with at least one training interaction, in id order.
pub fn existing_users(kg: &KnowledgeGraph, train: &[crate::kg::Triple]) -> Vec<EntityId> {
    let Some(likes) = kg.relation(rel::LIKES) else {
        return Vec::new();
    };
    let set: BTreeSet<EntityId> = train.iter().filter(|t| t.relation == likes).map(|t| t.head).collect();
    set.into_iter().collect()
}

/// Embedding for the placeholder user under the chosen assignment mode.
pub fn zero_shot_assign(
    model: &KgeModel,
    users: &[EntityId],
    mode: ZeroShotMode,
    user_text_emb: Option<&[f64]>,
    aligner: Option<&AlignerModel>,
    rng: &mut rng::Rng,
) -> Result<Vec<f64>> {
    match mode {
        ZeroShotMode::Rand => {
            if users.is_empty() {
                return Err(invalid("no existing users to draw from"));
            }
            Ok(model.entity(users[rng.gen_range(0..users.len())])?.to_vec())
        }
        ZeroShotMode::Avg => {
            let mut sorted = users.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            let rows = sorted.iter().map(|&u| model.entity(u)).collect::<Result<Vec<_>>>()?;
            math::mean_vector(rows, model.entity_width()).ok_or_else(|| invalid("no existing users to average"))
        }
        ZeroShotMode::KgAligned => {
            let aligner = aligner.ok_or_else(|| invalid("KG-aligned assignment needs an aligner"))?;
            let text = user_text_emb.ok_or_else(|| invalid("KG-aligned assignment needs a text embedding"))?;
            check_len(model.entity_width(), aligner.d_kg)?;
            align_embedding(aligner, text)
        }
    }
}

/// Install `assigned` on `PSN:ZSH` and rank every recipe for it (no filter).
pub fn recommend_zero_shot(
    model: &mut KgeModel,
    kg: &KnowledgeGraph,
    assigned: &[f64],
    k: usize,
) -> Result<Vec<RankedCandidate>> {
    let placeholder = kg
        .entity(PLACEHOLDER)
        .ok_or_else(|| Error::UnknownEntity(PLACEHOLDER.into()))?;
    let likes = kg.relation_or_err(rel::LIKES)?;
    model.set_entity(placeholder, assigned)?;
    let candidates = kg.candidates(likes, Side::Tail);
    let mut ranked = kge::rank_candidates(model, placeholder, likes, &candidates, &BTreeSet::new())?;
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kge::{ModelKind, Norm};
    use crate::nn::{DenseLayer, Tensor};
    use alloc::vec;

    #[test]
    fn zero_weight_network_returns_bias() {
        let l1 = DenseLayer::zeros(3, 4, Activation::Tanh);
        let mut l2 = DenseLayer::zeros(4, 2, Activation::Identity);
        l2.bias = Tensor::new(vec![2], vec![0.25, -1.5]).unwrap();
        let model = AlignerModel::from_network(Mlp::new(vec![l1, l2]).unwrap()).unwrap();
        assert_eq!(align_embedding(&model, &[9.0, -3.0, 1.0]).unwrap(), vec![0.25, -1.5]);
        assert!(align_embedding(&model, &[1.0]).is_err());
    }

    #[test]
    fn too_few_pairs() {
        let x = [0.0; 3];
        let y = [0.0; 2];
        let pairs = vec![(&x[..], &y[..]); 9];
        assert!(train_aligner(&pairs, &AlignerConfig::default()).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = [0.0; 3];
        let x2 = [0.0; 4];
        let y = [0.0; 2];
        let mut pairs = vec![(&x[..], &y[..]); 10];
        pairs[4].0 = &x2;
        assert!(matches!(train_aligner(&pairs, &AlignerConfig::default()), Err(Error::Shape { .. })));
    }

    fn two_user_model() -> KgeModel {
        KgeModel::from_parts(ModelKind::RotatE, Norm::L2, 1, 1.0, vec![0.3, -0.4, -0.3, 0.4], vec![0.0]).unwrap()
    }

    #[test]
    fn avg_of_opposites_is_zero() {
        let m = two_user_model();
        let mut r = rng::seeded(1);
        let v = zero_shot_assign(&m, &[EntityId(0), EntityId(1)], ZeroShotMode::Avg, None, None, &mut r).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn rand_with_one_user_copies_it() {
        let m = two_user_model();
        let mut r = rng::seeded(1);
        let v = zero_shot_assign(&m, &[EntityId(1)], ZeroShotMode::Rand, None, None, &mut r).unwrap();
        assert_eq!(v, vec![-0.3, 0.4]);
    }

    #[test]
    fn aligned_without_aligner_errors() {
        let m = two_user_model();
        let mut r = rng::seeded(1);
        let err = zero_shot_assign(&m, &[EntityId(1)], ZeroShotMode::KgAligned, Some(&[1.0]), None, &mut r);
        assert!(err.is_err());
    }
}
