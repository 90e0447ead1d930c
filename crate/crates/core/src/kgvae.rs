//! KGE-guided variational autoencoder over small grayscale images.
//!
//! The loss for one image `x` with recipe embedding `e` is
//! `MSE(μ, e) − λ·ELBO`, where `ELBO = −½‖x − x̂‖² − KL(N(μ, σ²) ‖ N(0, I))`.
//! Dropping the guidance term gives a plain VAE.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::embed::EmbeddingTable;
use crate::error::{check_len, invalid, Error, Result};
use crate::kg::{EntityKind, KnowledgeGraph};
use crate::math;
use crate::nn::{self, Activation, Adam, Mlp, Trace};
use crate::rng;

/// Row-major images with one recipe per image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    recipes: Vec<String>,
}

impl ImageSet {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, recipes: Vec<String>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        check_len(recipes.len() * height * width, pixels.len())?;
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
            recipes,
        })
    }

    pub fn count(&self) -> usize {
        self.recipes.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn image(&self, row: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.pixels[row * n..(row + 1) * n]
    }

    pub fn recipe(&self, row: usize) -> &str {
        &self.recipes[row]
    }

    pub fn recipes(&self) -> &[String] {
        &self.recipes
    }

    /// Subset by row, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(rows.len() * self.pixel_count());
        let mut recipes = Vec::with_capacity(rows.len());
        for &r in rows {
            pixels.extend_from_slice(self.image(r));
            recipes.push(self.recipes[r].clone());
        }
        Self {
            height: self.height,
            width: self.width,
            pixels,
            recipes,
        }
    }

    /// Every image must belong to a recipe entity of `kg`.
    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<()> {
        for r in &self.recipes {
            let id = kg.entity_or_err(r)?;
            if kg.kind(id) != EntityKind::Recipe {
                return Err(invalid(format!("image target `{r}` is not a recipe")));
            }
        }
        Ok(())
    }
}

/// Encoder `H·W → hidden → [μ; log σ²]`, decoder `d_z → hidden → H·W`.
#[derive(Clone, Debug, PartialEq)]
pub struct KgVaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub d_z: usize,
    pub lambda: f64,
}

impl KgVaeModel {
    pub fn new(pixels: usize, hidden: usize, d_z: usize, lambda: f64, seed: u64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        let mut r = rng::stream(seed, "kgvae/init");
        let encoder = Mlp::with_widths(&[pixels, hidden, 2 * d_z], Activation::Tanh, Activation::Identity, &mut r)?;
        let decoder = Mlp::with_widths(&[d_z, hidden, pixels], Activation::Tanh, Activation::Sigmoid, &mut r)?;
        Ok(Self {
            encoder,
            decoder,
            d_z,
            lambda,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, lambda: f64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        if !encoder.output_dim().is_multiple_of(2) {
            return Err(invalid("encoder output must hold mean and log-variance"));
        }
        let d_z = encoder.output_dim() / 2;
        check_len(d_z, decoder.input_dim())?;
        check_len(encoder.input_dim(), decoder.output_dim())?;
        Ok(Self {
            encoder,
            decoder,
            d_z,
            lambda,
        })
    }

    pub fn pixels(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.param_count(), flat.len())?;
        let n = self.encoder.param_count();
        self.encoder.set_params(&flat[..n])?;
        self.decoder.set_params(&flat[n..])
    }

    /// Latent mean of an image.
    pub fn encode_mean(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len(self.pixels(), image.len())?;
        let mut out = self.encoder.forward(image)?;
        out.truncate(self.d_z);
        Ok(out)
    }
}

/// Outputs of one forward pass plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct VaeForward {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    pub z: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub noise: Vec<f64>,
    pub use_mean: bool,
    encoder_trace: Trace,
    decoder_trace: Trace,
}

pub fn vae_forward(model: &KgVaeModel, image: &[f64], noise: &[f64], use_mean: bool) -> Result<VaeForward> {
    check_len(model.pixels(), image.len())?;
    check_len(model.d_z, noise.len())?;
    let encoder_trace = model.encoder.forward_trace(image)?;
    let (mu, log_var) = encoder_trace.output.split_at(model.d_z);
    let z: Vec<f64> = if use_mean {
        mu.to_vec()
    } else {
        mu.iter()
            .zip(log_var)
            .zip(noise)
            .map(|((m, lv), e)| m + math::exp(lv / 2.0) * e)
            .collect()
    };
    let decoder_trace = model.decoder.forward_trace(&z)?;
    Ok(VaeForward {
        mu: mu.to_vec(),
        log_var: log_var.to_vec(),
        reconstruction: decoder_trace.output.clone(),
        z,
        noise: noise.to_vec(),
        use_mean,
        encoder_trace,
        decoder_trace,
    })
}

/// `½ Σ (exp(log σ²) + μ² − 1 − log σ²)`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| math::exp(*lv) + m * m - 1.0 - lv)
        .sum::<f64>()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KgVaeLoss {
    pub total: f64,
    /// `MSE(μ, e)`; zero without a guidance target.
    pub guidance: f64,
    /// `½‖x − x̂‖²`.
    pub reconstruction: f64,
    pub kl: f64,
}

impl KgVaeLoss {
    pub fn elbo(&self) -> f64 {
        -self.reconstruction - self.kl
    }
}

/// Loss and flat gradient (layout of [`KgVaeModel::params`]). With
/// `target = None` the guidance term is dropped.
pub fn kgvae_loss(
    model: &KgVaeModel,
    fwd: &VaeForward,
    image: &[f64],
    target: Option<&[f64]>,
    lambda: f64,
) -> Result<(KgVaeLoss, Vec<f64>)> {
    if lambda < 0.0 {
        return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    check_len(model.pixels(), image.len())?;
    let d = model.d_z;
    let mut d_mu = vec![0.0; d];
    let mut d_lv = vec![0.0; d];

    let mut guidance = 0.0;
    if let Some(t) = target {
        let (g, grad) = nn::mse(&fwd.mu, t)?;
        guidance = g;
        d_mu.copy_from_slice(&grad);
    }

    let mut recon = 0.0;
    let d_xhat: Vec<f64> = fwd
        .reconstruction
        .iter()
        .zip(image)
        .map(|(xh, x)| {
            let r = xh - x;
            recon += r * r;
            lambda * r
        })
        .collect();
    recon *= 0.5;
    let kl = kl_divergence(&fwd.mu, &fwd.log_var);

    let n_enc = model.encoder.param_count();
    let mut grads = vec![0.0; model.param_count()];
    let d_z = model.decoder.backward(&fwd.decoder_trace, &d_xhat, &mut grads[n_enc..])?;
    for i in 0..d {
        let sigma = math::exp(fwd.log_var[i] / 2.0);
        d_mu[i] += d_z[i] + lambda * fwd.mu[i];
        if !fwd.use_mean {
            d_lv[i] += d_z[i] * fwd.noise[i] * 0.5 * sigma;
        }
        d_lv[i] += lambda * 0.5 * (math::exp(fwd.log_var[i]) - 1.0);
    }
    let mut upstream = d_mu;
    upstream.extend(d_lv);
    model
        .encoder
        .backward(&fwd.encoder_trace, &upstream, &mut grads[..n_enc])?;

    let loss = KgVaeLoss {
        total: guidance + lambda * (recon + kl),
        guidance,
        reconstruction: recon,
        kl,
    };
    Ok((loss, grads))
}

#[derive(Clone, Debug)]
pub struct KgVaeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    /// Train without the guidance term (plain VAE).
    pub vanilla: bool,
    pub seed: u64,
}

impl Default for KgVaeConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 100,
            batch_size: 16,
            lr: 1e-3,
            lambda: 0.01,
            vanilla: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KgVaeFit {
    pub model: KgVaeModel,
    /// Mean per-image loss components after each epoch's updates.
    pub history: Vec<KgVaeLoss>,
}

/// Guidance targets for every image, in row order.
pub fn guidance_targets<'a>(images: &ImageSet, recipe_embs: &'a EmbeddingTable) -> Result<Vec<&'a [f64]>> {
    images
        .recipes()
        .iter()
        .map(|r| recipe_embs.get(r).ok_or_else(|| Error::MissingEmbedding(r.clone())))
        .collect()
}

/// Mini-batch Adam with fresh reparameterization noise per sample and epoch.
pub fn train_kgvae(images: &ImageSet, recipe_embs: &EmbeddingTable, config: &KgVaeConfig) -> Result<KgVaeFit> {
    if images.count() == 0 {
        return Err(invalid("no training images"));
    }
    let targets = guidance_targets(images, recipe_embs)?;
    let d_z = recipe_embs.dim();
    let mut model = KgVaeModel::new(images.pixel_count(), config.hidden, d_z, config.lambda, config.seed)?;
    let mut adam = Adam::new(model.param_count(), config.lr);
    let mut order_rng = rng::stream(config.seed, "kgvae/order");
    let mut noise_rng = rng::stream(config.seed, "kgvae/noise");
    let mut order: Vec<usize> = (0..images.count()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = KgVaeLoss::default();
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grads = vec![0.0; model.param_count()];
            for &i in chunk {
                let noise: Vec<f64> = (0..d_z).map(|_| rng::standard_normal(&mut noise_rng)).collect();
                let fwd = vae_forward(&model, images.image(i), &noise, false)?;
                let target = (!config.vanilla).then_some(targets[i]);
                let (loss, g) = kgvae_loss(&model, &fwd, images.image(i), target, config.lambda)?;
                for (a, b) in grads.iter_mut().zip(g) {
                    *a += b;
                }
                sum.total += loss.total;
                sum.guidance += loss.guidance;
                sum.reconstruction += loss.reconstruction;
                sum.kl += loss.kl;
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            let mut params = model.params();
            adam.step(&mut params, &grads)?;
            model.set_params(&params)?;
        }
        let n = images.count() as f64;
        history.push(KgVaeLoss {
            total: sum.total / n,
            guidance: sum.guidance / n,
            reconstruction: sum.reconstruction / n,
            kl: sum.kl / n,
        });
    }
    Ok(KgVaeFit { model, history })
}

/// Guidance MSE of the latent means against the recipe embeddings.
pub fn guidance_mse(model: &KgVaeModel, images: &ImageSet, recipe_embs: &EmbeddingTable) -> Result<f64> {
    let targets = guidance_targets(images, recipe_embs)?;
    let losses = (0..images.count())
        .map(|i| Ok(nn::mse(&model.encode_mean(images.image(i))?, targets[i])?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(math::mean(&losses))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieved {
    pub row: usize,
    pub recipe: String,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct Retrieval {
    pub hits: Vec<Retrieved>,
    /// Set when `k` exceeded the gallery size.
    pub clipped: bool,
}

/// Gallery latent means, computed once for repeated queries.
pub fn encode_gallery(model: &KgVaeModel, gallery: &ImageSet) -> Result<Vec<Vec<f64>>> {
    (0..gallery.count()).map(|i| model.encode_mean(gallery.image(i))).collect()
}

/// Top-`k` gallery images by Euclidean distance between latent means.
pub fn retrieve_similar(model: &KgVaeModel, query: &[f64], gallery: &ImageSet, k: usize) -> Result<Retrieval> {
    let encoded = encode_gallery(model, gallery)?;
    retrieve_encoded(model, query, gallery, &encoded, k)
}

pub fn retrieve_encoded(
    model: &KgVaeModel,
    query: &[f64],
    gallery: &ImageSet,
    encoded: &[Vec<f64>],
    k: usize,
) -> Result<Retrieval> {
    if gallery.count() == 0 {
        return Err(Error::EmptyCandidates);
    }
    check_len(gallery.count(), encoded.len())?;
    let q = model.encode_mean(query)?;
    let mut scored: Vec<(f64, usize)> = encoded
        .iter()
        .enumerate()
        .map(|(i, mu)| (math::sqrt(math::squared_distance(&q, mu)), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let clipped = k > scored.len();
    scored.truncate(k);
    Ok(Retrieval {
        hits: scored
            .into_iter()
            .map(|(distance, row)| Retrieved {
                row,
                recipe: gallery.recipe(row).into(),
                distance,
            })
            .collect(),
        clipped,
    })
}

/// Label-free validation score: mean distance, in recipe-embedding space,
/// between each query's recipe and the recipes of its top-`k` gallery hits.
/// Lower is better.
pub fn validation_score(
    model: &KgVaeModel,
    queries: &ImageSet,
    gallery: &ImageSet,
    recipe_embs: &EmbeddingTable,
    k: usize,
) -> Result<f64> {
    let encoded = encode_gallery(model, gallery)?;
    let mut dists = Vec::new();
    for i in 0..queries.count() {
        let target = recipe_embs.require(queries.recipe(i))?;
        let found = retrieve_encoded(model, queries.image(i), gallery, &encoded, k)?;
        for hit in &found.hits {
            let e = recipe_embs.require(&hit.recipe)?;
            dists.push(math::sqrt(math::squared_distance(target, e)));
        }
    }
    Ok(math::mean(&dists))
}

#[derive(Clone, Debug)]
pub struct LambdaSearch {
    pub best_lambda: f64,
    /// (λ, validation score) per grid value.
    pub scores: Vec<(f64, f64)>,
    pub fit: KgVaeFit,
}

/// Train once per λ on `train` and keep the fit with the lowest validation
/// score for `valid` queries against the `train` gallery.
pub fn tune_lambda(
    train: &ImageSet,
    valid: &ImageSet,
    recipe_embs: &EmbeddingTable,
    grid: &[f64],
    config: &KgVaeConfig,
    k: usize,
) -> Result<LambdaSearch> {
    if grid.is_empty() {
        return Err(invalid("empty lambda grid"));
    }
    let mut best: Option<(f64, KgVaeFit)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = KgVaeConfig {
            lambda,
            ..config.clone()
        };
        let fit = train_kgvae(train, recipe_embs, &cfg)?;
        let s = validation_score(&fit.model, valid, train, recipe_embs, k)?;
        scores.push((lambda, s));
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, fit));
        }
    }
    let (_, fit) = best.expect("grid is non-empty");
    Ok(LambdaSearch {
        best_lambda: fit.model.lambda,
        scores,
        fit,
    })
}

/// Mean over queries of the fraction of top-`k` hits whose class matches the
/// query's class.
pub fn class_purity(
    model: &KgVaeModel,
    queries: &ImageSet,
    gallery: &ImageSet,
    class_of: &BTreeMap<String, usize>,
    k: usize,
) -> Result<f64> {
    let encoded = encode_gallery(model, gallery)?;
    let mut fractions = Vec::with_capacity(queries.count());
    for i in 0..queries.count() {
        let class = class_of
            .get(queries.recipe(i))
            .ok_or_else(|| Error::UnknownEntity(queries.recipe(i).into()))?;
        let found = retrieve_encoded(model, queries.image(i), gallery, &encoded, k)?;
        let same = found
            .hits
            .iter()
            .filter(|h| class_of.get(&h.recipe) == Some(class))
            .count();
        fractions.push(same as f64 / found.hits.len().max(1) as f64);
    }
    Ok(math::mean(&fractions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn tiny() -> KgVaeModel {
        KgVaeModel::new(6, 4, 2, 0.5, 3).unwrap()
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(kl_divergence(&[0.3, -1.0], &[0.5, -2.0]) > 0.0);
    }

    #[test]
    fn mean_mode_ignores_noise() {
        let m = tiny();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let a = vae_forward(&m, &x, &[5.0, -5.0], true).unwrap();
        let b = vae_forward(&m, &x, &[-1.0, 2.0], true).unwrap();
        assert_eq!(a.reconstruction, b.reconstruction);
        assert!(a.reconstruction.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn zero_lambda_matching_mean_gives_zero_loss() {
        let m = tiny();
        let x = [0.0; 6];
        let fwd = vae_forward(&m, &x, &[0.0, 0.0], true).unwrap();
        let target = fwd.mu.clone();
        let (loss, _) = kgvae_loss(&m, &fwd, &x, Some(&target), 0.0).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(kgvae_loss(&m, &fwd, &x, Some(&target), -1.0).is_err());
    }

    #[test]
    fn identical_query_ranks_first() {
        let m = tiny();
        let pixels: Vec<f64> = (0..18).map(|i| (i as f64) / 20.0).collect();
        let names = ["RCP:a", "RCP:b", "RCP:c"].iter().map(|s| s.to_string()).collect();
        let g = ImageSet::new(2, 3, pixels, names).unwrap();
        let r = retrieve_similar(&m, g.image(1), &g, 10).unwrap();
        assert_eq!(r.hits[0].row, 1);
        assert_eq!(r.hits[0].distance, 0.0);
        assert!(r.clipped);
        assert_eq!(r.hits.len(), 3);
    }
}
