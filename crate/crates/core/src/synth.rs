//! Planted synthetic benchmarks with known structure.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::embed::{content_key, instructions_key, name_key, EmbeddingTable};
use crate::error::{invalid, Result};
use crate::kg::{rel, NamedTriple};
use crate::kgvae::ImageSet;
use crate::math;
use crate::rng::{self, Rng};

pub fn person(i: usize) -> String {
    format!("PSN:{i}")
}

pub fn recipe(i: usize) -> String {
    format!("RCP:{i}")
}

pub fn ingredient(i: usize) -> String {
    format!("ING:{i}")
}

pub fn review(i: usize) -> String {
    format!("RVW:{i}")
}

fn gaussian_vec(rng: &mut Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim).map(|_| sigma * rng::standard_normal(rng)).collect()
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += s * b;
    }
}

#[derive(Clone, Debug)]
pub struct BlockConfig {
    pub blocks: usize,
    pub persons_per_block: usize,
    pub recipes_per_block: usize,
    /// Each person likes a contiguous window of this many recipes on the
    /// block's ring.
    pub window: usize,
    pub text_dim: usize,
    pub text_noise: f64,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            blocks: 2,
            persons_per_block: 50,
            recipes_per_block: 50,
            window: 25,
            text_dim: 16,
            text_noise: 0.3,
            seed: 0,
        }
    }
}

/// Block-structured likes graph with block-correlated text embeddings.
#[derive(Clone, Debug)]
pub struct BlockGraph {
    pub likes: Vec<NamedTriple>,
    pub person_block: BTreeMap<String, usize>,
    pub recipe_block: BTreeMap<String, usize>,
    /// Text embedding per person, keyed by entity name.
    pub person_text: EmbeddingTable,
}

/// Persons and recipes split into blocks. Within a block, recipes sit on a
/// ring and each person likes the window of recipes centred on their own
/// (shuffled) ring position, so likes never cross blocks.
pub fn block_graph(config: &BlockConfig) -> Result<BlockGraph> {
    if config.window > config.recipes_per_block || config.blocks == 0 {
        return Err(invalid("window must fit inside a block"));
    }
    let mut rng = rng::stream(config.seed, "synth/blocks");
    let mut likes = Vec::new();
    let mut person_block = BTreeMap::new();
    let mut recipe_block = BTreeMap::new();
    let mut person_text = EmbeddingTable::new(config.text_dim);
    let centers: Vec<Vec<f64>> = (0..config.blocks)
        .map(|_| gaussian_vec(&mut rng, config.text_dim, 1.0))
        .collect();
    let n = config.recipes_per_block;
    for (b, block_center) in centers.iter().enumerate() {
        let mut recipes: Vec<usize> = (b * n..(b + 1) * n).collect();
        recipes.shuffle(&mut rng);
        for &r in &recipes {
            recipe_block.insert(recipe(r), b);
        }
        for j in 0..config.persons_per_block {
            let p = b * config.persons_per_block + j;
            let center = (j * n) / config.persons_per_block;
            let start = center + n - config.window / 2;
            for w in 0..config.window {
                likes.push(NamedTriple::new(person(p), rel::LIKES, recipe(recipes[(start + w) % n])));
            }
            person_block.insert(person(p), b);
            let mut t = block_center.clone();
            add_scaled(&mut t, &gaussian_vec(&mut rng, config.text_dim, config.text_noise), 1.0);
            person_text.insert(person(p), t)?;
        }
    }
    Ok(BlockGraph {
        likes,
        person_block,
        recipe_block,
        person_text,
    })
}

#[derive(Clone, Debug)]
pub struct InterestConfig {
    pub clusters: usize,
    pub recipes_per_cluster: usize,
    pub persons: usize,
    /// Number of clusters each person draws likes from.
    pub interests: usize,
    /// Likes per interest, drawn uniformly inside the cluster.
    pub likes_per_interest: usize,
    pub ingredients_per_cluster: usize,
    pub ingredients_per_recipe: usize,
    pub text_dim: usize,
    pub text_noise: f64,
    pub seed: u64,
}

impl Default for InterestConfig {
    fn default() -> Self {
        Self {
            clusters: 8,
            recipes_per_cluster: 30,
            persons: 200,
            interests: 2,
            likes_per_interest: 8,
            ingredients_per_cluster: 6,
            ingredients_per_recipe: 3,
            text_dim: 16,
            text_noise: 0.2,
            seed: 0,
        }
    }
}

/// Recipes in planted clusters with cluster-specific ingredients.
#[derive(Clone, Debug)]
pub struct InterestGraph {
    pub likes: Vec<NamedTriple>,
    pub ingredients: Vec<NamedTriple>,
    pub recipe_cluster: BTreeMap<String, usize>,
    /// Text embedding per recipe (cluster centre plus noise).
    pub recipe_text: EmbeddingTable,
}

pub fn interest_graph(config: &InterestConfig) -> Result<InterestGraph> {
    if config.interests > config.clusters
        || config.likes_per_interest > config.recipes_per_cluster
        || config.ingredients_per_recipe > config.ingredients_per_cluster
    {
        return Err(invalid("inconsistent interest benchmark configuration"));
    }
    let mut rng = rng::stream(config.seed, "synth/interest");
    let n = config.recipes_per_cluster;
    let mut recipe_cluster = BTreeMap::new();
    let mut recipe_text = EmbeddingTable::new(config.text_dim);
    let mut ingredients = Vec::new();
    let mut members = Vec::with_capacity(config.clusters);
    for c in 0..config.clusters {
        let center = gaussian_vec(&mut rng, config.text_dim, 1.0);
        let mut ring: Vec<usize> = (c * n..(c + 1) * n).collect();
        ring.shuffle(&mut rng);
        for &r in &ring {
            recipe_cluster.insert(recipe(r), c);
            let mut t = center.clone();
            add_scaled(&mut t, &gaussian_vec(&mut rng, config.text_dim, config.text_noise), 1.0);
            recipe_text.insert(recipe(r), t)?;
            let pool: Vec<usize> = (0..config.ingredients_per_cluster)
                .map(|i| c * config.ingredients_per_cluster + i)
                .collect();
            for &i in pool.choose_multiple(&mut rng, config.ingredients_per_recipe) {
                ingredients.push(NamedTriple::new(recipe(r), rel::CONTAINS, ingredient(i)));
            }
        }
        members.push(ring);
    }
    let mut likes = Vec::new();
    let clusters: Vec<usize> = (0..config.clusters).collect();
    for p in 0..config.persons {
        for &c in clusters.choose_multiple(&mut rng, config.interests) {
            for &r in members[c].choose_multiple(&mut rng, config.likes_per_interest) {
                likes.push(NamedTriple::new(person(p), rel::LIKES, recipe(r)));
            }
        }
    }
    Ok(InterestGraph {
        likes,
        ingredients,
        recipe_cluster,
        recipe_text,
    })
}

/// `k` isotropic Gaussian blobs with centres at `separation · e_i`.
pub fn gaussian_blobs(k: usize, per_blob: usize, dim: usize, separation: f64, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if k > dim {
        return Err(invalid(format!("{k} blobs need at least {k} dimensions")));
    }
    let mut rng = rng::stream(seed, "synth/blobs");
    let mut points = Vec::with_capacity(k * per_blob);
    let mut labels = Vec::with_capacity(k * per_blob);
    for c in 0..k {
        for _ in 0..per_blob {
            let mut p = gaussian_vec(&mut rng, dim, 1.0);
            p[c] += separation;
            points.push(p);
            labels.push(c);
        }
    }
    Ok((points, labels))
}

#[derive(Clone, Debug)]
pub struct TextureConfig {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    /// Amplitude of the class texture.
    pub texture: f64,
    /// Amplitude of the class-independent nuisance pattern.
    pub nuisance: f64,
    pub pixel_noise: f64,
    pub ingredients_per_class: usize,
    pub ingredients_per_recipe: usize,
    pub seed: u64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 16,
            size: 16,
            texture: 0.25,
            nuisance: 0.5,
            pixel_noise: 0.05,
            ingredients_per_class: 6,
            ingredients_per_recipe: 3,
            seed: 0,
        }
    }
}

/// One image per recipe; recipes of a class share ingredients.
#[derive(Clone, Debug)]
pub struct TextureBenchmark {
    pub images: ImageSet,
    pub class_of: BTreeMap<String, usize>,
    pub contains: Vec<NamedTriple>,
}

/// Each class has a fixed random ±1 texture; every image adds a random
/// linear gradient and a bright blob at a random position, which dominate
/// pixel-space distances.
pub fn texture_images(config: &TextureConfig) -> Result<TextureBenchmark> {
    let mut rng = rng::stream(config.seed, "synth/texture");
    let s = config.size;
    let templates: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| (0..s * s).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let mut pixels = Vec::with_capacity(config.classes * config.per_class * s * s);
    let mut recipes = Vec::new();
    let mut class_of = BTreeMap::new();
    let mut contains = Vec::new();
    for (c, template) in templates.iter().enumerate() {
        for j in 0..config.per_class {
            let r = recipe(c * config.per_class + j);
            let angle = rng::uniform(&mut rng, 0.0, core::f64::consts::TAU);
            let (dx, dy) = (math::cos(angle), math::sin(angle));
            let bx = rng::uniform(&mut rng, 0.0, s as f64);
            let by = rng::uniform(&mut rng, 0.0, s as f64);
            let width = s as f64 / 4.0;
            for y in 0..s {
                for x in 0..s {
                    let u = (x as f64 / (s - 1).max(1) as f64) - 0.5;
                    let v = (y as f64 / (s - 1).max(1) as f64) - 0.5;
                    let gradient = u * dx + v * dy;
                    let d2 = (x as f64 - bx) * (x as f64 - bx) + (y as f64 - by) * (y as f64 - by);
                    let blob = math::exp(-d2 / (2.0 * width * width));
                    let value = 0.5
                        + config.nuisance * (gradient + blob - 0.25)
                        + 0.5 * config.texture * template[y * s + x]
                        + config.pixel_noise * rng::standard_normal(&mut rng);
                    pixels.push(value.clamp(0.0, 1.0));
                }
            }
            let pool: Vec<usize> = (0..config.ingredients_per_class)
                .map(|i| c * config.ingredients_per_class + i)
                .collect();
            for &i in pool.choose_multiple(&mut rng, config.ingredients_per_recipe) {
                contains.push(NamedTriple::new(r.clone(), rel::CONTAINS, ingredient(i)));
            }
            class_of.insert(r.clone(), c);
            recipes.push(r);
        }
    }
    Ok(TextureBenchmark {
        images: ImageSet::new(s, s, pixels, recipes)?,
        class_of,
        contains,
    })
}

#[derive(Clone, Debug)]
pub struct ReviewConfig {
    pub topics: usize,
    pub recipes_per_topic: usize,
    pub persons: usize,
    pub reviews_per_recipe: usize,
    pub text_dim: usize,
    /// Weight of the recipe-specific component relative to the topic.
    pub specificity: f64,
    pub review_noise: f64,
    /// Noise on the recipe name and instructions vectors.
    pub description_noise: f64,
    /// Fraction of training reviews whose text describes a different,
    /// randomly chosen recipe.
    pub off_topic: f64,
    pub query_noise: f64,
    pub seed: u64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            topics: 6,
            recipes_per_topic: 10,
            persons: 80,
            reviews_per_recipe: 6,
            text_dim: 32,
            specificity: 0.6,
            review_noise: 1.0,
            description_noise: 0.2,
            off_topic: 0.2,
            query_noise: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReviewQuery {
    pub id: String,
    pub embedding: Vec<f64>,
    pub recipe: String,
}

#[derive(Clone, Debug)]
pub struct ReviewBenchmark {
    /// Likes, authorship and review-support triples for the training reviews.
    pub triples: Vec<NamedTriple>,
    pub review_text: EmbeddingTable,
    /// Raw text rows keyed `<review>#content`, `<recipe>#name` and
    /// `<recipe>#instructions`, for composing initial entity vectors.
    pub raw_text: EmbeddingTable,
    pub review_recipe: BTreeMap<String, String>,
    pub recipes: Vec<String>,
    /// One held-out review per recipe, perturbed.
    pub queries: Vec<ReviewQuery>,
}

/// Reviews whose text is the recipe's latent profile plus noise; a fraction
/// of training reviews talk about another recipe instead. The first review of
/// each recipe is withheld, always on topic, and perturbed to form a query.
pub fn review_benchmark(config: &ReviewConfig) -> Result<ReviewBenchmark> {
    if config.reviews_per_recipe < 2 {
        return Err(invalid("need at least two reviews per recipe"));
    }
    let mut rng = rng::stream(config.seed, "synth/reviews");
    let d = config.text_dim;
    let topics: Vec<Vec<f64>> = (0..config.topics).map(|_| gaussian_vec(&mut rng, d, 1.0)).collect();
    let mut triples = Vec::new();
    let mut review_text = EmbeddingTable::new(d);
    let mut raw_text = EmbeddingTable::new(d);
    let mut review_recipe = BTreeMap::new();
    let mut recipes = Vec::new();
    let mut queries = Vec::new();
    let n_recipes = config.topics * config.recipes_per_topic;
    let mut profiles = Vec::with_capacity(n_recipes);
    for i in 0..n_recipes {
        let r = recipe(i);
        let mut profile = topics[i / config.recipes_per_topic].clone();
        add_scaled(&mut profile, &gaussian_vec(&mut rng, d, config.specificity), 1.0);
        for key in [name_key(&r), instructions_key(&r)] {
            let mut text = profile.clone();
            add_scaled(&mut text, &gaussian_vec(&mut rng, d, config.description_noise), 1.0);
            raw_text.insert(key, text)?;
        }
        profiles.push(profile);
        recipes.push(r);
    }
    let mut next_review = 0;
    for (i, r) in recipes.iter().enumerate() {
        for k in 0..config.reviews_per_recipe {
            let id = review(next_review);
            next_review += 1;
            let about = if k > 0 && rng.gen::<f64>() < config.off_topic {
                rng.gen_range(0..n_recipes)
            } else {
                i
            };
            let mut text = profiles[about].clone();
            add_scaled(&mut text, &gaussian_vec(&mut rng, d, config.review_noise), 1.0);
            if k == 0 {
                add_scaled(&mut text, &gaussian_vec(&mut rng, d, config.query_noise), 1.0);
                queries.push(ReviewQuery {
                    id,
                    embedding: text,
                    recipe: r.clone(),
                });
                continue;
            }
            let author = person(rng.gen_range(0..config.persons));
            triples.push(NamedTriple::new(author.clone(), rel::WROTE, id.clone()));
            triples.push(NamedTriple::new(id.clone(), rel::SUPPORTS, r.clone()));
            triples.push(NamedTriple::new(author, rel::LIKES, r.clone()));
            review_recipe.insert(id.clone(), r.clone());
            raw_text.insert(content_key(&id), text.clone())?;
            review_text.insert(id, text)?;
        }
    }
    Ok(ReviewBenchmark {
        triples,
        review_text,
        raw_text,
        review_recipe,
        recipes,
        queries,
    })
}

/// Fraction of `labels` equal to the most common label (ties to the lower
/// label).
pub fn majority(labels: &[usize]) -> Option<(usize, f64)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let (label, count) = counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })?;
    Some((label, count as f64 / labels.len() as f64))
}

/// Dense points in row-major order, convenient for clustering slices.
pub fn as_slices(points: &[Vec<f64>]) -> Vec<&[f64]> {
    points.iter().map(Vec::as_slice).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn blocks_never_cross() {
        let g = block_graph(&BlockConfig::default()).unwrap();
        assert_eq!(g.likes.len(), 100 * 25);
        for t in &g.likes {
            assert_eq!(g.person_block[&t.head], g.recipe_block[&t.tail]);
        }
        let distinct: BTreeSet<_> = g.likes.iter().collect();
        assert_eq!(distinct.len(), g.likes.len());
    }

    #[test]
    fn interest_likes_stay_in_two_clusters() {
        let g = interest_graph(&InterestConfig::default()).unwrap();
        let mut per_person: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for t in &g.likes {
            per_person.entry(&t.head).or_default().insert(g.recipe_cluster[&t.tail]);
        }
        assert!(per_person.values().all(|s| s.len() == 2));
    }

    #[test]
    fn textures_in_unit_range() {
        let b = texture_images(&TextureConfig::default()).unwrap();
        assert_eq!(b.images.count(), 128);
        assert!(b.images.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn majority_label() {
        assert_eq!(majority(&[1, 2, 2, 3]), Some((2, 0.5)));
        assert_eq!(majority(&[]), None);
    }
}
