//! Pretrained text-embedding tables, entity initialization from text, and
//! autoencoder dimension reduction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_len, invalid, Error, Result};
use crate::kg::{rel, EntityKind, KnowledgeGraph, Triple};
use crate::math;
use crate::nn::{self, Activation, Adam, Mlp};
use crate::rng;

/// Dense real vectors keyed by entity id or raw text key.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Insert a new row; duplicate keys and wrong widths are rejected.
    pub fn insert(&mut self, key: impl Into<String>, row: Vec<f64>) -> Result<()> {
        let key = key.into();
        if row.len() != self.dim {
            return Err(Error::Invalid(format!(
                "row `{key}` has width {} but table dim is {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding row"));
        }
        if self.rows.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate embedding key `{key}`")));
        }
        self.rows.insert(key, row);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn require(&self, key: &str) -> Result<&[f64]> {
        self.get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.rows.contains_key(key)
    }

    /// Rows in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.rows.keys().map(String::as_str)
    }
}

pub fn name_key(entity: &str) -> String {
    format!("{entity}#name")
}

pub fn instructions_key(entity: &str) -> String {
    format!("{entity}#instructions")
}

pub fn content_key(review: &str) -> String {
    format!("{review}#content")
}

/// Entity initialization vectors from raw text embeddings.
///
/// Recipes average their name and instructions vectors; persons average the
/// content vectors of the reviews they wrote in `train`; reviews,
/// ingredients and categories are copied; clusters average their member
/// recipes. Conditional persons reuse their base person's vector. Images and
/// the placeholder get no row.
pub fn compose_entity_init(kg: &KnowledgeGraph, train: &[Triple], raw: &EmbeddingTable) -> Result<EmbeddingTable> {
    let dim = raw.dim();
    let mut out = EmbeddingTable::new(dim);
    let avg = |rows: &[&[f64]]| math::mean_vector(rows.iter().copied(), dim);

    let mut reviews_by_person: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    if let Some(wrote) = kg.relation(rel::WROTE) {
        for t in train.iter().filter(|t| t.relation == wrote) {
            reviews_by_person
                .entry(kg.entity_name(t.head))
                .or_default()
                .push(kg.entity_name(t.tail));
        }
    }
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    if let Some(belongs) = kg.relation(rel::BELONGS_TO_CLUSTER) {
        for t in kg.triples_of(belongs) {
            members
                .entry(kg.entity_name(t.tail))
                .or_default()
                .push(kg.entity_name(t.head));
        }
    }

    let recipe_vec = |name: &str| -> Result<Vec<f64>> {
        let a = raw.require(&name_key(name))?;
        let b = raw.require(&instructions_key(name))?;
        Ok(avg(&[a, b]).expect("two rows"))
    };
    let person_vec = |name: &str| -> Result<Vec<f64>> {
        let base = name.split('@').next().unwrap_or(name);
        let reviews = reviews_by_person.get(base).map(Vec::as_slice).unwrap_or(&[]);
        if reviews.is_empty() {
            return Err(Error::Invalid(format!("person `{base}` has no training reviews")));
        }
        let rows = reviews
            .iter()
            .map(|r| raw.require(&content_key(r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(avg(&rows).expect("non-empty"))
    };

    for e in kg.entities() {
        let name = kg.entity_name(e);
        let row = match kg.kind(e) {
            EntityKind::Recipe => recipe_vec(name)?,
            EntityKind::Person | EntityKind::ConditionalPerson => person_vec(name)?,
            EntityKind::Review => raw.require(&content_key(name))?.to_vec(),
            EntityKind::Ingredient | EntityKind::Category => raw.require(&name_key(name))?.to_vec(),
            EntityKind::Cluster => {
                let recipes = members
                    .get(name)
                    .ok_or_else(|| Error::MissingEmbedding(name.to_string()))?;
                let rows = recipes.iter().map(|r| recipe_vec(r)).collect::<Result<Vec<_>>>()?;
                math::mean_vector(rows.iter().map(Vec::as_slice), dim).expect("non-empty")
            }
            EntityKind::Image | EntityKind::Placeholder => continue,
        };
        out.insert(name, row)?;
    }
    Ok(out)
}

/// Cosine of the angle between two non-zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let na = math::norm(a);
    let nb = math::norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of a zero vector"));
    }
    Ok((math::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct AutoencoderConfig {
    pub d_out: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl AutoencoderConfig {
    pub fn new(d_out: usize, epochs: usize, seed: u64) -> Self {
        Self {
            d_out,
            epochs,
            batch_size: 16,
            lr: 0.01,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AutoencoderFit {
    /// Bottleneck codes, same keys as the input table.
    pub reduced: EmbeddingTable,
    /// Reconstruction MSE over the full table after the last epoch.
    pub mse: f64,
    /// Full-table MSE after each epoch.
    pub history: Vec<f64>,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

fn table_mse(encoder: &Mlp, decoder: &Mlp, rows: &[&[f64]]) -> Result<f64> {
    let mut losses = Vec::with_capacity(rows.len());
    for x in rows {
        let code = encoder.forward(x)?;
        let rec = decoder.forward(&code)?;
        losses.push(nn::mse(&rec, x)?.0);
    }
    Ok(math::mean(&losses))
}

/// Train a `dim → d_out → dim` autoencoder (Tanh bottleneck, linear output)
/// on the table rows with MSE and Adam; return the bottleneck codes.
pub fn autoencoder_reduce(table: &EmbeddingTable, config: &AutoencoderConfig) -> Result<AutoencoderFit> {
    let dim = table.dim();
    if config.d_out == 0 || config.d_out >= dim {
        return Err(invalid(format!(
            "reduced width {} must be in 1..{dim}",
            config.d_out
        )));
    }
    if table.is_empty() {
        return Err(invalid("cannot reduce an empty table"));
    }
    let mut rng = rng::stream(config.seed, "autoencoder");
    let mut encoder = Mlp::with_widths(&[dim, config.d_out], Activation::Tanh, Activation::Tanh, &mut rng)?;
    let mut decoder = Mlp::with_widths(&[config.d_out, dim], Activation::Identity, Activation::Identity, &mut rng)?;
    let rows: Vec<&[f64]> = table.iter().map(|(_, v)| v).collect();
    let mut enc_adam = Adam::new(encoder.param_count(), config.lr);
    let mut dec_adam = Adam::new(decoder.param_count(), config.lr);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut genc = alloc::vec![0.0; encoder.param_count()];
            let mut gdec = alloc::vec![0.0; decoder.param_count()];
            for &i in chunk {
                let x = rows[i];
                let et = encoder.forward_trace(x)?;
                let dt = decoder.forward_trace(&et.output)?;
                let (_, g) = nn::mse(&dt.output, x)?;
                let g_code = decoder.backward(&dt, &g, &mut gdec)?;
                encoder.backward(&et, &g_code, &mut genc)?;
            }
            let scale = 1.0 / chunk.len() as f64;
            genc.iter_mut().chain(gdec.iter_mut()).for_each(|g| *g *= scale);
            encoder.apply_adam(&mut enc_adam, &genc)?;
            decoder.apply_adam(&mut dec_adam, &gdec)?;
        }
        history.push(table_mse(&encoder, &decoder, &rows)?);
    }
    let mse = table_mse(&encoder, &decoder, &rows)?;
    let mut reduced = EmbeddingTable::new(config.d_out);
    for (key, row) in table.iter() {
        reduced.insert(key, encoder.forward(row)?)?;
    }
    Ok(AutoencoderFit {
        reduced,
        mse,
        history,
        encoder,
        decoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::NamedTriple;
    use alloc::vec;

    #[test]
    fn table_rejects_bad_rows() {
        let mut t = EmbeddingTable::new(2);
        t.insert("RCP:1", vec![0.5, 0.5]).unwrap();
        assert!(t.insert("RCP:1", vec![0.1, 0.2]).is_err());
        assert!(t.insert("RCP:2", vec![0.1]).is_err());
        assert!(t.insert("RCP:3", vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        // 32 / sqrt(14 * 77)
        assert!((c - 0.974631846).abs() < 1e-8);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn small_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_named(&[
            NamedTriple::new("PSN:1", rel::LIKES, "RCP:1"),
            NamedTriple::new("PSN:1", rel::WROTE, "RVW:1"),
            NamedTriple::new("PSN:1", rel::WROTE, "RVW:2"),
            NamedTriple::new("RVW:1", rel::SUPPORTS, "RCP:1"),
            NamedTriple::new("RCP:1", rel::CONTAINS, "ING:1"),
        ])
        .unwrap()
    }

    fn raw() -> EmbeddingTable {
        let mut raw = EmbeddingTable::new(2);
        raw.insert("RCP:1#name", vec![1.0, 3.0]).unwrap();
        raw.insert("RCP:1#instructions", vec![1.0, 3.0]).unwrap();
        raw.insert("RVW:1#content", vec![1.0, 0.0]).unwrap();
        raw.insert("RVW:2#content", vec![0.0, 1.0]).unwrap();
        raw.insert("ING:1#name", vec![0.2, 0.4]).unwrap();
        raw
    }

    #[test]
    fn compose_means() {
        let kg = small_kg();
        let init = compose_entity_init(&kg, kg.triples(), &raw()).unwrap();
        assert_eq!(init.get("RCP:1").unwrap(), &[1.0, 3.0]);
        assert_eq!(init.get("PSN:1").unwrap(), &[0.5, 0.5]);
        assert_eq!(init.get("ING:1").unwrap(), &[0.2, 0.4]);
        assert_eq!(init.get("RVW:2").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn compose_uses_training_reviews_only() {
        let kg = small_kg();
        let wrote = kg.relation(rel::WROTE).unwrap();
        let train: Vec<Triple> = kg
            .triples()
            .iter()
            .copied()
            .filter(|t| !(t.relation == wrote && kg.entity_name(t.tail) == "RVW:2"))
            .collect();
        let init = compose_entity_init(&kg, &train, &raw()).unwrap();
        assert_eq!(init.get("PSN:1").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn compose_person_without_reviews_errors() {
        let kg = KnowledgeGraph::from_named(&[NamedTriple::new("PSN:9", rel::LIKES, "RCP:1")]).unwrap();
        let err = compose_entity_init(&kg, kg.triples(), &raw()).unwrap_err();
        assert!(matches!(err, Error::Invalid(ref m) if m.contains("PSN:9")));
    }

    #[test]
    fn autoencoder_rejects_wide_code() {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 2.0]).unwrap();
        assert!(autoencoder_reduce(&t, &AutoencoderConfig::new(2, 1, 0)).is_err());
    }

    #[test]
    fn autoencoder_constant_rows() {
        let mut t = EmbeddingTable::new(6);
        for i in 0..8 {
            t.insert(format!("k{i}"), vec![0.3, -0.2, 0.5, 0.1, 0.0, -0.4]).unwrap();
        }
        let fit = autoencoder_reduce(&t, &AutoencoderConfig::new(2, 200, 3)).unwrap();
        assert!(fit.mse < 1e-4, "mse {}", fit.mse);
        assert!(fit.history[199] <= fit.history[0]);
        assert_eq!(fit.reduced.dim(), 2);
        assert_eq!(fit.reduced.len(), 8);
    }
}
