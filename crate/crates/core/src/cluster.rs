//! K-means recipe clusters, Elbow/Silhouette model selection, cluster
//! sub-graphs and the person-decoupling transform for conditional
//! recommendation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::embed::EmbeddingTable;
use crate::error::{invalid, Error, Result};
use crate::kg::{rel, EntityKind, KnowledgeGraph, NamedTriple, Triple};
use crate::math;
use crate::rng;
use crate::split::DataSplit;

/// Reported with conditional-recommendation metrics: the decoupled test
/// head already names the test recipe's cluster.
pub const CLUSTER_LEAK_CAVEAT: &str =
    "conditional test heads carry the cluster of the held-out recipe; metrics include that cluster hint";

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ssd: f64,
    /// SSD after each Lloyd update step.
    pub ssd_history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = math::squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn ssd_of(points: &[&[f64]], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    let per: Vec<f64> = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| math::squared_distance(p, &centers[l]))
        .collect();
    math::pairwise_sum(&per)
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| math::squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng::uniform(rng, 0.0, total);
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[idx].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(math::squared_distance(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// k-means++ seeding then Lloyd iterations until the assignment stops
/// changing or `max_iter` updates. An empty cluster is moved onto the point
/// farthest from its current center.
pub fn kmeans_fit(points: &[&[f64]], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::Invalid(format!("k = {k} with {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("points have different widths"));
    }
    let mut rng = rng::stream(seed, "kmeans");
    let mut centers = plus_plus_seeds(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    let mut ssd_history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .zip(&labels)
                    .enumerate()
                    .map(|(i, (p, &l))| (i, math::squared_distance(p, &centers[l])))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centers[c] = points[far].to_vec();
            }
        }
        ssd_history.push(ssd_of(points, &centers, &labels));
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let ssd = ssd_of(points, &centers, &labels);
    Ok(KMeansFit {
        centers,
        labels,
        ssd,
        ssd_history,
        iterations,
    })
}

/// Mean silhouette coefficient; points alone in their cluster score 0.
pub fn silhouette(points: &[&[f64]], labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let dist = |a: &[f64], b: &[f64]| math::sqrt(math::squared_distance(a, b));
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let scores: Vec<f64> = (0..points.len())
        .map(|i| {
            let own = labels[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..points.len() {
                if j != i {
                    sums[labels[j]] += dist(points[i], points[j]);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    math::mean(&scores)
}

#[derive(Clone, Debug)]
pub struct KSelection {
    pub k_best: usize,
    pub ssd: Vec<(usize, f64)>,
    /// `None` where undefined (k = 1).
    pub silhouette: Vec<(usize, Option<f64>)>,
    pub fits: Vec<(usize, KMeansFit)>,
    pub warnings: Vec<String>,
}

/// Best-of-seeds k-means per k, then the discrete elbow: the interior k
/// maximizing `ssd(k−1) − 2·ssd(k) + ssd(k+1)`. Silhouette is reported for
/// confirmation.
pub fn select_k(points: &[&[f64]], k_range: &[usize], seeds: &[u64], max_iter: usize) -> Result<KSelection> {
    if k_range.len() < 3 {
        return Err(invalid("k range needs at least three values"));
    }
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    if k_range.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(invalid("k range must be consecutive and ascending"));
    }
    let distinct: BTreeSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() <= 1 {
        return Ok(KSelection {
            k_best: 1,
            ssd: Vec::new(),
            silhouette: Vec::new(),
            fits: Vec::new(),
            warnings: vec!["all points are identical; using a single cluster".to_string()],
        });
    }
    let mut fits = Vec::new();
    for &k in k_range {
        let mut best: Option<KMeansFit> = None;
        for &s in seeds {
            let fit = kmeans_fit(points, k, s, max_iter)?;
            if best.as_ref().is_none_or(|b| fit.ssd < b.ssd) {
                best = Some(fit);
            }
        }
        fits.push((k, best.expect("non-empty seeds")));
    }
    let ssd: Vec<(usize, f64)> = fits.iter().map(|(k, f)| (*k, f.ssd)).collect();
    let mut k_best = k_range[1];
    let mut best_curv = f64::NEG_INFINITY;
    for i in 1..ssd.len() - 1 {
        let curv = ssd[i - 1].1 - 2.0 * ssd[i].1 + ssd[i + 1].1;
        if curv > best_curv {
            best_curv = curv;
            k_best = ssd[i].0;
        }
    }
    let silhouette: Vec<(usize, Option<f64>)> = fits
        .iter()
        .map(|(k, f)| (*k, (*k >= 2).then(|| self::silhouette(points, &f.labels))))
        .collect();
    let mut warnings = Vec::new();
    let sil_best = silhouette
        .iter()
        .filter_map(|(k, s)| s.map(|s| (*k, s)))
        .fold(None::<(usize, f64)>, |acc, x| match acc {
            Some(a) if a.1 >= x.1 => Some(a),
            _ => Some(x),
        });
    if let Some((k_sil, _)) = sil_best {
        if k_sil != k_best {
            warnings.push(format!("silhouette peaks at k = {k_sil} but the elbow is at k = {k_best}"));
        }
    }
    Ok(KSelection {
        k_best,
        ssd,
        silhouette,
        fits,
        warnings,
    })
}

/// Recipe → cluster assignment with the cluster centers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    pub assignment: BTreeMap<String, usize>,
    pub ssd: f64,
}

impl ClusterModel {
    pub fn from_fit(keys: &[&str], fit: &KMeansFit) -> Self {
        Self {
            k: fit.centers.len(),
            centers: fit.centers.clone(),
            assignment: keys
                .iter()
                .zip(&fit.labels)
                .map(|(k, &l)| (k.to_string(), l))
                .collect(),
            ssd: fit.ssd,
        }
    }

    pub fn cluster_of(&self, recipe: &str) -> Result<usize> {
        self.assignment
            .get(recipe)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("recipe `{recipe}` has no cluster")))
    }
}

/// Cluster the rows of a table.
pub fn kmeans_table(table: &EmbeddingTable, k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    let (keys, points): (Vec<&str>, Vec<&[f64]>) = table.iter().unzip();
    let fit = kmeans_fit(&points, k, seed, max_iter)?;
    Ok(ClusterModel::from_fit(&keys, &fit))
}

pub fn cluster_name(index: usize) -> String {
    format!("CLUSTER:{index}")
}

/// `rcp:belongs-to:cluster` for every recipe in `kg`, then
/// `psn:relates-to:cluster` for each (person, cluster) with at least one
/// liked training recipe in that cluster.
pub fn build_cluster_triples(kg: &KnowledgeGraph, train: &[Triple], model: &ClusterModel) -> Result<Vec<NamedTriple>> {
    let mut out = Vec::new();
    for r in kg.entities_of_kind(EntityKind::Recipe) {
        let name = kg.entity_name(r);
        let c = model.cluster_of(name)?;
        out.push(NamedTriple::new(name, rel::BELONGS_TO_CLUSTER, cluster_name(c)));
    }
    if let Some(likes) = kg.relation(rel::LIKES) {
        let mut seen = BTreeSet::new();
        for t in train.iter().filter(|t| t.relation == likes) {
            let c = model.cluster_of(kg.entity_name(t.tail))?;
            if seen.insert((t.head, c)) {
                out.push(NamedTriple::new(kg.entity_name(t.head), rel::RELATES_TO_CLUSTER, cluster_name(c)));
            }
        }
    }
    Ok(out)
}

/// Name of the conditional node for a person within a cluster.
pub fn conditional_name(person: &str, cluster: usize) -> String {
    format!("{person}@{}", cluster_name(cluster))
}

/// Rewrite the head of every `psn:likes:rcp` triple, in every part, to the
/// conditional node `<person>@CLUSTER:<cluster of the recipe>`. New nodes are
/// interned into `kg`; other triples are untouched.
pub fn decouple_persons(kg: &mut KnowledgeGraph, split: &DataSplit, model: &ClusterModel) -> Result<DataSplit> {
    let likes = kg.relation_or_err(rel::LIKES)?;
    let mut rewrite = |part: &[Triple]| -> Result<Vec<Triple>> {
        part.iter()
            .map(|t| {
                if t.relation != likes {
                    return Ok(*t);
                }
                let c = model.cluster_of(kg.entity_name(t.tail))?;
                let base = kg.entity_name(t.head).split('@').next().unwrap_or("").to_string();
                let head = kg.intern_entity(&conditional_name(&base, c))?;
                Ok(Triple::new(head, t.relation, t.tail))
            })
            .collect()
    };
    Ok(DataSplit {
        relation: split.relation,
        train: rewrite(&split.train)?,
        valid: rewrite(&split.valid)?,
        test: rewrite(&split.test)?,
        holdout: split.holdout.as_deref().map(&mut rewrite).transpose()?,
        seed: split.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn k_equals_distinct_points_gives_zero_ssd() {
        let rows = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![-3.0, 2.0]];
        let fit = kmeans_fit(&pts(&rows), 3, 4, 50).unwrap();
        assert_eq!(fit.ssd, 0.0);
        assert!(kmeans_fit(&pts(&rows), 4, 4, 50).is_err());
    }

    #[test]
    fn identical_points_select_one() {
        let rows = vec![vec![1.0, 1.0]; 10];
        let sel = select_k(&pts(&rows), &[2, 3, 4], &[1], 20).unwrap();
        assert_eq!(sel.k_best, 1);
        assert_eq!(sel.warnings.len(), 1);
    }

    #[test]
    fn silhouette_of_far_duplicate_groups() {
        let rows = vec![vec![0.0], vec![0.0], vec![0.0], vec![9.0], vec![9.0]];
        let s = silhouette(&pts(&rows), &[0, 0, 0, 1, 1]);
        assert_eq!(s, 1.0);
    }

    fn model(pairs: &[(&str, usize)]) -> ClusterModel {
        ClusterModel {
            k: pairs.iter().map(|p| p.1).max().unwrap() + 1,
            centers: Vec::new(),
            assignment: pairs.iter().map(|(r, c)| (r.to_string(), *c)).collect(),
            ssd: 0.0,
        }
    }

    #[test]
    fn single_recipe_cluster_triples() {
        let kg = KnowledgeGraph::from_named(&[NamedTriple::new("PSN:1", rel::LIKES, "RCP:1")]).unwrap();
        let out = build_cluster_triples(&kg, kg.triples(), &model(&[("RCP:1", 0)])).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], NamedTriple::new("RCP:1", rel::BELONGS_TO_CLUSTER, "CLUSTER:0"));
        assert_eq!(out[1], NamedTriple::new("PSN:1", rel::RELATES_TO_CLUSTER, "CLUSTER:0"));
        let err = build_cluster_triples(&kg, kg.triples(), &model(&[("RCP:2", 0)]));
        assert!(err.is_err());
    }

    fn fig6() -> (KnowledgeGraph, ClusterModel) {
        let kg = KnowledgeGraph::from_named(&[
            NamedTriple::new("PSN:110", rel::LIKES, "RCP:14"),
            NamedTriple::new("PSN:110", rel::LIKES, "RCP:38"),
            NamedTriple::new("PSN:110", rel::LIKES, "RCP:502"),
            NamedTriple::new("PSN:110", rel::LIKES, "RCP:5"),
            NamedTriple::new("PSN:110", rel::LIKES, "RCP:108"),
        ])
        .unwrap();
        let m = model(&[("RCP:14", 2), ("RCP:38", 2), ("RCP:502", 2), ("RCP:5", 24), ("RCP:108", 24)]);
        (kg, m)
    }

    #[test]
    fn relates_to_exactly_liked_clusters() {
        let (kg, m) = fig6();
        let out = build_cluster_triples(&kg, kg.triples(), &m).unwrap();
        let relates: Vec<&str> = out
            .iter()
            .filter(|t| t.relation == rel::RELATES_TO_CLUSTER)
            .map(|t| t.tail.as_str())
            .collect();
        assert_eq!(relates, ["CLUSTER:2", "CLUSTER:24"]);
    }

    #[test]
    fn decouple_two_conditional_nodes() {
        let (mut kg, m) = fig6();
        let split = DataSplit {
            relation: kg.relation(rel::LIKES).unwrap(),
            train: kg.triples()[..4].to_vec(),
            valid: Vec::new(),
            test: kg.triples()[4..].to_vec(),
            holdout: None,
            seed: 0,
        };
        let cr = decouple_persons(&mut kg, &split, &m).unwrap();
        assert_eq!(cr.train.len(), 4);
        assert_eq!(cr.test.len(), 1);
        let heads: BTreeSet<&str> = cr.train.iter().chain(&cr.test).map(|t| kg.entity_name(t.head)).collect();
        assert_eq!(
            heads.into_iter().collect::<Vec<_>>(),
            ["PSN:110@CLUSTER:2", "PSN:110@CLUSTER:24"]
        );
        assert_eq!(kg.kind(cr.test[0].head), EntityKind::ConditionalPerson);
    }
}
