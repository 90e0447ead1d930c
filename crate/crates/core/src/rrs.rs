//! Review-based retrieval: text similarity over reviews, link prediction
//! through the aligner, and the rank-averaging hybrid.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::align::{align_embedding, AlignerModel};
use crate::embed::{cosine_similarity, EmbeddingTable};
use crate::error::{invalid, Error, Result};
use crate::kg::{rel, EntityId, KnowledgeGraph};
use crate::kge::KgeModel;
use crate::math;
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct RankedRecipe {
    pub recipe: String,
    pub score: f64,
    pub rank: f64,
}

/// Recipes ordered by rank (ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRanking {
    pub query: String,
    pub entries: Vec<RankedRecipe>,
}

impl QueryRanking {
    /// Build from unordered (recipe, score) pairs, higher score first.
    pub fn from_scores(query: impl Into<String>, scored: Vec<(String, f64)>) -> Self {
        let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
        let ranks = math::tied_ranks_desc(&scores);
        let mut entries: Vec<RankedRecipe> = scored
            .into_iter()
            .zip(ranks)
            .map(|((recipe, score), rank)| RankedRecipe { recipe, score, rank })
            .collect();
        entries.sort_by(|a, b| a.rank.total_cmp(&b.rank).then_with(|| a.recipe.cmp(&b.recipe)));
        Self {
            query: query.into(),
            entries,
        }
    }

    pub fn rank_of(&self, recipe: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.recipe == recipe).map(|e| e.rank)
    }

    pub fn universe(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.recipe.as_str()).collect()
    }

    pub fn top(&self, k: usize) -> &[RankedRecipe] {
        &self.entries[..k.min(self.entries.len())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReviewAggregate {
    Max,
    Mean,
}

#[derive(Clone, Debug)]
pub struct TextRanking {
    pub ranking: QueryRanking,
    /// Recipes dropped because none of their reviews is in the table.
    pub excluded: Vec<String>,
}

/// Score each recipe by its reviews' cosine similarity to the query.
pub fn text_rrs_rank(
    query_id: &str,
    query_emb: &[f64],
    reviews: &EmbeddingTable,
    review_to_recipe: &BTreeMap<String, String>,
    recipes: &[String],
    aggregate: ReviewAggregate,
) -> Result<TextRanking> {
    let mut per_recipe: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (review, emb) in reviews.iter() {
        let recipe = review_to_recipe
            .get(review)
            .ok_or_else(|| Error::Invalid(format!("review `{review}` maps to no recipe")))?;
        per_recipe
            .entry(recipe.as_str())
            .or_default()
            .push(cosine_similarity(query_emb, emb)?);
    }
    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for recipe in recipes {
        match per_recipe.get(recipe.as_str()) {
            Some(sims) => {
                let s = match aggregate {
                    ReviewAggregate::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    ReviewAggregate::Mean => math::mean(sims),
                };
                scored.push((recipe.clone(), s));
            }
            None => excluded.push(recipe.clone()),
        }
    }
    Ok(TextRanking {
        ranking: QueryRanking::from_scores(query_id, scored),
        excluded,
    })
}

/// Align the query into KG space, treat it as a review entity at the head of
/// `rvw:supports:rcp`, and rank the candidate recipes by score.
pub fn kge_rrs_rank(
    query_id: &str,
    model: &KgeModel,
    kg: &KnowledgeGraph,
    aligner: &AlignerModel,
    query_emb: &[f64],
    candidates: &[EntityId],
) -> Result<QueryRanking> {
    let supports = kg.relation_or_err(rel::SUPPORTS)?;
    if supports.index() >= model.num_relations() {
        return Err(Error::UnknownRelation(rel::SUPPORTS.to_string()));
    }
    let aligned = align_embedding(aligner, query_emb)?;
    let scores = model.score_tails(&aligned, supports, candidates)?;
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|(&c, s)| (kg.entity_name(c).to_string(), s))
        .collect();
    Ok(QueryRanking::from_scores(query_id, scored))
}

/// Re-rank by the mean of the two ranks; ties go to the better single rank,
/// then to the recipe id.
pub fn hybrid_rank(a: &QueryRanking, b: &QueryRanking) -> Result<QueryRanking> {
    if a.universe() != b.universe() {
        return Err(invalid("hybrid ranking needs identical recipe universes"));
    }
    let b_ranks: BTreeMap<&str, f64> = b.entries.iter().map(|e| (e.recipe.as_str(), e.rank)).collect();
    let mut keyed: Vec<(f64, f64, &str)> = a
        .entries
        .iter()
        .map(|e| {
            let rb = b_ranks[e.recipe.as_str()];
            ((e.rank + rb) / 2.0, e.rank.min(rb), e.recipe.as_str())
        })
        .collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(y.2)));
    Ok(QueryRanking {
        query: a.query.clone(),
        entries: keyed
            .into_iter()
            .enumerate()
            .map(|(i, (key, _, recipe))| RankedRecipe {
                recipe: recipe.to_string(),
                score: -key,
                rank: (i + 1) as f64,
            })
            .collect(),
    })
}

/// Synthetic query: a held-out review embedding plus Gaussian noise.
pub fn perturb_query(review_emb: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    review_emb.iter().map(|v| v + sigma * rng::standard_normal(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ranking(pairs: &[(&str, f64)]) -> QueryRanking {
        QueryRanking::from_scores("q", pairs.iter().map(|(r, s)| (r.to_string(), *s)).collect())
    }

    #[test]
    fn max_rule_and_self_match() {
        let mut reviews = EmbeddingTable::new(2);
        reviews.insert("RVW:1", vec![1.0, 0.0]).unwrap();
        reviews.insert("RVW:2", vec![0.2, 1.0]).unwrap();
        reviews.insert("RVW:3", vec![0.0, 1.0]).unwrap();
        let map: BTreeMap<String, String> = [("RVW:1", "RCP:a"), ("RVW:2", "RCP:a"), ("RVW:3", "RCP:b")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let recipes = vec!["RCP:a".to_string(), "RCP:b".to_string(), "RCP:c".to_string()];
        let out = text_rrs_rank("q", &[1.0, 0.0], &reviews, &map, &recipes, ReviewAggregate::Max).unwrap();
        assert_eq!(out.ranking.entries[0].recipe, "RCP:a");
        assert_eq!(out.ranking.entries[0].score, 1.0);
        assert_eq!(out.excluded, vec!["RCP:c".to_string()]);
    }

    #[test]
    fn hybrid_key_and_identity() {
        let a = ranking(&[("r1", 9.0), ("r2", 8.0), ("r3", 7.0), ("r4", 6.0), ("r5", 5.0), ("r6", 4.0)]);
        assert_eq!(
            hybrid_rank(&a, &a).unwrap().entries.iter().map(|e| &e.recipe).collect::<Vec<_>>(),
            a.entries.iter().map(|e| &e.recipe).collect::<Vec<_>>()
        );
        // r2 is 2nd in a and 6th in b
        let b = ranking(&[("r1", 9.0), ("r3", 8.0), ("r4", 7.0), ("r5", 6.0), ("r6", 5.0), ("r2", 4.0)]);
        let h = hybrid_rank(&a, &b).unwrap();
        let r2 = h.entries.iter().find(|e| e.recipe == "r2").unwrap();
        assert_eq!(r2.score, -4.0);
    }

    #[test]
    fn hybrid_universe_mismatch() {
        let a = ranking(&[("r1", 1.0), ("r2", 0.5)]);
        let b = ranking(&[("r1", 1.0), ("r3", 0.5)]);
        assert!(hybrid_rank(&a, &b).is_err());
    }
}
