//! Train/validation/test split protocols.
//!
//! Every split partitions the triples of one relation. Triples of other
//! relations (auxiliary sub-graphs) always go to the training part.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::kg::{EntityId, EntityKind, KnowledgeGraph, RelationId, Triple, PLACEHOLDER};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit {
    pub relation: RelationId,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub holdout: Option<Vec<Triple>>,
    pub seed: u64,
}

impl DataSplit {
    /// Training triples of the split relation only.
    pub fn train_relation(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.train.iter().filter(move |t| t.relation == self.relation)
    }

    /// Append auxiliary triples to the training part, skipping duplicates.
    pub fn extend_train(&mut self, extra: &[Triple]) {
        let mut present: alloc::collections::BTreeSet<Triple> = self.train.iter().copied().collect();
        for &t in extra {
            if present.insert(t) {
                self.train.push(t);
            }
        }
    }

    /// Known positives per head (train and valid parts of any relation),
    /// used as the filter set for filtered ranking.
    pub fn known_positives(&self) -> BTreeMap<(EntityId, RelationId), Vec<EntityId>> {
        let mut out: BTreeMap<(EntityId, RelationId), Vec<EntityId>> = BTreeMap::new();
        for t in self.train.iter().chain(&self.valid) {
            out.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        for v in out.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        out
    }

    pub fn holdout_len(&self) -> usize {
        self.holdout.as_ref().map_or(0, Vec::len)
    }
}

fn auxiliary(kg: &KnowledgeGraph, relation: RelationId) -> impl Iterator<Item = Triple> + '_ {
    kg.triples().iter().copied().filter(move |t| t.relation != relation)
}

/// Hold out one uniformly chosen interaction per head with at least two.
pub fn split_leave_one_out(kg: &KnowledgeGraph, relation: &str, seed: u64) -> Result<DataSplit> {
    let rel = kg.relation_or_err(relation)?;
    let mut by_head: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
    let triples: Vec<Triple> = kg.triples_of(rel).copied().collect();
    for (i, t) in triples.iter().enumerate() {
        by_head.entry(t.head).or_default().push(i);
    }
    let mut rng = rng::stream(seed, "split/loo");
    let mut is_test = alloc::vec![false; triples.len()];
    for idx in by_head.values() {
        if idx.len() >= 2 {
            let pick = idx[rng.gen_range(0..idx.len())];
            is_test[pick] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (t, held) in triples.iter().zip(&is_test) {
        if *held {
            test.push(*t);
        } else {
            train.push(*t);
        }
    }
    train.extend(auxiliary(kg, rel));
    Ok(DataSplit {
        relation: rel,
        train,
        valid: Vec::new(),
        test,
        holdout: None,
        seed,
    })
}

/// Largest-remainder apportionment of `n` items into parts. Ties in the
/// fractional remainder go to the earlier part.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - libm::floor(exact[a]);
        let rb = exact[b] - libm::floor(exact[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// Uniform random partition of one relation's triples by `fractions`
/// (train, valid, test).
pub fn split_ratio(kg: &KnowledgeGraph, relation: &str, fractions: [f64; 3], seed: u64) -> Result<DataSplit> {
    check_fractions(fractions)?;
    let rel = kg.relation_or_err(relation)?;
    let triples: Vec<Triple> = kg.triples_of(rel).copied().collect();
    let sizes = largest_remainder(triples.len(), &fractions);
    let mut rng = rng::stream(seed, "split/ratio");
    let parts = partition(&triples, &sizes, &mut rng);
    let [mut train, valid, test]: [Vec<Triple>; 3] = parts.try_into().expect("three parts");
    train.extend(auxiliary(kg, rel));
    Ok(DataSplit {
        relation: rel,
        train,
        valid,
        test,
        holdout: None,
        seed,
    })
}

/// Shuffle-assign labels then emit each part in input order.
fn partition(triples: &[Triple], sizes: &[usize], rng: &mut rng::Rng) -> Vec<Vec<Triple>> {
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(rng);
    let mut label = alloc::vec![0usize; triples.len()];
    let mut cursor = 0;
    for (part, &size) in sizes.iter().enumerate() {
        for &i in &order[cursor..cursor + size] {
            label[i] = part;
        }
        cursor += size;
    }
    let mut parts = alloc::vec![Vec::new(); sizes.len()];
    for (t, &l) in triples.iter().zip(&label) {
        parts[l].push(*t);
    }
    parts
}

/// Zero-shot holdout: remove every interaction of the `n_users` users whose
/// interacted recipes are least popular, then split the rest so validation
/// and test each match the holdout size. Adds the `PSN:ZSH` placeholder to
/// `kg`.
///
/// Users are ordered by the mean interaction degree of their recipes; ties
/// are broken by a seeded shuffle.
pub fn zero_shot_holdout(kg: &mut KnowledgeGraph, relation: &str, n_users: usize, seed: u64) -> Result<DataSplit> {
    kg.intern_entity(PLACEHOLDER)?;
    if n_users == 0 {
        let mut split = split_ratio(kg, relation, [0.8, 0.1, 0.1], seed)?;
        split.holdout = Some(Vec::new());
        return Ok(split);
    }
    let rel = kg.relation_or_err(relation)?;
    let triples: Vec<Triple> = kg.triples_of(rel).copied().collect();
    let mut tail_deg = alloc::vec![0usize; kg.num_entities()];
    let mut by_user: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    for t in &triples {
        tail_deg[t.tail.index()] += 1;
        by_user.entry(t.head).or_default().push(t.tail);
    }
    by_user.retain(|&u, _| kg.kind(u) != EntityKind::Placeholder);
    if n_users > by_user.len() {
        return Err(invalid(format!(
            "requested {n_users} zero-shot users but only {} are eligible",
            by_user.len()
        )));
    }
    let mut rng = rng::stream(seed, "split/zero-shot");
    let mut ranked: Vec<(f64, u64, EntityId)> = by_user
        .iter()
        .map(|(&u, recipes)| {
            let mean = recipes.iter().map(|r| tail_deg[r.index()] as f64).sum::<f64>() / recipes.len() as f64;
            (mean, rng.gen::<u64>(), u)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let chosen: alloc::collections::BTreeSet<EntityId> = ranked.iter().take(n_users).map(|x| x.2).collect();

    let (holdout, rest): (Vec<Triple>, Vec<Triple>) = triples.iter().partition(|t| chosen.contains(&t.head));
    let h = holdout.len();
    if rest.len() < 2 * h {
        return Err(Error::Invalid(format!(
            "{} remaining interactions cannot fill validation and test sets of {h} each",
            rest.len()
        )));
    }
    let parts = partition(&rest, &[rest.len() - 2 * h, h, h], &mut rng);
    let [mut train, valid, test]: [Vec<Triple>; 3] = parts.try_into().expect("three parts");
    train.extend(auxiliary(kg, rel));
    Ok(DataSplit {
        relation: rel,
        train,
        valid,
        test,
        holdout: Some(holdout),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{rel, NamedTriple};
    use alloc::string::String;
    use alloc::vec;

    fn graph(edges: &[(usize, usize)]) -> KnowledgeGraph {
        let named: Vec<NamedTriple> = edges
            .iter()
            .map(|(p, r)| NamedTriple::new(format!("PSN:{p}"), rel::LIKES, format!("RCP:{r}")))
            .collect();
        KnowledgeGraph::from_named(&named).unwrap()
    }

    #[test]
    fn loo_degenerate_and_regular_person() {
        let kg = graph(&[(0, 0), (1, 0), (1, 1), (1, 2), (1, 3), (1, 4)]);
        let split = split_leave_one_out(&kg, rel::LIKES, 3).unwrap();
        let p0 = kg.entity("PSN:0").unwrap();
        let p1 = kg.entity("PSN:1").unwrap();
        assert_eq!(split.test.iter().filter(|t| t.head == p0).count(), 0);
        assert_eq!(split.test.iter().filter(|t| t.head == p1).count(), 1);
        assert_eq!(split.train.len(), 5);
    }

    #[test]
    fn loo_missing_relation() {
        let kg = graph(&[(0, 0)]);
        assert!(matches!(
            split_leave_one_out(&kg, "psn:hates:rcp", 1),
            Err(Error::UnknownRelation(_))
        ));
    }

    #[test]
    fn ratio_sizes() {
        let kg = graph(&(0..10).map(|i| (i, i)).collect::<Vec<_>>());
        let s = split_ratio(&kg, rel::LIKES, [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        let s = split_ratio(&kg, rel::LIKES, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (10, 0, 0));
        assert!(split_ratio(&kg, rel::LIKES, [0.8, 0.1, 0.2], 1).is_err());
    }

    #[test]
    fn largest_remainder_exact() {
        assert_eq!(largest_remainder(1003, &[0.8, 0.1, 0.1]), vec![803, 100, 100]);
        assert_eq!(largest_remainder(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(largest_remainder(3, &[0.5, 0.5, 0.0]), vec![2, 1, 0]);
    }

    #[test]
    fn auxiliary_goes_to_train() {
        let mut named: Vec<NamedTriple> = (0..10)
            .map(|i| NamedTriple::new(format!("PSN:{i}"), rel::LIKES, format!("RCP:{i}")))
            .collect();
        named.push(NamedTriple::new("RCP:1", rel::CONTAINS, "ING:1"));
        let kg = KnowledgeGraph::from_named(&named).unwrap();
        let s = split_ratio(&kg, rel::LIKES, [0.0, 0.5, 0.5], 9).unwrap();
        assert_eq!(s.train.len(), 1);
        assert_eq!(s.train[0].relation, kg.relation(rel::CONTAINS).unwrap());
    }

    #[test]
    fn zero_shot_without_users_adds_placeholder() {
        let mut kg = graph(&(0..10).map(|i| (i, i)).collect::<Vec<_>>());
        let s = zero_shot_holdout(&mut kg, rel::LIKES, 0, 4).unwrap();
        assert!(kg.entity(PLACEHOLDER).is_some());
        assert_eq!(s.holdout_len(), 0);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn zero_shot_prefers_isolated_recipes() {
        // Users 0 and 1 like degree-1 recipes; user 2 likes the popular one.
        let mut edges = vec![(0, 100), (1, 101), (2, 9)];
        for p in 3..11 {
            edges.push((p, 9));
            edges.push((p, 50 + p));
        }
        let mut kg = graph(&edges);
        let s = zero_shot_holdout(&mut kg, rel::LIKES, 2, 11).unwrap();
        let held: Vec<String> = s
            .holdout
            .as_ref()
            .unwrap()
            .iter()
            .map(|t| String::from(kg.entity_name(t.head)))
            .collect();
        assert_eq!(held.len(), 2);
        assert!(held.contains(&String::from("PSN:0")));
        assert!(held.contains(&String::from("PSN:1")));
        assert_eq!(s.valid.len(), 2);
        assert_eq!(s.test.len(), 2);
    }

    #[test]
    fn zero_shot_too_many_users() {
        let mut kg = graph(&[(0, 0), (1, 1)]);
        assert!(zero_shot_holdout(&mut kg, rel::LIKES, 3, 1).is_err());
    }
}
