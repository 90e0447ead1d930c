use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use recipekg_core::kg::{derive_cooccurrence, filter_min_degree, rel};
use recipekg_core::split::{split_leave_one_out, split_ratio, zero_shot_holdout};
use recipekg_core::{KnowledgeGraph, NamedTriple, Triple};

type Edge = (usize, usize);

fn likes_graph(edges: &[Edge]) -> KnowledgeGraph {
    let named: Vec<NamedTriple> = edges
        .iter()
        .map(|&(p, r)| NamedTriple::new(format!("PSN:{p}"), rel::LIKES, format!("RCP:{r}")))
        .collect();
    KnowledgeGraph::from_named(&named).unwrap()
}

fn edges() -> impl Strategy<Value = Vec<Edge>> {
    prop::collection::btree_set((0..12usize, 0..15usize), 1..90).prop_map(|s| s.into_iter().collect())
}

fn names(kg: &KnowledgeGraph, ts: &[Triple]) -> BTreeSet<(String, String)> {
    ts.iter()
        .map(|t| (kg.entity_name(t.head).to_string(), kg.entity_name(t.tail).to_string()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_matches_two_pass_count(es in edges(), min_r in 1..5usize, min_u in 1..5usize) {
        let kg = likes_graph(&es);
        let out = filter_min_degree(&kg, rel::LIKES, min_r, min_u).unwrap();
        let mut rdeg: BTreeMap<usize, usize> = BTreeMap::new();
        for &(_, r) in &es {
            *rdeg.entry(r).or_default() += 1;
        }
        let pass1: Vec<Edge> = es.iter().copied().filter(|(_, r)| rdeg[r] >= min_r).collect();
        let mut udeg: BTreeMap<usize, usize> = BTreeMap::new();
        for &(p, _) in &pass1 {
            *udeg.entry(p).or_default() += 1;
        }
        let expected: BTreeSet<(String, String)> = pass1
            .iter()
            .filter(|(p, _)| udeg[p] >= min_u)
            .map(|(p, r)| (format!("PSN:{p}"), format!("RCP:{r}")))
            .collect();
        let got = names(&out.graph, out.graph.triples());
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(out.empty, expected.is_empty());
        // never adds anything
        prop_assert!(got.is_subset(&names(&kg, kg.triples())));
    }

    #[test]
    fn leave_one_out_holds_one_per_active_head(es in edges(), seed in any::<u64>()) {
        let kg = likes_graph(&es);
        let sp = split_leave_one_out(&kg, rel::LIKES, seed).unwrap();
        let mut deg: BTreeMap<usize, usize> = BTreeMap::new();
        for &(p, _) in &es {
            *deg.entry(p).or_default() += 1;
        }
        let mut held: BTreeMap<String, usize> = BTreeMap::new();
        for t in &sp.test {
            *held.entry(kg.entity_name(t.head).to_string()).or_default() += 1;
        }
        for (p, d) in &deg {
            let n = held.get(&format!("PSN:{p}")).copied().unwrap_or(0);
            prop_assert_eq!(n, usize::from(*d >= 2));
        }
        prop_assert!(sp.valid.is_empty());
        let all = names(&kg, kg.triples());
        let train = names(&kg, &sp.train);
        let test = names(&kg, &sp.test);
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.union(&test).cloned().collect::<BTreeSet<_>>(), all);
    }

    #[test]
    fn ratio_split_partitions_deterministically(es in edges(), seed in any::<u64>(), a in 1..8u32, b in 0..3u32) {
        let kg = likes_graph(&es);
        let train_f = f64::from(a) / 10.0;
        let valid_f = f64::from(b.min(9 - a.min(9))) / 10.0;
        let f = [train_f, valid_f, 1.0 - train_f - valid_f];
        let sp = split_ratio(&kg, rel::LIKES, f, seed).unwrap();
        let n = es.len();
        let sizes = [sp.train.len(), sp.valid.len(), sp.test.len()];
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        for (s, frac) in sizes.iter().zip(f) {
            prop_assert!((*s as f64 - frac * n as f64).abs() < 1.0 + 1e-9);
        }
        let mut seen: Vec<Triple> = sp.train.iter().chain(&sp.valid).chain(&sp.test).copied().collect();
        seen.sort();
        let mut all = kg.triples().to_vec();
        all.sort();
        prop_assert_eq!(seen, all);
        prop_assert_eq!(split_ratio(&kg, rel::LIKES, f, seed).unwrap(), sp);
    }

    #[test]
    fn zero_shot_takes_least_popular_users(es in edges(), seed in any::<u64>()) {
        let users: BTreeSet<usize> = es.iter().map(|e| e.0).collect();
        prop_assume!(users.len() >= 4);
        let mut kg = likes_graph(&es);
        let Ok(sp) = zero_shot_holdout(&mut kg, rel::LIKES, 2, seed) else {
            // only when the rest cannot fill validation and test
            let held_max: usize = {
                let mut d: BTreeMap<usize, usize> = BTreeMap::new();
                for &(p, _) in &es { *d.entry(p).or_default() += 1; }
                let mut v: Vec<usize> = d.into_values().collect();
                v.sort_unstable();
                v.iter().rev().take(2).sum()
            };
            prop_assert!(es.len() < 3 * held_max);
            return Ok(());
        };
        let mut rdeg: BTreeMap<usize, f64> = BTreeMap::new();
        for &(_, r) in &es {
            *rdeg.entry(r).or_default() += 1.0;
        }
        let mean_deg = |p: usize| {
            let rs: Vec<f64> = es.iter().filter(|e| e.0 == p).map(|e| rdeg[&e.1]).collect();
            rs.iter().sum::<f64>() / rs.len() as f64
        };
        let holdout = sp.holdout.clone().unwrap();
        let chosen: BTreeSet<usize> = holdout
            .iter()
            .map(|t| kg.entity_name(t.head)[4..].parse().unwrap())
            .collect();
        prop_assert_eq!(chosen.len(), 2);
        let worst_chosen = chosen.iter().map(|&p| mean_deg(p)).fold(f64::MIN, f64::max);
        let best_other = users.difference(&chosen).map(|&p| mean_deg(p)).fold(f64::MAX, f64::min);
        prop_assert!(worst_chosen <= best_other);
        prop_assert_eq!(sp.valid.len(), holdout.len());
        prop_assert_eq!(sp.test.len(), holdout.len());
        prop_assert!(kg.entity("PSN:ZSH").is_some());
    }

    #[test]
    fn cooccurrence_is_every_shared_pair(contains in prop::collection::btree_set((0..6usize, 0..8usize), 1..30)) {
        let named: Vec<NamedTriple> = contains
            .iter()
            .map(|&(r, i)| NamedTriple::new(format!("RCP:{r}"), rel::CONTAINS, format!("ING:{i}")))
            .collect();
        let kg = KnowledgeGraph::from_named(&named).unwrap();
        let mut expected = BTreeSet::new();
        for &(r, i) in &contains {
            for &(r2, j) in &contains {
                if r == r2 && i != j {
                    let (a, b) = (format!("ING:{}", i.min(j)), format!("ING:{}", i.max(j)));
                    expected.insert((a, b));
                }
            }
        }
        let got: BTreeSet<(String, String)> = derive_cooccurrence(&kg)
            .into_iter()
            .map(|t| {
                let (a, b) = (t.head, t.tail);
                if a <= b { (a, b) } else { (b, a) }
            })
            .collect();
        // ingredient ids are two-digit free, so string order is numeric order
        prop_assert_eq!(got, expected);
    }
}
