//! Knowledge-graph data model: interned vocabularies plus a typed,
//! deduplicated triple list.
//!
//! Entity kinds are carried by the id prefix (`RCP:`, `PSN:`, `RVW:`,
//! `ING:`, `CAT:`, `IMG:`, `CLUSTER:`). Relation names of the form
//! `<head>:<verb>:<tail>` with known type abbreviations get a kind signature
//! that every inserted triple must satisfy; other relation names are untyped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Canonical relation names used across the pipeline.
pub mod rel {
    pub const LIKES: &str = "psn:likes:rcp";
    pub const WROTE: &str = "psn:wrote:rvw";
    pub const POSTED: &str = "psn:posted:rcp";
    pub const SUPPORTS: &str = "rvw:supports:rcp";
    pub const CONTAINS: &str = "rcp:contains:ing";
    pub const IN_CATEGORY: &str = "rcp:belongs-to:cat";
    pub const SEEN_WITH: &str = "ing:seen-with:ing";
    pub const IMAGE_OF: &str = "img:is-for:rcp";
    pub const BELONGS_TO_CLUSTER: &str = "rcp:belongs-to:cluster";
    pub const RELATES_TO_CLUSTER: &str = "psn:relates-to:cluster";
}

/// Name of the zero-shot placeholder person.
pub const PLACEHOLDER: &str = "PSN:ZSH";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Recipe,
    Person,
    Review,
    Ingredient,
    Category,
    Image,
    Cluster,
    ConditionalPerson,
    Placeholder,
}

impl EntityKind {
    /// Infer the kind from an entity string.
    pub fn from_name(name: &str) -> Result<Self> {
        if name == PLACEHOLDER {
            return Ok(Self::Placeholder);
        }
        let kind = if name.starts_with("RCP:") {
            Self::Recipe
        } else if name.starts_with("PSN:") {
            if name.contains("@CLUSTER:") {
                Self::ConditionalPerson
            } else {
                Self::Person
            }
        } else if name.starts_with("RVW:") {
            Self::Review
        } else if name.starts_with("ING:") {
            Self::Ingredient
        } else if name.starts_with("CAT:") {
            Self::Category
        } else if name.starts_with("IMG:") {
            Self::Image
        } else if name.starts_with("CLUSTER:") {
            Self::Cluster
        } else {
            return Err(Error::UnknownKind(name.to_string()));
        };
        Ok(kind)
    }

    pub fn is_person_like(self) -> bool {
        matches!(
            self,
            Self::Person | Self::ConditionalPerson | Self::Placeholder
        )
    }
}

const PERSON_KINDS: &[EntityKind] = &[
    EntityKind::Person,
    EntityKind::ConditionalPerson,
    EntityKind::Placeholder,
];

fn kinds_for_abbrev(abbrev: &str) -> Option<&'static [EntityKind]> {
    Some(match abbrev {
        "psn" | "person" => PERSON_KINDS,
        "rcp" | "recipe" => &[EntityKind::Recipe],
        "rvw" | "review" => &[EntityKind::Review],
        "ing" | "ingredient" => &[EntityKind::Ingredient],
        "cat" | "category" => &[EntityKind::Category],
        "img" | "image" => &[EntityKind::Image],
        "cluster" | "recipe-cluster" => &[EntityKind::Cluster],
        _ => return None,
    })
}

/// Allowed head and tail kinds of a relation; `None` accepts anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelationSignature {
    pub head: Option<&'static [EntityKind]>,
    pub tail: Option<&'static [EntityKind]>,
}

impl RelationSignature {
    pub fn from_name(name: &str) -> Self {
        let parts: Vec<&str> = name.split(':').collect();
        if parts.len() == 3 {
            if let (Some(head), Some(tail)) = (kinds_for_abbrev(parts[0]), kinds_for_abbrev(parts[2])) {
                return Self {
                    head: Some(head),
                    tail: Some(tail),
                };
            }
        }
        Self {
            head: None,
            tail: None,
        }
    }

    pub fn side(&self, side: Side) -> Option<&'static [EntityKind]> {
        match side {
            Side::Head => self.head,
            Side::Tail => self.tail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// A triple spelled with entity and relation strings, before interning.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NamedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl NamedTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl fmt::Display for NamedTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.head, self.relation, self.tail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    entity_kinds: Vec<EntityKind>,
    entity_index: BTreeMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_sigs: Vec<RelationSignature>,
    relation_index: BTreeMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: BTreeSet<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a graph from named triples in order; duplicates collapse.
    pub fn from_named<'a, I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a NamedTriple>,
    {
        let mut kg = Self::new();
        for t in triples {
            kg.insert(&t.head, &t.relation, &t.tail)?;
        }
        Ok(kg)
    }

    pub fn intern_entity(&mut self, name: &str) -> Result<EntityId> {
        if let Some(&id) = self.entity_index.get(name) {
            return Ok(id);
        }
        if name.is_empty() || name.contains('\t') || name.contains('\n') {
            return Err(Error::Invalid(format!("illegal entity name {name:?}")));
        }
        let kind = EntityKind::from_name(name)?;
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_string());
        self.entity_kinds.push(kind);
        self.entity_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn intern_relation(&mut self, name: &str) -> Result<RelationId> {
        if let Some(&id) = self.relation_index.get(name) {
            return Ok(id);
        }
        if name.is_empty() || name.contains('\t') || name.contains('\n') {
            return Err(Error::Invalid(format!("illegal relation name {name:?}")));
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_string());
        self.relation_sigs.push(RelationSignature::from_name(name));
        self.relation_index.insert(name.to_string(), id);
        Ok(id)
    }

    fn check_signature(&self, head: EntityId, relation: RelationId, tail: EntityId) -> Result<()> {
        let sig = self.relation_sigs[relation.index()];
        for (side, id, label) in [(Side::Head, head, "head"), (Side::Tail, tail, "tail")] {
            if let Some(kinds) = sig.side(side) {
                if !kinds.contains(&self.entity_kinds[id.index()]) {
                    return Err(Error::Signature {
                        relation: self.relation_names[relation.index()].clone(),
                        entity: self.entity_names[id.index()].clone(),
                        side: label,
                    });
                }
            }
        }
        Ok(())
    }

    /// Intern and insert; returns the triple and whether it was new.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> Result<(Triple, bool)> {
        let h = self.intern_entity(head)?;
        let r = self.intern_relation(relation)?;
        let t = self.intern_entity(tail)?;
        let triple = Triple::new(h, r, t);
        let added = self.insert_triple(triple)?;
        Ok((triple, added))
    }

    pub fn insert_named(&mut self, t: &NamedTriple) -> Result<(Triple, bool)> {
        self.insert(&t.head, &t.relation, &t.tail)
    }

    /// Insert an already-interned triple.
    pub fn insert_triple(&mut self, triple: Triple) -> Result<bool> {
        self.check_ids(triple)?;
        self.check_signature(triple.head, triple.relation, triple.tail)?;
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn check_ids(&self, t: Triple) -> Result<()> {
        for e in [t.head, t.tail] {
            if e.index() >= self.entity_names.len() {
                return Err(Error::IdOutOfRange(e.index()));
            }
        }
        if t.relation.index() >= self.relation_names.len() {
            return Err(Error::IdOutOfRange(t.relation.index()));
        }
        Ok(())
    }

    /// Graph with the same vocabularies (same ids) but only the given triples.
    pub fn with_triples<'a, I>(&self, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Triple>,
    {
        let mut out = Self {
            triples: Vec::new(),
            triple_set: BTreeSet::new(),
            ..self.clone()
        };
        for &t in triples {
            out.insert_triple(t)?;
        }
        Ok(out)
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn entity_or_err(&self, name: &str) -> Result<EntityId> {
        self.entity(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn relation_or_err(&self, name: &str) -> Result<RelationId> {
        self.relation(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.index()]
    }

    pub fn kind(&self, id: EntityId) -> EntityKind {
        self.entity_kinds[id.index()]
    }

    pub fn signature(&self, id: RelationId) -> RelationSignature {
        self.relation_sigs[id.index()]
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = EntityId> + '_ {
        self.entities().filter(move |&e| self.kind(e) == kind)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn triples_of(&self, relation: RelationId) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.iter().filter(move |t| t.relation == relation)
    }

    pub fn named(&self, t: &Triple) -> NamedTriple {
        NamedTriple::new(
            self.entity_name(t.head),
            self.relation_name(t.relation),
            self.entity_name(t.tail),
        )
    }

    pub fn to_named(&self) -> Vec<NamedTriple> {
        self.triples.iter().map(|t| self.named(t)).collect()
    }

    /// Deterministic candidate pool for one side of a relation.
    ///
    /// Typed sides yield every entity of an allowed kind, placeholders
    /// excluded; untyped sides yield the entities seen on that side.
    pub fn candidates(&self, relation: RelationId, side: Side) -> Vec<EntityId> {
        match self.signature(relation).side(side) {
            Some(kinds) => self
                .entities()
                .filter(|&e| {
                    let k = self.kind(e);
                    k != EntityKind::Placeholder && kinds.contains(&k)
                })
                .collect(),
            None => {
                let seen: BTreeSet<EntityId> = self
                    .triples_of(relation)
                    .map(|t| match side {
                        Side::Head => t.head,
                        Side::Tail => t.tail,
                    })
                    .collect();
                seen.into_iter().collect()
            }
        }
    }

    /// Interaction degree of each entity under `relation`, indexed by id.
    pub fn degrees(&self, relation: RelationId) -> Vec<usize> {
        let mut deg = alloc::vec![0usize; self.num_entities()];
        for t in self.triples_of(relation) {
            deg[t.head.index()] += 1;
            deg[t.tail.index()] += 1;
        }
        deg
    }
}

/// Threshold explicit ratings into `person:likes:recipe` triples.
pub fn positives_from_ratings(
    interactions: &[(String, String, u8)],
    threshold: u8,
) -> Result<Vec<NamedTriple>> {
    let mut out = Vec::new();
    for (person, recipe, rating) in interactions {
        if !(1..=5).contains(rating) {
            return Err(Error::Invalid(format!(
                "rating {rating} for ({person}, {recipe}) outside 1..5"
            )));
        }
        if *rating >= threshold {
            out.push(NamedTriple::new(person.as_str(), rel::LIKES, recipe.as_str()));
        }
    }
    Ok(out)
}

/// Outcome of degree filtering; `empty` flags a graph filtered to nothing.
#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub graph: KnowledgeGraph,
    pub removed_recipes: usize,
    pub removed_users: usize,
    pub empty: bool,
}

/// Keep recipes with at least `min_recipe` interactions, then users with at
/// least `min_user` remaining interactions. One pass each, in that order.
///
/// Removed entities lose every incident triple; the returned graph is
/// re-interned from the surviving triples in their original order.
pub fn filter_min_degree(
    kg: &KnowledgeGraph,
    interaction: &str,
    min_recipe: usize,
    min_user: usize,
) -> Result<FilterOutcome> {
    if min_recipe == 0 || min_user == 0 {
        return Err(Error::Invalid("degree thresholds must be at least 1".into()));
    }
    let relation = kg.relation_or_err(interaction)?;
    let deg = kg.degrees(relation);
    let recipe_ok = |e: EntityId| kg.kind(e) != EntityKind::Recipe || deg[e.index()] >= min_recipe;
    let pass1: Vec<Triple> = kg
        .triples()
        .iter()
        .copied()
        .filter(|t| recipe_ok(t.head) && recipe_ok(t.tail))
        .collect();
    let removed_recipes = kg
        .entities_of_kind(EntityKind::Recipe)
        .filter(|&e| !recipe_ok(e))
        .count();

    let mut user_deg = alloc::vec![0usize; kg.num_entities()];
    for t in pass1.iter().filter(|t| t.relation == relation) {
        user_deg[t.head.index()] += 1;
    }
    let user_ok = |e: EntityId| !kg.kind(e).is_person_like() || user_deg[e.index()] >= min_user;
    let removed_users = kg
        .entities()
        .filter(|&e| matches!(kg.kind(e), EntityKind::Person | EntityKind::ConditionalPerson))
        .filter(|&e| deg[e.index()] > 0 && !user_ok(e))
        .count();
    let survivors: Vec<NamedTriple> = pass1
        .iter()
        .filter(|t| user_ok(t.head) && user_ok(t.tail))
        .map(|t| kg.named(t))
        .collect();
    let graph = KnowledgeGraph::from_named(&survivors)?;
    let empty = graph.is_empty();
    Ok(FilterOutcome {
        graph,
        removed_recipes,
        removed_users,
        empty,
    })
}

/// One `ing:seen-with:ing` triple per unordered ingredient pair sharing a
/// recipe, lower id first, in first-seen order.
pub fn derive_cooccurrence(kg: &KnowledgeGraph) -> Vec<NamedTriple> {
    let Some(contains) = kg.relation(rel::CONTAINS) else {
        return Vec::new();
    };
    let mut by_recipe: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for t in kg.triples_of(contains) {
        by_recipe.entry(t.head).or_default().insert(t.tail);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ings in by_recipe.values() {
        let ings: Vec<EntityId> = ings.iter().copied().collect();
        for i in 0..ings.len() {
            for j in i + 1..ings.len() {
                let pair = (ings[i], ings[j]);
                if seen.insert(pair) {
                    out.push(NamedTriple::new(
                        kg.entity_name(pair.0),
                        rel::SEEN_WITH,
                        kg.entity_name(pair.1),
                    ));
                }
            }
        }
    }
    out
}
