//! One function per subcommand. Each returns the files it read and wrote so
//! the dispatcher can hash them into the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use recipekg_core::align::{self, AlignerConfig, ZeroShotMode};
use recipekg_core::cluster::{self, ClusterModel, CLUSTER_LEAK_CAVEAT};
use recipekg_core::embed::{self, AutoencoderConfig, EmbeddingTable};
use recipekg_core::eval;
use recipekg_core::kg::{self, rel, EntityKind, Side, PLACEHOLDER};
use recipekg_core::kge::{self, CorruptionMode, Init, KgeModel, ModelKind, Norm, TrainConfig};
use recipekg_core::kgvae::{self, ImageSet, KgVaeConfig};
use recipekg_core::rrs::{self, QueryRanking, ReviewAggregate};
use recipekg_core::{rng, split, synth, DataSplit, EntityId, KnowledgeGraph, Triple};
use serde_json::{json, Map, Value};

use crate::cli::*;
use crate::error::{parse_err, Error, Result};
use crate::formats::binary::*;
use crate::formats::embeddings::{load_embeddings, save_embeddings};
use crate::formats::tsv::*;
use crate::formats::{origin, read_bytes, read_text, write_bytes};
use crate::report::{metrics_json, wilcoxon_json, write_metrics};

fn manifest_next_to(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

fn summary(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn load_kge(path: &Path, kg: &KnowledgeGraph) -> Result<KgeModel> {
    let model = decode_kge(&read_bytes(path)?, &origin(path))?;
    if model.num_entities() != kg.num_entities() || model.num_relations() != kg.num_relations() {
        return Err(Error::Usage(format!(
            "{}: model has {} entities and {} relations, the graph {} and {}",
            path.display(),
            model.num_entities(),
            model.num_relations(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    Ok(model)
}

fn load_aligner(path: &Path) -> Result<align::AlignerModel> {
    decode_aligner(&read_bytes(path)?, &origin(path))
}

fn load_images(images: &Path, index: &Path) -> Result<ImageSet> {
    let recipes = parse_image_index(&read_text(index)?, &origin(index))?;
    decode_images(&read_bytes(images)?, &origin(images), recipes)
}

fn graph_summary(kg: &KnowledgeGraph) -> Value {
    let mut per_relation = Map::new();
    for (i, name) in kg.relation_names().iter().enumerate() {
        let n = kg.triples().iter().filter(|t| t.relation.index() == i).count();
        per_relation.insert(name.clone(), json!(n));
    }
    json!({
        "entities": kg.num_entities(),
        "relations": kg.num_relations(),
        "triples": kg.len(),
        "per_relation": per_relation,
    })
}

pub fn ingest(a: &IngestArgs) -> Result<Outcome> {
    let mut kg = KnowledgeGraph::new();
    let mut inputs = a.triples.clone();
    for p in &a.triples {
        let o = origin(p);
        for (no, t) in parse_triples(&read_text(p)?, &o)? {
            kg.insert_named(&t).map_err(|e| parse_err(&o, no, e))?;
        }
    }
    if let Some(r) = &a.ratings {
        let ratings = parse_ratings(&read_text(r)?, &origin(r))?;
        for t in kg::positives_from_ratings(&ratings, a.threshold)? {
            kg.insert_named(&t)?;
        }
        inputs.push(r.clone());
    }
    if a.cooccurrence {
        for t in kg::derive_cooccurrence(&kg) {
            kg.insert_named(&t)?;
        }
    }
    save_graph(&a.out, &kg)?;
    let s = graph_summary(&kg);
    log::info!("ingested {}", s);
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone()],
        summary: summary(s),
        manifest: manifest_next_to(&a.out),
    })
}

pub fn filter(a: &FilterArgs) -> Result<Outcome> {
    let kg = load_graph(&a.graph)?;
    let out = kg::filter_min_degree(&kg, &a.relation, a.min_recipe, a.min_user)?;
    if out.empty {
        log::warn!("filtering removed every triple");
    }
    save_graph(&a.out, &out.graph)?;
    let mut s = summary(graph_summary(&out.graph));
    s.insert("removed_recipes".into(), json!(out.removed_recipes));
    s.insert("removed_users".into(), json!(out.removed_users));
    s.insert("empty".into(), json!(out.empty));
    Ok(Outcome {
        inputs: vec![a.graph.clone()],
        outputs: vec![a.out.clone()],
        summary: s,
        manifest: manifest_next_to(&a.out),
    })
}

fn split_summary(split: &DataSplit) -> Value {
    json!({
        "seed": split.seed,
        "train": split.train.len(),
        "valid": split.valid.len(),
        "test": split.test.len(),
        "holdout": split.holdout_len(),
    })
}

pub fn split(a: &SplitArgs, seed: u64) -> Result<Outcome> {
    let mut kg = load_graph(&a.graph)?;
    let split = match a.protocol {
        Protocol::Loo => split::split_leave_one_out(&kg, &a.relation, seed)?,
        Protocol::Ratio => {
            let f: [f64; 3] = a
                .fractions
                .as_slice()
                .try_into()
                .map_err(|_| Error::Usage("--fractions needs exactly three values".into()))?;
            split::split_ratio(&kg, &a.relation, f, seed)?
        }
        Protocol::ZeroShot => split::zero_shot_holdout(&mut kg, &a.relation, a.holdout_users, seed)?,
    };
    save_split(&a.out, &kg, &split)?;
    Ok(Outcome {
        inputs: vec![a.graph.clone()],
        outputs: vec![a.out.clone()],
        summary: summary(split_summary(&split)),
        manifest: manifest_next_to(&a.out),
    })
}

/// Initial vectors for every entity: the table as-is when it already has a
/// row per entity, otherwise composed from raw name/instructions/review keys.
fn pretrained_table(
    kg: &KnowledgeGraph,
    split: &DataSplit,
    raw: EmbeddingTable,
    a: &TrainKgeArgs,
    seed: u64,
) -> Result<EmbeddingTable> {
    let direct = kg
        .entities()
        .filter(|&e| kg.kind(e) != EntityKind::Placeholder)
        .all(|e| raw.contains(kg.entity_name(e)));
    let table = if direct {
        raw
    } else {
        embed::compose_entity_init(kg, &split.train, &raw)?
    };
    if table.dim() != a.dim && a.reduce {
        let cfg = AutoencoderConfig::new(a.dim, a.reduce_epochs, rng::derive_seed(seed, "kge/reduce"));
        let fit = embed::autoencoder_reduce(&table, &cfg)?;
        log::info!("reduced pretrained vectors to {} (reconstruction MSE {:.3e})", a.dim, fit.mse);
        return Ok(fit.reduced);
    }
    Ok(table)
}

pub fn train_kge(a: &TrainKgeArgs, seed: u64) -> Result<Outcome> {
    let (kg, split) = load_split(&a.split)?;
    let config = TrainConfig {
        kind: match a.model {
            ModelArg::Rotate => ModelKind::RotatE,
            ModelArg::Transe => ModelKind::TransE,
            ModelArg::Distmult => ModelKind::DistMult,
        },
        norm: match a.norm {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        },
        dim: a.dim,
        lr: a.lr,
        negatives: a.neg,
        gamma: a.gamma,
        adv_temperature: a.adv_temp,
        epochs: a.epochs,
        batch_size: a.batch,
        corruption: match a.corruption {
            CorruptionArg::Head => CorruptionMode::Head,
            CorruptionArg::Tail => CorruptionMode::Tail,
            CorruptionArg::Both => CorruptionMode::Both,
        },
        seed,
        allow_off_grid: a.allow_off_grid,
    };
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let mut inputs = vec![a.split.clone()];
    let pretrained = match a.init.as_str() {
        "rand" => None,
        other => {
            let path = other
                .strip_prefix("pretrained:")
                .ok_or_else(|| Error::Usage(format!("--init must be `rand` or `pretrained:<file>`, got `{other}`")))?;
            let path = PathBuf::from(path);
            let raw = load_embeddings(&path)?;
            inputs.push(path);
            Some(pretrained_table(&kg, &split, raw, a, seed)?)
        }
    };
    let init = pretrained.as_ref().map_or(Init::Random, Init::Pretrained);
    let out = kge::train_kge(&kg, &split.train, &config, init)?;
    write_bytes(&a.out, &encode_kge(&out.model))?;
    let first = out.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = out.loss_history.last().copied().unwrap_or(f64::NAN);
    log::info!("loss {first:.4} -> {last:.4} over {} epochs", out.loss_history.len());
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone()],
        summary: summary(json!({
            "train_triples": split.train.len(),
            "first_epoch_loss": first,
            "final_loss": last,
        })),
        manifest: manifest_next_to(&a.out),
    })
}

fn part(split: &DataSplit, p: Part) -> Result<&[Triple]> {
    match p {
        Part::Valid => Ok(&split.valid),
        Part::Test => Ok(&split.test),
        Part::Holdout => split
            .holdout
            .as_deref()
            .ok_or_else(|| Error::Usage("split has no holdout part".into())),
    }
}

fn parallel_ranks(
    model: &KgeModel,
    queries: &[Triple],
    candidates: &[EntityId],
    known: &BTreeMap<(EntityId, kg::RelationId), Vec<EntityId>>,
    filtered: bool,
) -> Result<Vec<f64>> {
    Ok(queries
        .par_iter()
        .map(|q| kge::query_rank(model, q, candidates, known, filtered))
        .collect::<recipekg_core::Result<Vec<f64>>>()?)
}

fn has_conditional_persons(kg: &KnowledgeGraph) -> bool {
    kg.entities_of_kind(EntityKind::ConditionalPerson).next().is_some()
}

pub fn eval(a: &EvalArgs) -> Result<Outcome> {
    let (kg, split) = load_split(&a.split)?;
    let model = load_kge(&a.model, &kg)?;
    let queries = part(&split, a.part)?;
    let candidates = kg.candidates(split.relation, Side::Tail);
    let known = split.known_positives();
    let ranks = parallel_ranks(&model, queries, &candidates, &known, !a.raw)?;
    let metrics = eval::metrics_from_ranks(&ranks, a.k)?;
    let mut report = json!({
        "metrics": metrics_json(&metrics),
        "filtered": !a.raw,
        "candidates": candidates.len(),
    });
    let mut inputs = vec![a.split.clone(), a.model.clone()];
    if let Some(b) = &a.baseline {
        let base = load_kge(b, &kg)?;
        let base_ranks = parallel_ranks(&base, queries, &candidates, &known, !a.raw)?;
        let base_metrics = eval::metrics_from_ranks(&base_ranks, a.k)?;
        let test = eval::wilcoxon_signed_rank(&ranks, &base_ranks)?;
        report["baseline"] = metrics_json(&base_metrics);
        report["wilcoxon"] = wilcoxon_json(&test);
        inputs.push(b.clone());
    }
    if has_conditional_persons(&kg) {
        log::warn!("{CLUSTER_LEAK_CAVEAT}");
        report["caveat"] = json!(CLUSTER_LEAK_CAVEAT);
    }
    let mut outputs = write_metrics(&a.out, &report)?;
    if let Some(path) = &a.ranks {
        let mut text = String::new();
        for (q, r) in queries.iter().zip(&ranks) {
            let _ = writeln!(
                text,
                "{}\t{}\t{}\t{r}",
                kg.entity_name(q.head),
                kg.relation_name(q.relation),
                kg.entity_name(q.tail)
            );
        }
        write_bytes(path, text.as_bytes())?;
        outputs.push(path.clone());
    }
    print!("{}", crate::report::flatten(&report));
    Ok(Outcome {
        inputs,
        outputs,
        summary: Map::new(),
        manifest: manifest_next_to(&a.out),
    })
}

/// Recipe rows: keys that are recipe ids, or the mean of a recipe's
/// `#name` and `#instructions` rows.
pub fn recipe_vectors(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut out = EmbeddingTable::new(table.dim());
    for (key, row) in table.iter() {
        if EntityKind::from_name(key).ok() == Some(EntityKind::Recipe) {
            out.insert(key, row.to_vec())?;
        }
    }
    if !out.is_empty() {
        return Ok(out);
    }
    for key in table.keys() {
        let Some(base) = key.strip_suffix("#name") else { continue };
        if EntityKind::from_name(base).ok() != Some(EntityKind::Recipe) {
            continue;
        }
        let a = table.require(key)?;
        let b = table.require(&embed::instructions_key(base))?;
        out.insert(base, a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect())?;
    }
    if out.is_empty() {
        return Err(Error::Usage("embedding table has no recipe rows".into()));
    }
    Ok(out)
}

pub fn cluster(a: &ClusterArgs, seed: u64) -> Result<Outcome> {
    let table = recipe_vectors(&load_embeddings(&a.embeddings)?)?;
    let (keys, points): (Vec<&str>, Vec<&[f64]>) = table.iter().unzip();
    let mut report = Map::new();
    let model = match a.k {
        Some(k) => cluster::kmeans_table(&table, k, seed, a.max_iter)?,
        None => {
            if a.k_min == 0 || a.k_max < a.k_min + 2 {
                return Err(Error::Usage("need 1 <= k-min and k-max >= k-min + 2".into()));
            }
            if a.seeds == 0 {
                return Err(Error::Usage("--seeds must be at least 1".into()));
            }
            let restarts: Vec<u64> = (0..a.seeds)
                .map(|i| rng::derive_seed(seed, &format!("cluster/restart/{i}")))
                .collect();
            let range: Vec<usize> = (a.k_min..=a.k_max).collect();
            let sel = cluster::select_k(&points, &range, &restarts, a.max_iter)?;
            for w in &sel.warnings {
                log::warn!("{w}");
            }
            let fit = &sel
                .fits
                .iter()
                .find(|(k, _)| *k == sel.k_best)
                .expect("selected k was fitted")
                .1;
            report.insert("ssd".into(), json!(sel.ssd.iter().map(|(k, s)| json!([k, s])).collect::<Vec<_>>()));
            report.insert(
                "silhouette".into(),
                json!(sel.silhouette.iter().map(|(k, s)| json!([k, s])).collect::<Vec<_>>()),
            );
            report.insert("warnings".into(), json!(sel.warnings));
            ClusterModel::from_fit(&keys, fit)
        }
    };
    report.insert("k".into(), json!(model.k));
    report.insert("ssd_final".into(), json!(model.ssd));
    write_bytes(&a.out, clusters_to_text(&model).as_bytes())?;
    let mut outputs = vec![a.out.clone()];
    if let Some(r) = &a.report {
        outputs.extend(write_metrics(r, &Value::Object(report.clone()))?);
    }
    println!("k={}", model.k);
    Ok(Outcome {
        inputs: vec![a.embeddings.clone()],
        outputs,
        summary: report,
        manifest: manifest_next_to(&a.out),
    })
}

pub fn cr_transform(a: &CrTransformArgs) -> Result<Outcome> {
    let (kg, split) = load_split(&a.split)?;
    let model = parse_clusters(&read_text(&a.clusters)?, &origin(&a.clusters))?;
    let mut inputs = vec![a.split.clone(), a.clusters.clone()];
    let (kg2, split2) = match a.mode {
        CrMode::Cr => {
            if !a.extra.is_empty() {
                return Err(Error::Usage("--extra only applies to sub-graph mode".into()));
            }
            let mut kg2 = kg.clone();
            let sp = cluster::decouple_persons(&mut kg2, &split, &model)?;
            log::warn!("{CLUSTER_LEAK_CAVEAT}");
            let all: Vec<Triple> = sp
                .train
                .iter()
                .chain(&sp.valid)
                .chain(&sp.test)
                .chain(sp.holdout.iter().flatten())
                .copied()
                .collect();
            (kg2.with_triples(&all)?, sp)
        }
        CrMode::Subgraph => {
            let mut kg2 = kg.clone();
            let mut extra = cluster::build_cluster_triples(&kg, &split.train, &model)?;
            for p in &a.extra {
                extra.extend(parse_triples(&read_text(p)?, &origin(p))?.into_iter().map(|(_, t)| t));
                inputs.push(p.clone());
            }
            let mut added = Vec::with_capacity(extra.len());
            for t in &extra {
                added.push(kg2.insert_named(t)?.0);
            }
            let mut sp = split.clone();
            sp.extend_train(&added);
            (kg2, sp)
        }
    };
    save_split(&a.out, &kg2, &split2)?;
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone()],
        summary: summary(split_summary(&split2)),
        manifest: manifest_next_to(&a.out),
    })
}

fn row<'t>(table: &'t EmbeddingTable, entity: &str) -> Option<&'t [f64]> {
    table.get(entity).or_else(|| table.get(&embed::content_key(entity)))
}

/// Text vector of an entity: its own row, or for persons the mean of the
/// rows of reviews they wrote among `triples`.
fn text_vector(kg: &KnowledgeGraph, table: &EmbeddingTable, e: EntityId, triples: &[Triple]) -> Option<Vec<f64>> {
    let name = kg.entity_name(e);
    if let Some(r) = row(table, name) {
        return Some(r.to_vec());
    }
    if !matches!(kg.kind(e), EntityKind::Person) {
        return None;
    }
    let wrote = kg.relation(rel::WROTE)?;
    let rows: Vec<&[f64]> = triples
        .iter()
        .filter(|t| t.relation == wrote && t.head == e)
        .filter_map(|t| row(table, kg.entity_name(t.tail)))
        .collect();
    recipekg_core::math::mean_vector(rows, table.dim())
}

pub fn train_aligner(a: &TrainAlignerArgs, seed: u64) -> Result<Outcome> {
    let (kg, split) = load_split(&a.split)?;
    let model = load_kge(&a.model, &kg)?;
    let table = load_embeddings(&a.text)?;
    let entities: Vec<EntityId> = match a.pairs {
        PairKind::Persons => align::existing_users(&kg, &split.train),
        PairKind::Reviews => kg.entities_of_kind(EntityKind::Review).collect(),
    };
    let mut texts = Vec::new();
    let mut targets = Vec::new();
    let mut skipped = 0usize;
    for &e in &entities {
        match text_vector(&kg, &table, e, &split.train) {
            Some(t) => {
                texts.push(t);
                targets.push(model.entity(e)?);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} entities have no text vector and were skipped");
    }
    let pairs: Vec<(&[f64], &[f64])> = texts.iter().map(Vec::as_slice).zip(targets.iter().copied()).collect();
    let config = AlignerConfig {
        hidden: a.hidden,
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        valid_fraction: a.valid_fraction,
        patience: a.patience,
        seed,
    };
    let fit = align::train_aligner(&pairs, &config)?;
    write_bytes(&a.out, &encode_aligner(&fit.model))?;
    Ok(Outcome {
        inputs: vec![a.split.clone(), a.model.clone(), a.text.clone()],
        outputs: vec![a.out.clone()],
        summary: summary(json!({
            "pairs": pairs.len(),
            "skipped": skipped,
            "final_mse": fit.final_mse,
            "best_epoch": fit.best_epoch,
        })),
        manifest: manifest_next_to(&a.out),
    })
}

pub fn zero_shot(a: &ZeroShotArgs, seed: u64) -> Result<Outcome> {
    let (kg, split) = load_split(&a.split)?;
    let mut model = load_kge(&a.model, &kg)?;
    let holdout = split
        .holdout
        .clone()
        .ok_or_else(|| Error::Usage("split has no holdout part; use --protocol zero-shot".into()))?;
    let mode = match a.mode {
        ZeroShotArg::Rand => ZeroShotMode::Rand,
        ZeroShotArg::Avg => ZeroShotMode::Avg,
        ZeroShotArg::KgAligned => ZeroShotMode::KgAligned,
    };
    let mut inputs = vec![a.split.clone(), a.model.clone()];
    let (aligner, table) = if mode == ZeroShotMode::KgAligned {
        let (Some(al), Some(text)) = (&a.aligner, &a.text) else {
            return Err(Error::Usage("kg-aligned mode needs --aligner and --text".into()));
        };
        inputs.push(al.clone());
        inputs.push(text.clone());
        (Some(load_aligner(al)?), Some(load_embeddings(text)?))
    } else {
        (None, None)
    };
    let placeholder = kg.entity_or_err(PLACEHOLDER)?;
    let users = align::existing_users(&kg, &split.train);
    let candidates = kg.candidates(split.relation, Side::Tail);
    let no_filter = BTreeMap::new();
    let mut rng = rng::stream(seed, "zero-shot/assign");
    let mut heads: Vec<EntityId> = Vec::new();
    for t in &holdout {
        if !heads.contains(&t.head) {
            heads.push(t.head);
        }
    }
    let mut ranks = Vec::new();
    let mut recs = String::new();
    for &h in &heads {
        let text = match &table {
            Some(tab) => Some(
                text_vector(&kg, tab, h, kg.triples())
                    .ok_or_else(|| recipekg_core::Error::MissingEmbedding(kg.entity_name(h).into()))?,
            ),
            None => None,
        };
        let v = align::zero_shot_assign(&model, &users, mode, text.as_deref(), aligner.as_ref(), &mut rng)?;
        let top = align::recommend_zero_shot(&mut model, &kg, &v, a.k)?;
        for c in &top {
            let _ = writeln!(recs, "{}\t{}\t{}\t{}", kg.entity_name(h), c.rank, kg.entity_name(c.entity), c.score);
        }
        for t in holdout.iter().filter(|t| t.head == h) {
            let q = Triple::new(placeholder, t.relation, t.tail);
            ranks.push(kge::query_rank(&model, &q, &candidates, &no_filter, false)?);
        }
    }
    let metrics = eval::metrics_from_ranks(&ranks, a.k)?;
    let report = json!({
        "metrics": metrics_json(&metrics),
        "mode": serde_json::to_value(a.mode).expect("mode serializes"),
        "holdout_users": heads.len(),
    });
    let mut outputs = write_metrics(&a.out, &report)?;
    if let Some(p) = &a.recommendations {
        write_bytes(p, recs.as_bytes())?;
        outputs.push(p.clone());
    }
    print!("{}", crate::report::flatten(&report));
    Ok(Outcome {
        inputs,
        outputs,
        summary: Map::new(),
        manifest: manifest_next_to(&a.out),
    })
}

/// Review rows keyed by bare review id.
fn review_table(table: EmbeddingTable) -> Result<EmbeddingTable> {
    let mut out = EmbeddingTable::new(table.dim());
    for (k, v) in table.iter() {
        out.insert(k.strip_suffix("#content").unwrap_or(k), v.to_vec())?;
    }
    Ok(out)
}

pub fn rrs(a: &RrsArgs) -> Result<Outcome> {
    let (kg, _) = load_split(&a.split)?;
    let reviews = review_table(load_embeddings(&a.reviews)?)?;
    let queries = parse_queries(&read_text(&a.queries)?, &origin(&a.queries))?;
    let query_embs = load_embeddings(&a.query_embeddings)?;
    let supports = kg.relation_or_err(rel::SUPPORTS)?;
    let review_to_recipe: BTreeMap<String, String> = kg
        .triples_of(supports)
        .map(|t| (kg.entity_name(t.head).to_string(), kg.entity_name(t.tail).to_string()))
        .collect();
    // rank only recipes that have a review, so every mode sees one universe
    let mut universe = BTreeSet::new();
    for r in reviews.keys() {
        let recipe = review_to_recipe
            .get(r)
            .ok_or_else(|| recipekg_core::Error::Invalid(format!("review `{r}` maps to no recipe")))?;
        universe.insert(recipe.clone());
    }
    let universe: Vec<String> = universe.into_iter().collect();
    let all_recipes = kg.entities_of_kind(EntityKind::Recipe).count();
    if universe.len() < all_recipes {
        log::warn!("{} recipes have no reviews and are not ranked", all_recipes - universe.len());
    }
    let aggregate = match a.aggregate {
        AggregateArg::Max => ReviewAggregate::Max,
        AggregateArg::Mean => ReviewAggregate::Mean,
    };
    let mut inputs = vec![a.split.clone(), a.reviews.clone(), a.queries.clone(), a.query_embeddings.clone()];
    let kge_parts = match a.mode {
        RrsMode::Text => None,
        RrsMode::Kge | RrsMode::Hybrid => {
            let (Some(m), Some(al)) = (&a.model, &a.aligner) else {
                return Err(Error::Usage("kge and hybrid modes need --model and --aligner".into()));
            };
            inputs.push(m.clone());
            inputs.push(al.clone());
            let candidates = universe
                .iter()
                .map(|r| kg.entity_or_err(r))
                .collect::<recipekg_core::Result<Vec<_>>>()?;
            Some((load_kge(m, &kg)?, load_aligner(al)?, candidates))
        }
    };
    let rankings = queries
        .par_iter()
        .map(|(qid, _)| -> Result<QueryRanking> {
            let emb = query_embs.require(qid)?;
            let text = || -> Result<QueryRanking> {
                Ok(rrs::text_rrs_rank(qid, emb, &reviews, &review_to_recipe, &universe, aggregate)?.ranking)
            };
            let by_kge = || -> Result<QueryRanking> {
                let (m, al, c) = kge_parts.as_ref().expect("loaded for kge modes");
                Ok(rrs::kge_rrs_rank(qid, m, &kg, al, emb, c)?)
            };
            match a.mode {
                RrsMode::Text => text(),
                RrsMode::Kge => by_kge(),
                RrsMode::Hybrid => Ok(rrs::hybrid_rank(&text()?, &by_kge()?)?),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranks = Vec::with_capacity(queries.len());
    let mut listing = String::new();
    for ((qid, relevant), ranking) in queries.iter().zip(&rankings) {
        let r = ranking.rank_of(relevant).ok_or_else(|| {
            recipekg_core::Error::Invalid(format!("query `{qid}`: recipe `{relevant}` has no reviews to rank"))
        })?;
        ranks.push(r);
        for e in ranking.top(a.k) {
            let _ = writeln!(listing, "{qid}\t{}\t{}\t{}", e.rank, e.recipe, e.score);
        }
    }
    let metrics = eval::metrics_from_ranks(&ranks, a.k)?;
    let report = json!({
        "metrics": metrics_json(&metrics),
        "mode": serde_json::to_value(a.mode).expect("mode serializes"),
        "ranked_recipes": universe.len(),
    });
    let mut outputs = write_metrics(&a.out, &report)?;
    if let Some(p) = &a.rankings {
        write_bytes(p, listing.as_bytes())?;
        outputs.push(p.clone());
    }
    print!("{}", crate::report::flatten(&report));
    Ok(Outcome {
        inputs,
        outputs,
        summary: Map::new(),
        manifest: manifest_next_to(&a.out),
    })
}

pub fn train_kgvae(a: &TrainKgvaeArgs, seed: u64) -> Result<Outcome> {
    let images = load_images(&a.images, &a.index)?;
    let mut inputs = vec![a.images.clone(), a.index.clone()];
    let embs = match (&a.recipe_embeddings, &a.split, &a.model) {
        (Some(p), None, None) => {
            inputs.push(p.clone());
            load_embeddings(p)?
        }
        (None, Some(s), Some(m)) => {
            let (kg, _) = load_split(s)?;
            images.validate(&kg)?;
            let model = load_kge(m, &kg)?;
            inputs.push(s.clone());
            inputs.push(m.clone());
            let mut t = EmbeddingTable::new(model.entity_width());
            for r in images.recipes().iter().collect::<BTreeSet<_>>() {
                t.insert(r.as_str(), model.entity(kg.entity_or_err(r)?)?.to_vec())?;
            }
            t
        }
        _ => {
            return Err(Error::Usage(
                "give either --recipe-embeddings or both --split and --model".into(),
            ))
        }
    };
    if a.lambda.is_empty() {
        return Err(Error::Usage("--lambda needs at least one value".into()));
    }
    let config = KgVaeConfig {
        hidden: a.hidden,
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        lambda: a.lambda[0],
        vanilla: a.vanilla,
        seed,
    };
    let mut s = Map::new();
    let model = if a.lambda.len() == 1 {
        kgvae::train_kgvae(&images, &embs, &config)?.model
    } else {
        if a.vanilla {
            return Err(Error::Usage("λ tuning uses the guidance targets; drop --vanilla".into()));
        }
        let mut rows: Vec<usize> = (0..images.count()).collect();
        rows.shuffle(&mut rng::stream(seed, "kgvae/valid"));
        let n_valid = ((a.valid_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        let valid = images.select(&rows[..n_valid]);
        let train = images.select(&rows[n_valid..]);
        let search = kgvae::tune_lambda(&train, &valid, &embs, &a.lambda, &config, a.tune_k)?;
        s.insert("lambda_scores".into(), json!(search.scores));
        s.insert("best_lambda".into(), json!(search.best_lambda));
        search.fit.model
    };
    if !a.vanilla {
        s.insert("guidance_mse".into(), json!(kgvae::guidance_mse(&model, &images, &embs)?));
    }
    write_bytes(&a.out, &encode_kgvae(&model, images.height(), images.width()))?;
    Ok(Outcome {
        inputs,
        outputs: vec![a.out.clone()],
        summary: s,
        manifest: manifest_next_to(&a.out),
    })
}

pub fn image_query(a: &ImageQueryArgs) -> Result<Outcome> {
    let (model, h, w) = decode_kgvae(&read_bytes(&a.model)?, &origin(&a.model))?;
    let images = load_images(&a.images, &a.index)?;
    if (images.height(), images.width()) != (h, w) {
        return Err(Error::Usage(format!(
            "model expects {h}×{w} images, got {}×{}",
            images.height(),
            images.width()
        )));
    }
    if a.image_row >= images.count() {
        return Err(Error::Usage(format!(
            "--image-row {} out of range ({} images)",
            a.image_row,
            images.count()
        )));
    }
    let mut inputs = vec![a.model.clone(), a.images.clone(), a.index.clone()];
    let (gallery, rows) = match (&a.gallery, &a.gallery_index) {
        (Some(g), Some(i)) => {
            inputs.push(g.clone());
            inputs.push(i.clone());
            let gallery = load_images(g, i)?;
            let rows = (0..gallery.count()).collect::<Vec<_>>();
            (gallery, rows)
        }
        _ => {
            let rows: Vec<usize> = (0..images.count()).filter(|&r| r != a.image_row).collect();
            (images.select(&rows), rows)
        }
    };
    let encoded: Vec<Vec<f64>> = (0..gallery.count())
        .into_par_iter()
        .map(|i| model.encode_mean(gallery.image(i)))
        .collect::<recipekg_core::Result<_>>()?;
    let found = kgvae::retrieve_encoded(&model, images.image(a.image_row), &gallery, &encoded, a.k)?;
    if found.clipped {
        log::warn!("k = {} exceeds the gallery of {}; returning all", a.k, gallery.count());
    }
    let hits: Vec<Value> = found
        .hits
        .iter()
        .map(|h| json!({"row": rows[h.row], "recipe": h.recipe, "distance": h.distance}))
        .collect();
    let report = json!({
        "query_row": a.image_row,
        "query_recipe": images.recipe(a.image_row),
        "clipped": found.clipped,
        "hits": hits,
    });
    let outputs = write_metrics(&a.out, &report)?;
    print!("{}", crate::report::flatten(&report));
    Ok(Outcome {
        inputs,
        outputs,
        summary: Map::new(),
        manifest: manifest_next_to(&a.out),
    })
}

fn named_to_text(triples: &[recipekg_core::NamedTriple]) -> String {
    triples.iter().map(|t| format!("{t}\n")).collect()
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<Outcome> {
    let dir = &a.out;
    let mut s = Map::new();
    match a.benchmark {
        Benchmark::Blocks => {
            let g = synth::block_graph(&synth::BlockConfig { seed, ..Default::default() })?;
            write_bytes(&dir.join("graph.tsv"), named_to_text(&g.likes).as_bytes())?;
            save_embeddings(&dir.join("person_text.emb"), &g.person_text)?;
            s.insert("likes".into(), json!(g.likes.len()));
        }
        Benchmark::Interest => {
            let g = synth::interest_graph(&synth::InterestConfig { seed, ..Default::default() })?;
            write_bytes(&dir.join("graph.tsv"), named_to_text(&g.likes).as_bytes())?;
            write_bytes(&dir.join("ingredients.tsv"), named_to_text(&g.ingredients).as_bytes())?;
            save_embeddings(&dir.join("recipe_text.emb"), &g.recipe_text)?;
            let planted: String = g.recipe_cluster.iter().map(|(r, c)| format!("{r}\t{c}\n")).collect();
            write_bytes(&dir.join("planted_clusters.tsv"), planted.as_bytes())?;
            s.insert("likes".into(), json!(g.likes.len()));
        }
        Benchmark::Reviews => {
            let b = synth::review_benchmark(&synth::ReviewConfig { seed, ..Default::default() })?;
            write_bytes(&dir.join("graph.tsv"), named_to_text(&b.triples).as_bytes())?;
            save_embeddings(&dir.join("reviews.emb"), &b.review_text)?;
            save_embeddings(&dir.join("raw_text.emb"), &b.raw_text)?;
            let q: Vec<(String, String)> = b.queries.iter().map(|q| (q.id.clone(), q.recipe.clone())).collect();
            write_bytes(&dir.join("queries.tsv"), queries_to_text(&q).as_bytes())?;
            let mut qt = EmbeddingTable::new(b.review_text.dim());
            for q in &b.queries {
                qt.insert(q.id.as_str(), q.embedding.clone())?;
            }
            save_embeddings(&dir.join("queries.emb"), &qt)?;
            s.insert("queries".into(), json!(b.queries.len()));
        }
        Benchmark::Textures => {
            let b = synth::texture_images(&synth::TextureConfig { seed, ..Default::default() })?;
            write_bytes(&dir.join("images.rimg"), &encode_images(&b.images))?;
            write_bytes(&dir.join("images.index.tsv"), image_index_to_text(b.images.recipes()).as_bytes())?;
            write_bytes(&dir.join("graph.tsv"), named_to_text(&b.contains).as_bytes())?;
            let classes: String = b.class_of.iter().map(|(r, c)| format!("{r}\t{c}\n")).collect();
            write_bytes(&dir.join("classes.tsv"), classes.as_bytes())?;
            s.insert("images".into(), json!(b.images.count()));
        }
    }
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec![dir.clone()],
        summary: s,
        manifest: manifest_next_to(dir),
    })
}
