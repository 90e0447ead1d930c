//! Triple TSV, vocabulary sidecar, split directories and the small TSV
//! side files (ratings, clusters, queries, image index).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use recipekg_core::cluster::ClusterModel;
use recipekg_core::{DataSplit, KnowledgeGraph, NamedTriple, Triple};

use super::{data_lines, origin, read_text, write_bytes};
use crate::error::{io_err, parse_err, Error, Result};

fn fields<'a>(line: &'a str, n: usize, what: &str, origin: &str, no: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n {
        return Err(parse_err(
            origin,
            no,
            format!("expected {n} tab-separated {what} fields, found {}", parts.len()),
        ));
    }
    if let Some(i) = parts.iter().position(|p| p.is_empty()) {
        return Err(parse_err(origin, no, format!("field {} is empty", i + 1)));
    }
    Ok(parts)
}

/// `head<TAB>relation<TAB>tail` lines with their line numbers.
pub fn parse_triples(text: &str, origin: &str) -> Result<Vec<(usize, NamedTriple)>> {
    data_lines(text)
        .map(|(no, line)| {
            let f = fields(line, 3, "triple", origin, no)?;
            Ok((no, NamedTriple::new(f[0], f[1], f[2])))
        })
        .collect()
}

/// Build a graph, interning in order of first appearance. Duplicates are
/// dropped; a bad entity prefix or signature is reported with its line.
pub fn graph_from_text(text: &str, origin: &str) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (no, t) in parse_triples(text, origin)? {
        kg.insert_named(&t).map_err(|e| parse_err(origin, no, e))?;
    }
    Ok(kg)
}

pub fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    graph_from_text(&read_text(path)?, &origin(path))
}

pub fn triples_to_text(kg: &KnowledgeGraph, triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            kg.entity_name(t.head),
            kg.relation_name(t.relation),
            kg.entity_name(t.tail)
        );
    }
    out
}

pub fn save_graph(path: &Path, kg: &KnowledgeGraph) -> Result<()> {
    write_bytes(path, triples_to_text(kg, kg.triples()).as_bytes())
}

/// Interned names in id order: `entity<TAB>name` then `relation<TAB>name`.
pub fn vocab_to_text(kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for name in kg.entity_names() {
        let _ = writeln!(out, "entity\t{name}");
    }
    for name in kg.relation_names() {
        let _ = writeln!(out, "relation\t{name}");
    }
    out
}

/// Rebuild a graph with exactly the ids recorded in a vocabulary.
pub fn graph_with_vocab(vocab: &str, vocab_origin: &str, triples: &str, triples_origin: &str) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (no, line) in data_lines(vocab) {
        let f = fields(line, 2, "vocabulary", vocab_origin, no)?;
        let fresh = match f[0] {
            "entity" => {
                let before = kg.num_entities();
                kg.intern_entity(f[1]).map_err(|e| parse_err(vocab_origin, no, e))?;
                kg.num_entities() > before
            }
            "relation" => {
                let before = kg.num_relations();
                kg.intern_relation(f[1]).map_err(|e| parse_err(vocab_origin, no, e))?;
                kg.num_relations() > before
            }
            other => return Err(parse_err(vocab_origin, no, format!("unknown vocabulary kind `{other}`"))),
        };
        if !fresh {
            return Err(parse_err(vocab_origin, no, format!("duplicate vocabulary entry `{}`", f[1])));
        }
    }
    let (n_ent, n_rel) = (kg.num_entities(), kg.num_relations());
    for (no, t) in parse_triples(triples, triples_origin)? {
        kg.insert_named(&t).map_err(|e| parse_err(triples_origin, no, e))?;
        if kg.num_entities() != n_ent || kg.num_relations() != n_rel {
            return Err(parse_err(triples_origin, no, format!("`{t}` uses a name missing from the vocabulary")));
        }
    }
    Ok(kg)
}

/// Resolve named triples against an existing vocabulary without interning.
pub fn resolve_triples(kg: &KnowledgeGraph, text: &str, origin: &str) -> Result<Vec<Triple>> {
    parse_triples(text, origin)?
        .into_iter()
        .map(|(no, t)| {
            let head = kg.entity_or_err(&t.head).map_err(|e| parse_err(origin, no, e))?;
            let relation = kg.relation_or_err(&t.relation).map_err(|e| parse_err(origin, no, e))?;
            let tail = kg.entity_or_err(&t.tail).map_err(|e| parse_err(origin, no, e))?;
            Ok(Triple::new(head, relation, tail))
        })
        .collect()
}

pub const SPLIT_PARTS: [&str; 4] = ["train", "valid", "test", "holdout"];

/// Write `graph.tsv`, `vocab.tsv`, one TSV per part and `split.meta`.
pub fn save_split(dir: &Path, kg: &KnowledgeGraph, split: &DataSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_graph(&dir.join("graph.tsv"), kg)?;
    write_bytes(&dir.join("vocab.tsv"), vocab_to_text(kg).as_bytes())?;
    write_bytes(&dir.join("train.tsv"), triples_to_text(kg, &split.train).as_bytes())?;
    write_bytes(&dir.join("valid.tsv"), triples_to_text(kg, &split.valid).as_bytes())?;
    write_bytes(&dir.join("test.tsv"), triples_to_text(kg, &split.test).as_bytes())?;
    let holdout = dir.join("holdout.tsv");
    match &split.holdout {
        Some(h) => write_bytes(&holdout, triples_to_text(kg, h).as_bytes())?,
        None if holdout.exists() => fs::remove_file(&holdout).map_err(io_err(&holdout))?,
        None => {}
    }
    let meta = format!("seed={}\nrelation={}\n", split.seed, kg.relation_name(split.relation));
    write_bytes(&dir.join("split.meta"), meta.as_bytes())
}

pub fn load_split(dir: &Path) -> Result<(KnowledgeGraph, DataSplit)> {
    let vocab_path = dir.join("vocab.tsv");
    let graph_path = dir.join("graph.tsv");
    let kg = graph_with_vocab(
        &read_text(&vocab_path)?,
        &origin(&vocab_path),
        &read_text(&graph_path)?,
        &origin(&graph_path),
    )?;
    let meta_path = dir.join("split.meta");
    let meta_origin = origin(&meta_path);
    let mut seed = None;
    let mut relation = None;
    for (no, line) in data_lines(&read_text(&meta_path)?) {
        match line.split_once('=') {
            Some(("seed", v)) => {
                seed = Some(v.trim().parse::<u64>().map_err(|e| parse_err(&meta_origin, no, e))?);
            }
            Some(("relation", v)) => {
                relation = Some(kg.relation_or_err(v.trim()).map_err(|e| parse_err(&meta_origin, no, e))?);
            }
            _ => return Err(parse_err(&meta_origin, no, format!("unrecognised metadata `{line}`"))),
        }
    }
    let missing = |what: &str| Error::Format {
        origin: meta_origin.clone(),
        message: format!("missing `{what}=` line"),
    };
    let seed = seed.ok_or_else(|| missing("seed"))?;
    let relation = relation.ok_or_else(|| missing("relation"))?;
    let part = |name: &str| -> Result<Vec<Triple>> {
        let p = dir.join(format!("{name}.tsv"));
        resolve_triples(&kg, &read_text(&p)?, &origin(&p))
    };
    let holdout = if dir.join("holdout.tsv").exists() {
        Some(part("holdout")?)
    } else {
        None
    };
    let split = DataSplit {
        relation,
        train: part("train")?,
        valid: part("valid")?,
        test: part("test")?,
        holdout,
        seed,
    };
    Ok((kg, split))
}

/// `person<TAB>recipe<TAB>rating` lines.
pub fn parse_ratings(text: &str, origin: &str) -> Result<Vec<(String, String, u8)>> {
    data_lines(text)
        .map(|(no, line)| {
            let f = fields(line, 3, "rating", origin, no)?;
            let r = f[2]
                .parse::<u8>()
                .map_err(|e| parse_err(origin, no, format!("rating `{}`: {e}", f[2])))?;
            Ok((f[0].to_string(), f[1].to_string(), r))
        })
        .collect()
}

pub fn clusters_to_text(model: &ClusterModel) -> String {
    let mut out = String::new();
    for (recipe, c) in &model.assignment {
        let _ = writeln!(out, "{recipe}\t{c}");
    }
    out
}

/// `recipe<TAB>cluster-index` lines. Centers are not stored, so the model
/// carries assignments only.
pub fn parse_clusters(text: &str, origin: &str) -> Result<ClusterModel> {
    let mut assignment = BTreeMap::new();
    for (no, line) in data_lines(text) {
        let f = fields(line, 2, "cluster", origin, no)?;
        let c = f[1]
            .parse::<usize>()
            .map_err(|e| parse_err(origin, no, format!("cluster index `{}`: {e}", f[1])))?;
        if assignment.insert(f[0].to_string(), c).is_some() {
            return Err(parse_err(origin, no, format!("recipe `{}` assigned twice", f[0])));
        }
    }
    let k = assignment.values().max().map_or(0, |m| m + 1);
    Ok(ClusterModel {
        k,
        centers: Vec::new(),
        assignment,
        ssd: 0.0,
    })
}

/// `query-id<TAB>relevant-recipe-id` lines.
pub fn parse_queries(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    data_lines(text)
        .map(|(no, line)| {
            let f = fields(line, 2, "query", origin, no)?;
            Ok((f[0].to_string(), f[1].to_string()))
        })
        .collect()
}

pub fn queries_to_text(queries: &[(String, String)]) -> String {
    queries.iter().map(|(q, r)| format!("{q}\t{r}\n")).collect()
}

/// `row<TAB>recipe-id` lines; rows must be 0, 1, 2, ... in order.
pub fn parse_image_index(text: &str, origin: &str) -> Result<Vec<String>> {
    let mut recipes = Vec::new();
    for (no, line) in data_lines(text) {
        let f = fields(line, 2, "index", origin, no)?;
        let row = f[0]
            .parse::<usize>()
            .map_err(|e| parse_err(origin, no, format!("row `{}`: {e}", f[0])))?;
        if row != recipes.len() {
            return Err(parse_err(origin, no, format!("expected row {}, found {row}", recipes.len())));
        }
        recipes.push(f[1].to_string());
    }
    Ok(recipes)
}

pub fn image_index_to_text(recipes: &[String]) -> String {
    recipes
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{i}\t{r}\n"))
        .collect()
}
