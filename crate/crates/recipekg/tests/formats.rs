use std::collections::BTreeSet;

use recipekg::formats::binary::{decode_aligner, decode_images, decode_kge, decode_kgvae, encode_aligner, encode_images, encode_kge, encode_kgvae};
use recipekg::formats::embeddings::{embeddings_to_text, load_embeddings, parse_embeddings, save_embeddings};
use recipekg::formats::tsv::{graph_from_text, graph_with_vocab, load_graph, load_split, save_graph, save_split, triples_to_text, vocab_to_text};
use recipekg_core::align::AlignerModel;
use recipekg_core::embed::EmbeddingTable;
use recipekg_core::kg::rel;
use recipekg_core::kge::{KgeModel, ModelKind, Norm};
use recipekg_core::kgvae::KgVaeModel;
use recipekg_core::{rng, split, synth, KnowledgeGraph};

#[test]
fn embeddings_round_trip_bit_exact() {
    let mut r = rng::seeded(4);
    let mut table = EmbeddingTable::new(7);
    for i in 0..100 {
        let row = (0..7).map(|_| rng::standard_normal(&mut r) * 10f64.powi(i % 9 - 4)).collect();
        table.insert(format!("RCP:{i}"), row).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb");
    save_embeddings(&path, &table).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back.len(), 100);
    for (k, v) in table.iter() {
        let got = back.get(k).unwrap();
        assert!(v.iter().zip(got).all(|(a, b)| a.to_bits() == b.to_bits()), "{k}");
    }
    assert_eq!(embeddings_to_text(&back), embeddings_to_text(&table));
}

#[test]
fn embedding_errors_name_the_problem() {
    let width = parse_embeddings("2 3\nA 1 2 3\nB 1 2\n", "e").unwrap_err().to_string();
    assert!(width.contains('B'), "{width}");
    assert!(parse_embeddings("2 1\nA 1\nA 2\n", "e").is_err());
    assert!(parse_embeddings("3 1\nA 1\nB 2\n", "e").is_err());
}

#[test]
fn graph_load_matches_set_oracle() {
    let text = "# header\nPSN:1\tpsn:likes:rcp\tRCP:1\n\nPSN:2\tpsn:likes:rcp\tRCP:1\nPSN:1\tpsn:likes:rcp\tRCP:1\nRCP:1\trcp:contains:ing\tING:3\n";
    let kg = graph_from_text(text, "g").unwrap();
    let oracle: BTreeSet<(&str, &str, &str)> = text
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0], f[1], f[2])
        })
        .collect();
    let got: BTreeSet<(String, String, String)> = kg.to_named().into_iter().map(|t| (t.head, t.relation, t.tail)).collect();
    let oracle: BTreeSet<(String, String, String)> =
        oracle.into_iter().map(|(a, b, c)| (a.into(), b.into(), c.into())).collect();
    assert_eq!(got, oracle);
    assert_eq!(kg.len(), 3);
}

#[test]
fn malformed_line_reports_line_number() {
    let err = graph_from_text("PSN:1\tpsn:likes:rcp\tRCP:1\nPSN:2\tRCP:1\n", "bad.tsv").unwrap_err().to_string();
    assert!(err.contains("bad.tsv") && err.contains('2'), "{err}");
}

#[test]
fn vocab_preserves_ids() {
    let g = synth::block_graph(&synth::BlockConfig { seed: 1, ..Default::default() }).unwrap();
    let kg = KnowledgeGraph::from_named(&g.likes).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_graph(&dir.path().join("g.tsv"), &kg).unwrap();
    assert_eq!(load_graph(&dir.path().join("g.tsv")).unwrap().len(), kg.len());
    let back = graph_with_vocab(&vocab_to_text(&kg), "v", &triples_to_text(&kg, kg.triples()), "t").unwrap();
    assert_eq!(back.entity_names(), kg.entity_names());
    assert_eq!(back.relation_names(), kg.relation_names());
    assert_eq!(back.triples(), kg.triples());
}

#[test]
fn split_directory_round_trip() {
    let g = synth::block_graph(&synth::BlockConfig { seed: 2, ..Default::default() }).unwrap();
    let mut kg = KnowledgeGraph::from_named(&g.likes).unwrap();
    let sp = split::zero_shot_holdout(&mut kg, rel::LIKES, 5, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_split(dir.path(), &kg, &sp).unwrap();
    let (kg2, sp2) = load_split(dir.path()).unwrap();
    assert_eq!(kg2.entity_names(), kg.entity_names());
    assert_eq!(sp2, sp);
}

#[test]
fn binary_round_trips() {
    let mut r = rng::seeded(6);
    let ent: Vec<f64> = (0..5 * 8).map(|_| rng::standard_normal(&mut r)).collect();
    let kge = KgeModel::from_parts(ModelKind::RotatE, Norm::L2, 4, 5.0, ent, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(decode_kge(&encode_kge(&kge), "k").unwrap(), kge);

    let al = AlignerModel::new(6, 5, 8, 3).unwrap();
    let back = decode_aligner(&encode_aligner(&al), "a").unwrap();
    assert_eq!(back.network, al.network);

    let vae = KgVaeModel::new(12, 5, 3, 0.1, 1).unwrap();
    let (back, h, w) = decode_kgvae(&encode_kgvae(&vae, 3, 4), "v").unwrap();
    assert_eq!((h, w), (3, 4));
    assert_eq!(back.params(), vae.params());

    let b = synth::texture_images(&synth::TextureConfig { per_class: 2, size: 4, ..Default::default() }).unwrap();
    let bytes = encode_images(&b.images);
    let back = decode_images(&bytes, "i", b.images.recipes().to_vec()).unwrap();
    assert_eq!(back.count(), b.images.count());
    // stored as f32
    for (x, y) in back.pixels().iter().zip(b.images.pixels()) {
        assert!((x - y).abs() < 1e-6);
    }
    assert!(decode_images(&bytes, "i", vec!["RCP:0".into()]).is_err());
    assert!(decode_kge(&bytes, "i").is_err());
}
