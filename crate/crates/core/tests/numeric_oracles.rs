use recipekg_core::align::{zero_shot_assign, ZeroShotMode};
use recipekg_core::embed::{compose_entity_init, content_key, cosine_similarity, instructions_key, name_key, EmbeddingTable};
use recipekg_core::kg::rel;
use recipekg_core::kge::{KgeModel, ModelKind, Norm};
use recipekg_core::nn::{Activation, Adam, DenseLayer, Tensor};
use recipekg_core::{rng, EntityId, KnowledgeGraph, NamedTriple, RelationId};

fn gauss(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng::standard_normal(r)).collect()
}

#[test]
fn dense_forward_is_naive_matmul() {
    let mut r = rng::seeded(11);
    for (n_in, n_out) in [(1, 1), (3, 5), (7, 2)] {
        let w = gauss(&mut r, n_in * n_out);
        let b = gauss(&mut r, n_out);
        let x = gauss(&mut r, n_in);
        let layer = DenseLayer::from_parts(
            Tensor::new(vec![n_out, n_in], w.clone()).unwrap(),
            Tensor::new(vec![n_out], b.clone()).unwrap(),
            Activation::Identity,
        )
        .unwrap();
        let got = layer.forward(&x).unwrap();
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += w[o * n_in + i] * x[i];
            }
            assert!((got[o] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn adam_matches_scalar_recurrence() {
    let grads = [0.5, -1.0, 2.0, 0.0, 0.3];
    let lr = 0.01;
    let mut adam = Adam::new(1, lr);
    let mut p = [1.0];
    let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
    for (t, g) in grads.iter().enumerate() {
        adam.step(&mut p, &[*g]).unwrap();
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let step = (t + 1) as i32;
        let m_hat = m / (1.0 - 0.9f64.powi(step));
        let v_hat = v / (1.0 - 0.999f64.powi(step));
        x -= lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - x).abs() < 1e-12, "step {step}");
    }
}

#[derive(Clone, Copy)]
struct C(f64, f64);

impl C {
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
}

#[test]
fn rotate_score_matches_complex_arithmetic() {
    let mut r = rng::seeded(5);
    let d = 6;
    let ent = gauss(&mut r, 3 * 2 * d);
    let phases = gauss(&mut r, d);
    let model = KgeModel::from_parts(ModelKind::RotatE, Norm::L2, d, 4.0, ent.clone(), phases.clone()).unwrap();
    let (h, t) = (&ent[0..2 * d], &ent[4 * d..6 * d]);
    let mut sq = 0.0;
    for j in 0..d {
        let rot = C(h[2 * j], h[2 * j + 1]).mul(C(phases[j].cos(), phases[j].sin()));
        sq += (rot.0 - t[2 * j]).powi(2) + (rot.1 - t[2 * j + 1]).powi(2);
    }
    let got = model.score(EntityId(0), RelationId(0), EntityId(2)).unwrap();
    assert!((got + sq.sqrt()).abs() < 1e-12);
}

#[test]
fn avg_assignment_is_componentwise_mean() {
    let mut r = rng::seeded(9);
    let model = KgeModel::from_parts(ModelKind::TransE, Norm::L2, 3, 5.0, gauss(&mut r, 5 * 3), gauss(&mut r, 3)).unwrap();
    let users = [EntityId(1), EntityId(3), EntityId(4)];
    let got = zero_shot_assign(&model, &users, ZeroShotMode::Avg, None, None, &mut rng::seeded(0)).unwrap();
    for (j, g) in got.iter().enumerate() {
        let mean = users.iter().map(|u| model.entity(*u).unwrap()[j]).sum::<f64>() / 3.0;
        assert!((g - mean).abs() < 1e-12);
    }
}

#[test]
fn cosine_reference_value() {
    let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((c - 0.974631846).abs() < 1e-9);
}

#[test]
fn compose_averages_descriptions_and_reviews() {
    let triples = [
        NamedTriple::new("PSN:1", rel::WROTE, "RVW:1"),
        NamedTriple::new("PSN:1", rel::WROTE, "RVW:2"),
        NamedTriple::new("RVW:1", rel::SUPPORTS, "RCP:1"),
        NamedTriple::new("RVW:2", rel::SUPPORTS, "RCP:1"),
    ];
    let kg = KnowledgeGraph::from_named(&triples).unwrap();
    let mut raw = EmbeddingTable::new(2);
    raw.insert(name_key("RCP:1"), vec![1.0, 3.0]).unwrap();
    raw.insert(instructions_key("RCP:1"), vec![3.0, 5.0]).unwrap();
    raw.insert(content_key("RVW:1"), vec![0.0, 2.0]).unwrap();
    raw.insert(content_key("RVW:2"), vec![4.0, -2.0]).unwrap();
    let init = compose_entity_init(&kg, kg.triples(), &raw).unwrap();
    assert_eq!(init.get("RCP:1").unwrap(), &[2.0, 4.0]);
    assert_eq!(init.get("PSN:1").unwrap(), &[2.0, 0.0]);
    assert_eq!(init.get("RVW:2").unwrap(), &[4.0, -2.0]);
}
