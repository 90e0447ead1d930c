use recipekg_core::align::{train_aligner, AlignerConfig};
use recipekg_core::cluster::kmeans_fit;
use recipekg_core::embed::EmbeddingTable;
use recipekg_core::kgvae::{guidance_mse, train_kgvae, ImageSet, KgVaeConfig};
use recipekg_core::{rng, synth};

fn gauss(r: &mut rng::Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| s * rng::standard_normal(r)).collect()
}

#[test]
fn aligner_learns_planted_linear_map() {
    let mut r = rng::seeded(1);
    let (d_in, d_out) = (8, 4);
    let a = gauss(&mut r, d_in * d_out, 0.3);
    let xs: Vec<Vec<f64>> = (0..200).map(|_| gauss(&mut r, d_in, 1.0)).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..d_out).map(|o| (0..d_in).map(|i| a[o * d_in + i] * x[i]).sum()).collect())
        .collect();
    let pairs: Vec<(&[f64], &[f64])> = xs.iter().zip(&ys).map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
    let fit = train_aligner(&pairs, &AlignerConfig { epochs: 500, seed: 1, ..Default::default() }).unwrap();
    assert!(fit.final_mse < 1e-3, "mse {}", fit.final_mse);
    assert!(fit.history.first().unwrap() > fit.history.last().unwrap());
}

#[test]
fn guidance_dominates_with_tiny_lambda() {
    let mut r = rng::seeded(2);
    let (n, side, d) = (64, 6, 4);
    let pixels: Vec<f64> = (0..n * side * side).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect();
    let recipes: Vec<String> = (0..n).map(synth::recipe).collect();
    let images = ImageSet::new(side, side, pixels, recipes.clone()).unwrap();
    let mut embs = EmbeddingTable::new(d);
    for name in &recipes {
        embs.insert(name.clone(), gauss(&mut r, d, 1.0)).unwrap();
    }
    let cfg = KgVaeConfig { lambda: 1e-6, seed: 2, ..Default::default() };
    let before = guidance_mse(&train_kgvae(&images, &embs, &KgVaeConfig { epochs: 0, ..cfg.clone() }).unwrap().model, &images, &embs).unwrap();
    let after = guidance_mse(&train_kgvae(&images, &embs, &cfg).unwrap().model, &images, &embs).unwrap();
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let (points, labels) = synth::gaussian_blobs(3, 40, 5, 6.0, 4).unwrap();
    let slices = synth::as_slices(&points);
    let fit = kmeans_fit(&slices, 3, 4, 100).unwrap();
    let mut agree = 0;
    for c in 0..3 {
        let members: Vec<usize> = labels.iter().zip(&fit.labels).filter(|(_, f)| **f == c).map(|(l, _)| *l).collect();
        if let Some((_, frac)) = synth::majority(&members) {
            agree += (frac * members.len() as f64).round() as usize;
        }
    }
    assert!(agree as f64 / points.len() as f64 >= 0.7);
}
