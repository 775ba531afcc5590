//! Barnes-Hut t-SNE of two well-separated Gaussian clusters in 50 dimensions.
//!
//! Run with `cargo run --release --example tsne_clusters`.

use gramstyle::classifiers::FeatureMatrix;
use gramstyle::tsne::{silhouette_score, tsne_embed, TsneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> gramstyle::Result<()> {
    let (n, d, separation) = (400, 50, 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let data: Vec<f32> = labels
        .iter()
        .flat_map(|&l| {
            let shift = if l == 0 { 0.0 } else { separation };
            (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z + if j == 0 { shift } else { 0.0 }) as f32
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let x = FeatureMatrix::new(n, d, data)?;

    let cfg = TsneConfig {
        seed: 1,
        ..TsneConfig::default()
    };
    let e = tsne_embed(&x, &cfg)?;
    for (it, kl) in &e.kl_trace {
        println!("iteration {it:>4}: KL {kl:.4}");
    }
    println!("silhouette of the two clusters: {:.3}", silhouette_score(&e.coords, &labels)?);
    Ok(())
}
