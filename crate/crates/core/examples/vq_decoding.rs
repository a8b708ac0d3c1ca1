//! Two-stage decoding: offline k-means, then HMM inference with the k-means
//! centroids held fixed. Compares against frame-wise nearest-centroid labels.
//!
//!     cargo run --release --example vq_decoding

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phoneseg::features::{FeatureMatrix, FeatureSource};
use phoneseg::hmm::{decode_with_fixed_centroids, HmmConfig};
use phoneseg::kmeans::{assign, fit_kmeans, KmeansParams};

fn runs(labels: &[usize]) -> usize {
    1 + labels.windows(2).filter(|w| w[0] != w[1]).count()
}

fn main() -> phoneseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let centers = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]];
    let mut rows = Vec::new();
    for _ in 0..30 {
        let c = centers[rng.gen_range(0..4)];
        for _ in 0..rng.gen_range(6..12) {
            rows.push(vec![c[0] + rng.gen_range(-2.2..2.2), c[1] + rng.gen_range(-2.2..2.2)]);
        }
    }
    let m = FeatureMatrix::from_rows(&rows, 0.01, FeatureSource::Ssl)?;
    let frames: Vec<&[f64]> = m.rows().collect();
    let km = fit_kmeans(&frames, &KmeansParams::new(4, 0))?;
    println!("k-means inertia {:.1} after {} iterations", km.inertia, km.history.len());

    let framewise = assign(&frames, &km)?;
    println!("frame-wise labels: {} segments", runs(&framewise));
    for lambda in [1.0, 4.0, 8.0] {
        let r = decode_with_fixed_centroids(&m, &km.centroids, &HmmConfig::dp(4, lambda), None)?;
        println!("VQ-DP lambda={lambda}: {} segments", r.num_segments());
    }
    let r = decode_with_fixed_centroids(&m, &km.centroids, &HmmConfig::nseg(4, 9.0), None)?;
    println!("VQ-Nseg L=9: {} segments (30 true)", r.num_segments());
    Ok(())
}
