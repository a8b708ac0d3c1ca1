//! Hard-EM training on synthetic piecewise-constant utterances.
//!
//!     cargo run --release --example segmental_kmeans

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phoneseg::features::{FeatureMatrix, FeatureSource};
use phoneseg::hmm::{decode, train_segmental_kmeans, HmmConfig};

fn main() -> phoneseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let means: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut truth = Vec::new();
    let corpus: Vec<FeatureMatrix> = (0..20)
        .map(|_| {
            let mut rows = Vec::new();
            let mut b = Vec::new();
            while rows.len() < 150 {
                if !rows.is_empty() {
                    b.push(rows.len());
                }
                let k = rng.gen_range(0..means.len());
                for _ in 0..rng.gen_range(5..15) {
                    rows.push(means[k].iter().map(|m| m + rng.gen_range(-0.4..0.4)).collect::<Vec<f64>>());
                }
            }
            truth.push(b);
            FeatureMatrix::from_rows(&rows, 0.01, FeatureSource::Ssl).unwrap()
        })
        .collect();

    let cfg = HmmConfig {
        epochs: 8,
        seed: 1,
        ..HmmConfig::dp(5, 3.0)
    };
    let trained = train_segmental_kmeans(&corpus, &cfg, None)?;
    for e in &trained.epochs {
        println!(
            "epoch {}  score {:12.2}  segments {}  reseeded {:?}",
            e.epoch, e.total_score, e.num_segments, e.reseeded
        );
    }
    let r = decode(&corpus[0], &trained.model, None)?;
    println!("utterance 0 true boundaries    {:?}", truth[0]);
    println!("utterance 0 decoded boundaries {:?}", r.boundaries.frames());
    Ok(())
}
