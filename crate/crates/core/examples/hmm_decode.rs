//! Viterbi decoding with fixed centroids under both topologies, plus the
//! effect of a boundary-feature penalty.
//!
//!     cargo run --example hmm_decode

use phoneseg::features::{FeatureMatrix, FeatureSource};
use phoneseg::hmm::{decode_with_fixed_centroids, HmmConfig};
use phoneseg::kmeans::Centroids;
use phoneseg::svf::{deviation_track, BoundarySet};

fn main() -> phoneseg::Result<()> {
    // Three 1-d "phones" with a noisy middle.
    let xs = [0.0, 0.1, -0.1, 0.0, 2.0, 2.2, 1.1, 1.9, 2.1, 4.0, 3.9, 4.1];
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let m = FeatureMatrix::from_rows(&rows, 0.01, FeatureSource::Ssl)?;
    let c = Centroids::from_rows(&[[0.0], [2.0], [4.0], [1.0]])?;

    for lambda in [0.0, 0.5, 2.0] {
        let r = decode_with_fixed_centroids(&m, &c, &HmmConfig::dp(4, lambda), None)?;
        println!("DP   lambda={lambda:<3}  labels {:?}  boundaries {:?}", r.assignments, r.boundaries.frames());
    }
    for avg in [12.0, 4.0, 3.0] {
        let cfg = HmmConfig::nseg(4, avg);
        let r = decode_with_fixed_centroids(&m, &c, &cfg, None)?;
        println!(
            "Nseg L={avg:<4}  N={}  labels {:?}  score {:.3}",
            cfg.num_segments(m.num_frames()),
            r.assignments,
            r.score
        );
    }

    // Pretend a Mel detector put a boundary at frame 7 only.
    let devs = deviation_track(&BoundarySet::new(vec![7], m.num_frames())?);
    let cfg = HmmConfig::dp(4, 0.5).with_gamma(1.0);
    let r = decode_with_fixed_centroids(&m, &c, &cfg, Some(&devs))?;
    println!("DP-BF gamma=1    labels {:?}  boundaries {:?}", r.assignments, r.boundaries.frames());
    Ok(())
}
