//! The whole pipeline on a generated corpus: tone audio with matching frame
//! features, Mel peaks, HMM and VQ decoding, and a small sweep.
//!
//!     cargo run --release --example end_to_end [work_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phoneseg::features::{write_alignment_file, write_feature_file, write_wav, Alignment, FeatureMatrix, FeatureSource, Segment};
use phoneseg::pipeline::{self, Manifest, RunConfig};

const TONES: [f64; 4] = [300.0, 900.0, 1800.0, 3400.0];

fn write_corpus(dir: &PathBuf) -> phoneseg::Result<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let means: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    std::fs::create_dir_all(dir.join("data")).map_err(|e| phoneseg::Error::Io { path: dir.clone(), source: e })?;
    let mut manifest = String::from("utt_id,audio_path,feature_path,alignment_path,split\n");
    for i in 0..16 {
        let split = match i {
            0..=9 => "train",
            10..=12 => "valid",
            _ => "test",
        };
        let (mut audio, mut rows, mut segs) = (Vec::new(), Vec::new(), Vec::new());
        let mut last = 9;
        while rows.len() < 60 {
            let mut k = rng.gen_range(0..4);
            if k == last {
                k = (k + 1) % 4;
            }
            last = k;
            let dur = rng.gen_range(3..=7);
            let start = rows.len() as f64 * 0.02;
            for _ in 0..dur {
                rows.push(means[k].iter().map(|m| m + rng.gen_range(-0.3..0.3)).collect::<Vec<f64>>());
                for _ in 0..320 {
                    let t = audio.len() as f64 / 16000.0;
                    audio.push(0.5 * (2.0 * PI * TONES[k] * t).sin());
                }
            }
            segs.push(Segment {
                start,
                end: rows.len() as f64 * 0.02,
                label: format!("p{k}"),
            });
        }
        let id = format!("u{i:02}");
        write_wav(dir.join(format!("data/{id}.wav")), &audio, 16000)?;
        write_feature_file(
            dir.join(format!("data/{id}.feat")),
            &FeatureMatrix::from_rows(&rows, 0.02, FeatureSource::Ssl)?,
        )?;
        write_alignment_file(dir.join(format!("data/{id}.phn")), &Alignment::new(segs)?)?;
        manifest.push_str(&format!("{id},data/{id}.wav,data/{id}.feat,data/{id}.phn,{split}\n"));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| phoneseg::Error::Io { path: path.clone(), source: e })?;
    Ok(path)
}

fn main() -> phoneseg::Result<()> {
    env_logger::init();
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("phoneseg-end-to-end"));
    let manifest = Manifest::read(write_corpus(&dir)?)?;

    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("mel_dir", dir.join("mel").display().to_string()),
        ("ssl_dir", dir.join("ssl").display().to_string()),
        ("output_dir", dir.join("out").display().to_string()),
        ("num_clusters", "4".into()),
        ("epochs", "5".into()),
        ("lambda", "2".into()),
        ("eval_split", "test".into()),
    ] {
        cfg.set(k, &v)?;
    }
    pipeline::cmd_extract_mel(&manifest, &dir.join("mel"), &cfg)?;
    pipeline::cmd_import_features(&manifest, &dir.join("ssl"), &cfg)?;

    let peaks = pipeline::cmd_peaks(&manifest, &cfg, Some(&pipeline::threshold_grid()))?;
    println!("Mel peaks (threshold {}):", peaks.threshold);
    print!("{}", peaks.report.unwrap().summary());

    let trained = pipeline::cmd_train(&manifest, &cfg)?;
    let hmm = pipeline::cmd_decode(&manifest, &cfg, &trained.model_path)?;
    println!("HMM-DP:");
    print!("{}", hmm.report.unwrap().summary());

    pipeline::cmd_kmeans(&manifest, &cfg)?;
    let vq = pipeline::cmd_decode(&manifest, &cfg, &cfg.output_dir.join("kmeans.phmm"))?;
    println!("VQ-DP:");
    print!("{}", vq.report.unwrap().summary());

    let grid = vec![("lambda".to_string(), vec!["0".into(), "1".into(), "2".into(), "4".into()])];
    let table = pipeline::cmd_sweep(&manifest, &cfg, &grid)?;
    print!("lambda sweep on valid:\n{}", table.to_csv());
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
