//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phoneseg::features::{write_alignment_file, write_feature_file, write_wav, Alignment, FeatureMatrix, FeatureSource, Segment};

pub const TONES: [f64; 4] = [300.0, 900.0, 1800.0, 3400.0];
pub const DIM: usize = 8;

/// Phone sequence with durations in 20 ms units.
pub fn random_phones(rng: &mut ChaCha8Rng, total_units: usize) -> Vec<(usize, usize)> {
    let mut phones = Vec::new();
    let mut used = 0;
    let mut last = usize::MAX;
    while used < total_units {
        let mut label = rng.gen_range(0..TONES.len());
        if label == last {
            label = (label + 1) % TONES.len();
        }
        let dur = rng.gen_range(3..=7).min(total_units - used);
        phones.push((label, dur));
        used += dur;
        last = label;
    }
    phones
}

pub fn alignment(phones: &[(usize, usize)]) -> Alignment {
    let mut t = 0usize;
    let segs = phones
        .iter()
        .map(|&(label, dur)| {
            let s = Segment {
                start: t as f64 * 0.02,
                end: (t + dur) as f64 * 0.02,
                label: format!("p{label}"),
            };
            t += dur;
            s
        })
        .collect();
    Alignment::new(segs).unwrap()
}

/// Tone per phone at 16 kHz, with a little noise.
pub fn tone_audio(phones: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    for &(label, dur) in phones {
        for _ in 0..dur * 320 {
            let t = out.len() as f64 / 16000.0;
            out.push(0.5 * (2.0 * PI * TONES[label] * t).sin() + rng.gen_range(-0.01..0.01));
        }
    }
    out
}

pub fn label_means(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..TONES.len())
        .map(|_| (0..DIM).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

/// Piecewise-constant features at a 20 ms period plus uniform noise.
pub fn frame_features(phones: &[(usize, usize)], means: &[Vec<f64>], rng: &mut ChaCha8Rng, noise: f64) -> FeatureMatrix {
    let mut rows = Vec::new();
    for &(label, dur) in phones {
        for _ in 0..dur {
            rows.push(means[label].iter().map(|m| m + rng.gen_range(-noise..noise)).collect::<Vec<f64>>());
        }
    }
    FeatureMatrix::from_rows(&rows, 0.02, FeatureSource::Ssl).unwrap()
}

pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: PathBuf,
}

pub struct CorpusSpec {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seconds: f64,
    pub with_audio: bool,
    pub with_features: bool,
    pub with_alignments: bool,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            train: 6,
            valid: 2,
            test: 2,
            seconds: 1.2,
            with_audio: true,
            with_features: true,
            with_alignments: true,
            seed: 7,
        }
    }
}

/// Writes audio, 20 ms features, alignments and a manifest under `dir`.
pub fn build_corpus(dir: &Path, spec: &CorpusSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = label_means(spec.seed + 1);
    std::fs::create_dir_all(dir.join("data")).unwrap();
    let mut manifest = String::from("utt_id,audio_path,feature_path,alignment_path,split\n");
    let splits = std::iter::repeat_n("train", spec.train)
        .chain(std::iter::repeat_n("valid", spec.valid))
        .chain(std::iter::repeat_n("test", spec.test));
    for (i, split) in splits.enumerate() {
        let id = format!("utt{i:02}");
        let phones = random_phones(&mut rng, (spec.seconds / 0.02).round() as usize);
        let (mut audio, mut feats, mut ali) = (String::new(), String::new(), String::new());
        if spec.with_audio {
            audio = format!("data/{id}.wav");
            write_wav(dir.join(&audio), &tone_audio(&phones, &mut rng), 16000).unwrap();
        }
        if spec.with_features {
            feats = format!("data/{id}.feat");
            write_feature_file(dir.join(&feats), &frame_features(&phones, &means, &mut rng, 0.3)).unwrap();
        }
        if spec.with_alignments {
            ali = format!("data/{id}.phn");
            write_alignment_file(dir.join(&ali), &alignment(&phones)).unwrap();
        }
        manifest.push_str(&format!("{id},{audio},{feats},{ali},{split}\n"));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).unwrap();
    Corpus {
        dir: dir.to_path_buf(),
        manifest: path,
    }
}
