use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DecodeMode, PeakSource, RunConfig, SplitSelector, CONFIG_KEYS};
use super::manifest::{Manifest, ManifestRow, Split};
use super::{ensure_dir, write_text, RunLog};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_corpus, reference_boundaries, strip_edge_boundaries, EvalReport, JointCounts, Metrics, PurityReport,
};
use crate::features::{
    align_lengths, apply_normalization, compute_log_mel, fit_normalization, load_feature_file, load_text_features,
    read_alignment_file, read_wav, upsample_to_period, write_feature_file, Alignment, FeatureMatrix, FeatureSource,
    MEL_FRAME_PERIOD,
};
use crate::hmm::{
    decode_with_fixed_centroids, read_model_file, train_segmental_kmeans, write_model_file, EpochRecord, HmmConfig,
    ModelFile, ModelKind, SegmentationResult,
};
use crate::kmeans::{fit_kmeans, Centroids};
use crate::svf::{
    boundaries_to_times, deviation_track, find_peaks, format_seconds, read_boundary_file, spectral_variation,
    write_boundary_file, BoundarySet, DeviationTrack, SvfCurve, SvfSpan,
};

fn feat_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.feat"))
}

fn require_dir<'a>(dir: &'a Option<PathBuf>, key: &str, why: &str) -> Result<&'a Path> {
    dir.as_deref()
        .ok_or_else(|| Error::config(format!("{why}: set `{key}`")))
}

fn load_mel(dir: &Path, id: &str) -> Result<FeatureMatrix> {
    Ok(load_feature_file(feat_path(dir, id))?.with_source(FeatureSource::Mel))
}

/// Normalized SVF curve, or `None` when the utterance is too short for the span.
fn svf_curve(m: &FeatureMatrix, span: SvfSpan) -> Result<Option<SvfCurve>> {
    if m.num_frames() < span.min_frames() {
        return Ok(None);
    }
    Ok(Some(spectral_variation(m, span)?.normalized()))
}

fn peaks(curve: Option<&SvfCurve>, num_frames: usize, threshold: f64) -> BoundarySet {
    curve.map_or_else(|| BoundarySet::empty(num_frames), |c| find_peaks(c, threshold))
}

fn rows_with_alignment<'a>(manifest: &Manifest, rows: &[&'a ManifestRow]) -> Vec<&'a ManifestRow> {
    rows.iter().copied().filter(|r| manifest.alignment_path(r).is_some()).collect()
}

fn load_alignments(manifest: &Manifest, rows: &[&ManifestRow], log: &mut RunLog) -> Result<Vec<Alignment>> {
    let paths: Vec<PathBuf> = rows.iter().filter_map(|r| manifest.alignment_path(r)).collect();
    paths.iter().for_each(|p| log.input(p));
    paths.par_iter().map(read_alignment_file).collect()
}

/// Scores `hyps` against every row that has an alignment; `None` if none do.
fn evaluate_rows(
    manifest: &Manifest,
    rows: &[&ManifestRow],
    hyps: &BTreeMap<String, Vec<f64>>,
    config: &RunConfig,
    log: &mut RunLog,
) -> Result<Option<EvalReport>> {
    let rows = rows_with_alignment(manifest, rows);
    if rows.is_empty() {
        return Ok(None);
    }
    let alignments = load_alignments(manifest, &rows, log)?;
    let mut refs = BTreeMap::new();
    let mut hyp = BTreeMap::new();
    for (r, a) in rows.iter().zip(&alignments) {
        let end = a.end_time();
        let h = hyps
            .get(&r.utt_id)
            .ok_or_else(|| Error::data(format!("no hypothesis boundaries for `{}`", r.utt_id)))?;
        refs.insert(r.utt_id.clone(), strip_edge_boundaries(&reference_boundaries(a.segments()), end));
        hyp.insert(r.utt_id.clone(), strip_edge_boundaries(h, end));
    }
    evaluate_corpus(&refs, &hyp, config.tolerance, config.protocol).map(Some)
}

fn write_report(dir: &Path, report: &EvalReport, log: &mut RunLog) -> Result<()> {
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    write_text(&dir.join("per_utterance.csv"), &report.per_utterance_csv())?;
    for line in report.summary().lines() {
        log.note(line.trim_end());
    }
    Ok(())
}

fn skip_notice(log: &mut RunLog) {
    log.note("no reference alignments for the evaluated split; evaluation skipped");
}

/// Assigns `config.valid_fraction` of the train utterances to `valid`.
pub fn cmd_split(manifest: &Manifest, config: &RunConfig) -> Result<Manifest> {
    let mut log = RunLog::new("split", config);
    let mut train: Vec<&str> = manifest.select(SplitSelector::Train).iter().map(|r| r.utt_id.as_str()).collect();
    let n_valid = (config.valid_fraction * train.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.hmm.seed);
    train.shuffle(&mut rng);
    let chosen: std::collections::BTreeSet<&str> = train[..n_valid].iter().copied().collect();
    let rows = manifest
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if chosen.contains(r.utt_id.as_str()) {
                r.split = Split::Valid;
            }
            r
        })
        .collect();
    for id in &chosen {
        log.utterance(id, "valid");
    }
    log.note(format!("moved {n_valid} of {} train utterances to valid", train.len()));
    log.write()?;
    Manifest::new(rows, manifest.base_dir())
}

/// Log-Mel features for every utterance, normalized with train-split statistics.
/// Writes `<out_dir>/<utt_id>.feat` and `<out_dir>/stats.txt`.
pub fn cmd_extract_mel(manifest: &Manifest, out_dir: &Path, config: &RunConfig) -> Result<()> {
    let mut log = RunLog::new("extract-mel", config);
    let rows = manifest.select(SplitSelector::All);
    let mut audio = Vec::with_capacity(rows.len());
    for r in &rows {
        let p = manifest
            .audio_path(r)
            .ok_or_else(|| Error::data(format!("`{}` has no audio path", r.utt_id)))?;
        log.input(&p);
        audio.push(p);
    }
    let wavs: Vec<(Vec<f64>, u32)> = audio.par_iter().map(read_wav).collect::<Result<_>>()?;
    if let Some((_, first)) = wavs.first() {
        if let Some((i, (_, rate))) = wavs.iter().enumerate().find(|(_, (_, r))| r != first) {
            return Err(Error::data(format!(
                "mixed sample rates: {first} Hz and {rate} Hz (`{}`)",
                rows[i].utt_id
            )));
        }
    }
    let feats: Vec<FeatureMatrix> = wavs
        .par_iter()
        .zip(&audio)
        .map(|((samples, rate), p)| {
            compute_log_mel(samples, *rate).map_err(|e| Error::data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_>>()?;
    drop(wavs);
    let train: Vec<&FeatureMatrix> = rows
        .iter()
        .zip(&feats)
        .filter(|(r, _)| r.split == Split::Train)
        .map(|(_, m)| m)
        .collect();
    if train.is_empty() {
        return Err(Error::data("cannot fit normalization: the train split is empty"));
    }
    let stats = fit_normalization(&train)?;
    ensure_dir(out_dir)?;
    stats.write(out_dir.join("stats.txt"))?;
    rows.par_iter()
        .zip(&feats)
        .map(|(r, m)| write_feature_file(feat_path(out_dir, &r.utt_id), &apply_normalization(m, &stats)?))
        .collect::<Result<()>>()?;
    for (r, m) in rows.iter().zip(&feats) {
        log.utterance(&r.utt_id, format!("frames={}", m.num_frames()));
    }
    log.note(format!("normalization fitted on {} train utterances", train.len()));
    log.write()?;
    Ok(())
}

/// Imports precomputed features (FEAT, or whitespace text at `config.ssl_period`),
/// repeats frames up to the 10 ms grid, and trims to the Mel length when Mel
/// features exist.
pub fn cmd_import_features(manifest: &Manifest, out_dir: &Path, config: &RunConfig) -> Result<()> {
    let mut log = RunLog::new("import-features", config);
    let rows: Vec<&ManifestRow> = manifest
        .select(SplitSelector::All)
        .into_iter()
        .filter(|r| manifest.feature_path(r).is_some())
        .collect();
    if rows.is_empty() {
        return Err(Error::data("no manifest row has a feature path"));
    }
    for r in &rows {
        log.input(manifest.feature_path(r).unwrap());
        if let Some(d) = &config.mel_dir {
            let p = feat_path(d, &r.utt_id);
            if p.exists() {
                log.input(p);
            }
        }
    }
    ensure_dir(out_dir)?;
    let frames: Vec<usize> = rows
        .par_iter()
        .map(|r| {
            let path = manifest.feature_path(r).unwrap();
            let m = if path.extension().is_some_and(|e| e == "txt") {
                load_text_features(&path, config.ssl_period)?
            } else {
                load_feature_file(&path)?
            };
            let mut m = upsample_to_period(&m, MEL_FRAME_PERIOD)?;
            if let Some(d) = &config.mel_dir {
                let p = feat_path(d, &r.utt_id);
                if p.exists() {
                    m = align_lengths(&m, &load_mel(d, &r.utt_id)?)?.0;
                }
            }
            write_feature_file(feat_path(out_dir, &r.utt_id), &m)?;
            Ok(m.num_frames())
        })
        .collect::<Result<_>>()?;
    for (r, n) in rows.iter().zip(frames) {
        log.utterance(&r.utt_id, format!("frames={n}"));
    }
    log.write()?;
    Ok(())
}

/// The prominence grid 0.05, 0.10, ..., 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeaksOutcome {
    pub threshold: f64,
    /// `(threshold, validation metrics)` per grid point when sweeping.
    pub sweep: Vec<(f64, Metrics)>,
    pub boundaries: BTreeMap<String, Vec<f64>>,
    pub report: Option<EvalReport>,
}

struct CurveSet {
    ids: Vec<String>,
    curves: Vec<Option<SvfCurve>>,
    num_frames: Vec<usize>,
    period: Vec<f64>,
}

impl CurveSet {
    fn load(rows: &[&ManifestRow], config: &RunConfig, log: &mut RunLog) -> Result<Self> {
        let dir = match config.peak_source {
            PeakSource::Mel => require_dir(&config.mel_dir, "mel_dir", "peak picking on Mel features")?,
            PeakSource::Ssl => require_dir(&config.ssl_dir, "ssl_dir", "peak picking on SSL features")?,
        };
        rows.iter().for_each(|r| log.input(feat_path(dir, &r.utt_id)));
        let loaded: Vec<(Option<SvfCurve>, usize, f64)> = rows
            .par_iter()
            .map(|r| {
                let m = load_feature_file(feat_path(dir, &r.utt_id))?;
                Ok((svf_curve(&m, config.svf_span)?, m.num_frames(), m.frame_period()))
            })
            .collect::<Result<_>>()?;
        let mut set = CurveSet {
            ids: rows.iter().map(|r| r.utt_id.clone()).collect(),
            curves: Vec::new(),
            num_frames: Vec::new(),
            period: Vec::new(),
        };
        for (c, n, p) in loaded {
            set.curves.push(c);
            set.num_frames.push(n);
            set.period.push(p);
        }
        Ok(set)
    }

    fn boundaries(&self, threshold: f64) -> BTreeMap<String, Vec<f64>> {
        (0..self.ids.len())
            .map(|i| {
                let b = peaks(self.curves[i].as_ref(), self.num_frames[i], threshold);
                (self.ids[i].clone(), boundaries_to_times(&b, self.period[i]))
            })
            .collect()
    }
}

/// SVF peak picking. With `sweep`, the threshold maximizing validation
/// R-value (first on ties) replaces `config.threshold`.
pub fn cmd_peaks(manifest: &Manifest, config: &RunConfig, sweep: Option<&[f64]>) -> Result<PeaksOutcome> {
    let mut log = RunLog::new("peaks", config);
    let out = &config.output_dir;
    let mut threshold = config.threshold;
    let mut table = Vec::new();
    if let Some(grid) = sweep {
        if grid.is_empty() {
            return Err(Error::config("empty threshold grid"));
        }
        let valid = rows_with_alignment(manifest, &manifest.select(SplitSelector::Valid));
        if valid.is_empty() {
            return Err(Error::data("threshold sweep needs validation utterances with alignments"));
        }
        let curves = CurveSet::load(&valid, config, &mut log)?;
        let mut csv = String::from("threshold,precision,recall,f1,r_value\n");
        let mut best: Option<(f64, f64)> = None;
        for &th in grid {
            let report = evaluate_rows(manifest, &valid, &curves.boundaries(th), config, &mut log)?
                .expect("validation rows have alignments");
            let m = report.pooled;
            let _ = writeln!(csv, "{th},{},{},{},{}", m.precision, m.recall, m.f1, m.r_value);
            if best.is_none_or(|(_, rv)| m.r_value > rv) {
                best = Some((th, m.r_value));
            }
            table.push((th, m));
        }
        write_text(&out.join("peaks_sweep.csv"), &csv)?;
        threshold = best.unwrap().0;
        log.note(format!("selected threshold {threshold} (validation R-value {})", best.unwrap().1));
    }

    let rows = manifest.select(SplitSelector::All);
    let curves = CurveSet::load(&rows, config, &mut log)?;
    let boundaries = curves.boundaries(threshold);
    write_boundary_file(out.join("boundaries.txt"), &boundaries)?;
    if config.write_curves {
        let mut csv = String::from("utt_id,frame,time,svf,boundary\n");
        for i in 0..curves.ids.len() {
            let Some(c) = &curves.curves[i] else { continue };
            let b = find_peaks(c, threshold);
            let mut next = b.frames().iter().peekable();
            for (t, v) in c.values.iter().enumerate() {
                let is_b = next.next_if_eq(&&t).is_some();
                let _ = writeln!(
                    csv,
                    "{},{t},{},{v},{}",
                    curves.ids[i],
                    format_seconds(t as f64 * curves.period[i]),
                    u8::from(is_b)
                );
            }
        }
        write_text(&out.join("svf_curves.csv"), &csv)?;
    }
    for (id, b) in &boundaries {
        log.utterance(id, format!("boundaries={}", b.len()));
    }
    let eval_rows = manifest.select(config.eval_split);
    let report = evaluate_rows(manifest, &eval_rows, &boundaries, config, &mut log)?;
    match &report {
        Some(r) => write_report(out, r, &mut log)?,
        None => skip_notice(&mut log),
    }
    log.write()?;
    Ok(PeaksOutcome {
        threshold,
        sweep: table,
        boundaries,
        report,
    })
}

/// SSL features (and deviation tracks when boundary features are on) for `rows`.
fn load_hmm_inputs(
    rows: &[&ManifestRow],
    config: &RunConfig,
    hmm: &HmmConfig,
    log: &mut RunLog,
) -> Result<(Vec<FeatureMatrix>, Option<Vec<DeviationTrack>>)> {
    let ssl_dir = require_dir(&config.ssl_dir, "ssl_dir", "HMM decoding needs SSL features")?;
    let mel_dir = if hmm.gamma > 0.0 {
        Some(require_dir(
            &config.mel_dir,
            "mel_dir",
            "boundary features are enabled (gamma > 0) but no Mel features are configured",
        )?)
    } else {
        None
    };
    for r in rows {
        log.input(feat_path(ssl_dir, &r.utt_id));
        if let Some(d) = mel_dir {
            log.input(feat_path(d, &r.utt_id));
        }
    }
    let loaded: Vec<(FeatureMatrix, Option<DeviationTrack>)> = rows
        .par_iter()
        .map(|r| {
            let ssl = load_feature_file(feat_path(ssl_dir, &r.utt_id))?;
            let Some(d) = mel_dir else { return Ok((ssl, None)) };
            let (ssl, mel) = align_lengths(&ssl, &load_mel(d, &r.utt_id)?)?;
            let curve = svf_curve(&mel, config.svf_span)?;
            let b = peaks(curve.as_ref(), mel.num_frames(), config.bf_threshold);
            Ok((ssl, Some(deviation_track(&b))))
        })
        .collect::<Result<_>>()?;
    let (feats, devs): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let devs = mel_dir.map(|_| devs.into_iter().map(|d| d.unwrap()).collect());
    Ok((feats, devs))
}

fn decode_all(
    feats: &[FeatureMatrix],
    centroids: &Centroids,
    hmm: &HmmConfig,
    devs: Option<&[DeviationTrack]>,
) -> Result<Vec<SegmentationResult>> {
    feats
        .par_iter()
        .enumerate()
        .map(|(i, m)| decode_with_fixed_centroids(m, centroids, hmm, devs.map(|d| &d[i])))
        .collect()
}

fn boundary_map(rows: &[&ManifestRow], feats: &[FeatureMatrix], results: &[SegmentationResult]) -> BTreeMap<String, Vec<f64>> {
    rows.iter()
        .zip(feats.iter().zip(results))
        .map(|(r, (m, s))| (r.utt_id.clone(), boundaries_to_times(&s.boundaries, m.frame_period())))
        .collect()
}

fn train_rows(manifest: &Manifest) -> Result<Vec<&ManifestRow>> {
    let rows = manifest.select(SplitSelector::Train);
    if rows.is_empty() {
        return Err(Error::data("the train split is empty"));
    }
    Ok(rows)
}

/// Offline k-means on the train-split SSL frames; writes `kmeans.phmm`.
pub fn cmd_kmeans(manifest: &Manifest, config: &RunConfig) -> Result<Centroids> {
    let mut log = RunLog::new("kmeans", config);
    let rows = train_rows(manifest)?;
    let hmm = HmmConfig { gamma: 0.0, ..config.hmm.clone() };
    let (feats, _) = load_hmm_inputs(&rows, config, &hmm, &mut log)?;
    let frames: Vec<&[f64]> = feats.iter().flat_map(|m| m.rows()).collect();
    let model = fit_kmeans(&frames, &config.kmeans_params())?;
    let path = config.output_dir.join("kmeans.phmm");
    ensure_dir(&config.output_dir)?;
    write_model_file(&path, &ModelFile::from_kmeans(&model.centroids))?;
    for (i, inertia) in model.history.iter().enumerate() {
        log.note(format!("iteration {i}: inertia {inertia}"));
    }
    log.note(format!("final inertia {} over {} frames", model.inertia, frames.len()));
    log.write()?;
    Ok(model.centroids)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub epochs: Vec<EpochRecord>,
    /// Train-split boundaries decoded with the stored (f32) centroids.
    pub boundaries: BTreeMap<String, Vec<f64>>,
}

/// Segmental k-means on the train split; writes `model.phmm`, `epochs.csv`
/// and `train_boundaries.txt`.
pub fn cmd_train(manifest: &Manifest, config: &RunConfig) -> Result<TrainOutcome> {
    let mut log = RunLog::new("train", config);
    let rows = train_rows(manifest)?;
    let (feats, devs) = load_hmm_inputs(&rows, config, &config.hmm, &mut log)?;
    let trained = train_segmental_kmeans(&feats, &config.hmm, devs.as_deref())?;

    let out = &config.output_dir;
    ensure_dir(out)?;
    let model_path = out.join("model.phmm");
    write_model_file(&model_path, &ModelFile::from_model(&trained.model))?;
    let mut csv = String::from("epoch,total_score,num_segments,reseeded\n");
    for e in &trained.epochs {
        let reseeded: Vec<String> = e.reseeded.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(csv, "{},{},{},{}", e.epoch, e.total_score, e.num_segments, reseeded.join(" "));
        log.note(format!("epoch {}: score {} segments {}", e.epoch, e.total_score, e.num_segments));
    }
    write_text(&out.join("epochs.csv"), &csv)?;

    let stored = trained.model.centroids.quantized();
    let results = decode_all(&feats, &stored, &config.hmm, devs.as_deref())?;
    let boundaries = boundary_map(&rows, &feats, &results);
    write_boundary_file(out.join("train_boundaries.txt"), &boundaries)?;
    for (r, s) in rows.iter().zip(&results) {
        log.utterance(&r.utt_id, format!("segments={} score={}", s.num_segments(), s.score));
    }
    log.write()?;
    Ok(TrainOutcome {
        model_path,
        epochs: trained.epochs,
        boundaries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub boundaries: BTreeMap<String, Vec<f64>>,
    pub assignments: BTreeMap<String, Vec<usize>>,
    pub report: Option<EvalReport>,
    pub purity: Option<PurityReport>,
}

/// Segments every utterance with a trained HMM, or with k-means centroids
/// under the configured HMM hyperparameters.
pub fn cmd_decode(manifest: &Manifest, config: &RunConfig, model_path: &Path) -> Result<DecodeOutcome> {
    let mut log = RunLog::new("decode", config);
    log.input(model_path);
    let file = read_model_file(model_path)?;
    let model = file.to_model(&config.hmm)?;
    match file.kind {
        ModelKind::Kmeans => log.note(format!("VQ decoding with {} k-means centroids", model.centroids.k())),
        ModelKind::Hmm(v) => log.note(format!("HMM decoding ({v})")),
    }
    let rows = manifest.select(SplitSelector::All);
    let (feats, devs) = load_hmm_inputs(&rows, config, &model.config, &mut log)?;
    let results = decode_all(&feats, &model.centroids, &model.config, devs.as_deref())?;
    let boundaries = boundary_map(&rows, &feats, &results);
    let assignments: BTreeMap<String, Vec<usize>> = rows
        .iter()
        .zip(&results)
        .map(|(r, s)| (r.utt_id.clone(), s.assignments.clone()))
        .collect();
    let out = &config.output_dir;
    ensure_dir(out)?;
    write_boundary_file(out.join("boundaries.txt"), &boundaries)?;
    write_assignment_file(&out.join("assignments.txt"), &assignments)?;
    for (r, s) in rows.iter().zip(&results) {
        log.utterance(&r.utt_id, format!("segments={} score={}", s.num_segments(), s.score));
    }

    let eval_rows = manifest.select(config.eval_split);
    let report = evaluate_rows(manifest, &eval_rows, &boundaries, config, &mut log)?;
    let purity = match &report {
        Some(r) => {
            write_report(out, r, &mut log)?;
            let p = purity_rows(manifest, &eval_rows, &assignments, MEL_FRAME_PERIOD, &mut log)?;
            write_purity(out, &p, &mut log)?;
            Some(p)
        }
        None => {
            skip_notice(&mut log);
            None
        }
    };
    log.write()?;
    Ok(DecodeOutcome {
        boundaries,
        assignments,
        report,
        purity,
    })
}

fn purity_rows(
    manifest: &Manifest,
    rows: &[&ManifestRow],
    assignments: &BTreeMap<String, Vec<usize>>,
    frame_period: f64,
    log: &mut RunLog,
) -> Result<PurityReport> {
    let rows = rows_with_alignment(manifest, rows);
    let alignments = load_alignments(manifest, &rows, log)?;
    let mut joint = JointCounts::default();
    for (r, a) in rows.iter().zip(&alignments) {
        let labels = assignments
            .get(&r.utt_id)
            .ok_or_else(|| Error::data(format!("no assignments for `{}`", r.utt_id)))?;
        joint.add_utterance(labels, a, frame_period);
    }
    joint.report()
}

fn write_purity(dir: &Path, p: &PurityReport, log: &mut RunLog) -> Result<()> {
    write_text(&dir.join("purity.csv"), &p.to_csv())?;
    write_text(&dir.join("contingency.csv"), &p.joint_counts.to_csv())?;
    log.note(format!(
        "phone purity {:.4}, cluster purity {:.4}",
        p.phone_purity, p.cluster_purity
    ));
    Ok(())
}

/// Writes `utt_id<TAB>k k k ...` lines ordered by id.
pub fn write_assignment_file(path: &Path, rows: &BTreeMap<String, Vec<usize>>) -> Result<()> {
    let mut s = String::new();
    for (id, labels) in rows {
        let labels: Vec<String> = labels.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "{id}\t{}", labels.join(" "));
    }
    write_text(path, &s)
}

pub fn read_assignment_file(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
        let labels = rest
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<Vec<usize>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if rows.insert(id.to_string(), labels).is_some() {
            return Err(Error::format(path, format!("duplicate utterance `{id}`")));
        }
    }
    Ok(rows)
}

/// Scores a boundary file against the manifest alignments.
pub fn cmd_evaluate(manifest: &Manifest, config: &RunConfig, boundaries: &Path) -> Result<EvalReport> {
    let mut log = RunLog::new("evaluate", config);
    log.input(boundaries);
    let hyps = read_boundary_file(boundaries)?;
    let rows = manifest.select(config.eval_split);
    let report = evaluate_rows(manifest, &rows, &hyps, config, &mut log)?
        .ok_or_else(|| Error::data("no reference alignments in the evaluated split"))?;
    write_report(&config.output_dir, &report, &mut log)?;
    log.write()?;
    Ok(report)
}

/// Purity of a frame-assignment file against the manifest alignments.
pub fn cmd_purity(manifest: &Manifest, config: &RunConfig, assignments: &Path, frame_period: f64) -> Result<PurityReport> {
    let mut log = RunLog::new("purity", config);
    log.input(assignments);
    let labels = read_assignment_file(assignments)?;
    let rows = manifest.select(config.eval_split);
    if rows_with_alignment(manifest, &rows).is_empty() {
        return Err(Error::data("no reference alignments in the evaluated split"));
    }
    let report = purity_rows(manifest, &rows, &labels, frame_period, &mut log)?;
    write_purity(&config.output_dir, &report, &mut log)?;
    log.write()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    pub num_segments: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub params: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Index of the highest validation R-value (first on ties).
    pub best: usize,
}

impl SweepTable {
    fn header(&self) -> String {
        let mut h = self.params.join(",");
        h.push_str(",num_segments,precision,recall,f1,r_value\n");
        h
    }

    fn row_csv(r: &SweepRow) -> String {
        let m = &r.metrics;
        format!(
            "{},{},{},{},{},{}\n",
            r.values.join(","),
            r.num_segments,
            m.precision,
            m.recall,
            m.f1,
            m.r_value
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        self.rows.iter().for_each(|r| s.push_str(&Self::row_csv(r)));
        s
    }

    pub fn best_csv(&self) -> String {
        self.header() + &Self::row_csv(&self.rows[self.best])
    }
}

/// Cartesian grid over config keys, each point trained on `train` (for the
/// HMM and VQ modes) and scored on `valid`. The last parameter varies fastest.
pub fn cmd_sweep(manifest: &Manifest, config: &RunConfig, grid: &[(String, Vec<String>)]) -> Result<SweepTable> {
    if grid.is_empty() || grid.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::config("empty sweep grid"));
    }
    for (k, _) in grid {
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::config(format!(
                "unknown sweep parameter `{k}`; valid names: {}",
                CONFIG_KEYS.join(", ")
            )));
        }
    }
    let valid = rows_with_alignment(manifest, &manifest.select(SplitSelector::Valid));
    if valid.is_empty() {
        return Err(Error::data("sweep needs validation utterances with alignments"));
    }
    let mut log = RunLog::new("sweep", config);

    let mut points: Vec<Vec<String>> = vec![Vec::new()];
    for (_, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut p = p.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }

    let mut rows = Vec::with_capacity(points.len());
    for values in points {
        let mut cfg = config.clone();
        let pairs: BTreeMap<String, String> = grid.iter().map(|(k, _)| k.clone()).zip(values.iter().cloned()).collect();
        cfg.apply(&pairs)?;
        cfg.validate()?;
        let (hyps, num_segments) = run_point(manifest, &cfg, &valid, &mut log)?;
        let report = evaluate_rows(manifest, &valid, &hyps, &cfg, &mut log)?.expect("validation rows have alignments");
        let desc: Vec<String> = grid.iter().zip(&values).map(|((k, _), v)| format!("{k}={v}")).collect();
        log.note(format!("{}: R-value {}", desc.join(" "), report.pooled.r_value));
        rows.push(SweepRow {
            values,
            num_segments,
            metrics: report.pooled,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.metrics.r_value > rows[b].metrics.r_value { i } else { b });
    let table = SweepTable {
        params: grid.iter().map(|(k, _)| k.clone()).collect(),
        rows,
        best,
    };
    write_text(&config.output_dir.join("sweep.csv"), &table.to_csv())?;
    write_text(&config.output_dir.join("sweep_best.csv"), &table.best_csv())?;
    log.note(format!("best row {}: {}", best, table.best_csv().lines().nth(1).unwrap_or("")));
    log.write()?;
    Ok(table)
}

/// Validation boundaries and total segment count for one grid point.
fn run_point(
    manifest: &Manifest,
    cfg: &RunConfig,
    valid: &[&ManifestRow],
    log: &mut RunLog,
) -> Result<(BTreeMap<String, Vec<f64>>, usize)> {
    match cfg.mode {
        DecodeMode::Peak => {
            let curves = CurveSet::load(valid, cfg, log)?;
            let hyps = curves.boundaries(cfg.threshold);
            let n = hyps.values().map(|b| b.len() + 1).sum();
            Ok((hyps, n))
        }
        DecodeMode::Hmm | DecodeMode::Vq => {
            let train = train_rows(manifest)?;
            let centroids = if cfg.mode == DecodeMode::Hmm {
                let (feats, devs) = load_hmm_inputs(&train, cfg, &cfg.hmm, log)?;
                train_segmental_kmeans(&feats, &cfg.hmm, devs.as_deref())?.model.centroids
            } else {
                let hmm = HmmConfig { gamma: 0.0, ..cfg.hmm.clone() };
                let (feats, _) = load_hmm_inputs(&train, cfg, &hmm, log)?;
                let frames: Vec<&[f64]> = feats.iter().flat_map(|m| m.rows()).collect();
                fit_kmeans(&frames, &cfg.kmeans_params())?.centroids
            };
            // Same precision as a model written to disk and decoded from it.
            let centroids = centroids.quantized();
            let (feats, devs) = load_hmm_inputs(valid, cfg, &cfg.hmm, log)?;
            let results = decode_all(&feats, &centroids, &cfg.hmm, devs.as_deref())?;
            let n = results.iter().map(SegmentationResult::num_segments).sum();
            Ok((boundary_map(valid, &feats, &results), n))
        }
    }
}
