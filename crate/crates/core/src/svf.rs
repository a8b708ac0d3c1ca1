//! Spectral variation, prominence-based peak picking and the per-frame
//! distance-to-boundary track used as an HMM transition penalty.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Which pair of frames the cosine dissimilarity compares at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvfSpan {
    /// `(t - 1, t)`: a 20 ms window at a 10 ms hop.
    Adjacent,
    /// `(t - 2, t + 1)`: a 30 ms window at a 10 ms hop.
    #[default]
    Wide,
}

impl SvfSpan {
    fn offsets(self) -> (usize, usize) {
        match self {
            SvfSpan::Adjacent => (1, 0),
            SvfSpan::Wide => (2, 1),
        }
    }

    pub fn min_frames(self) -> usize {
        match self {
            SvfSpan::Adjacent => 2,
            SvfSpan::Wide => 4,
        }
    }
}

impl std::str::FromStr for SvfSpan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacent" => Ok(SvfSpan::Adjacent),
            "wide" => Ok(SvfSpan::Wide),
            other => Err(Error::config(format!("unknown svf span `{other}` (adjacent|wide)"))),
        }
    }
}

/// Per-frame SVF values together with the range where they are defined.
#[derive(Debug, Clone, PartialEq)]
pub struct SvfCurve {
    pub values: Vec<f64>,
    pub valid_range: Range<usize>,
}

impl SvfCurve {
    /// Min-max normalizes the values to `[0, 1]`.
    pub fn normalized(&self) -> SvfCurve {
        SvfCurve {
            values: normalize_svf(&self.values),
            valid_range: self.valid_range.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Raw negated-cosine dissimilarity `d_t` in `[-1, 1]`.
///
/// Frames outside the valid range are filled with the smallest valid value.
pub fn spectral_variation(m: &FeatureMatrix, span: SvfSpan) -> Result<SvfCurve> {
    let n = m.num_frames();
    if n < span.min_frames() {
        return Err(Error::data(format!(
            "{span:?} spectral variation needs at least {} frames, got {n}",
            span.min_frames()
        )));
    }
    let norms: Vec<f64> = m.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let (back, ahead) = span.offsets();
    let valid = back..n - ahead;
    let mut values = vec![0.0; n];
    for t in valid.clone() {
        let (i, j) = (t - back, t + ahead);
        for f in [i, j] {
            if norms[f] == 0.0 {
                return Err(Error::data(format!("frame {f} has zero norm")));
            }
        }
        let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
        values[t] = (-dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
    }
    let floor = values[valid.clone()].iter().copied().fold(f64::INFINITY, f64::min);
    for (t, v) in values.iter_mut().enumerate() {
        if !valid.contains(&t) {
            *v = floor;
        }
    }
    Ok(SvfCurve {
        values,
        valid_range: valid,
    })
}

/// Per-utterance min-max normalization; a constant curve maps to all zeros.
pub fn normalize_svf(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Sorted frame indices of boundaries within an utterance of `num_frames`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundarySet {
    frames: Vec<usize>,
    num_frames: usize,
}

impl BoundarySet {
    pub fn new(frames: Vec<usize>, num_frames: usize) -> Result<Self> {
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data("boundary frames must be strictly increasing"));
        }
        if let Some(&last) = frames.last() {
            if last >= num_frames {
                return Err(Error::data(format!(
                    "boundary frame {last} outside utterance of {num_frames} frames"
                )));
            }
        }
        Ok(Self { frames, num_frames })
    }

    pub fn empty(num_frames: usize) -> Self {
        Self {
            frames: Vec::new(),
            num_frames,
        }
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Local maxima of `values`, plateaus reported at their left-center index.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i - 1] < values[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && values[ahead] == values[i] {
                ahead += 1;
            }
            if values[ahead] < values[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of the peak at `peak`: its height above the higher
/// of the two bases, each base being the lowest point between the peak and the
/// nearest strictly higher sample (or the signal edge) on that side.
pub fn prominence(values: &[f64], peak: usize) -> f64 {
    let height = values[peak];
    let mut left_min = height;
    for &v in values[..peak].iter().rev() {
        if v > height {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = height;
    for &v in &values[peak + 1..] {
        if v > height {
            break;
        }
        right_min = right_min.min(v);
    }
    height - left_min.max(right_min)
}

/// Peaks inside the curve's valid range whose prominence reaches `threshold`.
pub fn find_peaks(curve: &SvfCurve, threshold: f64) -> BoundarySet {
    let valid = &curve.valid_range;
    let frames = local_maxima(&curve.values)
        .into_iter()
        .filter(|p| valid.contains(p))
        .filter(|&p| prominence(&curve.values, p) >= threshold)
        .collect();
    BoundarySet {
        frames,
        num_frames: curve.values.len(),
    }
}

/// SVF over `m` followed by normalization and peak picking.
pub fn detect_boundaries(m: &FeatureMatrix, span: SvfSpan, threshold: f64) -> Result<BoundarySet> {
    Ok(find_peaks(&spectral_variation(m, span)?.normalized(), threshold))
}

/// Distance in frames from every frame to its nearest boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationTrack {
    pub v: Vec<u32>,
}

impl DeviationTrack {
    pub fn zeros(num_frames: usize) -> Self {
        Self {
            v: vec![0; num_frames],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// With no boundaries the track is all zeros, which disables the penalty.
pub fn deviation_track(b: &BoundarySet) -> DeviationTrack {
    let n = b.num_frames;
    if b.frames.is_empty() {
        return DeviationTrack::zeros(n);
    }
    let far = u32::MAX / 2;
    let mut v = vec![far; n];
    for &f in &b.frames {
        v[f] = 0;
    }
    for t in 1..n {
        v[t] = v[t].min(v[t - 1].saturating_add(1));
    }
    for t in (0..n.saturating_sub(1)).rev() {
        v[t] = v[t].min(v[t + 1].saturating_add(1));
    }
    DeviationTrack { v }
}

pub fn boundaries_to_times(b: &BoundarySet, frame_period: f64) -> Vec<f64> {
    b.frames.iter().map(|&t| t as f64 * frame_period).collect()
}

/// Nearest-frame inverse of [`boundaries_to_times`]; duplicate frames collapse.
pub fn times_to_frames(times: &[f64], frame_period: f64, num_frames: usize) -> Result<BoundarySet> {
    let mut frames: Vec<usize> = times
        .iter()
        .map(|&s| (s / frame_period).round().max(0.0) as usize)
        .filter(|&f| f < num_frames)
        .collect();
    frames.sort_unstable();
    frames.dedup();
    BoundarySet::new(frames, num_frames)
}

/// Writes `utt_id<TAB>seconds...` lines, ordered by utterance id.
pub fn write_boundary_file(path: impl AsRef<Path>, rows: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (id, times) in rows {
        let times: Vec<String> = times.iter().map(|t| format_seconds(*t)).collect();
        text.push_str(&format!("{id}\t{}\n", times.join(" ")));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_boundary_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
        let times = rest
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format(path, format!("line {}: times not sorted", i + 1)));
        }
        if rows.insert(id.to_string(), times).is_some() {
            return Err(Error::format(path, format!("duplicate utterance `{id}`")));
        }
    }
    Ok(rows)
}

/// Seconds rendered with millisecond-scale precision and no float noise.
pub(crate) fn format_seconds(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').map(|x| format!("{x}.0")).unwrap_or_else(|| s.to_string())
}
