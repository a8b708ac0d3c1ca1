//! Boundary precision/recall/F1/R-value under strict or lenient matching, and
//! frame-level phone and cluster purity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::{Alignment, Segment};

/// Slack added to the tolerance so that frame-derived times that are exactly
/// `tol` apart in exact arithmetic still match despite rounding.
pub const TIME_EPSILON: f64 = 1e-9;

pub const DEFAULT_TOLERANCE: f64 = 0.020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Protocol {
    /// One-to-one matching: each boundary earns credit at most once.
    #[default]
    Strict,
    /// Any boundary within tolerance of any boundary on the other side counts.
    Lenient,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Protocol::Strict),
            "lenient" => Ok(Protocol::Lenient),
            other => Err(Error::config(format!("unknown protocol `{other}` (strict|lenient)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryMatch {
    /// Hypothesized boundaries credited as correct (precision numerator).
    pub hits: usize,
    /// Reference boundaries found (recall numerator); equals `hits` when strict.
    pub ref_hits: usize,
    pub num_ref: usize,
    pub num_hyp: usize,
    pub tolerance_sec: f64,
}

impl BoundaryMatch {
    pub fn precision(&self) -> f64 {
        ratio(self.hits, self.num_hyp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.ref_hits, self.num_ref)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::new(self.precision(), self.recall())
    }

    fn add(&mut self, other: &BoundaryMatch) {
        self.hits += other.hits;
        self.ref_hits += other.ref_hits;
        self.num_ref += other.num_ref;
        self.num_hyp += other.num_hyp;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_sorted(name: &str, times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::data(format!("{name} boundaries are not sorted")));
    }
    Ok(())
}

pub fn match_boundaries(reference: &[f64], hypothesis: &[f64], tol: f64, protocol: Protocol) -> Result<BoundaryMatch> {
    check_sorted("reference", reference)?;
    check_sorted("hypothesis", hypothesis)?;
    if !(tol >= 0.0) {
        return Err(Error::data(format!("tolerance must be >= 0, got {tol}")));
    }
    let within = |a: f64, b: f64| (a - b).abs() <= tol + TIME_EPSILON;
    let (hits, ref_hits) = match protocol {
        Protocol::Strict => {
            // Greedy left-to-right matching is maximum-cardinality for a
            // single interval tolerance on sorted sequences.
            let (mut i, mut j, mut hits) = (0, 0, 0);
            while i < reference.len() && j < hypothesis.len() {
                if within(reference[i], hypothesis[j]) {
                    hits += 1;
                    i += 1;
                    j += 1;
                } else if hypothesis[j] < reference[i] {
                    j += 1;
                } else {
                    i += 1;
                }
            }
            (hits, hits)
        }
        Protocol::Lenient => {
            let near_any = |x: f64, set: &[f64]| {
                let idx = set.partition_point(|&s| s < x);
                [idx.checked_sub(1), Some(idx)]
                    .into_iter()
                    .flatten()
                    .filter_map(|i| set.get(i))
                    .any(|&s| within(s, x))
            };
            let hits = hypothesis.iter().filter(|&&h| near_any(h, reference)).count();
            let ref_hits = reference.iter().filter(|&&r| near_any(r, hypothesis)).count();
            (hits, ref_hits)
        }
    };
    Ok(BoundaryMatch {
        hits,
        ref_hits,
        num_ref: reference.len(),
        num_hyp: hypothesis.len(),
        tolerance_sec: tol,
    })
}

/// R-value from precision and recall, with over-segmentation
/// `OS = recall / precision - 1`.
///
/// Zero precision leaves OS undefined; the result is then 0 by convention
/// (with a warning if recall is positive).
pub fn r_value(precision: f64, recall: f64) -> f64 {
    if precision <= 0.0 {
        if recall > 0.0 {
            log::warn!("R-value undefined for precision 0 and recall {recall}; reporting 0");
        }
        return 0.0;
    }
    let os = recall / precision - 1.0;
    let r1 = ((1.0 - recall).powi(2) + os * os).sqrt();
    let r2 = (-os + recall - 1.0) / 2f64.sqrt();
    1.0 - (r1.abs() + r2.abs()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub r_value: f64,
}

impl Metrics {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            r_value: r_value(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRow {
    pub id: String,
    pub counts: BoundaryMatch,
    pub metrics: Metrics,
}

/// Pooled corpus metrics plus per-utterance rows (ordered by id).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub tolerance_sec: f64,
    pub counts: BoundaryMatch,
    pub pooled: Metrics,
    pub per_utterance: Vec<UtteranceRow>,
}

impl EvalReport {
    /// `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let m = &self.pooled;
        let c = &self.counts;
        let mut s = String::from("metric,value\n");
        for (k, v) in [
            ("precision", m.precision),
            ("recall", m.recall),
            ("f1", m.f1),
            ("r_value", m.r_value),
            ("tolerance_sec", self.tolerance_sec),
        ] {
            let _ = writeln!(s, "{k},{v}");
        }
        for (k, v) in [
            ("hits", c.hits),
            ("ref_hits", c.ref_hits),
            ("num_ref", c.num_ref),
            ("num_hyp", c.num_hyp),
            ("num_utterances", self.per_utterance.len()),
        ] {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn per_utterance_csv(&self) -> String {
        let mut s = String::from("utt_id,hits,ref_hits,num_ref,num_hyp,precision,recall,f1,r_value\n");
        for r in &self.per_utterance {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.id,
                r.counts.hits,
                r.counts.ref_hits,
                r.counts.num_ref,
                r.counts.num_hyp,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                r.metrics.r_value
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let m = &self.pooled;
        format!(
            "{:?} protocol, tolerance {:.0} ms, {} utterances\n  P  {:5.1}  R  {:5.1}  F1 {:5.1}  RV {:5.1}\n",
            self.protocol,
            self.tolerance_sec * 1000.0,
            self.per_utterance.len(),
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1,
            100.0 * m.r_value
        )
    }
}

/// Matches every utterance and pools the counts before computing metrics.
pub fn evaluate_corpus(
    refs: &BTreeMap<String, Vec<f64>>,
    hyps: &BTreeMap<String, Vec<f64>>,
    tol: f64,
    protocol: Protocol,
) -> Result<EvalReport> {
    let ref_ids: BTreeSet<&String> = refs.keys().collect();
    let hyp_ids: BTreeSet<&String> = hyps.keys().collect();
    if ref_ids != hyp_ids {
        let missing: Vec<_> = ref_ids.symmetric_difference(&hyp_ids).take(5).collect();
        return Err(Error::data(format!("reference and hypothesis utterance ids differ, e.g. {missing:?}")));
    }
    let mut counts = BoundaryMatch {
        tolerance_sec: tol,
        ..Default::default()
    };
    let mut per_utterance = Vec::with_capacity(refs.len());
    for (id, r) in refs {
        let m = match_boundaries(r, &hyps[id], tol, protocol)?;
        counts.add(&m);
        per_utterance.push(UtteranceRow {
            id: id.clone(),
            counts: m,
            metrics: m.metrics(),
        });
    }
    Ok(EvalReport {
        protocol,
        tolerance_sec: tol,
        counts,
        pooled: counts.metrics(),
        per_utterance,
    })
}

/// Internal reference boundaries: every segment start except the first.
pub fn reference_boundaries(segments: &[Segment]) -> Vec<f64> {
    segments.iter().skip(1).map(|s| s.start).collect()
}

/// Drops boundaries at the utterance start (and at or past `end`, if known).
pub fn strip_edge_boundaries(times: &[f64], end: Option<f64>) -> Vec<f64> {
    times
        .iter()
        .copied()
        .filter(|&t| t > TIME_EPSILON)
        .filter(|&t| end.is_none_or(|e| t < e - TIME_EPSILON))
        .collect()
}

/// Cluster-by-phone frame counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointCounts {
    counts: BTreeMap<usize, BTreeMap<String, usize>>,
}

impl JointCounts {
    /// Adds one utterance; a frame's phone is the label at its center time.
    /// Frames whose center falls outside every reference segment are skipped.
    pub fn add_utterance(&mut self, assignments: &[usize], alignment: &Alignment, frame_period: f64) -> usize {
        let mut added = 0;
        for (t, &k) in assignments.iter().enumerate() {
            let center = t as f64 * frame_period + frame_period / 2.0;
            if let Some(label) = alignment.label_at(center) {
                *self.counts.entry(k).or_default().entry(label.to_string()).or_default() += 1;
                added += 1;
            }
        }
        added
    }

    pub fn total(&self) -> usize {
        self.counts.values().flat_map(|m| m.values()).sum()
    }

    pub fn get(&self, cluster: usize, phone: &str) -> usize {
        self.counts.get(&cluster).and_then(|m| m.get(phone)).copied().unwrap_or(0)
    }

    pub fn report(&self) -> Result<PurityReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::data("no frames overlap the reference alignment"));
        }
        let phone_hits: usize = self.counts.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
        let mut by_phone: BTreeMap<&str, usize> = BTreeMap::new();
        for m in self.counts.values() {
            for (p, &c) in m {
                let e = by_phone.entry(p.as_str()).or_default();
                *e = (*e).max(c);
            }
        }
        let cluster_hits: usize = by_phone.values().sum();
        Ok(PurityReport {
            phone_purity: phone_hits as f64 / total as f64,
            cluster_purity: cluster_hits as f64 / total as f64,
            joint_counts: self.clone(),
        })
    }

    /// Contingency table as CSV: one row per cluster, one column per phone.
    pub fn to_csv(&self) -> String {
        let phones: BTreeSet<&str> = self.counts.values().flat_map(|m| m.keys().map(String::as_str)).collect();
        let mut s = String::from("cluster");
        for p in &phones {
            s.push(',');
            s.push_str(&csv_field(p));
        }
        s.push('\n');
        for (k, row) in &self.counts {
            s.push_str(&k.to_string());
            for p in &phones {
                let _ = write!(s, ",{}", row.get(*p).copied().unwrap_or(0));
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    /// Accuracy when every cluster is labeled with its majority phone.
    pub phone_purity: f64,
    /// Share of frames falling in their phone's majority cluster.
    pub cluster_purity: f64,
    pub joint_counts: JointCounts,
}

impl PurityReport {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nphone_purity,{}\ncluster_purity,{}\nframes,{}\n",
            self.phone_purity,
            self.cluster_purity,
            self.joint_counts.total()
        )
    }
}

/// Purity of one utterance's frame assignments.
pub fn purity(assignments: &[usize], alignment: &Alignment, frame_period: f64) -> Result<PurityReport> {
    let mut j = JointCounts::default();
    j.add_utterance(assignments, alignment, frame_period);
    j.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: f64, end: f64, label: &str) -> Segment {
        Segment {
            start,
            end,
            label: label.into(),
        }
    }

    #[test]
    fn strict_forbids_double_credit() {
        let m = match_boundaries(&[0.10], &[0.10, 0.11], 0.02, Protocol::Strict).unwrap();
        assert_eq!((m.hits, m.precision(), m.recall()), (1, 0.5, 1.0));
        let m = match_boundaries(&[0.10], &[0.10, 0.11], 0.02, Protocol::Lenient).unwrap();
        assert_eq!((m.hits, m.precision(), m.recall()), (2, 1.0, 1.0));
    }

    #[test]
    fn identity_is_perfect() {
        let b = [0.05, 0.13, 0.2, 0.31];
        for p in [Protocol::Strict, Protocol::Lenient] {
            for tol in [0.0, 0.02] {
                let m = match_boundaries(&b, &b, tol, p).unwrap().metrics();
                assert_eq!((m.precision, m.recall, m.f1, m.r_value), (1.0, 1.0, 1.0, 1.0));
            }
        }
    }

    #[test]
    fn tolerance_edge_survives_rounding() {
        // 12 * 0.01 - 0.1 is not exactly 0.02 in binary
        let m = match_boundaries(&[0.1], &[12.0 * 0.01], 0.02, Protocol::Strict).unwrap();
        assert_eq!(m.hits, 1);
        let m = match_boundaries(&[0.1], &[0.13], 0.02, Protocol::Strict).unwrap();
        assert_eq!(m.hits, 0);
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(match_boundaries(&[0.2, 0.1], &[], 0.02, Protocol::Strict).is_err());
        assert!(match_boundaries(&[], &[0.2, 0.1], 0.02, Protocol::Lenient).is_err());
    }

    #[test]
    fn r_value_examples() {
        assert_eq!(r_value(1.0, 1.0), 1.0);
        let expected = 1.0 - (0.5 + 0.5 / 2f64.sqrt()) / 2.0;
        assert!((r_value(0.5, 0.5) - expected).abs() < 1e-12);
        assert!((r_value(0.5, 0.5) - 0.5732).abs() < 1e-4);
        assert_eq!(r_value(0.0, 0.4), 0.0);
        // holding recall, lower precision is penalized
        assert!(r_value(0.6, 0.8) < r_value(0.8, 0.8));
    }

    #[test]
    fn f1_definition() {
        let m = Metrics::new(0.6, 0.9);
        assert!((m.f1 - 0.72).abs() < 1e-12);
        assert_eq!(Metrics::new(0.0, 0.0).f1, 0.0);
    }

    #[test]
    fn pooled_aggregation() {
        let mut refs = BTreeMap::new();
        let mut hyps = BTreeMap::new();
        refs.insert("a".to_string(), vec![0.1, 0.2]);
        hyps.insert("a".to_string(), vec![0.1, 0.2]);
        let single = evaluate_corpus(&refs, &hyps, 0.02, Protocol::Strict).unwrap();
        assert_eq!(single.pooled, match_boundaries(&[0.1, 0.2], &[0.1, 0.2], 0.02, Protocol::Strict).unwrap().metrics());
        refs.insert("b".to_string(), vec![0.1, 0.2]);
        hyps.insert("b".to_string(), vec![0.5, 0.6]);
        let r = evaluate_corpus(&refs, &hyps, 0.02, Protocol::Strict).unwrap();
        assert_eq!((r.pooled.precision, r.pooled.recall), (0.5, 0.5));
        assert_eq!(r.per_utterance.len(), 2);
        assert!(r.to_csv().starts_with("metric,value\nprecision,0.5\n"));
        hyps.remove("b");
        assert!(evaluate_corpus(&refs, &hyps, 0.02, Protocol::Strict).is_err());
    }

    #[test]
    fn edge_stripping() {
        let segs = [seg(0.0, 1.0, "a"), seg(1.0, 2.0, "b"), seg(2.0, 3.0, "c")];
        assert_eq!(reference_boundaries(&segs), vec![1.0, 2.0]);
        assert!(reference_boundaries(&segs[..1]).is_empty());
        assert_eq!(strip_edge_boundaries(&[0.0, 0.5, 3.0], Some(3.0)), vec![0.5]);
        assert_eq!(strip_edge_boundaries(&[0.0, 0.5, 3.0], None), vec![0.5, 3.0]);
    }

    fn alignment(labels: &[(&str, usize)], period: f64) -> Alignment {
        let mut t = 0.0;
        let mut segs = Vec::new();
        for &(l, n) in labels {
            let end = t + n as f64 * period;
            segs.push(seg(t, end, l));
            t = end;
        }
        Alignment::new(segs).unwrap()
    }

    #[test]
    fn purity_examples() {
        let p = 0.01;
        let a = alignment(&[("aa", 5), ("b", 5)], p);
        let r = purity(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], &a, p).unwrap();
        assert_eq!((r.phone_purity, r.cluster_purity), (1.0, 1.0));

        let a = alignment(&[("aa", 60), ("b", 40)], p);
        let r = purity(&[0; 100], &a, p).unwrap();
        assert_eq!((r.phone_purity, r.cluster_purity), (0.6, 1.0));
        assert_eq!(r.joint_counts.total(), 100);

        let a = alignment(&[("aa", 2), ("b", 2)], p);
        let r = purity(&[0, 1, 0, 1], &a, p).unwrap();
        assert_eq!(r.phone_purity, 0.5);
    }

    #[test]
    fn purity_trims_and_rejects_empty() {
        let a = alignment(&[("aa", 2)], 0.01);
        let r = purity(&[3, 3, 4, 4, 4], &a, 0.01).unwrap();
        assert_eq!(r.joint_counts.total(), 2);
        assert_eq!(r.joint_counts.get(3, "aa"), 2);
        assert!(purity(&[], &a, 0.01).is_err());
        assert_eq!(r.joint_counts.to_csv(), "cluster,aa\n3,2\n");
    }
}
