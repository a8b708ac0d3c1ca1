use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{Protocol, DEFAULT_TOLERANCE};
use crate::hmm::{HmmConfig, Variant};
use crate::kmeans::KmeansParams;
use crate::svf::SvfSpan;

/// How `decode`, `sweep` and friends turn features into boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// SVF peak picking.
    Peak,
    /// HMM trained by segmental k-means.
    #[default]
    Hmm,
    /// HMM inference with offline k-means centroids.
    Vq,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak" => Ok(DecodeMode::Peak),
            "hmm" => Ok(DecodeMode::Hmm),
            "vq" => Ok(DecodeMode::Vq),
            other => Err(Error::config(format!("unknown mode `{other}` (peak|hmm|vq)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakSource {
    #[default]
    Mel,
    Ssl,
}

impl std::str::FromStr for PeakSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(PeakSource::Mel),
            "ssl" => Ok(PeakSource::Ssl),
            other => Err(Error::config(format!("unknown peak source `{other}` (mel|ssl)"))),
        }
    }
}

/// Which manifest split a command evaluates or decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitSelector {
    Train,
    Valid,
    Test,
    #[default]
    All,
}

impl std::str::FromStr for SplitSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSelector::Train),
            "valid" => Ok(SplitSelector::Valid),
            "test" => Ok(SplitSelector::Test),
            "all" => Ok(SplitSelector::All),
            other => Err(Error::config(format!("unknown split `{other}` (train|valid|test|all)"))),
        }
    }
}

/// Hyperparameter presets for the two reference corpora with HuBERT
/// layer-9 features, keyed by topology and whether boundary features are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Timit,
    TimitBf,
    Buckeye,
    BuckeyeBf,
}

impl Profile {
    /// `(lambda, gamma, avg_duration, epochs)` for the given topology.
    pub fn hyperparameters(self, variant: Variant) -> (f64, f64, f64, usize) {
        match (self, variant) {
            (Profile::Timit, Variant::Dp) => (1.9, 0.0, 8.1, 10),
            (Profile::Timit, Variant::Nseg) => (0.0, 0.0, 8.1, 10),
            (Profile::TimitBf, Variant::Dp) => (0.4, 0.9, 8.1, 10),
            (Profile::TimitBf, Variant::Nseg) => (0.0, 1.2, 8.1, 10),
            (Profile::Buckeye, Variant::Dp) => (2.2, 0.0, 8.5, 20),
            (Profile::Buckeye, Variant::Nseg) => (0.0, 0.0, 8.5, 20),
            (Profile::BuckeyeBf, Variant::Dp) => (0.5, 1.0, 8.1, 20),
            (Profile::BuckeyeBf, Variant::Nseg) => (0.0, 1.0, 8.1, 20),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timit" => Ok(Profile::Timit),
            "timit-bf" => Ok(Profile::TimitBf),
            "buckeye" => Ok(Profile::Buckeye),
            "buckeye-bf" => Ok(Profile::BuckeyeBf),
            other => Err(Error::config(format!(
                "unknown profile `{other}` (timit|timit-bf|buckeye|buckeye-bf)"
            ))),
        }
    }
}

/// Everything a pipeline command needs besides the manifest.
///
/// Values come from defaults, then an optional `key = value` file, then
/// command-line overrides. `variant` is applied first and `profile` second,
/// so that explicit keys always win over profile presets.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Option<Profile>,
    pub mel_dir: Option<PathBuf>,
    pub ssl_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub svf_span: SvfSpan,
    pub threshold: f64,
    /// Prominence threshold for the Mel peaks behind boundary features.
    pub bf_threshold: f64,
    pub mode: DecodeMode,
    pub peak_source: PeakSource,
    pub hmm: HmmConfig,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub kmeans_max_frames: usize,
    pub protocol: Protocol,
    pub tolerance: f64,
    pub eval_split: SplitSelector,
    /// Frame period assumed for text feature files on import.
    pub ssl_period: f64,
    pub valid_fraction: f64,
    pub write_curves: bool,
    /// 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: None,
            mel_dir: None,
            ssl_dir: None,
            output_dir: PathBuf::from("out"),
            svf_span: SvfSpan::Wide,
            threshold: 0.1,
            bf_threshold: 0.1,
            mode: DecodeMode::Hmm,
            peak_source: PeakSource::Mel,
            hmm: HmmConfig::default(),
            kmeans_max_iters: 100,
            kmeans_tol: 1e-4,
            kmeans_max_frames: 2_000_000,
            protocol: Protocol::Strict,
            tolerance: DEFAULT_TOLERANCE,
            eval_split: SplitSelector::All,
            ssl_period: crate::features::SSL_FRAME_PERIOD,
            valid_fraction: 0.1,
            write_curves: true,
            workers: 0,
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "profile",
    "mel_dir",
    "ssl_dir",
    "output_dir",
    "svf_span",
    "threshold",
    "bf_threshold",
    "mode",
    "peak_source",
    "variant",
    "num_clusters",
    "lambda",
    "gamma",
    "avg_duration",
    "epochs",
    "seed",
    "bf_in_training",
    "kmeans_max_iters",
    "kmeans_tol",
    "kmeans_max_frames",
    "protocol",
    "tolerance",
    "eval_split",
    "ssl_period",
    "valid_fraction",
    "write_curves",
    "workers",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::config(format!("invalid value `{value}` for `{key}`: {e}")))
}

impl RunConfig {
    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "profile" => {
                let p: Profile = value.parse()?;
                let (lambda, gamma, avg, epochs) = p.hyperparameters(self.hmm.variant);
                self.profile = Some(p);
                self.hmm.lambda = lambda;
                self.hmm.gamma = gamma;
                self.hmm.avg_duration = avg;
                self.hmm.epochs = epochs;
                self.hmm.num_clusters = 50;
            }
            "mel_dir" => self.mel_dir = Some(PathBuf::from(value)),
            "ssl_dir" => self.ssl_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "svf_span" => self.svf_span = value.parse()?,
            "threshold" => self.threshold = parse(key, value)?,
            "bf_threshold" => self.bf_threshold = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "peak_source" => self.peak_source = value.parse()?,
            "variant" => self.hmm.variant = value.parse()?,
            "num_clusters" => self.hmm.num_clusters = parse(key, value)?,
            "lambda" => self.hmm.lambda = parse(key, value)?,
            "gamma" => self.hmm.gamma = parse(key, value)?,
            "avg_duration" => self.hmm.avg_duration = parse(key, value)?,
            "epochs" => self.hmm.epochs = parse(key, value)?,
            "seed" => self.hmm.seed = parse(key, value)?,
            "bf_in_training" => self.hmm.bf_in_training = parse(key, value)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse(key, value)?,
            "kmeans_tol" => self.kmeans_tol = parse(key, value)?,
            "kmeans_max_frames" => self.kmeans_max_frames = parse(key, value)?,
            "protocol" => self.protocol = value.parse()?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "eval_split" => self.eval_split = value.parse()?,
            "ssl_period" => self.ssl_period = parse(key, value)?,
            "valid_fraction" => self.valid_fraction = parse(key, value)?,
            "write_curves" => self.write_curves = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => {
                return Err(Error::config(format!(
                    "unknown parameter `{other}`; valid names: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies pairs in precedence order: `variant`, then `profile`, then the rest.
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for first in ["variant", "profile"] {
            if let Some(v) = pairs.get(first) {
                self.set(first, v)?;
            }
        }
        for (k, v) in pairs {
            if k != "variant" && k != "profile" {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    /// Builds a config from an optional file and `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match file {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            pairs.insert(k.clone(), v.clone());
        }
        let mut cfg = RunConfig::default();
        cfg.apply(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hmm.validate()?;
        if !(0.0..).contains(&self.threshold) || !(0.0..).contains(&self.bf_threshold) {
            return Err(Error::config("prominence thresholds must be >= 0"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::config("valid_fraction must lie in [0, 1)"));
        }
        if !(self.ssl_period > 0.0) {
            return Err(Error::config("ssl_period must be positive"));
        }
        Ok(())
    }

    pub fn uses_boundary_features(&self) -> bool {
        self.hmm.gamma > 0.0
    }

    pub fn kmeans_params(&self) -> KmeansParams {
        KmeansParams {
            k: self.hmm.num_clusters,
            seed: self.hmm.seed,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            max_frames: self.kmeans_max_frames,
        }
    }

    /// Every key with its current value, sorted by key.
    pub fn canonical(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let h = &self.hmm;
        let entries = [
            ("profile", self.profile.map_or("-".to_string(), |p| format!("{p:?}"))),
            ("mel_dir", opt(&self.mel_dir)),
            ("ssl_dir", opt(&self.ssl_dir)),
            ("output_dir", self.output_dir.display().to_string()),
            ("svf_span", format!("{:?}", self.svf_span)),
            ("threshold", self.threshold.to_string()),
            ("bf_threshold", self.bf_threshold.to_string()),
            ("mode", format!("{:?}", self.mode)),
            ("peak_source", format!("{:?}", self.peak_source)),
            ("variant", h.variant.to_string()),
            ("num_clusters", h.num_clusters.to_string()),
            ("lambda", h.lambda.to_string()),
            ("gamma", h.gamma.to_string()),
            ("avg_duration", h.avg_duration.to_string()),
            ("epochs", h.epochs.to_string()),
            ("seed", h.seed.to_string()),
            ("bf_in_training", h.bf_in_training.to_string()),
            ("kmeans_max_iters", self.kmeans_max_iters.to_string()),
            ("kmeans_tol", self.kmeans_tol.to_string()),
            ("kmeans_max_frames", self.kmeans_max_frames.to_string()),
            ("protocol", format!("{:?}", self.protocol)),
            ("tolerance", self.tolerance.to_string()),
            ("eval_split", format!("{:?}", self.eval_split)),
            ("ssl_period", self.ssl_period.to_string()),
            ("valid_fraction", self.valid_fraction.to_string()),
            ("write_curves", self.write_curves.to_string()),
        ];
        let sorted: BTreeMap<_, _> = entries.into_iter().collect();
        let mut s = String::new();
        for (k, v) in sorted {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a flat `key = value` file (TOML syntax, no tables).
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(format!("{}: {e}", path.display())))?;
    let mut pairs = BTreeMap::new();
    for (k, v) in table {
        let v = match v {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(Error::config(format!(
                    "{}: `{k}` must be a scalar, got {}",
                    path.display(),
                    other.type_str()
                )))
            }
        };
        pairs.insert(k, v);
    }
    Ok(pairs)
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "lambda = 3.5\nseed = 4\nmode = \"vq\"\n").unwrap();
        let cfg = RunConfig::load(Some(&p), &[("seed".into(), "9".into())]).unwrap();
        assert_eq!(cfg.hmm.lambda, 3.5);
        assert_eq!(cfg.hmm.seed, 9);
        assert_eq!(cfg.mode, DecodeMode::Vq);
        assert_eq!(cfg.tolerance, DEFAULT_TOLERANCE);
    }

    #[test]
    fn profile_presets_depend_on_variant() {
        let mut pairs = BTreeMap::new();
        pairs.insert("profile".to_string(), "timit-bf".to_string());
        pairs.insert("variant".to_string(), "nseg".to_string());
        let mut cfg = RunConfig::default();
        cfg.apply(&pairs).unwrap();
        assert_eq!((cfg.hmm.avg_duration, cfg.hmm.gamma), (8.1, 1.2));
        pairs.insert("gamma".to_string(), "0.3".to_string());
        let mut cfg = RunConfig::default();
        cfg.apply(&pairs).unwrap();
        assert_eq!(cfg.hmm.gamma, 0.3);
        let mut cfg = RunConfig::default();
        cfg.set("profile", "buckeye").unwrap();
        assert_eq!((cfg.hmm.lambda, cfg.hmm.epochs, cfg.hmm.num_clusters), (2.2, 20, 50));
    }

    #[test]
    fn unknown_key_lists_valid_names() {
        let err = RunConfig::default().set("lamda", "1").unwrap_err().to_string();
        assert!(err.contains("lambda") && err.contains("gamma"), "{err}");
        assert!(RunConfig::default().set("lambda", "abc").is_err());
    }

    #[test]
    fn hash_tracks_values() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.set("lambda", "0.25").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_parse() {
        assert_eq!(parse_override("a = b").unwrap(), ("a".into(), "b".into()));
        assert!(parse_override("ab").is_err());
    }
}
