use std::fs;
use std::path::{Path, PathBuf};

use nasc_core::eval::{DatasetSpec, EvalConfig};
use nasc_core::hardware::{DeviceProfile, MetricKind, MlpTrainConfig};
use nasc_core::search::SearchConfig;
use nasc_core::space::ArchSpace;
use nasc_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUT_DIR_ENV: &str = "NASC_OUT_DIR";

/// Offsets added to the top-level seed, one per pipeline phase.
pub mod phase {
    pub const DEVICE: u64 = 0;
    pub const MEASURE: u64 = 1;
    pub const PREDICTOR: u64 = 2;
    pub const DATA: u64 = 3;
    pub const SEARCH: u64 = 4;
    pub const EVAL: u64 = 5;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacePreset {
    #[default]
    Desk,
    Paper,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceSection {
    pub preset: SpacePreset,
}

impl SpaceSection {
    pub fn build(&self) -> ArchSpace {
        match self.preset {
            SpacePreset::Desk => ArchSpace::desk(),
            SpacePreset::Paper => ArchSpace::paper(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    /// Built-in profile to start from.
    pub preset: MetricKind,
    /// Full profile; replaces the preset when present.
    pub profile: Option<DeviceProfile>,
}

impl DeviceSection {
    pub fn profile(&self) -> DeviceProfile {
        self.profile.clone().unwrap_or_else(|| match self.preset {
            MetricKind::Latency => DeviceProfile::latency(),
            MetricKind::Energy => DeviceProfile::energy(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Mlp,
    Lut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    pub kind: PredictorKind,
    /// Architectures sampled by `measure`.
    pub samples: usize,
    pub mlp: MlpTrainConfig,
    /// Repetitions per operator when benchmarking the LUT in isolation.
    pub bench_reps: usize,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Mlp,
            samples: 10_000,
            mlp: MlpTrainConfig::default(),
            bench_reps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub output: PathBuf,
    /// Write wall-clock times into output files; off keeps reruns
    /// byte-identical.
    pub record_wall_time: bool,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            output: PathBuf::from("out"),
            record_wall_time: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives every phase; section-level seeds are overwritten from it.
    pub seed: u64,
    pub space: SpaceSection,
    pub device: DeviceSection,
    pub dataset: DatasetSpec,
    /// Fraction of the dataset used for training; the rest is held out.
    pub train_fraction: Option<f64>,
    pub predictor: PredictorSection,
    pub search: SearchConfig,
    pub eval: EvalConfig,
    pub paths: PathsSection,
}

impl RunConfig {
    /// Parses a config document. Malformed JSON is a parse error; unknown
    /// keys, wrong types and invalid values are configuration errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            if e.is_syntax() || e.is_eof() {
                Error::Parse {
                    location: format!("line {} column {}", e.line(), e.column()),
                    detail: e.to_string(),
                }
            } else {
                Error::Config(e.to_string())
            }
        })?;
        cfg.search.seed = cfg.seed + phase::SEARCH;
        cfg.eval.seed = cfg.seed + phase::EVAL;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, then applies the output-directory override from the
    /// environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            cfg.paths.output = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.build().validate()?;
        self.device.profile().validate()?;
        self.search.validate()?;
        self.eval.validate()?;
        if self.predictor.samples == 0 || self.predictor.bench_reps == 0 {
            return Err(Error::Config(
                "predictor.samples and predictor.bench_reps must be positive".into(),
            ));
        }
        if let Some(f) = self.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "train_fraction must lie in (0, 1), got {f}"
                )));
            }
        }
        if let DatasetSpec::IdxFiles { images, labels, .. } = &self.dataset {
            for p in [images, labels] {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(0.8)
    }

    pub fn rng(&self, phase: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed + phase)
    }

    /// The config with the output directory blanked, so that what is
    /// written about a run does not depend on where it is written.
    pub fn portable(&self) -> Self {
        let mut c = self.clone();
        c.paths.output = PathBuf::new();
        c
    }

    /// First 16 hex digits of the SHA-256 of the canonical config JSON,
    /// output directory excluded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.portable()).expect("config serializes");
        Sha256::digest(text.as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `# seed=… config_hash=…`, the first line of every CSV output.
    pub fn csv_banner(&self) -> String {
        format!("# seed={} config_hash={}", self.seed, self.hash())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.paths.output.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_desk_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.search.epochs, SearchConfig::desk().epochs);
        assert_eq!(c.search.seed, phase::SEARCH);
        assert_eq!(c.eval.seed, phase::EVAL);
        assert_eq!(c.predictor.samples, 10_000);
        assert_eq!(c.device.profile(), DeviceProfile::latency());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(
            RunConfig::from_json(r#"{"sead": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"search": {"epochz": 3}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let e = RunConfig::from_json("{\n  \"seed\": ").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }), "{e}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"eval": {"dropout": 1.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train_fraction": 1.0}"#).is_err());
        let missing =
            r#"{"dataset": {"kind": "idx_files", "images": "/nope/a", "labels": "/nope/b"}}"#;
        assert!(matches!(
            RunConfig::from_json(missing),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = RunConfig::from_json(r#"{"seed": 1}"#).unwrap();
        let mut b = a.clone();
        b.paths.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let c = RunConfig::from_json(r#"{"seed": 2}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
