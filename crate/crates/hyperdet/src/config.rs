//! Experiment configuration: one JSON document pinning every input of a run.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, DiffusionModel, PropagationConfig};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::model::ModelWidths;
use crate::sweeps::Variant;
use crate::trainer::TrainConfig;

/// Where the experiment hypergraph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind", deny_unknown_fields)]
pub enum HypergraphSource {
    /// Load from a hypergraph file (text or JSON, sniffed by content).
    File { path: PathBuf },
    /// Generate a random hypergraph from the derived seed.
    #[serde(rename_all = "camelCase")]
    Random { nodes: usize, edges: usize, size_min: usize, size_max: usize },
}

impl HypergraphSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            HypergraphSource::File { path } => {
                if !path.exists() {
                    return Err(Error::InvalidConfig(format!(
                        "hypergraph.path does not exist: {}",
                        path.display()
                    )));
                }
                Ok(())
            }
            HypergraphSource::Random { nodes, edges, size_min, size_max } => {
                if *nodes < 4 {
                    return Err(Error::InvalidConfig(format!(
                        "hypergraph.nodes must be >= 4, got {nodes}"
                    )));
                }
                if *edges == 0 {
                    return Err(Error::InvalidConfig("hypergraph.edges must be >= 1".into()));
                }
                if *size_min < 2 || size_min > size_max || *size_max > *nodes {
                    return Err(Error::InvalidConfig(format!(
                        "hypergraph edge sizes must satisfy 2 <= sizeMin <= sizeMax <= nodes, \
                         got {size_min}..{size_max} on {nodes} nodes"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Resolve to a concrete hypergraph; `seed` only matters for the random
    /// generator.
    pub fn resolve(&self, seed: u64) -> Result<Hypergraph> {
        match self {
            HypergraphSource::File { path } => Hypergraph::load(path),
            HypergraphSource::Random { nodes, edges, size_min, size_max } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                diffusion::random_hypergraph(*nodes, *edges, *size_min, *size_max, &mut rng)
            }
        }
    }
}

/// Model widths in configuration form; the raw feature width is always 2+k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Positional encoding dimension.
    pub k: usize,
    pub hidden_ae: usize,
    pub latent: usize,
    pub hidden: usize,
    /// Attention head count K.
    pub heads: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { k: 8, hidden_ae: 128, latent: 64, hidden: 500, heads: 3 }
    }
}

impl ModelSpec {
    pub fn widths(&self) -> ModelWidths {
        ModelWidths {
            feature_width: 2 + self.k,
            hidden_ae: self.hidden_ae,
            latent: self.latent,
            hidden: self.hidden,
            heads: self.heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("model.k must be >= 1".into()));
        }
        self.widths().validate()
    }
}

/// Sweep grids. Lists may be overridden per run; the defaults match the
/// standard evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SweepSpec {
    pub deltas: Vec<f64>,
    pub incompleteness: Vec<f64>,
    pub variants: Vec<Variant>,
    pub models: Vec<DiffusionModel>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            deltas: vec![0.10, 0.15, 0.20, 0.25, 0.30],
            incompleteness: vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
            variants: vec![
                Variant::Full,
                Variant::WoH,
                Variant::WoD,
                Variant::WoE,
                Variant::WAl,
                Variant::WAs,
            ],
            models: vec![
                DiffusionModel::Ic,
                DiffusionModel::Si,
                DiffusionModel::Sis,
                DiffusionModel::Sir,
            ],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for list in [&self.deltas, &self.incompleteness] {
            if list.is_empty() {
                return Err(Error::InvalidConfig("sweep lists must not be empty".into()));
            }
        }
        if self.variants.is_empty() || self.models.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must not be empty".into()));
        }
        for &d in &self.deltas {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "sweep.deltas entries must lie in (0,1], got {d}"
                )));
            }
        }
        for &r in &self.incompleteness {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "sweep.incompleteness entries must lie in [0,1), got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hypergraph: HypergraphSource,
    pub propagation: PropagationConfig,
    pub train: TrainConfig,
    pub model: ModelSpec,
    /// Cascades generated per run.
    pub cascades: usize,
    /// Train share of the cascade split.
    pub train_ratio: f64,
    /// Tail fraction of the training snapshots held out for early stopping.
    pub val_fraction: f64,
    /// Independent repetitions per experiment arm.
    pub seeds: usize,
    pub master_seed: u64,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hypergraph: HypergraphSource::Random { nodes: 200, edges: 120, size_min: 2, size_max: 5 },
            propagation: PropagationConfig::default(),
            train: TrainConfig::default(),
            model: ModelSpec::default(),
            cascades: 100,
            train_ratio: 0.8,
            val_fraction: 0.2,
            seeds: 1,
            master_seed: 0,
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Field-level validation of everything checkable without resolving the
    /// hypergraph.
    pub fn validate(&self) -> Result<()> {
        self.hypergraph.validate()?;
        self.train.validate()?;
        self.model.validate()?;
        self.sweep.validate()?;
        if self.cascades < 5 {
            return Err(Error::InvalidConfig(format!(
                "cascades must be >= 5, got {}",
                self.cascades
            )));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "trainRatio must lie in (0,1), got {}",
                self.train_ratio
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "valFraction must lie in (0,1), got {}",
                self.val_fraction
            )));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolve the experiment hypergraph. The generator seed is derived from
    /// the master seed at a fixed offset so every arm sees the same graph.
    pub fn resolve_hypergraph(&self) -> Result<Hypergraph> {
        self.hypergraph.resolve(crate::derive_seed(self.master_seed, 500))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sweep.deltas, vec![0.10, 0.15, 0.20, 0.25, 0.30]);
        assert_eq!(cfg.sweep.incompleteness.len(), 6);
        assert_eq!(cfg.sweep.variants.len(), 6);
        assert_eq!(cfg.sweep.models.len(), 4);
    }

    #[test]
    fn model_spec_maps_to_widths() {
        let spec = ModelSpec::default();
        let w = spec.widths();
        assert_eq!(w.feature_width, 10);
        assert_eq!(w.latent, 64);
        assert_eq!(w.hidden, 500);
        assert_eq!(w.heads, 3);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let bad = ExperimentConfig { cascades: 3, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(m)) if m.contains("cascades")));

        let bad = ExperimentConfig { train_ratio: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());

        let bad = ExperimentConfig {
            hypergraph: HypergraphSource::Random { nodes: 10, edges: 5, size_min: 6, size_max: 4 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());

        let bad = ExperimentConfig {
            hypergraph: HypergraphSource::File { path: "/definitely/not/here.hg".into() },
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(m)) if m.contains("not/here")));

        let mut bad = ExperimentConfig::default();
        bad.sweep.deltas = vec![1.5];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let parsed: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str("{\"cascadeCount\": 10}");
        assert!(parsed.is_err());
    }

    #[test]
    fn random_source_resolves_deterministically() {
        let src = HypergraphSource::Random { nodes: 20, edges: 12, size_min: 2, size_max: 4 };
        let a = src.resolve(7).unwrap();
        let b = src.resolve(7).unwrap();
        assert_eq!(a, b);
        let c = src.resolve(8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn file_source_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.hg");
        let g = Hypergraph::new(5, vec![vec![0, 1, 2], vec![2, 3], vec![3, 4]]).unwrap();
        g.save(&path).unwrap();
        let src = HypergraphSource::File { path: path.clone() };
        src.validate().unwrap();
        assert_eq!(src.resolve(0).unwrap(), g);

        let cfg_path = dir.path().join("exp.json");
        let cfg = ExperimentConfig { hypergraph: src, ..Default::default() };
        cfg.save(&cfg_path).unwrap();
        let back = ExperimentConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg, back);
    }
}
