use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::envs::{EnvConfig, EnvKind, LanderParams, PendulumParams};
use crate::ppo::{BcConfig, PpoConfig};
use crate::predictor::PredictorTrainConfig;
use crate::twtl::{parse_spec, SpecFile};

/// Training variant of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "shaping")]
    Shaping,
    #[serde(rename = "mixing")]
    Mixing,
    #[serde(rename = "shaping+mixing")]
    ShapingMixing,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vanilla, Variant::Shaping, Variant::Mixing, Variant::ShapingMixing];

    pub fn shaping(self) -> bool {
        matches!(self, Variant::Shaping | Variant::ShapingMixing)
    }

    pub fn mixing(self) -> bool {
        matches!(self, Variant::Mixing | Variant::ShapingMixing)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Shaping => "shaping",
            Variant::Mixing => "mixing",
            Variant::ShapingMixing => "shaping+mixing",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected vanilla, shaping, mixing or shaping+mixing)"))
    }
}

/// `[env]`: `kind` plus optional physics overrides for that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table", into = "toml::Table")]
pub struct EnvSection(pub EnvConfig);

impl TryFrom<toml::Table> for EnvSection {
    type Error = String;
    fn try_from(mut t: toml::Table) -> Result<Self, Self::Error> {
        let kind: EnvKind = match t.remove("kind") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err("env.kind must be a string".into()),
            None => return Err("env.kind is required".into()),
        };
        let rest = toml::Value::Table(t);
        Ok(EnvSection(match kind {
            EnvKind::Pendulum => EnvConfig::Pendulum(rest.try_into::<PendulumParams>().map_err(|e| e.to_string())?),
            EnvKind::Lander => EnvConfig::Lander(rest.try_into::<LanderParams>().map_err(|e| e.to_string())?),
        }))
    }
}

impl From<EnvSection> for toml::Table {
    fn from(s: EnvSection) -> Self {
        let mut t = match &s.0 {
            EnvConfig::Pendulum(p) => toml::Table::try_from(p),
            EnvConfig::Lander(p) => toml::Table::try_from(p),
        }
        .expect("physics parameters serialize to a table");
        t.insert("kind".into(), toml::Value::String(s.0.kind().to_string()));
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Sequence model fitted to the expert demonstrations.
    #[default]
    Learned,
    /// True dynamics rolled forward under the degraded offline policy.
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub kind: PredictorKind,
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub stride: usize,
    pub max_grad_norm: f64,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let t = PredictorTrainConfig::default();
        PredictorSection {
            kind: PredictorKind::Learned,
            window: t.window,
            embed: t.embed,
            hidden: t.hidden,
            epochs: t.epochs,
            lr: t.lr,
            batch: t.batch,
            stride: t.stride,
            max_grad_norm: t.max_grad_norm,
        }
    }
}

impl PredictorSection {
    pub fn train_config(&self) -> PredictorTrainConfig {
        PredictorTrainConfig {
            window: self.window,
            embed: self.embed,
            hidden: self.hidden,
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            stride: self.stride,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

/// `[bc]`: demonstrations, behavior cloning and degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcSection {
    pub demo_episodes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    /// Standard deviation of the parameter noise applied to the cloned policy.
    pub sigma: f64,
}

impl Default for BcSection {
    fn default() -> Self {
        let b = BcConfig::default();
        BcSection {
            demo_episodes: 20,
            epochs: b.epochs,
            lr: b.lr,
            batch: b.batch,
            hidden: b.hidden,
            max_grad_norm: b.max_grad_norm,
            sigma: 0.5,
        }
    }
}

impl BcSection {
    pub fn bc_config(&self) -> BcConfig {
        BcConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            hidden: self.hidden.clone(),
            max_grad_norm: self.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub eval_episodes: usize,
    /// Moving-average return that counts as solved; defaults per environment.
    pub threshold: Option<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            variants: Variant::ALL.to_vec(),
            seeds: vec![0],
            out: PathBuf::from("out"),
            eval_episodes: 20,
            threshold: None,
        }
    }
}

/// Full description of an experiment; serialized verbatim into each run dir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub spec: SpecSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub bc: BcSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// Default steps-to-threshold level per environment.
pub fn default_threshold(kind: EnvKind) -> f64 {
    match kind {
        EnvKind::Pendulum => 150.0,
        EnvKind::Lander => 60.0,
    }
}

impl RunConfig {
    /// Defaults for `kind` with the given spec file.
    pub fn new(kind: EnvKind, spec_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            env: EnvSection(EnvConfig::default_for(kind)),
            spec: SpecSection { path: spec_path.into() },
            predictor: PredictorSection::default(),
            ppo: PpoConfig::default(),
            bc: BcSection::default(),
            experiment: ExperimentSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read a config file; relative spec and output paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            if cfg.spec.path.is_relative() {
                cfg.spec.path = dir.join(&cfg.spec.path);
            }
            if cfg.experiment.out.is_relative() {
                cfg.experiment.out = dir.join(&cfg.experiment.out);
            }
        }
        Ok(cfg)
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env.0
    }

    pub fn threshold(&self) -> f64 {
        self.experiment.threshold.unwrap_or_else(|| default_threshold(self.env.0.kind()))
    }

    /// Parse the spec file named by the config.
    pub fn load_spec(&self) -> Result<SpecFile, HarnessError> {
        let text = std::fs::read_to_string(&self.spec.path)
            .map_err(|e| HarnessError::Config(format!("spec file {}: {e}", self.spec.path.display())))?;
        let spec = parse_spec(&text)?;
        if spec.obs_dim() != self.env.0.state_dim() {
            return Err(HarnessError::Config(format!(
                "spec obs_dim {} does not match the {} observation dimension {}",
                spec.obs_dim(),
                self.env.0.kind(),
                self.env.0.state_dim()
            )));
        }
        Ok(spec)
    }

    /// Check ranges and that the spec file exists and matches the environment.
    pub fn validate(&self) -> Result<SpecFile, HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        self.ppo.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let b = &self.bc;
        if b.demo_episodes == 0 || b.batch == 0 || b.hidden.is_empty() || b.hidden.contains(&0) {
            return err("bc.demo_episodes, bc.batch and bc.hidden must be positive".into());
        }
        if !(b.lr.is_finite() && b.lr >= 0.0) || !(b.sigma.is_finite() && b.sigma >= 0.0) || b.max_grad_norm < 0.0 {
            return err("bc.lr, bc.sigma and bc.max_grad_norm must be finite and non-negative".into());
        }
        let p = &self.predictor;
        if p.window == 0 || p.embed == 0 || p.hidden == 0 || p.batch == 0 || p.stride == 0 {
            return err("predictor sizes must be positive".into());
        }
        if !(p.lr.is_finite() && p.lr >= 0.0) {
            return err("predictor.lr must be finite and non-negative".into());
        }
        let e = &self.experiment;
        if e.variants.is_empty() || e.seeds.is_empty() || e.eval_episodes == 0 {
            return err("experiment needs at least one variant, one seed and one eval episode".into());
        }
        if e.variants.iter().collect::<BTreeSet<_>>().len() != e.variants.len() {
            return err("experiment.variants contains duplicates".into());
        }
        if e.seeds.iter().collect::<BTreeSet<_>>().len() != e.seeds.len() {
            return err("experiment.seeds contains duplicates".into());
        }
        if e.threshold.is_some_and(|t| !t.is_finite()) {
            return err("experiment.threshold must be finite".into());
        }
        self.load_spec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::new(EnvKind::Lander, "specs/lander.twtl");
        let text = cfg.to_toml();
        assert!(text.contains("[env]") && text.contains("kind = \"lander\""));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        // serialization is stable
        assert_eq!(RunConfig::from_toml(&text).unwrap().to_toml(), text);
    }

    #[test]
    fn physics_overrides_and_unknown_keys() {
        let text = "[env]\nkind = \"pendulum\"\nmax_torque = 3.0\n[spec]\npath = \"x.twtl\"\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        match cfg.env_config() {
            EnvConfig::Pendulum(p) => {
                assert_eq!(p.max_torque, 3.0);
                assert_eq!(p.episode_len, 200);
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_toml("[env]\nkind = \"pendulum\"\nthrust = 1.0\n[spec]\npath = \"x\"\n").is_err());
        assert!(RunConfig::from_toml("[env]\nkind = \"cartpole\"\n[spec]\npath = \"x\"\n").is_err());
        let bad = "[env]\nkind = \"pendulum\"\n[spec]\npath = \"x\"\n[ppo]\nclip_range = 0.1\n";
        assert!(RunConfig::from_toml(bad).is_err());
    }

    #[test]
    fn variants_parse_by_label() {
        let text = "[env]\nkind = \"pendulum\"\n[spec]\npath = \"x\"\n[experiment]\nvariants = [\"vanilla\", \"shaping+mixing\"]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment.variants, vec![Variant::Vanilla, Variant::ShapingMixing]);
        assert_eq!("mixing".parse::<Variant>().unwrap(), Variant::Mixing);
        assert!("both".parse::<Variant>().is_err());
    }

    #[test]
    fn missing_spec_fails_validation() {
        let cfg = RunConfig::new(EnvKind::Pendulum, "/nonexistent/spec.twtl");
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn mismatched_spec_dimension_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.twtl");
        std::fs::write(&path, "obs_dim 6\npred a := o[0]\nformula := H^1 a\n").unwrap();
        let cfg = RunConfig::new(EnvKind::Pendulum, &path);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(m)) if m.contains("obs_dim")));
    }
}
