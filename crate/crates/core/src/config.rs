//! Experiment configuration: a TOML document, or JSON with the same schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::form::{JumpKind, JumpSpec};
use crate::harnack::{PhiMode, DEFAULT_HARNACK_CONSTANTS, FULL_MAX_POINTS};
use crate::scales::{ScaleFunction, ScaleTriple};
use crate::space::{SpaceKind, SpaceParams, DEFAULT_SEED, MAX_GASKET_LEVEL, MAX_LATTICE_SIDE, MAX_POINTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub space: SpaceConfig,
    pub scales: ScalesConfig,
    #[serde(default)]
    pub form: FormConfig,
    #[serde(default)]
    pub jump: JumpSpec,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceKind,
    #[serde(flatten)]
    pub params: SpaceParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesConfig {
    pub phi_c: ScaleFunction,
    pub phi_j: ScaleFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormConfig {
    /// Multiplier of the default nearest-neighbour conductance; 0 removes the local part.
    pub local_scale: f64,
}

impl Default for FormConfig {
    fn default() -> Self {
        FormConfig { local_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Number of log-spaced kernel times over `[φ(h), φ(margin)]`.
    pub times: usize,
    /// Explicit kernel times; overrides `times`.
    pub time_values: Option<Vec<f64>>,
    /// Ball centres per family.
    pub centers: usize,
    /// Explicit radii; defaults to dyadic multiples of the spacing up to the margin.
    pub radii: Option<Vec<f64>>,
    /// Keep every `thin`-th interior point in envelope fits.
    pub thin: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids { times: 24, time_values: None, centers: 4, radii: None, thin: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub kernel: f64,
    pub harmonic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { kernel: 1e-10, harmonic: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Certified,
    Failed,
    Any,
}

/// Check kinds known to the suite.
pub const CHECK_KINDS: &[&str] = &[
    "volume",
    "chain",
    "fk",
    "pi",
    "gcap",
    "cs",
    "exit",
    "exit_probability",
    "jump",
    "jump_tail",
    "ujs",
    "pc_equivalence",
    "hk",
    "hk_minus",
    "uhk",
    "uhk_weak",
    "uhkd",
    "nl",
    "ndl",
    "dominance",
    "tail_probability",
    "chain_lower",
    "phi",
    "phr",
    "ehr",
    "gap",
    "meyer",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub kind: String,
    /// Report key; defaults to the kind. Must be unique.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub expect: Expectation,
    #[serde(default)]
    pub params: CheckParams,
}

impl CheckConfig {
    pub fn key(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.kind)
    }
}

/// Per-check overrides; each check reads the fields it understands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    pub radii: Option<Vec<f64>>,
    pub centers: Option<Vec<usize>>,
    pub mode: Option<PhiMode>,
    pub harnack_constants: Option<[f64; 5]>,
    pub upper_dilation: Option<f64>,
    pub lower_dilation: Option<f64>,
    pub max_speed: Option<f64>,
    pub t: Option<f64>,
    pub dilation: Option<f64>,
    /// Comparison profile for the jump fit; defaults to `φj`.
    pub psi: Option<ScaleFunction>,
    pub reference_range: Option<(f64, f64)>,
    pub violation_threshold: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub decades: Option<f64>,
    pub points_per_axis: Option<usize>,
    pub ratio_range: Option<(f64, f64)>,
    pub a1: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `.json` as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&v).expect("value serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of points the space will have.
    pub fn point_count(&self) -> Result<usize> {
        let p = &self.space.params;
        match self.space.kind {
            SpaceKind::LatticeBox => {
                if p.side > MAX_LATTICE_SIDE || !(1..=3).contains(&p.dim) {
                    return Err(Error::Capacity(format!("lattice needs dim in 1..=3 and side <= {MAX_LATTICE_SIDE}")));
                }
                p.side.checked_pow(p.dim as u32).ok_or_else(|| Error::Capacity("lattice too large".into()))
            }
            SpaceKind::HalfspaceLattice => {
                if p.side > MAX_LATTICE_SIDE {
                    return Err(Error::Capacity(format!("lattice side must be <= {MAX_LATTICE_SIDE}")));
                }
                Ok(p.side * p.side)
            }
            SpaceKind::Gasket => {
                if p.level > MAX_GASKET_LEVEL {
                    return Err(Error::Capacity(format!("gasket level must be <= {MAX_GASKET_LEVEL}")));
                }
                Ok((3usize.pow(p.level as u32 + 1) + 3) / 2)
            }
            SpaceKind::Custom => Err(Error::Config("custom spaces cannot be configured from a file".into())),
        }
    }

    /// Scale triple after normalizing both functions to value 1 at 1; returns warnings.
    pub fn scale_triple(&self) -> Result<(ScaleTriple, Vec<String>)> {
        let mut warnings = Vec::new();
        let (c, rc) = self.scales.phi_c.normalized();
        let (j, rj) = self.scales.phi_j.normalized();
        if rc {
            warnings.push("phi_c rescaled so that phi_c(1) = 1".to_string());
        }
        if rj {
            warnings.push("phi_j rescaled so that phi_j(1) = 1".to_string());
        }
        Ok((ScaleTriple::new(c, j)?, warnings))
    }

    /// Checks every invariant that can be checked without building the space.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.point_count()?;
        if n > MAX_POINTS {
            return Err(Error::Capacity(format!("{n} points exceed the cap of {MAX_POINTS}")));
        }
        let (_, warnings) = self.scale_triple()?;
        if self.jump.kind == JumpKind::Custom || self.jump.kind == JumpKind::Subordinate {
            return Err(Error::Config("jump kind must be none, stable_like or two_regime in a config".into()));
        }
        if self.grids.times == 0 || self.grids.centers == 0 || self.grids.thin == 0 {
            return Err(Error::Config("grid sizes must be positive".into()));
        }
        if let Some(tv) = &self.grids.time_values {
            if tv.is_empty() || tv.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::Config("time_values must be positive and finite".into()));
            }
        }
        let mut keys = std::collections::BTreeSet::new();
        for c in &self.checks {
            if !CHECK_KINDS.contains(&c.kind.as_str()) {
                return Err(Error::Config(format!("unknown check '{}'", c.kind)));
            }
            if !keys.insert(c.key().to_string()) {
                return Err(Error::Config(format!("check '{}' appears twice", c.key())));
            }
            if c.params.mode == Some(PhiMode::Full) && n > FULL_MAX_POINTS {
                return Err(Error::Capacity(format!("FULL mode needs n <= {FULL_MAX_POINTS}")));
            }
            if let Some(h) = c.params.harnack_constants {
                if !(0.0 < h[0] && h[0] < h[1] && h[1] < h[2] && h[2] < h[3] && h[4] > 1.0) {
                    return Err(Error::Config("harnack constants need 0 < C1 < C2 < C3 < C4 and C5 > 1".into()));
                }
            }
        }
        Ok(warnings)
    }

    pub fn harnack_constants(&self, c: &CheckConfig) -> [f64; 5] {
        c.params.harnack_constants.unwrap_or(DEFAULT_HARNACK_CONSTANTS)
    }
}

/// Bundled configurations by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("z1_alpha1", include_str!("../configs/z1_alpha1.toml")),
    ("phi_counterexample", include_str!("../configs/phi_counterexample.toml")),
    ("z1_diffusion", include_str!("../configs/z1_diffusion.toml")),
    ("gasket_walk", include_str!("../configs/gasket_walk.toml")),
    ("dominance_z1", include_str!("../configs/dominance_z1.toml")),
];

pub fn bundled(name: &str) -> Result<ExperimentConfig> {
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("no bundled config '{name}'")))?;
    ExperimentConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_validate() {
        for (name, _) in BUNDLED {
            let c = bundled(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn toml_json_same_schema() {
        let c = bundled("z1_alpha1").unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let toml_back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(toml_back, c);
    }

    #[test]
    fn caps_rejected_at_validation() {
        let mut c = bundled("z1_alpha1").unwrap();
        c.space.params.side = 5000;
        assert!(matches!(c.validate(), Err(Error::Capacity(_))));
        let mut g = bundled("gasket_walk").unwrap();
        g.space.params.level = 9;
        assert!(matches!(g.validate(), Err(Error::Capacity(_))));
    }

    #[test]
    fn unknown_check_rejected() {
        let mut c = bundled("z1_alpha1").unwrap();
        c.checks.push(CheckConfig { kind: "nope".into(), label: None, expect: Expectation::Any, params: CheckParams::default() });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
