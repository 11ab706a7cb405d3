//! JSON experiment configuration.

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use std::fmt;
use std::path::PathBuf;

use crate::engines::CeConfig;
use crate::error::{MfceError, Result};
use crate::families::GaussianParams;
use crate::models::pde::{AdrProblem, BoundProvider};
use crate::models::LinearGaussianProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Standard,
    Preconditioned,
    Multifidelity,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::Preconditioned => "preconditioned",
            Algorithm::Multifidelity => "multifidelity",
        }
    }
}

/// One entry of the level set: a surrogate rank `d_k` or the high-fidelity
/// marker `"hifi"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelSpec {
    Reduced(usize),
    HighFidelity,
}

impl LevelSpec {
    pub fn label(self) -> String {
        match self {
            LevelSpec::Reduced(d) => format!("d{d}"),
            LevelSpec::HighFidelity => "hifi".into(),
        }
    }
}

impl Serialize for LevelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LevelSpec::Reduced(d) => s.serialize_u64(*d as u64),
            LevelSpec::HighFidelity => s.serialize_str("hifi"),
        }
    }
}

impl<'de> Deserialize<'de> for LevelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = LevelSpec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"hifi\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<LevelSpec, E> {
                usize::try_from(v)
                    .ok()
                    .filter(|&v| v > 0)
                    .map(LevelSpec::Reduced)
                    .ok_or_else(|| E::custom("level must be a positive integer"))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<LevelSpec, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom("level must be a positive integer"))
                    .and_then(|v| self.visit_u64(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<LevelSpec, E> {
                match v {
                    "hifi" => Ok(LevelSpec::HighFidelity),
                    _ => Err(E::custom(format!("unknown level marker {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    pub w: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: f64,
    pub alphas: Vec<f64>,
    pub u: Vec<f64>,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            w: vec![1.0, 0.0, 0.0],
            mean: vec![0.0; 3],
            variance: 1.0,
            alphas: vec![0.4, 0.2, 0.1, 0.05],
            u: vec![0.9, -1.3, 0.7],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub count: usize,
    /// Standard deviation of the snapshot parameters around `mean`.
    pub spread: f64,
    pub seed: u64,
}

impl AnalyticConfig {
    pub fn problem(&self, gamma_star: f64) -> Result<LinearGaussianProblem> {
        let mu = GaussianParams::isotropic(self.mean.clone(), self.variance);
        LinearGaussianProblem::new(
            self.w.clone(),
            mu,
            gamma_star,
            self.alphas.clone(),
            self.u.clone(),
        )
        .map_err(|e| MfceError::config("problem", e.to_string()))
    }
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            count: 2000,
            spread: 1.3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub nx: usize,
    pub kappa1: f64,
    pub a0: f64,
    pub kappa2: f64,
    pub field_modes: usize,
    pub field_amplitude: f64,
    /// Mean of the isotropic Gaussian input law; defaults to a source at
    /// `(0.8, 0.15)`, wind angle `17π/18` and zero mode coefficients.
    pub mean: Option<Vec<f64>>,
    pub variance: f64,
    pub bound: BoundProvider,
    pub snapshots: SnapshotConfig,
    /// Precomputed basis from `mfce pod build`; replaces the snapshot build.
    pub podfile: Option<PathBuf>,
    /// Reference probability for SCV columns.
    pub p_ref: Option<f64>,
}

impl Default for PdeConfig {
    fn default() -> Self {
        let p = AdrProblem::default();
        PdeConfig {
            nx: p.nx,
            kappa1: p.kappa1,
            a0: p.a0,
            kappa2: p.kappa2,
            field_modes: p.field_modes,
            field_amplitude: p.field_amplitude,
            mean: None,
            variance: 1.0,
            bound: BoundProvider::Residual,
            snapshots: SnapshotConfig::default(),
            podfile: None,
            p_ref: None,
        }
    }
}

impl PdeConfig {
    pub fn problem(&self) -> AdrProblem {
        AdrProblem {
            nx: self.nx,
            kappa1: self.kappa1,
            a0: self.a0,
            kappa2: self.kappa2,
            field_modes: self.field_modes,
            field_amplitude: self.field_amplitude,
            ..AdrProblem::default()
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone().unwrap_or_else(|| {
            let mut m = vec![0.8, 0.15, 17.0 * std::f64::consts::PI / 18.0];
            m.resize(3 + self.field_modes, 0.0);
            m
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    Analytic(AnalyticConfig),
    Pde(PdeConfig),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Analytic(_) => "analytic",
            ProblemConfig::Pde(_) => "pde",
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub engine: CeConfig,
    pub levels: Vec<LevelSpec>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Repetition `r` runs with seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            MfceError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The surrogate ranks `d_k`, in order.
    pub fn reduced_levels(&self) -> Vec<usize> {
        self.levels
            .iter()
            .filter_map(|l| match l {
                LevelSpec::Reduced(d) => Some(*d),
                LevelSpec::HighFidelity => None,
            })
            .collect()
    }

    pub fn level_labels(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.label()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if self.engine.seed != 0 {
            return Err(MfceError::config(
                "engine.seed",
                "set the top-level `seed` instead",
            ));
        }
        if self.repetitions == 0 {
            return Err(MfceError::config("repetitions", "must be at least 1"));
        }
        if self.levels.last() != Some(&LevelSpec::HighFidelity) {
            return Err(MfceError::config("levels", "must end with \"hifi\""));
        }
        let dims = self.reduced_levels();
        if dims.len() + 1 != self.levels.len() {
            return Err(MfceError::config("levels", "\"hifi\" may only appear last"));
        }
        if dims.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MfceError::config("levels", "must be strictly increasing"));
        }
        match &self.problem {
            ProblemConfig::Analytic(a) => {
                let p = a.mean.len();
                if a.w.len() != p || a.u.len() != p {
                    return Err(MfceError::config(
                        "problem.w",
                        "w, u and mean must have the same length",
                    ));
                }
                if !(a.variance > 0.0) {
                    return Err(MfceError::config("problem.variance", "must be positive"));
                }
                a.problem(self.engine.gamma_star)?;
                if let Some(&d) = dims.iter().find(|&&d| d > a.alphas.len()) {
                    return Err(MfceError::config(
                        "levels",
                        format!(
                            "surrogate {d} does not exist; the problem has {}",
                            a.alphas.len()
                        ),
                    ));
                }
            }
            ProblemConfig::Pde(c) => {
                c.problem().validate()?;
                if c.mean().len() != 3 + c.field_modes {
                    return Err(MfceError::config(
                        "problem.mean",
                        format!("must have 3 + field_modes = {} entries", 3 + c.field_modes),
                    ));
                }
                if !(c.variance > 0.0) {
                    return Err(MfceError::config("problem.variance", "must be positive"));
                }
                if dims.iter().any(|&d| d >= c.problem().dofs()) {
                    return Err(MfceError::config(
                        "levels",
                        "reduced dimensions must be below the number of unknowns",
                    ));
                }
                if c.podfile.is_none() && c.snapshots.count < dims.last().copied().unwrap_or(0) {
                    return Err(MfceError::config(
                        "problem.snapshots.count",
                        "must be at least the largest reduced dimension",
                    ));
                }
                if let Some(p) = c.p_ref {
                    if !(p > 0.0) {
                        return Err(MfceError::config("problem.p_ref", "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ANALYTIC: &str = r#"{
        "problem": {"kind": "analytic"},
        "algorithm": "multifidelity",
        "engine": {"m": 500, "gamma_star": 4.0},
        "levels": [1, 3, "hifi"],
        "repetitions": 3
    }"#;

    #[test]
    fn parses_defaults_and_labels() {
        let cfg = ExperimentConfig::from_json(ANALYTIC).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Multifidelity);
        assert_eq!(cfg.engine.rho, 0.2);
        assert_eq!(cfg.reduced_levels(), vec![1, 3]);
        assert_eq!(cfg.level_labels(), vec!["d1", "d3", "hifi"]);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    fn config_error(text: &str) -> String {
        match ExperimentConfig::from_json(text) {
            Err(MfceError::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            config_error(&ANALYTIC.replace("\"m\": 500", "\"rho\": 1.5")),
            "engine.rho"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("\"m\": 500", "\"mm\": 500")),
            "engine.mm"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("\"m\": 500", "\"m\": \"x\"")),
            "engine.m"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("[1, 3, \"hifi\"]", "[3, 1, \"hifi\"]")),
            "levels"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("[1, 3, \"hifi\"]", "[1, 3]")),
            "levels"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("[1, 3, \"hifi\"]", "[1, \"top\"]")),
            "levels[1]"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("[1, 3, \"hifi\"]", "[1, 9, \"hifi\"]")),
            "levels"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("\"repetitions\": 3", "\"repetitions\": 0")),
            "repetitions"
        );
        assert_eq!(
            config_error(&ANALYTIC.replace("multifidelity", "fast")),
            "algorithm"
        );
    }

    #[test]
    fn pde_keys_are_validated() {
        let pde = r#"{
            "problem": {"kind": "pde", "nx": 7},
            "algorithm": "standard",
            "levels": ["hifi"]
        }"#;
        assert_eq!(config_error(pde), "problem.nx");
        let cfg = ExperimentConfig::from_json(&pde.replace("\"nx\": 7", "\"bound\": \"coercive\""))
            .unwrap();
        match cfg.problem {
            ProblemConfig::Pde(c) => {
                assert_eq!(c.bound, BoundProvider::Coercive);
                assert_eq!(c.mean().len(), 5);
            }
            _ => unreachable!(),
        }
        assert_eq!(
            config_error(&pde.replace("\"nx\": 7", "\"mean\": [0.0]")),
            "problem.mean"
        );
    }
}
