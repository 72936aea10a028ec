//! Experiment configuration: a single TOML document.
//!
//! ```toml
//! [model]
//! p = "exp"            # presets: cos_half[:amp], exp, one_plus_sin_sq, one_minus_x_sq,
//! d = "const:1"        #          const:<v>, quad:<c0>:<c1>:<c2>
//! n0 = "cos_half"
//!
//! [grid]
//! x_min = -1.0
//! x_max = 1.0
//! h = 0.01
//!
//! [time]
//! t_final = 1.0
//! dt = 0.01
//!
//! [solver]             # optional
//! fp_tol = 1e-13
//! max_inner = 200
//! relaxation = 1.0
//!
//! [noise]              # optional
//! delta = 0.012        # single level (make-data, invert)
//! deltas = [0.012, 0.0012]   # sweep levels
//! seed = 1
//! repeats = 1          # seeds seed, seed + 1, ... per sweep level
//! rng = "chacha20"
//!
//! [inversion]          # optional
//! variant = "full"     # or "perturbed"
//! alpha = "delta"      # or a number
//! tau = 1.5
//! max_iter = 50
//! prior = "source"     # or a preset name
//! data = "measurement.csv"   # optional; generated in-pipeline otherwise
//!
//! [critical]           # optional
//! dedupe = "earliest"  # "middle", "keep_all"
//! delta = 0.05         # location noise for the noisy pointwise file
//! deltas = [0.0625, 0.03125]
//! repeats = 5
//!
//! [forward]            # optional
//! snapshots = [2.0, 6.0, 9.0]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::PathBuf;

use popinv::critical::DedupeRule;
use popinv::observations::RNG_ALGORITHM;
use popinv::tikhonov::OperatorVariant;
use popinv::{ForwardSettings, ModelInstance, Profile, SpatialGrid, TimeGrid};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: RawModel,
    pub grid: RawGrid,
    pub time: RawTime,
    #[serde(default)]
    pub solver: RawSolver,
    #[serde(default)]
    pub noise: RawNoise,
    #[serde(default)]
    pub inversion: RawInversion,
    #[serde(default)]
    pub critical: RawCritical,
    #[serde(default)]
    pub forward: RawForward,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub p: String,
    pub d: String,
    pub n0: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    #[serde(default = "minus_one")]
    pub x_min: f64,
    #[serde(default = "one")]
    pub x_max: f64,
    pub h: f64,
}

fn minus_one() -> f64 {
    -1.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTime {
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSolver {
    pub fp_tol: f64,
    pub max_inner: usize,
    pub relaxation: f64,
}

impl Default for RawSolver {
    fn default() -> Self {
        let s = ForwardSettings::default();
        Self {
            fp_tol: s.fp_tol,
            max_inner: s.max_inner,
            relaxation: s.relaxation,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawNoise {
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub repeats: u64,
    pub rng: String,
}

impl Default for RawNoise {
    fn default() -> Self {
        Self {
            delta: 0.0,
            deltas: Vec::new(),
            seed: 0,
            repeats: 1,
            rng: RNG_ALGORITHM.into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RawAlpha {
    Rule(String),
    Value(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawInversion {
    pub variant: String,
    pub alpha: RawAlpha,
    pub tau: f64,
    pub max_iter: usize,
    pub prior: String,
    pub data: Option<PathBuf>,
}

impl Default for RawInversion {
    fn default() -> Self {
        Self {
            variant: "full".into(),
            alpha: RawAlpha::Rule("delta".into()),
            tau: 1.5,
            max_iter: 50,
            prior: "source".into(),
            data: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawCritical {
    pub dedupe: String,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub repeats: u64,
}

impl Default for RawCritical {
    fn default() -> Self {
        Self {
            dedupe: "earliest".into(),
            delta: 0.0,
            deltas: Vec::new(),
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawForward {
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutput {
    pub dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `alpha = delta`.
    Delta,
    Fixed(f64),
}

impl AlphaRule {
    pub fn alpha(&self, delta: f64) -> f64 {
        match self {
            AlphaRule::Delta => delta,
            AlphaRule::Fixed(a) => *a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// `p0 = p_true - F'(p_true)^* e^{-t}`.
    Source,
    Profile(Profile),
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub variant: OperatorVariant,
    pub alpha: AlphaRule,
    pub tau: f64,
    pub max_iter: usize,
    pub prior: Prior,
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Noise {
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub repeats: u64,
}

impl Noise {
    /// Seeds used for every sweep level.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats).map(|r| self.seed.wrapping_add(r)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Critical {
    pub dedupe: DedupeRule,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub repeats: u64,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub p: Profile,
    pub d: Profile,
    pub n0: Profile,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub model: ModelInstance,
    pub settings: ForwardSettings,
    pub noise: Noise,
    pub inversion: Inversion,
    pub critical: Critical,
    /// Time indices of the density snapshots.
    pub snapshots: Vec<usize>,
    pub out_dir: PathBuf,
}

fn bad(key: &str, reason: impl ToString) -> CliError {
    CliError::Config {
        key: key.into(),
        reason: reason.to_string(),
    }
}

fn profile(key: &str, s: &str) -> Result<Profile, CliError> {
    s.parse::<Profile>().map_err(|e| bad(key, e))
}

fn noise_level(key: &str, v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be a finite non-negative number, got {v}")))
    }
}

fn noise_levels(key: &str, vs: &[f64]) -> Result<Vec<f64>, CliError> {
    vs.iter()
        .enumerate()
        .map(|(i, v)| {
            if *v > 0.0 && v.is_finite() {
                Ok(*v)
            } else {
                Err(bad(&format!("{key}[{i}]"), format!("must be positive, got {v}")))
            }
        })
        .collect()
}

fn repeats(key: &str, n: u64) -> Result<u64, CliError> {
    if n == 0 {
        Err(bad(key, "must be at least 1"))
    } else {
        Ok(n)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| bad("", one_line(e.message())))?;
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            bad(if key == "." { "" } else { &key }, one_line(e.inner().message()))
        })?;
        Self::from_raw(raw)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let p = profile("model.p", &raw.model.p)?;
        let d = profile("model.d", &raw.model.d)?;
        let n0 = profile("model.n0", &raw.model.n0)?;

        let g = &raw.grid;
        if !(g.h > 0.0) || !g.h.is_finite() {
            return Err(bad("grid.h", format!("must be positive, got {}", g.h)));
        }
        let grid = SpatialGrid::with_spacing(g.x_min, g.x_max, g.h).map_err(|e| bad("grid", e))?;

        let t = &raw.time;
        if !(t.t_final > 0.0) || !t.t_final.is_finite() {
            return Err(bad("time.t_final", format!("must be positive, got {}", t.t_final)));
        }
        if !(t.dt > 0.0) || !t.dt.is_finite() {
            return Err(bad("time.dt", format!("must be positive, got {}", t.dt)));
        }
        let time = TimeGrid::with_step(t.t_final, t.dt).map_err(|e| bad("time.dt", e))?;

        let model = ModelInstance::from_profiles(&grid, &p, &d, &n0).map_err(|e| {
            let key = match &e {
                popinv::Error::InvalidField { name, .. } => format!("model.{name}"),
                _ => "model".into(),
            };
            bad(&key, e)
        })?;

        let s = &raw.solver;
        let settings = ForwardSettings {
            fp_tol: s.fp_tol,
            max_inner: s.max_inner,
            relaxation: s.relaxation,
        };
        if !(s.fp_tol > 0.0) {
            return Err(bad("solver.fp_tol", format!("must be positive, got {}", s.fp_tol)));
        }
        if s.max_inner == 0 {
            return Err(bad("solver.max_inner", "must be at least 1"));
        }
        if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            return Err(bad(
                "solver.relaxation",
                format!("must lie in (0, 1], got {}", s.relaxation),
            ));
        }

        let nz = &raw.noise;
        if nz.rng != RNG_ALGORITHM {
            return Err(bad(
                "noise.rng",
                format!("unsupported generator {:?}; only {RNG_ALGORITHM:?}", nz.rng),
            ));
        }
        let noise = Noise {
            delta: noise_level("noise.delta", nz.delta)?,
            deltas: noise_levels("noise.deltas", &nz.deltas)?,
            seed: nz.seed,
            repeats: repeats("noise.repeats", nz.repeats)?,
        };

        let inv = &raw.inversion;
        let variant = match inv.variant.as_str() {
            "full" => OperatorVariant::Full,
            "perturbed" => OperatorVariant::Perturbed,
            other => {
                return Err(bad(
                    "inversion.variant",
                    format!("expected \"full\" or \"perturbed\", got {other:?}"),
                ))
            }
        };
        let alpha = match &inv.alpha {
            RawAlpha::Rule(r) if r == "delta" => AlphaRule::Delta,
            RawAlpha::Rule(r) => {
                return Err(bad(
                    "inversion.alpha",
                    format!("expected \"delta\" or a positive number, got {r:?}"),
                ))
            }
            RawAlpha::Value(a) if *a > 0.0 && a.is_finite() => AlphaRule::Fixed(*a),
            RawAlpha::Value(a) => return Err(bad("inversion.alpha", format!("must be positive, got {a}"))),
        };
        if !(inv.tau > 1.0) || !inv.tau.is_finite() {
            return Err(bad("inversion.tau", format!("must exceed 1, got {}", inv.tau)));
        }
        let prior = match inv.prior.as_str() {
            "source" => Prior::Source,
            other => Prior::Profile(profile("inversion.prior", other)?),
        };
        let inversion = Inversion {
            variant,
            alpha,
            tau: inv.tau,
            max_iter: inv.max_iter,
            prior,
            data: inv.data.clone(),
        };

        let c = &raw.critical;
        let dedupe = match c.dedupe.as_str() {
            "earliest" => DedupeRule::Earliest,
            "middle" => DedupeRule::Middle,
            "keep_all" => DedupeRule::KeepAll,
            other => {
                return Err(bad(
                    "critical.dedupe",
                    format!("expected \"earliest\", \"middle\" or \"keep_all\", got {other:?}"),
                ))
            }
        };
        let critical = Critical {
            dedupe,
            delta: noise_level("critical.delta", c.delta)?,
            deltas: noise_levels("critical.deltas", &c.deltas)?,
            repeats: repeats("critical.repeats", c.repeats)?,
        };

        let snapshots = raw
            .forward
            .snapshots
            .iter()
            .enumerate()
            .map(|(i, t)| {
                time.index_of(*t).ok_or_else(|| {
                    bad(
                        &format!("forward.snapshots[{i}]"),
                        format!("{t} is not a node of the time grid"),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Self {
            p,
            d,
            n0,
            grid,
            time,
            model,
            settings,
            noise,
            inversion,
            critical,
            snapshots,
            out_dir: raw.output.dir,
        })
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
p = "exp"
d = "const:1"
n0 = "cos_half"
[grid]
h = 0.1
[time]
t_final = 1.0
dt = 0.1
"#;

    fn key_of(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.grid.len(), 21);
        assert_eq!(c.time.n_steps(), 10);
        assert_eq!(c.inversion.variant, OperatorVariant::Full);
        assert_eq!(c.inversion.alpha, AlphaRule::Delta);
        assert_eq!(c.noise.seeds(), vec![0]);
        assert_eq!(c.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        assert_eq!(key_of(&format!("{BASE}bogus = 1\n")), "time.bogus");
        assert_eq!(key_of(&format!("{BASE}[extra]\nx = 1\n")), "extra");
        let e = ExperimentConfig::parse(&format!("{BASE}[solver]\nfp_tl = 1e-9\n")).unwrap_err();
        assert!(e.to_string().contains("solver.fp_tl"), "{e}");
    }

    #[test]
    fn invalid_values_carry_key_paths() {
        let swap = |from: &str, to: &str| BASE.replace(from, to);
        assert_eq!(key_of(&swap("h = 0.1", "h = -0.1")), "grid.h");
        assert_eq!(key_of(&swap("h = 0.1", "h = 0.3")), "grid");
        assert_eq!(key_of(&swap("dt = 0.1", "dt = 0.0")), "time.dt");
        assert_eq!(key_of(&swap("p = \"exp\"", "p = \"nope\"")), "model.p");
        assert_eq!(key_of(&swap("d = \"const:1\"", "d = \"const:-1\"")), "model.d");
        assert_eq!(key_of(&swap("n0 = \"cos_half\"", "n0 = \"const:1\"")), "model.n0");
        assert_eq!(key_of(&format!("{BASE}[noise]\ndelta = -1.0\n")), "noise.delta");
        assert_eq!(
            key_of(&format!("{BASE}[noise]\ndeltas = [0.1, 0.0]\n")),
            "noise.deltas[1]"
        );
        assert_eq!(key_of(&format!("{BASE}[noise]\nrng = \"pcg\"\n")), "noise.rng");
        assert_eq!(
            key_of(&format!("{BASE}[inversion]\nvariant = \"x\"\n")),
            "inversion.variant"
        );
        assert_eq!(key_of(&format!("{BASE}[inversion]\nalpha = -2.0\n")), "inversion.alpha");
        assert_eq!(key_of(&format!("{BASE}[inversion]\ntau = 1.0\n")), "inversion.tau");
        assert_eq!(
            key_of(&format!("{BASE}[critical]\ndedupe = \"x\"\n")),
            "critical.dedupe"
        );
        assert_eq!(
            key_of(&format!("{BASE}[forward]\nsnapshots = [0.55]\n")),
            "forward.snapshots[0]"
        );
        assert_eq!(
            key_of(&format!("{BASE}[solver]\nrelaxation = 2.0\n")),
            "solver.relaxation"
        );
    }

    #[test]
    fn alpha_forms() {
        let c = ExperimentConfig::parse(&format!("{BASE}[inversion]\nalpha = 0.5\n")).unwrap();
        assert_eq!(c.inversion.alpha, AlphaRule::Fixed(0.5));
        assert_eq!(c.inversion.alpha.alpha(0.1), 0.5);
        assert_eq!(AlphaRule::Delta.alpha(0.1), 0.1);
    }
}
