//! Synthetic data: noisy total-population measurements and critical-point tracks.
//!
//! All random draws come from ChaCha20 seeded with a `u64` (`rand_chacha::ChaCha20Rng`),
//! so every generator here is a pure function of its inputs and seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::forward::ForwardSolution;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::profile::Analytic;

/// Name of the generator recorded in configuration files and reports.
pub const RNG_ALGORITHM: &str = "chacha20";

/// Centered differences below this magnitude count as zero slope.
pub const FLAT_TOLERANCE: f64 = 1e-12;

pub(crate) fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Noisy samples `rho^delta(t_k)` with known noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMeasurement {
    pub time: TimeGrid,
    pub values: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl PopulationMeasurement {
    /// Wraps externally supplied data (e.g. read back from CSV).
    pub fn new(time: TimeGrid, values: Vec<f64>, delta: f64, seed: u64) -> Result<Self> {
        if values.len() != time.len() {
            return Err(Error::LengthMismatch {
                expected: time.len(),
                got: values.len(),
            });
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
        }
        Ok(Self {
            time,
            values,
            delta,
            seed,
        })
    }
}

/// Adds Gaussian noise rescaled so that the discrete `L^2(0,T)` norm of the perturbation
/// equals `delta`.
pub fn add_l2_noise(rho: &[f64], time: &TimeGrid, delta: f64, seed: u64) -> Result<PopulationMeasurement> {
    if rho.len() != time.len() {
        return Err(Error::LengthMismatch {
            expected: time.len(),
            got: rho.len(),
        });
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return PopulationMeasurement::new(*time, rho.to_vec(), 0.0, seed);
    }

    let mut rng = rng(seed);
    let mut draw = || -> Vec<f64> { (0..rho.len()).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut xi = draw();
    let mut norm = time.l2_norm(&xi);
    if norm == 0.0 {
        xi = draw();
        norm = time.l2_norm(&xi);
        if norm == 0.0 {
            return Err(Error::DegenerateNoise);
        }
    }
    let scale = delta / norm;
    let values = rho.iter().zip(&xi).map(|(r, e)| r + scale * e).collect();
    PopulationMeasurement::new(*time, values, delta, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Flat,
}

impl CriticalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalKind::Maximum => "maximum",
            CriticalKind::Minimum => "minimum",
            CriticalKind::Flat => "flat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "maximum" => Ok(CriticalKind::Maximum),
            "minimum" => Ok(CriticalKind::Minimum),
            "flat" => Ok(CriticalKind::Flat),
            other => Err(Error::InvalidArgument(format!("unknown critical kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub t: f64,
    pub x_bar: f64,
    pub kind: CriticalKind,
}

/// Observed extrema of `n(t, .)`, sorted by time and then location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CriticalPointSet {
    pub entries: Vec<CriticalPoint>,
}

impl CriticalPointSet {
    pub fn new(mut entries: Vec<CriticalPoint>) -> Self {
        entries.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.x_bar.total_cmp(&b.x_bar)));
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slope {
    Up,
    Down,
    Zero,
}

/// Scans every time node `t_k > 0` for sign changes of the centered difference of
/// `n(t_k, .)` over interior nodes where the density is positive.
///
/// A strict sign change between neighbours is attributed to the node with the smaller slope
/// magnitude. A run of near-zero slopes is collapsed to its midpoint; it is a maximum or
/// minimum when the flanking slopes have opposite signs and `flat` otherwise. Runs touching
/// the edge of the positive support are ignored.
pub fn extract_critical_points(sol: &ForwardSolution) -> CriticalPointSet {
    let grid = *sol.grid();
    let time = *sol.time_grid();
    let mut entries = Vec::new();
    for k in 1..time.len() {
        let t = time.node(k);
        scan_row(sol.density(k), &grid, |i, kind| {
            entries.push(CriticalPoint {
                t,
                x_bar: grid.node(i),
                kind,
            })
        });
    }
    CriticalPointSet::new(entries)
}

fn scan_row(n: &[f64], grid: &SpatialGrid, mut emit: impl FnMut(usize, CriticalKind)) {
    let nx = n.len();
    let two_h = 2.0 * grid.h();
    let mut i = 1;
    while i + 1 < nx {
        if !(n[i] > 0.0) {
            i += 1;
            continue;
        }
        // maximal run [start, end) of interior nodes with positive density
        let start = i;
        while i + 1 < nx && n[i] > 0.0 {
            i += 1;
        }
        let end = i;
        let slopes: Vec<f64> = (start..end).map(|j| (n[j + 1] - n[j - 1]) / two_h).collect();
        scan_segment(&slopes, |offset, kind| emit(start + offset, kind));
    }
}

fn classify(c: f64) -> Slope {
    if c.abs() < FLAT_TOLERANCE {
        Slope::Zero
    } else if c > 0.0 {
        Slope::Up
    } else {
        Slope::Down
    }
}

fn scan_segment(slopes: &[f64], mut emit: impl FnMut(usize, CriticalKind)) {
    let m = slopes.len();
    let mut j = 0;
    while j < m {
        match classify(slopes[j]) {
            Slope::Zero => {
                let run_start = j;
                while j < m && classify(slopes[j]) == Slope::Zero {
                    j += 1;
                }
                if run_start == 0 || j == m {
                    continue;
                }
                let mid = run_start + (j - 1 - run_start) / 2;
                let kind = match (classify(slopes[run_start - 1]), classify(slopes[j])) {
                    (Slope::Up, Slope::Down) => CriticalKind::Maximum,
                    (Slope::Down, Slope::Up) => CriticalKind::Minimum,
                    _ => CriticalKind::Flat,
                };
                emit(mid, kind);
            }
            here => {
                if j + 1 < m {
                    let next = classify(slopes[j + 1]);
                    let kind = match (here, next) {
                        (Slope::Up, Slope::Down) => Some(CriticalKind::Maximum),
                        (Slope::Down, Slope::Up) => Some(CriticalKind::Minimum),
                        _ => None,
                    };
                    if let Some(kind) = kind {
                        let node = if slopes[j + 1].abs() < slopes[j].abs() {
                            j + 1
                        } else {
                            j
                        };
                        emit(node, kind);
                    }
                }
                j += 1;
            }
        }
    }
}

/// Replaces every location by `x (1 + delta eta)` with `eta ~ U(-1/2, 1/2)`, keeping times and
/// entry order. Perturbed points are clamped to the open interval of `grid`.
pub fn perturb_critical_points(
    cps: &CriticalPointSet,
    delta: f64,
    seed: u64,
    grid: &SpatialGrid,
) -> Result<CriticalPointSet> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
    }
    let mut rng = rng(seed);
    let eta = Uniform::new(-0.5, 0.5).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let margin = 1e-12 * (grid.x_max() - grid.x_min());
    let (lo, hi) = (grid.x_min() + margin, grid.x_max() - margin);
    let entries = cps
        .entries
        .iter()
        .map(|e| {
            let factor = 1.0 + delta * eta.sample(&mut rng);
            CriticalPoint {
                x_bar: (e.x_bar * factor).clamp(lo, hi),
                ..*e
            }
        })
        .collect();
    Ok(CriticalPointSet { entries })
}

/// When a trait value is critical for the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalTime {
    Never,
    At(f64),
    Always,
}

/// Critical time of `x` for constant `d`, from `n0'(x)/n0(x) + t p'(x) = 0`.
pub fn predict_critical_time(x: f64, n0: &dyn Analytic, p: &dyn Analytic) -> Result<CriticalTime> {
    let n0_value = n0.value(x);
    if !(n0_value > 0.0) {
        return Err(Error::NonPositiveDensity { x, value: n0_value });
    }
    Ok(solve_linear_condition(n0.derivative(x), n0_value, p.derivative(x)))
}

/// Critical cumulative mass `R` of `x` for constant `p`, from `n0'(x)/n0(x) - d'(x) R = 0`.
pub fn predict_critical_mass(x: f64, n0: &dyn Analytic, d: &dyn Analytic) -> Result<CriticalTime> {
    let n0_value = n0.value(x);
    if !(n0_value > 0.0) {
        return Err(Error::NonPositiveDensity { x, value: n0_value });
    }
    Ok(solve_linear_condition(n0.derivative(x), n0_value, -d.derivative(x)))
}

/// Nonnegative root `s` of `n0' / n0 + s * slope = 0`.
fn solve_linear_condition(n0_prime: f64, n0_value: f64, slope: f64) -> CriticalTime {
    match (n0_prime == 0.0, slope == 0.0) {
        (true, true) => CriticalTime::Always,
        (false, true) => CriticalTime::Never,
        (true, false) => CriticalTime::At(0.0),
        (false, false) if n0_prime * slope > 0.0 => CriticalTime::Never,
        (false, false) => CriticalTime::At(-n0_prime / (n0_value * slope)),
    }
}
