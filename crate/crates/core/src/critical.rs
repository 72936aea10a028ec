//! Pointwise reconstruction of `p'`, `d'` and `(ln n0)'` from critical points of the density.
//!
//! At a critical point `x` of `n(t, .)` the explicit solution gives
//! `(ln n0)'(x) = d'(x) R(t) - t p'(x)`. With `d` constant this determines `p'(x)`, with `p`
//! constant it determines `d'(x)`, and two observation times at the same location give a
//! 2x2 linear system for both.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::ModelInstance;
use crate::forward::{solve_forward, ForwardSettings};
use crate::grid::TimeGrid;
use crate::observations::{extract_critical_points, perturb_critical_points, CriticalPoint, CriticalPointSet};
use crate::profile::{Analytic, Profile};
use crate::rate::loglog_slope;

/// Entries with `n0(x) <= MIN_DENSITY` are skipped: the formulas divide by `n0`.
pub const MIN_DENSITY: f64 = 1e-8;

/// Cumulative masses at or below this value are treated as zero population.
pub const MIN_CUMULATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    PPrime,
    DPrime,
    LogN0Prime,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::PPrime => "p_prime",
            Target::DPrime => "d_prime",
            Target::LogN0Prime => "log_n0_prime",
        }
    }
}

/// How repeated observations of the same location are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupeRule {
    /// Keep the earliest positive time (best-conditioned division by `t`).
    #[default]
    Earliest,
    /// Keep the middle observation of the first run of consecutive time nodes.
    Middle,
    /// Keep every observation.
    KeepAll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseEntry {
    pub x_bar: f64,
    pub value: f64,
    pub t_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseReconstruction {
    pub target: Target,
    /// Sorted by `x_bar`.
    pub entries: Vec<PointwiseEntry>,
    /// Observations dropped because `n0(x_bar)` was too small.
    pub skipped: usize,
}

impl PointwiseReconstruction {
    fn new(target: Target, mut entries: Vec<PointwiseEntry>, skipped: usize) -> Self {
        entries.sort_by(|a, b| a.x_bar.total_cmp(&b.x_bar).then(a.t_used.total_cmp(&b.t_used)));
        Self {
            target,
            entries,
            skipped,
        }
    }

    /// Largest deviation from the analytic truth.
    pub fn sup_error(&self, truth: impl Fn(f64) -> f64) -> f64 {
        self.entries
            .iter()
            .map(|e| (e.value - truth(e.x_bar)).abs())
            .fold(0.0, f64::max)
    }
}

/// Groups observations by location; each group is sorted by time.
fn by_location(cps: &CriticalPointSet) -> BTreeMap<u64, Vec<CriticalPoint>> {
    let mut groups: BTreeMap<u64, Vec<CriticalPoint>> = BTreeMap::new();
    for e in cps.iter().filter(|e| e.t > 0.0) {
        groups.entry(order_key(e.x_bar)).or_default().push(*e);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    groups
}

/// Order-preserving integer key for a finite float.
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Splits a time-sorted group into runs of consecutive time nodes.
fn episodes(group: &[CriticalPoint], dt: f64) -> Vec<&[CriticalPoint]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=group.len() {
        if i == group.len() || group[i].t - group[i - 1].t > 1.5 * dt {
            out.push(&group[start..i]);
            start = i;
        }
    }
    out
}

/// Applies `rule` to every location, dropping observations at `t = 0`.
pub fn dedupe(cps: &CriticalPointSet, rule: DedupeRule, dt: f64) -> CriticalPointSet {
    let groups = by_location(cps);
    let entries = match rule {
        DedupeRule::KeepAll => groups.into_values().flatten().collect(),
        DedupeRule::Earliest => groups.into_values().map(|g| g[0]).collect(),
        DedupeRule::Middle => groups
            .into_values()
            .map(|g| {
                let first = episodes(&g, dt)[0];
                first[(first.len() - 1) / 2]
            })
            .collect(),
    };
    CriticalPointSet::new(entries)
}

/// `p'(x) = -n0'(x) / (t n0(x))`, or `None` when `n0(x)` is too small.
pub fn p_prime_formula(t: f64, x: f64, n0: &dyn Analytic) -> Option<f64> {
    let v = n0.value(x);
    (v > MIN_DENSITY).then(|| -n0.derivative(x) / (t * v))
}

/// `d'(x) = n0'(x) / (n0(x) R(t))`, or `None` when `n0(x)` is too small.
pub fn d_prime_formula(cumulative: f64, x: f64, n0: &dyn Analytic) -> Option<f64> {
    let v = n0.value(x);
    (v > MIN_DENSITY).then(|| n0.derivative(x) / (v * cumulative))
}

/// Reconstructs `p'` at observed critical points; valid when `d` is constant.
pub fn reconstruct_p_prime(
    cps: &CriticalPointSet,
    n0: &dyn Analytic,
    rule: DedupeRule,
    dt: f64,
) -> PointwiseReconstruction {
    let mut skipped = 0;
    let mut entries = Vec::new();
    for e in dedupe(cps, rule, dt).iter() {
        match p_prime_formula(e.t, e.x_bar, n0) {
            Some(value) => entries.push(PointwiseEntry {
                x_bar: e.x_bar,
                value,
                t_used: e.t,
            }),
            None => skipped += 1,
        }
    }
    PointwiseReconstruction::new(Target::PPrime, entries, skipped)
}

fn cumulative_at(cumulative: &[f64], time: &TimeGrid, t: f64) -> Result<f64> {
    if cumulative.len() != time.len() {
        return Err(Error::LengthMismatch {
            expected: time.len(),
            got: cumulative.len(),
        });
    }
    let k = time.index_of(t).ok_or(Error::NotATimeNode { t })?;
    let value = cumulative[k];
    if value <= MIN_CUMULATIVE {
        return Err(Error::VanishingMass { t, value });
    }
    Ok(value)
}

/// Reconstructs `d'` at observed critical points; valid when `p` is constant.
pub fn reconstruct_d_prime(
    cps: &CriticalPointSet,
    n0: &dyn Analytic,
    cumulative: &[f64],
    time: &TimeGrid,
    rule: DedupeRule,
) -> Result<PointwiseReconstruction> {
    let mut skipped = 0;
    let mut entries = Vec::new();
    for e in dedupe(cps, rule, time.dt()).iter() {
        let r = cumulative_at(cumulative, time, e.t)?;
        match d_prime_formula(r, e.x_bar, n0) {
            Some(value) => entries.push(PointwiseEntry {
                x_bar: e.x_bar,
                value,
                t_used: e.t,
            }),
            None => skipped += 1,
        }
    }
    Ok(PointwiseReconstruction::new(Target::DPrime, entries, skipped))
}

/// `(ln n0)'(x) = d'(x) R(t) - t p'(x)` at a critical point observed at time `t`.
pub fn reconstruct_log_n0_prime(t: f64, p_prime: f64, d_prime: f64, cumulative: f64) -> f64 {
    d_prime * cumulative - t * p_prime
}

/// Solves `[R(t1), -t1; R(t2), -t2] (d', p')^T = g (1, 1)^T` with `g = (ln n0)'(x)`.
pub fn solve_two_time_system(t1: f64, r1: f64, t2: f64, r2: f64, log_n0_prime: f64) -> Result<(f64, f64)> {
    if t1 == t2 {
        return Err(Error::InvalidArgument("the two times must differ".into()));
    }
    let det = -t2 * r1 + t1 * r2;
    let scale = (t2 * r1).abs().max((t1 * r2).abs()).max(1e-30);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::SingularSystem { det });
    }
    let d_prime = log_n0_prime * (t1 - t2) / det;
    let p_prime = log_n0_prime * (r1 - r2) / det;
    Ok((d_prime, p_prime))
}

/// A location observed during two separate critical episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTimeCandidate {
    pub x_bar: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Locations critical during at least two separate runs of time nodes, paired by their
/// earliest two runs; each run is represented by its middle time node.
pub fn two_time_candidates(cps: &CriticalPointSet, dt: f64) -> Vec<TwoTimeCandidate> {
    by_location(cps)
        .into_values()
        .filter_map(|g| {
            let eps = episodes(&g, dt);
            if eps.len() < 2 {
                return None;
            }
            let mid = |e: &[CriticalPoint]| e[(e.len() - 1) / 2].t;
            Some(TwoTimeCandidate {
                x_bar: g[0].x_bar,
                t1: mid(eps[0]),
                t2: mid(eps[1]),
            })
        })
        .collect()
}

/// Two-time recovery of `(d'(x), p'(x))` using the cumulative mass on `time`.
pub fn solve_two_time_candidate(
    candidate: &TwoTimeCandidate,
    cumulative: &[f64],
    time: &TimeGrid,
    n0: &dyn Analytic,
) -> Result<(f64, f64)> {
    let r1 = cumulative_at(cumulative, time, candidate.t1)?;
    let r2 = cumulative_at(cumulative, time, candidate.t2)?;
    let v = n0.value(candidate.x_bar);
    if !(v > MIN_DENSITY) {
        return Err(Error::NonPositiveDensity {
            x: candidate.x_bar,
            value: v,
        });
    }
    solve_two_time_system(candidate.t1, r1, candidate.t2, r2, n0.log_derivative(candidate.x_bar))
}

/// Setup for a noise-sweep experiment on synthetic critical-point data.
#[derive(Debug, Clone)]
pub struct CriticalExperiment {
    pub p: Profile,
    pub d: Profile,
    pub n0: Profile,
    pub model: ModelInstance,
    pub time: TimeGrid,
    pub settings: ForwardSettings,
    pub dedupe: DedupeRule,
}

impl CriticalExperiment {
    /// `p'` when `d` is constant, `d'` when `p` is constant.
    pub fn target(&self) -> Result<Target> {
        if self.d.is_constant() {
            Ok(Target::PPrime)
        } else if self.p.is_constant() {
            Ok(Target::DPrime)
        } else {
            Err(Error::InvalidArgument(
                "critical-point reconstruction needs either p or d constant".into(),
            ))
        }
    }

    pub fn truth(&self, x: f64) -> Result<f64> {
        Ok(match self.target()? {
            Target::PPrime => self.p.derivative(x),
            _ => self.d.derivative(x),
        })
    }
}

/// Deduplicated clean data of an experiment together with the cumulative mass.
#[derive(Debug, Clone)]
pub struct CriticalData {
    pub points: CriticalPointSet,
    pub cumulative: Vec<f64>,
}

pub fn generate_critical_data(exp: &CriticalExperiment) -> Result<CriticalData> {
    let sol = solve_forward(&exp.model, &exp.time, &exp.settings)?;
    let raw = extract_critical_points(&sol);
    Ok(CriticalData {
        points: dedupe(&raw, exp.dedupe, exp.time.dt()),
        cumulative: sol.cumulative().to_vec(),
    })
}

/// A reconstructed value paired with the truth at the unperturbed location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredEntry {
    pub entry: PointwiseEntry,
    pub truth: f64,
}

impl ScoredEntry {
    pub fn abs_error(&self) -> f64 {
        (self.entry.value - self.truth).abs()
    }
}

/// Reconstruction from locations `x_i (1 + delta eta_i)`, each scored against the truth at
/// the clean `x_i`. Points with too small `n0` are dropped.
pub fn perturbed_reconstruction(
    exp: &CriticalExperiment,
    data: &CriticalData,
    delta: f64,
    seed: u64,
) -> Result<Vec<ScoredEntry>> {
    let target = exp.target()?;
    let noisy = perturb_critical_points(&data.points, delta, seed, exp.model.grid())?;
    let mut out = Vec::with_capacity(noisy.len());
    for (clean, moved) in data.points.iter().zip(noisy.iter()) {
        let value = match target {
            Target::PPrime => p_prime_formula(moved.t, moved.x_bar, &exp.n0),
            _ => {
                let r = cumulative_at(&data.cumulative, &exp.time, moved.t)?;
                d_prime_formula(r, moved.x_bar, &exp.n0)
            }
        };
        if let Some(value) = value {
            out.push(ScoredEntry {
                entry: PointwiseEntry {
                    x_bar: moved.x_bar,
                    value,
                    t_used: moved.t,
                },
                truth: exp.truth(clean.x_bar)?,
            });
        }
    }
    Ok(out)
}

/// `sup_i |truth(x_i) - reconstruction at x_i (1 + delta eta_i)|` over the clean points.
pub fn perturbed_sup_error(exp: &CriticalExperiment, data: &CriticalData, delta: f64, seed: u64) -> Result<f64> {
    Ok(perturbed_reconstruction(exp, data, delta, seed)?
        .iter()
        .map(ScoredEntry::abs_error)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub delta: f64,
    /// Mean over seeds of the sup-error.
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Sup-error of the unperturbed data (discretization floor).
    pub floor: f64,
    /// Log-log slope over the rows whose error exceeds `SATURATION_FACTOR * floor`.
    pub slope: Option<f64>,
    pub fitted_rows: usize,
}

/// Rows with error below this multiple of the floor count as saturated.
pub const SATURATION_FACTOR: f64 = 3.0;

/// Sup-error of the critical-point reconstruction under multiplicative location noise,
/// averaged over `seeds`, for each `delta`.
pub fn noise_rate_experiment(exp: &CriticalExperiment, deltas: &[f64], seeds: &[u64]) -> Result<RateTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument("noise levels must be positive".into()));
    }
    let data = generate_critical_data(exp)?;
    let floor = perturbed_sup_error(exp, &data, 0.0, 0)?;
    let rows = deltas
        .iter()
        .map(|&delta| {
            let total = seeds
                .iter()
                .map(|&s| perturbed_sup_error(exp, &data, delta, s))
                .sum::<Result<f64>>()?;
            Ok(RateRow {
                delta,
                sup_error: total / seeds.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.sup_error > SATURATION_FACTOR * floor)
        .map(|r| (r.delta, r.sup_error))
        .unzip();
    let slope = if xs.len() >= 3 { loglog_slope(&xs, &ys) } else { None };
    Ok(RateTable {
        rows,
        floor,
        slope,
        fitted_rows: xs.len(),
    })
}
