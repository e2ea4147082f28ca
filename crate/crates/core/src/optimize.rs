//! Derivative-free intensity optimization and the asymmetric-channel
//! comparisons built on it.
//!
//! The search is a multi-start coordinate pattern search in log space:
//! each free variable moves by factors `exp(±step)`, the step halves when
//! no coordinate move improves, and a start ends once the step drops below
//! the tolerance. Starts form a grid of three log-spaced seeds per variable.

use crate::analytic::r_est;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::keyrate::{two_decoy_rate_with, AsymptoticModel, KeyRateReport, RateMode};
use crate::params::{ChannelGeometry, IntensitySettings, SystemParams};

/// Pattern-search controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Seeds per free variable; the start grid has `seeds^dim` points.
    pub seeds_per_dim: usize,
    /// Initial step in natural-log units.
    pub initial_step: f64,
    pub shrink: f64,
    /// Stop once the step (a relative change) is below this.
    pub min_step: f64,
    /// Budget over all starts.
    pub max_evaluations: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { seeds_per_dim: 3, initial_step: 0.5, shrink: 0.5, min_step: 1e-4, max_evaluations: 20_000 }
    }
}

/// Result of [`maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Every start finished by step tolerance rather than budget.
    pub converged: bool,
}

/// `a` is better than `b`: larger value, ties to the smaller coordinate sum.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Maximizes `objective` over the box `[lo, hi]` (all bounds > 0).
/// `objective` returns `None` at infeasible points.
pub fn maximize<F>(objective: F, lo: &[f64], hi: &[f64], opts: &SearchOptions) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let dim = lo.len();
    if dim == 0 || hi.len() != dim {
        return Err(Error::invalid("bounds", "need one (lo, hi) pair per variable"));
    }
    for i in 0..dim {
        if !(lo[i] > 0.0 && hi[i] >= lo[i] && hi[i].is_finite()) {
            return Err(Error::invalid("bounds", format!("variable {i}: need 0 < lo <= hi, got [{}, {}]", lo[i], hi[i])));
        }
    }
    // Seed grid: interior points at fractions j/(k+1) of each log range.
    let k = opts.seeds_per_dim.max(1);
    let mut starts: Vec<Vec<f64>> = vec![Vec::new()];
    for i in 0..dim {
        let (l, h) = (lo[i].ln(), hi[i].ln());
        let mut next = Vec::with_capacity(starts.len() * k);
        for s in &starts {
            for j in 0..k {
                let f = (j + 1) as f64 / (k + 1) as f64;
                let mut t = s.clone();
                t.push((l + f * (h - l)).exp());
                next.push(t);
            }
        }
        starts = next;
    }
    maximize_from(objective, lo, hi, &starts, opts)
}

/// [`maximize`] from explicit start points. The best point over all
/// starts is returned; on exact ties the earliest start wins.
pub fn maximize_from<F>(objective: F, lo: &[f64], hi: &[f64], starts: &[Vec<f64>], opts: &SearchOptions) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let dim = lo.len();
    if starts.is_empty() || starts.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("starts", format!("need at least one start of dimension {dim}")));
    }
    let llo: Vec<f64> = lo.iter().map(|v| v.ln()).collect();
    let lhi: Vec<f64> = hi.iter().map(|v| v.ln()).collect();

    let evaluations = std::cell::Cell::new(0usize);
    let eval = |y: &[f64]| -> (f64, f64) {
        evaluations.set(evaluations.get() + 1);
        let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let v = objective(&x).filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY);
        (v, x.iter().sum())
    };
    let starts: Vec<Vec<f64>> =
        starts.iter().map(|s| s.iter().enumerate().map(|(i, v)| v.ln().clamp(llo[i], lhi[i])).collect()).collect();

    let mut best: Option<(Vec<f64>, (f64, f64))> = None;
    let mut converged = true;
    for start in starts {
        let mut y = start;
        let mut fy = eval(&y);
        let mut step = opts.initial_step;
        while step >= opts.min_step {
            if evaluations.get() >= opts.max_evaluations {
                converged = false;
                break;
            }
            let mut moved = false;
            for i in 0..dim {
                for dir in [1.0, -1.0] {
                    let cand = (y[i] + dir * step).clamp(llo[i], lhi[i]);
                    if cand == y[i] {
                        continue;
                    }
                    let mut t = y.clone();
                    t[i] = cand;
                    let ft = eval(&t);
                    if better(ft, fy) {
                        y = t;
                        fy = ft;
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                step *= opts.shrink;
            }
        }
        if best.as_ref().map_or(true, |(_, fb)| better(fy, *fb)) {
            best = Some((y, fy));
        }
    }
    let (y, fy) = best.expect("at least one start");
    if fy.0 == f64::NEG_INFINITY {
        return Err(Error::EmptyFeasibleSet("no feasible point found by any start".into()));
    }
    Ok(SearchResult { x: y.iter().map(|v| v.exp()).collect(), value: fy.0, evaluations: evaluations.get(), converged })
}

/// Search ranges for the free intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityBounds {
    pub mu: (f64, f64),
    pub nu: (f64, f64),
    /// Pinned value of the weakest decoy for both parties.
    pub omega_floor: f64,
}

impl Default for IntensityBounds {
    fn default() -> Self {
        IntensityBounds { mu: (1e-3, 2.0), nu: (1e-4, 1.0), omega_floor: 5e-4 }
    }
}

/// How the free variables map to the two parties' intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Alice and Bob optimized independently.
    Free,
    /// `mu_a = mu_b`, `nu_a = nu_b` (symmetric channels).
    Tied,
    /// Symmetric choice `mu_a t_a = mu_b t_b`, `nu_a t_a = nu_b t_b`, i.e.
    /// Bob's intensities are `x` times Alice's.
    MatchedArrival { x: f64 },
}

/// Result of an intensity optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_settings: IntensitySettings,
    /// Raw (unfloored) rate at the optimum.
    pub best_rate: f64,
    pub report: KeyRateReport,
    pub evaluations: usize,
    pub converged: bool,
    /// Names of search bounds the optimum sits on.
    pub constraint_active: Vec<String>,
}

impl OptimizationResult {
    /// Floored rate.
    pub fn rate(&self) -> f64 {
        self.best_rate.max(0.0)
    }
}

/// Objective evaluator for one geometry and mode.
enum Evaluator {
    Asymptotic(AsymptoticModel),
    TwoDecoy { engine: Engine, geometry: ChannelGeometry, params: SystemParams },
}

impl Evaluator {
    fn new(mode: RateMode, geometry: &ChannelGeometry, params: &SystemParams) -> Result<Self> {
        Ok(match mode {
            RateMode::AsymptoticTruth => Evaluator::Asymptotic(AsymptoticModel::new(geometry, params)?),
            RateMode::TwoDecoyBounds => {
                Evaluator::TwoDecoy { engine: Engine::new(params)?, geometry: *geometry, params: params.clone() }
            }
        })
    }

    fn report(&self, s: &IntensitySettings) -> Result<KeyRateReport> {
        match self {
            Evaluator::Asymptotic(m) => m.rate(s.mu_a, s.mu_b),
            Evaluator::TwoDecoy { engine, geometry, params } => two_decoy_rate_with(engine, s, geometry, params),
        }
    }
}

fn settings_from(mode: RateMode, coupling: Coupling, v: &[f64], omega: f64) -> IntensitySettings {
    // Asymptotic mode has no decoys; nu/omega are placeholders that keep the
    // ordering valid.
    let decoy = |mu: f64, nu: Option<f64>| -> (f64, f64, f64) {
        match nu {
            Some(nu) => (mu, nu, omega),
            None => (mu, mu / 2.0, 0.0),
        }
    };
    let two = mode == RateMode::TwoDecoyBounds;
    match coupling {
        Coupling::Free => {
            let (a, b) = if two { ((v[0], Some(v[1])), (v[2], Some(v[3]))) } else { ((v[0], None), (v[1], None)) };
            IntensitySettings::new(decoy(a.0, a.1), decoy(b.0, b.1))
        }
        Coupling::Tied => {
            let p = decoy(v[0], if two { Some(v[1]) } else { None });
            IntensitySettings::new(p, p)
        }
        Coupling::MatchedArrival { x } => {
            let nu = if two { Some(v[1]) } else { None };
            IntensitySettings::new(decoy(v[0], nu), decoy(x * v[0], nu.map(|n| x * n)))
        }
    }
}

fn active_bounds(mode: RateMode, coupling: Coupling, x: &[f64], lo: &[f64], hi: &[f64], omega: f64) -> Vec<String> {
    let two = mode == RateMode::TwoDecoyBounds;
    let names: Vec<&str> = match (coupling, two) {
        (Coupling::Free, true) => vec!["mu_a", "nu_a", "mu_b", "nu_b"],
        (Coupling::Free, false) => vec!["mu_a", "mu_b"],
        (_, true) => vec!["mu", "nu"],
        (_, false) => vec!["mu"],
    };
    let mut out = Vec::new();
    for i in 0..x.len() {
        if (x[i] / lo[i] - 1.0).abs() < 1e-6 {
            out.push(format!("{}>=lower", names[i]));
        }
        if (x[i] / hi[i] - 1.0).abs() < 1e-6 {
            out.push(format!("{}<=upper", names[i]));
        }
    }
    if two {
        out.push(format!("omega=floor({omega})"));
    }
    out
}

/// Maximizes the key rate over intensities. In two-decoy mode `omega` is
/// pinned at `bounds.omega_floor` for both parties and points violating
/// `mu > nu > omega` are infeasible.
pub fn optimize_intensities(
    mode: RateMode,
    coupling: Coupling,
    geometry: &ChannelGeometry,
    params: &SystemParams,
    bounds: &IntensityBounds,
    opts: &SearchOptions,
) -> Result<OptimizationResult> {
    let eval = Evaluator::new(mode, geometry, params)?;
    let two = mode == RateMode::TwoDecoyBounds;
    let per_party: Vec<(f64, f64)> = if two { vec![bounds.mu, bounds.nu] } else { vec![bounds.mu] };
    let ranges: Vec<(f64, f64)> = match coupling {
        Coupling::Free => per_party.iter().chain(per_party.iter()).copied().collect(),
        _ => per_party,
    };
    let lo: Vec<f64> = ranges.iter().map(|r| r.0).collect();
    let hi: Vec<f64> = ranges.iter().map(|r| r.1).collect();
    let omega = bounds.omega_floor;

    let objective = |v: &[f64]| -> Option<f64> {
        let s = settings_from(mode, coupling, v, omega);
        if two && s.validate().is_err() {
            return None;
        }
        eval.report(&s).ok().map(|r| r.raw_rate)
    };
    let found = maximize(objective, &lo, &hi, opts)?;
    let best_settings = settings_from(mode, coupling, &found.x, omega);
    let report = eval.report(&best_settings)?;
    Ok(OptimizationResult {
        best_settings,
        best_rate: report.raw_rate,
        report,
        evaluations: found.evaluations,
        converged: found.converged,
        constraint_active: active_bounds(mode, coupling, &found.x, &lo, &hi, omega),
    })
}

/// One row of an optimal-intensity sweep over symmetric channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub total_km: f64,
    pub result: OptimizationResult,
}

/// Optimal intensities versus total distance with `L_ac = L_bc`. The
/// problem is party-symmetric, so Alice and Bob share intensities.
pub fn optimal_intensity_sweep(
    mode: RateMode,
    distances_km: &[f64],
    params: &SystemParams,
    bounds: &IntensityBounds,
    opts: &SearchOptions,
) -> Result<Vec<SweepPoint>> {
    distances_km
        .iter()
        .map(|&l| {
            let geo = ChannelGeometry::symmetric(l, params.alpha_db_per_km)?;
            let result = optimize_intensities(mode, Coupling::Tied, &geo, params, bounds, opts)?;
            Ok(SweepPoint { total_km: l, result })
        })
        .collect()
}

/// Symmetric versus optimal intensity choice on an asymmetric channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricComparison {
    pub x: f64,
    pub l_bc_km: f64,
    pub symmetric_choice: OptimizationResult,
    pub optimal_choice: OptimizationResult,
    /// `R_opt / R_sym - 1` (NaN when the symmetric rate is not positive).
    pub advantage: f64,
    /// `mu_a t_a / (mu_b t_b)` at the optimal choice.
    pub arrival_ratio: f64,
}

pub fn asymmetric_compare(
    x: f64,
    l_bc_km: f64,
    mode: RateMode,
    params: &SystemParams,
    bounds: &IntensityBounds,
    opts: &SearchOptions,
) -> Result<AsymmetricComparison> {
    let geo = ChannelGeometry::from_ratio(x, l_bc_km, params.alpha_db_per_km)?;
    let x = geo.x();
    let sym = optimize_intensities(mode, Coupling::MatchedArrival { x }, &geo, params, bounds, opts)?;
    let opt = optimize_intensities(mode, Coupling::Free, &geo, params, bounds, opts)?;
    let advantage = if sym.rate() > 0.0 { opt.rate() / sym.rate() - 1.0 } else { f64::NAN };
    let s = opt.best_settings;
    Ok(AsymmetricComparison {
        x,
        l_bc_km,
        arrival_ratio: s.mu_a * geo.t_a() / (s.mu_b * geo.t_b()),
        symmetric_choice: sym,
        optimal_choice: opt,
        advantage,
    })
}

/// Advantage averaged over a range of `L_bc`. Points where either rate
/// is zero are skipped; the scan stops at the first such point beyond the
/// first one.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageAdvantage {
    pub x: f64,
    pub mean_advantage: f64,
    pub points: Vec<AsymmetricComparison>,
}

pub fn average_advantage(
    x: f64,
    l_bc_km: &[f64],
    mode: RateMode,
    params: &SystemParams,
    bounds: &IntensityBounds,
    opts: &SearchOptions,
) -> Result<AverageAdvantage> {
    let mut points = Vec::new();
    for &l in l_bc_km {
        let c = asymmetric_compare(x, l, mode, params, bounds, opts)?;
        if !c.advantage.is_finite() || c.optimal_choice.rate() <= 0.0 {
            break;
        }
        points.push(c);
    }
    if points.is_empty() {
        return Err(Error::EmptyFeasibleSet(format!("no positive key rate for x = {x}")));
    }
    let mean_advantage = points.iter().map(|p| p.advantage).sum::<f64>() / points.len() as f64;
    Ok(AverageAdvantage { x, mean_advantage, points })
}

/// Optimum of the background-free estimated rate at one geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedOptimum {
    pub mu_a: f64,
    pub mu_b: f64,
    pub rate: f64,
}

/// Maximizes the estimated rate over `(mu_a, mu_b)`.
pub fn optimize_r_est(geometry: &ChannelGeometry, params: &SystemParams, opts: &SearchOptions) -> Result<EstimatedOptimum> {
    let f = |v: &[f64]| Some(r_est(geometry, v[0], v[1], params));
    let b = IntensityBounds::default().mu;
    let r = maximize(f, &[b.0, b.0], &[b.1, b.1], opts)?;
    Ok(EstimatedOptimum { mu_a: r.x[0], mu_b: r.x[1], rate: r.value })
}

/// Joint-scaling and distance-slope checks of the estimated rate at fixed `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub x: f64,
    /// `(scale, optimum)` with both transmittances multiplied by `scale`.
    pub scaled: Vec<(f64, EstimatedOptimum)>,
    /// Largest deviation of any optimal intensity from the unscaled one.
    pub max_argmax_shift: f64,
    /// Largest `|rate(s) / (s^2 rate(1)) - 1|`.
    pub max_scaling_error: f64,
    /// Least-squares slope of `log10 R` versus `L_bc` (per km).
    pub log_slope_per_km: f64,
}

pub fn scaling_check(
    x: f64,
    scale_factors: &[f64],
    l_bc_km: &[f64],
    params: &SystemParams,
    opts: &SearchOptions,
) -> Result<ScalingReport> {
    let params = params.clone().with_y0(0.0);
    let base = ChannelGeometry::from_ratio(x, 0.0, params.alpha_db_per_km)?;
    let reference = optimize_r_est(&base, &params, opts)?;
    let mut scaled = Vec::new();
    let mut max_argmax_shift: f64 = 0.0;
    let mut max_scaling_error: f64 = 0.0;
    for &s in scale_factors {
        let geo = ChannelGeometry::from_transmittances(base.t_a() * s, base.t_b() * s)?;
        let o = optimize_r_est(&geo, &params, opts)?;
        max_argmax_shift = max_argmax_shift.max((o.mu_a - reference.mu_a).abs()).max((o.mu_b - reference.mu_b).abs());
        max_scaling_error = max_scaling_error.max((o.rate / (s * s * reference.rate) - 1.0).abs());
        scaled.push((s, o));
    }
    let mut pts = Vec::new();
    for &l in l_bc_km {
        let geo = ChannelGeometry::from_ratio(x, l, params.alpha_db_per_km)?;
        let o = optimize_r_est(&geo, &params, opts)?;
        pts.push((l, o.rate.log10()));
    }
    Ok(ScalingReport { x, scaled, max_argmax_shift, max_scaling_error, log_slope_per_km: fit_slope(&pts) })
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::g_function;

    #[test]
    fn concave_1d() {
        // f = ln(x) - x / 3 peaks at x = 3.
        let f = |v: &[f64]| Some(v[0].ln() - v[0] / 3.0);
        let r = maximize(f, &[0.01], &[100.0], &SearchOptions::default()).unwrap();
        let grid_best =
            (1..=100_000).map(|i| i as f64 * 1e-3).max_by(|a, b| f(&[*a]).unwrap().total_cmp(&f(&[*b]).unwrap())).unwrap();
        assert!((r.x[0] - grid_best).abs() < 1e-3 * 3.0, "{} vs {grid_best}", r.x[0]);
        assert!(r.converged);
    }

    #[test]
    fn infeasible_everywhere_is_an_error() {
        let r = maximize(|_| None, &[0.1, 0.1], &[1.0, 1.0], &SearchOptions::default());
        assert!(matches!(r, Err(Error::EmptyFeasibleSet(_))));
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(maximize(|_| Some(0.0), &[0.0], &[1.0], &SearchOptions::default()).is_err());
        assert!(maximize(|_| Some(0.0), &[2.0], &[1.0], &SearchOptions::default()).is_err());
    }

    #[test]
    fn ties_prefer_smaller_total() {
        let r = maximize(|_| Some(1.0), &[0.1, 0.1], &[1.0, 1.0], &SearchOptions::default()).unwrap();
        assert!(r.x.iter().all(|&v| (v - 0.1).abs() < 1e-9), "{:?}", r.x);
    }

    #[test]
    fn g_without_errors_peaks_at_one() {
        let p = SystemParams::table3().with_e_d(0.0);
        let r =
            maximize(|v| Some(g_function(1.0, v[0], v[1], &p)), &[1e-3, 1e-3], &[3.0, 3.0], &SearchOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn more_starts_never_hurt() {
        // Multimodal in log space.
        let f = |v: &[f64]| Some((3.0 * v[0].ln()).sin() + (2.0 * v[1].ln()).cos() - 0.01 * v[0]);
        let all: Vec<Vec<f64>> = vec![vec![0.02, 0.02], vec![50.0, 0.05], vec![1.0, 1.0], vec![0.3, 40.0], vec![7.0, 7.0]];
        let mut last = f64::NEG_INFINITY;
        for n in 1..=all.len() {
            let r = maximize_from(f, &[0.01, 0.01], &[100.0, 100.0], &all[..n], &SearchOptions::default()).unwrap();
            assert!(r.value >= last, "{n} starts: {} < {last}", r.value);
            last = r.value;
        }
    }

    #[test]
    fn symmetric_channel_optimum_is_symmetric() {
        let geo = ChannelGeometry::symmetric(30.0, 0.2).unwrap();
        let p = SystemParams::table3().reduced();
        let r = optimize_intensities(
            RateMode::AsymptoticTruth,
            Coupling::Free,
            &geo,
            &p,
            &IntensityBounds::default(),
            &SearchOptions::default(),
        )
        .unwrap();
        let s = r.best_settings;
        assert!((s.mu_a - s.mu_b).abs() < 1e-2, "{s:?}");
        let again = r.report.raw_rate;
        assert_eq!(again, r.best_rate);
    }

    #[test]
    fn two_decoy_optimum_respects_ordering() {
        let geo = ChannelGeometry::symmetric(40.0, 0.2).unwrap();
        let p = SystemParams::table3().reduced();
        let b = IntensityBounds::default();
        let r = optimize_intensities(RateMode::TwoDecoyBounds, Coupling::Tied, &geo, &p, &b, &SearchOptions::default()).unwrap();
        let s = r.best_settings;
        assert!(s.validate().is_ok());
        assert_eq!(s.omega_a, b.omega_floor);
        assert!(r.best_rate > 0.0);
        assert!(r.constraint_active.iter().any(|c| c.starts_with("omega=floor")));
    }
}
