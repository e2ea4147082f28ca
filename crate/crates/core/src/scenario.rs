//! Named reproductions: parameter sweeps, tolerance cutoffs and the
//! asymmetric-channel scans. Every preset returns one table per output
//! series; the CLI writes them as CSV files.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::analytic::r_est;
use crate::error::{ConfigLocation, Error, Result};
use crate::keyrate::RateMode;
use crate::optimize::{
    asymmetric_compare, fit_slope, maximize, optimal_intensity_sweep, optimize_intensities, optimize_r_est, Coupling,
    IntensityBounds, OptimizationResult, SearchOptions,
};
use crate::output::{Cell, Table};
use crate::params::{ChannelGeometry, E11Model, MisalignmentMode, SystemParams};

/// How a quoted distance maps onto a symmetric channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceConvention {
    /// The distance is `L_ac + L_bc`.
    Total,
    /// The distance is each arm's length.
    PerArm,
}

impl DistanceConvention {
    pub fn label(self) -> &'static str {
        match self {
            DistanceConvention::Total => "total",
            DistanceConvention::PerArm => "per_arm",
        }
    }

    /// Total length of a symmetric channel quoted as `l_km`.
    pub fn total_km(self, l_km: f64) -> f64 {
        match self {
            DistanceConvention::Total => l_km,
            DistanceConvention::PerArm => 2.0 * l_km,
        }
    }

    pub fn geometry(self, l_km: f64, alpha_db_per_km: f64) -> Result<ChannelGeometry> {
        ChannelGeometry::symmetric(self.total_km(l_km), alpha_db_per_km)
    }
}

impl FromStr for DistanceConvention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "total" => Ok(DistanceConvention::Total),
            "per_arm" => Ok(DistanceConvention::PerArm),
            _ => Err(format!("expected `total` or `per_arm`, got `{s}`")),
        }
    }
}

/// Controls shared by all presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub bounds: IntensityBounds,
    pub search: SearchOptions,
    pub convention: DistanceConvention,
    /// Absolute resolution of cutoff bisections, as a fraction of the
    /// bracket (log bracket for log-scaled quantities).
    pub cutoff_tolerance: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            bounds: IntensityBounds::default(),
            search: SearchOptions::default(),
            convention: DistanceConvention::Total,
            cutoff_tolerance: 1e-3,
        }
    }
}

/// Best asymptotic rate on a symmetric channel of quoted length `l_km`.
pub fn symmetric_optimum(params: &SystemParams, l_km: f64, opts: &ScenarioOptions) -> Result<OptimizationResult> {
    let geo = opts.convention.geometry(l_km, params.alpha_db_per_km)?;
    optimize_intensities(RateMode::AsymptoticTruth, Coupling::Tied, &geo, params, &opts.bounds, &opts.search)
}

/// Largest value in `[lo, hi]` at which `positive` still holds, assuming
/// it holds below some threshold and fails above it. Returns `lo` when it
/// fails already at `lo`, and `None` when it still holds at `hi`.
/// `log_scale` bisects in `ln` space (then `lo` must be positive).
pub fn positivity_cutoff<F>(lo: f64, hi: f64, tolerance: f64, log_scale: bool, mut positive: F) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(hi > lo) || (log_scale && !(lo > 0.0)) {
        return Err(Error::invalid("cutoff bracket", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    type Map = fn(f64) -> f64;
    let (to, from): (Map, Map) = if log_scale { (f64::ln, f64::exp) } else { (|v| v, |v| v) };
    if !positive(lo)? {
        return Ok(Some(lo));
    }
    if positive(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (to(lo), to(hi));
    let tol = tolerance * (b - a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if positive(from(m))? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(from(0.5 * (a + b))))
}

fn rate_positive(params: &SystemParams, l_km: f64, opts: &ScenarioOptions) -> Result<bool> {
    Ok(symmetric_optimum(params, l_km, opts)?.best_rate > 0.0)
}

/// One output series of a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// File stem of the CSV.
    pub name: String,
    pub table: Table,
}

impl Series {
    fn new(name: &str, table: Table) -> Self {
        Series { name: name.to_string(), table }
    }
}

/// Grid vectors of a preset, keyed by name.
pub type Grids = BTreeMap<String, Vec<f64>>;

fn grid<'a>(grids: &'a Grids, name: &str) -> Result<&'a [f64]> {
    grids.get(name).map(Vec::as_slice).ok_or_else(|| Error::config(ConfigLocation::Key(format!("grid.{name}")), "missing grid"))
}

fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

fn log_steps(from: f64, to: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (from.log10(), to.log10());
    let n = ((b - a) * per_decade as f64).round() as usize;
    (0..=n).map(|i| 10f64.powf(a + (b - a) * i as f64 / n as f64)).collect()
}

/// Reproductions the CLI can run by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig3,
    Fig5,
    Fig6Asymptotic,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
    Table4,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::Fig3,
        Preset::Fig5,
        Preset::Fig6Asymptotic,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Fig9,
        Preset::Fig10,
        Preset::Fig11,
        Preset::Table4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig5 => "fig5",
            Preset::Fig6Asymptotic => "fig6-asymptotic",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Fig10 => "fig10",
            Preset::Fig11 => "fig11",
            Preset::Table4 => "table4",
        }
    }

    /// System parameters the preset starts from. Misalignment sweeps use
    /// Gaussian-distributed angles; the mode-mismatch sweep reads `e11` off
    /// simulated decoy data; the asymmetric-channel presets use the
    /// closed-form model (fixed angles, no mode mismatch).
    pub fn base_params(self) -> SystemParams {
        let t3 = SystemParams::table3();
        match self {
            Preset::Fig3 => t3.with_e_m(0.0),
            Preset::Fig5 => SystemParams { e11_model: E11Model::DecoyExtrapolation { nu: 1e-3 }, ..t3.with_e_d(0.0) },
            Preset::Fig6Asymptotic => {
                let e_m = t3.e_m;
                t3.reduced().with_e_m(e_m)
            }
            Preset::Fig7 | Preset::Fig8 | Preset::Fig9 | Preset::Fig10 | Preset::Fig11 | Preset::Table4 => t3.reduced(),
        }
    }

    /// Search settings the preset starts from. The Monte Carlo sweeps use a
    /// single seed per variable: the rate is unimodal in the shared
    /// intensity and each evaluation costs a full ensemble average.
    pub fn base_options(self) -> ScenarioOptions {
        let mut o = ScenarioOptions::default();
        if self == Preset::Fig3 {
            o.search.seeds_per_dim = 1;
            o.search.min_step = 1e-3;
        }
        o
    }

    pub fn default_grids(self) -> Grids {
        let mut g = Grids::new();
        let mut put = |k: &str, v: Vec<f64>| {
            g.insert(k.to_string(), v);
        };
        match self {
            Preset::Fig3 => {
                put("e_d", steps(0.0, 0.08, 0.005));
                put("distance_km", vec![0.0, 60.0, 120.0]);
                put("cutoff_at_km", vec![0.0, 120.0]);
            }
            Preset::Fig5 => {
                put("e_m", steps(0.0, 1.0, 0.05));
                put("distance_km", vec![0.0, 60.0, 120.0]);
                put("cutoff_at_km", vec![0.0, 120.0]);
            }
            Preset::Fig6Asymptotic => {
                put("distance_km", steps(0.0, 200.0, 10.0));
                put("section5_distance_km", vec![0.0]);
            }
            Preset::Fig7 => {
                put("y0", log_steps(1e-7, 1e-2, 4));
                put("distance_km", vec![0.0, 60.0, 120.0]);
                put("cutoff_at_km", vec![0.0]);
            }
            Preset::Fig8 => {
                put("x", vec![0.1]);
                put("l_bc_km", steps(0.0, 100.0, 5.0));
            }
            Preset::Fig9 => {
                put("l_bc_km", vec![0.001, 10.0, 20.0, 40.0]);
                put("l_ac_km", steps(0.0, 150.0, 10.0));
                put("max_x_at_l_bc_km", vec![0.001]);
            }
            Preset::Fig10 => {
                put("l_ac_km", steps(0.0, 100.0, 20.0));
                put("l_bc_km", steps(0.0, 100.0, 20.0));
            }
            Preset::Fig11 => {
                put("x", vec![0.1, 0.9]);
                put("l_bc_km", steps(0.0, 60.0, 10.0));
                put("slope_max_l_bc_km", vec![30.0]);
            }
            Preset::Table4 => {
                put("x", vec![0.1]);
                put("l_bc_km", vec![0.0, 10.0, 20.0]);
            }
        }
        g
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL.iter().copied().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}` (expected one of: {})", names.join(", "))
        })
    }
}

/// Runs a preset. `grids` must contain every key of
/// [`Preset::default_grids`].
pub fn run_preset(preset: Preset, params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    params.validate()?;
    match preset {
        Preset::Fig3 => parameter_sweep(params, grids, opts, "e_d", "fig3", |p, v| p.clone().with_e_d(v), false, 0.2),
        Preset::Fig5 => parameter_sweep(params, grids, opts, "e_m", "fig5", |p, v| p.clone().with_e_m(v), false, 1.0),
        Preset::Fig7 => parameter_sweep(params, grids, opts, "y0", "fig7", |p, v| p.clone().with_y0(v), true, 1e-1),
        Preset::Fig6Asymptotic => fig6(params, grids, opts),
        Preset::Fig8 => fig8(params, grids, opts),
        Preset::Fig9 => fig9(params, grids, opts),
        Preset::Fig10 => fig10(params, grids, opts),
        Preset::Fig11 => fig11(params, grids, opts),
        Preset::Table4 => table4(params, grids, opts),
    }
}

/// Optimal rate over a grid of one system parameter and several
/// distances, plus the tolerance cutoff in that parameter.
#[allow(clippy::too_many_arguments)]
fn parameter_sweep<F>(
    params: &SystemParams,
    grids: &Grids,
    opts: &ScenarioOptions,
    key: &str,
    stem: &str,
    set: F,
    log_scale: bool,
    bracket_hi: f64,
) -> Result<Vec<Series>>
where
    F: Fn(&SystemParams, f64) -> SystemParams,
{
    let values = grid(grids, key)?;
    let mut rates = Table::new([key, "L_total_km", "rate", "mu"]);
    for &l in grid(grids, "distance_km")? {
        for &v in values {
            let r = symmetric_optimum(&set(params, v), l, opts)?;
            rates.push(vec![v.into(), opts.convention.total_km(l).into(), r.rate().into(), r.best_settings.mu_a.into()]);
        }
    }
    let mut cut = Table::new(["L_total_km", &format!("{key}_cutoff")]);
    let lo = if log_scale { values.first().copied().unwrap_or(1e-9).max(1e-12) } else { 0.0 };
    for &l in grid(grids, "cutoff_at_km")? {
        let c = cutoff(params, l, opts, &set, lo, bracket_hi, log_scale)?;
        cut.push(vec![opts.convention.total_km(l).into(), c.map_or(Cell::Text("none".into()), Cell::Num)]);
    }
    Ok(vec![Series::new(&format!("{stem}_rate"), rates), Series::new(&format!("{stem}_cutoff"), cut)])
}

fn cutoff<F>(
    params: &SystemParams,
    l_km: f64,
    opts: &ScenarioOptions,
    set: &F,
    lo: f64,
    hi: f64,
    log_scale: bool,
) -> Result<Option<f64>>
where
    F: Fn(&SystemParams, f64) -> SystemParams,
{
    positivity_cutoff(lo, hi, opts.cutoff_tolerance, log_scale, |v| rate_positive(&set(params, v), l_km, opts))
}

/// Largest misalignment `e_d` with a positive optimal rate at `l_km`.
pub fn misalignment_cutoff(params: &SystemParams, l_km: f64, opts: &ScenarioOptions) -> Result<Option<f64>> {
    cutoff(params, l_km, opts, &|p: &SystemParams, v| p.clone().with_e_d(v), 0.0, 0.2, false)
}

/// Largest mode mismatch `e_m` with a positive optimal rate at `l_km`.
pub fn mode_mismatch_cutoff(params: &SystemParams, l_km: f64, opts: &ScenarioOptions) -> Result<Option<f64>> {
    cutoff(params, l_km, opts, &|p: &SystemParams, v| p.clone().with_e_m(v), 0.0, 1.0, false)
}

/// Largest background rate `Y0` with a positive optimal rate at `l_km`.
pub fn background_cutoff(params: &SystemParams, l_km: f64, opts: &ScenarioOptions) -> Result<Option<f64>> {
    cutoff(params, l_km, opts, &|p: &SystemParams, v| p.clone().with_y0(v), 1e-9, 1e-1, true)
}

fn settings_cells(r: &OptimizationResult) -> Vec<Cell> {
    let s = r.best_settings;
    vec![s.mu_a.into(), s.nu_a.into(), s.omega_a.into(), s.mu_b.into(), s.nu_b.into(), s.omega_b.into()]
}

const SETTINGS_HEADER: [&str; 6] = ["mu_a", "nu_a", "omega_a", "mu_b", "nu_b", "omega_b"];

const MODES: [RateMode; 2] = [RateMode::AsymptoticTruth, RateMode::TwoDecoyBounds];

fn fig6(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let distances: Vec<f64> = grid(grids, "distance_km")?.iter().map(|&l| opts.convention.total_km(l)).collect();
    let mut t = Table::new(["mode", "L_total_km", "mu", "nu", "omega", "rate"]);
    for mode in MODES {
        for p in optimal_intensity_sweep(mode, &distances, params, &opts.bounds, &opts.search)? {
            let s = p.result.best_settings;
            let (nu, omega) = if mode == RateMode::TwoDecoyBounds { (s.nu_a, s.omega_a) } else { (f64::NAN, f64::NAN) };
            t.push(vec![mode.label().into(), p.total_km.into(), s.mu_a.into(), nu.into(), omega.into(), p.result.rate().into()]);
        }
    }
    let (p5, b5) = section5_scenario(params, opts);
    let mut s5 = Table::new(["L_total_km", "e_d", "e_m", "omega", "mu", "nu", "rate"]);
    for &l in grid(grids, "section5_distance_km")? {
        let geo = opts.convention.geometry(l, p5.alpha_db_per_km)?;
        let r = optimize_intensities(RateMode::TwoDecoyBounds, Coupling::Tied, &geo, &p5, &b5, &opts.search)?;
        let s = r.best_settings;
        s5.push(vec![
            (geo.l_ac_km() + geo.l_bc_km()).into(),
            p5.e_d.into(),
            p5.e_m.into(),
            s.omega_a.into(),
            s.mu_a.into(),
            s.nu_a.into(),
            r.rate().into(),
        ]);
    }
    Ok(vec![Series::new("fig6_optimal_intensities", t), Series::new("fig6_section5", s5)])
}

/// The experimental setting of the optimization framework's example:
/// `e_d = 0.7 %`, `e_m = 2 %`, weakest decoy pinned at 0.01.
pub fn section5_scenario(params: &SystemParams, opts: &ScenarioOptions) -> (SystemParams, IntensityBounds) {
    let mut p = params.clone().with_e_d(0.007).with_e_m(0.02);
    if let MisalignmentMode::FixedAngles { .. } = p.misalignment {
        p.misalignment = MisalignmentMode::reduced(0.007);
    }
    let mut b = opts.bounds;
    b.omega_floor = 0.01;
    (p, b)
}

fn comparison_row(mode: RateMode, c: &crate::optimize::AsymmetricComparison, geo: &ChannelGeometry) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![mode.label().into(), c.x.into(), c.l_bc_km.into(), geo.l_ac_km().into()];
    row.extend(settings_cells(&c.symmetric_choice));
    row.push(c.symmetric_choice.rate().into());
    row.extend(settings_cells(&c.optimal_choice));
    row.push(c.optimal_choice.rate().into());
    row.push(c.advantage.into());
    row.push(c.arrival_ratio.into());
    row
}

fn comparison_header() -> Vec<String> {
    let mut h: Vec<String> = ["mode", "x", "L_bc_km", "L_ac_km"].iter().map(|s| s.to_string()).collect();
    h.extend(SETTINGS_HEADER.iter().map(|s| format!("sym_{s}")));
    h.push("sym_rate".into());
    h.extend(SETTINGS_HEADER.iter().map(|s| format!("opt_{s}")));
    h.push("opt_rate".into());
    h.push("advantage".into());
    h.push("arrival_ratio".into());
    h
}

fn fig8(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let mut t = Table::new(comparison_header());
    let mut summary = Table::new(["mode", "x", "mean_advantage", "points"]);
    for &x in grid(grids, "x")? {
        for mode in MODES {
            let (rows, mean) = advantage_scan(x, grid(grids, "l_bc_km")?, mode, params, opts)?;
            let n = rows.len();
            for (c, geo) in rows {
                t.push(comparison_row(mode, &c, &geo));
            }
            summary.push(vec![mode.label().into(), x.into(), mean.into(), n.into()]);
        }
    }
    Ok(vec![Series::new("fig8_comparison", t), Series::new("fig8_advantage", summary)])
}

type ComparisonRows = Vec<(crate::optimize::AsymmetricComparison, ChannelGeometry)>;

/// Symmetric versus optimal choice along `L_bc` at fixed `x`. The scan
/// stops at the first distance where either choice has no positive rate;
/// the returned mean advantage covers the scanned points (NaN if none).
pub fn advantage_scan(
    x: f64,
    l_bc_km: &[f64],
    mode: RateMode,
    params: &SystemParams,
    opts: &ScenarioOptions,
) -> Result<(ComparisonRows, f64)> {
    let mut rows = Vec::new();
    for &l in l_bc_km {
        let c = asymmetric_compare(x, l, mode, params, &opts.bounds, &opts.search)?;
        if !(c.symmetric_choice.rate() > 0.0 && c.optimal_choice.rate() > 0.0) {
            break;
        }
        let geo = ChannelGeometry::from_ratio(x, l, params.alpha_db_per_km)?;
        rows.push((c, geo));
    }
    let mean = if rows.is_empty() { f64::NAN } else { rows.iter().map(|r| r.0.advantage).sum::<f64>() / rows.len() as f64 };
    Ok((rows, mean))
}

/// One row of [`rig_vs_est_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigVsEst {
    pub l_ac_km: f64,
    pub l_bc_km: f64,
    pub x: f64,
    pub r_rig: f64,
    pub r_est: f64,
}

impl RigVsEst {
    /// `|R_rig - R_est| / R_rig` (infinite when `R_rig` is zero).
    pub fn relative_gap(&self) -> f64 {
        if self.r_rig > 0.0 {
            (self.r_rig - self.r_est).abs() / self.r_rig
        } else {
            f64::INFINITY
        }
    }
}

/// Rigorous and estimated rates, each at its own optimal `(mu_a, mu_b)`,
/// for every pair of arm lengths.
pub fn rig_vs_est_scan(l_bc_km: &[f64], l_ac_km: &[f64], params: &SystemParams, opts: &ScenarioOptions) -> Result<Vec<RigVsEst>> {
    let mut out = Vec::new();
    for &lb in l_bc_km {
        for &la in l_ac_km {
            let geo = ChannelGeometry::from_distances(la, lb, params.alpha_db_per_km)?;
            let rig = optimize_intensities(RateMode::AsymptoticTruth, Coupling::Free, &geo, params, &opts.bounds, &opts.search)?;
            let est = optimize_r_est(&geo, params, &opts.search)?;
            out.push(RigVsEst { l_ac_km: la, l_bc_km: lb, x: geo.x(), r_rig: rig.rate(), r_est: est.rate.max(0.0) });
        }
    }
    Ok(out)
}

/// Largest channel mismatch (smallest `x = t_a / t_b`) with a positive
/// optimal rate when Bob sits `l_bc_km` from the relay. Returns
/// `(L_ac, x)` at the cutoff.
pub fn max_tolerable_mismatch(l_bc_km: f64, params: &SystemParams, opts: &ScenarioOptions) -> Result<Option<(f64, f64)>> {
    let positive = |la: f64| -> Result<bool> {
        let geo = ChannelGeometry::from_distances(la, l_bc_km, params.alpha_db_per_km)?;
        let r = optimize_intensities(RateMode::AsymptoticTruth, Coupling::Free, &geo, params, &opts.bounds, &opts.search)?;
        Ok(r.best_rate > 0.0)
    };
    let hi = 400.0;
    let la = positivity_cutoff(l_bc_km, hi, opts.cutoff_tolerance * 1e-1, false, positive)?;
    Ok(match la {
        Some(la) => {
            let geo = ChannelGeometry::from_distances(la, l_bc_km, params.alpha_db_per_km)?;
            Some((la, geo.x()))
        }
        None => None,
    })
}

fn fig9(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let mut t = Table::new(["L_ac_km", "L_bc_km", "x", "R_rig", "R_est", "relative_gap"]);
    for r in rig_vs_est_scan(grid(grids, "l_bc_km")?, grid(grids, "l_ac_km")?, params, opts)? {
        t.push(vec![r.l_ac_km.into(), r.l_bc_km.into(), r.x.into(), r.r_rig.into(), r.r_est.into(), r.relative_gap().into()]);
    }
    let mut m = Table::new(["L_bc_km", "L_ac_km_max", "x_min"]);
    for &lb in grid(grids, "max_x_at_l_bc_km")? {
        match max_tolerable_mismatch(lb, params, opts)? {
            Some((la, x)) => m.push(vec![lb.into(), la.into(), x.into()]),
            None => m.push(vec![lb.into(), "none".into(), "none".into()]),
        }
    }
    Ok(vec![Series::new("fig9_rig_vs_est", t), Series::new("fig9_max_mismatch", m)])
}

fn fig10(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let mut t = Table::new(["L_ac_km", "L_bc_km", "x", "mu_a", "mu_b", "rate"]);
    for &la in grid(grids, "l_ac_km")? {
        for &lb in grid(grids, "l_bc_km")? {
            let geo = ChannelGeometry::from_distances(la, lb, params.alpha_db_per_km)?;
            let r = optimize_intensities(RateMode::AsymptoticTruth, Coupling::Free, &geo, params, &opts.bounds, &opts.search)?;
            let s = r.best_settings;
            t.push(vec![la.into(), lb.into(), geo.x().into(), s.mu_a.into(), s.mu_b.into(), r.rate().into()]);
        }
    }
    Ok(vec![Series::new("fig10_optimal_intensities", t)])
}

/// One row of [`fixed_x_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedXPoint {
    pub l_bc_km: f64,
    pub l_ac_km: f64,
    pub result: OptimizationResult,
}

impl FixedXPoint {
    pub fn mu_ratio(&self) -> f64 {
        self.result.best_settings.mu_a / self.result.best_settings.mu_b
    }

    pub fn nu_ratio(&self) -> f64 {
        self.result.best_settings.nu_a / self.result.best_settings.nu_b
    }
}

/// Optimal (unconstrained) rates and intensities along `L_bc` at fixed `x`.
pub fn fixed_x_scan(
    x: f64,
    l_bc_km: &[f64],
    mode: RateMode,
    params: &SystemParams,
    opts: &ScenarioOptions,
) -> Result<Vec<FixedXPoint>> {
    l_bc_km
        .iter()
        .map(|&l| {
            let geo = ChannelGeometry::from_ratio(x, l, params.alpha_db_per_km)?;
            let result = optimize_intensities(mode, Coupling::Free, &geo, params, &opts.bounds, &opts.search)?;
            Ok(FixedXPoint { l_bc_km: l, l_ac_km: geo.l_ac_km(), result })
        })
        .collect()
}

/// Slope of `log10 rate` versus `L_bc` over positive-rate points with
/// `L_bc <= max_l_bc_km`.
pub fn log_rate_slope(points: &[FixedXPoint], max_l_bc_km: f64) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.l_bc_km <= max_l_bc_km && p.result.rate() > 0.0)
        .map(|p| (p.l_bc_km, p.result.rate().log10()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    fit_slope(&pts)
}

fn fig11(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let mut h: Vec<String> = ["x", "mode", "L_bc_km", "L_ac_km", "rate"].iter().map(|s| s.to_string()).collect();
    h.extend(SETTINGS_HEADER.iter().map(|s| s.to_string()));
    h.extend(["mu_ratio".to_string(), "nu_ratio".to_string()]);
    let mut t = Table::new(h);
    let mut fit = Table::new(["x", "mode", "log10_rate_slope_per_km", "R_est_slope_per_km"]);
    let max_l = grid(grids, "slope_max_l_bc_km")?.first().copied().unwrap_or(f64::INFINITY);
    for &x in grid(grids, "x")? {
        for mode in MODES {
            let pts = fixed_x_scan(x, grid(grids, "l_bc_km")?, mode, params, opts)?;
            for p in &pts {
                let mut row: Vec<Cell> =
                    vec![x.into(), mode.label().into(), p.l_bc_km.into(), p.l_ac_km.into(), p.result.rate().into()];
                row.extend(settings_cells(&p.result));
                let two = mode == RateMode::TwoDecoyBounds;
                row.push(p.mu_ratio().into());
                row.push(if two { p.nu_ratio() } else { f64::NAN }.into());
                t.push(row);
            }
            let est = estimated_slope(x, grid(grids, "l_bc_km")?, max_l, params, opts)?;
            fit.push(vec![x.into(), mode.label().into(), log_rate_slope(&pts, max_l).into(), est.into()]);
        }
    }
    Ok(vec![Series::new("fig11_scan", t), Series::new("fig11_fit", fit)])
}

/// Slope of `log10 R_est` versus `L_bc` at fixed `x`.
pub fn estimated_slope(x: f64, l_bc_km: &[f64], max_l_bc_km: f64, params: &SystemParams, opts: &ScenarioOptions) -> Result<f64> {
    let mut pts = Vec::new();
    for &l in l_bc_km.iter().filter(|&&l| l <= max_l_bc_km) {
        let geo = ChannelGeometry::from_ratio(x, l, params.alpha_db_per_km)?;
        let f = |v: &[f64]| Some(r_est(&geo, v[0], v[1], params));
        let (lo, hi) = opts.bounds.mu;
        let r = maximize(f, &[lo, lo], &[hi, hi], &opts.search)?;
        if r.value > 0.0 {
            pts.push((l, r.value.log10()));
        }
    }
    Ok(if pts.len() < 2 { f64::NAN } else { fit_slope(&pts) })
}

fn table4(params: &SystemParams, grids: &Grids, opts: &ScenarioOptions) -> Result<Vec<Series>> {
    let mut t = Table::new(comparison_header());
    for &x in grid(grids, "x")? {
        for mode in MODES {
            for &l in grid(grids, "l_bc_km")? {
                let c = asymmetric_compare(x, l, mode, params, &opts.bounds, &opts.search)?;
                let geo = ChannelGeometry::from_ratio(x, l, params.alpha_db_per_km)?;
                t.push(comparison_row(mode, &c, &geo));
            }
        }
    }
    Ok(vec![Series::new("table4", t)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_bisection_finds_threshold() {
        let c = positivity_cutoff(0.0, 1.0, 1e-6, false, |v| Ok(v < 0.3)).unwrap().unwrap();
        assert!((c - 0.3).abs() < 1e-6);
        let c = positivity_cutoff(1e-9, 1.0, 1e-4, true, |v| Ok(v < 2e-3)).unwrap().unwrap();
        assert!((c / 2e-3 - 1.0).abs() < 1e-2);
        assert_eq!(positivity_cutoff(0.0, 1.0, 1e-3, false, |_| Ok(true)).unwrap(), None);
        assert_eq!(positivity_cutoff(0.0, 1.0, 1e-3, false, |_| Ok(false)).unwrap(), Some(0.0));
        assert!(positivity_cutoff(1.0, 0.0, 1e-3, false, |_| Ok(true)).is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            assert!(!p.default_grids().is_empty());
        }
        assert!("fig4".parse::<Preset>().unwrap_err().contains("unknown preset"));
    }

    #[test]
    fn distance_conventions() {
        assert_eq!(DistanceConvention::Total.total_km(120.0), 120.0);
        assert_eq!(DistanceConvention::PerArm.total_km(120.0), 240.0);
        let g = DistanceConvention::PerArm.geometry(10.0, 0.2).unwrap();
        assert_eq!((g.l_ac_km(), g.l_bc_km()), (10.0, 10.0));
    }

    #[test]
    fn fig7_tolerates_background() {
        let p = Preset::Fig7.base_params();
        let c = background_cutoff(&p, 0.0, &ScenarioOptions::default()).unwrap().unwrap();
        assert!(c > 1e-4 && c < 1e-2, "{c}");
    }

    #[test]
    fn fixed_x_near_one_gives_equal_intensities() {
        let p = Preset::Fig11.base_params();
        let pts = fixed_x_scan(0.9, &[10.0], RateMode::AsymptoticTruth, &p, &ScenarioOptions::default()).unwrap();
        let s = pts[0].result.best_settings;
        assert!((s.mu_a / s.mu_b - 1.0).abs() < 0.15, "{s:?}");
    }

    #[test]
    fn rig_exceeds_est_only_through_background() {
        let p = Preset::Fig9.base_params();
        let rows = rig_vs_est_scan(&[10.0], &[10.0, 200.0], &p, &ScenarioOptions::default()).unwrap();
        assert!(rows[0].relative_gap() < 0.05, "{:?}", rows[0]);
        assert!(rows[1].r_est >= rows[1].r_rig);
    }
}
