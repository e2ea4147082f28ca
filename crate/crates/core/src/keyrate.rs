//! Secret key rate per pulse pair:
//! `R = P11 Y11_Z [1 - H2(e11_X)] - Q_Z f_e H2(E_Z)`.

use crate::analytic::{qz_ez_closed_form, y11_e11_true, ZStats};
use crate::decoy::{build_gain_table_with, DecoyBounds, GainTable, Level};
use crate::engine::{Basis, Engine};
use crate::error::{Error, Result};
use crate::params::{validate_intensities, ChannelGeometry, E11Model, IntensitySettings, SystemParams};

/// Binary Shannon entropy in bits, `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid("x", format!("binary entropy needs a probability, got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

fn h2(x: f64) -> f64 {
    binary_entropy(x.clamp(0.0, 1.0)).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Single-photon terms known exactly (infinitely many decoys).
    AsymptoticTruth,
    /// Single-photon terms from the two-decoy bounds.
    TwoDecoyBounds,
}

impl RateMode {
    pub fn label(self) -> &'static str {
        match self {
            RateMode::AsymptoticTruth => "asymptotic",
            RateMode::TwoDecoyBounds => "two-decoy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    /// `max(0, raw_rate)`.
    pub rate: f64,
    pub raw_rate: f64,
    /// `P11 Y11_Z [1 - H2(e11_X)]`.
    pub single_photon_term: f64,
    /// `Q_Z f_e H2(E_Z)`.
    pub ec_term: f64,
    pub p11_z: f64,
    pub y11_z: f64,
    pub e11_x: f64,
    pub q_z: f64,
    pub e_z: f64,
    pub mode: RateMode,
    pub mu_a: f64,
    pub mu_b: f64,
    /// Full settings in two-decoy mode.
    pub settings: Option<IntensitySettings>,
    pub l_ac_km: f64,
    pub l_bc_km: f64,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    mode: RateMode,
    mu_a: f64,
    mu_b: f64,
    y11_z: f64,
    e11_x: f64,
    z: ZStats,
    f_e: f64,
    geometry: &ChannelGeometry,
    settings: Option<IntensitySettings>,
) -> KeyRateReport {
    let p11_z = mu_a * mu_b * (-(mu_a + mu_b)).exp();
    let single_photon_term = p11_z * y11_z * (1.0 - h2(e11_x.min(0.5)));
    let ec_term = z.q_z * f_e * h2(z.e_z);
    let raw_rate = single_photon_term - ec_term;
    KeyRateReport {
        rate: raw_rate.max(0.0),
        raw_rate,
        single_photon_term,
        ec_term,
        p11_z,
        y11_z,
        e11_x,
        q_z: z.q_z,
        e_z: z.e_z,
        mode,
        mu_a,
        mu_b,
        settings,
        l_ac_km: geometry.l_ac_km(),
        l_bc_km: geometry.l_bc_km(),
    }
}

/// Whether the Z-basis statistics can come from the closed forms.
fn closed_form_applies(params: &SystemParams) -> bool {
    params.reduced_angle().is_some() && params.e_m == 0.0
}

/// Asymptotic key rate evaluator for one channel geometry. The
/// single-photon terms are computed once; under mode mismatch `e11`
/// follows `params.e11_model`.
#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    geometry: ChannelGeometry,
    params: SystemParams,
    engine: Option<Engine>,
    y11_z: f64,
    e11_x: f64,
}

impl AsymptoticModel {
    pub fn new(geometry: &ChannelGeometry, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let truth = y11_e11_true(geometry, params);
        let mut e11_x = truth.e11_x;
        let engine = if closed_form_applies(params) { None } else { Some(Engine::new(params)?) };
        match params.e11_model {
            E11Model::EngineShift if params.e_m > 0.0 => {
                let with = engine.as_ref().expect("engine present when e_m > 0");
                let without = Engine::new(&params.clone().with_e_m(0.0))?;
                let d = with.single_photon(Basis::X, geometry).error_rate - without.single_photon(Basis::X, geometry).error_rate;
                e11_x = (e11_x + d).min(0.5);
            }
            E11Model::EngineShift => {}
            E11Model::DecoyExtrapolation { nu } => {
                e11_x = e11_decoy_extrapolated(geometry, params, nu)?.min(0.5);
            }
        }
        Ok(AsymptoticModel { geometry: *geometry, params: params.clone(), engine, y11_z: truth.y11_z, e11_x })
    }

    pub fn y11_z(&self) -> f64 {
        self.y11_z
    }

    pub fn e11_x(&self) -> f64 {
        self.e11_x
    }

    pub fn geometry(&self) -> &ChannelGeometry {
        &self.geometry
    }

    pub fn z_stats(&self, mu_a: f64, mu_b: f64) -> Result<ZStats> {
        match &self.engine {
            None => qz_ez_closed_form(mu_a, mu_b, &self.geometry, &self.params),
            Some(engine) => {
                let s = engine.gain_and_qber(Basis::Z, mu_a, mu_b, &self.geometry);
                if !(s.gain > 0.0) {
                    return Err(Error::NoCoincidences);
                }
                Ok(ZStats { q_z: s.gain, e_z: s.qber })
            }
        }
    }

    pub fn rate(&self, mu_a: f64, mu_b: f64) -> Result<KeyRateReport> {
        if !(mu_a >= 0.0 && mu_b >= 0.0) {
            return Err(Error::invalid("mu", format!("intensities must be >= 0, got ({mu_a}, {mu_b})")));
        }
        let z = self.z_stats(mu_a, mu_b)?;
        let r = assemble(RateMode::AsymptoticTruth, mu_a, mu_b, self.y11_z, self.e11_x, z, self.params.f_e, &self.geometry, None);
        check_finite(&r)?;
        Ok(r)
    }
}

fn check_finite(r: &KeyRateReport) -> Result<()> {
    if r.raw_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "key rate at mu = ({}, {}), L = ({}, {}) km: single-photon term {}, EC term {}",
            r.mu_a, r.mu_b, r.l_ac_km, r.l_bc_km, r.single_photon_term, r.ec_term
        )))
    }
}

/// Asymptotic key rate at signal intensities `mu_a`, `mu_b`.
pub fn asymptotic_rate(mu_a: f64, mu_b: f64, geometry: &ChannelGeometry, params: &SystemParams) -> Result<KeyRateReport> {
    AsymptoticModel::new(geometry, params)?.rate(mu_a, mu_b)
}

/// Key rate from a gain table, measured or simulated. This is the entry
/// point for tables that already include statistical corrections.
pub fn rate_from_table(table: &GainTable, geometry: &ChannelGeometry, params: &SystemParams) -> Result<KeyRateReport> {
    let s = *table.settings();
    let bounds = DecoyBounds::from_table(table)?;
    let signal = table.entry(Basis::Z, Level::Mu, Level::Mu);
    let z = ZStats { q_z: signal.gain, e_z: signal.qber() };
    let r = assemble(
        RateMode::TwoDecoyBounds,
        s.mu_a,
        s.mu_b,
        bounds.y11_z_lower,
        bounds.e11_x_upper,
        z,
        params.f_e,
        geometry,
        Some(s),
    );
    check_finite(&r)?;
    Ok(r)
}

/// Two-decoy key rate with gains simulated by the interference engine.
pub fn two_decoy_rate(settings: &IntensitySettings, geometry: &ChannelGeometry, params: &SystemParams) -> Result<KeyRateReport> {
    validate_intensities(settings)?;
    let engine = Engine::new(params)?;
    two_decoy_rate_with(&engine, settings, geometry, params)
}

/// As [`two_decoy_rate`], reusing an engine built from `params`.
pub fn two_decoy_rate_with(
    engine: &Engine,
    settings: &IntensitySettings,
    geometry: &ChannelGeometry,
    params: &SystemParams,
) -> Result<KeyRateReport> {
    let table = build_gain_table_with(engine, settings, geometry)?;
    rate_from_table(&table, geometry, params)
}

/// `e_X^{1,1}` read off the decoy bounds with vanishing `omega` and a
/// small `nu`, where the bound converges to the true value. An
/// alternative to the engine's small-intensity limit used by
/// [`AsymptoticModel`].
pub fn e11_decoy_extrapolated(geometry: &ChannelGeometry, params: &SystemParams, nu: f64) -> Result<f64> {
    let settings = IntensitySettings::symmetric(0.3, nu, 0.0);
    let table = build_gain_table_with(&Engine::new(params)?, &settings, geometry)?;
    Ok(DecoyBounds::from_table(&table)?.e11_x_upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let x: f64 = 0.11;
        let direct = -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
        assert_eq!(binary_entropy(0.11).unwrap(), direct);
        assert!((binary_entropy(0.11).unwrap() - 0.4999).abs() < 1e-3);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn ideal_system_rate() {
        let geo = ChannelGeometry::symmetric(0.0, 0.2).unwrap();
        let p = SystemParams::table3().with_e_d(0.0).with_y0(0.0).with_e_m(0.0).reduced();
        let r = asymptotic_rate(1.0, 1.0, &geo, &p).unwrap();
        assert_eq!(r.e_z, 0.0);
        assert_eq!(r.ec_term, 0.0);
        assert_relative_eq!(r.rate, (-2.0f64).exp() * 0.145 * 0.145 / 2.0, max_relative = 1e-14);
        assert_relative_eq!(r.p11_z, (-2.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn rate_is_floored() {
        let geo = ChannelGeometry::symmetric(0.0, 0.2).unwrap();
        let p = SystemParams::table3().with_e_d(0.2).reduced();
        let r = asymptotic_rate(0.5, 0.5, &geo, &p).unwrap();
        assert!(r.raw_rate < 0.0);
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn two_decoy_below_asymptotic() {
        let geo = ChannelGeometry::symmetric(50.0, 0.2).unwrap();
        let p = SystemParams::table3().reduced();
        let s = IntensitySettings::symmetric(0.3, 0.1, 5e-4);
        let two = two_decoy_rate(&s, &geo, &p).unwrap();
        let asym = asymptotic_rate(0.3, 0.3, &geo, &p).unwrap();
        assert!(two.rate > 0.0);
        assert!(two.rate <= asym.rate + 1e-12);
        assert_relative_eq!(two.q_z, asym.q_z, max_relative = 1e-9);
    }

    #[test]
    fn two_decoy_rejects_degenerate() {
        let geo = ChannelGeometry::symmetric(10.0, 0.2).unwrap();
        let p = SystemParams::table3().reduced();
        let s = IntensitySettings::symmetric(0.3, 0.1, 0.1);
        assert!(two_decoy_rate(&s, &geo, &p).is_err());
    }

    #[test]
    fn mode_mismatch_raises_e11() {
        let geo = ChannelGeometry::symmetric(0.0, 0.2).unwrap();
        let base = SystemParams::table3().with_e_d(0.0).reduced();
        let m = AsymptoticModel::new(&geo, &base.clone().with_e_m(0.4)).unwrap();
        let m0 = AsymptoticModel::new(&geo, &base).unwrap();
        assert!((m.e11_x() - m0.e11_x() - 0.2).abs() < 1e-3, "{}", m.e11_x());
    }

    #[test]
    fn e11_paths_agree() {
        let geo = ChannelGeometry::symmetric(20.0, 0.2).unwrap();
        for e_m in [0.1, 0.5] {
            let p = SystemParams::table3().with_e_d(0.0).reduced().with_e_m(e_m);
            let a = AsymptoticModel::new(&geo, &p).unwrap().e11_x();
            let b = e11_decoy_extrapolated(&geo, &p, 1e-3).unwrap();
            assert!((a - b).abs() < 1e-2, "e_m = {e_m}: {a} vs {b}");
        }
    }
}
