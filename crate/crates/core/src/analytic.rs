//! Closed-form gains and error rates for the two-rotation misalignment model
//! (`U3 = I`, equal rotation magnitude in both channels), plus the
//! background-free estimated key rate for asymmetric channels.
//!
//! `e_d1` below is `sin^2` of the common rotation angle. The equivalent
//! total misalignment is `e_d = 2 e_d1` to second order, which is how
//! [`SystemParams`] values map onto these formulas (see
//! [`MisalignmentMode::reduced`](crate::params::MisalignmentMode::reduced)).

use crate::error::{Error, Result};
use crate::keyrate::binary_entropy;
use crate::numeric::bessel_i0;
use crate::params::{ChannelGeometry, SystemParams};

/// Relative direction of the two channel rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleSign {
    /// `theta1 * theta2 > 0`.
    Same,
    /// `theta1 * theta2 < 0`.
    Opposite,
}

impl AngleSign {
    pub fn from_same(same: bool) -> Self {
        if same {
            AngleSign::Same
        } else {
            AngleSign::Opposite
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            AngleSign::Same => AngleSign::Opposite,
            AngleSign::Opposite => AngleSign::Same,
        }
    }
}

/// Gains of the two Bell outcomes for one encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellGains {
    pub triplet: f64,
    pub singlet: f64,
}

impl BellGains {
    pub fn total(&self) -> f64 {
        self.triplet + self.singlet
    }
}

/// Single-photon-pair yield and phase error with perfect decoy estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonTruth {
    pub y11_z: f64,
    pub e11_x: f64,
}

/// `Y_Z^{1,1}` and `e_X^{1,1}` for the given channel, using `params.e_d`
/// as the misalignment. `Y_X^{1,1}` equals `Y_Z^{1,1}`.
pub fn y11_e11_true(geometry: &ChannelGeometry, params: &SystemParams) -> SinglePhotonTruth {
    let ta = geometry.t_a() * params.eta_d;
    let tb = geometry.t_b() * params.eta_d;
    let y0 = params.y0;
    let keep = (1.0 - y0) * (1.0 - y0);
    let y11 = keep * (4.0 * y0 * y0 * (1.0 - ta) * (1.0 - tb) + 2.0 * y0 * (ta + tb - 1.5 * ta * tb) + 0.5 * ta * tb);
    let e11 = if y11 > 0.0 { 0.5 - ta * tb * (1.0 - params.e_d).powi(2) * keep / (4.0 * y11) } else { 0.5 };
    SinglePhotonTruth { y11_z: y11, e11_x: e11 }
}

/// Phase-averaged HH gains. With `Opposite` the interference terms of
/// the two Bell outcomes trade places.
pub fn qz_hh_closed_form(gamma_a: f64, gamma_b: f64, e_d1: f64, y0: f64, sign: AngleSign) -> BellGains {
    let g = gamma_a * gamma_a + gamma_b * gamma_b;
    let beta = gamma_a * gamma_b;
    let k = 1.0 - y0;
    let pre = 2.0 * (-g / 2.0).exp() * k * k;
    let common = k * k * (-g / 2.0).exp()
        - k * (-g * (1.0 - e_d1) / 2.0).exp() * bessel_i0(e_d1 * beta)
        - k * (-g * e_d1 / 2.0).exp() * bessel_i0(beta - e_d1 * beta);
    let plus = pre * (bessel_i0(beta) + common);
    let minus = pre * (bessel_i0(beta - 2.0 * beta * e_d1) + common);
    match sign {
        AngleSign::Same => BellGains { triplet: plus, singlet: minus },
        AngleSign::Opposite => BellGains { triplet: minus, singlet: plus },
    }
}

/// Phase-averaged HV gains (Alice H, Bob V).
pub fn qz_hv_closed_form(gamma_a: f64, gamma_b: f64, e_d1: f64, y0: f64, sign: AngleSign) -> BellGains {
    let ga2 = gamma_a * gamma_a;
    let gb2 = gamma_b * gamma_b;
    let g = ga2 + gb2;
    let lambda = gamma_a * gamma_b * (e_d1 * (1.0 - e_d1)).max(0.0).sqrt();
    let w = ga2 + e_d1 * (gb2 - ga2);
    let k = 1.0 - y0;
    let pre = 2.0 * (-g / 2.0).exp() * k * k;
    let i0l = bessel_i0(lambda);
    let common = k * k * (-g / 2.0).exp() - k * (-w / 2.0).exp() * i0l - k * (-(g - w) / 2.0).exp() * i0l;
    let with_interference = pre * (bessel_i0(2.0 * lambda) + common);
    let without = pre * (1.0 + common);
    match sign {
        AngleSign::Same => BellGains { triplet: with_interference, singlet: without },
        AngleSign::Opposite => BellGains { triplet: without, singlet: with_interference },
    }
}

/// Z-basis gain and QBER from HH/HV totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStats {
    pub q_z: f64,
    pub e_z: f64,
}

/// `(e_d1, sign)` the closed forms use for `params`: the fixed reduced
/// angle if the parameters carry one, otherwise `e_d / 2` with equal signs.
pub fn closed_form_angle(params: &SystemParams) -> (f64, AngleSign) {
    match params.reduced_angle() {
        Some((e1, same)) => (e1, AngleSign::from_same(same)),
        None => (params.e_d / 2.0, AngleSign::Same),
    }
}

fn amplitudes(mu_a: f64, mu_b: f64, geometry: &ChannelGeometry, eta_d: f64) -> (f64, f64) {
    ((mu_a * geometry.t_a() * eta_d).sqrt(), (mu_b * geometry.t_b() * eta_d).sqrt())
}

/// Z-basis gain and QBER from the full Bessel forms.
pub fn qz_ez_closed_form(mu_a: f64, mu_b: f64, geometry: &ChannelGeometry, params: &SystemParams) -> Result<ZStats> {
    let (ga, gb) = amplitudes(mu_a, mu_b, geometry, params.eta_d);
    let (e1, sign) = closed_form_angle(params);
    let hh = qz_hh_closed_form(ga, gb, e1, params.y0, sign).total();
    let hv = qz_hv_closed_form(ga, gb, e1, params.y0, sign).total();
    let sum = hh + hv;
    if !(sum > 0.0) {
        return Err(Error::NoCoincidences);
    }
    Ok(ZStats { q_z: sum / 2.0, e_z: hh / sum })
}

/// Background-free second-order Z-basis gain and QBER in terms of `e_d`.
pub fn second_order_qz_ez(mu_a: f64, mu_b: f64, geometry: &ChannelGeometry, params: &SystemParams) -> ZStats {
    let (ga, gb) = amplitudes(mu_a, mu_b, geometry, params.eta_d);
    let g = ga * ga + gb * gb;
    let b2 = (ga * gb).powi(2);
    let mis = params.e_d * (1.0 - params.e_d / 2.0);
    let q_z = (b2 + mis * (g * g - 2.0 * b2)) / 2.0;
    let e_z = if q_z > 0.0 { g * g * mis / (4.0 * q_z) } else { 0.0 };
    ZStats { q_z, e_z }
}

/// Second-order `E_Z` written in terms of `x = t_a / t_b`.
pub fn second_order_ez_from_ratio(x: f64, mu_a: f64, mu_b: f64, e_d: f64) -> f64 {
    let m = 2.0 * e_d - e_d * e_d;
    let den = 2.0 * (2.0 * x * mu_a * mu_b + (mu_b * mu_b + x * x * mu_a * mu_a) * m);
    if den > 0.0 {
        (mu_b + x * mu_a).powi(2) * m / den
    } else {
        0.0
    }
}

/// Normalized background-free key rate `G(x, mu_a, mu_b)`; the rate is
/// `t_b^2 eta_d^2 G / 2`.
pub fn g_function(x: f64, mu_a: f64, mu_b: f64, params: &SystemParams) -> f64 {
    let e_d = params.e_d;
    let m = 2.0 * e_d - e_d * e_d;
    let e11 = e_d - e_d * e_d / 2.0;
    let e_z = second_order_ez_from_ratio(x, mu_a, mu_b, e_d).min(1.0);
    let signal = x * mu_a * mu_b * (-(mu_a + mu_b)).exp() * (1.0 - entropy(e11));
    let q = (2.0 * x * mu_a * mu_b + (mu_b * mu_b + x * x * mu_a * mu_a) * m) / 2.0;
    signal - q * params.f_e * entropy(e_z)
}

fn entropy(p: f64) -> f64 {
    binary_entropy(p.clamp(0.0, 1.0)).unwrap_or(0.0)
}

/// Estimated key rate ignoring background counts.
pub fn r_est(geometry: &ChannelGeometry, mu_a: f64, mu_b: f64, params: &SystemParams) -> f64 {
    let tb = geometry.t_b();
    tb * tb * params.eta_d * params.eta_d / 2.0 * g_function(geometry.x(), mu_a, mu_b, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dark_closed_forms_vanish() {
        for s in [AngleSign::Same, AngleSign::Opposite] {
            let hh = qz_hh_closed_form(0.0, 0.0, 0.01, 0.0, s);
            let hv = qz_hv_closed_form(0.0, 0.0, 0.01, 0.0, s);
            assert_eq!(hh.total(), 0.0);
            assert_eq!(hv.total(), 0.0);
        }
    }

    #[test]
    fn hh_second_order_limit() {
        let (ga, gb, e): (f64, f64, f64) = (0.01, 0.013, 0.02);
        let g = ga * ga + gb * gb;
        let b = ga * gb;
        let hh = qz_hh_closed_form(ga, gb, e, 0.0, AngleSign::Same);
        let t = g * g * e * (1.0 - e) / 2.0 + b * b * e * (1.0 - e);
        let s = g * g * e * (1.0 - e) / 2.0 - b * b * e * (1.0 - e);
        assert_relative_eq!(hh.triplet, t, max_relative = 1e-3);
        assert_relative_eq!(hh.singlet, s, max_relative = 1e-3);
        let opp = qz_hh_closed_form(ga, gb, e, 0.0, AngleSign::Opposite);
        assert_eq!(opp.triplet, hh.singlet);
        assert_eq!(opp.singlet, hh.triplet);
    }

    #[test]
    fn hv_second_order_limit() {
        let (ga, gb, e): (f64, f64, f64) = (0.012, 0.009, 0.03);
        let g = ga * ga + gb * gb;
        let lambda = ga * gb * (e * (1.0 - e)).sqrt();
        let w = ga * ga + e * (gb * gb - ga * ga);
        let hv = qz_hv_closed_form(ga, gb, e, 0.0, AngleSign::Same);
        assert_relative_eq!(hv.triplet, w * (g - w) / 2.0 + lambda * lambda, max_relative = 1e-3);
        assert_relative_eq!(hv.singlet, w * (g - w) / 2.0 - lambda * lambda, max_relative = 1e-3);
    }

    #[test]
    fn hv_without_misalignment_has_no_interference() {
        let hv = qz_hv_closed_form(0.2, 0.1, 0.0, 1e-4, AngleSign::Same);
        assert_relative_eq!(hv.triplet, hv.singlet, epsilon = 1e-16);
    }

    #[test]
    fn y11_e11_simple_limits() {
        let geo = ChannelGeometry::from_distances(12.0, 31.0, 0.2).unwrap();
        let p = SystemParams::table3().with_e_d(0.0).with_y0(0.0);
        let t = y11_e11_true(&geo, &p);
        assert_relative_eq!(t.y11_z, geo.t_a() * geo.t_b() * 0.145 * 0.145 / 2.0, max_relative = 1e-14);
        assert!(t.e11_x.abs() < 1e-15);
        let p = p.with_e_d(0.03);
        let t = y11_e11_true(&geo, &p);
        assert_relative_eq!(t.e11_x, 0.03 - 0.03 * 0.03 / 2.0, max_relative = 1e-12);
    }

    // Independent re-derivation: the single-photon pair of a lossy channel
    // pair with background clicks. Each photon is detected with prob t eta;
    // a BSM success needs exactly the right two detectors to click.
    #[test]
    fn y11_matches_click_counting() {
        let geo = ChannelGeometry::symmetric(50.0, 0.2).unwrap();
        let p = SystemParams::table3();
        let ea = geo.t_a() * p.eta_d;
        let eb = geo.t_b() * p.eta_d;
        let y0 = p.y0;
        // Probability that a given detector stays silent without signal.
        let q = 1.0 - y0;
        // Both photons arrive: Bell-state success for half the pairs,
        // and the other two detectors must stay dark.
        let both = ea * eb * 0.5 * q * q;
        // One photon arrives, or both arrive bunched on one detector (half
        // the time): one of two valid partners clicks from background.
        let one = (ea * (1.0 - eb) + eb * (1.0 - ea) + 0.5 * ea * eb) * 2.0 * y0 * q * q;
        // No photon: two of four detectors fire from background in one of the
        // four valid pairs, the remaining two stay dark.
        let none = (1.0 - ea) * (1.0 - eb) * 4.0 * y0 * y0 * q * q;
        let y11 = both + one + none;
        let t = y11_e11_true(&geo, &p);
        assert_relative_eq!(t.y11_z, y11, max_relative = 1e-12);
        // Errors: half of all background-assisted events are wrong; signal
        // pairs err with probability e_d.
        let correct_signal = both * (1.0 - p.e_d).powi(2);
        let e11 = 0.5 - correct_signal / (2.0 * y11);
        assert_relative_eq!(t.e11_x, e11, max_relative = 1e-12);
    }

    #[test]
    fn second_order_without_misalignment() {
        let geo = ChannelGeometry::symmetric(10.0, 0.2).unwrap();
        let p = SystemParams::table3().with_e_d(0.0);
        let s = second_order_qz_ez(0.4, 0.3, &geo, &p);
        let b2 = 0.4 * geo.t_a() * 0.145 * 0.3 * geo.t_b() * 0.145;
        assert_relative_eq!(s.q_z, b2 / 2.0, max_relative = 1e-14);
        assert_eq!(s.e_z, 0.0);
    }

    #[test]
    fn ratio_form_matches_amplitude_form() {
        let p = SystemParams::table3();
        let geo = ChannelGeometry::from_ratio(0.1, 15.0, 0.2).unwrap();
        let (ma, mb) = (0.6, 0.15);
        let s = second_order_qz_ez(ma, mb, &geo, &p);
        let tb = geo.t_b();
        let x = geo.x();
        let m = 2.0 * p.e_d - p.e_d * p.e_d;
        let q = tb * tb * p.eta_d * p.eta_d * (2.0 * x * ma * mb + (mb * mb + x * x * ma * ma) * m) / 4.0;
        assert_relative_eq!(s.q_z, q, max_relative = 1e-12);
        assert_relative_eq!(s.e_z, second_order_ez_from_ratio(x, ma, mb, p.e_d), max_relative = 1e-12);
    }

    #[test]
    fn g_without_misalignment() {
        let p = SystemParams::table3().with_e_d(0.0);
        for x in [0.1, 0.5, 2.0] {
            assert_relative_eq!(g_function(x, 0.7, 1.2, &p), x * 0.84 * (-1.9f64).exp(), max_relative = 1e-14);
        }
        assert_relative_eq!(g_function(0.2, 0.5, 0.8, &p) * 2.0, g_function(0.4, 0.5, 0.8, &p), max_relative = 1e-14);
    }

    #[test]
    fn r_est_scales_with_tb_squared() {
        let p = SystemParams::table3();
        let a = ChannelGeometry::from_transmittances(0.02, 0.2).unwrap();
        let b = ChannelGeometry::from_transmittances(0.04, 0.4).unwrap();
        assert_relative_eq!(r_est(&b, 0.6, 0.15, &p), 4.0 * r_est(&a, 0.6, 0.15, &p), max_relative = 1e-12);
    }

    #[test]
    fn no_light_is_an_error() {
        let geo = ChannelGeometry::symmetric(0.0, 0.2).unwrap();
        let p = SystemParams::table3().with_y0(0.0).reduced();
        assert!(matches!(qz_ez_closed_form(0.0, 0.0, &geo, &p), Err(Error::NoCoincidences)));
    }

    proptest! {
        #[test]
        fn closed_forms_are_party_symmetric(ga in 0.0f64..0.3, gb in 0.0f64..0.3, e in 0.0f64..0.2, y0 in 0.0f64..1e-3) {
            for s in [AngleSign::Same, AngleSign::Opposite] {
                let a = qz_hh_closed_form(ga, gb, e, y0, s);
                let b = qz_hh_closed_form(gb, ga, e, y0, s);
                prop_assert!((a.triplet - b.triplet).abs() < 1e-12 && (a.singlet - b.singlet).abs() < 1e-12);
                let a = qz_hv_closed_form(ga, gb, e, y0, s);
                let b = qz_hv_closed_form(gb, ga, e, y0, s);
                prop_assert!((a.triplet - b.triplet).abs() < 1e-12 && (a.singlet - b.singlet).abs() < 1e-12);
            }
        }

        #[test]
        fn totals_ignore_angle_sign(ga in 0.0f64..0.3, gb in 0.0f64..0.3, e in 0.0f64..0.2, y0 in 0.0f64..1e-3) {
            let d = qz_hh_closed_form(ga, gb, e, y0, AngleSign::Same).total()
                - qz_hh_closed_form(ga, gb, e, y0, AngleSign::Opposite).total();
            prop_assert!(d.abs() < 1e-15);
            let d = qz_hv_closed_form(ga, gb, e, y0, AngleSign::Same).total()
                - qz_hv_closed_form(ga, gb, e, y0, AngleSign::Opposite).total();
            prop_assert!(d.abs() < 1e-15);
        }

        #[test]
        fn gains_monotone(ga in 0.01f64..0.3, gb in 0.01f64..0.3, e in 0.0f64..0.2, y0 in 0.0f64..1e-3) {
            let base = qz_hh_closed_form(ga, gb, e, y0, AngleSign::Same).total()
                + qz_hv_closed_form(ga, gb, e, y0, AngleSign::Same).total();
            let more_y0 = qz_hh_closed_form(ga, gb, e, y0 * 1.5 + 1e-6, AngleSign::Same).total()
                + qz_hv_closed_form(ga, gb, e, y0 * 1.5 + 1e-6, AngleSign::Same).total();
            let more_a = qz_hh_closed_form(ga * 1.1, gb, e, y0, AngleSign::Same).total()
                + qz_hv_closed_form(ga * 1.1, gb, e, y0, AngleSign::Same).total();
            prop_assert!(more_y0 >= base - 1e-15);
            prop_assert!(more_a >= base - 1e-15);
        }

        #[test]
        fn qber_within_half(mu_a in 0.01f64..1.5, mu_b in 0.01f64..1.5, e_d in 0.0f64..0.5, l in 0.0f64..100.0) {
            let geo = ChannelGeometry::symmetric(l, 0.2).unwrap();
            let p = SystemParams::table3().with_e_d(e_d).reduced();
            let z = qz_ez_closed_form(mu_a, mu_b, &geo, &p).unwrap();
            prop_assert!(z.e_z >= 0.0 && z.e_z <= 0.5 + 1e-12);
        }
    }
}
