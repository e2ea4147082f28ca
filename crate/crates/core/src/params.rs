//! Physical and numerical parameters, channel geometry and intensity settings.

use std::fmt;

use crate::error::{Error, Result};

/// Sender identity. Alice owns channel `ac`, Bob owns channel `bc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Alice => f.write_str("Alice"),
            Party::Bob => f.write_str("Bob"),
        }
    }
}

/// Fiber transmittance `10^(-alpha * L / 10)`.
pub fn transmittance_from_distance(l_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    if !(l_km >= 0.0) || !l_km.is_finite() {
        return Err(Error::invalid("l_km", format!("length must be finite and >= 0, got {l_km}")));
    }
    if !(alpha_db_per_km > 0.0) || !alpha_db_per_km.is_finite() {
        return Err(Error::invalid("alpha_db_per_km", format!("attenuation must be finite and > 0, got {alpha_db_per_km}")));
    }
    Ok(10f64.powf(-alpha_db_per_km * l_km / 10.0))
}

/// Channel asymmetry `x = t_a / t_b`.
pub fn channel_ratio(t_a: f64, t_b: f64) -> Result<f64> {
    check_transmittance("t_a", t_a)?;
    check_transmittance("t_b", t_b)?;
    Ok(t_a / t_b)
}

fn check_transmittance(name: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("transmittance must lie in (0, 1], got {t}")))
    }
}

/// How the three polarization rotation angles are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MisalignmentMode {
    /// Deterministic rotation angles (radians) for Alice's channel, Bob's
    /// channel and the measurement-side PBS arm.
    FixedAngles { theta1: f64, theta2: f64, theta3: f64 },
    /// Each angle drawn from `N(0, arcsin(sqrt(e_k)))`.
    GaussianMC,
}

impl MisalignmentMode {
    /// Two-rotation reduction: `theta1 = theta2 = arcsin(sqrt(e_d / 2))`,
    /// no measurement-side rotation. Produces the single-angle error
    /// `e_d1 = e_d / 2` used by the closed forms.
    pub fn reduced(e_d: f64) -> Self {
        let theta = (e_d / 2.0).max(0.0).sqrt().asin();
        MisalignmentMode::FixedAngles { theta1: theta, theta2: theta, theta3: 0.0 }
    }
}

/// Fractions of the total misalignment assigned to `U1`, `U2`, `U3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisalignmentSplit {
    pub alice: f64,
    pub bob: f64,
    pub measurement: f64,
}

impl Default for MisalignmentSplit {
    fn default() -> Self {
        MisalignmentSplit { alice: 0.475, bob: 0.475, measurement: 0.05 }
    }
}

impl MisalignmentSplit {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("e_split.alice", self.alice), ("e_split.bob", self.bob), ("e_split.measurement", self.measurement)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("fraction must lie in [0, 1], got {v}")));
            }
        }
        let sum = self.alice + self.bob + self.measurement;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("e_split", format!("fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// How the asymptotic rate obtains the single-photon phase error under
/// mode mismatch, for which no closed form exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum E11Model {
    /// Closed-form value shifted by the engine's single-photon X-basis
    /// error increase over the matched-mode case.
    EngineShift,
    /// Upper bound from simulated decoy data with signal 0.3, decoy `nu`
    /// and vacuum as the weakest state.
    DecoyExtrapolation { nu: f64 },
}

/// Detector, channel and error parameters plus numerical controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Detector efficiency.
    pub eta_d: f64,
    /// Background (dark + stray) click probability per detector per pulse.
    pub y0: f64,
    /// Error-correction inefficiency.
    pub f_e: f64,
    pub alpha_db_per_km: f64,
    /// Total polarization misalignment `e1 + e2 + e3`.
    pub e_d: f64,
    pub e_split: MisalignmentSplit,
    /// Total mode mismatch.
    pub e_m: f64,
    pub misalignment: MisalignmentMode,
    pub e11_model: E11Model,
    pub quadrature_points: usize,
    pub mc_samples: usize,
    pub rng_seed: u64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams::table3()
    }
}

impl SystemParams {
    pub const DEFAULT_QUADRATURE_POINTS: usize = 128;
    pub const DEFAULT_MC_SAMPLES: usize = 2000;
    pub const DEFAULT_SEED: u64 = 1;

    /// Reference parameters: eta_d = 14.5 %, e_d = 1.5 %, Y0 = 6.02e-6,
    /// f_e = 1.16, e_m = 2 %, 0.2 dB/km fiber.
    pub fn table3() -> Self {
        SystemParams {
            eta_d: 0.145,
            y0: 6.02e-6,
            f_e: 1.16,
            alpha_db_per_km: 0.2,
            e_d: 0.015,
            e_split: MisalignmentSplit::default(),
            e_m: 0.02,
            misalignment: MisalignmentMode::GaussianMC,
            e11_model: E11Model::EngineShift,
            quadrature_points: Self::DEFAULT_QUADRATURE_POINTS,
            mc_samples: Self::DEFAULT_MC_SAMPLES,
            rng_seed: Self::DEFAULT_SEED,
        }
    }

    /// The analytic-model assumptions: fixed two-rotation misalignment
    /// derived from `e_d` and no mode mismatch.
    pub fn reduced(mut self) -> Self {
        self.misalignment = MisalignmentMode::reduced(self.e_d);
        self.e_m = 0.0;
        self
    }

    pub fn with_e_d(mut self, e_d: f64) -> Self {
        self.e_d = e_d;
        if let MisalignmentMode::FixedAngles { .. } = self.misalignment {
            self.misalignment = MisalignmentMode::reduced(e_d);
        }
        self
    }

    pub fn with_e_m(mut self, e_m: f64) -> Self {
        self.e_m = e_m;
        self
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    /// Per-operator misalignment errors `(e1, e2, e3)`.
    pub fn e_components(&self) -> (f64, f64, f64) {
        (self.e_split.alice * self.e_d, self.e_split.bob * self.e_d, self.e_split.measurement * self.e_d)
    }

    /// For fixed angles of the form `(t, ±t, 0)` returns `(sin^2 t, same_sign)`,
    /// the parameterization understood by the closed forms.
    pub fn reduced_angle(&self) -> Option<(f64, bool)> {
        match self.misalignment {
            MisalignmentMode::FixedAngles { theta1, theta2, theta3 } if theta3 == 0.0 && theta1.abs() == theta2.abs() => {
                let same = theta1 * theta2 >= 0.0;
                Some((theta1.sin().powi(2), same))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_d", self.eta_d), ("y0", self.y0), ("e_d", self.e_d), ("e_m", self.e_m)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(self.f_e >= 1.0) || !self.f_e.is_finite() {
            return Err(Error::invalid("f_e", format!("must be finite and >= 1, got {}", self.f_e)));
        }
        if !(self.alpha_db_per_km > 0.0) || !self.alpha_db_per_km.is_finite() {
            return Err(Error::invalid("alpha_db_per_km", format!("must be finite and > 0, got {}", self.alpha_db_per_km)));
        }
        self.e_split.validate()?;
        if let MisalignmentMode::FixedAngles { theta1, theta2, theta3 } = self.misalignment {
            for (name, t) in [("theta1", theta1), ("theta2", theta2), ("theta3", theta3)] {
                if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&t) {
                    return Err(Error::invalid(name, format!("angle must lie in [-pi, pi], got {t}")));
                }
            }
        }
        if self.quadrature_points < 16 || self.quadrature_points % 2 != 0 {
            return Err(Error::invalid("quadrature_points", format!("must be even and >= 16, got {}", self.quadrature_points)));
        }
        if let E11Model::DecoyExtrapolation { nu } = self.e11_model {
            if !(nu > 0.0 && nu < 0.3) {
                return Err(Error::invalid("e11_model.nu", format!("decoy must lie in (0, 0.3), got {nu}")));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be >= 1"));
        }
        Ok(())
    }
}

/// Distances from each sender to the relay and the derived transmittances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    l_ac_km: f64,
    l_bc_km: f64,
    t_a: f64,
    t_b: f64,
}

impl ChannelGeometry {
    pub fn from_distances(l_ac_km: f64, l_bc_km: f64, alpha_db_per_km: f64) -> Result<Self> {
        let t_a = transmittance_from_distance(l_ac_km, alpha_db_per_km)?;
        let t_b = transmittance_from_distance(l_bc_km, alpha_db_per_km)?;
        Ok(ChannelGeometry { l_ac_km, l_bc_km, t_a, t_b })
    }

    /// Both arms of length `total / 2`.
    pub fn symmetric(total_km: f64, alpha_db_per_km: f64) -> Result<Self> {
        Self::from_distances(total_km / 2.0, total_km / 2.0, alpha_db_per_km)
    }

    /// Geometry with the given Bob arm and `t_a = x * t_b`.
    pub fn from_ratio(x: f64, l_bc_km: f64, alpha_db_per_km: f64) -> Result<Self> {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::invalid("x", format!("ratio must lie in (0, 1] for a longer Alice arm, got {x}")));
        }
        let l_ac = l_bc_km - 10.0 * x.log10() / alpha_db_per_km;
        Self::from_distances(l_ac, l_bc_km, alpha_db_per_km)
    }

    /// Geometry defined directly by transmittances. Lengths are reported
    /// as NaN when `alpha` is not known.
    pub fn from_transmittances(t_a: f64, t_b: f64) -> Result<Self> {
        check_transmittance("t_a", t_a)?;
        check_transmittance("t_b", t_b)?;
        Ok(ChannelGeometry { l_ac_km: f64::NAN, l_bc_km: f64::NAN, t_a, t_b })
    }

    pub fn l_ac_km(&self) -> f64 {
        self.l_ac_km
    }

    pub fn l_bc_km(&self) -> f64 {
        self.l_bc_km
    }

    pub fn t_a(&self) -> f64 {
        self.t_a
    }

    pub fn t_b(&self) -> f64 {
        self.t_b
    }

    pub fn x(&self) -> f64 {
        self.t_a / self.t_b
    }

    /// Same geometry with the roles of Alice and Bob exchanged.
    pub fn swapped(&self) -> Self {
        ChannelGeometry { l_ac_km: self.l_bc_km, l_bc_km: self.l_ac_km, t_a: self.t_b, t_b: self.t_a }
    }
}

/// Signal (`mu`) and decoy (`nu`, `omega`) mean photon numbers per party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySettings {
    pub mu_a: f64,
    pub nu_a: f64,
    pub omega_a: f64,
    pub mu_b: f64,
    pub nu_b: f64,
    pub omega_b: f64,
}

impl IntensitySettings {
    pub fn new(alice: (f64, f64, f64), bob: (f64, f64, f64)) -> Self {
        IntensitySettings { mu_a: alice.0, nu_a: alice.1, omega_a: alice.2, mu_b: bob.0, nu_b: bob.1, omega_b: bob.2 }
    }

    pub fn symmetric(mu: f64, nu: f64, omega: f64) -> Self {
        Self::new((mu, nu, omega), (mu, nu, omega))
    }

    pub fn party(&self, party: Party) -> (f64, f64, f64) {
        match party {
            Party::Alice => (self.mu_a, self.nu_a, self.omega_a),
            Party::Bob => (self.mu_b, self.nu_b, self.omega_b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_intensities(self)
    }
}

/// Accepts iff `mu > nu > omega >= 0` holds for both parties.
pub fn validate_intensities(s: &IntensitySettings) -> Result<()> {
    for party in [Party::Alice, Party::Bob] {
        let (mu, nu, omega) = s.party(party);
        for (name, v) in [("mu", mu), ("nu", nu), ("omega", omega)] {
            if !v.is_finite() {
                return Err(Error::IntensityOrder { party, detail: format!("{name} = {v} is not finite") });
            }
        }
        if !(omega >= 0.0) {
            return Err(Error::IntensityOrder { party, detail: format!("omega = {omega} must be >= 0") });
        }
        if !(nu > omega) {
            return Err(Error::IntensityOrder { party, detail: format!("nu = {nu} must exceed omega = {omega}") });
        }
        if !(mu > nu) {
            return Err(Error::IntensityOrder { party, detail: format!("mu = {mu} must exceed nu = {nu}") });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn transmittance_examples() {
        assert_eq!(transmittance_from_distance(0.0, 0.2).unwrap(), 1.0);
        assert_relative_eq!(transmittance_from_distance(50.0, 0.2).unwrap(), 0.1, max_relative = 1e-14);
        assert_relative_eq!(transmittance_from_distance(100.0, 0.2).unwrap(), 0.01, max_relative = 1e-14);
        assert!(transmittance_from_distance(-1.0, 0.2).is_err());
        assert!(transmittance_from_distance(1.0, -0.2).is_err());
        assert!(transmittance_from_distance(1.0, 0.0).is_err());
    }

    #[test]
    fn channel_ratio_examples() {
        assert_eq!(channel_ratio(0.3, 0.3).unwrap(), 1.0);
        assert!(channel_ratio(0.3, 0.0).is_err());
        // Field deployments quoted as examples of asymmetric links.
        let calgary = ChannelGeometry::from_ratio(0.752, 0.0, 0.2).unwrap();
        assert_relative_eq!(calgary.x(), 0.752, max_relative = 1e-12);
        let tokyo = ChannelGeometry::from_ratio(0.017, 1.0, 0.2).unwrap();
        assert_relative_eq!(tokyo.x(), 0.017, max_relative = 1e-12);
        assert!((tokyo.l_ac_km() - tokyo.l_bc_km() - 88.5).abs() < 0.1);
    }

    #[test]
    fn intensity_validation() {
        assert!(validate_intensities(&IntensitySettings::symmetric(0.3, 0.1, 5e-4)).is_ok());
        assert!(validate_intensities(&IntensitySettings::symmetric(0.3, 0.1, 0.0)).is_ok());
        let err = validate_intensities(&IntensitySettings::symmetric(0.1, 0.1, 0.0)).unwrap_err();
        match err {
            Error::IntensityOrder { party, detail } => {
                assert_eq!(party, Party::Alice);
                assert!(detail.contains("mu") && detail.contains("nu"), "{detail}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let bob_bad = IntensitySettings::new((0.3, 0.1, 0.0), (0.3, 0.05, 0.05));
        match validate_intensities(&bob_bad).unwrap_err() {
            Error::IntensityOrder { party, detail } => {
                assert_eq!(party, Party::Bob);
                assert!(detail.contains("omega"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(validate_intensities(&IntensitySettings::symmetric(0.3, 0.1, -1e-3)).is_err());
    }

    #[test]
    fn table3_is_valid_and_split_sums() {
        let p = SystemParams::table3();
        p.validate().unwrap();
        let (e1, e2, e3) = p.e_components();
        assert!((e1 + e2 + e3 - p.e_d).abs() < 1e-12);
        assert_relative_eq!(e1, 0.475 * 0.015);
        assert_relative_eq!(e3, 0.05 * 0.015);
    }

    #[test]
    fn param_validation_rejects_bad_values() {
        let base = SystemParams::table3();
        let cases: Vec<(&str, SystemParams)> = vec![
            ("eta_d", SystemParams { eta_d: 1.5, ..base.clone() }),
            ("y0", SystemParams { y0: -1e-6, ..base.clone() }),
            ("f_e", SystemParams { f_e: 0.9, ..base.clone() }),
            ("alpha_db_per_km", SystemParams { alpha_db_per_km: 0.0, ..base.clone() }),
            ("quadrature_points", SystemParams { quadrature_points: 15, ..base.clone() }),
            ("quadrature_points", SystemParams { quadrature_points: 17, ..base.clone() }),
            ("mc_samples", SystemParams { mc_samples: 0, ..base.clone() }),
            ("e_split", SystemParams { e_split: MisalignmentSplit { alice: 0.5, bob: 0.5, measurement: 0.1 }, ..base.clone() }),
        ];
        for (name, p) in cases {
            match p.validate() {
                Err(Error::InvalidParameter { name: got, .. }) => assert_eq!(got, name),
                other => panic!("{name}: expected InvalidParameter, got {other:?}"),
            }
        }
    }

    #[test]
    fn reduced_angle_recovers_half_misalignment() {
        let p = SystemParams::table3().reduced();
        let (e1, same) = p.reduced_angle().unwrap();
        assert!(same);
        assert_relative_eq!(e1, 0.0075, max_relative = 1e-12);
        assert_eq!(p.e_m, 0.0);
        assert!(SystemParams::table3().reduced_angle().is_none());
    }

    proptest! {
        #[test]
        fn transmittance_is_exponential(a in 0.0f64..200.0, b in 0.0f64..200.0, alpha in 0.01f64..1.0) {
            let ta = transmittance_from_distance(a, alpha).unwrap();
            let tb = transmittance_from_distance(b, alpha).unwrap();
            let tab = transmittance_from_distance(a + b, alpha).unwrap();
            prop_assert!((tab - ta * tb).abs() <= 1e-12);
        }

        #[test]
        fn transmittance_strictly_decreasing(a in 0.0f64..200.0, d in 0.01f64..50.0) {
            prop_assert!(transmittance_from_distance(a + d, 0.2).unwrap() < transmittance_from_distance(a, 0.2).unwrap());
        }

        #[test]
        fn ratio_is_antisymmetric(ta in 1e-6f64..=1.0, tb in 1e-6f64..=1.0) {
            let r = channel_ratio(ta, tb).unwrap() * channel_ratio(tb, ta).unwrap();
            prop_assert!((r - 1.0).abs() <= 1e-12);
        }
    }
}
