//! Numeric Bell-state-measurement model for two phase-randomized weak
//! coherent pulses.
//!
//! Alice's and Bob's Jones vectors are rotated by their channel unitaries,
//! combined on a 50:50 beam splitter (`c = (a - b)/sqrt2`, `d = (a + b)/sqrt2`),
//! the `c` arm is rotated by the measurement-side unitary, and each arm is
//! split by a PBS onto two threshold detectors (`ch, cv, dh, dv`). All
//! amplitudes are real, so each detector sees a mean photon number of the form
//! `mean + cross * cos(phi)`, with `phi` the relative phase of the two pulses.
//! The phase is averaged with an equally spaced trapezoid rule and, in Monte
//! Carlo mode, the rotation angles are averaged over Gaussian draws.
//!
//! Mode mismatch `e_m` splits Bob's pulse into a matched part (amplitude
//! `sqrt(1 - e_m)`) that interferes with Alice's and an orthogonal part that
//! reaches the same detectors without a cross term.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, periodic_cos_rule};
use crate::params::{ChannelGeometry, MisalignmentMode, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    /// Rectilinear: bit 0 = H, bit 1 = V.
    Z,
    /// Diagonal: bit 0 = +45°, bit 1 = -45°.
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn label(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingPair {
    pub basis: Basis,
    pub alice_bit: u8,
    pub bob_bit: u8,
}

impl EncodingPair {
    pub const fn new(basis: Basis, alice_bit: u8, bob_bit: u8) -> Self {
        EncodingPair { basis, alice_bit, bob_bit }
    }

    /// The four encodings of a basis.
    pub fn all(basis: Basis) -> [EncodingPair; 4] {
        [
            EncodingPair::new(basis, 0, 0),
            EncodingPair::new(basis, 0, 1),
            EncodingPair::new(basis, 1, 0),
            EncodingPair::new(basis, 1, 1),
        ]
    }

    fn jones(basis: Basis, bit: u8) -> [f64; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match (basis, bit) {
            (Basis::Z, 0) => [1.0, 0.0],
            (Basis::Z, _) => [0.0, 1.0],
            (Basis::X, 0) => [r, r],
            (Basis::X, _) => [r, -r],
        }
    }

    /// Which Bell outcome counts as a bit error after sifting.
    ///
    /// Z: equal bits are errors for either outcome (Bob always flips).
    /// X: `psi+` with different bits, or `psi-` with equal bits.
    pub fn error_flags(&self) -> (bool, bool) {
        let equal = self.alice_bit == self.bob_bit;
        match self.basis {
            Basis::Z => (equal, equal),
            Basis::X => (!equal, equal),
        }
    }
}

/// Rotation angles of `U1` (Alice's channel), `U2` (Bob's channel) and
/// `U3` (measurement-side PBS arm), in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotationAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl RotationAngles {
    pub const fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        RotationAngles { theta1, theta2, theta3 }
    }

    /// Exchanges the two channel rotations.
    pub fn swapped(&self) -> Self {
        RotationAngles { theta1: self.theta2, theta2: self.theta1, theta3: self.theta3 }
    }
}

fn rotate(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Mean photon number reaching each detector at a fixed relative phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorIntensities {
    pub i_ch: f64,
    pub i_cv: f64,
    pub i_dh: f64,
    pub i_dv: f64,
}

impl DetectorIntensities {
    pub fn total(&self) -> f64 {
        self.i_ch + self.i_cv + self.i_dh + self.i_dv
    }
}

/// Phase dependence of the four detector intensities, ordered `ch, cv, dh, dv`:
/// `I_k(phi) = mean[k] + cross[k] * cos(phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorProfile {
    pub mean: [f64; 4],
    pub cross: [f64; 4],
}

impl DetectorProfile {
    pub fn at(&self, phi: f64) -> DetectorIntensities {
        let c = phi.cos();
        DetectorIntensities {
            i_ch: self.mean[0] + self.cross[0] * c,
            i_cv: self.mean[1] + self.cross[1] * c,
            i_dh: self.mean[2] + self.cross[2] * c,
            i_dv: self.mean[3] + self.cross[3] * c,
        }
    }
}

/// Propagates both pulses to the detectors. `gamma_a`, `gamma_b` are the
/// amplitudes `sqrt(mu t eta_d)` at the relay, detector efficiency included.
pub fn detector_profile(pair: EncodingPair, angles: RotationAngles, gamma_a: f64, gamma_b: f64, e_m: f64) -> DetectorProfile {
    let sa = EncodingPair::jones(pair.basis, pair.alice_bit);
    let sb = EncodingPair::jones(pair.basis, pair.bob_bit);
    let a = rotate(angles.theta1, [gamma_a * sa[0], gamma_a * sa[1]]);
    let b = rotate(angles.theta2, [gamma_b * sb[0], gamma_b * sb[1]]);
    let overlap = (1.0 - e_m).max(0.0).sqrt();

    // c = (a - b e^{i phi})/sqrt2 followed by U3; d = (a + b e^{i phi})/sqrt2.
    // U3 is linear, so it acts on each pulse separately.
    let ac = rotate(angles.theta3, a);
    let bc = rotate(angles.theta3, b);

    let mut mean = [0.0; 4];
    let mut cross = [0.0; 4];
    for k in 0..2 {
        mean[k] = 0.5 * (ac[k] * ac[k] + bc[k] * bc[k]);
        cross[k] = -overlap * ac[k] * bc[k];
        mean[2 + k] = 0.5 * (a[k] * a[k] + b[k] * b[k]);
        cross[2 + k] = overlap * a[k] * b[k];
    }
    DetectorProfile { mean, cross }
}

pub fn detector_intensities(
    pair: EncodingPair,
    angles: RotationAngles,
    phi: f64,
    gamma_a: f64,
    gamma_b: f64,
    e_m: f64,
) -> DetectorIntensities {
    detector_profile(pair, angles, gamma_a, gamma_b, e_m).at(phi)
}

/// Click probability of a threshold detector: `1 - (1 - y0) exp(-intensity)`.
pub fn click_probability(intensity: f64, y0: f64) -> f64 {
    let no_signal = (-intensity).exp();
    -(-intensity).exp_m1() + y0 * no_signal
}

/// Phase-averaged coincidence probabilities for one encoding pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceResult {
    /// `{ch & cv}` or `{dh & dv}`.
    pub q_triplet: f64,
    /// `{ch & dv}` or `{cv & dh}`.
    pub q_singlet: f64,
    pub q_total: f64,
    pub is_error_triplet: bool,
    pub is_error_singlet: bool,
}

impl CoincidenceResult {
    pub fn error_gain(&self) -> f64 {
        let mut e = 0.0;
        if self.is_error_triplet {
            e += self.q_triplet;
        }
        if self.is_error_singlet {
            e += self.q_singlet;
        }
        e
    }
}

fn check_quadrature(n: usize) -> Result<()> {
    if n < 16 || n % 2 != 0 {
        return Err(Error::invalid("quadrature_points", format!("must be even and >= 16, got {n}")));
    }
    Ok(())
}

/// Trapezoid average over `phi` of the two Bell-outcome coincidence rates,
/// using the folded `(cos, weight)` rule.
fn phase_averaged(profile: &DetectorProfile, y0: f64, rule: &[(f64, f64)]) -> (f64, f64) {
    let keep = 1.0 - y0;
    let mut trip = 0.0;
    let mut sing = 0.0;
    for &(c, w) in rule {
        let mut click = [0.0; 4];
        let mut quiet = [0.0; 4];
        for k in 0..4 {
            let i = (profile.mean[k] + profile.cross[k] * c).max(0.0);
            // expm1 keeps full relative precision for faint pulses.
            let em1 = (-i).exp_m1();
            click[k] = -em1 + y0 * (1.0 + em1);
            quiet[k] = keep * (1.0 + em1);
        }
        let [ch, cv, dh, dv] = click;
        let [nch, ncv, ndh, ndv] = quiet;
        trip += w * (ch * cv * ndh * ndv + dh * dv * nch * ncv);
        sing += w * (ch * dv * ncv * ndh + cv * dh * nch * ndv);
    }
    (trip, sing)
}

/// Coincidence probabilities for one encoding pair at fixed rotation angles.
pub fn coincidence_gains(
    pair: EncodingPair,
    angles: RotationAngles,
    gamma_a: f64,
    gamma_b: f64,
    e_m: f64,
    y0: f64,
    quadrature_points: usize,
) -> Result<CoincidenceResult> {
    check_quadrature(quadrature_points)?;
    let nodes = periodic_cos_rule(quadrature_points);
    let profile = detector_profile(pair, angles, gamma_a, gamma_b, e_m);
    let (q_triplet, q_singlet) = phase_averaged(&profile, y0, &nodes);
    let (is_error_triplet, is_error_singlet) = pair.error_flags();
    Ok(CoincidenceResult { q_triplet, q_singlet, q_total: q_triplet + q_singlet, is_error_triplet, is_error_singlet })
}

/// Gain `Q` and QBER `E` of a basis, averaged over the four encodings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainQber {
    pub gain: f64,
    pub qber: f64,
}

impl GainQber {
    /// `E * Q`, the error-weighted gain.
    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }
}

/// Standard deviations `arcsin(sqrt(e_k))` of the three rotation angles.
pub fn angle_std_devs(params: &SystemParams) -> [f64; 3] {
    let (e1, e2, e3) = params.e_components();
    [e1.sqrt().asin(), e2.sqrt().asin(), e3.sqrt().asin()]
}

/// Monte Carlo draw `index` of the rotation angles. Each draw has its own
/// ChaCha stream keyed by `(seed, index)`, so a draw never depends on how
/// many others were taken or in which order.
pub fn sample_angles(std_devs: [f64; 3], seed: u64, index: u64) -> RotationAngles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut draw = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    };
    let theta1 = draw(std_devs[0]);
    let theta2 = draw(std_devs[1]);
    let theta3 = draw(std_devs[2]);
    RotationAngles { theta1, theta2, theta3 }
}

/// The rotation angles the basis statistics are averaged over.
pub fn angle_ensemble(params: &SystemParams) -> Vec<RotationAngles> {
    match params.misalignment {
        MisalignmentMode::FixedAngles { theta1, theta2, theta3 } => {
            vec![RotationAngles { theta1, theta2, theta3 }]
        }
        MisalignmentMode::GaussianMC => {
            let sd = angle_std_devs(params);
            if sd.iter().all(|&s| s == 0.0) {
                // Every draw would be exactly zero.
                return vec![RotationAngles::default()];
            }
            (0..params.mc_samples as u64).map(|i| sample_angles(sd, params.rng_seed, i)).collect()
        }
    }
}

/// Gain/QBER evaluator that keeps the angle ensemble and quadrature nodes
/// so many intensity pairs can be evaluated against the same draws.
#[derive(Debug, Clone)]
pub struct Engine {
    angles: Vec<RotationAngles>,
    nodes: Vec<(f64, f64)>,
    eta_d: f64,
    y0: f64,
    e_m: f64,
}

impl Engine {
    pub fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(Engine {
            angles: angle_ensemble(params),
            nodes: periodic_cos_rule(params.quadrature_points),
            eta_d: params.eta_d,
            y0: params.y0,
            e_m: params.e_m,
        })
    }

    pub fn angles(&self) -> &[RotationAngles] {
        &self.angles
    }

    /// Sums of `(total, error)` coincidence probability over the four
    /// encodings of `basis`, at one set of angles.
    fn pair_sums(&self, basis: Basis, angles: RotationAngles, gamma_a: f64, gamma_b: f64) -> (f64, f64) {
        let mut total = 0.0;
        let mut error = 0.0;
        for pair in EncodingPair::all(basis) {
            let profile = detector_profile(pair, angles, gamma_a, gamma_b, self.e_m);
            let (t, s) = phase_averaged(&profile, self.y0, &self.nodes);
            let (et, es) = pair.error_flags();
            total += t + s;
            if et {
                error += t;
            }
            if es {
                error += s;
            }
        }
        (total, error)
    }

    /// Gain and QBER at the relay amplitudes `gamma_a`, `gamma_b`.
    pub fn basis_stats(&self, basis: Basis, gamma_a: f64, gamma_b: f64) -> GainQber {
        let per_sample: Vec<(f64, f64)> = if self.angles.len() == 1 {
            vec![self.pair_sums(basis, self.angles[0], gamma_a, gamma_b)]
        } else {
            self.angles.par_iter().map(|&a| self.pair_sums(basis, a, gamma_a, gamma_b)).collect()
        };
        let totals: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
        let errors: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
        let norm = 4.0 * per_sample.len() as f64;
        let gain = pairwise_sum(&totals) / norm;
        let error_gain = pairwise_sum(&errors) / norm;
        let qber = if gain > 0.0 { error_gain / gain } else { 0.0 };
        GainQber { gain, qber }
    }

    /// Gain and QBER for source intensities `mu_a`, `mu_b` over `geometry`.
    pub fn gain_and_qber(&self, basis: Basis, mu_a: f64, mu_b: f64, geometry: &ChannelGeometry) -> GainQber {
        let gamma_a = (mu_a * geometry.t_a() * self.eta_d).sqrt();
        let gamma_b = (mu_b * geometry.t_b() * self.eta_d).sqrt();
        self.basis_stats(basis, gamma_a, gamma_b)
    }

    /// Single-photon yield `Y^{1,1}` and error rate `e^{1,1}` of this
    /// model in `basis`, obtained from the small-intensity limit of the
    /// gains: with `F(qa, qb) = e^{qa+qb} Q(qa, qb)` the yield is the mixed
    /// derivative at the origin (and likewise for `E Q`). The derivative is
    /// taken by a second-order Richardson-extrapolated finite difference.
    pub fn single_photon(&self, basis: Basis, geometry: &ChannelGeometry) -> SinglePhoton {
        const H: f64 = 1e-4;
        let eval = |qa: f64, qb: f64| {
            let s = self.gain_and_qber(basis, qa, qb, geometry);
            let w = (qa + qb).exp();
            (w * s.gain, w * s.error_gain())
        };
        let f00 = eval(0.0, 0.0);
        let mixed = |h: f64| {
            let fhh = eval(h, h);
            let fh0 = eval(h, 0.0);
            let f0h = eval(0.0, h);
            let d = |sel: fn(&(f64, f64)) -> f64| (sel(&fhh) - sel(&fh0) - sel(&f0h) + sel(&f00)) / (h * h);
            (d(|p| p.0), d(|p| p.1))
        };
        let (y1, ye1) = mixed(H);
        let (y2, ye2) = mixed(2.0 * H);
        let yield11 = 2.0 * y1 - y2;
        let error_yield11 = 2.0 * ye1 - ye2;
        let error_rate = if yield11 > 0.0 { (error_yield11 / yield11).clamp(0.0, 1.0) } else { 0.5 };
        SinglePhoton { yield11, error_rate }
    }
}

/// Single-photon-pair statistics of a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhoton {
    pub yield11: f64,
    pub error_rate: f64,
}

/// One-shot gain/QBER evaluation. Prefer [`Engine`] when evaluating many
/// intensity pairs with the same parameters.
pub fn gain_and_qber(basis: Basis, mu_a: f64, mu_b: f64, geometry: &ChannelGeometry, params: &SystemParams) -> Result<GainQber> {
    if !(mu_a >= 0.0 && mu_b >= 0.0) {
        return Err(Error::invalid("mu", format!("intensities must be >= 0, got ({mu_a}, {mu_b})")));
    }
    Ok(Engine::new(params)?.gain_and_qber(basis, mu_a, mu_b, geometry))
}
