//! Equivalence of the numeric interference engine and the Bessel closed
//! forms on a quasi-random grid of relay amplitudes, misalignments and
//! background rates.
//!
//! The HV closed forms carry the opposite angle-sign label from the engine's
//! rotation convention, so `engine(theta, s * theta)` is compared with
//! `closed_form(HV, -s)`. HH and the basis totals compare label for label.

use crate::analytic::{qz_hh_closed_form, qz_hv_closed_form, AngleSign};
use crate::engine::{coincidence_gains, Basis, EncodingPair, Engine, RotationAngles};
use crate::error::Result;
use crate::output::Table;
use crate::params::{MisalignmentMode, SystemParams};

/// Largest accepted absolute deviation.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePoint {
    pub gamma_a: f64,
    pub gamma_b: f64,
    /// `sin^2` of each channel's rotation angle.
    pub e_d1: f64,
    pub y0: f64,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while i > 0 {
        x += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    x
}

/// `n` Halton points over `gamma_a, gamma_b <= 0.3`, `e_d1 <= 0.2`,
/// `Y0 <= 1e-3`.
pub fn oracle_grid(n: usize) -> Vec<OraclePoint> {
    (1..=n as u64)
        .map(|i| OraclePoint {
            gamma_a: 0.3 * radical_inverse(i, 2),
            gamma_b: 0.3 * radical_inverse(i, 3),
            e_d1: 0.2 * radical_inverse(i, 5),
            y0: 1e-3 * radical_inverse(i, 7),
        })
        .collect()
}

/// Worst deviation of one quantity for one angle sign.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub quantity: &'static str,
    pub sign: AngleSign,
    pub max_abs_deviation: f64,
    pub worst: Option<OraclePoint>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_abs_deviation <= ORACLE_TOLERANCE
    }
}

fn angles(e_d1: f64, sign: AngleSign) -> RotationAngles {
    let t = e_d1.sqrt().asin();
    match sign {
        AngleSign::Same => RotationAngles::new(t, t, 0.0),
        AngleSign::Opposite => RotationAngles::new(t, -t, 0.0),
    }
}

const QUANTITIES: [&str; 6] = ["Q_HH_triplet", "Q_HH_singlet", "Q_HV_triplet", "Q_HV_singlet", "Q_Z", "E_Z"];

/// Engine and closed-form values of every checked quantity at one point.
fn compare(p: &OraclePoint, sign: AngleSign, quadrature_points: usize) -> Result<[(f64, f64); 6]> {
    let a = angles(p.e_d1, sign);
    let hh = coincidence_gains(EncodingPair::new(Basis::Z, 0, 0), a, p.gamma_a, p.gamma_b, 0.0, p.y0, quadrature_points)?;
    let hv = coincidence_gains(EncodingPair::new(Basis::Z, 0, 1), a, p.gamma_a, p.gamma_b, 0.0, p.y0, quadrature_points)?;
    let c_hh = qz_hh_closed_form(p.gamma_a, p.gamma_b, p.e_d1, p.y0, sign);
    let c_hv = qz_hv_closed_form(p.gamma_a, p.gamma_b, p.e_d1, p.y0, sign.flipped());

    let params = SystemParams {
        y0: p.y0,
        e_m: 0.0,
        misalignment: MisalignmentMode::FixedAngles { theta1: a.theta1, theta2: a.theta2, theta3: a.theta3 },
        quadrature_points,
        ..SystemParams::table3()
    };
    let z = Engine::new(&params)?.basis_stats(Basis::Z, p.gamma_a, p.gamma_b);
    let (hh_t, hv_t) = (c_hh.total(), c_hv.total());
    let q_z = (hh_t + hv_t) / 2.0;
    let e_z = if q_z > 0.0 { hh_t / (hh_t + hv_t) } else { 0.0 };
    Ok([
        (hh.q_triplet, c_hh.triplet),
        (hh.q_singlet, c_hh.singlet),
        (hv.q_triplet, c_hv.triplet),
        (hv.q_singlet, c_hv.singlet),
        (z.gain, q_z),
        (z.qber, e_z),
    ])
}

/// Runs the comparison for both angle signs over `points`.
pub fn oracle_equivalence(points: &[OraclePoint], quadrature_points: usize) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for sign in [AngleSign::Same, AngleSign::Opposite] {
        let mut worst = [(0.0f64, None); 6];
        for p in points {
            for (k, (num, closed)) in compare(p, sign, quadrature_points)?.into_iter().enumerate() {
                let d = (num - closed).abs();
                if !(d <= worst[k].0) {
                    worst[k] = (d, Some(*p));
                }
            }
        }
        for (k, name) in QUANTITIES.iter().enumerate() {
            out.push(OracleCheck { quantity: name, sign, max_abs_deviation: worst[k].0, worst: worst[k].1 });
        }
    }
    Ok(out)
}

pub fn oracle_table(checks: &[OracleCheck]) -> Table {
    let mut t = Table::new(["quantity", "angle_sign", "max_abs_deviation", "tolerance", "passed"]);
    for c in checks {
        let sign = match c.sign {
            AngleSign::Same => "same",
            AngleSign::Opposite => "opposite",
        };
        t.push(vec![c.quantity.into(), sign.into(), c.max_abs_deviation.into(), ORACLE_TOLERANCE.into(), c.passed().into()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_grid_covers_ranges() {
        let g = oracle_grid(200);
        assert_eq!(g.len(), 200);
        assert!(g.iter().all(|p| p.gamma_a < 0.3 && p.gamma_b < 0.3 && p.e_d1 < 0.2 && p.y0 < 1e-3));
        assert!(g.iter().any(|p| p.gamma_a > 0.28) && g.iter().any(|p| p.gamma_a < 0.02));
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn small_grid_passes() {
        let checks = oracle_equivalence(&oracle_grid(12), SystemParams::DEFAULT_QUADRATURE_POINTS).unwrap();
        assert_eq!(checks.len(), 12);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
    }
}
