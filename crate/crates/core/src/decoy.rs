//! Two-decoy-state estimation of the single-photon-pair yield and phase
//! error from the nine-pair gain table.

use std::io::{Read, Write};

use crate::engine::{Basis, Engine};
use crate::error::{Error, Result};
use crate::params::{validate_intensities, ChannelGeometry, IntensitySettings, Party, SystemParams};

/// Intensity level of one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Mu,
    Nu,
    Omega,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Mu, Level::Nu, Level::Omega];

    fn index(self) -> usize {
        match self {
            Level::Mu => 0,
            Level::Nu => 1,
            Level::Omega => 2,
        }
    }

    /// Intensity of `party` at this level.
    pub fn value(self, settings: &IntensitySettings, party: Party) -> f64 {
        let (mu, nu, omega) = settings.party(party);
        match self {
            Level::Mu => mu,
            Level::Nu => nu,
            Level::Omega => omega,
        }
    }
}

/// Observed gain `Q` and error-weighted gain `EQ` for one intensity pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GainEntry {
    pub gain: f64,
    pub error_gain: f64,
}

impl GainEntry {
    pub fn qber(&self) -> f64 {
        if self.gain > 0.0 {
            self.error_gain / self.gain
        } else {
            0.0
        }
    }
}

/// Gains for both bases and all nine intensity pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    settings: IntensitySettings,
    entries: [[[GainEntry; 3]; 3]; 2],
}

fn basis_index(b: Basis) -> usize {
    match b {
        Basis::Z => 0,
        Basis::X => 1,
    }
}

impl GainTable {
    /// Builds a table from a function of `(basis, q_a, q_b)`.
    pub fn from_fn(settings: IntensitySettings, mut f: impl FnMut(Basis, f64, f64) -> Result<GainEntry>) -> Result<Self> {
        let mut entries = [[[GainEntry::default(); 3]; 3]; 2];
        for basis in Basis::ALL {
            for la in Level::ALL {
                for lb in Level::ALL {
                    let qa = la.value(&settings, Party::Alice);
                    let qb = lb.value(&settings, Party::Bob);
                    let e = f(basis, qa, qb)?;
                    if !(0.0..=1.0).contains(&e.gain) || !(0.0..=e.gain * (1.0 + 1e-12)).contains(&e.error_gain) {
                        return Err(Error::NonFinite(format!(
                            "gain entry ({}, {qa}, {qb}) out of range: Q = {}, EQ = {}",
                            basis.label(),
                            e.gain,
                            e.error_gain
                        )));
                    }
                    entries[basis_index(basis)][la.index()][lb.index()] = e;
                }
            }
        }
        Ok(GainTable { settings, entries })
    }

    pub fn settings(&self) -> &IntensitySettings {
        &self.settings
    }

    pub fn entry(&self, basis: Basis, la: Level, lb: Level) -> GainEntry {
        self.entries[basis_index(basis)][la.index()][lb.index()]
    }

    /// `e^{q_a + q_b} Q^{q_a q_b}` (or the error-weighted version).
    fn scaled(&self, basis: Basis, la: Level, lb: Level, errors: bool) -> f64 {
        let e = self.entry(basis, la, lb);
        let w = (la.value(&self.settings, Party::Alice) + lb.value(&self.settings, Party::Bob)).exp();
        w * if errors { e.error_gain } else { e.gain }
    }

    /// Rows `(basis, q_a, q_b, entry)` in a fixed order.
    pub fn rows(&self) -> Vec<(Basis, f64, f64, GainEntry)> {
        let mut out = Vec::with_capacity(18);
        for basis in Basis::ALL {
            for la in Level::ALL {
                for lb in Level::ALL {
                    out.push((
                        basis,
                        la.value(&self.settings, Party::Alice),
                        lb.value(&self.settings, Party::Bob),
                        self.entry(basis, la, lb),
                    ));
                }
            }
        }
        out
    }

    /// Writes `basis,q_a,q_b,Q,EQ` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["basis", "q_a", "q_b", "Q", "EQ"])?;
        for (basis, qa, qb, e) in self.rows() {
            wtr.write_record([
                basis.label().to_string(),
                crate::output::fmt_f64(qa),
                crate::output::fmt_f64(qb),
                crate::output::fmt_f64(e.gain),
                crate::output::fmt_f64(e.error_gain),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a table written by [`GainTable::write_csv`] or measured
    /// externally. Each party's three intensities are recovered from the
    /// distinct `q_a` / `q_b` values, largest first.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        // Columns are located by header so extra columns (such as a QBER) are ignored.
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::invalid("gain table", format!("missing column '{name}'")))
        };
        let idx = [col("basis")?, col("q_a")?, col("q_b")?, col("Q")?, col("EQ")?];
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let basis = match rec[idx[0]].trim() {
                "Z" | "z" => Basis::Z,
                "X" | "x" => Basis::X,
                other => return Err(Error::invalid("gain table", format!("unknown basis '{other}'"))),
            };
            let num = |k: usize| -> Result<f64> {
                rec[idx[k]]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid("gain table", format!("column {}: {e}", &headers[idx[k]])))
            };
            rows.push((basis, num(1)?, num(2)?, GainEntry { gain: num(3)?, error_gain: num(4)? }));
        }
        let levels = |sel: fn(&(Basis, f64, f64, GainEntry)) -> f64| -> Result<(f64, f64, f64)> {
            let mut v: Vec<f64> = rows.iter().map(sel).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v.dedup();
            match v.as_slice() {
                [m, n, o] => Ok((*m, *n, *o)),
                _ => Err(Error::invalid("gain table", format!("expected 3 distinct intensities per party, got {v:?}"))),
            }
        };
        let settings = IntensitySettings::new(levels(|r| r.1)?, levels(|r| r.2)?);
        validate_intensities(&settings)?;
        let lookup = |basis: Basis, qa: f64, qb: f64| -> Result<GainEntry> {
            let hits: Vec<_> = rows.iter().filter(|r| r.0 == basis && r.1 == qa && r.2 == qb).collect();
            match hits.as_slice() {
                [one] => Ok(one.3),
                [] => Err(Error::invalid("gain table", format!("missing entry ({}, {qa}, {qb})", basis.label()))),
                _ => Err(Error::invalid("gain table", format!("duplicate entry ({}, {qa}, {qb})", basis.label()))),
            }
        };
        GainTable::from_fn(settings, lookup)
    }
}

/// Gains an experiment would measure, simulated by the interference engine.
pub fn build_gain_table(settings: &IntensitySettings, geometry: &ChannelGeometry, params: &SystemParams) -> Result<GainTable> {
    validate_intensities(settings)?;
    let engine = Engine::new(params)?;
    build_gain_table_with(&engine, settings, geometry)
}

/// As [`build_gain_table`], reusing an engine.
pub fn build_gain_table_with(engine: &Engine, settings: &IntensitySettings, geometry: &ChannelGeometry) -> Result<GainTable> {
    validate_intensities(settings)?;
    GainTable::from_fn(*settings, |basis, qa, qb| {
        let s = engine.gain_and_qber(basis, qa, qb, geometry);
        Ok(GainEntry { gain: s.gain, error_gain: s.error_gain() })
    })
}

/// Which higher-order yield the `Y^{1,1}` bound eliminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundCase {
    /// `(mu_a+omega_a)/(nu_a+omega_a) <= (mu_b+omega_b)/(nu_b+omega_b)`.
    Case1,
    Case2,
}

impl BoundCase {
    pub fn select(s: &IntensitySettings) -> Self {
        let ra = (s.mu_a + s.omega_a) / (s.nu_a + s.omega_a);
        let rb = (s.mu_b + s.omega_b) / (s.nu_b + s.omega_b);
        if ra <= rb {
            BoundCase::Case1
        } else {
            BoundCase::Case2
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BoundCase::Case1 => "case1",
            BoundCase::Case2 => "case2",
        }
    }
}

fn check_degenerate(s: &IntensitySettings) -> Result<()> {
    for party in [Party::Alice, Party::Bob] {
        let (mu, nu, omega) = s.party(party);
        if nu - omega == 0.0 {
            return Err(Error::DegenerateIntensities { party, detail: format!("nu = omega = {nu}") });
        }
        if mu - nu == 0.0 {
            return Err(Error::DegenerateIntensities { party, detail: format!("mu = nu = {mu}") });
        }
        if mu - omega == 0.0 {
            return Err(Error::DegenerateIntensities { party, detail: format!("mu = omega = {mu}") });
        }
    }
    Ok(())
}

/// `Q^{M1}` (from the nu/omega pairs) and `Q^{M2}` (from the mu/omega pairs).
pub fn q_m1_m2(table: &GainTable, basis: Basis, errors: bool) -> (f64, f64) {
    use Level::*;
    let s = |a, b| table.scaled(basis, a, b, errors);
    let m1 = s(Nu, Nu) + s(Omega, Omega) - s(Nu, Omega) - s(Omega, Nu);
    let m2 = s(Mu, Mu) + s(Omega, Omega) - s(Mu, Omega) - s(Omega, Mu);
    (m1, m2)
}

/// Unclamped `Y^{1,1}` lower bound with an explicit choice of case.
pub fn y11_lower_bound_raw(table: &GainTable, basis: Basis, case: BoundCase) -> Result<f64> {
    let s = table.settings();
    check_degenerate(s)?;
    let (m1, m2) = q_m1_m2(table, basis, false);
    let (ma, na, oa) = (s.mu_a, s.nu_a, s.omega_a);
    let (mb, nb, ob) = (s.mu_b, s.nu_b, s.omega_b);
    let common = (ma - oa) * (mb - ob) * (na - oa) * (nb - ob);
    let v = match case {
        BoundCase::Case1 => ((ma * ma - oa * oa) * (mb - ob) * m1 - (na * na - oa * oa) * (nb - ob) * m2) / (common * (ma - na)),
        BoundCase::Case2 => ((mb * mb - ob * ob) * (ma - oa) * m1 - (nb * nb - ob * ob) * (na - oa) * m2) / (common * (mb - nb)),
    };
    Ok(v)
}

/// `Y^{1,1}` lower bound for `basis`, clamped to `[0, 1]`, with the case used.
pub fn y11_lower_bound(table: &GainTable, basis: Basis) -> Result<(f64, BoundCase)> {
    let case = BoundCase::select(table.settings());
    let raw = y11_lower_bound_raw(table, basis, case)?;
    Ok((raw.clamp(0.0, 1.0), case))
}

/// Unclamped `e_X^{1,1}` upper bound.
pub fn e11_upper_bound_raw(table: &GainTable, y11_x_lower: f64) -> Result<f64> {
    let s = table.settings();
    check_degenerate(s)?;
    if !(y11_x_lower > 0.0) {
        return Err(Error::UnboundedErrorRate);
    }
    let (m1, _) = q_m1_m2(table, Basis::X, true);
    Ok(m1 / ((s.nu_a - s.omega_a) * (s.nu_b - s.omega_b) * y11_x_lower))
}

/// `e_X^{1,1}` upper bound clamped to `[0, 1]`.
pub fn e11_upper_bound(table: &GainTable, y11_x_lower: f64) -> Result<f64> {
    Ok(e11_upper_bound_raw(table, y11_x_lower)?.clamp(0.0, 1.0))
}

/// Everything the two-decoy rate needs from a gain table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    /// 1 when no positive `Y_X^{1,1}` bound exists.
    pub e11_x_upper: f64,
    pub y11_z_lower_raw: f64,
    pub y11_x_lower_raw: f64,
    /// NaN when no positive `Y_X^{1,1}` bound exists.
    pub e11_x_upper_raw: f64,
    pub case_z: BoundCase,
    pub case_x: BoundCase,
}

impl DecoyBounds {
    pub fn from_table(table: &GainTable) -> Result<Self> {
        let case = BoundCase::select(table.settings());
        let y11_z_lower_raw = y11_lower_bound_raw(table, Basis::Z, case)?;
        let y11_x_lower_raw = y11_lower_bound_raw(table, Basis::X, case)?;
        let y11_x_lower = y11_x_lower_raw.clamp(0.0, 1.0);
        let (e11_x_upper, e11_x_upper_raw) = match e11_upper_bound_raw(table, y11_x_lower) {
            Ok(raw) => (raw.clamp(0.0, 1.0), raw),
            Err(Error::UnboundedErrorRate) => (1.0, f64::NAN),
            Err(e) => return Err(e),
        };
        Ok(DecoyBounds {
            y11_z_lower: y11_z_lower_raw.clamp(0.0, 1.0),
            y11_x_lower,
            e11_x_upper,
            y11_z_lower_raw,
            y11_x_lower_raw,
            e11_x_upper_raw,
            case_z: case,
            case_x: case,
        })
    }
}
