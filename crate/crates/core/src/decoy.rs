//! Time-bin qubit fidelities from projection counts, and decoy-state bounds on
//! the single-photon yield, error rate and fidelity of a memory probed with
//! phase-randomised attenuated laser pulses.
//!
//! Uses one signal intensity `mu_s`, one weak decoy `mu_d1 < mu_s` and a
//! vacuum decoy. Uncertainties are first order in independent Poissonian
//! counts (`Var(C) = C`) with pulse numbers treated as exact.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fidelity a measure-and-resend memory can reach for arbitrary qubits.
pub const CLASSICAL_BOUND: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecoyError {
    #[error("fidelity undefined: no detections")]
    NoCounts,
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("bound invalid: {0}")]
    BoundInvalid(String),
}

impl DecoyError {
    /// Whether the input was fine but cannot certify anything.
    pub fn is_bound_invalid(&self) -> bool {
        matches!(self, DecoyError::BoundInvalid(_) | DecoyError::NoCounts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreparedState {
    #[serde(rename = "e")]
    Early,
    #[serde(rename = "l")]
    Late,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "e/l")]
    EarlyLate,
    #[serde(rename = "+/-")]
    PlusMinus,
}

impl PreparedState {
    pub const ALL: [PreparedState; 4] = [Self::Early, Self::Late, Self::Plus, Self::Minus];

    pub fn basis(self) -> Basis {
        match self {
            Self::Early | Self::Late => Basis::EarlyLate,
            Self::Plus | Self::Minus => Basis::PlusMinus,
        }
    }

    /// The other state of the same basis.
    pub fn orthogonal(self) -> Self {
        match self {
            Self::Early => Self::Late,
            Self::Late => Self::Early,
            Self::Plus => Self::Minus,
            Self::Minus => Self::Plus,
        }
    }
}

impl FromStr for PreparedState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "e" | "early" => Ok(Self::Early),
            "l" | "late" => Ok(Self::Late),
            "+" | "plus" => Ok(Self::Plus),
            "-" | "\u{2212}" | "minus" => Ok(Self::Minus),
            other => Err(format!("unknown prepared state {other:?} (expected e, l, +, -)")),
        }
    }
}

impl fmt::Display for PreparedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Early => "e",
            Self::Late => "l",
            Self::Plus => "+",
            Self::Minus => "-",
        })
    }
}

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

/// Counts for one prepared state: projections onto the state itself and onto
/// its orthogonal partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub prepared_state: PreparedState,
    pub counts_same: u64,
    pub counts_orth: u64,
}

/// `C_same / (C_same + C_orth)` with `sigma^2 = C_same C_orth / (C_same + C_orth)^3`.
pub fn fidelity_from_counts(rec: &CountRecord) -> Result<Estimate, DecoyError> {
    let same = rec.counts_same as f64;
    let orth = rec.counts_orth as f64;
    let total = same + orth;
    if total == 0.0 {
        return Err(DecoyError::NoCounts);
    }
    Ok(Estimate::new(same / total, (same * orth / total.powi(3)).sqrt()))
}

/// `F = F_el / 3 + 2 F_pm / 3`.
pub fn average_fidelity(f_el: f64, f_pm: f64) -> f64 {
    f_el / 3.0 + 2.0 * f_pm / 3.0
}

/// [`average_fidelity`] for independent estimates.
pub fn average_fidelity_estimate(f_el: Estimate, f_pm: Estimate) -> Estimate {
    Estimate::new(
        average_fidelity(f_el.value, f_pm.value),
        ((f_el.sigma / 3.0).powi(2) + (2.0 * f_pm.sigma / 3.0).powi(2)).sqrt(),
    )
}

/// Mean of the two state fidelities of one basis.
pub fn basis_fidelity(a: Estimate, b: Estimate) -> Estimate {
    Estimate::new(
        0.5 * (a.value + b.value),
        0.5 * (a.sigma.powi(2) + b.sigma.powi(2)).sqrt(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalBoundTest {
    pub passes: bool,
    /// `(f - 2/3) / sigma`; infinite when `sigma == 0`.
    pub margin_sigmas: f64,
    pub infinite_margin: bool,
}

/// Whether `f` beats the classical bound, and by how many standard deviations.
pub fn classical_bound_test(f: f64, sigma: f64) -> ClassicalBoundTest {
    let excess = f - CLASSICAL_BOUND;
    let margin_sigmas = if sigma > 0.0 {
        excess / sigma
    } else if excess > 0.0 {
        f64::INFINITY
    } else if excess < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    ClassicalBoundTest {
        passes: excess > 0.0,
        margin_sigmas,
        infinite_margin: margin_sigmas.is_infinite(),
    }
}

/// Detections recorded at one mean photon number, pooled over the states of
/// one basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensitySetting {
    mean_photon_number: f64,
    total_pulses: u64,
    total_detections: u64,
    error_detections: u64,
}

impl IntensitySetting {
    pub fn new(
        mean_photon_number: f64,
        total_pulses: u64,
        total_detections: u64,
        error_detections: u64,
    ) -> Result<Self, DecoyError> {
        if !(mean_photon_number >= 0.0 && mean_photon_number.is_finite()) {
            return Err(DecoyError::Invalid(format!(
                "mean photon number {mean_photon_number} must be non-negative"
            )));
        }
        if total_pulses == 0 {
            return Err(DecoyError::Invalid(format!("no pulses at mu = {mean_photon_number}")));
        }
        if total_detections > total_pulses {
            return Err(DecoyError::Invalid(format!(
                "{total_detections} detections exceed {total_pulses} pulses at mu = {mean_photon_number}"
            )));
        }
        if error_detections > total_detections {
            return Err(DecoyError::Invalid(format!(
                "{error_detections} error detections exceed {total_detections} detections at mu = {mean_photon_number}"
            )));
        }
        Ok(Self {
            mean_photon_number,
            total_pulses,
            total_detections,
            error_detections,
        })
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.mean_photon_number
    }
    pub fn total_pulses(&self) -> u64 {
        self.total_pulses
    }
    pub fn total_detections(&self) -> u64 {
        self.total_detections
    }
    pub fn error_detections(&self) -> u64 {
        self.error_detections
    }

    /// Quantum bit error rate `C_orth / (C_orth + C_same)`, if anything was detected.
    pub fn error_rate(&self) -> Option<f64> {
        (self.total_detections > 0).then(|| self.error_detections as f64 / self.total_detections as f64)
    }

    fn pulses(&self) -> f64 {
        self.total_pulses as f64
    }
    fn detections(&self) -> f64 {
        self.total_detections as f64
    }
    fn errors(&self) -> f64 {
        self.error_detections as f64
    }
    fn correct(&self) -> f64 {
        (self.total_detections - self.error_detections) as f64
    }
}

/// Gain `Q = detections / pulses`. For the vacuum setting this is `Y^(0)`.
pub fn gain(setting: &IntensitySetting) -> f64 {
    setting.detections() / setting.pulses()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyDataset {
    signal: IntensitySetting,
    decoy1: IntensitySetting,
    vacuum: IntensitySetting,
}

impl DecoyDataset {
    pub fn new(
        signal: IntensitySetting,
        decoy1: IntensitySetting,
        vacuum: IntensitySetting,
    ) -> Result<Self, DecoyError> {
        let (s, d, v) = (
            signal.mean_photon_number,
            decoy1.mean_photon_number,
            vacuum.mean_photon_number,
        );
        if v != 0.0 {
            return Err(DecoyError::Invalid(format!("vacuum decoy has mu = {v}, expected 0")));
        }
        if !(s > d && d > 0.0) {
            return Err(DecoyError::Invalid(format!(
                "need mu_s > mu_d1 > 0, got mu_s = {s}, mu_d1 = {d}"
            )));
        }
        Ok(Self { signal, decoy1, vacuum })
    }

    pub fn signal(&self) -> &IntensitySetting {
        &self.signal
    }
    pub fn decoy1(&self) -> &IntensitySetting {
        &self.decoy1
    }
    pub fn vacuum(&self) -> &IntensitySetting {
        &self.vacuum
    }

    fn settings(&self) -> [&IntensitySetting; 3] {
        [&self.signal, &self.decoy1, &self.vacuum]
    }
}

/// Coefficients of the single-photon yield bound:
/// `Y_L = a (Q_d e^{mu_d} - b Q_s e^{mu_s} - c Y0)`.
fn yield_coefficients(mu_s: f64, mu_d: f64) -> (f64, f64, f64) {
    let a = mu_s / (mu_s * mu_d - mu_d * mu_d);
    let b = mu_d * mu_d / (mu_s * mu_s);
    let c = (mu_s * mu_s - mu_d * mu_d) / (mu_s * mu_s);
    (a, b, c)
}

/// Per-pulse gains of a signal / weak decoy / vacuum triple, with the error
/// rates that enter the error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyGains {
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub q_signal: f64,
    pub q_decoy: f64,
    /// Vacuum gain `Y^(0)`.
    pub y0: f64,
    /// Error rate `E_d` at the decoy intensity.
    pub e_decoy: f64,
    /// Error rate `E^(0)` assigned to vacuum detections.
    pub e_vacuum: f64,
}

impl DecoyGains {
    pub fn from_dataset(ds: &DecoyDataset, vacuum: VacuumErrorRate) -> Self {
        let rates = ErrorRates::from_dataset(ds, vacuum);
        Self {
            mu_signal: ds.signal.mean_photon_number,
            mu_decoy: ds.decoy1.mean_photon_number,
            q_signal: gain(&ds.signal),
            q_decoy: gain(&ds.decoy1),
            y0: gain(&ds.vacuum),
            e_decoy: rates.decoy1,
            e_vacuum: rates.vacuum,
        }
    }

    /// `Y_L^(1)` before the positivity check.
    pub fn y1_lower_raw(&self) -> f64 {
        let (mu_s, mu_d) = (self.mu_signal, self.mu_decoy);
        let (a, b, c) = yield_coefficients(mu_s, mu_d);
        a * (self.q_decoy * mu_d.exp() - b * self.q_signal * mu_s.exp() - c * self.y0)
    }

    pub fn y1_lower(&self) -> Result<f64, DecoyError> {
        let y = self.y1_lower_raw();
        if y > 0.0 {
            Ok(y)
        } else {
            Err(DecoyError::BoundInvalid(format!(
                "single-photon yield bound is {y:e}; the data cannot certify a single-photon component"
            )))
        }
    }

    /// `E_U^(1)`, clamped into `[0, 1]`.
    pub fn e1_upper(&self) -> Result<ErrorBound, DecoyError> {
        let y1 = self.y1_lower()?;
        let numerator = self.e_decoy * self.q_decoy * self.mu_decoy.exp() - self.e_vacuum * self.y0;
        let raw = numerator / (self.mu_decoy * y1);
        let e1_upper = raw.clamp(0.0, 1.0);
        Ok(ErrorBound {
            e1_upper,
            clamped: e1_upper != raw,
        })
    }
}

/// Lower bound `Y_L^(1)` on the single-photon yield (vacuum + one weak decoy).
pub fn y1_lower_bound(ds: &DecoyDataset) -> Result<f64, DecoyError> {
    DecoyGains::from_dataset(ds, VacuumErrorRate::Half).y1_lower()
}

/// Convention for the vacuum error rate `E^(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VacuumErrorRate {
    /// Dark counts land in either projection with equal probability.
    #[default]
    Half,
    /// Use the error fraction observed in the vacuum setting.
    Measured,
    Fixed(f64),
}

impl VacuumErrorRate {
    fn resolve(self, vacuum: &IntensitySetting) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::Measured => vacuum.error_rate().unwrap_or(0.5),
            Self::Fixed(e) => e,
        }
    }
}

impl FromStr for VacuumErrorRate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "half" => Ok(Self::Half),
            "measured" => Ok(Self::Measured),
            other => match other.parse::<f64>() {
                Ok(e) if (0.0..=1.0).contains(&e) => Ok(Self::Fixed(e)),
                _ => Err(format!(
                    "vacuum error rate {other:?} is not half, measured or a number in [0, 1]"
                )),
            },
        }
    }
}

/// Error rates fed to the single-photon error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub decoy1: f64,
    pub vacuum: f64,
}

impl ErrorRates {
    pub fn from_dataset(ds: &DecoyDataset, vacuum: VacuumErrorRate) -> Self {
        Self {
            decoy1: ds.decoy1.error_rate().unwrap_or(0.0),
            vacuum: vacuum.resolve(&ds.vacuum),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    /// `E_U^(1)` clamped into `[0, 1]`.
    pub e1_upper: f64,
    pub clamped: bool,
}

/// Upper bound `E_U^(1) = (E_d Q_d e^{mu_d} - E_0 Y_0) / (mu_d Y_L^(1))`.
pub fn e1_upper_bound(ds: &DecoyDataset, rates: ErrorRates) -> Result<ErrorBound, DecoyError> {
    DecoyGains {
        e_decoy: rates.decoy1,
        e_vacuum: rates.vacuum,
        ..DecoyGains::from_dataset(ds, VacuumErrorRate::Half)
    }
    .e1_upper()
}

/// Partial derivatives with respect to the correct and error counts of each
/// setting (signal, decoy, vacuum).
#[derive(Debug, Clone, Copy, Default)]
struct CountGradient {
    correct: [f64; 3],
    error: [f64; 3],
}

impl CountGradient {
    fn sigma(&self, ds: &DecoyDataset) -> f64 {
        ds.settings()
            .iter()
            .enumerate()
            .map(|(i, s)| self.correct[i].powi(2) * s.correct() + self.error[i].powi(2) * s.errors())
            .sum::<f64>()
            .sqrt()
    }
}

fn y1_gradient(ds: &DecoyDataset) -> CountGradient {
    let (a, b, c) = yield_coefficients(ds.signal.mean_photon_number, ds.decoy1.mean_photon_number);
    let per_detection = [
        -a * b * ds.signal.mean_photon_number.exp() / ds.signal.pulses(),
        a * ds.decoy1.mean_photon_number.exp() / ds.decoy1.pulses(),
        -a * c / ds.vacuum.pulses(),
    ];
    CountGradient {
        correct: per_detection,
        error: per_detection,
    }
}

/// Single-photon bounds for one basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisBound {
    pub y1_lower: Estimate,
    pub e1_upper: Estimate,
    pub e1_clamped: bool,
    /// `F_L^(1) = 1 - E_U^(1)`.
    pub f_l1_bound: Estimate,
}

/// Bounds with first-order Poissonian uncertainties. With
/// [`VacuumErrorRate::Measured`] the vacuum error counts enter the
/// uncertainty; otherwise `E^(0)` is a fixed constant.
pub fn bound_basis(ds: &DecoyDataset, vacuum: VacuumErrorRate) -> Result<BasisBound, DecoyError> {
    let y1 = y1_lower_bound(ds)?;
    let rates = ErrorRates::from_dataset(ds, vacuum);
    let bound = e1_upper_bound(ds, rates)?;

    let y_grad = y1_gradient(ds);
    let mu_d = ds.decoy1.mean_photon_number;
    // E_d Q_d = errors_d / pulses_d, so the numerator is linear in counts.
    let numerator = ds.decoy1.errors() / ds.decoy1.pulses() * mu_d.exp() - rates.vacuum * gain(&ds.vacuum);
    let mut num_grad = CountGradient::default();
    num_grad.error[1] = mu_d.exp() / ds.decoy1.pulses();
    match vacuum {
        VacuumErrorRate::Measured if ds.vacuum.total_detections > 0 => {
            num_grad.error[2] = -1.0 / ds.vacuum.pulses();
        }
        _ => {
            num_grad.correct[2] = -rates.vacuum / ds.vacuum.pulses();
            num_grad.error[2] = -rates.vacuum / ds.vacuum.pulses();
        }
    }
    let mut e_grad = CountGradient::default();
    for i in 0..3 {
        e_grad.correct[i] = num_grad.correct[i] / (mu_d * y1) - numerator / (mu_d * y1 * y1) * y_grad.correct[i];
        e_grad.error[i] = num_grad.error[i] / (mu_d * y1) - numerator / (mu_d * y1 * y1) * y_grad.error[i];
    }
    let e_sigma = e_grad.sigma(ds);
    Ok(BasisBound {
        y1_lower: Estimate::new(y1, y_grad.sigma(ds)),
        e1_upper: Estimate::new(bound.e1_upper, e_sigma),
        e1_clamped: bound.clamped,
        f_l1_bound: Estimate::new(1.0 - bound.e1_upper, e_sigma),
    })
}

/// One row of a count file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountInput {
    pub state: PreparedState,
    pub mu: f64,
    pub counts_same: u64,
    pub counts_orth: u64,
    pub total_pulses: u64,
}

/// Reads a count file from `reader`; see [`parse_count_file`].
pub fn read_count_file<R: Read>(mut reader: R) -> Result<Vec<CountInput>, DecoyError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| DecoyError::Malformed {
        line: 0,
        message: e.to_string(),
    })?;
    parse_count_file(&text)
}

/// Parses CSV with header `state,mu,counts_same,counts_orth,total_pulses`.
/// Lines starting with `#` are ignored; errors carry the 1-based line number.
pub fn parse_count_file(text: &str) -> Result<Vec<CountInput>, DecoyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| DecoyError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["state", "mu", "counts_same", "counts_orth", "total_pulses"];
    if headers.iter().ne(expected) {
        return Err(DecoyError::Malformed {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DecoyError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| DecoyError::Malformed { line, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        let int = |i: usize| {
            field(i).parse::<u64>().map_err(|_| {
                bad(format!(
                    "{} = {:?} is not a non-negative integer",
                    expected[i],
                    field(i)
                ))
            })
        };
        let state = field(0).parse::<PreparedState>().map_err(bad)?;
        let mu = field(1)
            .parse::<f64>()
            .ok()
            .filter(|m| *m >= 0.0 && m.is_finite())
            .ok_or_else(|| bad(format!("mu = {:?} is not a non-negative number", field(1))))?;
        let input = CountInput {
            state,
            mu,
            counts_same: int(2)?,
            counts_orth: int(3)?,
            total_pulses: int(4)?,
        };
        if input.total_pulses == 0 {
            return Err(bad("total_pulses must be positive".into()));
        }
        if input.counts_same + input.counts_orth > input.total_pulses {
            return Err(bad("more detections than pulses".into()));
        }
        out.push(input);
    }
    Ok(out)
}

/// Writes rows in the count-file format.
pub fn write_count_file<W: std::io::Write>(rows: &[CountInput], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "mu", "counts_same", "counts_orth", "total_pulses"])?;
    for r in rows {
        w.write_record([
            r.state.to_string(),
            format!("{}", r.mu),
            r.counts_same.to_string(),
            r.counts_orth.to_string(),
            r.total_pulses.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFidelities {
    pub mu: f64,
    pub f_e: Estimate,
    pub f_l: Estimate,
    pub f_plus: Estimate,
    pub f_minus: Estimate,
    pub f_el: Estimate,
    pub f_pm: Estimate,
    pub f_avg: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub vacuum_error_rate: VacuumErrorRate,
    /// Attenuated-pulse fidelities at the signal intensity.
    pub f_e: Estimate,
    pub f_l: Estimate,
    pub f_plus: Estimate,
    pub f_minus: Estimate,
    pub f_el: Estimate,
    pub f_pm: Estimate,
    pub f_avg: Estimate,
    /// Attenuated-pulse fidelities at each non-vacuum intensity, signal first.
    pub per_intensity: Vec<StateFidelities>,
    pub bound_el: BasisBound,
    pub bound_pm: BasisBound,
    /// `F_L^(1)` averaged over bases with weights 1/3 and 2/3.
    pub f_l1_avg: Estimate,
    pub classical: ClassicalBoundTest,
}

/// Counts of one intensity grouped by prepared state.
type StateCounts = BTreeMap<PreparedState, (u64, u64, u64)>;

fn group(rows: &[CountInput]) -> Result<Vec<(f64, StateCounts)>, DecoyError> {
    let mut by_mu: Vec<(f64, StateCounts)> = Vec::new();
    for r in rows {
        let entry = match by_mu.iter_mut().find(|(mu, _)| *mu == r.mu) {
            Some(e) => e,
            None => {
                by_mu.push((r.mu, BTreeMap::new()));
                by_mu.last_mut().expect("just pushed")
            }
        };
        let c = entry.1.entry(r.state).or_insert((0, 0, 0));
        c.0 += r.counts_same;
        c.1 += r.counts_orth;
        c.2 += r.total_pulses;
    }
    by_mu.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(by_mu)
}

fn basis_setting(mu: f64, counts: &StateCounts, basis: Basis) -> Result<IntensitySetting, DecoyError> {
    let (mut same, mut orth, mut pulses) = (0, 0, 0);
    for (state, c) in counts {
        if state.basis() == basis {
            same += c.0;
            orth += c.1;
            pulses += c.2;
        }
    }
    if pulses == 0 {
        return Err(DecoyError::Invalid(format!(
            "no {} records at mu = {mu}",
            match basis {
                Basis::EarlyLate => "e/l",
                Basis::PlusMinus => "+/-",
            }
        )));
    }
    IntensitySetting::new(mu, pulses, same + orth, orth)
}

/// Per-basis decoy datasets `(e/l, +/-)` from count rows.
pub fn datasets(rows: &[CountInput]) -> Result<(DecoyDataset, DecoyDataset), DecoyError> {
    let groups = group(rows)?;
    if groups.len() > 3 {
        return Err(DecoyError::Invalid(format!(
            "{} distinct mean photon numbers; expected a signal, one decoy and vacuum",
            groups.len()
        )));
    }
    if groups.len() < 3 || groups[2].0 != 0.0 {
        return Err(DecoyError::BoundInvalid(
            "decoy analysis needs a signal intensity, a weak decoy and a vacuum setting".into(),
        ));
    }
    let build = |basis| {
        DecoyDataset::new(
            basis_setting(groups[0].0, &groups[0].1, basis)?,
            basis_setting(groups[1].0, &groups[1].1, basis)?,
            basis_setting(groups[2].0, &groups[2].1, basis)?,
        )
    };
    Ok((build(Basis::EarlyLate)?, build(Basis::PlusMinus)?))
}

fn state_fidelities(mu: f64, counts: &StateCounts) -> Result<StateFidelities, DecoyError> {
    let f = |state: PreparedState| {
        let &(same, orth, _) = counts
            .get(&state)
            .ok_or_else(|| DecoyError::Invalid(format!("no records for state {state} at mu = {mu}")))?;
        fidelity_from_counts(&CountRecord {
            prepared_state: state,
            counts_same: same,
            counts_orth: orth,
        })
    };
    let (f_e, f_l, f_plus, f_minus) = (
        f(PreparedState::Early)?,
        f(PreparedState::Late)?,
        f(PreparedState::Plus)?,
        f(PreparedState::Minus)?,
    );
    let f_el = basis_fidelity(f_e, f_l);
    let f_pm = basis_fidelity(f_plus, f_minus);
    Ok(StateFidelities {
        mu,
        f_e,
        f_l,
        f_plus,
        f_minus,
        f_el,
        f_pm,
        f_avg: average_fidelity_estimate(f_el, f_pm),
    })
}

/// Bounds the single-photon fidelity for each basis and combines them.
pub fn single_photon_fidelity_bound(
    el: &DecoyDataset,
    pm: &DecoyDataset,
    vacuum: VacuumErrorRate,
) -> Result<(BasisBound, BasisBound, Estimate), DecoyError> {
    let bound_el = bound_basis(el, vacuum)?;
    let bound_pm = bound_basis(pm, vacuum)?;
    let avg = average_fidelity_estimate(bound_el.f_l1_bound, bound_pm.f_l1_bound);
    Ok((bound_el, bound_pm, avg))
}

/// Full analysis of a count file.
pub fn analyze(rows: &[CountInput], vacuum: VacuumErrorRate) -> Result<FidelityReport, DecoyError> {
    let (el, pm) = datasets(rows)?;
    let groups = group(rows)?;
    let per_intensity = groups[..2]
        .iter()
        .map(|(mu, counts)| state_fidelities(*mu, counts))
        .collect::<Result<Vec<_>, _>>()?;
    let (bound_el, bound_pm, f_l1_avg) = single_photon_fidelity_bound(&el, &pm, vacuum)?;
    let s = per_intensity[0];
    Ok(FidelityReport {
        mu_signal: el.signal.mean_photon_number,
        mu_decoy: el.decoy1.mean_photon_number,
        vacuum_error_rate: vacuum,
        f_e: s.f_e,
        f_l: s.f_l,
        f_plus: s.f_plus,
        f_minus: s.f_minus,
        f_el: s.f_el,
        f_pm: s.f_pm,
        f_avg: s.f_avg,
        per_intensity,
        bound_el,
        bound_pm,
        f_l1_avg,
        classical: classical_bound_test(f_l1_avg.value, f_l1_avg.sigma),
    })
}
