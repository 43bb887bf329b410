//! Atomic frequency comb memory: comb geometry, storage time, the
//! impedance-matched-cavity efficiency limit and component loss budgets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AfcError {
    #[error("{field} = {value} is out of range (expected {expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("loss budget is empty")]
    EmptyBudget,
    #[error("{bins} bins on {spacing_hz} Hz centres need more than the {available_hz} Hz available")]
    Overfull {
        bins: u32,
        spacing_hz: f64,
        available_hz: f64,
    },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn positive(field: &'static str, value: f64) -> Result<(), AfcError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AfcError::OutOfRange {
            field,
            value,
            expected: "a positive finite value",
        })
    }
}

/// Comb geometry: tooth spacing `Δ`, tooth width `γ` and the layout of the
/// spectral bins carrying one comb each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AfcCombSpec", into = "AfcCombSpec")]
pub struct AfcComb {
    spec: AfcCombSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfcCombSpec {
    pub tooth_spacing_hz: f64,
    pub tooth_width_hz: f64,
    pub bin_bandwidth_hz: f64,
    pub num_bins: u32,
    pub bin_center_spacing_hz: f64,
}

impl TryFrom<AfcCombSpec> for AfcComb {
    type Error = AfcError;

    fn try_from(spec: AfcCombSpec) -> Result<Self, AfcError> {
        positive("tooth_spacing_hz", spec.tooth_spacing_hz)?;
        positive("tooth_width_hz", spec.tooth_width_hz)?;
        positive("bin_bandwidth_hz", spec.bin_bandwidth_hz)?;
        positive("bin_center_spacing_hz", spec.bin_center_spacing_hz)?;
        if spec.num_bins == 0 {
            return Err(AfcError::OutOfRange {
                field: "num_bins",
                value: 0.0,
                expected: "at least one bin",
            });
        }
        let finesse = spec.tooth_spacing_hz / spec.tooth_width_hz;
        if finesse <= 1.0 {
            return Err(AfcError::OutOfRange {
                field: "tooth_width_hz",
                value: spec.tooth_width_hz,
                expected: "a width below the tooth spacing (finesse > 1)",
            });
        }
        if spec.bin_bandwidth_hz > spec.bin_center_spacing_hz {
            return Err(AfcError::OutOfRange {
                field: "bin_bandwidth_hz",
                value: spec.bin_bandwidth_hz,
                expected: "a bin width no larger than the bin centre spacing",
            });
        }
        Ok(Self { spec })
    }
}

impl From<AfcComb> for AfcCombSpec {
    fn from(c: AfcComb) -> Self {
        c.spec
    }
}

impl AfcComb {
    pub fn new(spec: AfcCombSpec) -> Result<Self, AfcError> {
        spec.try_into()
    }

    pub fn spec(&self) -> AfcCombSpec {
        self.spec
    }

    pub fn tooth_spacing_hz(&self) -> f64 {
        self.spec.tooth_spacing_hz
    }
    pub fn tooth_width_hz(&self) -> f64 {
        self.spec.tooth_width_hz
    }
    pub fn bin_bandwidth_hz(&self) -> f64 {
        self.spec.bin_bandwidth_hz
    }
    pub fn num_bins(&self) -> u32 {
        self.spec.num_bins
    }
    pub fn bin_center_spacing_hz(&self) -> f64 {
        self.spec.bin_center_spacing_hz
    }

    /// `F = Δ / γ`.
    pub fn finesse(&self) -> f64 {
        self.spec.tooth_spacing_hz / self.spec.tooth_width_hz
    }

    /// Total span occupied by the bins, `num_bins * bin_center_spacing`.
    pub fn occupied_bandwidth_hz(&self) -> f64 {
        f64::from(self.spec.num_bins) * self.spec.bin_center_spacing_hz
    }

    /// Checks that the bins fit inside `memory_bandwidth_hz`.
    pub fn check_bandwidth(&self, memory_bandwidth_hz: f64) -> Result<(), AfcError> {
        positive("memory_bandwidth_hz", memory_bandwidth_hz)?;
        if self.occupied_bandwidth_hz() > memory_bandwidth_hz {
            return Err(AfcError::Overfull {
                bins: self.spec.num_bins,
                spacing_hz: self.spec.bin_center_spacing_hz,
                available_hz: memory_bandwidth_hz,
            });
        }
        Ok(())
    }
}

/// Re-emission delay `1 / Δ`.
pub fn storage_time(comb: &AfcComb) -> f64 {
    1.0 / comb.tooth_spacing_hz()
}

/// Recall efficiency of an impedance-matched-cavity AFC with Gaussian teeth,
/// `exp(-7 / F^2)`.
///
/// Only valid when the comb optical depth is small compared to the finesse;
/// losses from decay between Zeeman levels are not included.
pub fn cavity_matched_efficiency(finesse: f64) -> Result<f64, AfcError> {
    positive("finesse", finesse)?;
    Ok((-7.0 / (finesse * finesse)).exp())
}

/// Number of bins with centres `bin_center_spacing_hz` apart that fit into
/// `memory_bandwidth_hz`.
pub fn max_bins(memory_bandwidth_hz: f64, bin_center_spacing_hz: f64) -> Result<u64, AfcError> {
    positive("memory_bandwidth_hz", memory_bandwidth_hz)?;
    positive("bin_center_spacing_hz", bin_center_spacing_hz)?;
    let ratio = memory_bandwidth_hz / bin_center_spacing_hz;
    // Absorb representation error in nominally integer ratios (3e11 / 3e8).
    let nearest = ratio.round();
    let bins = if (ratio - nearest).abs() <= 1e-9 * nearest {
        nearest
    } else {
        ratio.floor()
    };
    Ok(bins as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossComponent {
    pub name: String,
    pub transmission: f64,
}

/// Ordered chain of component transmissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    components: Vec<LossComponent>,
}

impl LossBudget {
    pub fn new(components: Vec<LossComponent>) -> Result<Self, AfcError> {
        if components.is_empty() {
            return Err(AfcError::EmptyBudget);
        }
        for c in &components {
            if !(0.0..=1.0).contains(&c.transmission) {
                return Err(AfcError::OutOfRange {
                    field: "transmission",
                    value: c.transmission,
                    expected: "a transmission in [0, 1]",
                });
            }
        }
        Ok(Self { components })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self, AfcError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, transmission)| LossComponent {
                    name: name.into(),
                    transmission,
                })
                .collect(),
        )
    }

    pub fn components(&self) -> &[LossComponent] {
        &self.components
    }
}

pub fn overall_efficiency(budget: &LossBudget) -> f64 {
    budget.components.iter().map(|c| c.transmission).product()
}

/// A named comb plus loss budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcPreset {
    pub name: String,
    pub comb: AfcComb,
    pub memory_bandwidth_hz: f64,
    pub budget: LossBudget,
}

pub const CALGARY_2014: &str = "calgary-2014";

impl AfcPreset {
    /// Finesse-two combs with 17 MHz tooth spacing in 26 bins, 100 MHz wide on
    /// 300 MHz centres, inside a ~10 GHz usable band, and the five-stage
    /// fibre-to-fibre loss chain of the waveguide memory.
    pub fn calgary_2014() -> Self {
        Self {
            name: CALGARY_2014.to_string(),
            comb: AfcComb::new(AfcCombSpec {
                tooth_spacing_hz: 17e6,
                tooth_width_hz: 8.5e6,
                bin_bandwidth_hz: 100e6,
                num_bins: 26,
                bin_center_spacing_hz: 300e6,
            })
            .expect("preset comb is valid"),
            memory_bandwidth_hz: 10e9,
            budget: LossBudget::from_pairs([
                ("fibre_to_fibre", 0.2),
                ("afc_absorption_reemission", 0.01),
                ("phase_modulator_insertion", 0.5),
                ("serrodyne_shift", 0.6),
                ("filter_cavity_mode_matching", 0.25),
            ])
            .expect("preset budget is valid"),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, AfcError> {
        match name {
            CALGARY_2014 => Ok(Self::calgary_2014()),
            other => Err(AfcError::UnknownPreset(other.to_string())),
        }
    }
}
