//! Frequency-selective recall through a Lorentzian filter cavity and the
//! fidelity lost to light leaking in from neighbouring spectral bins.
//!
//! Count model: after the feed-forward frequency shift, every bin's light
//! reaches the detector weighted by the cavity transmission at its detuning
//! from resonance. Neighbours carry the state orthogonal to the test qubit,
//! so all their leaked detections land in the error projection. Pulses are
//! treated as narrow compared with the bins; dark counts and shift
//! inefficiency are not part of this model.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afc::AfcComb;
use crate::params::TimeBinQubitSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrosstalkError {
    #[error("{field} = {value} is out of range (expected {expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("neighbour at {0} Hz coincides with the test bin")]
    NeighbourOnTestBin(f64),
    #[error("fidelity undefined: no counts reach the detector")]
    NoCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityFilter {
    fwhm_hz: f64,
    resonance_detuning_hz: f64,
}

impl CavityFilter {
    pub fn new(fwhm_hz: f64, resonance_detuning_hz: f64) -> Result<Self, CrosstalkError> {
        if !(fwhm_hz > 0.0 && fwhm_hz.is_finite()) {
            return Err(CrosstalkError::OutOfRange {
                field: "fwhm_hz",
                value: fwhm_hz,
                expected: "a positive linewidth",
            });
        }
        if !resonance_detuning_hz.is_finite() {
            return Err(CrosstalkError::OutOfRange {
                field: "resonance_detuning_hz",
                value: resonance_detuning_hz,
                expected: "a finite detuning",
            });
        }
        Ok(Self {
            fwhm_hz,
            resonance_detuning_hz,
        })
    }

    /// 70 MHz monolithic cavity resonant at 2.85 GHz detuning.
    pub fn monolithic() -> Self {
        Self {
            fwhm_hz: 70e6,
            resonance_detuning_hz: 2.85e9,
        }
    }

    pub fn fwhm_hz(&self) -> f64 {
        self.fwhm_hz
    }

    pub fn resonance_detuning_hz(&self) -> f64 {
        self.resonance_detuning_hz
    }
}

/// Cavity power transmission `1 / (1 + (2δ/Γ)^2)` at `detuning_hz` from
/// resonance.
pub fn lorentzian_transmission(detuning_hz: f64, filter: &CavityFilter) -> f64 {
    let x = 2.0 * detuning_hz / filter.fwhm_hz;
    1.0 / (1.0 + x * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkScenario {
    pub test_bin_detuning_hz: f64,
    pub neighbor_detunings_hz: Vec<f64>,
    pub mean_photons_test: f64,
    pub mean_photons_neighbor: f64,
    pub filter: CavityFilter,
    /// Shift applied to all bins before the cavity; `None` moves the test
    /// bin exactly onto resonance.
    pub frequency_shift_hz: Option<f64>,
}

impl CrosstalkScenario {
    fn validate(&self) -> Result<(), CrosstalkError> {
        if !(self.mean_photons_test > 0.0 && self.mean_photons_test.is_finite()) {
            return Err(CrosstalkError::OutOfRange {
                field: "mean_photons_test",
                value: self.mean_photons_test,
                expected: "a positive mean photon number",
            });
        }
        if !(self.mean_photons_neighbor >= 0.0 && self.mean_photons_neighbor.is_finite()) {
            return Err(CrosstalkError::OutOfRange {
                field: "mean_photons_neighbor",
                value: self.mean_photons_neighbor,
                expected: "a non-negative mean photon number",
            });
        }
        if let Some(&d) = self
            .neighbor_detunings_hz
            .iter()
            .find(|&&d| d == self.test_bin_detuning_hz)
        {
            return Err(CrosstalkError::NeighbourOnTestBin(d));
        }
        Ok(())
    }

    pub fn shift_hz(&self) -> f64 {
        self.frequency_shift_hz
            .unwrap_or(self.filter.resonance_detuning_hz - self.test_bin_detuning_hz)
    }

    fn transmission(&self, bin_detuning_hz: f64) -> f64 {
        let from_resonance = bin_detuning_hz + self.shift_hz() - self.filter.resonance_detuning_hz;
        lorentzian_transmission(from_resonance, &self.filter)
    }

    /// Same scenario keeping only the first `k` neighbours.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            neighbor_detunings_hz: self.neighbor_detunings_hz[..k.min(self.neighbor_detunings_hz.len())].to_vec(),
            ..self.clone()
        }
    }
}

/// Test-qubit fidelity `S / (S + X)` with signal counts `S` and orthogonal
/// leakage `X` from the neighbours.
pub fn crosstalk_fidelity(scenario: &CrosstalkScenario) -> Result<f64, CrosstalkError> {
    scenario.validate()?;
    let signal = scenario.mean_photons_test * scenario.transmission(scenario.test_bin_detuning_hz);
    let leak: f64 = scenario
        .neighbor_detunings_hz
        .iter()
        .map(|&d| scenario.mean_photons_neighbor * scenario.transmission(d))
        .sum();
    if signal + leak <= 0.0 {
        return Err(CrosstalkError::NoCounts);
    }
    Ok(signal / (signal + leak))
}

/// Fidelity with the first `k` neighbours present, for `k = 0..=len`.
pub fn saturation_curve(scenario: &CrosstalkScenario) -> Result<Vec<(usize, f64)>, CrosstalkError> {
    (0..=scenario.neighbor_detunings_hz.len())
        .map(|k| Ok((k, crosstalk_fidelity(&scenario.truncated(k))?)))
        .collect()
}

/// Bin centres of a comb whose first bin sits at `first_center_hz`.
pub fn bin_centers(comb: &AfcComb, first_center_hz: f64) -> Vec<f64> {
    (0..comb.num_bins())
        .map(|k| first_center_hz + f64::from(k) * comb.bin_center_spacing_hz())
        .collect()
}

/// Orders the bins other than `test_hz` by distance from the test bin,
/// alternating sides (above first) while both sides have bins left.
pub fn alternating_neighbors(centers: &[f64], test_hz: f64) -> Vec<f64> {
    let mut above: Vec<f64> = centers.iter().copied().filter(|&c| c > test_hz).collect();
    let mut below: Vec<f64> = centers.iter().copied().filter(|&c| c < test_hz).collect();
    above.sort_by(|a, b| a.total_cmp(b));
    below.sort_by(|a, b| b.total_cmp(a));
    let mut out = Vec::with_capacity(above.len() + below.len());
    let (mut a, mut b) = (above.into_iter(), below.into_iter());
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (x, y) => out.extend(x.into_iter().chain(y)),
        }
    }
    out
}

pub const DEFAULT_FIRST_BIN_HZ: f64 = 150e6;
pub const DEFAULT_TEST_BIN_HZ: f64 = 1350e6;
pub const DEFAULT_MEAN_PHOTONS: f64 = 0.6;

/// Test qubit at 1350 MHz in a comb laid out from 150 MHz upwards, every
/// remaining bin filled with an orthogonal neighbour in alternating order
/// (1650, 1050, 1950, 750 MHz, ...), equal mean photon numbers and the
/// 70 MHz cavity at 2.85 GHz.
pub fn default_scenario(comb: &AfcComb) -> CrosstalkScenario {
    let centers = bin_centers(comb, DEFAULT_FIRST_BIN_HZ);
    CrosstalkScenario {
        test_bin_detuning_hz: DEFAULT_TEST_BIN_HZ,
        neighbor_detunings_hz: alternating_neighbors(&centers, DEFAULT_TEST_BIN_HZ),
        mean_photons_test: DEFAULT_MEAN_PHOTONS,
        mean_photons_neighbor: DEFAULT_MEAN_PHOTONS,
        filter: CavityFilter::monolithic(),
        frequency_shift_hz: None,
    }
}

/// Relative phase `2π Δν Δt mod 2π` picked up by a time-bin qubit shifted
/// by `shift_hz`.
pub fn phase_correction(shift_hz: f64, qubit: &TimeBinQubitSpec) -> f64 {
    let turns = shift_hz * qubit.bin_separation_s();
    let frac = turns - turns.round();
    // Snap rounding noise around whole turns to zero.
    let frac = if frac.abs() < 1e-12 { 0.0 } else { frac };
    (TAU * frac).rem_euclid(TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afc::AfcPreset;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn filter() -> CavityFilter {
        CavityFilter::new(70e6, 0.0).unwrap()
    }

    fn scenario(neighbors: Vec<f64>) -> CrosstalkScenario {
        CrosstalkScenario {
            test_bin_detuning_hz: 0.0,
            neighbor_detunings_hz: neighbors,
            mean_photons_test: 0.6,
            mean_photons_neighbor: 0.6,
            filter: filter(),
            frequency_shift_hz: None,
        }
    }

    #[test]
    fn lorentzian_examples() {
        assert_eq!(lorentzian_transmission(0.0, &filter()), 1.0);
        assert_relative_eq!(lorentzian_transmission(35e6, &filter()), 0.5, max_relative = 1e-15);
        let expected = 1.0 / (1.0 + (600.0f64 / 70.0).powi(2));
        assert_relative_eq!(
            lorentzian_transmission(300e6, &filter()),
            expected,
            max_relative = 1e-14
        );
        assert_relative_eq!(expected, 0.01344, epsilon = 5e-5);
        assert!(CavityFilter::new(0.0, 0.0).is_err());
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(crosstalk_fidelity(&scenario(vec![])).unwrap(), 1.0);
        let t = lorentzian_transmission(300e6, &filter());
        let f = crosstalk_fidelity(&scenario(vec![300e6])).unwrap();
        assert_relative_eq!(f, 1.0 / (1.0 + t), max_relative = 1e-14);
        assert_relative_eq!(f, 0.9867, epsilon = 1e-4);
    }

    #[test]
    fn far_neighbours_barely_matter() {
        let order = [300e6, -300e6, 600e6, -600e6, 900e6, -900e6, 1200e6, -1200e6];
        for k in 4..order.len() {
            let near = crosstalk_fidelity(&scenario(order[..k].to_vec())).unwrap();
            let far = crosstalk_fidelity(&scenario(order[..=k].to_vec())).unwrap();
            assert!(near > far && near - far < 2e-3, "{k}: {near} {far}");
        }
        assert!(lorentzian_transmission(900e6, &filter()) < 0.0016);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = scenario(vec![0.0]);
        assert_eq!(crosstalk_fidelity(&s), Err(CrosstalkError::NeighbourOnTestBin(0.0)));
        s.neighbor_detunings_hz.clear();
        s.mean_photons_test = 0.0;
        assert!(crosstalk_fidelity(&s).is_err());
        s.mean_photons_test = 1.0;
        s.mean_photons_neighbor = -1.0;
        assert!(crosstalk_fidelity(&s).is_err());
    }

    #[test]
    fn default_layout_order() {
        let s = default_scenario(&AfcPreset::calgary_2014().comb);
        assert_eq!(
            &s.neighbor_detunings_hz[..8],
            &[1650e6, 1050e6, 1950e6, 750e6, 2250e6, 450e6, 2550e6, 150e6]
        );
        assert_eq!(s.neighbor_detunings_hz[8], 2850e6);
        assert_eq!(s.neighbor_detunings_hz.len(), 25);
        assert_eq!(s.shift_hz(), 1500e6);
        let curve = saturation_curve(&s).unwrap();
        assert_eq!(curve[0], (0, 1.0));
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn phase_examples() {
        let q = TimeBinQubitSpec::experimental();
        assert_relative_eq!(phase_correction(25e6, &q), PI, max_relative = 1e-12);
        assert_eq!(phase_correction(50e6, &q), 0.0);
        assert_eq!(phase_correction(0.0, &q), 0.0);
        assert_relative_eq!(phase_correction(-12.5e6, &q), 1.5 * PI, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn lorentzian_even_and_decreasing(d in 0.0f64..1e10, e in 1.0f64..1e9) {
            let f = filter();
            prop_assert_eq!(lorentzian_transmission(d, &f), lorentzian_transmission(-d, &f));
            prop_assert!(lorentzian_transmission(d + e, &f) < lorentzian_transmission(d, &f));
        }

        #[test]
        fn adding_neighbours_never_helps(ns in proptest::collection::vec(1e6f64..5e9, 0..10), extra in 1e6f64..5e9, rot in 0usize..10) {
            let base = crosstalk_fidelity(&scenario(ns.clone())).unwrap();
            let mut more = ns.clone();
            more.push(extra);
            prop_assert!(crosstalk_fidelity(&scenario(more.clone())).unwrap() <= base);
            if !more.is_empty() {
                let k = rot % more.len();
                more.rotate_left(k);
                let permuted = crosstalk_fidelity(&scenario(more.clone())).unwrap();
                let mut sorted = more;
                sorted.sort_by(|a, b| a.total_cmp(b));
                prop_assert!((permuted - crosstalk_fidelity(&scenario(sorted)).unwrap()).abs() < 1e-14);
            }
        }

        #[test]
        fn distant_neighbours_vanish(n in 1usize..20) {
            let f = crosstalk_fidelity(&scenario(vec![1e18; n])).unwrap();
            prop_assert!((f - 1.0).abs() < 1e-9);
        }

        #[test]
        fn phase_in_range(shift in -1e10f64..1e10) {
            let p = phase_correction(shift, &TimeBinQubitSpec::experimental());
            prop_assert!((0.0..TAU).contains(&p));
        }
    }
}
