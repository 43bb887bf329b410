//! Validated parameter types and unit conversions shared by every model.
//!
//! Fixed unit conventions: lengths in km, losses in dB, frequencies in Hz,
//! times in seconds. Transmissions always use the standard dB conversion
//! `10^(-loss_db / 10)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} = {value} is out of range (expected {expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
}

fn check(field: &'static str, value: f64, ok: bool, expected: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { field, value, expected })
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<(), ParamError> {
    check(field, value, (0.0..=1.0).contains(&value), "a value in [0, 1]")
}

/// Transmission through `loss_db` of loss.
pub fn transmission_from_db(loss_db: f64) -> Result<f64, ParamError> {
    check("loss_db", loss_db, loss_db >= 0.0, "a non-negative loss in dB")?;
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Unvalidated parameter set, as read from a configuration file.
///
/// Convert with [`RepeaterParams::try_from`] (or `validate`) before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub total_length_km: f64,
    pub num_links: u32,
    pub num_spectral_modes: u32,
    pub attenuation_db_per_km: f64,
    pub pair_emission_prob: f64,
    pub detector_eff_center: f64,
    pub detector_eff_swap: f64,
    pub memory_eff: f64,
    pub total_bandwidth_hz: f64,
    pub bandwidth_inefficiency: f64,
}

impl ParamSpec {
    /// The parameter set used for the optimal-rate curves: 0.9 for every
    /// efficiency and the pair probability, 0.2 dB/km, 300 GHz, w = 10.
    pub fn standard(total_length_km: f64, num_links: u32, num_spectral_modes: u32) -> Self {
        Self {
            total_length_km,
            num_links,
            num_spectral_modes,
            attenuation_db_per_km: 0.2,
            pair_emission_prob: 0.9,
            detector_eff_center: 0.9,
            detector_eff_swap: 0.9,
            memory_eff: 0.9,
            total_bandwidth_hz: 300e9,
            bandwidth_inefficiency: 10.0,
        }
    }

    pub fn validate(self) -> Result<RepeaterParams, ParamError> {
        RepeaterParams::try_from(self)
    }
}

/// Full parameter set of the multiplexed repeater chain.
///
/// Immutable once constructed; the `with_*` methods return validated copies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamSpec", into = "ParamSpec")]
pub struct RepeaterParams {
    spec: ParamSpec,
}

impl TryFrom<ParamSpec> for RepeaterParams {
    type Error = ParamError;

    fn try_from(spec: ParamSpec) -> Result<Self, Self::Error> {
        check(
            "total_length_km",
            spec.total_length_km,
            spec.total_length_km >= 0.0,
            "a non-negative length in km",
        )?;
        if spec.num_links == 0 {
            return Err(ParamError::ZeroCount { field: "num_links" });
        }
        if spec.num_spectral_modes == 0 {
            return Err(ParamError::ZeroCount {
                field: "num_spectral_modes",
            });
        }
        check(
            "attenuation_db_per_km",
            spec.attenuation_db_per_km,
            spec.attenuation_db_per_km >= 0.0,
            "a non-negative attenuation in dB/km",
        )?;
        check_unit("pair_emission_prob", spec.pair_emission_prob)?;
        check_unit("detector_eff_center", spec.detector_eff_center)?;
        check_unit("detector_eff_swap", spec.detector_eff_swap)?;
        check_unit("memory_eff", spec.memory_eff)?;
        check(
            "total_bandwidth_hz",
            spec.total_bandwidth_hz,
            spec.total_bandwidth_hz > 0.0,
            "a positive bandwidth in Hz",
        )?;
        check(
            "bandwidth_inefficiency",
            spec.bandwidth_inefficiency,
            spec.bandwidth_inefficiency >= 1.0,
            "a factor of at least 1",
        )?;
        Ok(Self { spec })
    }
}

impl From<RepeaterParams> for ParamSpec {
    fn from(p: RepeaterParams) -> Self {
        p.spec
    }
}

impl RepeaterParams {
    pub fn spec(&self) -> ParamSpec {
        self.spec
    }

    pub fn total_length_km(&self) -> f64 {
        self.spec.total_length_km
    }
    pub fn num_links(&self) -> u32 {
        self.spec.num_links
    }
    pub fn num_spectral_modes(&self) -> u32 {
        self.spec.num_spectral_modes
    }
    pub fn attenuation_db_per_km(&self) -> f64 {
        self.spec.attenuation_db_per_km
    }
    pub fn pair_emission_prob(&self) -> f64 {
        self.spec.pair_emission_prob
    }
    pub fn detector_eff_center(&self) -> f64 {
        self.spec.detector_eff_center
    }
    pub fn detector_eff_swap(&self) -> f64 {
        self.spec.detector_eff_swap
    }
    pub fn memory_eff(&self) -> f64 {
        self.spec.memory_eff
    }
    pub fn total_bandwidth_hz(&self) -> f64 {
        self.spec.total_bandwidth_hz
    }
    pub fn bandwidth_inefficiency(&self) -> f64 {
        self.spec.bandwidth_inefficiency
    }

    pub fn with_num_links(&self, num_links: u32) -> Result<Self, ParamError> {
        ParamSpec { num_links, ..self.spec }.validate()
    }

    pub fn with_num_spectral_modes(&self, num_spectral_modes: u32) -> Result<Self, ParamError> {
        ParamSpec {
            num_spectral_modes,
            ..self.spec
        }
        .validate()
    }

    pub fn with_total_length_km(&self, total_length_km: f64) -> Result<Self, ParamError> {
        ParamSpec {
            total_length_km,
            ..self.spec
        }
        .validate()
    }

    pub fn with_total_bandwidth_hz(&self, total_bandwidth_hz: f64) -> Result<Self, ParamError> {
        ParamSpec {
            total_bandwidth_hz,
            ..self.spec
        }
        .validate()
    }

    /// Fibre length from a source to the centre station, `L / 2n`.
    pub fn half_link_length_km(&self) -> f64 {
        self.spec.total_length_km / (2.0 * f64::from(self.spec.num_links))
    }
}

/// Transmission over half an elementary link, `L / 2n` km of fibre.
pub fn half_link_transmission(params: &RepeaterParams) -> f64 {
    let loss_db = params.attenuation_db_per_km() * params.half_link_length_km();
    10f64.powf(-loss_db / 10.0)
}

/// Early/late time-bin qubit geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinQubitSpec {
    bin_separation_s: f64,
    pulse_fwhm_s: f64,
}

impl TimeBinQubitSpec {
    pub fn new(bin_separation_s: f64, pulse_fwhm_s: f64) -> Result<Self, ParamError> {
        check("pulse_fwhm_s", pulse_fwhm_s, pulse_fwhm_s > 0.0, "a positive duration")?;
        check(
            "bin_separation_s",
            bin_separation_s,
            bin_separation_s > pulse_fwhm_s,
            "a separation longer than the pulse FWHM",
        )?;
        Ok(Self {
            bin_separation_s,
            pulse_fwhm_s,
        })
    }

    /// 15 ns Gaussian pulses separated by 20 ns.
    pub fn experimental() -> Self {
        Self {
            bin_separation_s: 20e-9,
            pulse_fwhm_s: 15e-9,
        }
    }

    pub fn bin_separation_s(&self) -> f64 {
        self.bin_separation_s
    }

    pub fn pulse_fwhm_s(&self) -> f64 {
        self.pulse_fwhm_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(length: f64, links: u32) -> RepeaterParams {
        ParamSpec::standard(length, links, 1).validate().unwrap()
    }

    #[test]
    fn db_conversion_examples() {
        assert_eq!(transmission_from_db(0.0).unwrap(), 1.0);
        assert_relative_eq!(transmission_from_db(10.0).unwrap(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(transmission_from_db(0.2 * 500.0).unwrap(), 1e-10, max_relative = 1e-12);
        assert!(transmission_from_db(-1.0).is_err());
        assert!(transmission_from_db(f64::NAN).is_err());
    }

    #[test]
    fn half_link_examples() {
        assert_eq!(half_link_transmission(&params(0.0, 1)), 1.0);
        assert_relative_eq!(half_link_transmission(&params(100.0, 1)), 0.1, max_relative = 1e-14);
        assert_relative_eq!(
            half_link_transmission(&params(100.0, 2)),
            10f64.powf(-0.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let mut spec = ParamSpec::standard(100.0, 1, 10);
        spec.pair_emission_prob = 1.2;
        match spec.validate() {
            Err(ParamError::OutOfRange { field, .. }) => assert_eq!(field, "pair_emission_prob"),
            other => panic!("unexpected {other:?}"),
        }

        let mut spec = ParamSpec::standard(100.0, 1, 10);
        spec.num_links = 0;
        assert_eq!(spec.validate(), Err(ParamError::ZeroCount { field: "num_links" }));

        let mut spec = ParamSpec::standard(100.0, 1, 10);
        spec.num_spectral_modes = 0;
        assert!(spec.validate().is_err());

        let mut spec = ParamSpec::standard(-1.0, 1, 10);
        assert!(spec.validate().is_err());
        spec.total_length_km = 1.0;
        spec.bandwidth_inefficiency = 0.5;
        assert!(spec.validate().is_err());
        spec.bandwidth_inefficiency = 10.0;
        spec.memory_eff = -0.1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn deserialization_validates() {
        let bad = r#"{"total_length_km":0,"num_links":1,"num_spectral_modes":1,
            "attenuation_db_per_km":0.2,"pair_emission_prob":0.9,"detector_eff_center":1.5,
            "detector_eff_swap":0.9,"memory_eff":0.9,"total_bandwidth_hz":3e11,
            "bandwidth_inefficiency":10}"#;
        let err = serde_json::from_str::<RepeaterParams>(bad).unwrap_err();
        assert!(err.to_string().contains("detector_eff_center"));
    }

    #[test]
    fn time_bin_spec() {
        assert!(TimeBinQubitSpec::new(20e-9, 15e-9).is_ok());
        assert!(TimeBinQubitSpec::new(10e-9, 15e-9).is_err());
        assert!(TimeBinQubitSpec::new(20e-9, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn db_is_multiplicative(a in 0.0f64..200.0, b in 0.0f64..200.0) {
            let lhs = transmission_from_db(a + b).unwrap();
            let rhs = transmission_from_db(a).unwrap() * transmission_from_db(b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
            if b > 0.0 {
                prop_assert!(transmission_from_db(a + b).unwrap() < transmission_from_db(a).unwrap());
            }
        }

        #[test]
        fn doubling_links_takes_square_root(length in 0.0f64..2000.0, k in 1u32..32) {
            let coarse = half_link_transmission(&params(length, k));
            let fine = half_link_transmission(&params(length, 2 * k));
            prop_assert!((fine - coarse.sqrt()).abs() <= 1e-12 * fine);
        }
    }
}
