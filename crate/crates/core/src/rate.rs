//! Closed-form success probabilities and entanglement-distribution rate of
//! the spectrally multiplexed repeater chain, plus the direct-transmission
//! baseline.
//!
//! The chain has `n` elementary links, each probed in `m` spectral modes per
//! attempt. A link succeeds if at least one mode yields a heralding Bell-state
//! measurement at the centre station; the `n - 1` swaps and the final readout
//! each cost a factor `(eta_mem * eta_d2)^2` and every swap a further `1/2`.
//! Detectors are noiseless, two-photon visibility is perfect and multiple
//! simultaneous successes in one link count once.

use serde::{Deserialize, Serialize};

use crate::params::{half_link_transmission, ParamError, RepeaterParams};

/// Intermediate probabilities and the resulting rate for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    /// Heralding probability of a single spectral mode.
    pub p_one_mode: f64,
    /// Probability that one elementary link succeeds in at least one mode.
    pub p_link: f64,
    /// Probability that all `n` elementary links succeed.
    pub p_elementary: f64,
    pub p_success: f64,
    pub attempt_period_s: f64,
    pub rate_hz: f64,
}

/// `1 - (1 - p)^m`, accurate when `p * m` is tiny.
pub(crate) fn at_least_one(p: f64, m: u32) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    -(f64::from(m) * (-p).ln_1p()).exp_m1()
}

/// Probability of a heralding BSM in one spectral mode at a centre station:
/// `(1/2) * (eta_d1 * rho * T_half)^2`.
pub fn p_bsm_one_mode(params: &RepeaterParams) -> f64 {
    let arm = params.detector_eff_center() * params.pair_emission_prob() * half_link_transmission(params);
    0.5 * arm * arm
}

/// Probability that a single elementary link heralds in at least one of its
/// `m` modes.
pub fn p_elementary_link(params: &RepeaterParams) -> f64 {
    at_least_one(p_bsm_one_mode(params), params.num_spectral_modes())
}

/// Probability that all `n` elementary links herald in the same attempt.
pub fn p_all_links(params: &RepeaterParams) -> f64 {
    p_elementary_link(params).powi(params.num_links() as i32)
}

/// Success probability of one entanglement swap at a link intersection,
/// `(1/2) * (eta_mem * eta_d2)^2`.
pub fn p_swap(params: &RepeaterParams) -> f64 {
    0.5 * p_readout(params)
}

/// Probability that both end memories are recalled and detected,
/// `(eta_mem * eta_d2)^2`.
pub fn p_readout(params: &RepeaterParams) -> f64 {
    let x = params.memory_eff() * params.detector_eff_swap();
    x * x
}

/// End-to-end success probability per attempt,
/// `(eta_mem eta_d2)^(2n) / 2^(n-1) * P(elementary)`.
pub fn p_success(params: &RepeaterParams) -> f64 {
    let swaps = params.num_links() as i32 - 1;
    p_readout(params) * p_swap(params).powi(swaps) * p_all_links(params)
}

/// Time between attempts, `w * m / B`.
pub fn attempt_period_s(params: &RepeaterParams) -> f64 {
    params.bandwidth_inefficiency() * f64::from(params.num_spectral_modes()) / params.total_bandwidth_hz()
}

pub fn rate_success(params: &RepeaterParams) -> RateBreakdown {
    let p_one_mode = p_bsm_one_mode(params);
    let p_link = at_least_one(p_one_mode, params.num_spectral_modes());
    let p_elementary = p_link.powi(params.num_links() as i32);
    let p_success = p_success(params);
    let attempt_period_s = attempt_period_s(params);
    RateBreakdown {
        p_one_mode,
        p_link,
        p_elementary,
        p_success,
        attempt_period_s,
        rate_hz: p_success / attempt_period_s,
    }
}

/// Rate of sending one photon of each pair straight down `length_km` of fibre
/// from a source emitting at `source_rate_hz`.
pub fn rate_direct_transmission(
    source_rate_hz: f64,
    attenuation_db_per_km: f64,
    length_km: f64,
) -> Result<f64, ParamError> {
    if !(source_rate_hz > 0.0 && source_rate_hz.is_finite()) {
        return Err(ParamError::OutOfRange {
            field: "source_rate_hz",
            value: source_rate_hz,
            expected: "a positive rate in Hz",
        });
    }
    if !(length_km >= 0.0 && length_km.is_finite()) {
        return Err(ParamError::OutOfRange {
            field: "total_length_km",
            value: length_km,
            expected: "a non-negative length in km",
        });
    }
    if !(attenuation_db_per_km >= 0.0 && attenuation_db_per_km.is_finite()) {
        return Err(ParamError::OutOfRange {
            field: "attenuation_db_per_km",
            value: attenuation_db_per_km,
            expected: "a non-negative attenuation in dB/km",
        });
    }
    Ok(source_rate_hz * 10f64.powf(-attenuation_db_per_km * length_km / 10.0))
}
