//! Oracles shared by the integration tests. Each one is written out from
//! the model definitions directly and does not call into the library's
//! formulas.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use specmux::decoy::{DecoyDataset, DecoyGains, IntensitySetting};
use specmux::{ParamSpec, RepeaterParams};

/// Success probability of one repeater round, by explicit products.
pub fn p_success_oracle(s: &ParamSpec) -> f64 {
    let half_km = s.total_length_km / (2.0 * f64::from(s.num_links));
    let t = 10f64.powf(-s.attenuation_db_per_km * half_km / 10.0);
    let amp = s.detector_eff_center * s.pair_emission_prob * t;
    let p1 = 0.5 * amp * amp;
    let mut miss = 1.0;
    for _ in 0..s.num_spectral_modes {
        miss *= 1.0 - p1;
    }
    let p_link = 1.0 - miss;
    let readout = s.memory_eff * s.detector_eff_swap;
    let mut p = readout * readout;
    for _ in 0..s.num_links {
        p *= p_link;
    }
    for _ in 1..s.num_links {
        p *= 0.5 * readout * readout;
    }
    p
}

pub fn standard(length_km: f64, n: u32, m: u32) -> RepeaterParams {
    ParamSpec::standard(length_km, n, m).validate().unwrap()
}

/// Source with `n`-photon yield `Y_n = 1 - (1 - y0)(1 - eta)^n` and error
/// yield `E_n Y_n = e_d eta_n + e0 y0 (1 - eta_n)`, `eta_n = 1 - (1 - eta)^n`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSource {
    pub eta: f64,
    pub y0: f64,
    pub e_d: f64,
    pub e0: f64,
}

impl SyntheticSource {
    pub fn eta_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.eta).powi(n as i32)
    }

    pub fn yield_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.y0) * (1.0 - self.eta).powi(n as i32)
    }

    pub fn error_yield_n(&self, n: u32) -> f64 {
        let en = self.eta_n(n);
        self.e_d * en + self.e0 * self.y0 * (1.0 - en)
    }

    pub fn y1(&self) -> f64 {
        self.yield_n(1)
    }

    pub fn e1(&self) -> f64 {
        self.error_yield_n(1) / self.y1()
    }

    /// Poisson-weighted sum over photon numbers, summed until the weights
    /// are negligible.
    fn poisson_sum(mu: f64, f: impl Fn(u32) -> f64) -> f64 {
        let mut weight = (-mu).exp();
        let mut total = 0.0;
        for n in 0..400u32 {
            if n > 0 {
                weight *= mu / f64::from(n);
            }
            total += weight * f(n);
            if n as f64 > mu && weight < 1e-300 {
                break;
            }
        }
        total
    }

    pub fn gain(&self, mu: f64) -> f64 {
        Self::poisson_sum(mu, |n| self.yield_n(n))
    }

    pub fn error_gain(&self, mu: f64) -> f64 {
        Self::poisson_sum(mu, |n| self.error_yield_n(n))
    }

    pub fn exact_gains(&self, mu_s: f64, mu_d: f64) -> DecoyGains {
        let q_d = self.gain(mu_d);
        DecoyGains {
            mu_signal: mu_s,
            mu_decoy: mu_d,
            q_signal: self.gain(mu_s),
            q_decoy: q_d,
            y0: self.gain(0.0),
            e_decoy: self.error_gain(mu_d) / q_d,
            e_vacuum: 0.5,
        }
    }

    /// Binomially sampled detections and errors, `pulses` per intensity.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mu_s: f64, mu_d: f64, pulses: u64) -> DecoyDataset {
        let mut setting = |mu: f64| {
            let q = self.gain(mu);
            let det = Binomial::new(pulses, q).unwrap().sample(rng);
            let err = if det == 0 {
                0
            } else {
                Binomial::new(det, (self.error_gain(mu) / q).min(1.0))
                    .unwrap()
                    .sample(rng)
            };
            IntensitySetting::new(mu, pulses, det, err).unwrap()
        };
        let (s, d, v) = (setting(mu_s), setting(mu_d), setting(0.0));
        DecoyDataset::new(s, d, v).unwrap()
    }
}
