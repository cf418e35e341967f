//! Geometric multipath channels for the BS-RIS-UE cascade, path loss and link metrics.
//!
//! The BS-RIS channel is `sqrt(N M / L_g) sum_l rho_l a_R(theta_l) a_B(phi_l)^H` and each
//! RIS-UE channel is `sqrt(N / L_b) sum_l rho_l a_R(psi_l)`, with unit-norm steering vectors and
//! `|rho_l|^2` drawn from the distance-dependent LOS/NLOS path-loss law.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularInterval, AngularSet, ArrayLayout};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Distance-dependent path loss with a Gaussian-shaped LOS probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub los_gain: f64,
    pub nlos_gain: f64,
    pub los_scale_m: f64,
}

impl PathLossModel {
    /// Free-space reference gain `(lambda / 4 pi)^2`, NLOS 20 dB below.
    pub fn for_wavelength(wavelength_m: f64) -> Self {
        let los_gain = (wavelength_m / (4.0 * PI)).powi(2);
        Self {
            los_exponent: 2.0,
            nlos_exponent: 3.3,
            los_gain,
            nlos_gain: 0.01 * los_gain,
            los_scale_m: 50.0,
        }
    }

    pub fn los_probability(&self, distance_m: f64) -> f64 {
        (-(distance_m / self.los_scale_m).powi(2)).exp()
    }

    /// Power gain at `distance_m` for a known LOS state.
    pub fn gain(&self, distance_m: f64, los: bool) -> f64 {
        if los {
            self.los_gain * distance_m.powf(-self.los_exponent)
        } else {
            self.nlos_gain * distance_m.powf(-self.nlos_exponent)
        }
    }

    pub fn sample_path_gain<R: Rng + ?Sized>(&self, distance_m: f64, rng: &mut R) -> PathGain {
        let los = rng.gen::<f64>() < self.los_probability(distance_m);
        PathGain { power: self.gain(distance_m, los), los }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathGain {
    pub power: f64,
    pub los: bool,
}

/// Transmit power, noise and pilot budget of one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub bandwidth_hz: f64,
    pub pilots: usize,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Unit-modulus RIS reflection coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct RisPhase(CVec);

impl RisPhase {
    pub fn new(v: CVec) -> Result<Self> {
        if let Some(bad) = v.iter().find(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::invalid(format!("RIS coefficient {bad} is not unit modulus")));
        }
        Ok(Self(v))
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self(CVec::from_iterator(angles.len(), angles.iter().map(|&t| Complex64::from_polar(1.0, t))))
    }

    /// Unit-modulus projection `e^{j arg(v)}`; zero entries map to 1.
    pub fn project(v: &CVec) -> Self {
        Self(v.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }))
    }

    pub fn identity(n: usize) -> Self {
        Self(CVec::from_element(n, Complex64::new(1.0, 0.0)))
    }

    pub fn as_vector(&self) -> &CVec {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Geometry-level description of one propagation path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Spatial frequency at the transmitting array.
    pub departure: f64,
    /// Spatial frequency at the receiving array (unused for RIS-UE paths).
    pub arrival: f64,
    pub power: f64,
    pub los: bool,
    /// Departure direction lies in the blocked set; the path carries no energy.
    pub blocked: bool,
}

/// Inputs for drawing large-scale channel parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    pub bs_paths: usize,
    pub ue_paths: usize,
    pub bs_ris_m: f64,
    pub ris_ue_m: Vec<f64>,
    /// Departure spatial frequencies at the BS are uniform on this interval.
    pub departure_range: AngularInterval,
    /// BS departure directions (spatial frequency) occluded by obstacles.
    pub blocked: AngularSet,
}

impl ChannelSpec {
    /// Cascaded power gain of one perfectly aligned LOS path pair at the nominal distances.
    pub fn reference_gain(&self, model: &PathLossModel, bs_elements: usize, ris_elements: usize) -> f64 {
        let (m, n) = (bs_elements as f64, ris_elements as f64);
        let ue_d = self.ris_ue_m.iter().sum::<f64>() / self.ris_ue_m.len().max(1) as f64;
        let array = n * n * m / (self.bs_paths as f64 * self.ue_paths as f64);
        array * model.gain(self.bs_ris_m, true) * model.gain(ue_d, true)
    }
}

/// Slowly varying channel parameters: directions, path powers and LOS states.
#[derive(Clone, Debug, PartialEq)]
pub struct LargeScale {
    pub bs_ris: Vec<Path>,
    pub ris_ue: Vec<Vec<Path>>,
}

/// One small-scale realisation of all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// BS-RIS channel, `N x M`.
    pub h_br: CMat,
    /// RIS-UE channels, one `N` vector per user.
    pub h_ru: Vec<CVec>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.h_ru.len()
    }

    /// Effective BS-side channel of every user under RIS phases `phase`.
    pub fn effective(&self, phase: &RisPhase) -> Result<Vec<CVec>> {
        self.h_ru.iter().map(|h| cascade(h, phase, &self.h_br)).collect()
    }
}

impl LargeScale {
    pub fn draw<R: Rng + ?Sized>(spec: &ChannelSpec, model: &PathLossModel, rng: &mut R) -> Result<Self> {
        if spec.bs_paths == 0 || spec.ue_paths == 0 || spec.ris_ue_m.is_empty() {
            return Err(Error::invalid("channel needs at least one path per link and one user"));
        }
        let r = spec.departure_range;
        let bs_ris = (0..spec.bs_paths)
            .map(|_| {
                let departure = rng.gen_range(r.lo..r.hi);
                let arrival = rng.gen_range(-1.0..1.0);
                let g = model.sample_path_gain(spec.bs_ris_m, rng);
                let blocked = spec.blocked.contains(departure);
                Path { departure, arrival, power: g.power, los: g.los, blocked }
            })
            .collect();
        let ris_ue = spec
            .ris_ue_m
            .iter()
            .map(|&d| {
                (0..spec.ue_paths)
                    .map(|_| {
                        let g = model.sample_path_gain(d, rng);
                        let departure = rng.gen_range(-1.0..1.0);
                        Path { departure, arrival: 0.0, power: g.power, los: g.los, blocked: false }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { bs_ris, ris_ue })
    }

    /// Draws fresh path phases, uniform on `[0, 2 pi)`.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        bs: &ArrayLayout,
        ris: &ArrayLayout,
        rng: &mut R,
    ) -> Result<ChannelRealization> {
        let (m, n) = (bs.len(), ris.len());
        let scale_br = ((n * m) as f64 / self.bs_ris.len() as f64).sqrt();
        let mut h_br = CMat::zeros(n, m);
        for p in &self.bs_ris {
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            if p.blocked {
                continue;
            }
            let rho = Complex64::from_polar(scale_br * p.power.sqrt(), phase);
            let a_r = ris.steering_u(p.arrival)?;
            let a_b = bs.steering_u(p.departure)?;
            h_br.ger(rho, &a_r, &a_b.conjugate(), Complex64::new(1.0, 0.0));
        }
        let h_ru = self
            .ris_ue
            .iter()
            .map(|paths| {
                let scale = (n as f64 / paths.len() as f64).sqrt();
                let mut h = CVec::zeros(n);
                for p in paths {
                    let rho = Complex64::from_polar(scale * p.power.sqrt(), rng.gen_range(0.0..2.0 * PI));
                    h.axpy(rho, &ris.steering_u(p.departure)?, Complex64::new(1.0, 0.0));
                }
                Ok(h)
            })
            .collect::<Result<_>>()?;
        Ok(ChannelRealization { h_br, h_ru })
    }

    /// Exact `E[H_BR H_BR^H]` and `E[h_k h_k^H]` over the uniform path phases.
    pub fn covariances(&self, bs: &ArrayLayout, ris: &ArrayLayout) -> Result<(CMat, Vec<CMat>)> {
        let (m, n) = (bs.len(), ris.len());
        let scale_br = (n * m) as f64 / self.bs_ris.len() as f64;
        let mut r_br = CMat::zeros(n, n);
        for p in self.bs_ris.iter().filter(|p| !p.blocked) {
            let a = ris.steering_u(p.arrival)?;
            r_br.ger(Complex64::new(scale_br * p.power, 0.0), &a, &a.conjugate(), Complex64::new(1.0, 0.0));
        }
        let r_ru = self
            .ris_ue
            .iter()
            .map(|paths| {
                let scale = n as f64 / paths.len() as f64;
                let mut r = CMat::zeros(n, n);
                for p in paths {
                    let a = ris.steering_u(p.departure)?;
                    r.ger(Complex64::new(scale * p.power, 0.0), &a, &a.conjugate(), Complex64::new(1.0, 0.0));
                }
                Ok(r)
            })
            .collect::<Result<_>>()?;
        Ok((r_br, r_ru))
    }
}

/// Draws large-scale parameters and one realisation from a seed.
pub fn synthesize_channels(
    bs: &ArrayLayout,
    ris: &ArrayLayout,
    spec: &ChannelSpec,
    model: &PathLossModel,
    seed: u64,
) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LargeScale::draw(spec, model, &mut rng)?.realize(bs, ris, &mut rng)
}

/// Row vector `h_ru^H diag(phase) H_BR`, returned as a column so that `H_k w = g.dot(w)`.
pub fn cascade(h_ru: &CVec, phase: &RisPhase, h_br: &CMat) -> Result<CVec> {
    let n = h_br.nrows();
    if h_ru.len() != n {
        return Err(Error::Dimension { expected: n, found: h_ru.len() });
    }
    if phase.len() != n {
        return Err(Error::Dimension { expected: n, found: phase.len() });
    }
    let coeff = h_ru.conjugate().component_mul(phase.as_vector());
    Ok(h_br.transpose() * coeff)
}

/// Received SNR `p |H_k w|^2 / sigma^2`.
pub fn snr(effective: &CVec, w: &CVec, tx_power_w: f64, noise_power_w: f64) -> f64 {
    tx_power_w * effective.dot(w).norm_sqr() / noise_power_w
}

/// Spectral efficiency in bit/s/Hz.
pub fn rate(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Shannon capacity in bit/s.
pub fn capacity(snr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * rate(snr)
}

/// SNR of matched-filter beamforming with `‖w‖^2 = power`.
pub fn matched_filter_snr(effective: &CVec, power: f64, tx_power_w: f64, noise_power_w: f64) -> f64 {
    tx_power_w * power * effective.norm_squared() / noise_power_w
}
