//! Stochastic photon-by-photon recooling simulator.
//!
//! The default stepper simulates the phase-averaged scattering model: while
//! the energy is fixed the instantaneous Doppler shift is an i.i.d. arcsine
//! draw, so scattering is a thinned Poisson process. Waiting times are drawn
//! exactly against the largest reachable rate and proposals accepted with
//! probability R(Δ+Δ_D)/R_bound, which reproduces the sub-stepped Bernoulli
//! chain (steps ≤ 1/(20·max rate)) in distribution at event-level cost.
//! Each accepted scatter changes the energy by ħk_z·v = −ħΔ_D plus one
//! recoil quantum ħ²k²/2m.
//!
//! A `FullPhase` stepper integrates the oscillation phase explicitly and
//! applies momentum kicks to the velocity; it exists for validating the
//! phase-averaged assumption at roughly 10× the cost.

use crate::model::{DistKind, EnergyDistribution, RecoolParams};
use crate::physics::constants::HBAR;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error("{name} must satisfy {requirement}, got {value}")]
    Config {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("delays list is empty")]
    NoDelays,
}

/// Simulation stepper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Phase-averaged arcsine-sampled scattering (exact event times).
    #[default]
    PhaseAveraged,
    /// Explicit oscillation phase with Bernoulli sub-steps; validation mode.
    FullPhase,
}

/// Monte Carlo configuration. Defaults follow the measurement protocol:
/// 500 repetitions, 50 µs bins, 4 ms traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub repetitions: u32,
    /// Bin width, s.
    pub bin_width: f64,
    /// Trace duration, s; the trace has floor(duration/bin_width) bins.
    pub duration: f64,
    /// Continuous heating during the trace, quanta/s (0 = off).
    pub heating_rate: f64,
    /// Shape (and standalone mean) of the initial-energy distribution;
    /// [`run_experiment`] recomputes the mean from the heating protocol.
    pub dist: EnergyDistribution,
    /// Fraction of scattered photons that are detected.
    pub detection_efficiency: f64,
    /// Detected background, counts/s (Poisson per bin).
    pub background_rate: f64,
    pub stepper: Stepper,
}

impl McConfig {
    /// Protocol defaults with a caller-chosen seed.
    pub fn protocol(seed: u64) -> Self {
        Self {
            seed,
            repetitions: 500,
            bin_width: 50e-6,
            duration: 4e-3,
            heating_rate: 0.0,
            dist: EnergyDistribution {
                kind: DistKind::Chi1,
                mean_energy: 1e-23,
            },
            detection_efficiency: 1.0,
            background_rate: 0.0,
            stepper: Stepper::PhaseAveraged,
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.repetitions < 1 {
            return Err(McError::Config {
                name: "repetitions",
                value: self.repetitions as f64,
                requirement: ">= 1",
            });
        }
        if !(self.bin_width > 0.0) {
            return Err(McError::Config {
                name: "bin_width",
                value: self.bin_width,
                requirement: "> 0",
            });
        }
        if self.duration < self.bin_width {
            return Err(McError::Config {
                name: "duration",
                value: self.duration,
                requirement: ">= bin_width",
            });
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return Err(McError::Config {
                name: "detection_efficiency",
                value: self.detection_efficiency,
                requirement: "in [0, 1]",
            });
        }
        if self.heating_rate < 0.0 || self.background_rate < 0.0 {
            return Err(McError::Config {
                name: "heating_rate/background_rate",
                value: self.heating_rate.min(self.background_rate),
                requirement: ">= 0",
            });
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        (self.duration / self.bin_width).floor() as usize
    }
}

/// Photon counts of one repetition, plus the motional energy at the end of
/// each bin (diagnostics for cross-checks against the analytic trajectory).
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRepetition {
    pub counts: Vec<u32>,
    pub bin_end_energy: Vec<f64>,
    pub final_energy: f64,
}

/// Metadata echoed into every trace for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    /// RNG algorithm and stream policy.
    pub rng: String,
    pub seed: u64,
    /// Heating delay before recooling, s.
    pub delay: f64,
    /// Injected heating rate during the dark delay, quanta/s (if simulated).
    pub ndot_true: Option<f64>,
    pub params: RecoolParams,
    pub config: McConfig,
}

/// A repetition-averaged fluorescence trace: mean detected counts per bin
/// and their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceTrace {
    /// Bin width, s.
    pub bin_width: f64,
    pub repetitions: u32,
    pub mean_counts: Vec<f64>,
    pub stderr: Vec<f64>,
    pub metadata: TraceMetadata,
}

impl FluorescenceTrace {
    pub fn bin_start_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.mean_counts.len()).map(move |i| i as f64 * self.bin_width)
    }
}

const RNG_DESCRIPTION: &str = "chacha8 (counter-based); stream = (delay_index << 32) | repetition";

/// Draw one energy from a distribution shape scaled to `mean`.
pub fn sample_energy<R: Rng + ?Sized>(kind: DistKind, mean: f64, rng: &mut R) -> f64 {
    loop {
        let e = match kind {
            DistKind::Delta => mean,
            DistKind::Chi1 => {
                let z: f64 = StandardNormal.sample(rng);
                mean * z * z
            }
            DistKind::Exponential => {
                let u: f64 = rng.gen::<f64>();
                -mean * (1.0 - u).ln()
            }
        };
        if e > 0.0 {
            return e;
        }
    }
}

/// Draw an initial energy: the distribution's mean is the Doppler-limit
/// energy plus the heating accumulated over the dark delay,
/// Ē = E_D + ṅ·delay·ħω_z.
pub fn sample_initial_energy<R: Rng + ?Sized>(
    kind: DistKind,
    e_doppler: f64,
    ndot: f64,
    delay: f64,
    omega_z: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(ndot >= 0.0 && delay >= 0.0);
    sample_energy(kind, e_doppler + ndot * delay * HBAR * omega_z, rng)
}

/// Largest two-level rate reachable at energy E: the resonance if the
/// Doppler excursion covers it, otherwise the rate at closest approach.
fn reachable_max_rate(params: &RecoolParams, delta_max: f64) -> f64 {
    let detuning = params.detuning_angular().abs();
    if detuning <= delta_max {
        params.peak_scatter_rate()
    } else {
        params.scatter_rate_at(detuning - delta_max)
    }
}

/// Simulate one recooling repetition from initial energy `e0`.
pub fn simulate_recool_trace<R: Rng + ?Sized>(
    e0: f64,
    params: &RecoolParams,
    cfg: &McConfig,
    rng: &mut R,
) -> SingleRepetition {
    let n_bins = cfg.bins();
    let t_end = n_bins as f64 * cfg.bin_width;
    let mut counts = vec![0u32; n_bins];
    let mut energies = vec![f64::NAN; n_bins];
    let e = match cfg.stepper {
        Stepper::PhaseAveraged => {
            phase_averaged_rep(e0, params, cfg, t_end, &mut counts, &mut energies, rng)
        }
        Stepper::FullPhase => full_phase_rep(e0, params, cfg, t_end, &mut counts, &mut energies, rng),
    };
    for slot in energies.iter_mut() {
        if slot.is_nan() {
            *slot = e;
        }
    }
    if cfg.background_rate > 0.0 {
        let lambda = cfg.background_rate * cfg.bin_width;
        let pois = Poisson::new(lambda).expect("validated background rate");
        for c in counts.iter_mut() {
            *c += pois.sample(rng) as u32;
        }
    }
    SingleRepetition {
        counts,
        bin_end_energy: energies,
        final_energy: e,
    }
}

/// Record the energy at every bin boundary crossed when time jumps from the
/// bin of `t_prev` to the bin of `t_now`.
#[inline]
fn record_crossings(energies: &mut [f64], bin_width: f64, t_prev: f64, t_now: f64, e: f64) {
    let b_prev = (t_prev / bin_width) as usize;
    let b_now = ((t_now / bin_width) as usize).min(energies.len());
    for slot in energies.iter_mut().take(b_now).skip(b_prev) {
        *slot = e;
    }
}

fn phase_averaged_rep<R: Rng + ?Sized>(
    e0: f64,
    params: &RecoolParams,
    cfg: &McConfig,
    t_end: f64,
    counts: &mut [u32],
    energies: &mut [f64],
    rng: &mut R,
) -> f64 {
    let recoil = params.recoil_energy();
    let drip = cfg.heating_rate * HBAR * params.omega_z; // J/s
    let delta = params.detuning_angular();
    let eff = cfg.detection_efficiency;
    let mut e = e0.max(0.0);
    let mut t = 0.0;
    loop {
        // With continuous heating the rate bound must hold over the whole
        // proposal window; cap the window so the energy grows by <= 1 % and
        // bound with the end-of-window energy (the reachable max rate is
        // non-decreasing in E).
        let (window, bound) = if drip > 0.0 {
            let w = 0.01 * e.max(1e-30) / drip;
            let dm_hi = params.max_doppler_shift(e + drip * w);
            (w, reachable_max_rate(params, dm_hi))
        } else {
            let dm = params.max_doppler_shift(e);
            (f64::INFINITY, reachable_max_rate(params, dm))
        };
        let dt = -(1.0 - rng.gen::<f64>()).ln() / bound;
        let t_prev = t;
        if dt >= window {
            // no proposal inside the window
            t += window;
            e += drip * window;
            record_crossings(energies, cfg.bin_width, t_prev, t.min(t_end), e);
            if t >= t_end {
                break;
            }
            continue;
        }
        t += dt;
        e += drip * dt;
        record_crossings(energies, cfg.bin_width, t_prev, t.min(t_end), e);
        if t >= t_end {
            break;
        }
        let delta_max = params.max_doppler_shift(e);
        let doppler = delta_max * (2.0 * PI * rng.gen::<f64>()).sin();
        let rate = params.scatter_rate_at(delta + doppler);
        if rng.gen::<f64>() * bound <= rate {
            if eff >= 1.0 || rng.gen::<f64>() < eff {
                counts[((t / cfg.bin_width) as usize).min(counts.len() - 1)] += 1;
            }
            e = (e - HBAR * doppler + recoil).max(0.0);
        }
    }
    e
}

/// Validation stepper: explicit oscillator phase, Bernoulli sub-steps of
/// 1/(20·peak rate), momentum kicks applied to the velocity.
fn full_phase_rep<R: Rng + ?Sized>(
    e0: f64,
    params: &RecoolParams,
    cfg: &McConfig,
    t_end: f64,
    counts: &mut [u32],
    energies: &mut [f64],
    rng: &mut R,
) -> f64 {
    let dt = 1.0 / (20.0 * params.peak_scatter_rate());
    let mass = params.species.mass;
    let kz = params.kz();
    let k = params.wavevector();
    let k_perp = (k * k - kz * kz).max(0.0).sqrt();
    let delta = params.detuning_angular();
    let omega = params.omega_z;
    let drip = cfg.heating_rate * HBAR * omega;
    let eff = cfg.detection_efficiency;

    let mut e = e0.max(1e-300);
    let mut phase = 2.0 * PI * rng.gen::<f64>();
    let mut t = 0.0;
    while t < t_end {
        // velocity and its quadrature partner: v = v_max sin φ, u = v_max cos φ
        let v_max = (2.0 * e / mass).sqrt();
        let v = v_max * phase.sin();
        let rate = params.scatter_rate_at(delta - kz * v);
        if rng.gen::<f64>() < rate * dt {
            if eff >= 1.0 || rng.gen::<f64>() < eff {
                counts[((t / cfg.bin_width) as usize).min(counts.len() - 1)] += 1;
            }
            // absorption kick along the beam plus emission recoil with the
            // transverse wavevector component and a random sign: in
            // expectation the scatter adds hbar^2 k^2/2m on top of hbar k_z v
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let u = v_max * phase.cos();
            let v_new = v + HBAR * kz / mass + sign * HBAR * k_perp / mass;
            e = (0.5 * mass * (v_new * v_new + u * u)).max(1e-300);
            phase = v_new.atan2(u);
        }
        e += drip * dt;
        phase = (phase + omega * dt) % (2.0 * PI);
        record_crossings(energies, cfg.bin_width, t, (t + dt).min(t_end), e);
        t += dt;
    }
    e
}

/// One delay point of an experiment: the averaged trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTrace {
    pub delay: f64,
    pub trace: FluorescenceTrace,
}

/// A full heating-delay scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub traces: Vec<DelayTrace>,
}

/// Average repetitions into a trace (fixed summation order).
fn average_reps(
    reps: &[SingleRepetition],
    bin_width: f64,
    metadata: TraceMetadata,
) -> FluorescenceTrace {
    let r = reps.len();
    let n = reps[0].counts.len();
    let mut mean = vec![0.0; n];
    for rep in reps {
        for (m, &c) in mean.iter_mut().zip(&rep.counts) {
            *m += c as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= r as f64;
    }
    let mut stderr = vec![0.0; n];
    if r > 1 {
        for rep in reps {
            for (s, (&c, &m)) in stderr.iter_mut().zip(rep.counts.iter().zip(&mean)) {
                *s += (c as f64 - m).powi(2);
            }
        }
        for s in stderr.iter_mut() {
            *s = (*s / (r - 1) as f64 / r as f64).sqrt();
        }
    }
    FluorescenceTrace {
        bin_width,
        repetitions: r as u32,
        mean_counts: mean,
        stderr,
        metadata,
    }
}

/// RNG for one repetition: one ChaCha8 stream per (delay, repetition), so
/// results do not depend on scheduling or repetition order.
fn rep_rng(seed: u64, delay_index: usize, rep: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((delay_index as u64) << 32) | rep as u64);
    rng
}

/// Run the heating-rate protocol: for each dark delay, draw `repetitions`
/// initial energies around Ē = E_D + ṅ·delay·ħω_z, simulate the recooling
/// traces in parallel and average. Deterministic for a fixed seed.
pub fn run_experiment(
    params: &RecoolParams,
    cfg: &McConfig,
    delays: &[f64],
    ndot_true: f64,
) -> Result<Experiment, McError> {
    cfg.validate()?;
    if delays.is_empty() {
        return Err(McError::NoDelays);
    }
    let e_doppler = params.doppler_limit_energy();
    let traces = delays
        .iter()
        .enumerate()
        .map(|(di, &delay)| {
            let reps: Vec<SingleRepetition> = (0..cfg.repetitions)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rep_rng(cfg.seed, di, rep);
                    let e0 = sample_initial_energy(
                        cfg.dist.kind,
                        e_doppler,
                        ndot_true,
                        delay,
                        params.omega_z,
                        &mut rng,
                    );
                    simulate_recool_trace(e0, params, cfg, &mut rng)
                })
                .collect();
            let metadata = TraceMetadata {
                rng: RNG_DESCRIPTION.to_string(),
                seed: cfg.seed,
                delay,
                ndot_true: Some(ndot_true),
                params: params.clone(),
                config: cfg.clone(),
            };
            DelayTrace {
                delay,
                trace: average_reps(&reps, cfg.bin_width, metadata),
            }
        })
        .collect();
    Ok(Experiment { traces })
}

/// Single averaged trace with the E₀ distribution taken directly from
/// `cfg.dist` (no heating protocol).
pub fn run_averaged_trace(params: &RecoolParams, cfg: &McConfig) -> Result<FluorescenceTrace, McError> {
    cfg.validate()?;
    let reps: Vec<SingleRepetition> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(cfg.seed, 0, rep);
            let e0 = sample_energy(cfg.dist.kind, cfg.dist.mean_energy, &mut rng);
            simulate_recool_trace(e0, params, cfg, &mut rng)
        })
        .collect();
    let metadata = TraceMetadata {
        rng: RNG_DESCRIPTION.to_string(),
        seed: cfg.seed,
        delay: 0.0,
        ndot_true: None,
        params: params.clone(),
        config: cfg.clone(),
    };
    Ok(average_reps(&reps, cfg.bin_width, metadata))
}

/// Per-bin mean of the motional energy across repetitions (diagnostics).
pub fn mean_energy_trajectory(params: &RecoolParams, cfg: &McConfig) -> Result<Vec<f64>, McError> {
    cfg.validate()?;
    let n = cfg.bins();
    let sums: Vec<f64> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(cfg.seed, 0, rep);
            let e0 = sample_energy(cfg.dist.kind, cfg.dist.mean_energy, &mut rng);
            simulate_recool_trace(e0, params, cfg, &mut rng).bin_end_energy
        })
        .reduce(
            || vec![0.0; n],
            |mut acc, e| {
                for (a, x) in acc.iter_mut().zip(&e) {
                    *a += x;
                }
                acc
            },
        );
    Ok(sums.iter().map(|s| s / cfg.repetitions as f64).collect())
}
