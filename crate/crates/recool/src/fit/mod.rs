//! Parameter extraction: initial-energy fits of fluorescence traces,
//! heating rates from delay series, the frequency scaling law, and the
//! electric-field noise density.

pub mod lm;

use crate::mc::FluorescenceTrace;
use crate::model::{
    CoolingModel, DistKind, E0Quadrature, EnergyDistribution, FluorescenceBins, ModelError,
    ModelOptions, RecoolParams, CHI1_Z_CUT,
};
use crate::physics::{constants::HBAR, IonSpecies};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use lm::{LmFit, LmOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} data points/residuals, got {got}")]
    Arity { needed: usize, got: usize },
    #[error("{name} must satisfy {requirement}, got {value}")]
    Domain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("nothing to fit: first-bin fluorescence is not below the recooled level")]
    DegenerateInput,
    #[error("normal equations are singular")]
    SingularSystem,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A fitted value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub value: f64,
    pub sigma: f64,
}

/// Options for [`fit_initial_energy`]. Nuisance parameters default on, as
/// appropriate for real data; oracle tests disable them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Float an overall amplitude (absorbs detection efficiency).
    pub fit_amplitude: bool,
    /// Float an additive background (counts per bin).
    pub fit_background: bool,
    /// Shape assumed for P_B(E₀).
    pub dist_kind: DistKind,
    pub max_iter: usize,
    /// If set, resample bins this many times for a bootstrap sigma.
    pub bootstrap: Option<u32>,
    pub bootstrap_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_amplitude: true,
            fit_background: true,
            dist_kind: DistKind::Chi1,
            max_iter: 200,
            bootstrap: None,
            bootstrap_seed: 0,
        }
    }
}

/// Model configuration echoed into fit reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEcho {
    pub dist_kind: DistKind,
    pub fit_amplitude: bool,
    pub fit_background: bool,
    pub omega_z: f64,
    pub cooling_efficiency: f64,
    pub e0_nodes: usize,
}

/// Result of an initial-energy fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Mean initial energy Ē of P_B(E₀), J.
    pub mean_energy: FitParameter,
    /// Ē expressed in motional quanta at ω_z.
    pub n_mean: FitParameter,
    pub amplitude: FitParameter,
    pub background: FitParameter,
    /// √(Σ weighted residuals²) at the optimum.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Covariance of the free parameters, row-major in fit order.
    pub covariance: Vec<Vec<f64>>,
    pub model_echo: ModelEcho,
    /// Bootstrap estimate of σ(Ē), when requested.
    pub bootstrap_sigma: Option<f64>,
}

struct TraceData {
    y: Vec<f64>,
    sigma: Vec<f64>,
    weighted: bool,
    bin_width: f64,
}

fn trace_data(trace: &FluorescenceTrace) -> Result<TraceData, FitError> {
    let n = trace.mean_counts.len();
    if n < 4 {
        return Err(FitError::Arity { needed: 4, got: n });
    }
    let weighted = trace.stderr.iter().any(|&s| s > 0.0);
    let sigma = if weighted {
        let floor = trace
            .stderr
            .iter()
            .copied()
            .filter(|&s| s > 0.0)
            .fold(f64::INFINITY, f64::min);
        trace.stderr.iter().map(|&s| s.max(floor)).collect()
    } else {
        vec![1.0; n]
    };
    Ok(TraceData {
        y: trace.mean_counts.clone(),
        sigma,
        weighted,
        bin_width: trace.bin_width,
    })
}

/// Fit the expected-fluorescence curve to a repetition-averaged trace and
/// extract the mean initial energy (plus optional amplitude/background
/// nuisance parameters). Weights come from the per-bin standard errors when
/// present. The initial Ē guess inverts the hot-regime closed form at the
/// first-bin rate.
pub fn fit_initial_energy(
    trace: &FluorescenceTrace,
    params: &RecoolParams,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let data = trace_data(trace)?;
    let n = data.y.len();
    let bins = FluorescenceBins::new(data.bin_width, n)?;
    let efficiency = trace.metadata.config.detection_efficiency.clamp(0.0, 1.0);

    // recooled (cold) level from the trailing bins
    let tail = (n / 8).max(3).min(n - 1);
    let cold_counts = data.y[n - tail..].iter().sum::<f64>() / tail as f64;
    let dip = cold_counts - data.y[0];
    let dip_sigma = (data.sigma[0].powi(2) + data.sigma[n - 1].powi(2) / tail as f64).sqrt();
    let noise_floor = if data.weighted {
        3.0 * dip_sigma
    } else {
        1e-9 * cold_counts.abs().max(1e-300)
    };
    if !(dip > noise_floor) {
        return Err(FitError::DegenerateInput);
    }

    // initial guess: invert the hot closed form rate = C/sqrt(E) at bin 0
    let amp0 = if efficiency > 0.0 { efficiency } else { 1.0 };
    let c_hot = crate::model::avg_scatter_hot_unchecked(1.0, params);
    let r_first = (data.y[0] / bins.width / amp0).max(1e-6 * params.cold_scatter_rate());
    let clamp = params.doppler_limit_energy();
    let e_guess = ((c_hot / r_first) * (c_hot / r_first)).clamp(clamp, 1e-18);

    let e_lb = 1e-3 * clamp;
    let e_ub = 1e4 * e_guess.max(clamp);
    let model_opts = ModelOptions::default();
    let model = CoolingModel::new(params.clone(), model_opts, CHI1_Z_CUT * CHI1_Z_CUT * e_ub)?;

    // parameter vector: [mean_energy, amplitude?, background?]
    let mut x0 = vec![e_guess];
    let mut lb = vec![e_lb];
    let mut ub = vec![e_ub];
    if opts.fit_amplitude {
        x0.push(amp0);
        lb.push(1e-9 * amp0);
        ub.push(1e6 * amp0);
    }
    if opts.fit_background {
        x0.push(0.0);
        lb.push(0.0);
        ub.push(data.y.iter().cloned().fold(0.0, f64::max).max(1.0));
    }

    let dist_kind = opts.dist_kind;
    let residuals = |p: &[f64]| -> Result<Vec<f64>, FitError> {
        let mean_energy = p[0];
        let amplitude = if opts.fit_amplitude { p[1] } else { amp0 };
        let background = if opts.fit_background { p[p.len() - 1] } else { 0.0 };
        let dist = EnergyDistribution::new(dist_kind, mean_energy)?;
        let nodes = E0Quadrature::from_distribution(&dist, model.options().e0_nodes)?;
        let curve = model.fluorescence_curve(&nodes, &bins)?;
        Ok(curve
            .iter()
            .zip(data.y.iter().zip(&data.sigma))
            .map(|(&rate, (&y, &sig))| (amplitude * rate * bins.width + background - y) / sig)
            .collect())
    };

    let lm_opts = LmOptions {
        max_iter: opts.max_iter,
        ..LmOptions::default()
    };
    let fit = lm::lm_fit(residuals, &x0, &lb, &ub, &lm_opts)?;

    // covariance scaling: weighted residuals already carry sigma; uniform
    // weights need the reduced chi-square factor
    let n_par = fit.x.len();
    let scale = if data.weighted {
        1.0
    } else {
        fit.residual_norm.powi(2) / (fit.n_residuals - n_par).max(1) as f64
    };
    let sig = |i: usize| (fit.covariance[i][i].max(0.0) * scale).sqrt();

    let mean_energy = FitParameter {
        value: fit.x[0],
        sigma: sig(0),
    };
    let hbar_omega = HBAR * params.omega_z;
    let n_mean = FitParameter {
        value: mean_energy.value / hbar_omega,
        sigma: mean_energy.sigma / hbar_omega,
    };
    let amplitude = if opts.fit_amplitude {
        FitParameter {
            value: fit.x[1],
            sigma: sig(1),
        }
    } else {
        FitParameter {
            value: amp0,
            sigma: 0.0,
        }
    };
    let background = if opts.fit_background {
        FitParameter {
            value: fit.x[n_par - 1],
            sigma: sig(n_par - 1),
        }
    } else {
        FitParameter {
            value: 0.0,
            sigma: 0.0,
        }
    };

    let bootstrap_sigma = match opts.bootstrap {
        Some(resamples) if resamples > 1 => {
            Some(bootstrap_sigma(trace, params, opts, resamples)?)
        }
        _ => None,
    };

    Ok(FitResult {
        mean_energy,
        n_mean,
        amplitude,
        background,
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        iterations: fit.iterations,
        covariance: fit.covariance,
        model_echo: ModelEcho {
            dist_kind,
            fit_amplitude: opts.fit_amplitude,
            fit_background: opts.fit_background,
            omega_z: params.omega_z,
            cooling_efficiency: model.options().cooling_efficiency,
            e0_nodes: model.options().e0_nodes,
        },
        bootstrap_sigma,
    })
}

/// Residual bootstrap of σ(Ē): shuffle the deviations from a local smooth
/// of the trace onto the bins with replacement and refit.
fn bootstrap_sigma(
    trace: &FluorescenceTrace,
    params: &RecoolParams,
    opts: &FitOptions,
    resamples: u32,
) -> Result<f64, FitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.bootstrap_seed);
    let n = trace.mean_counts.len();
    let smooth: Vec<f64> = (0..n).map(|i| local_smooth(trace, i)).collect();
    let deviations: Vec<f64> = (0..n).map(|i| trace.mean_counts[i] - smooth[i]).collect();
    let inner_opts = FitOptions {
        bootstrap: None,
        ..*opts
    };
    let mut values = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let mut resampled = trace.clone();
        for i in 0..n {
            let pick = rng.gen_range(0..n);
            resampled.mean_counts[i] = smooth[i] + deviations[pick];
        }
        if let Ok(f) = fit_initial_energy(&resampled, params, &inner_opts) {
            if f.converged {
                values.push(f.mean_energy.value);
            }
        }
    }
    if values.len() < 2 {
        return Ok(f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Three-bin running mean used as the smooth reference for the bootstrap.
fn local_smooth(trace: &FluorescenceTrace, i: usize) -> f64 {
    let n = trace.mean_counts.len();
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(n - 1);
    trace.mean_counts[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

/// One delay point of a heating series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingPoint {
    /// Dark (heating) delay, s.
    pub delay: f64,
    /// Mean motional quanta extracted at that delay.
    pub n_mean: f64,
    /// 1σ uncertainty of `n_mean`.
    pub n_err: f64,
}

/// (delay, ⟨n⟩) points at one secular frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingSeries {
    pub points: Vec<HeatingPoint>,
    /// Secular frequency of the heated mode, rad/s.
    pub omega_z: f64,
}

impl HeatingSeries {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.points.len() < 2 {
            return Err(FitError::Arity {
                needed: 2,
                got: self.points.len(),
            });
        }
        for w in self.points.windows(2) {
            if w[1].delay <= w[0].delay {
                return Err(FitError::Domain {
                    name: "delays",
                    value: w[1].delay,
                    requirement: "strictly increasing",
                });
            }
        }
        if let Some(p) = self.points.iter().find(|p| !(p.n_err > 0.0)) {
            return Err(FitError::Domain {
                name: "n_err",
                value: p.n_err,
                requirement: "> 0",
            });
        }
        Ok(())
    }
}

/// Weighted linear fit n(t) = n₀ + ṅ·t; returns (ṅ, σ_ṅ) in quanta/s.
pub fn heating_rate_from_series(series: &HeatingSeries) -> Result<(f64, f64), FitError> {
    series.validate()?;
    let mut s = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in &series.points {
        let w = 1.0 / (p.n_err * p.n_err);
        s += w;
        sx += w * p.delay;
        sy += w * p.n_mean;
        sxx += w * p.delay * p.delay;
        sxy += w * p.delay * p.n_mean;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return Err(FitError::SingularSystem);
    }
    let slope = (s * sxy - sx * sy) / det;
    let sigma = (s / det).sqrt();
    Ok((slope, sigma))
}

/// Power-law fit mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerLawMode {
    /// Fit both amplitude and exponent.
    Free,
    /// Fix the exponent and fit the amplitude only.
    FixedExponent(f64),
}

/// Result of fitting ṅ(ω) = A·ω^p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: FitParameter,
    pub exponent: FitParameter,
    /// Covariance of (ln A, p) for the free fit; zeros when fixed.
    pub covariance: [[f64; 2]; 2],
    pub mode: PowerLawMode,
    /// The fitted (omega, ndot, err) points.
    pub points: Vec<(f64, f64, f64)>,
}

impl PowerLawFit {
    /// Model prediction at `omega`.
    pub fn predict(&self, omega: f64) -> f64 {
        self.amplitude.value * omega.powf(self.exponent.value)
    }
}

/// Weighted least squares of ln ṅ against ln ω. Errors propagate as
/// σ(ln y) = σ_y/y; zero errors fall back to uniform weights.
pub fn fit_power_law(points: &[(f64, f64, f64)], mode: PowerLawMode) -> Result<PowerLawFit, FitError> {
    let needed = match mode {
        PowerLawMode::Free => 2,
        PowerLawMode::FixedExponent(_) => 1,
    };
    if points.len() < needed {
        return Err(FitError::Arity {
            needed,
            got: points.len(),
        });
    }
    for &(omega, ndot, err) in points {
        if !(omega > 0.0) || !(ndot > 0.0) || err < 0.0 {
            return Err(FitError::Domain {
                name: "(omega, ndot, err)",
                value: if omega <= 0.0 { omega } else { ndot.min(err) },
                requirement: "omega > 0, ndot > 0, err >= 0",
            });
        }
    }
    if let PowerLawMode::Free = mode {
        let mut sorted: Vec<f64> = points.iter().map(|p| p.0).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(FitError::Domain {
                name: "omega",
                value: sorted[0],
                requirement: "distinct frequencies",
            });
        }
    }

    let weighted = points.iter().all(|p| p.2 > 0.0);
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(omega, ndot, err)| {
            let w = if weighted { (ndot / err).powi(2) } else { 1.0 };
            (omega.ln(), ndot.ln(), w)
        })
        .collect();

    match mode {
        PowerLawMode::FixedExponent(p) => {
            let sw: f64 = data.iter().map(|d| d.2).sum();
            let ln_a = data.iter().map(|d| d.2 * (d.1 - p * d.0)).sum::<f64>() / sw;
            let var_ln_a = if weighted {
                1.0 / sw
            } else if data.len() > 1 {
                data.iter().map(|d| (d.1 - p * d.0 - ln_a).powi(2)).sum::<f64>()
                    / ((data.len() - 1) as f64 * data.len() as f64)
            } else {
                0.0
            };
            let a = ln_a.exp();
            Ok(PowerLawFit {
                amplitude: FitParameter {
                    value: a,
                    sigma: a * var_ln_a.sqrt(),
                },
                exponent: FitParameter { value: p, sigma: 0.0 },
                covariance: [[var_ln_a, 0.0], [0.0, 0.0]],
                mode,
                points: points.to_vec(),
            })
        }
        PowerLawMode::Free => {
            let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, y, w) in &data {
                s += w;
                sx += w * x;
                sy += w * y;
                sxx += w * x * x;
                sxy += w * x * y;
            }
            let det = s * sxx - sx * sx;
            if det <= 0.0 {
                return Err(FitError::SingularSystem);
            }
            let p = (s * sxy - sx * sy) / det;
            let ln_a = (sy - p * sx) / s;
            // covariance of (ln A, p); scale by reduced chi2 for uniform weights
            let mut cov = [[sxx / det, -sx / det], [-sx / det, s / det]];
            if !weighted && data.len() > 2 {
                let chi2: f64 = data
                    .iter()
                    .map(|&(x, y, w)| w * (ln_a + p * x - y).powi(2))
                    .sum();
                let red = chi2 / (data.len() - 2) as f64;
                for row in cov.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= red;
                    }
                }
            }
            let a = ln_a.exp();
            Ok(PowerLawFit {
                amplitude: FitParameter {
                    value: a,
                    sigma: a * cov[0][0].max(0.0).sqrt(),
                },
                exponent: FitParameter {
                    value: p,
                    sigma: cov[1][1].max(0.0).sqrt(),
                },
                covariance: cov,
                mode,
                points: points.to_vec(),
            })
        }
    }
}

/// Electric-field noise density from a heating rate:
/// S_E(ω) = 4·m·ħ·ω·ṅ/q², V²m⁻²Hz⁻¹.
pub fn se_from_heating(ndot: f64, omega_z: f64, species: &IonSpecies) -> f64 {
    4.0 * species.mass * HBAR * omega_z * ndot / (species.charge * species.charge)
}

/// Inverse of [`se_from_heating`]: ṅ = q²·S_E/(4·m·ħ·ω).
pub fn heating_from_se(se: f64, omega_z: f64, species: &IonSpecies) -> f64 {
    species.charge * species.charge * se / (4.0 * species.mass * HBAR * omega_z)
}

/// Extrapolate S_E between frequencies assuming ṅ ∝ ω^p: then
/// S_E ∝ ω^{p+1}, so S_E(target) = S_E(ω)·(target/ω)^{p+1}. The default
/// heating exponent p = −2 gives S_E ∝ 1/ω.
pub fn extrapolate_se(se: f64, omega: f64, target_omega: f64, ndot_scaling_exponent: f64) -> f64 {
    se * (target_omega / omega).powf(ndot_scaling_exponent + 1.0)
}
