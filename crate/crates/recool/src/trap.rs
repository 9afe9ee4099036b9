//! Auxiliary instrument math: helical-resonator relations, RF coupling
//! check, lowest-order Mathieu/secular estimates, and the measured trap
//! fixture tables.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrapError {
    #[error("{name} must satisfy {requirement}, got {value}")]
    Domain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
}

/// A measured value with its quoted uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub uncertainty: f64,
}

impl Measured {
    pub const fn new(value: f64, uncertainty: f64) -> Self {
        Self { value, uncertainty }
    }
}

/// Helical resonator parameters for V = κ√(P·Q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    /// Loaded quality factor.
    pub quality_factor: f64,
    /// Geometric factor κ; convention V[volt] = κ·√(P[watt]·Q).
    pub geometric_factor: f64,
    /// Loaded resonant frequency, Hz.
    pub resonant_frequency: f64,
}

impl ResonatorSpec {
    pub fn new(quality_factor: f64, geometric_factor: f64, resonant_frequency: f64) -> Result<Self, TrapError> {
        for (name, value) in [
            ("quality_factor", quality_factor),
            ("geometric_factor", geometric_factor),
            ("resonant_frequency", resonant_frequency),
        ] {
            if !(value > 0.0) {
                return Err(TrapError::Domain {
                    name,
                    value,
                    requirement: "> 0",
                });
            }
        }
        Ok(Self {
            quality_factor,
            geometric_factor,
            resonant_frequency,
        })
    }

    /// The loaded resonator of the measured trap: Q = 200, κ = 24, f₀ = 21.5 MHz.
    pub fn loaded_default() -> Self {
        Self {
            quality_factor: 200.0,
            geometric_factor: 24.0,
            resonant_frequency: 21.5e6,
        }
    }
}

/// Electrode RF voltage from applied power: V = κ√(P·Q).
pub fn resonator_voltage(power: f64, spec: &ResonatorSpec) -> Result<f64, TrapError> {
    if power < 0.0 {
        return Err(TrapError::Domain {
            name: "power",
            value: power,
            requirement: ">= 0",
        });
    }
    Ok(spec.geometric_factor * (power * spec.quality_factor).sqrt())
}

/// Inverse of [`resonator_voltage`]: P = (V/κ)²/Q.
pub fn resonator_power(voltage: f64, spec: &ResonatorSpec) -> Result<f64, TrapError> {
    if voltage < 0.0 {
        return Err(TrapError::Domain {
            name: "voltage",
            value: voltage,
            requirement: ">= 0",
        });
    }
    let v_over_kappa = voltage / spec.geometric_factor;
    Ok(v_over_kappa * v_over_kappa / spec.quality_factor)
}

/// Impedance-match quality: coupled fraction 1 − P_refl/P_fwd with a
/// pass/fail against a threshold (the bench target is ≥ 0.95).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub fraction: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const DEFAULT_COUPLING_THRESHOLD: f64 = 0.95;

pub fn coupling_fraction(p_forward: f64, p_reflected: f64, threshold: f64) -> Result<Coupling, TrapError> {
    if !(p_forward > 0.0) {
        return Err(TrapError::Domain {
            name: "p_forward",
            value: p_forward,
            requirement: "> 0",
        });
    }
    if p_reflected < 0.0 || p_reflected > p_forward {
        return Err(TrapError::Domain {
            name: "p_reflected",
            value: p_reflected,
            requirement: "in [0, p_forward]",
        });
    }
    let fraction = 1.0 - p_reflected / p_forward;
    Ok(Coupling {
        fraction,
        threshold,
        pass: fraction >= threshold,
    })
}

/// Boundary of the lowest-order Mathieu stability region.
pub const MATHIEU_Q_STABILITY_LIMIT: f64 = 0.908;

/// Lowest-order Mathieu q from a radial secular frequency:
/// ω_r ≈ qΩ/(2√2) ⇒ q = 2√2·ω_r/Ω. An estimate, not a field solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuEstimate {
    pub q: f64,
    pub stable: bool,
}

pub fn mathieu_q_from_secular(omega_r: f64, drive_omega: f64) -> Result<MathieuEstimate, TrapError> {
    if !(omega_r > 0.0) {
        return Err(TrapError::Domain {
            name: "omega_r",
            value: omega_r,
            requirement: "> 0",
        });
    }
    if !(drive_omega > 0.0) || omega_r >= drive_omega / 2.0 {
        return Err(TrapError::Domain {
            name: "omega_r",
            value: omega_r,
            requirement: "< drive_omega / 2",
        });
    }
    let q = 2.0 * 2.0f64.sqrt() * omega_r / drive_omega;
    Ok(MathieuEstimate {
        q,
        stable: q < MATHIEU_Q_STABILITY_LIMIT,
    })
}

/// Inverse of [`mathieu_q_from_secular`]: ω_r = qΩ/(2√2).
pub fn secular_from_mathieu_q(q: f64, drive_omega: f64) -> Result<f64, TrapError> {
    if !(q > 0.0) || !(drive_omega > 0.0) {
        return Err(TrapError::Domain {
            name: "q/drive_omega",
            value: q.min(drive_omega),
            requirement: "> 0",
        });
    }
    Ok(q * drive_omega / (2.0 * 2.0f64.sqrt()))
}

/// Static voltages applied to the trap electrodes plus RF amplitude and the
/// measured secular frequencies: one operating point of the trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapOperatingPoint {
    /// Electrode name → static voltage, V.
    pub electrode_voltages: Vec<(String, Measured)>,
    /// RF amplitude at the electrodes, V.
    pub rf_amplitude: Measured,
    /// RF drive frequency Ω/2π, Hz.
    pub drive_frequency: Measured,
    /// Measured secular frequencies (ω_x, ω_y, ω_z)/2π, Hz.
    pub secular_frequencies: [Measured; 3],
}

/// Physical dimensions and loaded figures of the helical resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorFixture {
    /// Shield diameter D, m.
    pub shield_diameter: Measured,
    /// Shield length B, m.
    pub shield_length: Measured,
    /// Coil diameter d, m.
    pub coil_diameter: Measured,
    /// Coil length b, m.
    pub coil_length: Measured,
    /// Winding wire diameter d₀, m.
    pub wire_diameter: Measured,
    /// Winding pitch τ, m.
    pub winding_pitch: Measured,
    /// Number of turns N.
    pub turns: Measured,
    /// Loaded resonant frequency f₀, Hz.
    pub resonant_frequency: Measured,
    /// Loaded quality factor Q.
    pub quality_factor: Measured,
    /// Geometric factor κ in V = κ√(PQ).
    pub geometric_factor: Measured,
}

/// Immutable record of the measured trap: resonator table, electrode
/// voltages, secular frequencies and the externally simulated trap depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    pub resonator: ResonatorFixture,
    pub operating_point: TrapOperatingPoint,
    /// Trap depth, eV (from external field simulations; data only).
    pub trap_depth_ev: Measured,
    /// Ion-electrode separation, m.
    pub ion_electrode_separation: Measured,
}

/// The measured values shipped with the toolkit.
pub fn fixtures() -> Fixtures {
    let mv = |name: &str, v: f64, u: f64| (name.to_string(), Measured::new(v, u));
    Fixtures {
        resonator: ResonatorFixture {
            shield_diameter: Measured::new(76e-3, 1e-3),
            shield_length: Measured::new(103e-3, 1e-3),
            coil_diameter: Measured::new(52e-3, 3e-3),
            coil_length: Measured::new(63e-3, 5e-3),
            wire_diameter: Measured::new(3.14e-3, 0.03e-3),
            winding_pitch: Measured::new(6e-3, 2e-3),
            turns: Measured::new(9.50, 0.25),
            resonant_frequency: Measured::new(21.5e6, 0.1e6),
            quality_factor: Measured::new(200.0, 20.0),
            geometric_factor: Measured::new(24.0, 8.0),
        },
        operating_point: TrapOperatingPoint {
            electrode_voltages: vec![
                mv("1", 148.88, 0.01),
                mv("2", 7.36, 0.01),
                mv("3", 25.03, 0.01),
                mv("4", 0.00, 0.01),
                mv("5", 0.00, 0.01),
                mv("6", 167.76, 0.01),
                mv("compensation 1", 169.22, 0.01),
                mv("compensation 2", 169.22, 0.01),
                mv("compensation 3", -2.70, 0.01),
            ],
            rf_amplitude: Measured::new(680.0, 10.0),
            drive_frequency: Measured::new(21.48e6, 0.01e6),
            secular_frequencies: [
                Measured::new(2.069e6, 1e3),
                Measured::new(2.110e6, 1e3),
                Measured::new(1.030e6, 1e3),
            ],
        },
        trap_depth_ev: Measured::new(4.9, 0.2),
        ion_electrode_separation: Measured::new(310e-6, 10e-6),
    }
}

impl Fixtures {
    /// Static voltage of a named electrode, if present.
    pub fn electrode_voltage(&self, name: &str) -> Option<Measured> {
        self.operating_point
            .electrode_voltages
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| *m)
    }
}
