//! Physical constants, ion species data and elementary kinematic conversions.
//!
//! Everything downstream (recooling model, Monte Carlo, fits) pulls its
//! constants from here. Frequencies are stored internally in angular units
//! (rad/s); user-facing quantities are ordinary frequencies in Hz with the
//! 2π conversion applied at the boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

pub mod constants {
    //! CODATA 2018 values. `HBAR`, `ELEMENTARY_CHARGE` and `SPEED_OF_LIGHT`
    //! are exact under the 2019 SI redefinition.

    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Elementary charge, C.
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Speed of light in vacuum, m/s.
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    /// Atomic mass unit, kg.
    pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
}

use constants::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} = {value} outside allowed range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("unknown species {0:?}")]
    UnknownSpecies(String),
    #[error("species table: {0}")]
    SpeciesTable(String),
}

/// An ion species: mass, charge and cooling-transition data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// Ion mass, kg.
    pub mass: f64,
    /// Ion charge, C (positive).
    pub charge: f64,
    /// Cooling transition wavelength (vacuum), m.
    pub cooling_wavelength: f64,
    /// Natural linewidth Γ/2π of the cooling transition, Hz (FWHM).
    pub natural_linewidth: f64,
}

impl IonSpecies {
    pub fn new(
        name: impl Into<String>,
        mass: f64,
        charge: f64,
        cooling_wavelength: f64,
        natural_linewidth: f64,
    ) -> Result<Self, PhysicsError> {
        let s = Self {
            name: name.into(),
            mass,
            charge,
            cooling_wavelength,
            natural_linewidth,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), PhysicsError> {
        for (name, value) in [
            ("mass", self.mass),
            ("charge", self.charge),
            ("cooling_wavelength", self.cooling_wavelength),
            ("natural_linewidth", self.natural_linewidth),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PhysicsError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Photon recoil energy ħ²k²/2m of the cooling transition, J.
    pub fn recoil_energy(&self) -> f64 {
        let k = 2.0 * PI / self.cooling_wavelength;
        (HBAR * k).powi(2) / (2.0 * self.mass)
    }
}

/// Built-in Yb⁺ table. Masses are standard atomic masses (AME2020, amu);
/// cooling wavelengths are the measured ²S₁/₂↔²P₁/₂ values (vacuum);
/// Γ/2π = 19.6 MHz for all isotopes.
const YB_TABLE: [(u32, f64, f64); 5] = [
    (170, 169.934_766_4, 369.523_64e-9),
    (171, 170.936_330_2, 369.526_04e-9),
    (172, 171.936_385_9, 369.524_35e-9),
    (174, 173.938_866_4, 369.524_94e-9),
    (176, 175.942_576_4, 369.525_50e-9),
];

pub const YB_NATURAL_LINEWIDTH_HZ: f64 = 19.6e6;

impl IonSpecies {
    /// A singly-charged ytterbium isotope from the built-in table.
    pub fn yb_plus(isotope: u32) -> Result<Self, PhysicsError> {
        YB_TABLE
            .iter()
            .find(|(a, _, _)| *a == isotope)
            .map(|&(a, amu, lambda)| Self {
                name: format!("{a}Yb+"),
                mass: amu * ATOMIC_MASS_UNIT,
                charge: ELEMENTARY_CHARGE,
                cooling_wavelength: lambda,
                natural_linewidth: YB_NATURAL_LINEWIDTH_HZ,
            })
            .ok_or_else(|| PhysicsError::UnknownSpecies(format!("{isotope}Yb+")))
    }

    /// ¹⁷⁴Yb⁺, the default species for heating-rate work.
    pub fn yb174() -> Self {
        Self::yb_plus(174).expect("174 is in the built-in table")
    }

    /// Look up a species by name, e.g. "174Yb+".
    pub fn by_name(name: &str) -> Result<Self, PhysicsError> {
        let trimmed = name.trim();
        for (a, _, _) in YB_TABLE {
            if trimmed == format!("{a}Yb+") || trimmed == format!("{a}") {
                return Self::yb_plus(a);
            }
        }
        Err(PhysicsError::UnknownSpecies(name.to_string()))
    }
}

/// On-disk species record; units chosen for hand editing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesRecord {
    pub name: String,
    pub mass_amu: f64,
    pub charge_e: f64,
    pub cooling_wavelength_nm: f64,
    #[serde(rename = "natural_linewidth_MHz")]
    pub natural_linewidth_mhz: f64,
}

impl SpeciesRecord {
    pub fn to_species(&self) -> Result<IonSpecies, PhysicsError> {
        IonSpecies::new(
            self.name.clone(),
            self.mass_amu * ATOMIC_MASS_UNIT,
            self.charge_e * ELEMENTARY_CHARGE,
            self.cooling_wavelength_nm * 1e-9,
            self.natural_linewidth_mhz * 1e6,
        )
    }

    pub fn from_species(s: &IonSpecies) -> Self {
        Self {
            name: s.name.clone(),
            mass_amu: s.mass / ATOMIC_MASS_UNIT,
            charge_e: s.charge / ELEMENTARY_CHARGE,
            cooling_wavelength_nm: s.cooling_wavelength * 1e9,
            natural_linewidth_mhz: s.natural_linewidth / 1e6,
        }
    }
}

/// Load a species table from a JSON file (array of [`SpeciesRecord`]).
pub fn load_species_table(path: &Path) -> Result<Vec<IonSpecies>, PhysicsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PhysicsError::SpeciesTable(format!("{}: {e}", path.display())))?;
    let records: Vec<SpeciesRecord> = serde_json::from_str(&text)
        .map_err(|e| PhysicsError::SpeciesTable(format!("{}: {e}", path.display())))?;
    records.iter().map(SpeciesRecord::to_species).collect()
}

/// Cooling laser beam parameters as seen by the ion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserBeam {
    /// Wavelength (vacuum), m.
    pub wavelength: f64,
    /// Detuning from resonance, Hz (ordinary frequency, signed; red = negative).
    pub detuning: f64,
    /// Saturation parameter s (dimensionless).
    pub saturation: f64,
    /// Observed transition linewidth L, Hz (FWHM, ordinary frequency).
    /// Includes power broadening and micromotion.
    pub broadened_linewidth: f64,
    /// Projection of the beam wavevector on the motional axis, |k_z|/|k| ∈ [0, 1].
    pub kz_fraction: f64,
}

impl LaserBeam {
    pub fn new(
        wavelength: f64,
        detuning: f64,
        saturation: f64,
        broadened_linewidth: f64,
        kz_fraction: f64,
    ) -> Result<Self, PhysicsError> {
        let b = Self {
            wavelength,
            detuning,
            saturation,
            broadened_linewidth,
            kz_fraction,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.wavelength > 0.0) {
            return Err(PhysicsError::NonPositive {
                name: "wavelength",
                value: self.wavelength,
            });
        }
        if !(self.saturation >= 0.0) {
            return Err(PhysicsError::OutOfRange {
                name: "saturation",
                value: self.saturation,
                range: ">= 0",
            });
        }
        if !(self.broadened_linewidth > 0.0) {
            return Err(PhysicsError::NonPositive {
                name: "broadened_linewidth",
                value: self.broadened_linewidth,
            });
        }
        if !(0.0..=1.0).contains(&self.kz_fraction) {
            return Err(PhysicsError::OutOfRange {
                name: "kz_fraction",
                value: self.kz_fraction,
                range: "[0, 1]",
            });
        }
        Ok(())
    }

    /// Check against the species the beam is attached to.
    pub fn validate_for(&self, species: &IonSpecies) -> Result<(), PhysicsError> {
        self.validate()?;
        if self.broadened_linewidth < species.natural_linewidth {
            return Err(PhysicsError::OutOfRange {
                name: "broadened_linewidth",
                value: self.broadened_linewidth,
                range: ">= natural linewidth of the attached species",
            });
        }
        Ok(())
    }
}

/// Trap secular frequencies and RF drive, all angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapFrequencies {
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    pub drive_omega: f64,
}

impl TrapFrequencies {
    pub fn new(omega_x: f64, omega_y: f64, omega_z: f64, drive_omega: f64) -> Result<Self, PhysicsError> {
        let t = Self {
            omega_x,
            omega_y,
            omega_z,
            drive_omega,
        };
        for (name, value) in [
            ("omega_x", t.omega_x),
            ("omega_y", t.omega_y),
            ("omega_z", t.omega_z),
            ("drive_omega", t.drive_omega),
        ] {
            if !(value > 0.0) {
                return Err(PhysicsError::NonPositive { name, value });
            }
        }
        for (name, value) in [("omega_x", t.omega_x), ("omega_y", t.omega_y), ("omega_z", t.omega_z)] {
            if value >= t.drive_omega / 2.0 {
                return Err(PhysicsError::OutOfRange {
                    name,
                    value,
                    range: "< drive_omega / 2",
                });
            }
        }
        Ok(t)
    }
}

/// Angular frequency for an ordinary frequency in Hz.
#[inline]
pub fn angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Ordinary frequency in Hz for an angular frequency.
#[inline]
pub fn ordinary(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}

/// Wavevector magnitude k = 2π/λ, rad/m.
pub fn wavevector(wavelength: f64) -> Result<f64, PhysicsError> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(PhysicsError::NonPositive {
            name: "wavelength",
            value: wavelength,
        });
    }
    Ok(2.0 * PI / wavelength)
}

/// Instantaneous Doppler shift Δ_D = −k·v, rad/s.
///
/// v > 0 is motion along the beam propagation direction, which red-shifts
/// the laser as seen by the ion.
#[inline]
pub fn doppler_shift(k: f64, v: f64) -> f64 {
    -k * v
}

/// Motional quanta ⟨n⟩ = E/ħω_z.
pub fn quanta_from_energy(energy: f64, omega_z: f64) -> Result<f64, PhysicsError> {
    if !(omega_z > 0.0) {
        return Err(PhysicsError::NonPositive {
            name: "omega_z",
            value: omega_z,
        });
    }
    if energy < 0.0 {
        return Err(PhysicsError::OutOfRange {
            name: "energy",
            value: energy,
            range: ">= 0",
        });
    }
    Ok(energy / (HBAR * omega_z))
}

/// Inverse of [`quanta_from_energy`]: E = n·ħω_z.
pub fn energy_from_quanta(n: f64, omega_z: f64) -> Result<f64, PhysicsError> {
    if !(omega_z > 0.0) {
        return Err(PhysicsError::NonPositive {
            name: "omega_z",
            value: omega_z,
        });
    }
    Ok(n * HBAR * omega_z)
}

/// Maximum instantaneous Doppler shift Δ_max = k_z·√(2E/m) of a classical
/// oscillator of energy E, rad/s.
#[inline]
pub fn max_doppler(energy: f64, mass: f64, k: f64, kz_fraction: f64) -> f64 {
    debug_assert!(energy >= 0.0 && mass > 0.0);
    kz_fraction * k * (2.0 * energy.max(0.0) / mass).sqrt()
}

/// Two-level scatter rate at effective detuning `delta_eff` (rad/s) with the
/// broadened FWHM linewidth `linewidth` (Hz) standing in for Γ:
///
/// R = πL·s / (1 + s + (δ_eff/πL)²), photons/s.
#[inline]
pub fn scatter_rate_instant(delta_eff: f64, saturation: f64, linewidth: f64) -> f64 {
    debug_assert!(saturation >= 0.0 && linewidth > 0.0);
    let half_width = PI * linewidth; // angular HWHM
    let x = delta_eff / half_width;
    half_width * saturation / (1.0 + saturation + x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn wavevector_basics() {
        // unit circumference
        assert_relative_eq!(wavevector(2.0 * PI).unwrap(), 1.0, max_relative = 1e-15);
        // 369.5 nm cooling beam
        assert_relative_eq!(wavevector(369.5e-9).unwrap(), 1.7004561e7, max_relative = 1e-6);
        assert!(wavevector(0.0).is_err());
        assert!(wavevector(-1.0).is_err());
    }

    #[test]
    fn wavevector_frequency_doubling_consistency() {
        // the 739.05 nm fundamental has half the wavevector of the doubled beam
        let k_fund = wavevector(739.05e-9).unwrap();
        let k_uv = wavevector(369.525e-9).unwrap();
        assert_relative_eq!(k_fund, k_uv / 2.0, max_relative = 1e-4);
    }

    #[test]
    fn wavevector_involution() {
        for x in [1e-9, 369.5e-9, 2.0 * PI, 5.0] {
            let twice = wavevector(wavevector(x).unwrap()).unwrap();
            assert_relative_eq!(twice, x, max_relative = 1e-14);
        }
    }

    #[test]
    fn doppler_shift_signs() {
        assert_eq!(doppler_shift(1.7004e7, 0.0), 0.0);
        assert_relative_eq!(doppler_shift(1.7004e7, 1.0), -1.7004e7, max_relative = 1e-12);
        assert_relative_eq!(doppler_shift(1.7004e7, -1.0), 1.7004e7, max_relative = 1e-12);
    }

    #[test]
    fn quanta_conversions() {
        let wz = angular(178e3);
        assert_relative_eq!(quanta_from_energy(HBAR * wz, wz).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(quanta_from_energy(0.0, wz).unwrap(), 0.0);
        // direct arithmetic with hbar = 1.0546e-34 gives 1.000e3 within 0.1%
        let n = quanta_from_energy(1.179e-25, wz).unwrap();
        assert_relative_eq!(n, 1.0e3, max_relative = 1e-3);
        assert!(quanta_from_energy(1.0, -1.0).is_err());
        assert!(quanta_from_energy(-1.0, wz).is_err());
    }

    #[test]
    fn quanta_round_trip() {
        let wz = angular(1.03e6);
        for n in [0.0, 1.0, 1e6] {
            let e = energy_from_quanta(n, wz).unwrap();
            assert_abs_diff_eq!(
                quanta_from_energy(e, wz).unwrap(),
                n,
                epsilon = 1e-12 * n.max(1.0)
            );
        }
    }

    #[test]
    fn max_doppler_examples() {
        let m = IonSpecies::yb174().mass;
        assert_eq!(max_doppler(0.0, m, 1.7004e7, 0.45), 0.0);
        // v_max = 10 m/s
        let e = 0.5 * m * 100.0;
        assert_relative_eq!(max_doppler(e, m, 1.7004e7, 0.45), 7.6518e7, max_relative = 1e-6);
        assert_eq!(max_doppler(e, m, 1.7004e7, 0.0), 0.0);
    }

    #[test]
    fn max_doppler_sqrt_energy_scaling() {
        let m = IonSpecies::yb174().mass;
        let e = 3.7e-24;
        assert_relative_eq!(
            max_doppler(4.0 * e, m, 1.7e7, 0.45),
            2.0 * max_doppler(e, m, 1.7e7, 0.45),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scatter_rate_zero_detuning() {
        // s = 1, L = 40 MHz: R(0) = πL/2
        assert_relative_eq!(
            scatter_rate_instant(0.0, 1.0, 40e6),
            PI * 40e6 / 2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(scatter_rate_instant(0.0, 1.0, 40e6), 6.2832e7, max_relative = 1e-4);
    }

    #[test]
    fn scatter_rate_half_maximum() {
        // half maximum at δ = πL√(1+s)
        let (s, l): (f64, f64) = (1.0, 40e6);
        let delta_half = PI * l * (1.0 + s).sqrt();
        assert_relative_eq!(
            scatter_rate_instant(delta_half, s, l),
            scatter_rate_instant(0.0, s, l) / 2.0,
            max_relative = 1e-12
        );
    }

    proptest! {
        #[test]
        fn scatter_rate_symmetric(x in 0.0..1e10f64, s in 0.0..20.0f64) {
            let l = 40e6;
            prop_assert!((scatter_rate_instant(x, s, l) - scatter_rate_instant(-x, s, l)).abs()
                <= 1e-12 * scatter_rate_instant(0.0, s.max(0.1), l));
        }

        #[test]
        fn scatter_rate_monotone_in_abs_detuning(x in 0.0..1e9f64, dx in 1e3..1e9f64) {
            prop_assert!(scatter_rate_instant(x + dx, 1.0, 40e6) < scatter_rate_instant(x, 1.0, 40e6));
        }

        #[test]
        fn scatter_rate_monotone_in_saturation(s in 0.01..10.0f64, ds in 0.01..5.0f64) {
            prop_assert!(scatter_rate_instant(0.0, s + ds, 40e6) > scatter_rate_instant(0.0, s, 40e6));
        }
    }

    #[test]
    fn species_table() {
        let yb = IonSpecies::yb174();
        assert_relative_eq!(yb.mass, 2.8883228286e-25, max_relative = 1e-9);
        assert_eq!(yb.charge, ELEMENTARY_CHARGE);
        assert_relative_eq!(yb.cooling_wavelength, 369.52494e-9, max_relative = 1e-12);
        for a in [170, 171, 172, 174, 176] {
            assert!(IonSpecies::yb_plus(a).is_ok());
        }
        assert!(IonSpecies::yb_plus(173).is_err());
        assert_eq!(IonSpecies::by_name("174Yb+").unwrap().name, "174Yb+");
    }

    #[test]
    fn species_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("species.json");
        let records: Vec<SpeciesRecord> = [170, 174]
            .iter()
            .map(|&a| SpeciesRecord::from_species(&IonSpecies::yb_plus(a).unwrap()))
            .collect();
        std::fs::write(&path, serde_json::to_string_pretty(&records).unwrap()).unwrap();
        let loaded = load_species_table(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_relative_eq!(loaded[1].mass, IonSpecies::yb174().mass, max_relative = 1e-12);
        // unknown keys rejected
        std::fs::write(&path, r#"[{"name":"x","mass_amu":1,"charge_e":1,"cooling_wavelength_nm":369.5,"natural_linewidth_MHz":19.6,"bogus":1}]"#).unwrap();
        assert!(load_species_table(&path).is_err());
    }

    #[test]
    fn beam_validation() {
        assert!(LaserBeam::new(369.5e-9, -6e6, 1.0, 40e6, 0.45).is_ok());
        assert!(LaserBeam::new(369.5e-9, -6e6, -0.1, 40e6, 0.45).is_err());
        assert!(LaserBeam::new(369.5e-9, -6e6, 1.0, 40e6, 1.5).is_err());
        let narrow = LaserBeam::new(369.5e-9, -6e6, 1.0, 10e6, 0.45).unwrap();
        assert!(narrow.validate_for(&IonSpecies::yb174()).is_err());
    }

    #[test]
    fn trap_frequency_invariants() {
        let ok = TrapFrequencies::new(
            angular(2.069e6),
            angular(2.110e6),
            angular(1.030e6),
            angular(21.48e6),
        );
        assert!(ok.is_ok());
        assert!(TrapFrequencies::new(angular(11e6), angular(2e6), angular(1e6), angular(21.48e6)).is_err());
        assert!(TrapFrequencies::new(-1.0, 1.0, 1.0, 10.0).is_err());
    }
}
