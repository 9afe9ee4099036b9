//! Reference dataset: measured Yb transition wavelengths (vacuum) for the
//! stable isotopes. The ionization values apply to a 63° intersection angle
//! between the atomic beam and the 398.9 nm laser; the ¹⁷¹Yb⁺ cooling and
//! repump rows refer to specific hyperfine components.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    /// Neutral ¹S₀ ↔ ¹P₁ photoionization step (398.9 nm).
    Ionization,
    /// ²S₁/₂ ↔ ²P₁/₂ Doppler cooling (369.5 nm).
    Cooling,
    /// ²D₃/₂ ↔ ³D[3/2]₁/₂ repump (935.2 nm).
    Repump,
}

impl Transition {
    pub fn label(&self) -> &'static str {
        match self {
            Transition::Ionization => "1S0-1P1 (ionization)",
            Transition::Cooling => "2S1/2-2P1/2 (cooling)",
            Transition::Repump => "2D3/2-3D[3/2]1/2 (repump)",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ionization" | "ionisation" | "398" | "398.9" => Some(Transition::Ionization),
            "cooling" | "369" | "369.5" => Some(Transition::Cooling),
            "repump" | "935" | "935.2" => Some(Transition::Repump),
            _ => None,
        }
    }

    pub const ALL: [Transition; 3] = [Transition::Ionization, Transition::Cooling, Transition::Repump];
}

/// One measured wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub isotope: u32,
    pub transition: Transition,
    /// Vacuum wavelength, nm.
    pub wavelength_vacuum_nm: f64,
    /// 1σ uncertainty, nm.
    pub uncertainty_nm: f64,
    /// Geometry/hyperfine caveats, where applicable.
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown isotope {0}; valid: 170, 171, 172, 174, 176")]
    UnknownIsotope(u32),
    #[error("unknown transition {0:?}; valid: ionization, cooling, repump")]
    UnknownTransition(String),
}

const IONIZATION_NOTE: &str =
    "valid for a 63 deg angle between the neutral atomic beam and the 398.9 nm laser";
const YB171_COOLING_NOTE: &str = "2S1/2(F=1) <-> 2P1/2(F=0) hyperfine component";
const YB171_REPUMP_NOTE: &str = "2D3/2(F=1) <-> 3D[3/2]1/2(F=0) hyperfine component";

/// (isotope, ionization, cooling, repump) wavelengths in nm; uncertainties
/// are 0.00006 nm for the 398.9/369.5 nm rows and 0.00020 nm for 935 nm.
const TABLE: [(u32, f64, f64, f64); 5] = [
    (170, 398.91051, 369.52364, 935.19751),
    (171, 398.91070, 369.52604, 935.18768),
    (172, 398.91083, 369.52435, 935.18736),
    (174, 398.91114, 369.52494, 935.17976),
    (176, 398.91144, 369.52550, 935.17252),
];

const UNC_UV_NM: f64 = 0.00006;
const UNC_IR_NM: f64 = 0.00020;

/// All 15 table entries.
pub fn all_transitions() -> Vec<TransitionRecord> {
    TABLE
        .iter()
        .flat_map(|&(iso, _, _, _)| {
            Transition::ALL
                .iter()
                .map(move |&t| lookup_transition(iso, t).expect("table is complete"))
        })
        .collect()
}

/// Exact table value with uncertainty and caveat notes.
pub fn lookup_transition(isotope: u32, transition: Transition) -> Result<TransitionRecord, LookupError> {
    let row = TABLE
        .iter()
        .find(|(iso, _, _, _)| *iso == isotope)
        .ok_or(LookupError::UnknownIsotope(isotope))?;
    let (wavelength, uncertainty) = match transition {
        Transition::Ionization => (row.1, UNC_UV_NM),
        Transition::Cooling => (row.2, UNC_UV_NM),
        Transition::Repump => (row.3, UNC_IR_NM),
    };
    let notes = match transition {
        Transition::Ionization => Some(IONIZATION_NOTE.to_string()),
        Transition::Cooling if isotope == 171 => Some(YB171_COOLING_NOTE.to_string()),
        Transition::Repump if isotope == 171 => Some(YB171_REPUMP_NOTE.to_string()),
        _ => None,
    };
    Ok(TransitionRecord {
        isotope,
        transition,
        wavelength_vacuum_nm: wavelength,
        uncertainty_nm: uncertainty,
        notes,
    })
}
