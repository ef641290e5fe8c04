use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoryId {
    #[serde(rename = "BM")]
    Bm,
    #[serde(rename = "GRWm")]
    Grwm,
    #[serde(rename = "GRWf")]
    Grwf,
    #[serde(rename = "GRWP1")]
    Grwp1,
    #[serde(rename = "GRWP2")]
    Grwp2,
    #[serde(rename = "GRWP3")]
    Grwp3,
    #[serde(rename = "GRWP4")]
    Grwp4,
    #[serde(rename = "GRWP5")]
    Grwp5,
    #[serde(rename = "GRWP5C")]
    Grwp5c,
    #[serde(rename = "GRWP6")]
    Grwp6,
    #[serde(rename = "BELL_IID")]
    BellIid,
    #[serde(rename = "MBM")]
    Mbm,
    #[serde(rename = "SM")]
    Sm,
    #[serde(rename = "MM")]
    Mm,
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "MGRWF")]
    Mgrwf,
}

/// Kind of primitive ontology a theory produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoKind {
    Particles,
    Matter,
    Flashes,
}

impl TheoryId {
    pub const ALL: [TheoryId; 16] = [
        TheoryId::Bm,
        TheoryId::Grwm,
        TheoryId::Grwf,
        TheoryId::Grwp1,
        TheoryId::Grwp2,
        TheoryId::Grwp3,
        TheoryId::Grwp4,
        TheoryId::Grwp5,
        TheoryId::Grwp5c,
        TheoryId::Grwp6,
        TheoryId::BellIid,
        TheoryId::Mbm,
        TheoryId::Sm,
        TheoryId::Mm,
        TheoryId::Mf,
        TheoryId::Mgrwf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoryId::Bm => "BM",
            TheoryId::Grwm => "GRWm",
            TheoryId::Grwf => "GRWf",
            TheoryId::Grwp1 => "GRWP1",
            TheoryId::Grwp2 => "GRWP2",
            TheoryId::Grwp3 => "GRWP3",
            TheoryId::Grwp4 => "GRWP4",
            TheoryId::Grwp5 => "GRWP5",
            TheoryId::Grwp5c => "GRWP5C",
            TheoryId::Grwp6 => "GRWP6",
            TheoryId::BellIid => "BELL_IID",
            TheoryId::Mbm => "MBM",
            TheoryId::Sm => "SM",
            TheoryId::Mm => "MM",
            TheoryId::Mf => "MF",
            TheoryId::Mgrwf => "MGRWF",
        }
    }

    pub fn po_kind(self) -> PoKind {
        use TheoryId::*;
        match self {
            Grwm | Sm | Mm => PoKind::Matter,
            Grwf | Mf | Mgrwf => PoKind::Flashes,
            Bm | Grwp1 | Grwp2 | Grwp3 | Grwp4 | Grwp5 | Grwp5c | Grwp6 | BellIid | Mbm => PoKind::Particles,
        }
    }

    /// Driven by a density matrix rather than a wave function.
    pub fn is_mixed(self) -> bool {
        matches!(self, TheoryId::Mbm | TheoryId::Mm | TheoryId::Mf | TheoryId::Mgrwf)
    }

    /// Carries an initial configuration as independent data.
    pub fn needs_configuration(self) -> bool {
        use TheoryId::*;
        matches!(self, Bm | Grwp1 | Grwp2 | Grwp3 | Grwp5 | Grwp5c | Grwp6 | Mbm)
    }

    /// Uses the GRW jump process (or its density-matrix analog).
    pub fn collapses(self) -> bool {
        use TheoryId::*;
        !matches!(self, Bm | BellIid | Sm | Mm | Mbm)
    }

    pub fn description(self) -> &'static str {
        use TheoryId::*;
        match self {
            Bm => "Bohmian mechanics with a Schrodinger wave function",
            Grwm => "GRW process with a matter density",
            Grwf => "GRW process with flashes",
            Grwp1 => "GRW process with Bohmian particles",
            Grwp2 => "Collapse centered at the actual particle position",
            Grwp3 => "Collapse centered at the particle position plus Gaussian noise",
            Grwp4 => "Particles at the circular mean position of the GRW wave function",
            Grwp5 => "Bohmian particles; the collapsed particle jumps to the center",
            Grwp5c => "Bohmian particles; the collapsed particle jumps by the conditional density",
            Grwp6 => "Bohmian particles; the whole configuration is resampled at collapses",
            BellIid => "Schrodinger wave function with independent configurations",
            Mbm => "Bohm-type particles guided by a master-equation density matrix",
            Sm => "Schrodinger wave function with a matter density",
            Mm => "Master-equation density matrix with a matter density",
            Mf => "Flashes sampled from a master-equation density matrix without back-action",
            Mgrwf => "Flashes from a collapsing density matrix",
        }
    }
}

impl fmt::Display for TheoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TheoryId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown theory {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for id in TheoryId::ALL {
            assert_eq!(id.as_str().parse::<TheoryId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
            assert_eq!(serde_json::from_str::<TheoryId>(&json).unwrap(), id);
        }
        assert!("GRWx".parse::<TheoryId>().is_err());
        assert_eq!("grwm".parse::<TheoryId>().unwrap(), TheoryId::Grwm);
    }
}
