//! Core record types shared by every downstream module.

use serde::{Deserialize, Serialize};

use crate::{PharmError, Result};

/// Pharmacophoric feature class of a single interaction point.
///
/// The integer codes are stable and used directly for one-hot encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureType {
    /// Hydrogen bond donor.
    Hbd,
    /// Hydrogen bond acceptor.
    Hba,
    /// Halogen bond donor.
    Xbd,
    /// Positive ionizable site.
    Pi,
    /// Negative ionizable site.
    Ni,
    /// Hydrophobic site.
    H,
    /// Aromatic ring.
    Ar,
}

impl FeatureType {
    pub const COUNT: usize = 7;

    pub const ALL: [FeatureType; Self::COUNT] = [
        FeatureType::Hbd,
        FeatureType::Hba,
        FeatureType::Xbd,
        FeatureType::Pi,
        FeatureType::Ni,
        FeatureType::H,
        FeatureType::Ar,
    ];

    /// Stable one-hot code in `0..7`.
    pub fn code(self) -> usize {
        match self {
            FeatureType::Hbd => 0,
            FeatureType::Hba => 1,
            FeatureType::Xbd => 2,
            FeatureType::Pi => 3,
            FeatureType::Ni => 4,
            FeatureType::H => 5,
            FeatureType::Ar => 6,
        }
    }

    pub fn from_code(code: usize) -> Option<FeatureType> {
        Self::ALL.get(code).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureType::Hbd => "HBD",
            FeatureType::Hba => "HBA",
            FeatureType::Xbd => "XBD",
            FeatureType::Pi => "PI",
            FeatureType::Ni => "NI",
            FeatureType::H => "H",
            FeatureType::Ar => "AR",
        }
    }
}

impl std::fmt::Display for FeatureType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureType {
    type Err = PharmError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PharmError::InvalidInput(format!("unknown feature type `{s}`")))
    }
}

/// One typed point of a pharmacophore; coordinates in angstrom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    #[serde(rename = "t")]
    pub kind: FeatureType,
    pub pos: [f64; 3],
}

impl FeaturePoint {
    pub fn new(kind: FeatureType, pos: [f64; 3]) -> Self {
        FeaturePoint { kind, pos }
    }
}

/// A pharmacophore: an identified set of typed 3D feature points.
#[derive(Debug, Clone, PartialEq)]
pub struct Pharmacophore {
    pub id: String,
    pub points: Vec<FeaturePoint>,
}

impl Pharmacophore {
    pub fn new(id: impl Into<String>, points: Vec<FeaturePoint>) -> Self {
        Pharmacophore { id: id.into(), points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean of the point positions.
    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p.pos[k];
            }
        }
        let n = self.points.len().max(1) as f64;
        c.map(|v| v / n)
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.pos).collect()
    }

    /// Checks the invariants required of stored records: non-empty id,
    /// at least `min_points` points, all coordinates finite.
    pub fn validate(&self, min_points: usize) -> Result<()> {
        if self.id.is_empty() {
            return Err(PharmError::InvalidInput("empty pharmacophore id".into()));
        }
        if self.points.len() < min_points {
            return Err(PharmError::InvalidInput(format!(
                "pharmacophore `{}` has {} points, need at least {min_points}",
                self.id,
                self.points.len()
            )));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.pos.iter().all(|v| v.is_finite()) {
                return Err(PharmError::InvalidInput(format!(
                    "pharmacophore `{}` point {i} has non-finite coordinates",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A database ligand: one pharmacophore per conformer plus an optional
/// active/decoy label.
#[derive(Debug, Clone, PartialEq)]
pub struct LigandRecord {
    pub ligand_id: String,
    pub label: Option<bool>,
    pub pharmacophores: Vec<Pharmacophore>,
}

impl LigandRecord {
    pub fn new(
        ligand_id: impl Into<String>,
        label: Option<bool>,
        pharmacophores: Vec<Pharmacophore>,
    ) -> Self {
        LigandRecord { ligand_id: ligand_id.into(), label, pharmacophores }
    }
}
