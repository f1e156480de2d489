//! JSONL interchange: one ligand record per line, UTF-8.
//!
//! Wire schema per line:
//! `{"id": str, "label": 0|1|null, "pharmacophores": [{"points": [{"t": "HBD|HBA|XBD|PI|NI|H|AR", "pos": [x,y,z]}]}]}`
//!
//! Pharmacophore ids are not part of the wire format; they are rebuilt
//! deterministically as `<ligand_id>#<conformer_index>`, which makes
//! `parse(serialize(records))` an exact round trip.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::types::{FeaturePoint, LigandRecord, Pharmacophore};
use crate::{PharmError, Result};

#[derive(Serialize, Deserialize)]
struct WirePharmacophore {
    points: Vec<FeaturePoint>,
}

#[derive(Serialize, Deserialize)]
struct WireLigand {
    id: String,
    label: Option<u8>,
    pharmacophores: Vec<WirePharmacophore>,
}

/// Minimum points for a stored pharmacophore; queries and training targets
/// below this size are not meaningful.
pub const MIN_STORED_POINTS: usize = 3;

fn record_from_wire(wire: WireLigand, line: usize) -> Result<LigandRecord> {
    let label = match wire.label {
        None => None,
        Some(0) => Some(false),
        Some(1) => Some(true),
        Some(other) => {
            return Err(PharmError::Parse {
                line,
                msg: format!("label must be 0, 1 or null, got {other}"),
            })
        }
    };
    if wire.id.is_empty() {
        return Err(PharmError::Parse { line, msg: "empty ligand id".into() });
    }
    if wire.pharmacophores.is_empty() {
        return Err(PharmError::Parse {
            line,
            msg: format!("ligand `{}` has no pharmacophores", wire.id),
        });
    }
    let pharmacophores: Vec<Pharmacophore> = wire
        .pharmacophores
        .into_iter()
        .enumerate()
        .map(|(k, wp)| Pharmacophore::new(format!("{}#{k}", wire.id), wp.points))
        .collect();
    for p in &pharmacophores {
        p.validate(MIN_STORED_POINTS)
            .map_err(|e| PharmError::Parse { line, msg: e.to_string() })?;
    }
    Ok(LigandRecord { ligand_id: wire.id, label, pharmacophores })
}

/// Parses a JSONL stream of ligand records, preserving order.
///
/// Blank lines are ignored; any malformed line fails with its 1-based
/// line number.
pub fn parse_pharmacophores<R: BufRead>(reader: R) -> Result<Vec<LigandRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireLigand = serde_json::from_str(&line)
            .map_err(|e| PharmError::Parse { line: line_no, msg: e.to_string() })?;
        records.push(record_from_wire(wire, line_no)?);
    }
    Ok(records)
}

/// Writes records as JSONL in the wire schema.
pub fn serialize_records<W: Write>(mut writer: W, records: &[LigandRecord]) -> Result<()> {
    for r in records {
        let wire = WireLigand {
            id: r.ligand_id.clone(),
            label: r.label.map(|b| b as u8),
            pharmacophores: r
                .pharmacophores
                .iter()
                .map(|p| WirePharmacophore { points: p.points.clone() })
                .collect(),
        };
        let json = serde_json::to_string(&wire)
            .map_err(|e| PharmError::InvalidInput(format!("serialize: {e}")))?;
        writeln!(writer, "{json}")?;
    }
    Ok(())
}
