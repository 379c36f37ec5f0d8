//! IoU-only pairing: each unit takes its single best concept when that IoU
//! reaches the cutoff. Reads the same [`IouTable`] the hierarchical stages use.

use serde::{Deserialize, Serialize};

use crate::parts::IouTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePairing {
    pub unit_index: usize,
    pub top_concept: Option<String>,
    pub top_iou: f64,
}

pub fn baseline_pair(table: &IouTable, cutoff: f64) -> BaselinePairing {
    let top = table
        .scores
        .iter()
        .fold(None::<&crate::parts::ConceptIou>, |best, s| match best {
            Some(b) if b.iou > s.iou || (b.iou == s.iou && b.concept <= s.concept) => Some(b),
            _ => Some(s),
        });
    let top_iou = top.map_or(0.0, |t| t.iou);
    BaselinePairing {
        unit_index: table.unit_index,
        top_concept: top.filter(|t| t.iou >= cutoff).map(|t| t.concept.clone()),
        top_iou,
    }
}
