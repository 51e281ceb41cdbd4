//! Phase records and the NDJSON trace format.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coordination::{Digest, Grant, ResourceRequest, WorkOrder};
use crate::fleet::{Location, PowerState};
use crate::ids::{CompartmentId, DroneId, GoalId, ResourceId, VirtualId};
use crate::logistics::{PayloadLedger, Transfer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKind {
    EStar,
    CStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinRecord {
    pub virtual_id: VirtualId,
    pub physical: DroneId,
    pub location: Option<Location>,
    pub duty_clock_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneRecord {
    pub drone: DroneId,
    pub worked: bool,
    pub duty_ticks: u32,
    pub power_state: PowerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarvationEvent {
    pub phase: u32,
    pub compartment: CompartmentId,
    pub leaf: GoalId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PhaseRecord {
    #[serde(rename = "C")]
    CStar {
        index: u32,
        /// C* ordinal, used for leader election.
        phase: u32,
        requests: Vec<ResourceRequest>,
        grants: Vec<Grant>,
        orders: Vec<WorkOrder>,
        digest: BTreeMap<String, Digest>,
        clock_hours: f64,
    },
    #[serde(rename = "E")]
    EStar {
        index: u32,
        /// E* ordinal, used by the round-robin multiplexer.
        phase: u32,
        bindings: Vec<(DroneId, VirtualId)>,
        /// Work done this phase per compartment, as (compartment, units)
        /// in ascending compartment order.
        work_deltas: Vec<(CompartmentId, u64)>,
        /// Work done this phase per physical drone (only drones that worked).
        drone_work: BTreeMap<DroneId, u64>,
        /// Work remaining everywhere after the phase.
        remaining: u64,
        twins: Vec<TwinRecord>,
        drones: Vec<DroneRecord>,
        transfers: Vec<Transfer>,
        starvation: Vec<StarvationEvent>,
        payload: PayloadLedger,
        clock_hours: f64,
    },
}

impl PhaseRecord {
    pub fn kind(&self) -> PhaseKind {
        match self {
            PhaseRecord::CStar { .. } => PhaseKind::CStar,
            PhaseRecord::EStar { .. } => PhaseKind::EStar,
        }
    }

    pub fn index(&self) -> u32 {
        match self {
            PhaseRecord::CStar { index, .. } | PhaseRecord::EStar { index, .. } => *index,
        }
    }
}

/// Diagnostic attached to a run that stopped making progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StallDiagnostic {
    pub idle_estar_phases: u32,
    pub starved: Vec<StarvedCompartment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarvedCompartment {
    pub compartment: CompartmentId,
    pub remaining: u64,
    pub blocking_resources: Vec<ResourceId>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub records: Vec<PhaseRecord>,
    pub seed: u64,
    pub scenario_digest: String,
}

impl PhaseTrace {
    pub fn kinds(&self) -> Vec<PhaseKind> {
        self.records.iter().map(PhaseRecord::kind).collect()
    }

    pub fn estar_count(&self) -> u32 {
        self.records.iter().filter(|r| r.kind() == PhaseKind::EStar).count() as u32
    }

    pub fn cstar_count(&self) -> u32 {
        self.records.iter().filter(|r| r.kind() == PhaseKind::CStar).count() as u32
    }

    pub fn write_ndjson(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn parse_ndjson(text: &str) -> Result<Vec<PhaseRecord>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

/// Does the kind sequence match `C (E C)* E`, or a lone `C` for an empty
/// workload?
pub fn is_alternating(kinds: &[PhaseKind]) -> bool {
    if kinds.first() != Some(&PhaseKind::CStar) {
        return false;
    }
    if kinds.len() == 1 {
        return true;
    }
    kinds.len().is_multiple_of(2)
        && kinds
            .iter()
            .enumerate()
            .all(|(i, k)| *k == if i % 2 == 0 { PhaseKind::CStar } else { PhaseKind::EStar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use PhaseKind::{CStar as C, EStar as E};

    #[test]
    fn alternation_pattern() {
        assert!(is_alternating(&[C]));
        assert!(is_alternating(&[C, E]));
        assert!(is_alternating(&[C, E, C, E]));
        assert!(!is_alternating(&[]));
        assert!(!is_alternating(&[E, C]));
        assert!(!is_alternating(&[C, E, C]));
        assert!(!is_alternating(&[C, C, E]));
    }

    #[test]
    fn records_round_trip() {
        let r = PhaseRecord::CStar {
            index: 0,
            phase: 0,
            requests: vec![],
            grants: vec![],
            orders: vec![],
            digest: BTreeMap::new(),
            clock_hours: 0.0,
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with(r#"{"kind":"C""#));
        assert_eq!(serde_json::from_str::<PhaseRecord>(&line).unwrap(), r);
    }
}
