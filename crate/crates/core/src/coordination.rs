//! C* machinery: arbitration of shared resources between coupled
//! compartments, either by a third-party broker or by a leader elected from
//! the intersection relation, plus the stigmergy board compartments post to.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::compartment::IntersectionRelation;
use crate::error::CoordinationError;
use crate::ids::{CompartmentId, ResourceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CStrategy {
    #[default]
    #[serde(rename = "broker")]
    Broker,
    #[serde(rename = "leader", alias = "leader_election")]
    LeaderElection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub compartment_id: CompartmentId,
    pub resource_id: ResourceId,
    /// Priority signal.
    pub remaining_work: u64,
    pub phase_index: u32,
}

/// Exclusive use of a resource for the next E* phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub resource_id: ResourceId,
    pub grantee: CompartmentId,
    pub phase_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Issuer {
    Broker,
    Leader(CompartmentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Grant,
    Wait,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub issuer: Issuer,
    pub target: CompartmentId,
    pub resource_id: ResourceId,
    pub directive: Directive,
    pub phase_index: u32,
}

/// Rotating election: sorted members, index `phase mod |members|`.
pub fn elect_leader(relation: &IntersectionRelation, phase_index: u32) -> Result<CompartmentId, CoordinationError> {
    if relation.members.is_empty() {
        return Err(CoordinationError::EmptyRelation);
    }
    let idx = phase_index as usize % relation.members.len();
    Ok(*relation.members.iter().nth(idx).expect("index in range"))
}

fn group_by_resource(requests: &[ResourceRequest]) -> BTreeMap<&ResourceId, Vec<&ResourceRequest>> {
    let mut by: BTreeMap<&ResourceId, Vec<&ResourceRequest>> = BTreeMap::new();
    for r in requests {
        let slot = by.entry(&r.resource_id).or_default();
        match slot.iter_mut().find(|x| x.compartment_id == r.compartment_id) {
            Some(existing) if existing.remaining_work < r.remaining_work => *existing = r,
            Some(_) => {}
            None => slot.push(r),
        }
    }
    by
}

/// Max remaining work wins; ties go to the lowest compartment id.
fn pick_winner<'a>(contenders: &[&'a ResourceRequest]) -> &'a ResourceRequest {
    contenders
        .iter()
        .copied()
        .min_by(|a, b| {
            b.remaining_work
                .cmp(&a.remaining_work)
                .then(a.compartment_id.cmp(&b.compartment_id))
        })
        .expect("at least one contender")
}

fn settle(
    resource: &ResourceId,
    winner: CompartmentId,
    contenders: &[&ResourceRequest],
    issuer: Issuer,
    phase_index: u32,
    grants: &mut Vec<Grant>,
    orders: &mut Vec<WorkOrder>,
) {
    grants.push(Grant {
        resource_id: resource.clone(),
        grantee: winner,
        phase_index,
    });
    let mut targets: Vec<CompartmentId> = contenders.iter().map(|r| r.compartment_id).collect();
    targets.sort();
    for target in targets {
        orders.push(WorkOrder {
            issuer,
            target,
            resource_id: resource.clone(),
            directive: if target == winner {
                Directive::Grant
            } else {
                Directive::Wait
            },
            phase_index,
        });
    }
}

pub fn broker_resolve(requests: &[ResourceRequest]) -> (Vec<Grant>, Vec<WorkOrder>) {
    let mut grants = Vec::new();
    let mut orders = Vec::new();
    for (resource, contenders) in group_by_resource(requests) {
        let winner = pick_winner(&contenders);
        settle(
            resource,
            winner.compartment_id,
            &contenders,
            Issuer::Broker,
            winner.phase_index,
            &mut grants,
            &mut orders,
        );
    }
    (grants, orders)
}

/// Per relation, the elected leader wins every resource it asked for; the
/// rest fall through to the broker rule among the followers.
pub fn leader_resolve(
    relations: &[IntersectionRelation],
    requests: &[ResourceRequest],
    phase_index: u32,
) -> Result<(Vec<Grant>, Vec<WorkOrder>), CoordinationError> {
    let mut owner: BTreeMap<&ResourceId, &IntersectionRelation> = BTreeMap::new();
    for rel in relations {
        for res in &rel.shared_resources {
            owner.insert(res, rel);
        }
    }
    let mut grants = Vec::new();
    let mut orders = Vec::new();
    let mut leaders: BTreeMap<usize, CompartmentId> = BTreeMap::new();
    for (resource, contenders) in group_by_resource(requests) {
        let Some(rel) = owner.get(resource) else {
            return Err(CoordinationError::UnknownResource {
                compartment: contenders[0].compartment_id,
                resource: resource.clone(),
            });
        };
        if let Some(r) = contenders.iter().find(|r| !rel.members.contains(&r.compartment_id)) {
            return Err(CoordinationError::NotAMember {
                compartment: r.compartment_id,
                resource: resource.clone(),
            });
        }
        let leader = match leaders.get(&rel.id.index()) {
            Some(l) => *l,
            None => {
                let l = elect_leader(rel, phase_index)?;
                leaders.insert(rel.id.index(), l);
                l
            }
        };
        let winner = if contenders.iter().any(|r| r.compartment_id == leader) {
            leader
        } else {
            pick_winner(&contenders).compartment_id
        };
        settle(
            resource,
            winner,
            &contenders,
            Issuer::Leader(leader),
            phase_index,
            &mut grants,
            &mut orders,
        );
    }
    Ok((grants, orders))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoardValue {
    Numeric(i64),
    Symbolic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub key: String,
    pub value: BoardValue,
    pub posted_phase: u32,
    pub ttl_phases: u32,
}

impl BoardEntry {
    pub fn readable_at(&self, phase: u32) -> bool {
        self.posted_phase <= phase && phase < self.posted_phase + self.ttl_phases
    }
}

/// Reduced view of one intersection key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Digest {
    pub sum: i64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub symbols: BTreeMap<String, u32>,
}

/// Shared blackboard of decaying entries. Keys are `<group>.<field>`; the
/// digest groups by the part before the first dot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StigmergyBoard {
    pub entries: Vec<BoardEntry>,
    pub default_ttl: u32,
}

impl Default for StigmergyBoard {
    fn default() -> Self {
        Self::new(2)
    }
}

impl StigmergyBoard {
    pub fn new(default_ttl: u32) -> Self {
        Self {
            entries: Vec::new(),
            default_ttl,
        }
    }

    pub fn purge(&mut self, phase: u32) {
        self.entries.retain(|e| phase < e.posted_phase + e.ttl_phases);
    }

    pub fn post(&mut self, key: impl Into<String>, value: BoardValue, phase: u32) {
        self.entries.push(BoardEntry {
            key: key.into(),
            value,
            posted_phase: phase,
            ttl_phases: self.default_ttl,
        });
    }

    /// Most recent readable value under `key`.
    pub fn read(&self, key: &str, phase: u32) -> Option<&BoardValue> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key && e.readable_at(phase))
            .map(|e| &e.value)
    }

    pub fn digest(&self, phase: u32) -> BTreeMap<String, Digest> {
        let mut out: BTreeMap<String, Digest> = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.readable_at(phase)) {
            let group = e.key.split('.').next().unwrap_or(&e.key).to_owned();
            let d = out.entry(group).or_default();
            match &e.value {
                BoardValue::Numeric(n) => d.sum += n,
                BoardValue::Symbolic(s) => *d.symbols.entry(s.clone()).or_default() += 1,
            }
        }
        out
    }
}

/// Purge, post, then reduce: the C*-phase use of the board.
pub fn post_and_aggregate(
    mut board: StigmergyBoard,
    messages: Vec<(String, BoardValue)>,
    phase_index: u32,
) -> (StigmergyBoard, BTreeMap<String, Digest>) {
    board.purge(phase_index);
    for (k, v) in messages {
        board.post(k, v, phase_index);
    }
    let digest = board.digest(phase_index);
    (board, digest)
}

/// Number of distinct resources requested.
pub fn contested_resources(requests: &[ResourceRequest]) -> BTreeSet<&ResourceId> {
    requests.iter().map(|r| &r.resource_id).collect()
}
