//! Ility-driven goal trees, drone subgroup apportionment, and expansion of
//! the virtual fleet.
//!
//! Every compartment gets one six-level tree per ility. Only the
//! Functionality tree carries simulated work: its leaves are mapped onto the
//! compartment's work tape (segment by segment, task kind by task kind) and
//! each leaf is staffed by a subgroup of virtual drones sized by the
//! largest-remainder method.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, CompartmentPlan};
use crate::error::PlanError;
use crate::fleet::{Capability, DroneRole, PhysicalDrone, VirtualDrone};
use crate::ids::{CompartmentId, GoalId, ResourceId, SegmentId, VirtualId};
use crate::scenario::LandscapeStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlityAttribute {
    Functionality,
    Productivity,
    Performance,
    Cost,
    Reliability,
    Survivability,
    Security,
    Efficiency,
    Maintainability,
    Adaptability,
}

impl IlityAttribute {
    pub const CORE: [IlityAttribute; 4] = [
        IlityAttribute::Functionality,
        IlityAttribute::Productivity,
        IlityAttribute::Performance,
        IlityAttribute::Cost,
    ];

    pub fn is_core(self) -> bool {
        Self::CORE.contains(&self)
    }

    /// Report metric observed by leaves of this ility's tree.
    pub fn probe(self) -> &'static str {
        match self {
            IlityAttribute::Functionality => "completed_work",
            IlityAttribute::Productivity => "productivity",
            IlityAttribute::Performance => "makespan_hours",
            IlityAttribute::Cost => "cost",
            IlityAttribute::Reliability => "stall_events",
            IlityAttribute::Survivability => "starvation_events",
            IlityAttribute::Security => "isolation_violations",
            IlityAttribute::Efficiency => "utilization",
            IlityAttribute::Maintainability => "recharge_ticks",
            IlityAttribute::Adaptability => "rebindings",
        }
    }
}

impl fmt::Display for IlityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalLevel {
    Goal,
    Agenda,
    Task,
    Behavior,
    Operation,
    Action,
}

impl GoalLevel {
    pub const ALL: [GoalLevel; 6] = [
        GoalLevel::Goal,
        GoalLevel::Agenda,
        GoalLevel::Task,
        GoalLevel::Behavior,
        GoalLevel::Operation,
        GoalLevel::Action,
    ];

    pub fn depth(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalNode {
    pub id: GoalId,
    pub level: GoalLevel,
    pub ility: IlityAttribute,
    pub compartment_id: CompartmentId,
    /// Set on Action leaves only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work_share: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<GoalNode>,
}

impl GoalNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves in preorder (which is also ascending id order).
    pub fn leaves(&self) -> Vec<&GoalNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if n.is_leaf() {
                out.push(n);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(GoalNode::node_count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTree {
    pub compartment_id: CompartmentId,
    pub ility: IlityAttribute,
    pub root: GoalNode,
}

impl GoalTree {
    pub fn leaves(&self) -> Vec<&GoalNode> {
        self.root.leaves()
    }

    pub fn leaf_work_total(&self) -> u64 {
        self.leaves().iter().filter_map(|l| l.work_share).sum()
    }
}

/// Branching counts for the five level transitions Goal→Agenda ... Operation→Action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FanoutTemplate(pub [u32; 5]);

impl FanoutTemplate {
    pub fn chain() -> Self {
        Self([1; 5])
    }

    pub fn from_slice(v: &[u32]) -> Result<Self, PlanError> {
        if v.len() != 5 || v.contains(&0) {
            return Err(PlanError::BadFanout(v.to_vec()));
        }
        let mut a = [0; 5];
        a.copy_from_slice(v);
        Ok(Self(a))
    }

    pub fn leaf_count(&self) -> u64 {
        self.0.iter().map(|&f| f as u64).product()
    }
}

/// Hands out globally unique goal ids.
#[derive(Debug, Default)]
pub struct GoalIdGen(u32);

impl GoalIdGen {
    fn next(&mut self) -> GoalId {
        let id = GoalId(self.0);
        self.0 += 1;
        id
    }
}

/// Equal split with the remainder going one unit each to the lowest indices.
pub fn equal_split(total: u64, parts: usize) -> Vec<u64> {
    if parts == 0 {
        return Vec::new();
    }
    let p = parts as u64;
    (0..p).map(|i| total / p + u64::from(i < total % p)).collect()
}

pub fn build_goal_trees(
    compartment: &Compartment,
    ilities: &[IlityAttribute],
    fanout: FanoutTemplate,
    ids: &mut GoalIdGen,
) -> Result<Vec<GoalTree>, PlanError> {
    if ilities.is_empty() {
        return Err(PlanError::EmptyIlitySet);
    }
    let mut seen = BTreeSet::new();
    for i in ilities {
        if !seen.insert(*i) {
            return Err(PlanError::DuplicateIlity(i.to_string()));
        }
    }
    let shares = equal_split(compartment.total_work, fanout.leaf_count() as usize);
    Ok(ilities
        .iter()
        .map(|&ility| {
            let mut leaf_shares = shares.iter().copied();
            let root = build_node(compartment.id, ility, 0, fanout, ids, &mut leaf_shares);
            GoalTree {
                compartment_id: compartment.id,
                ility,
                root,
            }
        })
        .collect())
}

fn build_node(
    compartment: CompartmentId,
    ility: IlityAttribute,
    depth: usize,
    fanout: FanoutTemplate,
    ids: &mut GoalIdGen,
    shares: &mut impl Iterator<Item = u64>,
) -> GoalNode {
    let id = ids.next();
    let level = GoalLevel::ALL[depth];
    if level == GoalLevel::Action {
        return GoalNode {
            id,
            level,
            ility,
            compartment_id: compartment,
            work_share: Some(shares.next().unwrap_or(0)),
            probe: (ility != IlityAttribute::Functionality).then(|| ility.probe().to_owned()),
            children: Vec::new(),
        };
    }
    let children = (0..fanout.0[depth])
        .map(|_| build_node(compartment, ility, depth + 1, fanout, ids, shares))
        .collect();
    GoalNode {
        id,
        level,
        ility,
        compartment_id: compartment,
        work_share: None,
        probe: None,
        children,
    }
}

/// Subgroup sizes: one drone per positive leaf first, then the rest by
/// largest remainder on the work shares. Remainder ties go to the lower index.
pub fn largest_remainder(works: &[u64], slots: usize) -> Result<Vec<usize>, PlanError> {
    let positive = works.iter().filter(|&&w| w > 0).count();
    if slots < positive {
        return Err(PlanError::InsufficientVirtualDrones {
            leaves: positive,
            drones: slots,
        });
    }
    let mut sizes: Vec<usize> = works.iter().map(|&w| usize::from(w > 0)).collect();
    let total: u128 = works.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return Ok(sizes);
    }
    let extra = (slots - positive) as u128;
    let mut handed = 0u128;
    let mut remainders: Vec<(u128, usize)> = Vec::new();
    for (i, &w) in works.iter().enumerate() {
        let num = extra * w as u128;
        let q = num / total;
        sizes[i] += q as usize;
        handed += q;
        remainders.push((num % total, i));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take((extra - handed) as usize) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Map leaves to disjoint subgroups of the given virtual drone ids. Leaves
/// with zero work get an empty subgroup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubgroupAssignment {
    pub by_leaf: BTreeMap<GoalId, BTreeSet<VirtualId>>,
}

pub fn assign_subgroups(trees: &[GoalTree], virtual_fleet: &[VirtualId]) -> Result<SubgroupAssignment, PlanError> {
    let mut leaves: Vec<(GoalId, u64)> = trees
        .iter()
        .flat_map(|t| t.leaves())
        .map(|l| (l.id, l.work_share.unwrap_or(0)))
        .collect();
    leaves.sort_by_key(|(id, _)| *id);
    let mut fleet = virtual_fleet.to_vec();
    fleet.sort();
    fleet.dedup();
    let works: Vec<u64> = leaves.iter().map(|(_, w)| *w).collect();
    let sizes = largest_remainder(&works, fleet.len())?;
    let mut by_leaf = BTreeMap::new();
    let mut it = fleet.into_iter();
    for ((leaf, _), size) in leaves.into_iter().zip(sizes) {
        by_leaf.insert(leaf, it.by_ref().take(size).collect());
    }
    Ok(SubgroupAssignment { by_leaf })
}

/// A run of work units with uniform requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkChunk {
    pub segment: SegmentId,
    pub capability: Capability,
    pub units: u64,
    pub resource: Option<ResourceId>,
    pub consumes_payload: bool,
    pub span_ft: (f64, f64),
}

/// The ordered work a Functionality leaf must get through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafWork {
    pub leaf: GoalId,
    pub compartment: CompartmentId,
    pub chunks: VecDeque<WorkChunk>,
}

impl LeafWork {
    pub fn remaining(&self) -> u64 {
        self.chunks.iter().map(|c| c.units).sum()
    }
}

/// Lay out one segment's work units: task kinds in enum order, interface
/// units at the front (split between the left and right boundary when the
/// segment touches both), payload-consuming units at the back.
fn segment_tape(
    structure: &LandscapeStructure,
    seg: SegmentId,
    left: Option<ResourceId>,
    right: Option<ResourceId>,
) -> Vec<WorkChunk> {
    let s = &structure.segments[seg.index()];
    let total = s.total_work();
    if total == 0 {
        return Vec::new();
    }
    let iface = s.interface_work.min(total);
    let (left_end, iface_end) = match (&left, &right) {
        (Some(_), Some(_)) => (iface.div_ceil(2), iface),
        (Some(_), None) => (iface, iface),
        (None, Some(_)) => (0, iface),
        (None, None) => (0, 0),
    };
    let payload_start = total - s.payload_required.min(total);

    let mut kinds = Vec::new();
    let mut offset = 0;
    for (&cap, &w) in s.work_required.iter().filter(|(_, &w)| w > 0) {
        kinds.push((offset, offset + w, cap));
        offset += w;
    }
    let mut cuts: BTreeSet<u64> = BTreeSet::from([0, total, left_end, iface_end, payload_start]);
    cuts.extend(kinds.iter().map(|k| k.0));
    let cuts: Vec<u64> = cuts.into_iter().filter(|&c| c <= total).collect();

    let mut out: Vec<WorkChunk> = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let cap = kinds
            .iter()
            .find(|k| k.0 <= a && a < k.1)
            .expect("offset within tape")
            .2;
        let resource = if a < left_end {
            left.clone()
        } else if a < iface_end {
            right.clone()
        } else {
            None
        };
        out.push(WorkChunk {
            segment: seg,
            capability: cap,
            units: b - a,
            resource,
            consumes_payload: a >= payload_start,
            span_ft: (s.start_ft, s.end_ft()),
        });
    }
    out
}

/// The whole work tape of a compartment, segment by segment.
pub fn compartment_tape(structure: &LandscapeStructure, plan: &CompartmentPlan, c: &Compartment) -> Vec<WorkChunk> {
    let k = c.id.0;
    let last = plan.len() as u32 - 1;
    let mut out = Vec::new();
    for seg in c.segment_range.iter() {
        let left = (seg == c.segment_range.first && k > 0).then(|| ResourceId::boundary(CompartmentId(k - 1), c.id));
        let right = (seg == c.segment_range.last && k < last).then(|| ResourceId::boundary(c.id, CompartmentId(k + 1)));
        out.extend(segment_tape(structure, seg, left, right));
    }
    out
}

/// Cut the compartment tape into consecutive slices matching the
/// Functionality leaves' work shares.
pub fn slice_leaf_work(tape: Vec<WorkChunk>, tree: &GoalTree) -> Vec<LeafWork> {
    let mut chunks: VecDeque<WorkChunk> = tape.into();
    let mut out = Vec::new();
    for leaf in tree.leaves() {
        let mut need = leaf.work_share.unwrap_or(0);
        let mut mine = VecDeque::new();
        while need > 0 {
            let Some(mut head) = chunks.pop_front() else { break };
            if head.units > need {
                let mut rest = head.clone();
                rest.units = head.units - need;
                head.units = need;
                chunks.push_front(rest);
            }
            need -= head.units;
            mine.push_back(head);
        }
        out.push(LeafWork {
            leaf: leaf.id,
            compartment: tree.compartment_id,
            chunks: mine,
        });
    }
    out
}

/// Staff every positive Functionality leaf with virtual drones.
///
/// A compartment gets `max(positive leaves, n)` virtual drones where `n` is
/// the per-compartment override or else the number of field drones homed in
/// it, so the virtual count may exceed the physical count.
pub fn expand_virtual_fleet(
    plan: &CompartmentPlan,
    trees: &[GoalTree],
    leaf_work: &BTreeMap<GoalId, LeafWork>,
    physical: &[PhysicalDrone],
    virtual_per_compartment: Option<u32>,
) -> Result<(Vec<VirtualDrone>, SubgroupAssignment), PlanError> {
    if !physical.iter().any(|p| p.role == DroneRole::FieldOperation) {
        return Err(PlanError::NoFieldDrones);
    }
    let mut fleet = Vec::new();
    let mut assignment = SubgroupAssignment::default();
    let mut next = 0u32;
    for c in &plan.compartments {
        let func: Vec<GoalTree> = trees
            .iter()
            .filter(|t| t.compartment_id == c.id && t.ility == IlityAttribute::Functionality)
            .cloned()
            .collect();
        let positive = func
            .iter()
            .flat_map(|t| t.leaves())
            .filter(|l| l.work_share.unwrap_or(0) > 0)
            .count();
        if positive == 0 {
            // still record empty subgroups for zero-work leaves
            assignment.by_leaf.extend(assign_subgroups(&func, &[])?.by_leaf);
            continue;
        }
        let homed = physical
            .iter()
            .filter(|p| p.role == DroneRole::FieldOperation && p.home_compartment == Some(c.id))
            .count();
        let wanted = virtual_per_compartment.map_or(homed, |v| v as usize);
        let count = wanted.max(positive);
        let ids: Vec<VirtualId> = (next..next + count as u32).map(VirtualId).collect();
        next += count as u32;
        let sub = assign_subgroups(&func, &ids)?;
        for (leaf, members) in &sub.by_leaf {
            let Some(work) = leaf_work.get(leaf) else { continue };
            let Some(head) = work.chunks.front() else { continue };
            for v in members {
                fleet.push(VirtualDrone {
                    id: *v,
                    compartment_id: c.id,
                    leaf_goal_id: *leaf,
                    goal_level: GoalLevel::Action.depth(),
                    required_capability: head.capability,
                    required_resources: head.resource.iter().cloned().collect(),
                    remaining_work: work.remaining(),
                    work_span_ft: head.span_ft,
                    bound_physical: None,
                    twin_state: None,
                });
            }
        }
        assignment.by_leaf.extend(sub.by_leaf);
    }
    fleet.sort_by_key(|v| v.id);
    Ok((fleet, assignment))
}
