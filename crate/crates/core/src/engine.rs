//! The phase-alternating kernel.
//!
//! A run is `C (E C)* E`: a C* phase arbitrates shared resources and binds
//! virtual drones to physical drones, then an E* phase lets every
//! compartment work on its own state only. Logistics ticks after the
//! compartments in each E* phase.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compartment::IntersectionRelation;
use crate::coordination::{
    broker_resolve, leader_resolve, post_and_aggregate, BoardValue, CStrategy, Grant, ResourceRequest, StigmergyBoard,
};
use crate::error::SimError;
use crate::fleet::{advance_power_state, capability_match, PhysicalDrone, PowerConfig, VirtualDrone, EPS};
use crate::goal::LeafWork;
use crate::ids::{CompartmentId, DroneId, GoalId, ResourceId, SiteId, VirtualId};
use crate::logistics::{LogisticsState, PayloadLedger};
use crate::plan::{plan, Plan};
use crate::scenario::Scenario;
use crate::trace::{
    DroneRecord, PhaseRecord, PhaseTrace, StallDiagnostic, StarvationEvent, StarvedCompartment, TwinRecord,
};
use crate::work_os::{bind_phase, compute_runnable, MultiplexScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Update compartments on the rayon pool during E* phases.
    pub parallel: bool,
    /// Record every state read made during E* phases.
    pub access_log: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            parallel: false,
            access_log: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub phase: u32,
    pub actor: CompartmentId,
    pub target: CompartmentId,
    pub field: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessLog {
    pub entries: Vec<Access>,
}

impl AccessLog {
    pub fn cross_reads(&self) -> usize {
        self.entries.iter().filter(|a| a.actor != a.target).count()
    }
}

/// Everything a compartment owns. E* updates see nothing else.
#[derive(Debug, Clone)]
pub struct CompartmentState {
    pub id: CompartmentId,
    pub leaves: BTreeMap<GoalId, LeafWork>,
    pub virtuals: Vec<VirtualDrone>,
    pub physicals: Vec<PhysicalDrone>,
    /// Payload on hand at the compartment's field ops site.
    pub store: u64,
    pub consumed: u64,
    pub grants: Vec<Grant>,
    /// (physical, virtual) pairs for the coming E* phase.
    pub binding: Vec<(DroneId, VirtualId)>,
}

impl CompartmentState {
    pub fn remaining(&self) -> u64 {
        self.leaves.values().map(LeafWork::remaining).sum()
    }

    fn holds(&self, resource: &ResourceId) -> bool {
        self.grants
            .iter()
            .any(|g| &g.resource_id == resource && g.grantee == self.id)
    }

    /// Copy each leaf's head requirements into the virtual drones serving it.
    fn refresh_virtuals(&mut self) {
        for v in &mut self.virtuals {
            let leaf = &self.leaves[&v.leaf_goal_id];
            v.remaining_work = leaf.remaining();
            if let Some(head) = leaf.chunks.front() {
                v.required_capability = head.capability;
                v.required_resources = head.resource.iter().cloned().collect();
                v.work_span_ft = head.span_ft;
            } else {
                v.required_resources.clear();
            }
        }
    }
}

/// Tether reach check: a tethered drone can only work a span lying within
/// `reach_ft` of its anchor.
#[derive(Debug, Clone, Default)]
struct Reach {
    anchors: BTreeMap<SiteId, f64>,
}

impl Reach {
    fn covers(&self, p: &PhysicalDrone, span: (f64, f64)) -> bool {
        match &p.power {
            PowerConfig::Battery { .. } => true,
            PowerConfig::Tethered { anchor_site, reach_ft } => {
                let at = self.anchors.get(anchor_site).copied().unwrap_or(0.0);
                (span.0 - at).abs() <= reach_ft + EPS && (span.1 - at).abs() <= reach_ft + EPS
            }
        }
    }

    fn eligible(&self, v: &VirtualDrone, p: &PhysicalDrone) -> bool {
        capability_match(v, p)
            && p.home_compartment == Some(v.compartment_id)
            && self.covers(p, v.work_span_ft)
            && !p.is_recharging()
    }
}

#[derive(Debug, Default)]
struct CompartmentStep {
    work: u64,
    drone_work: Vec<(DroneId, u64)>,
    twins: Vec<TwinRecord>,
    drones: Vec<DroneRecord>,
    starvation: Vec<StarvationEvent>,
    accesses: Vec<Access>,
}

/// One compartment's E* update. Takes only its own state.
fn work_compartment(
    c: &mut CompartmentState,
    phase: u32,
    tick_hours: f64,
    reach: &Reach,
    log: bool,
) -> CompartmentStep {
    let mut step = CompartmentStep::default();
    let mut read = |field: &str| {
        if log {
            step.accesses.push(Access {
                phase,
                actor: c.id,
                target: c.id,
                field: field.to_owned(),
            });
        }
    };
    read("binding");
    read("leaves");
    read("store");
    read("grants");
    let mut accesses = std::mem::take(&mut step.accesses);

    let binding = c.binding.clone();
    let mut worked: BTreeSet<DroneId> = BTreeSet::new();
    let mut starved_leaves: BTreeSet<GoalId> = BTreeSet::new();
    for (pid, vid) in &binding {
        let p = c
            .physicals
            .iter()
            .find(|p| &p.id == pid)
            .expect("bound physical belongs here")
            .clone();
        let v = c
            .virtuals
            .iter()
            .find(|v| &v.id == vid)
            .expect("bound virtual belongs here")
            .clone();
        step.twins.push(TwinRecord {
            virtual_id: v.id,
            physical: p.id.clone(),
            location: p.location.clone(),
            duty_clock_hours: p.duty_clock_hours(tick_hours),
        });
        let mut budget = p.work_rate;
        let mut done = 0;
        let leaf_id = v.leaf_goal_id;
        while budget > 0 {
            let (cap, res, payload, span, units) = {
                let Some(head) = c.leaves[&leaf_id].chunks.front() else {
                    break;
                };
                (
                    head.capability,
                    head.resource.clone(),
                    head.consumes_payload,
                    head.span_ft,
                    head.units,
                )
            };
            if !p.capabilities.contains(&cap) || !reach.covers(&p, span) {
                break;
            }
            if let Some(r) = &res {
                if !c.holds(r) {
                    break;
                }
            }
            let mut n = budget.min(units);
            if payload {
                if c.store == 0 {
                    starved_leaves.insert(leaf_id);
                    break;
                }
                n = n.min(c.store);
                c.store -= n;
                c.consumed += n;
            }
            let leaf = c.leaves.get_mut(&leaf_id).expect("leaf exists");
            let head = leaf.chunks.front_mut().expect("head exists");
            head.units -= n;
            if head.units == 0 {
                leaf.chunks.pop_front();
            }
            budget -= n;
            done += n;
        }
        if done > 0 {
            worked.insert(p.id.clone());
            step.drone_work.push((p.id.clone(), done));
            step.work += done;
        }
    }

    for p in &mut c.physicals {
        let w = worked.contains(&p.id);
        *p = advance_power_state(p, w, tick_hours);
        step.drones.push(DroneRecord {
            drone: p.id.clone(),
            worked: w,
            duty_ticks: p.duty_ticks,
            power_state: p.power_state,
        });
    }
    for v in &mut c.virtuals {
        v.unbind();
    }
    c.binding.clear();
    c.refresh_virtuals();
    step.starvation = starved_leaves
        .into_iter()
        .map(|leaf| StarvationEvent {
            phase,
            compartment: c.id,
            leaf,
        })
        .collect();
    accesses.append(&mut step.accesses);
    step.accesses = accesses;
    step
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub plan: Plan,
    pub trace: PhaseTrace,
    pub stall: Option<StallDiagnostic>,
    pub access_log: AccessLog,
    pub starvation: Vec<StarvationEvent>,
    /// Payload ledger after each E* phase.
    pub final_compartments: Vec<CompartmentState>,
    pub final_inventory: BTreeMap<SiteId, u64>,
}

impl RunOutput {
    pub fn complete(&self) -> bool {
        self.final_compartments.iter().all(|c| c.remaining() == 0)
    }
}

pub struct Simulation {
    pub plan: Plan,
    pub compartments: Vec<CompartmentState>,
    pub logistics: LogisticsState,
    pub relations: Vec<IntersectionRelation>,
    pub board: StigmergyBoard,
    pub strategy: CStrategy,
    pub scheme: MultiplexScheme,
    pub options: SimOptions,
    pub records: Vec<PhaseRecord>,
    pub access_log: AccessLog,
    pub starvation: Vec<StarvationEvent>,
    tick_hours: f64,
    overhead_ticks: u32,
    stall_limit: u32,
    seed: u64,
    reach: Reach,
    estar_count: u32,
    cstar_count: u32,
    idle_streak: u32,
    initial_payload: u64,
    last_was_c: bool,
}

impl Simulation {
    pub fn new(scenario: &Scenario, options: SimOptions) -> Result<Self, SimError> {
        let plan = plan(scenario)?;
        let mut compartments: Vec<CompartmentState> = plan
            .compartments
            .compartments
            .iter()
            .map(|c| CompartmentState {
                id: c.id,
                leaves: plan
                    .leaf_work
                    .iter()
                    .filter(|(_, lw)| lw.compartment == c.id)
                    .map(|(g, lw)| (*g, lw.clone()))
                    .collect(),
                virtuals: plan
                    .virtuals
                    .iter()
                    .filter(|v| v.compartment_id == c.id)
                    .cloned()
                    .collect(),
                physicals: plan
                    .physical
                    .iter()
                    .filter(|p| p.home_compartment == Some(c.id))
                    .cloned()
                    .collect(),
                store: plan.initial_stores.get(&c.id).copied().unwrap_or(0),
                consumed: 0,
                grants: Vec::new(),
                binding: Vec::new(),
            })
            .collect();
        for c in &mut compartments {
            c.refresh_virtuals();
        }
        let logistics = LogisticsState::new(
            plan.lattice.clone(),
            plan.site_inventory.clone(),
            plan.orders.clone(),
            &plan.physical,
            scenario.policies.ferry_capacity,
        );
        let reach = Reach {
            anchors: plan
                .sites
                .iter()
                .map(|s| (s.id.clone(), s.position_ft.unwrap_or(0.0)))
                .collect(),
        };
        Ok(Self {
            relations: plan.relations.clone(),
            initial_payload: plan.initial_payload(),
            compartments,
            logistics,
            board: StigmergyBoard::new(scenario.policies.stigmergy_ttl),
            strategy: scenario.policies.coordination,
            scheme: scenario.policies.multiplex,
            options,
            records: Vec::new(),
            access_log: AccessLog::default(),
            starvation: Vec::new(),
            tick_hours: scenario.budgets.tick_hours,
            overhead_ticks: scenario.budgets.c_phase_overhead_ticks,
            stall_limit: scenario.budgets.stall_limit,
            seed: scenario.seed,
            reach,
            estar_count: 0,
            cstar_count: 0,
            idle_streak: 0,
            last_was_c: false,
            plan,
        })
    }

    pub fn clock_hours(&self) -> f64 {
        (self.estar_count as f64 + self.cstar_count as f64 * self.overhead_ticks as f64) * self.tick_hours
    }

    pub fn remaining(&self) -> u64 {
        self.compartments.iter().map(CompartmentState::remaining).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.compartments
            .iter()
            .all(|c| c.virtuals.iter().all(|v| v.remaining_work == 0))
    }

    pub fn is_stalled(&self) -> bool {
        self.idle_streak >= self.stall_limit
    }

    pub fn payload_ledger(&self) -> PayloadLedger {
        PayloadLedger {
            sites: self.logistics.site_total(),
            stores: self.compartments.iter().map(|c| c.store).sum(),
            in_transit: self.logistics.in_transit(),
            consumed: self.compartments.iter().map(|c| c.consumed).sum(),
            initial: self.initial_payload,
        }
    }

    fn requests(&self, phase: u32) -> Vec<ResourceRequest> {
        let mut out = Vec::new();
        for c in &self.compartments {
            let wanted: BTreeSet<&ResourceId> = c
                .leaves
                .values()
                .filter_map(|lw| lw.chunks.front())
                .filter_map(|h| h.resource.as_ref())
                .collect();
            for r in wanted {
                let priority = self
                    .relations
                    .iter()
                    .find(|rel| rel.shared_resources.contains(r))
                    .and_then(|rel| self.board.read(&format!("{}.{}.remaining", rel.id, c.id), phase))
                    .and_then(|v| match v {
                        BoardValue::Numeric(n) => Some(*n as u64),
                        BoardValue::Symbolic(_) => None,
                    })
                    .unwrap_or_else(|| c.remaining());
                out.push(ResourceRequest {
                    compartment_id: c.id,
                    resource_id: r.clone(),
                    remaining_work: priority,
                    phase_index: phase,
                });
            }
        }
        out
    }

    /// Post to the board, arbitrate, bind, and record the C* phase.
    pub fn step_c_phase(&mut self) -> Result<(), SimError> {
        if self.last_was_c {
            return Err(SimError::PhaseOrder("C* phase must follow an E* phase or the start"));
        }
        let q = self.cstar_count;
        let mut messages = Vec::new();
        for rel in &self.relations {
            for k in &rel.members {
                let c = &self.compartments[k.index()];
                messages.push((
                    format!("{}.{}.remaining", rel.id, k),
                    BoardValue::Numeric(c.remaining() as i64),
                ));
                for lw in c.leaves.values() {
                    if let Some(r) = lw.chunks.front().and_then(|h| h.resource.as_ref()) {
                        if rel.shared_resources.contains(r) {
                            messages.push((format!("{}.{}.wants", rel.id, k), BoardValue::Symbolic(r.to_string())));
                        }
                    }
                }
            }
        }
        let board = std::mem::take(&mut self.board);
        let (board, digest) = post_and_aggregate(board, messages, q);
        self.board = board;

        let requests = self.requests(q);
        let (grants, orders) = match self.strategy {
            CStrategy::Broker => broker_resolve(&requests),
            CStrategy::LeaderElection => leader_resolve(&self.relations, &requests, q)?,
        };
        let grants: Vec<Grant> = grants.into_iter().map(|g| Grant { phase_index: q, ..g }).collect();

        let e = self.estar_count;
        let tick = self.tick_hours;
        let scheme = self.scheme;
        let reach = &self.reach;
        for c in &mut self.compartments {
            c.grants = grants.iter().filter(|g| g.grantee == c.id).cloned().collect();
            c.refresh_virtuals();
            let eligible = |v: &VirtualDrone, p: &PhysicalDrone| reach.eligible(v, p);
            let runnable = compute_runnable(&c.virtuals, &c.grants, &c.physicals, tick, eligible);
            let available: Vec<PhysicalDrone> = c
                .physicals
                .iter()
                .filter(|p| p.can_work_next_tick(tick))
                .cloned()
                .collect();
            let binding = bind_phase(e, &runnable, &available, scheme, eligible);
            for (pid, vid) in &binding.pairs {
                let p = c
                    .physicals
                    .iter()
                    .find(|p| &p.id == pid)
                    .expect("physical in compartment");
                let v = c
                    .virtuals
                    .iter_mut()
                    .find(|v| &v.id == vid)
                    .expect("virtual in compartment");
                v.bind(p, tick);
            }
            c.binding = binding.pairs;
        }

        self.cstar_count += 1;
        self.last_was_c = true;
        self.records.push(PhaseRecord::CStar {
            index: self.records.len() as u32,
            phase: q,
            requests,
            grants,
            orders,
            digest,
            clock_hours: self.clock_hours(),
        });
        Ok(())
    }

    /// Work every compartment in isolation, then tick logistics.
    pub fn step_e_phase(&mut self) -> Result<(), SimError> {
        if !self.last_was_c {
            return Err(SimError::PhaseOrder("E* phase must follow a C* phase"));
        }
        let e = self.estar_count;
        let tick = self.tick_hours;
        let log = self.options.access_log;
        let reach = &self.reach;
        let mut bindings: Vec<(DroneId, VirtualId)> = self
            .compartments
            .iter()
            .flat_map(|c| c.binding.iter().cloned())
            .collect();
        bindings.sort_by_key(|(_, v)| *v);

        let steps: Vec<CompartmentStep> = if self.options.parallel {
            self.compartments
                .par_iter_mut()
                .map(|c| work_compartment(c, e, tick, reach, log))
                .collect()
        } else {
            self.compartments
                .iter_mut()
                .map(|c| work_compartment(c, e, tick, reach, log))
                .collect()
        };

        let mut work_deltas = Vec::new();
        let mut drone_work = BTreeMap::new();
        let mut twins = Vec::new();
        let mut drones = Vec::new();
        let mut starvation = Vec::new();
        let mut total = 0;
        for (c, s) in self.compartments.iter().zip(steps) {
            work_deltas.push((c.id, s.work));
            total += s.work;
            drone_work.extend(s.drone_work);
            twins.extend(s.twins);
            drones.extend(s.drones);
            starvation.extend(s.starvation);
            self.access_log.entries.extend(s.accesses);
        }
        twins.sort_by_key(|t| t.virtual_id);
        drones.sort_by(|a, b| a.drone.cmp(&b.drone));

        let lt = self.logistics.tick();
        for (k, units) in &lt.deliveries {
            self.compartments[k.index()].store += units;
        }
        if total == 0 && lt.moved.is_empty() {
            self.idle_streak += 1;
        } else {
            self.idle_streak = 0;
        }
        self.starvation.extend(starvation.iter().cloned());

        self.estar_count += 1;
        self.last_was_c = false;
        self.records.push(PhaseRecord::EStar {
            index: self.records.len() as u32,
            phase: e,
            bindings,
            work_deltas,
            drone_work,
            remaining: self.remaining(),
            twins,
            drones,
            transfers: lt.transfers,
            starvation,
            payload: self.payload_ledger(),
            clock_hours: self.clock_hours(),
        });
        Ok(())
    }

    fn diagnose(&self) -> StallDiagnostic {
        let mut starved = Vec::new();
        for c in self.compartments.iter().filter(|c| c.remaining() > 0) {
            let mut blocking = BTreeSet::new();
            let mut reasons = BTreeSet::new();
            for lw in c.leaves.values() {
                let Some(head) = lw.chunks.front() else { continue };
                if let Some(r) = &head.resource {
                    if !c.holds(r) {
                        blocking.insert(r.clone());
                        reasons.insert(format!("waiting for grant on {r}"));
                    }
                }
                if head.consumes_payload && c.store == 0 {
                    reasons.insert("payload store empty".to_owned());
                }
                let probe = VirtualDrone {
                    required_capability: head.capability,
                    work_span_ft: head.span_ft,
                    ..c.virtuals
                        .first()
                        .cloned()
                        .unwrap_or_else(|| placeholder(c.id, lw.leaf))
                };
                let capable: Vec<&PhysicalDrone> = c
                    .physicals
                    .iter()
                    .filter(|p| capability_match(&probe, p) && self.reach.covers(p, head.span_ft))
                    .collect();
                if capable.is_empty() {
                    reasons.insert(format!(
                        "no field drone with {:?} can reach {}",
                        head.capability, head.segment
                    ));
                } else if capable.iter().all(|p| p.is_recharging()) {
                    reasons.insert("all capable drones recharging".to_owned());
                }
            }
            starved.push(StarvedCompartment {
                compartment: c.id,
                remaining: c.remaining(),
                blocking_resources: blocking.into_iter().collect(),
                reasons: reasons.into_iter().collect(),
            });
        }
        StallDiagnostic {
            idle_estar_phases: self.idle_streak,
            starved,
        }
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        self.step_c_phase()?;
        let mut stall = None;
        if !self.is_complete() {
            loop {
                self.step_e_phase()?;
                if self.is_complete() {
                    break;
                }
                if self.is_stalled() {
                    stall = Some(self.diagnose());
                    break;
                }
                self.step_c_phase()?;
            }
        }
        Ok(RunOutput {
            trace: PhaseTrace {
                records: self.records,
                seed: self.seed,
                scenario_digest: self.plan.scenario_digest.clone(),
            },
            plan: self.plan,
            stall,
            access_log: self.access_log,
            starvation: self.starvation,
            final_inventory: self.logistics.inventory.clone(),
            final_compartments: self.compartments,
        })
    }
}

fn placeholder(compartment: CompartmentId, leaf: GoalId) -> VirtualDrone {
    VirtualDrone {
        id: VirtualId(0),
        compartment_id: compartment,
        leaf_goal_id: leaf,
        goal_level: 5,
        required_capability: crate::fleet::Capability::StructureAssembly,
        required_resources: BTreeSet::new(),
        remaining_work: 0,
        work_span_ft: (0.0, 0.0),
        bound_physical: None,
        twin_state: None,
    }
}

/// Plan and simulate a scenario to completion or stall.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Simulation::new(scenario, SimOptions::default())?.run()
}

pub fn run_with(scenario: &Scenario, options: SimOptions) -> Result<RunOutput, SimError> {
    Simulation::new(scenario, options)?.run()
}
