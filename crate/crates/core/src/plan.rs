//! The planning pipeline: compartments, sites, homing, tethering, goal
//! trees, leaf work, the virtual fleet and the logistics orders. Everything
//! the kernel needs before the first phase.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::compartment::{compartmentalize, derive_intersections, CompartmentPlan, IntersectionRelation};
use crate::error::PlanError;
use crate::fleet::{apply_tether_rule, DroneRole, Location, PhysicalDrone, PowerConfig, PowerState, VirtualDrone};
use crate::goal::{
    build_goal_trees, compartment_tape, equal_split, expand_virtual_fleet, slice_leaf_work, FanoutTemplate, GoalIdGen,
    GoalTree, IlityAttribute, LeafWork, SubgroupAssignment,
};
use crate::ids::{CompartmentId, DroneId, GoalId, SiteId};
use crate::logistics::{build_lattice, create_orders, LogisticsOrder, WorkflowLattice};
use crate::scenario::{ScaleWarning, Scenario, Site, SiteKind};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the scenario content. The seed is carried separately and is
/// left out so that reseeding does not change the digest.
pub fn scenario_digest(scenario: &Scenario) -> String {
    let unseeded = Scenario {
        seed: 0,
        ..scenario.clone()
    };
    sha256_hex(unseeded.to_json().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TetherDecision {
    pub drone: DroneId,
    pub compartment: CompartmentId,
    pub planned_hours: f64,
    pub tethered: bool,
    pub anchor: Option<SiteId>,
    /// Set when the rule asked for a tether but the anchor was full.
    pub anchor_full: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Plan {
    pub scenario_digest: String,
    pub compartments: CompartmentPlan,
    pub relations: Vec<IntersectionRelation>,
    pub sites: Vec<Site>,
    pub goal_trees: Vec<GoalTree>,
    pub subgroups: SubgroupAssignment,
    pub leaf_work: BTreeMap<GoalId, LeafWork>,
    pub physical: Vec<PhysicalDrone>,
    pub virtuals: Vec<VirtualDrone>,
    pub tether: Vec<TetherDecision>,
    /// Payload each compartment starts with at its field ops site.
    pub initial_stores: BTreeMap<CompartmentId, u64>,
    /// Payload held at sites outside any compartment store.
    pub site_inventory: BTreeMap<SiteId, u64>,
    pub demand: BTreeMap<CompartmentId, u64>,
    pub orders: Vec<LogisticsOrder>,
    pub warnings: Vec<ScaleWarning>,
    #[serde(skip)]
    pub lattice: WorkflowLattice,
}

impl Plan {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("plan serializes").as_bytes())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn initial_payload(&self) -> u64 {
        self.initial_stores.values().sum::<u64>() + self.site_inventory.values().sum::<u64>()
    }

    pub fn anchor_position(&self, site: &SiteId) -> f64 {
        self.sites
            .iter()
            .find(|s| &s.id == site)
            .and_then(|s| s.position_ft)
            .unwrap_or(0.0)
    }
}

/// One field ops site per compartment at its midpoint, used when the
/// scenario declares none.
fn derived_fieldops(plan: &CompartmentPlan) -> Vec<Site> {
    plan.compartments
        .iter()
        .map(|c| Site {
            id: SiteId::new(format!("fieldops-{}", c.id)),
            kind: SiteKind::FieldOps,
            inventory: 0,
            position_ft: Some(c.midpoint_ft()),
        })
        .collect()
}

fn nearest(sites: &[Site], kind: SiteKind, at: f64) -> Option<&Site> {
    sites.iter().filter(|s| s.kind == kind).fold(None::<&Site>, |best, s| {
        let d = |x: &Site| (x.position_ft.unwrap_or(0.0) - at).abs();
        match best {
            Some(b) if d(b) <= d(s) => Some(b),
            _ => Some(s),
        }
    })
}

fn home_of(spec_location: &Option<Location>, plan: &CompartmentPlan, next_rr: &mut usize) -> CompartmentId {
    let by_site = |site: &SiteId| {
        plan.compartments
            .iter()
            .find(|c| c.fieldops_site.as_ref() == Some(site) || c.staging_site.as_ref() == Some(site))
            .map(|c| c.id)
    };
    let located = match spec_location {
        Some(Location::Segment(s)) => plan.compartment_of(*s),
        Some(Location::Site(site)) => by_site(site),
        None => None,
    };
    located.unwrap_or_else(|| {
        let c = plan.compartments[*next_rr % plan.len()].id;
        *next_rr += 1;
        c
    })
}

pub fn plan(scenario: &Scenario) -> Result<Plan, PlanError> {
    let policies = &scenario.policies;
    let mut compartments = compartmentalize(&scenario.structure, policies.compartments)?;

    let mut sites = scenario.sites.clone();
    if !sites.iter().any(|s| s.kind == SiteKind::FieldOps) {
        sites.extend(derived_fieldops(&compartments));
    }
    let mut lattice = build_lattice(&sites)?;
    lattice.set_travel(policies.travel_ticks, &policies.travel_overrides);
    for c in &mut compartments.compartments {
        let fo = nearest(&sites, SiteKind::FieldOps, c.midpoint_ft()).expect("lattice has field ops");
        c.staging_site = lattice.parent(&fo.id).cloned();
        c.fieldops_site = Some(fo.id.clone());
    }
    let relations = derive_intersections(&compartments, &sites);

    // physical fleet with homes
    let mut rr = 0usize;
    let mut physical: Vec<PhysicalDrone> = scenario
        .fleet
        .iter()
        .map(|d| {
            let mut p = PhysicalDrone {
                id: d.id.clone(),
                role: d.role,
                capabilities: d.capabilities.clone(),
                work_rate: d.work_rate,
                power: d.power.clone(),
                location: d.location.clone(),
                home_compartment: None,
                duty_ticks: 0,
                power_state: PowerState::Ready,
            };
            if p.role == DroneRole::FieldOperation {
                let home = home_of(&d.location, &compartments, &mut rr);
                p.home_compartment = Some(home);
                if p.location.is_none() {
                    let fo = compartments.compartments[home.index()].fieldops_site.clone();
                    p.location = fo.map(Location::Site);
                }
            }
            p
        })
        .collect();
    physical.sort_by(|a, b| a.id.cmp(&b.id));

    let tether = if policies.tether_rule {
        plan_tethers(scenario, &compartments, &mut physical)
    } else {
        Vec::new()
    };

    if !policies.ilities.contains(&IlityAttribute::Functionality) {
        return Err(PlanError::MissingFunctionality);
    }
    let fanout = FanoutTemplate::from_slice(&policies.fanout)?;
    let mut ids = GoalIdGen::default();
    let mut goal_trees = Vec::new();
    let mut leaf_work = BTreeMap::new();
    for c in &compartments.compartments {
        let trees = build_goal_trees(c, &policies.ilities, fanout, &mut ids)?;
        let func = trees
            .iter()
            .find(|t| t.ility == IlityAttribute::Functionality)
            .expect("functionality checked above");
        let tape = compartment_tape(&scenario.structure, &compartments, c);
        for lw in slice_leaf_work(tape, func) {
            leaf_work.insert(lw.leaf, lw);
        }
        goal_trees.extend(trees);
    }
    let (virtuals, subgroups) = expand_virtual_fleet(
        &compartments,
        &goal_trees,
        &leaf_work,
        &physical,
        policies.virtual_per_compartment,
    )?;

    // payload: field ops stock is split between the compartments it serves
    let mut initial_stores: BTreeMap<CompartmentId, u64> =
        compartments.compartments.iter().map(|c| (c.id, 0)).collect();
    let mut site_inventory = BTreeMap::new();
    for s in &sites {
        let served: Vec<CompartmentId> = compartments
            .compartments
            .iter()
            .filter(|c| s.kind == SiteKind::FieldOps && c.fieldops_site.as_ref() == Some(&s.id))
            .map(|c| c.id)
            .collect();
        if served.is_empty() {
            site_inventory.insert(s.id.clone(), s.inventory);
        } else {
            site_inventory.insert(s.id.clone(), 0);
            for (c, share) in served.iter().zip(equal_split(s.inventory, served.len())) {
                *initial_stores.get_mut(c).expect("compartment store") += share;
            }
        }
    }
    let demand: BTreeMap<CompartmentId, u64> = compartments
        .compartments
        .iter()
        .map(|c| {
            let need: u64 = c
                .segment_range
                .iter()
                .map(|s| scenario.structure.segments[s.index()].payload_required)
                .sum();
            (c.id, need.saturating_sub(initial_stores[&c.id]))
        })
        .collect();
    let fieldops: BTreeMap<CompartmentId, SiteId> = compartments
        .compartments
        .iter()
        .filter_map(|c| c.fieldops_site.clone().map(|s| (c.id, s)))
        .collect();
    let orders = create_orders(&lattice, &fieldops, &demand);

    Ok(Plan {
        scenario_digest: scenario_digest(scenario),
        compartments,
        relations,
        sites,
        goal_trees,
        subgroups,
        leaf_work,
        physical,
        virtuals,
        tether,
        initial_stores,
        site_inventory,
        demand,
        orders,
        warnings: scenario.warnings(),
        lattice,
    })
}

/// Planned continuous duty of a compartment's field drones is the time its
/// dedicated fleet needs to finish the compartment's work:
/// `ceil(W / sum of rates) * tick_hours`. Drones over the threshold are
/// tethered to the compartment's field ops site, at most
/// `max_tethered_per_anchor` per anchor in drone id order.
fn plan_tethers(scenario: &Scenario, plan: &CompartmentPlan, physical: &mut [PhysicalDrone]) -> Vec<TetherDecision> {
    let policies = &scenario.policies;
    let tick = scenario.budgets.tick_hours;
    let mut per_anchor: BTreeMap<SiteId, u32> = BTreeMap::new();
    for p in physical.iter() {
        if let PowerConfig::Tethered { anchor_site, .. } = &p.power {
            *per_anchor.entry(anchor_site.clone()).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for c in &plan.compartments {
        let Some(anchor) = c.fieldops_site.clone() else {
            continue;
        };
        let members: Vec<usize> = (0..physical.len())
            .filter(|&i| physical[i].role == DroneRole::FieldOperation && physical[i].home_compartment == Some(c.id))
            .collect();
        let rate: u64 = members.iter().map(|&i| physical[i].work_rate).sum();
        if rate == 0 {
            continue;
        }
        let hours = c.total_work.div_ceil(rate) as f64 * tick;
        for i in members {
            let p = &physical[i];
            if p.power.is_tethered() {
                continue;
            }
            let wanted = apply_tether_rule(p, hours, &anchor, policies.tether_reach_ft);
            let mut decision = TetherDecision {
                drone: p.id.clone(),
                compartment: c.id,
                planned_hours: hours,
                tethered: false,
                anchor: None,
                anchor_full: false,
            };
            if wanted.is_tethered() {
                let used = per_anchor.entry(anchor.clone()).or_default();
                if *used < policies.max_tethered_per_anchor {
                    *used += 1;
                    decision.tethered = true;
                    decision.anchor = Some(anchor.clone());
                    physical[i].power = wanted;
                } else {
                    decision.anchor_full = true;
                }
            }
            out.push(decision);
        }
    }
    out
}
