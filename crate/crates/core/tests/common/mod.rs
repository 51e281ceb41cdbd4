#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use landwork_core::fleet::{Capability, DroneRole, Location, PowerConfig};
use landwork_core::ids::{DroneId, SegmentId, SiteId};
use landwork_core::scenario::{
    Budgets, CompartmentPolicy, DroneSpec, LandscapeStructure, Policies, Scenario, Segment, Site, SiteKind,
};
use rand::Rng;

pub const CAP: Capability = Capability::StructureAssembly;

pub fn segment(id: u32, len: f64, work: u64) -> Segment {
    Segment {
        id: SegmentId(id),
        start_ft: id as f64 * len,
        length_ft: len,
        height_ft: 300.0,
        width_ft: 400.0,
        work_required: if work > 0 {
            BTreeMap::from([(CAP, work)])
        } else {
            BTreeMap::new()
        },
        payload_required: 0,
        interface_work: 0,
    }
}

pub fn site(id: &str, kind: SiteKind, inventory: u64, pos: f64) -> Site {
    Site {
        id: SiteId::new(id),
        kind,
        inventory,
        position_ft: Some(pos),
    }
}

/// HQ, one supply, one staging; field ops sites are derived per compartment.
pub fn basic_sites(hq_inventory: u64) -> Vec<Site> {
    vec![
        site("hq", SiteKind::CentralHq, hq_inventory, 0.0),
        site("sup", SiteKind::SupplyStation, 0, 0.0),
        site("stg", SiteKind::FieldStagingArea, 0, 0.0),
    ]
}

pub fn field(id: &str, rate: u64, seg: u32, power: PowerConfig) -> DroneSpec {
    DroneSpec {
        id: DroneId::new(id),
        role: DroneRole::FieldOperation,
        capabilities: BTreeSet::from([CAP]),
        work_rate: rate,
        power,
        location: Some(Location::Segment(SegmentId(seg))),
    }
}

pub fn ferry(id: &str) -> DroneSpec {
    DroneSpec {
        id: DroneId::new(id),
        role: DroneRole::FerryTaxi,
        capabilities: BTreeSet::from([Capability::PackageDelivery]),
        work_rate: 1,
        power: PowerConfig::default(),
        location: Some(Location::Site(SiteId::new("hq"))),
    }
}

/// Power that never runs out and is never touched by the tether planner.
pub fn big_battery() -> PowerConfig {
    PowerConfig::Battery {
        capacity_hours: 1.0e6,
        recharge_ticks: 1,
    }
}

pub fn scenario(segments: Vec<Segment>, compartments: u32, fleet: Vec<DroneSpec>) -> Scenario {
    Scenario {
        structure: LandscapeStructure { segments },
        sites: basic_sites(0),
        fleet,
        policies: Policies {
            compartments: CompartmentPolicy::FixedCount(compartments),
            ..Policies::default()
        },
        budgets: Budgets::default(),
        seed: 0,
    }
}

/// A decoupled scenario: one segment per compartment, no interface work, no
/// payload, `drones[k]` dedicated drones of the given rate in compartment k.
pub struct Decoupled {
    pub work: Vec<u64>,
    pub drones: Vec<u32>,
    pub rate: u64,
}

impl Decoupled {
    pub fn random(rng: &mut impl Rng) -> Self {
        let k = rng.random_range(1..=8usize);
        Self {
            work: (0..k).map(|_| rng.random_range(0..=10_000u64)).collect(),
            drones: (0..k).map(|_| rng.random_range(1..=4u32)).collect(),
            rate: rng.random_range(1..=200u64),
        }
    }

    pub fn scenario(&self) -> Scenario {
        let segments = self
            .work
            .iter()
            .enumerate()
            .map(|(i, &w)| segment(i as u32, 600.0, w))
            .collect();
        let mut fleet = Vec::new();
        for (k, &n) in self.drones.iter().enumerate() {
            for j in 0..n {
                fleet.push(field(&format!("d{k:02}-{j}"), self.rate, k as u32, big_battery()));
            }
        }
        let mut s = scenario(segments, self.work.len() as u32, fleet);
        s.policies.tether_rule = false;
        s.budgets.budget_max_hours = 1.0e6;
        s
    }

    /// Closed form: max over compartments of ceil(W_k / (P_k * rate)).
    pub fn oracle_estar(&self) -> u64 {
        self.work
            .iter()
            .zip(&self.drones)
            .map(|(&w, &p)| w.div_ceil(p as u64 * self.rate))
            .max()
            .unwrap_or(0)
    }
}

/// Two single-segment compartments whose work is entirely interface work
/// on the shared boundary.
pub fn contention(work_each: u64, rate: u64) -> Scenario {
    let mut segs = vec![segment(0, 500.0, work_each), segment(1, 500.0, work_each)];
    for s in &mut segs {
        s.interface_work = work_each;
    }
    let fleet = vec![field("a", rate, 0, big_battery()), field("b", rate, 1, big_battery())];
    let mut s = scenario(segs, 2, fleet);
    s.policies.tether_rule = false;
    s
}

/// A random small scenario exercising interface work, payload and ferries.
pub fn random_coupled(rng: &mut impl Rng) -> Scenario {
    let n = rng.random_range(1..=6u32);
    let k = rng.random_range(1..=n);
    let mut segs = Vec::new();
    for i in 0..n {
        let w = rng.random_range(0..=60u64);
        let mut s = segment(i, 300.0, w);
        s.interface_work = rng.random_range(0..=w.min(10));
        s.payload_required = rng.random_range(0..=w.min(15));
        segs.push(s);
    }
    let mut fleet = Vec::new();
    for i in 0..n {
        for j in 0..rng.random_range(1..=2u32) {
            let power = if rng.random_bool(0.5) {
                big_battery()
            } else {
                PowerConfig::Battery {
                    capacity_hours: 0.3,
                    recharge_ticks: rng.random_range(0..=3),
                }
            };
            fleet.push(field(&format!("f{i}-{j}"), rng.random_range(1..=20), i, power));
        }
    }
    for j in 0..rng.random_range(1..=3) {
        fleet.push(ferry(&format!("ferry{j}")));
    }
    let mut s = scenario(segs, k, fleet);
    s.sites = basic_sites(rng.random_range(0..=400));
    s.policies.ferry_capacity = rng.random_range(1..=20);
    s.policies.tether_rule = rng.random_bool(0.5);
    s.policies.coordination = if rng.random_bool(0.5) {
        landwork_core::coordination::CStrategy::Broker
    } else {
        landwork_core::coordination::CStrategy::LeaderElection
    };
    s.budgets.stall_limit = 20;
    s
}
