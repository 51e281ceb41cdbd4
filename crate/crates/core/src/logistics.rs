//! The site lattice (HQ -> supply -> staging -> field ops and back) and the
//! ferries that move payload along it.
//!
//! Payload lives in three places: site inventories, ferry holds, and the
//! per-compartment stores that field work draws from. Deliveries to a field
//! ops site are handed back to the caller as compartment credits so the
//! kernel can apply them without logistics ever touching compartment state.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::{astar, has_path_connecting};
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::fleet::PhysicalDrone;
use crate::ids::{CompartmentId, DroneId, OrderId, SiteId};
use crate::scenario::{Site, SiteKind, TravelOverride};

#[derive(Debug, Clone)]
pub struct WorkflowLattice {
    pub graph: DiGraph<SiteId, u32>,
    index: BTreeMap<SiteId, NodeIndex>,
    kinds: BTreeMap<SiteId, SiteKind>,
    parent: BTreeMap<SiteId, SiteId>,
    hq: SiteId,
}

impl WorkflowLattice {
    pub fn rank(&self, site: &SiteId) -> Option<u8> {
        self.kinds.get(site).map(|k| k.rank())
    }

    pub fn kind(&self, site: &SiteId) -> Option<SiteKind> {
        self.kinds.get(site).copied()
    }

    pub fn hq(&self) -> &SiteId {
        &self.hq
    }

    /// The rank-(r-1) node a rank-r node hangs off.
    pub fn parent(&self, site: &SiteId) -> Option<&SiteId> {
        self.parent.get(site)
    }

    /// Forward chain from HQ down to `site`, inclusive.
    pub fn chain_to(&self, site: &SiteId) -> Vec<SiteId> {
        let mut chain = vec![site.clone()];
        let mut cur = site;
        while let Some(p) = self.parent.get(cur) {
            chain.push(p.clone());
            cur = p;
        }
        chain.reverse();
        chain
    }

    pub fn forward_edges(&self) -> Vec<(SiteId, SiteId)> {
        self.edges(|a, b| a < b)
    }

    pub fn reverse_edges(&self) -> Vec<(SiteId, SiteId)> {
        self.edges(|a, b| a > b)
    }

    fn edges(&self, keep: impl Fn(u8, u8) -> bool) -> Vec<(SiteId, SiteId)> {
        let mut out: Vec<(SiteId, SiteId)> = self
            .graph
            .edge_references()
            .map(|e| (self.graph[e.source()].clone(), self.graph[e.target()].clone()))
            .filter(|(a, b)| keep(self.kinds[a].rank(), self.kinds[b].rank()))
            .collect();
        out.sort();
        out
    }

    pub fn sites_of_kind(&self, kind: SiteKind) -> Vec<SiteId> {
        self.kinds
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Set per-leg travel ticks: `default` everywhere, then overrides (which
    /// apply in both directions).
    pub fn set_travel(&mut self, default: u32, overrides: &[TravelOverride]) {
        for w in self.graph.edge_weights_mut() {
            *w = default;
        }
        for o in overrides {
            let (Some(&a), Some(&b)) = (self.index.get(&o.from), self.index.get(&o.to)) else {
                continue;
            };
            for (x, y) in [(a, b), (b, a)] {
                if let Some(e) = self.graph.find_edge(x, y) {
                    self.graph[e] = o.ticks;
                }
            }
        }
    }

    pub fn leg_ticks(&self, from: &SiteId, to: &SiteId) -> Option<u32> {
        let e = self.graph.find_edge(self.index[from], self.index[to])?;
        Some(self.graph[e])
    }

    /// Cheapest route as a node list including both ends.
    pub fn route(&self, from: &SiteId, to: &SiteId) -> Option<Vec<SiteId>> {
        let (&a, &b) = (self.index.get(from)?, self.index.get(to)?);
        let (_, path) = astar(&self.graph, a, |n| n == b, |e| *e.weight(), |_| 0)?;
        Some(path.into_iter().map(|n| self.graph[n].clone()).collect())
    }
}

/// Link every rank-(r+1) site to its nearest rank-r site by axis position
/// (missing positions count as 0; ties go to the earlier site), add the
/// reverse edges, and check every field ops site is reachable from HQ.
pub fn build_lattice(sites: &[Site]) -> Result<WorkflowLattice, PlanError> {
    let hqs: Vec<&Site> = sites.iter().filter(|s| s.kind == SiteKind::CentralHq).collect();
    if hqs.len() != 1 {
        return Err(PlanError::CentralHqCount(hqs.len()));
    }
    for kind in [SiteKind::SupplyStation, SiteKind::FieldStagingArea, SiteKind::FieldOps] {
        if !sites.iter().any(|s| s.kind == kind) {
            return Err(PlanError::MissingSiteKind(kind.name()));
        }
    }

    let mut graph = DiGraph::new();
    let mut index = BTreeMap::new();
    let mut kinds = BTreeMap::new();
    for s in sites {
        index.insert(s.id.clone(), graph.add_node(s.id.clone()));
        kinds.insert(s.id.clone(), s.kind);
    }
    let pos = |s: &Site| s.position_ft.unwrap_or(0.0);
    let mut parent = BTreeMap::new();
    for child in sites.iter().filter(|s| s.kind.rank() > 0) {
        let best = sites
            .iter()
            .filter(|p| p.kind.rank() + 1 == child.kind.rank())
            .fold(None::<&Site>, |best, p| match best {
                Some(b) if (pos(b) - pos(child)).abs() <= (pos(p) - pos(child)).abs() => Some(b),
                _ => Some(p),
            })
            .expect("every lower rank is present");
        let (a, b) = (index[&best.id], index[&child.id]);
        graph.add_edge(a, b, 1);
        graph.add_edge(b, a, 1);
        parent.insert(child.id.clone(), best.id.clone());
    }

    let hq = hqs[0].id.clone();
    let lattice = WorkflowLattice {
        graph,
        index,
        kinds,
        parent,
        hq,
    };
    let root = lattice.index[&lattice.hq];
    for s in sites.iter().filter(|s| s.kind == SiteKind::FieldOps) {
        if !has_path_connecting(&lattice.graph, root, lattice.index[&s.id], None) {
            return Err(PlanError::Unreachable(s.id.to_string()));
        }
    }
    Ok(lattice)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum OrderState {
    Pending,
    InTransit { ferry: DroneId, remaining_legs: u32 },
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticsOrder {
    pub id: OrderId,
    /// Compartment whose demand the order serves.
    pub compartment: CompartmentId,
    pub origin: SiteId,
    pub destination: SiteId,
    pub quantity: u64,
    /// Units claimed by a ferry so far (loaded or reserved).
    pub dispatched: u64,
    pub delivered: u64,
    pub state: OrderState,
}

impl LogisticsOrder {
    pub fn outstanding(&self) -> u64 {
        self.quantity - self.dispatched
    }
}

/// One order chain per compartment with positive demand, one order per
/// forward leg from HQ down to the compartment's field ops site.
pub fn create_orders(
    lattice: &WorkflowLattice,
    fieldops: &BTreeMap<CompartmentId, SiteId>,
    demand: &BTreeMap<CompartmentId, u64>,
) -> Vec<LogisticsOrder> {
    let mut orders = Vec::new();
    for (&c, &qty) in demand.iter().filter(|(_, q)| **q > 0) {
        let Some(site) = fieldops.get(&c) else { continue };
        let chain = lattice.chain_to(site);
        for leg in chain.windows(2) {
            orders.push(LogisticsOrder {
                id: OrderId(orders.len() as u32),
                compartment: c,
                origin: leg[0].clone(),
                destination: leg[1].clone(),
                quantity: qty,
                dispatched: 0,
                delivered: 0,
                state: OrderState::Pending,
            });
        }
    }
    orders
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferAction {
    Load,
    Unload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub ferry: DroneId,
    pub order: OrderId,
    pub site: SiteId,
    pub units: u64,
    pub action: TransferAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ferry {
    pub id: DroneId,
    pub location: SiteId,
    pub cargo: u64,
    pub order: Option<OrderId>,
    /// Units reserved at the order's origin but not yet loaded.
    pub reserved: u64,
    /// Remaining route, next hop first.
    pub route: Vec<SiteId>,
    /// Ticks left on the leg to `route[0]`.
    pub leg_ticks_left: u32,
}

impl Ferry {
    pub fn is_idle(&self) -> bool {
        self.order.is_none()
    }
}

/// What one logistics tick did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogisticsTick {
    pub transfers: Vec<Transfer>,
    /// Ferries that moved along a leg.
    pub moved: Vec<DroneId>,
    /// Units delivered into compartment stores.
    pub deliveries: BTreeMap<CompartmentId, u64>,
    /// Orders with outstanding quantity and nothing available at the origin.
    pub starvation_risk: Vec<OrderId>,
}

#[derive(Debug, Clone)]
pub struct LogisticsState {
    pub lattice: WorkflowLattice,
    pub inventory: BTreeMap<SiteId, u64>,
    pub orders: Vec<LogisticsOrder>,
    pub ferries: Vec<Ferry>,
    pub capacity: u64,
    reserved: BTreeMap<SiteId, u64>,
}

impl LogisticsState {
    /// Ferries are the FerryTaxi drones able to carry payload. They start at
    /// their declared site or at HQ.
    pub fn new(
        lattice: WorkflowLattice,
        inventory: BTreeMap<SiteId, u64>,
        orders: Vec<LogisticsOrder>,
        drones: &[PhysicalDrone],
        capacity: u64,
    ) -> Self {
        let mut ferries: Vec<Ferry> = drones
            .iter()
            .filter(|d| d.is_ferry())
            .map(|d| {
                let location = match &d.location {
                    Some(crate::fleet::Location::Site(s)) if lattice.kind(s).is_some() => s.clone(),
                    _ => lattice.hq().clone(),
                };
                Ferry {
                    id: d.id.clone(),
                    location,
                    cargo: 0,
                    order: None,
                    reserved: 0,
                    route: Vec::new(),
                    leg_ticks_left: 0,
                }
            })
            .collect();
        ferries.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            lattice,
            inventory,
            orders,
            ferries,
            capacity,
            reserved: BTreeMap::new(),
        }
    }

    pub fn site_total(&self) -> u64 {
        self.inventory.values().sum()
    }

    pub fn in_transit(&self) -> u64 {
        self.ferries.iter().map(|f| f.cargo).sum()
    }

    fn available(&self, site: &SiteId) -> u64 {
        let have = self.inventory.get(site).copied().unwrap_or(0);
        have - self.reserved.get(site).copied().unwrap_or(0).min(have)
    }

    pub fn all_delivered(&self) -> bool {
        self.orders.iter().all(|o| o.state == OrderState::Delivered)
    }

    fn order_mut(&mut self, id: OrderId) -> &mut LogisticsOrder {
        &mut self.orders[id.index()]
    }

    fn claim(&mut self, fi: usize) {
        let pick = self
            .orders
            .iter()
            .filter(|o| o.outstanding() > 0)
            .find(|o| self.available(&o.origin) > 0)
            .map(|o| o.id);
        let Some(oid) = pick else { return };
        let origin = self.orders[oid.index()].origin.clone();
        let qty = self
            .capacity
            .min(self.orders[oid.index()].outstanding())
            .min(self.available(&origin));
        *self.reserved.entry(origin.clone()).or_default() += qty;
        self.order_mut(oid).dispatched += qty;
        let f = &mut self.ferries[fi];
        f.order = Some(oid);
        f.reserved = qty;
        let route = self.lattice.route(&f.location, &origin).expect("lattice is connected");
        self.set_route(fi, route);
    }

    fn set_route(&mut self, fi: usize, route: Vec<SiteId>) {
        let f = &self.ferries[fi];
        let hops: Vec<SiteId> = route.into_iter().skip(1).collect();
        let ticks = hops
            .first()
            .map_or(0, |next| self.lattice.leg_ticks(&f.location, next).unwrap_or(1));
        let f = &mut self.ferries[fi];
        f.route = hops;
        f.leg_ticks_left = ticks;
    }

    /// Load at the origin if the ferry is standing there with a reservation.
    fn try_load(&mut self, fi: usize, out: &mut LogisticsTick) {
        let f = &self.ferries[fi];
        let Some(oid) = f.order else { return };
        let order = &self.orders[oid.index()];
        if f.reserved == 0 || f.location != order.origin {
            return;
        }
        let (qty, origin, dest) = (f.reserved, order.origin.clone(), order.destination.clone());
        *self.inventory.get_mut(&origin).expect("origin inventory") -= qty;
        *self.reserved.get_mut(&origin).expect("reservation") -= qty;
        let f = &mut self.ferries[fi];
        f.reserved = 0;
        f.cargo = qty;
        out.transfers.push(Transfer {
            ferry: f.id.clone(),
            order: oid,
            site: origin,
            units: qty,
            action: TransferAction::Load,
        });
        let route = self
            .lattice
            .route(&self.ferries[fi].location, &dest)
            .expect("lattice is connected");
        self.set_route(fi, route);
    }

    fn try_unload(&mut self, fi: usize, out: &mut LogisticsTick) {
        let f = &self.ferries[fi];
        let Some(oid) = f.order else { return };
        if f.cargo == 0 || f.location != self.orders[oid.index()].destination {
            return;
        }
        let qty = f.cargo;
        let ferry = f.id.clone();
        let order = self.order_mut(oid);
        order.delivered += qty;
        let (dest, comp) = (order.destination.clone(), order.compartment);
        if order.delivered == order.quantity {
            order.state = OrderState::Delivered;
        }
        if self.lattice.kind(&dest) == Some(SiteKind::FieldOps) {
            *out.deliveries.entry(comp).or_default() += qty;
        } else {
            *self.inventory.entry(dest.clone()).or_default() += qty;
        }
        out.transfers.push(Transfer {
            ferry,
            order: oid,
            site: dest,
            units: qty,
            action: TransferAction::Unload,
        });
        let f = &mut self.ferries[fi];
        f.cargo = 0;
        f.order = None;
    }

    fn advance(&mut self, fi: usize, out: &mut LogisticsTick) {
        if self.ferries[fi].route.is_empty() {
            return;
        }
        out.moved.push(self.ferries[fi].id.clone());
        let f = &mut self.ferries[fi];
        f.leg_ticks_left = f.leg_ticks_left.saturating_sub(1);
        if f.leg_ticks_left > 0 {
            return;
        }
        f.location = f.route.remove(0);
        if let Some(next) = f.route.first().cloned() {
            let ticks = self.lattice.leg_ticks(&self.ferries[fi].location, &next).unwrap_or(1);
            self.ferries[fi].leg_ticks_left = ticks;
        }
    }

    fn refresh_states(&mut self) {
        for f in &self.ferries {
            if let Some(oid) = f.order {
                let legs = f.route.len() as u32;
                let o = &mut self.orders[oid.index()];
                if o.state != OrderState::Delivered {
                    o.state = OrderState::InTransit {
                        ferry: f.id.clone(),
                        remaining_legs: legs,
                    };
                }
            }
        }
    }

    /// One tick of FIFO greedy dispatch. Ferries act in id order: an idle
    /// ferry claims the oldest order it can serve, a ferry at its origin
    /// loads and sets off, a moving ferry covers one tick of its leg, and a
    /// ferry reaching the destination unloads.
    pub fn tick(&mut self) -> LogisticsTick {
        let mut out = LogisticsTick::default();
        for fi in 0..self.ferries.len() {
            if self.ferries[fi].is_idle() {
                self.claim(fi);
            }
            self.try_load(fi, &mut out);
            self.advance(fi, &mut out);
            self.try_load(fi, &mut out);
            self.try_unload(fi, &mut out);
        }
        self.refresh_states();
        let reserved_orders: BTreeSet<OrderId> = self.ferries.iter().filter_map(|f| f.order).collect();
        out.starvation_risk = self
            .orders
            .iter()
            .filter(|o| o.outstanding() > 0 && self.available(&o.origin) == 0 && !reserved_orders.contains(&o.id))
            .map(|o| o.id)
            .collect();
        out
    }
}

pub fn dispatch_ferries(state: &mut LogisticsState) -> LogisticsTick {
    state.tick()
}

/// Payload accounting snapshot. Balanced iff
/// `sites + stores + in_transit + consumed == initial`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PayloadLedger {
    pub sites: u64,
    pub stores: u64,
    pub in_transit: u64,
    pub consumed: u64,
    pub initial: u64,
}

impl PayloadLedger {
    pub fn balanced(&self) -> bool {
        self.sites + self.stores + self.in_transit + self.consumed == self.initial
    }
}
