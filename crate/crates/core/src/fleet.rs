//! Physical drones, their power model, and the virtual drones that
//! time-share them.
//!
//! A physical drone has exactly one role and a set of capabilities. Field
//! work can only be done by `FieldOperation` drones; everything else is
//! support staff (ferries move payload, the rest are carried for cost and
//! reporting). Battery drones accumulate a duty clock while working and are
//! pulled off the line for a fixed number of ticks once another tick of work
//! would exceed their capacity. Tethered drones never run out.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ids::{CompartmentId, DroneId, GoalId, ResourceId, SegmentId, SiteId, VirtualId};

/// Continuous-duty threshold above which a drone is planned as tethered.
pub const TETHER_THRESHOLD_HOURS: f64 = 1.0;
pub const DEFAULT_TETHER_REACH_FT: f64 = 1000.0;
pub const DEFAULT_MAX_TETHERED_PER_ANCHOR: u32 = 4;

pub(crate) const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroneRole {
    SupplyStation,
    CentralCommand,
    FieldStaging,
    FieldOperation,
    FerryTaxi,
    Telepresence,
    Misc,
}

impl DroneRole {
    pub fn name(self) -> &'static str {
        match self {
            DroneRole::SupplyStation => "supply_station",
            DroneRole::CentralCommand => "central_command",
            DroneRole::FieldStaging => "field_staging",
            DroneRole::FieldOperation => "field_operation",
            DroneRole::FerryTaxi => "ferry_taxi",
            DroneRole::Telepresence => "telepresence",
            DroneRole::Misc => "misc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Photography,
    Imaging,
    Telemetry,
    CloseInspection,
    InspectionReporting,
    Survey,
    SweepScanSearch,
    PayloadHandling,
    ToolHandling,
    StructureAssembly,
    VerticalMove,
    LateralMove,
    SweepTraversal,
    PackageDelivery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PowerConfig {
    Tethered {
        anchor_site: SiteId,
        #[serde(default = "default_reach")]
        reach_ft: f64,
    },
    Battery {
        capacity_hours: f64,
        #[serde(default)]
        recharge_ticks: u32,
    },
}

fn default_reach() -> f64 {
    DEFAULT_TETHER_REACH_FT
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig::Battery {
            capacity_hours: 1.0,
            recharge_ticks: 1,
        }
    }
}

impl PowerConfig {
    pub fn is_tethered(&self) -> bool {
        matches!(self, PowerConfig::Tethered { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Location {
    Site(SiteId),
    Segment(SegmentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    #[default]
    Ready,
    Recharging {
        ticks_left: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalDrone {
    pub id: DroneId,
    pub role: DroneRole,
    pub capabilities: BTreeSet<Capability>,
    pub work_rate: u64,
    pub power: PowerConfig,
    pub location: Option<Location>,
    /// Compartment a field drone is confined to.
    pub home_compartment: Option<CompartmentId>,
    /// Ticks worked since the last recharge.
    pub duty_ticks: u32,
    pub power_state: PowerState,
}

impl PhysicalDrone {
    pub fn duty_clock_hours(&self, tick_hours: f64) -> f64 {
        self.duty_ticks as f64 * tick_hours
    }

    pub fn is_recharging(&self) -> bool {
        matches!(self.power_state, PowerState::Recharging { .. })
    }

    /// Can this drone take one more tick of work without exceeding its
    /// battery?
    pub fn can_work_next_tick(&self, tick_hours: f64) -> bool {
        match &self.power {
            PowerConfig::Tethered { .. } => true,
            PowerConfig::Battery { capacity_hours, .. } => {
                !self.is_recharging() && (self.duty_ticks + 1) as f64 * tick_hours <= capacity_hours + EPS
            }
        }
    }

    pub fn is_ferry(&self) -> bool {
        self.role == DroneRole::FerryTaxi
            && (self.capabilities.contains(&Capability::PackageDelivery)
                || self.capabilities.contains(&Capability::PayloadHandling))
    }
}

/// Observable fields of a physical drone copied into its virtual twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub location: Option<Location>,
    pub duty_clock_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualDrone {
    pub id: VirtualId,
    pub compartment_id: CompartmentId,
    pub leaf_goal_id: GoalId,
    /// Level ordinal of the leaf (0 = Goal ... 5 = Action).
    pub goal_level: u8,
    /// Capability needed by the next unit of work on the leaf.
    pub required_capability: Capability,
    /// Shared resources the next unit of work needs a grant for.
    pub required_resources: BTreeSet<ResourceId>,
    /// Remaining work on the leaf this drone serves.
    pub remaining_work: u64,
    /// Axis span of the segment holding the next unit of work.
    pub work_span_ft: (f64, f64),
    pub bound_physical: Option<DroneId>,
    pub twin_state: Option<TwinState>,
}

impl VirtualDrone {
    pub fn bind(&mut self, physical: &PhysicalDrone, tick_hours: f64) {
        self.bound_physical = Some(physical.id.clone());
        self.twin_state = Some(TwinState {
            location: physical.location.clone(),
            duty_clock_hours: physical.duty_clock_hours(tick_hours),
        });
    }

    pub fn unbind(&mut self) {
        self.bound_physical = None;
    }
}

/// Decide a drone's power source from its planned continuous duty.
///
/// Anything strictly above one hour is tethered to `anchor_site`; otherwise
/// the drone keeps the power block it was declared with.
pub fn apply_tether_rule(
    drone: &PhysicalDrone,
    planned_continuous_hours: f64,
    anchor_site: &SiteId,
    reach_ft: f64,
) -> PowerConfig {
    if planned_continuous_hours > TETHER_THRESHOLD_HOURS + EPS {
        PowerConfig::Tethered {
            anchor_site: anchor_site.clone(),
            reach_ft,
        }
    } else {
        drone.power.clone()
    }
}

/// Advance one tick of the power model.
pub fn advance_power_state(drone: &PhysicalDrone, worked_this_tick: bool, tick_hours: f64) -> PhysicalDrone {
    let mut next = drone.clone();
    let PowerConfig::Battery { recharge_ticks, .. } = drone.power else {
        next.power_state = PowerState::Ready;
        return next;
    };
    match drone.power_state {
        PowerState::Recharging { ticks_left } => {
            if ticks_left <= 1 {
                next.power_state = PowerState::Ready;
                next.duty_ticks = 0;
            } else {
                next.power_state = PowerState::Recharging {
                    ticks_left: ticks_left - 1,
                };
            }
        }
        PowerState::Ready => {
            if worked_this_tick {
                next.duty_ticks += 1;
            }
            if !next.can_work_next_tick(tick_hours) {
                // A swap always costs at least one tick off the line.
                next.power_state = PowerState::Recharging {
                    ticks_left: recharge_ticks.max(1),
                };
            }
        }
    }
    next
}

pub fn capability_match(virtual_drone: &VirtualDrone, physical: &PhysicalDrone) -> bool {
    physical.role == DroneRole::FieldOperation && physical.capabilities.contains(&virtual_drone.required_capability)
}
