//! Scenario model: the structure, its sites, the fleet, and run policies.
//!
//! Scenarios are stored as a single JSON document (see
//! `docs/scenario-schema.md`). Loading fills defaults and enforces the hard
//! invariants; scale ranges are reported as advisory warnings only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coordination::CStrategy;
use crate::error::ScenarioError;
use crate::fleet::{
    Capability, DroneRole, Location, PowerConfig, DEFAULT_MAX_TETHERED_PER_ANCHOR, DEFAULT_TETHER_REACH_FT, EPS,
};
use crate::goal::IlityAttribute;
use crate::ids::{DroneId, SegmentId, SiteId};
use crate::work_os::MultiplexScheme;

pub const MILE_FT: f64 = 5280.0;
pub const LENGTH_RANGE_FT: (f64, f64) = (MILE_FT, 10.0 * MILE_FT);
pub const HEIGHT_RANGE_FT: (f64, f64) = (100.0, 1000.0);
pub const WIDTH_RANGE_FT: (f64, f64) = (300.0, 1000.0);
pub const FLEET_SIZE_RANGE: (usize, usize) = (10, 100);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: SegmentId,
    pub start_ft: f64,
    pub length_ft: f64,
    pub height_ft: f64,
    pub width_ft: f64,
    /// Work units needed per task kind.
    #[serde(default)]
    pub work_required: BTreeMap<Capability, u64>,
    /// The last `payload_required` work units each consume one payload unit.
    #[serde(default)]
    pub payload_required: u64,
    /// The first `interface_work` units must be done at an adjacent
    /// compartment boundary when the segment touches one.
    #[serde(default)]
    pub interface_work: u64,
}

impl Segment {
    pub fn total_work(&self) -> u64 {
        self.work_required.values().sum()
    }

    pub fn end_ft(&self) -> f64 {
        self.start_ft + self.length_ft
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeStructure {
    pub segments: Vec<Segment>,
}

impl LandscapeStructure {
    pub fn total_length_ft(&self) -> f64 {
        self.segments.iter().map(|s| s.length_ft).sum()
    }

    pub fn total_work(&self) -> u64 {
        self.segments.iter().map(Segment::total_work).sum()
    }

    pub fn total_payload(&self) -> u64 {
        self.segments.iter().map(|s| s.payload_required).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    CentralHq,
    SupplyStation,
    FieldStagingArea,
    FieldOps,
}

impl SiteKind {
    /// Rank in the workflow lattice.
    pub fn rank(self) -> u8 {
        match self {
            SiteKind::CentralHq => 0,
            SiteKind::SupplyStation => 1,
            SiteKind::FieldStagingArea => 2,
            SiteKind::FieldOps => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SiteKind::CentralHq => "CentralHQ",
            SiteKind::SupplyStation => "SupplyStation",
            SiteKind::FieldStagingArea => "FieldStagingArea",
            SiteKind::FieldOps => "FieldOps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub id: SiteId,
    pub kind: SiteKind,
    #[serde(default)]
    pub inventory: u64,
    /// Position on the structure axis; `None` marks an off-site location.
    #[serde(default)]
    pub position_ft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub id: DroneId,
    pub role: DroneRole,
    #[serde(default)]
    pub capabilities: BTreeSet<Capability>,
    #[serde(default = "default_rate")]
    pub work_rate: u64,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub location: Option<Location>,
}

fn default_rate() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CompartmentPolicy {
    FixedCount(u32),
    UniformLength(f64),
    UniformWork(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelOverride {
    pub from: SiteId,
    pub to: SiteId,
    pub ticks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostPolicy {
    pub default_rate: f64,
    pub role_rates: BTreeMap<DroneRole, f64>,
    pub tether_fixed: f64,
}

impl Default for CostPolicy {
    fn default() -> Self {
        Self {
            default_rate: 1.0,
            role_rates: BTreeMap::new(),
            tether_fixed: 5.0,
        }
    }
}

impl CostPolicy {
    pub fn rate_for(&self, role: DroneRole) -> f64 {
        self.role_rates.get(&role).copied().unwrap_or(self.default_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policies {
    pub compartments: CompartmentPolicy,
    pub coordination: CStrategy,
    pub multiplex: MultiplexScheme,
    pub ilities: Vec<IlityAttribute>,
    pub fanout: Vec<u32>,
    /// Virtual drones per compartment; defaults to the compartment's field
    /// drone count. Never fewer than its positive-work leaves.
    pub virtual_per_compartment: Option<u32>,
    pub tether_rule: bool,
    pub tether_reach_ft: f64,
    pub max_tethered_per_anchor: u32,
    pub ferry_capacity: u64,
    pub travel_ticks: u32,
    pub travel_overrides: Vec<TravelOverride>,
    pub stigmergy_ttl: u32,
    pub cost: CostPolicy,
}

impl Default for Policies {
    fn default() -> Self {
        Self {
            compartments: CompartmentPolicy::FixedCount(1),
            coordination: CStrategy::Broker,
            multiplex: MultiplexScheme::RoundRobin,
            ilities: IlityAttribute::CORE.to_vec(),
            fanout: vec![1, 1, 1, 1, 1],
            virtual_per_compartment: None,
            tether_rule: true,
            tether_reach_ft: DEFAULT_TETHER_REACH_FT,
            max_tethered_per_anchor: DEFAULT_MAX_TETHERED_PER_ANCHOR,
            ferry_capacity: 10,
            travel_ticks: 1,
            travel_overrides: Vec::new(),
            stigmergy_ttl: 2,
            cost: CostPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub tick_hours: f64,
    pub c_phase_overhead_ticks: u32,
    pub budget_max_hours: f64,
    pub stall_limit: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            tick_hours: 0.1,
            c_phase_overhead_ticks: 0,
            budget_max_hours: 10.0,
            stall_limit: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub structure: LandscapeStructure,
    pub sites: Vec<Site>,
    pub fleet: Vec<DroneSpec>,
    #[serde(default)]
    pub policies: Policies,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed: u64,
}

/// Non-fatal advisories about scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum ScaleWarning {
    BelowLandscapeScale { length_ft: f64 },
    AboveLandscapeScale { length_ft: f64 },
    HeightBelowRange { segment: SegmentId, height_ft: f64 },
    HeightAboveRange { segment: SegmentId, height_ft: f64 },
    WidthBelowRange { segment: SegmentId, width_ft: f64 },
    WidthAboveRange { segment: SegmentId, width_ft: f64 },
    FleetSizeOutOfRange { size: usize },
}

impl ScaleWarning {
    pub fn name(&self) -> &'static str {
        match self {
            ScaleWarning::BelowLandscapeScale { .. } => "below landscape scale",
            ScaleWarning::AboveLandscapeScale { .. } => "above landscape scale",
            ScaleWarning::HeightBelowRange { .. } => "height below range",
            ScaleWarning::HeightAboveRange { .. } => "height above range",
            ScaleWarning::WidthBelowRange { .. } => "width below range",
            ScaleWarning::WidthAboveRange { .. } => "width above range",
            ScaleWarning::FleetSizeOutOfRange { .. } => "fleet size outside advisory range",
        }
    }
}

impl fmt::Display for ScaleWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleWarning::BelowLandscapeScale { length_ft } | ScaleWarning::AboveLandscapeScale { length_ft } => {
                write!(f, "{}: length {length_ft} ft", self.name())
            }
            ScaleWarning::HeightBelowRange { segment, height_ft }
            | ScaleWarning::HeightAboveRange { segment, height_ft } => {
                write!(f, "{}: {segment} height {height_ft} ft", self.name())
            }
            ScaleWarning::WidthBelowRange { segment, width_ft }
            | ScaleWarning::WidthAboveRange { segment, width_ft } => {
                write!(f, "{}: {segment} width {width_ft} ft", self.name())
            }
            ScaleWarning::FleetSizeOutOfRange { size } => {
                write!(f, "{}: {size} drones", self.name())
            }
        }
    }
}

/// Scale advisories for a structure. Reports the first offending segment for
/// each height/width direction.
pub fn validate_structure(structure: &LandscapeStructure) -> Vec<ScaleWarning> {
    let mut out = Vec::new();
    let len = structure.total_length_ft();
    if len < LENGTH_RANGE_FT.0 {
        out.push(ScaleWarning::BelowLandscapeScale { length_ft: len });
    } else if len > LENGTH_RANGE_FT.1 {
        out.push(ScaleWarning::AboveLandscapeScale { length_ft: len });
    }
    let segs = &structure.segments;
    if let Some(s) = segs.iter().find(|s| s.height_ft < HEIGHT_RANGE_FT.0) {
        out.push(ScaleWarning::HeightBelowRange {
            segment: s.id,
            height_ft: s.height_ft,
        });
    }
    if let Some(s) = segs.iter().find(|s| s.height_ft > HEIGHT_RANGE_FT.1) {
        out.push(ScaleWarning::HeightAboveRange {
            segment: s.id,
            height_ft: s.height_ft,
        });
    }
    if let Some(s) = segs.iter().find(|s| s.width_ft < WIDTH_RANGE_FT.0) {
        out.push(ScaleWarning::WidthBelowRange {
            segment: s.id,
            width_ft: s.width_ft,
        });
    }
    if let Some(s) = segs.iter().find(|s| s.width_ft > WIDTH_RANGE_FT.1) {
        out.push(ScaleWarning::WidthAboveRange {
            segment: s.id,
            width_ft: s.width_ft,
        });
    }
    out
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_json(&text)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn warnings(&self) -> Vec<ScaleWarning> {
        let mut out = validate_structure(&self.structure);
        let n = self.fleet.len();
        if n < FLEET_SIZE_RANGE.0 || n > FLEET_SIZE_RANGE.1 {
            out.push(ScaleWarning::FleetSizeOutOfRange { size: n });
        }
        out
    }

    pub fn site(&self, id: &SiteId) -> Option<&Site> {
        self.sites.iter().find(|s| &s.id == id)
    }

    /// Check every hard invariant and cross-reference.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_structure_invariants()?;
        self.validate_sites()?;
        self.validate_fleet()?;
        self.validate_policies()?;
        Ok(())
    }

    fn validate_structure_invariants(&self) -> Result<(), ScenarioError> {
        let segs = &self.structure.segments;
        if segs.is_empty() {
            return Err(ScenarioError::invalid(
                "structure.segments",
                "at least one segment is required",
            ));
        }
        for (k, s) in segs.iter().enumerate() {
            let field = |name: &str| format!("structure.segments[{k}].{name}");
            if s.id != SegmentId(k as u32) {
                return Err(ScenarioError::invalid(
                    field("id"),
                    format!("segment ids must be 0..n in order, expected {k}, got {}", s.id.0),
                ));
            }
            if !(s.length_ft.is_finite() && s.length_ft > 0.0) {
                return Err(ScenarioError::invalid(field("length_ft"), "must be > 0"));
            }
            if !(s.start_ft.is_finite() && s.start_ft >= 0.0) {
                return Err(ScenarioError::invalid(field("start_ft"), "must be >= 0"));
            }
            for (name, v) in [("height_ft", s.height_ft), ("width_ft", s.width_ft)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ScenarioError::invalid(field(name), "must be >= 0"));
                }
            }
            let work = s.total_work();
            if s.payload_required > work {
                return Err(ScenarioError::invalid(
                    field("payload_required"),
                    format!("{} exceeds the segment's {work} work units", s.payload_required),
                ));
            }
            if s.interface_work > work {
                return Err(ScenarioError::invalid(
                    field("interface_work"),
                    format!("{} exceeds the segment's {work} work units", s.interface_work),
                ));
            }
            if k > 0 {
                let prev = &segs[k - 1];
                if (s.start_ft - prev.end_ft()).abs() > 1e-6 {
                    return Err(ScenarioError::invalid(
                        field("start_ft"),
                        format!(
                            "segment {} starts at {} ft but segment {} ends at {} ft",
                            s.id.0,
                            s.start_ft,
                            prev.id.0,
                            prev.end_ft()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_sites(&self) -> Result<(), ScenarioError> {
        let mut seen = BTreeSet::new();
        for (k, site) in self.sites.iter().enumerate() {
            if !seen.insert(&site.id) {
                return Err(ScenarioError::invalid(
                    format!("sites[{k}].id"),
                    format!("duplicate site id `{}`", site.id),
                ));
            }
            if let Some(p) = site.position_ft {
                if !p.is_finite() {
                    return Err(ScenarioError::invalid(
                        format!("sites[{k}].position_ft"),
                        "must be finite",
                    ));
                }
            }
        }
        let count = |kind| self.sites.iter().filter(|s| s.kind == kind).count();
        let hq = count(SiteKind::CentralHq);
        if hq != 1 {
            return Err(ScenarioError::invalid(
                "sites",
                format!("exactly one central_hq site is required, found {hq}"),
            ));
        }
        // FieldOps sites may be omitted; one per compartment is derived.
        for kind in [SiteKind::SupplyStation, SiteKind::FieldStagingArea] {
            if count(kind) == 0 {
                return Err(ScenarioError::invalid(
                    "sites",
                    format!("at least one {} site is required", kind.name()),
                ));
            }
        }
        Ok(())
    }

    fn validate_fleet(&self) -> Result<(), ScenarioError> {
        let seg_count = self.structure.segments.len();
        let tick = self.budgets.tick_hours;
        let mut seen = BTreeSet::new();
        for (k, d) in self.fleet.iter().enumerate() {
            let field = |name: &str| format!("fleet[{k}].{name}");
            if !seen.insert(&d.id) {
                return Err(ScenarioError::invalid(
                    field("id"),
                    format!("duplicate drone id `{}`", d.id),
                ));
            }
            if d.work_rate == 0 {
                return Err(ScenarioError::invalid(field("work_rate"), "must be > 0"));
            }
            if matches!(d.role, DroneRole::FieldOperation | DroneRole::FerryTaxi) && d.capabilities.is_empty() {
                return Err(ScenarioError::invalid(
                    field("capabilities"),
                    format!("a {} drone needs at least one capability", d.role.name()),
                ));
            }
            match &d.power {
                PowerConfig::Battery { capacity_hours, .. } => {
                    if !(capacity_hours.is_finite() && *capacity_hours > 0.0) {
                        return Err(ScenarioError::invalid(
                            field("power.battery.capacity_hours"),
                            "must be > 0",
                        ));
                    }
                    if tick > 0.0 && *capacity_hours + EPS < tick {
                        return Err(ScenarioError::invalid(
                            field("power.battery.capacity_hours"),
                            format!("capacity {capacity_hours} h is shorter than one {tick} h tick"),
                        ));
                    }
                }
                PowerConfig::Tethered { anchor_site, reach_ft } => {
                    if self.site(anchor_site).is_none() {
                        return Err(ScenarioError::dangling(
                            field("power.tethered.anchor_site"),
                            anchor_site,
                        ));
                    }
                    if !(reach_ft.is_finite() && *reach_ft >= 0.0) {
                        return Err(ScenarioError::invalid(field("power.tethered.reach_ft"), "must be >= 0"));
                    }
                }
            }
            match &d.location {
                Some(Location::Site(site)) if self.site(site).is_none() => {
                    return Err(ScenarioError::dangling(field("location.site"), site));
                }
                Some(Location::Segment(seg)) if seg.index() >= seg_count => {
                    return Err(ScenarioError::dangling(field("location.segment"), seg.0));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_policies(&self) -> Result<(), ScenarioError> {
        let b = &self.budgets;
        if !(b.tick_hours.is_finite() && b.tick_hours > 0.0) {
            return Err(ScenarioError::invalid("budgets.tick_hours", "must be > 0"));
        }
        if !(b.budget_max_hours.is_finite() && b.budget_max_hours >= 0.0) {
            return Err(ScenarioError::invalid("budgets.budget_max_hours", "must be >= 0"));
        }
        if b.stall_limit == 0 {
            return Err(ScenarioError::invalid("budgets.stall_limit", "must be >= 1"));
        }
        let p = &self.policies;
        match p.compartments {
            CompartmentPolicy::FixedCount(0) | CompartmentPolicy::UniformWork(0) => {
                return Err(ScenarioError::invalid("policies.compartments", "count must be >= 1"));
            }
            CompartmentPolicy::UniformLength(t) if !(t.is_finite() && t > 0.0) => {
                return Err(ScenarioError::invalid(
                    "policies.compartments",
                    "target length must be > 0",
                ));
            }
            _ => {}
        }
        if p.ilities.is_empty() {
            return Err(ScenarioError::invalid("policies.ilities", "must not be empty"));
        }
        let unique: BTreeSet<_> = p.ilities.iter().collect();
        if unique.len() != p.ilities.len() {
            return Err(ScenarioError::invalid("policies.ilities", "names must be unique"));
        }
        if !p.ilities.contains(&IlityAttribute::Functionality) {
            return Err(ScenarioError::invalid("policies.ilities", "must include functionality"));
        }
        if p.fanout.len() != 5 || p.fanout.contains(&0) {
            return Err(ScenarioError::invalid(
                "policies.fanout",
                "needs exactly 5 entries, each >= 1",
            ));
        }
        if p.ferry_capacity == 0 {
            return Err(ScenarioError::invalid("policies.ferry_capacity", "must be >= 1"));
        }
        if p.travel_ticks == 0 {
            return Err(ScenarioError::invalid("policies.travel_ticks", "must be >= 1"));
        }
        if p.stigmergy_ttl == 0 {
            return Err(ScenarioError::invalid("policies.stigmergy_ttl", "must be >= 1"));
        }
        if !(p.tether_reach_ft.is_finite() && p.tether_reach_ft >= 0.0) {
            return Err(ScenarioError::invalid("policies.tether_reach_ft", "must be >= 0"));
        }
        for (k, o) in p.travel_overrides.iter().enumerate() {
            for (name, id) in [("from", &o.from), ("to", &o.to)] {
                if self.site(id).is_none() {
                    return Err(ScenarioError::dangling(
                        format!("policies.travel_overrides[{k}].{name}"),
                        id,
                    ));
                }
            }
            if o.ticks == 0 {
                return Err(ScenarioError::invalid(
                    format!("policies.travel_overrides[{k}].ticks"),
                    "must be >= 1",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "structure": {"segments": [
            {"id": 0, "start_ft": 0, "length_ft": 400, "height_ft": 200, "width_ft": 400,
             "work_required": {"structure_assembly": 10}}
        ]},
        "sites": [
            {"id": "hq", "kind": "central_hq", "inventory": 50},
            {"id": "sup", "kind": "supply_station"},
            {"id": "stage", "kind": "field_staging_area", "position_ft": 200},
            {"id": "fo", "kind": "field_ops", "position_ft": 200}
        ],
        "fleet": [
            {"id": "f0", "role": "field_operation", "capabilities": ["structure_assembly"], "work_rate": 5}
        ]
    }"#;

    fn segment(id: u32, start: f64, len: f64) -> Segment {
        Segment {
            id: SegmentId(id),
            start_ft: start,
            length_ft: len,
            height_ft: 500.0,
            width_ft: 500.0,
            work_required: BTreeMap::new(),
            payload_required: 0,
            interface_work: 0,
        }
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.budgets, Budgets::default());
        assert_eq!(s.policies, Policies::default());
        assert_eq!(s.seed, 0);
        assert_eq!(s.fleet[0].power, PowerConfig::default());
        assert_eq!(s.structure.total_length_ft(), 400.0);
    }

    #[test]
    fn contiguity_error_names_segment() {
        let text = MINIMAL.replace(
            r#""work_required": {"structure_assembly": 10}}"#,
            r#""work_required": {"structure_assembly": 10}},
            {"id": 1, "start_ft": 400, "length_ft": 100, "height_ft": 200, "width_ft": 400},
            {"id": 2, "start_ft": 600, "length_ft": 100, "height_ft": 200, "width_ft": 400}"#,
        );
        let err = Scenario::from_json(&text).unwrap_err();
        match err {
            ScenarioError::Invalid { field, message } => {
                assert_eq!(field, "structure.segments[2].start_ft");
                assert!(message.contains("segment 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let err = Scenario::from_json("{\n  \"structure\": 3\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace(r#""work_rate": 5"#, r#""work_rate": 5, "speed": 3"#);
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
    }

    #[test]
    fn dangling_location_reference() {
        let text = MINIMAL.replace(
            r#""work_rate": 5"#,
            r#""work_rate": 5, "location": {"site": "nowhere"}"#,
        );
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(
            matches!(&err, ScenarioError::DanglingReference { field, id } if field == "fleet[0].location.site" && id == "nowhere"),
            "{err:?}"
        );
    }

    #[test]
    fn two_headquarters_rejected() {
        let text = MINIMAL.replace(r#""kind": "supply_station""#, r#""kind": "central_hq""#);
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn field_ops_sites_may_be_omitted() {
        let text = MINIMAL.replace(
            r#",
            {"id": "fo", "kind": "field_ops", "position_ft": 200}"#,
            "",
        );
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.sites.len(), 3);
    }

    #[test]
    fn battery_shorter_than_tick_rejected() {
        let text = MINIMAL.replace(
            r#""work_rate": 5"#,
            r#""work_rate": 5, "power": {"battery": {"capacity_hours": 0.05}}"#,
        );
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn scale_warnings() {
        let mile = LandscapeStructure {
            segments: vec![segment(0, 0.0, 5280.0)],
        };
        assert!(validate_structure(&mile).is_empty());

        let short = LandscapeStructure {
            segments: vec![segment(0, 0.0, 100.0)],
        };
        let w = validate_structure(&short);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].name(), "below landscape scale");

        let mut tall = segment(0, 0.0, 5280.0);
        tall.height_ft = 2000.0;
        let w = validate_structure(&LandscapeStructure { segments: vec![tall] });
        assert_eq!(
            w.iter().map(ScaleWarning::name).collect::<Vec<_>>(),
            ["height above range"]
        );
    }

    #[test]
    fn validate_structure_is_pure() {
        let s = LandscapeStructure {
            segments: vec![segment(0, 0.0, 90_000.0)],
        };
        let copy = s.clone();
        assert_eq!(validate_structure(&s), validate_structure(&s));
        assert_eq!(s, copy);
    }

    #[test]
    fn fleet_size_advisory() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert!(s
            .warnings()
            .iter()
            .any(|w| matches!(w, ScaleWarning::FleetSizeOutOfRange { size: 1 })));
    }
}
