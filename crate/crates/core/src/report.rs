//! Run metrics for the four core ilities, the time-budget verdict and report
//! rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::RunOutput;
use crate::error::ReportError;
use crate::fleet::DroneRole;
use crate::ids::{CompartmentId, DroneId, SiteId};
use crate::logistics::PayloadLedger;
use crate::plan::sha256_hex;
use crate::scenario::{ScaleWarning, Scenario};
use crate::trace::{PhaseRecord, StallDiagnostic, StarvationEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneMetrics {
    pub drone: DroneId,
    pub role: DroneRole,
    pub completed_work: u64,
    pub bound_phases: u32,
    pub utilization: f64,
    /// Work units per drone-hour.
    pub productivity: f64,
    pub drone_hours: f64,
    pub tethered: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub pass: bool,
    pub budget_max_hours: f64,
    pub makespan_hours: f64,
    /// Positive when under budget.
    pub margin_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub drone_hours: f64,
    pub tether_fixed: f64,
    pub total: f64,
}

/// The four core requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreIlities {
    pub functionality: String,
    pub productivity: f64,
    pub performance_hours: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub scenario_digest: String,
    pub plan_digest: String,
    pub trace_digest: String,
    pub complete: bool,
    pub makespan_hours: f64,
    pub estar_phase_count: u32,
    pub cstar_phase_count: u32,
    pub total_work: u64,
    pub completed_work: u64,
    pub fleet_size: usize,
    pub fleet_productivity: f64,
    pub ilities: CoreIlities,
    pub cost: CostBreakdown,
    pub budget: BudgetVerdict,
    pub drones: Vec<DroneMetrics>,
    pub payload: PayloadLedger,
    pub final_inventory: BTreeMap<SiteId, u64>,
    pub compartment_stores: BTreeMap<CompartmentId, u64>,
    pub starvation_events: Vec<StarvationEvent>,
    pub stall: Option<StallDiagnostic>,
    pub warnings: Vec<ScaleWarning>,
}

/// Inclusive threshold on makespan.
pub fn check_time_budget(makespan_hours: f64, budget_max_hours: f64) -> BudgetVerdict {
    BudgetVerdict {
        pass: makespan_hours <= budget_max_hours,
        budget_max_hours,
        makespan_hours,
        margin_hours: budget_max_hours - makespan_hours,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn compute_metrics(out: &RunOutput, scenario: &Scenario) -> SimReport {
    let trace = &out.trace;
    let tick = scenario.budgets.tick_hours;
    let e = trace.estar_count();
    let c = trace.cstar_count();
    let makespan = (e as f64 + c as f64 * scenario.budgets.c_phase_overhead_ticks as f64) * tick;

    let mut work: BTreeMap<&DroneId, u64> = BTreeMap::new();
    let mut bound: BTreeMap<&DroneId, u32> = BTreeMap::new();
    let mut last_payload = PayloadLedger {
        initial: out.plan.initial_payload(),
        sites: out.plan.initial_payload(),
        ..PayloadLedger::default()
    };
    for r in &trace.records {
        if let PhaseRecord::EStar {
            bindings,
            drone_work,
            payload,
            ..
        } = r
        {
            for (d, w) in drone_work {
                *work.entry(d).or_default() += w;
            }
            for (p, _) in bindings {
                *bound.entry(p).or_default() += 1;
            }
            last_payload = *payload;
        }
    }

    let cost_policy = &scenario.policies.cost;
    let drones: Vec<DroneMetrics> = out
        .plan
        .physical
        .iter()
        .map(|p| {
            let completed = work.get(&p.id).copied().unwrap_or(0);
            let b = bound.get(&p.id).copied().unwrap_or(0);
            let tethered = p.power.is_tethered();
            let fixed = if tethered { cost_policy.tether_fixed } else { 0.0 };
            DroneMetrics {
                drone: p.id.clone(),
                role: p.role,
                completed_work: completed,
                bound_phases: b,
                utilization: ratio(b as f64, e as f64),
                productivity: ratio(completed as f64, makespan),
                drone_hours: makespan,
                tethered,
                cost: makespan * cost_policy.rate_for(p.role) + fixed,
            }
        })
        .collect();

    let completed: u64 = drones.iter().map(|d| d.completed_work).sum();
    let total_work = scenario.structure.total_work();
    let fleet_size = drones.len();
    let fleet_productivity = ratio(completed as f64, fleet_size as f64 * makespan);
    let drone_hours_cost: f64 = drones
        .iter()
        .map(|d| d.drone_hours * cost_policy.rate_for(d.role))
        .sum();
    let tether_fixed = drones.iter().filter(|d| d.tethered).count() as f64 * cost_policy.tether_fixed;
    let cost = CostBreakdown {
        drone_hours: drone_hours_cost,
        tether_fixed,
        total: drone_hours_cost + tether_fixed,
    };
    let complete = out.stall.is_none() && out.complete();

    SimReport {
        seed: trace.seed,
        scenario_digest: trace.scenario_digest.clone(),
        plan_digest: out.plan.digest(),
        trace_digest: sha256_hex(trace.to_ndjson().as_bytes()),
        complete,
        makespan_hours: makespan,
        estar_phase_count: e,
        cstar_phase_count: c,
        total_work,
        completed_work: completed,
        fleet_size,
        fleet_productivity,
        ilities: CoreIlities {
            functionality: if complete { "complete" } else { "incomplete" }.to_owned(),
            productivity: fleet_productivity,
            performance_hours: makespan,
            cost: cost.total,
        },
        budget: check_time_budget(makespan, scenario.budgets.budget_max_hours),
        cost,
        drones,
        payload: last_payload,
        final_inventory: out.final_inventory.clone(),
        compartment_stores: out.final_compartments.iter().map(|c| (c.id, c.store)).collect(),
        starvation_events: out.starvation.clone(),
        stall: out.stall.clone(),
        warnings: out.plan.warnings.clone(),
    }
}

pub fn render_report(report: &SimReport, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn render_csv(report: &SimReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "drone",
        "role",
        "completed_work",
        "bound_phases",
        "utilization",
        "productivity",
        "drone_hours",
        "tethered",
        "cost",
    ])?;
    for d in &report.drones {
        w.write_record([
            d.drone.to_string(),
            d.role.name().to_owned(),
            d.completed_work.to_string(),
            d.bound_phases.to_string(),
            d.utilization.to_string(),
            d.productivity.to_string(),
            d.drone_hours.to_string(),
            d.tethered.to_string(),
            d.cost.to_string(),
        ])?;
    }
    let bound: u32 = report.drones.iter().map(|d| d.bound_phases).sum();
    let fleet_util = ratio(bound as f64, report.estar_phase_count as f64 * report.fleet_size as f64);
    w.write_record([
        "fleet".to_owned(),
        String::new(),
        report.completed_work.to_string(),
        bound.to_string(),
        fleet_util.to_string(),
        report.fleet_productivity.to_string(),
        (report.makespan_hours * report.fleet_size as f64).to_string(),
        report.drones.iter().filter(|d| d.tethered).count().to_string(),
        report.cost.total.to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn render_text(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "functionality     {}", r.ilities.functionality);
    let _ = writeln!(s, "makespan          {:.3} h", r.makespan_hours);
    let _ = writeln!(
        s,
        "phases            {} E*, {} C*",
        r.estar_phase_count, r.cstar_phase_count
    );
    let _ = writeln!(s, "work              {} / {}", r.completed_work, r.total_work);
    let _ = writeln!(s, "productivity      {:.3} units/drone-hour", r.fleet_productivity);
    let _ = writeln!(s, "cost              {:.3}", r.cost.total);
    let _ = writeln!(
        s,
        "budget            {} ({:.3} h of {:.3} h, margin {:.3} h)",
        if r.budget.pass { "pass" } else { "fail" },
        r.makespan_hours,
        r.budget.budget_max_hours,
        r.budget.margin_hours
    );
    let _ = writeln!(s, "starvation events {}", r.starvation_events.len());
    if let Some(stall) = &r.stall {
        let _ = writeln!(s, "stalled after {} idle E* phases", stall.idle_estar_phases);
        for c in &stall.starved {
            let _ = writeln!(
                s,
                "  {}: {} units left; {}",
                c.compartment,
                c.remaining,
                c.reasons.join("; ")
            );
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {}", w.name());
    }
    let _ = writeln!(s, "seed              {}", r.seed);
    let _ = writeln!(s, "scenario digest   {}", r.scenario_digest);
    let _ = writeln!(s, "trace digest      {}", r.trace_digest);
    s
}

/// Write the report to `out`, or to standard output when `out` is `None`.
pub fn emit_report(report: &SimReport, format: ReportFormat, out: Option<&Path>) -> Result<(), ReportError> {
    let text = render_report(report, format)?;
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| ReportError::Write {
            path: path.to_owned(),
            source,
        }),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
