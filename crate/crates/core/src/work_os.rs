//! The work operating system: multiplexes virtual drones onto the physical
//! drones available in an E* phase.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::coordination::Grant;
use crate::fleet::{PhysicalDrone, VirtualDrone};
use crate::ids::{DroneId, VirtualId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MultiplexScheme {
    #[default]
    #[serde(rename = "rr", alias = "round_robin")]
    RoundRobin,
    #[serde(rename = "weighted", alias = "weighted_by_remaining_work")]
    WeightedByRemainingWork,
    #[serde(rename = "priority", alias = "priority_by_goal_depth")]
    PriorityByGoalDepth,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Binding {
    pub phase_index: u32,
    /// (physical, virtual) pairs in ascending virtual order.
    pub pairs: Vec<(DroneId, VirtualId)>,
}

impl Binding {
    pub fn is_valid(&self) -> bool {
        let p: BTreeSet<_> = self.pairs.iter().map(|(p, _)| p).collect();
        let v: BTreeSet<_> = self.pairs.iter().map(|(_, v)| v).collect();
        p.len() == self.pairs.len() && v.len() == self.pairs.len()
    }
}

/// Virtuals that can make progress this phase: work remains, every resource
/// their next unit needs is granted to their compartment, and at least one
/// eligible physical drone is not recharging.
pub fn compute_runnable<F>(
    virtuals: &[VirtualDrone],
    grants: &[Grant],
    physicals: &[PhysicalDrone],
    tick_hours: f64,
    eligible: F,
) -> Vec<VirtualDrone>
where
    F: Fn(&VirtualDrone, &PhysicalDrone) -> bool,
{
    virtuals
        .iter()
        .filter(|v| v.remaining_work > 0)
        .filter(|v| {
            v.required_resources.iter().all(|r| {
                grants
                    .iter()
                    .any(|g| &g.resource_id == r && g.grantee == v.compartment_id)
            })
        })
        .filter(|v| {
            physicals
                .iter()
                .any(|p| eligible(v, p) && p.can_work_next_tick(tick_hours))
        })
        .cloned()
        .collect()
}

/// Greedy maximal matching of runnable virtuals onto available physicals.
///
/// Virtuals are ordered by the scheme, then each takes the lowest-id free
/// physical it is eligible for. Round robin starts at
/// `(phase_index * |available|) mod |runnable|`, so consecutive phases serve
/// consecutive blocks of virtuals.
pub fn bind_phase<F>(
    phase_index: u32,
    runnable: &[VirtualDrone],
    available: &[PhysicalDrone],
    scheme: MultiplexScheme,
    eligible: F,
) -> Binding
where
    F: Fn(&VirtualDrone, &PhysicalDrone) -> bool,
{
    let mut order: Vec<&VirtualDrone> = runnable.iter().collect();
    order.sort_by_key(|v| v.id);
    order.dedup_by_key(|v| v.id);
    let mut phys: Vec<&PhysicalDrone> = available.iter().collect();
    phys.sort_by(|a, b| a.id.cmp(&b.id));
    phys.dedup_by(|a, b| a.id == b.id);

    match scheme {
        MultiplexScheme::RoundRobin => {
            if !order.is_empty() {
                let offset = (phase_index as usize * phys.len()) % order.len();
                order.rotate_left(offset);
            }
        }
        MultiplexScheme::WeightedByRemainingWork => {
            order.sort_by(|a, b| b.remaining_work.cmp(&a.remaining_work).then(a.id.cmp(&b.id)));
        }
        MultiplexScheme::PriorityByGoalDepth => {
            order.sort_by(|a, b| a.goal_level.cmp(&b.goal_level).then(a.id.cmp(&b.id)));
        }
    }

    let mut used = vec![false; phys.len()];
    let mut pairs = Vec::new();
    for v in order {
        if let Some(i) = (0..phys.len()).find(|&i| !used[i] && eligible(v, phys[i])) {
            used[i] = true;
            pairs.push((phys[i].id.clone(), v.id));
        }
    }
    pairs.sort_by_key(|(_, v)| *v);
    Binding { phase_index, pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::tests::{field_drone, virtual_drone};
    use crate::fleet::{capability_match, Capability, PowerConfig, PowerState};
    use crate::ids::{CompartmentId, ResourceId};
    use proptest::prelude::*;

    const CAP: Capability = Capability::StructureAssembly;

    fn phys(n: usize) -> Vec<PhysicalDrone> {
        (0..n)
            .map(|i| field_drone(&format!("p{i}"), &[CAP], 1, PowerConfig::default()))
            .collect()
    }

    fn virt(n: u32) -> Vec<VirtualDrone> {
        (0..n).map(|i| virtual_drone(i, CAP, 10)).collect()
    }

    fn pairs(b: &Binding) -> Vec<(String, u32)> {
        b.pairs.iter().map(|(p, v)| (p.to_string(), v.0)).collect()
    }

    #[test]
    fn runnable_empty_when_done() {
        let mut v = virt(2);
        for x in &mut v {
            x.remaining_work = 0;
        }
        assert!(compute_runnable(&v, &[], &phys(1), 0.1, capability_match).is_empty());
    }

    #[test]
    fn runnable_requires_grant() {
        let mut v = virt(2);
        v[0].required_resources.insert(ResourceId::new("boundary:c0-c1"));
        let r = compute_runnable(&v, &[], &phys(1), 0.1, capability_match);
        assert_eq!(r.iter().map(|v| v.id.0).collect::<Vec<_>>(), [1]);

        let grant = Grant {
            resource_id: ResourceId::new("boundary:c0-c1"),
            grantee: CompartmentId(0),
            phase_index: 0,
        };
        assert_eq!(
            compute_runnable(&v, std::slice::from_ref(&grant), &phys(1), 0.1, capability_match).len(),
            2
        );
        let other = Grant {
            grantee: CompartmentId(1),
            ..grant
        };
        assert_eq!(compute_runnable(&v, &[other], &phys(1), 0.1, capability_match).len(), 1);
    }

    #[test]
    fn runnable_skips_recharge_only_candidates() {
        let mut v = virt(3);
        v[2].required_capability = Capability::Survey;
        let mut p = phys(1);
        let mut surveyor = field_drone("p9", &[Capability::Survey], 1, PowerConfig::default());
        surveyor.power_state = PowerState::Recharging { ticks_left: 2 };
        p.push(surveyor);

        // brute force: a virtual is runnable iff some candidate is usable
        let expected: Vec<u32> = v
            .iter()
            .filter(|x| p.iter().any(|q| capability_match(x, q) && !q.is_recharging()))
            .map(|x| x.id.0)
            .collect();
        let got: Vec<u32> = compute_runnable(&v, &[], &p, 0.1, capability_match)
            .iter()
            .map(|x| x.id.0)
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got, [0, 1]);
    }

    #[test]
    fn round_robin_cycles() {
        let v = virt(3);
        let p = phys(1);
        for phase in 0..3 {
            let b = bind_phase(phase, &v, &p, MultiplexScheme::RoundRobin, capability_match);
            assert_eq!(pairs(&b), [("p0".to_string(), phase)]);
        }
    }

    #[test]
    fn surplus_physicals_idle() {
        let v = virt(2);
        let p = phys(3);
        for scheme in [
            MultiplexScheme::RoundRobin,
            MultiplexScheme::WeightedByRemainingWork,
            MultiplexScheme::PriorityByGoalDepth,
        ] {
            let b = bind_phase(0, &v, &p, scheme, capability_match);
            assert_eq!(b.pairs.len(), 2);
        }
    }

    /// All maximal matchings on a 2x2 table, in scheme order.
    fn brute_force_greedy(compat: [[bool; 2]; 2], order: [usize; 2]) -> Vec<(usize, usize)> {
        let mut used = [false; 2];
        let mut out = Vec::new();
        for v in order {
            for p in 0..2 {
                if compat[p][v] && !used[p] {
                    used[p] = true;
                    out.push((p, v));
                    break;
                }
            }
        }
        out.sort_by_key(|x| x.1);
        out
    }

    #[test]
    fn weighted_greedy_matching() {
        let mut v = virt(2);
        v[0].remaining_work = 9;
        v[0].required_capability = Capability::Survey;
        v[1].remaining_work = 5;
        let p0 = field_drone("p0", &[CAP], 1, PowerConfig::default());
        let p1 = field_drone("p1", &[CAP, Capability::Survey], 1, PowerConfig::default());
        let b = bind_phase(
            0,
            &v,
            &[p0, p1],
            MultiplexScheme::WeightedByRemainingWork,
            capability_match,
        );
        assert_eq!(pairs(&b), [("p1".to_string(), 0), ("p0".to_string(), 1)]);
        assert_eq!(
            brute_force_greedy([[false, true], [true, true]], [0, 1]),
            [(1, 0), (0, 1)]
        );
    }

    #[test]
    fn priority_prefers_shallow_levels() {
        let mut v = virt(3);
        v[0].goal_level = 5;
        v[2].goal_level = 3;
        let b = bind_phase(0, &v, &phys(1), MultiplexScheme::PriorityByGoalDepth, capability_match);
        assert_eq!(pairs(&b), [("p0".to_string(), 2)]);
    }

    #[test]
    fn round_robin_window_fairness() {
        for vn in [3u32, 5, 10] {
            for pn in [1usize, 2, 3] {
                let v = virt(vn);
                let p = phys(pn);
                let window = (vn as usize).div_ceil(pn) as u32;
                for start in 0..30 {
                    let mut seen = BTreeSet::new();
                    for phase in start..start + window {
                        for (_, vid) in bind_phase(phase, &v, &p, MultiplexScheme::RoundRobin, capability_match).pairs {
                            seen.insert(vid);
                        }
                    }
                    assert_eq!(seen.len(), vn as usize, "V={vn} P={pn} window at {start}");
                }
            }
        }
    }

    fn scheme() -> impl Strategy<Value = MultiplexScheme> {
        prop_oneof![
            Just(MultiplexScheme::RoundRobin),
            Just(MultiplexScheme::WeightedByRemainingWork),
            Just(MultiplexScheme::PriorityByGoalDepth)
        ]
    }

    proptest! {
        #[test]
        fn matching_validity(
            vcaps in proptest::collection::vec(0usize..3, 0..12),
            pcaps in proptest::collection::vec((proptest::collection::btree_set(0usize..3, 1..3), any::<bool>()), 0..8),
            phase in 0u32..50,
            scheme in scheme(),
        ) {
            let caps = [CAP, Capability::Survey, Capability::Imaging];
            let v: Vec<VirtualDrone> = vcaps.iter().enumerate().map(|(i, &c)| virtual_drone(i as u32, caps[c], 1 + i as u64)).collect();
            let p: Vec<PhysicalDrone> = pcaps.iter().enumerate().map(|(i, (set, recharging))| {
                let cs: Vec<Capability> = set.iter().map(|&c| caps[c]).collect();
                let mut d = field_drone(&format!("p{i:02}"), &cs, 1, PowerConfig::default());
                if *recharging {
                    d.power_state = PowerState::Recharging { ticks_left: 1 };
                }
                d
            }).collect();
            let available: Vec<PhysicalDrone> = p.iter().filter(|d| d.can_work_next_tick(0.1)).cloned().collect();
            let runnable = compute_runnable(&v, &[], &p, 0.1, capability_match);
            let b = bind_phase(phase, &runnable, &available, scheme, capability_match);
            prop_assert!(b.is_valid());
            for (pid, vid) in &b.pairs {
                let pd = p.iter().find(|d| &d.id == pid).unwrap();
                let vd = v.iter().find(|d| &d.id == vid).unwrap();
                prop_assert!(capability_match(vd, pd));
                prop_assert!(!pd.is_recharging());
            }
            let any_pair = runnable.iter().any(|x| available.iter().any(|q| capability_match(x, q)));
            prop_assert_eq!(any_pair, !b.pairs.is_empty());
            // maximality: no unbound runnable has a free compatible physical
            let bound_p: BTreeSet<_> = b.pairs.iter().map(|(p, _)| p.clone()).collect();
            let bound_v: BTreeSet<_> = b.pairs.iter().map(|(_, v)| *v).collect();
            for x in runnable.iter().filter(|x| !bound_v.contains(&x.id)) {
                prop_assert!(!available.iter().any(|q| !bound_p.contains(&q.id) && capability_match(x, q)));
            }
        }
    }
}
