//! Partitioning the structure into task compartments and deriving the
//! intersection relations that couple them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::ids::{CompartmentId, RelationId, ResourceId, SegmentId, SiteId};
use crate::scenario::{CompartmentPolicy, LandscapeStructure, Site, SiteKind};

/// Inclusive span of segment ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRange {
    pub first: SegmentId,
    pub last: SegmentId,
}

impl SegmentRange {
    pub fn len(&self) -> usize {
        (self.last.0 - self.first.0 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, seg: SegmentId) -> bool {
        self.first <= seg && seg <= self.last
    }

    pub fn iter(&self) -> impl Iterator<Item = SegmentId> {
        (self.first.0..=self.last.0).map(SegmentId)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compartment {
    pub id: CompartmentId,
    pub segment_range: SegmentRange,
    pub total_work: u64,
    pub start_ft: f64,
    pub end_ft: f64,
    pub staging_site: Option<SiteId>,
    pub fieldops_site: Option<SiteId>,
}

impl Compartment {
    pub fn midpoint_ft(&self) -> f64 {
        (self.start_ft + self.end_ft) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentPlan {
    pub compartments: Vec<Compartment>,
    pub policy: CompartmentPolicy,
}

impl CompartmentPlan {
    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }

    pub fn compartment_of(&self, seg: SegmentId) -> Option<CompartmentId> {
        self.compartments
            .iter()
            .find(|c| c.segment_range.contains(seg))
            .map(|c| c.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionRelation {
    pub id: RelationId,
    pub members: BTreeSet<CompartmentId>,
    pub shared_resources: BTreeSet<ResourceId>,
}

/// Split the segment list into contiguous compartments.
pub fn compartmentalize(
    structure: &LandscapeStructure,
    policy: CompartmentPolicy,
) -> Result<CompartmentPlan, PlanError> {
    let n = structure.segments.len();
    if n == 0 {
        return Err(PlanError::EmptyStructure);
    }
    let sizes = match policy {
        CompartmentPolicy::FixedCount(k) => {
            check_count(k, n)?;
            let k = k as usize;
            (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
        }
        CompartmentPolicy::UniformLength(target) => {
            if !(target.is_finite() && target > 0.0) {
                return Err(PlanError::BadTargetLength(target));
            }
            uniform_length_sizes(structure, target)
        }
        CompartmentPolicy::UniformWork(k) => {
            check_count(k, n)?;
            let work: Vec<u64> = structure.segments.iter().map(|s| s.total_work()).collect();
            greedy_prefix_sizes(&work, k as usize)
        }
    };
    let mut compartments = Vec::with_capacity(sizes.len());
    let mut next = 0usize;
    for (k, size) in sizes.into_iter().enumerate() {
        let segs = &structure.segments[next..next + size];
        compartments.push(Compartment {
            id: CompartmentId(k as u32),
            segment_range: SegmentRange {
                first: SegmentId(next as u32),
                last: SegmentId((next + size - 1) as u32),
            },
            total_work: segs.iter().map(|s| s.total_work()).sum(),
            start_ft: segs[0].start_ft,
            end_ft: segs[size - 1].end_ft(),
            staging_site: None,
            fieldops_site: None,
        });
        next += size;
    }
    Ok(CompartmentPlan { compartments, policy })
}

fn check_count(k: u32, n: usize) -> Result<(), PlanError> {
    if k == 0 || k as usize > n {
        return Err(PlanError::BadCompartmentCount {
            requested: k,
            segments: n,
        });
    }
    Ok(())
}

fn uniform_length_sizes(structure: &LandscapeStructure, target: f64) -> Vec<usize> {
    let mut sizes = Vec::new();
    let (mut count, mut acc) = (0usize, 0.0);
    for s in &structure.segments {
        count += 1;
        acc += s.length_ft;
        if acc + 1e-9 >= target {
            sizes.push(count);
            count = 0;
            acc = 0.0;
        }
    }
    if count > 0 {
        sizes.push(count);
    }
    sizes
}

/// Greedy prefix rule: keep adding segments until the compartment's work
/// reaches `remaining_work / remaining_compartments`, stopping right after
/// the segment that crosses the threshold. Each compartment gets at least
/// one segment and enough segments are left for the rest.
pub(crate) fn greedy_prefix_sizes(work: &[u64], k: usize) -> Vec<usize> {
    let n = work.len();
    let mut remaining: u64 = work.iter().sum();
    let mut sizes = Vec::with_capacity(k);
    let mut i = 0;
    for c in 0..k {
        let left = (k - c) as u64;
        if c == k - 1 {
            sizes.push(n - i);
            break;
        }
        let start = i;
        let mut acc = 0u64;
        loop {
            acc += work[i];
            i += 1;
            // integer form of acc >= remaining / left
            if acc * left >= remaining || n - i == k - c - 1 {
                break;
            }
        }
        remaining -= acc;
        sizes.push(i - start);
    }
    sizes
}

/// Couplings between compartments: one relation per adjacent boundary,
/// except that compartments sharing a staging site are merged into a single
/// relation carrying the site plus the boundaries between them.
pub fn derive_intersections(plan: &CompartmentPlan, sites: &[Site]) -> Vec<IntersectionRelation> {
    let staging: BTreeSet<&SiteId> = sites
        .iter()
        .filter(|s| s.kind == SiteKind::FieldStagingArea)
        .map(|s| &s.id)
        .collect();

    let mut by_site: BTreeMap<&SiteId, BTreeSet<CompartmentId>> = BTreeMap::new();
    for c in &plan.compartments {
        if let Some(site) = c.staging_site.as_ref().filter(|s| staging.contains(s)) {
            by_site.entry(site).or_default().insert(c.id);
        }
    }

    let mut relations: Vec<(BTreeSet<CompartmentId>, BTreeSet<ResourceId>)> = Vec::new();
    let mut group_of: BTreeMap<CompartmentId, usize> = BTreeMap::new();
    for (site, members) in by_site.iter().filter(|(_, m)| m.len() >= 2) {
        for m in members {
            group_of.insert(*m, relations.len());
        }
        relations.push((members.clone(), BTreeSet::from([ResourceId::site(site)])));
    }

    for pair in plan.compartments.windows(2) {
        let (a, b) = (pair[0].id, pair[1].id);
        let resource = ResourceId::boundary(a, b);
        match (group_of.get(&a), group_of.get(&b)) {
            (Some(ga), Some(gb)) if ga == gb => {
                relations[*ga].1.insert(resource);
            }
            _ => relations.push((BTreeSet::from([a, b]), BTreeSet::from([resource]))),
        }
    }

    relations.sort_by(|x, y| x.0.iter().cmp(y.0.iter()));
    relations
        .into_iter()
        .enumerate()
        .map(|(i, (members, shared_resources))| IntersectionRelation {
            id: RelationId(i as u32),
            members,
            shared_resources,
        })
        .collect()
}
