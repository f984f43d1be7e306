use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{build_simgraph, welsh_powell};
use super::stats::{are_dissimilar, ClassStats};
use crate::distance::Distance;
use crate::error::{Error, Result};

pub type GroupId = u32;

/// Which eligible group a new class joins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoicePolicy {
    /// Largest mean centroid distance to the group's members.
    #[default]
    MaxMeanDistance,
    /// Smallest mean centroid distance.
    MinMeanDistance,
}

/// Class-to-group assignment and its inverse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTable {
    group_of: BTreeMap<u32, GroupId>,
    members: BTreeMap<GroupId, Vec<u32>>,
    next_group_id: GroupId,
}

impl GroupTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn group_of(&self, class_id: u32) -> Option<GroupId> {
        self.group_of.get(&class_id).copied()
    }

    pub fn members(&self, group: GroupId) -> &[u32] {
        self.members.get(&group).map_or(&[], Vec::as_slice)
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &[u32])> {
        self.members.iter().map(|(&g, m)| (g, m.as_slice()))
    }

    pub fn group_ids(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.members.keys().copied()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn num_classes(&self) -> usize {
        self.group_of.len()
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.group_of.contains_key(&class_id)
    }

    pub fn next_group_id(&self) -> GroupId {
        self.next_group_id
    }

    /// Places `class_id` in `group`, creating the group if needed.
    pub fn insert(&mut self, class_id: u32, group: GroupId) -> Result<()> {
        if let Some(g) = self.group_of.get(&class_id) {
            return Err(Error::Assignment(format!("class {class_id} already belongs to group {g}")));
        }
        self.group_of.insert(class_id, group);
        self.members.entry(group).or_default().push(class_id);
        self.next_group_id = self.next_group_id.max(group + 1);
        Ok(())
    }

    /// Checks that both maps describe the same partition.
    pub fn check_consistency(&self) -> Result<()> {
        let mut seen = 0;
        for (&g, members) in &self.members {
            if members.is_empty() {
                return Err(Error::Consistency(format!("group {g} is empty")));
            }
            if g >= self.next_group_id {
                return Err(Error::Consistency(format!("group {g} is not below next_group_id")));
            }
            for c in members {
                if self.group_of.get(c) != Some(&g) {
                    return Err(Error::Consistency(format!("class {c} listed in group {g} but mapped elsewhere")));
                }
                seen += 1;
            }
        }
        if seen != self.group_of.len() {
            return Err(Error::Consistency("group_of holds classes missing from members".into()));
        }
        Ok(())
    }

    /// Within-group pairs that are not strictly dissimilar.
    pub fn dissimilarity_violations(
        &self,
        stats: &BTreeMap<u32, ClassStats>,
        metric: Distance,
    ) -> Result<Vec<(u32, u32)>> {
        let mut out = Vec::new();
        for members in self.members.values() {
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    if !are_dissimilar(lookup(stats, *a)?, lookup(stats, *b)?, metric)? {
                        out.push((*a.min(b), *a.max(b)));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn lookup(stats: &BTreeMap<u32, ClassStats>, c: u32) -> Result<&ClassStats> {
    stats.get(&c).ok_or_else(|| Error::Consistency(format!("no statistics for class {c}")))
}

/// Assigns one task's classes to groups.
///
/// Classes are handled in ascending id. A class may join any group whose
/// current members (including classes placed earlier in this call) are all
/// dissimilar to it; the policy picks among those. Classes with no eligible
/// group are collected, their SimGraph is colored with Welsh-Powell and each
/// color class becomes a new group.
pub fn assign_task_classes(
    table: &GroupTable,
    existing_stats: &BTreeMap<u32, ClassStats>,
    new_stats: &[ClassStats],
    policy: GroupChoicePolicy,
    metric: Distance,
) -> Result<(GroupTable, Vec<(u32, GroupId)>)> {
    let mut order: Vec<&ClassStats> = new_stats.iter().collect();
    order.sort_by_key(|s| s.class_id);
    if let Some(w) = order.windows(2).find(|w| w[0].class_id == w[1].class_id) {
        return Err(Error::Assignment(format!("class {} appears twice in the task", w[0].class_id)));
    }
    if let Some(s) = order.iter().find(|s| table.contains(s.class_id)) {
        return Err(Error::Assignment(format!("class {} is already assigned", s.class_id)));
    }

    let mut out = table.clone();
    let mut stats_of: BTreeMap<u32, &ClassStats> = BTreeMap::new();
    for (_, members) in table.groups() {
        for &c in members {
            stats_of.insert(c, lookup(existing_stats, c)?);
        }
    }

    let mut assigned = Vec::with_capacity(order.len());
    let mut leftovers: Vec<ClassStats> = Vec::new();
    for s in order {
        let mut best: Option<(GroupId, f64)> = None;
        for (g, members) in out.groups() {
            let mut total = 0.0;
            let mut eligible = true;
            for m in members {
                let other = stats_of[m];
                if !are_dissimilar(s, other, metric)? {
                    eligible = false;
                    break;
                }
                total += metric.between(&s.centroid, &other.centroid);
            }
            if !eligible {
                continue;
            }
            let mean = total / members.len() as f64;
            let better = match (best, policy) {
                (None, _) => true,
                (Some((_, b)), GroupChoicePolicy::MaxMeanDistance) => mean > b,
                (Some((_, b)), GroupChoicePolicy::MinMeanDistance) => mean < b,
            };
            if better {
                best = Some((g, mean));
            }
        }
        match best {
            Some((g, _)) => {
                out.insert(s.class_id, g)?;
                stats_of.insert(s.class_id, s);
                assigned.push((s.class_id, g));
            }
            None => leftovers.push(s.clone()),
        }
    }

    if !leftovers.is_empty() {
        let graph = build_simgraph(&leftovers, metric)?;
        let coloring = welsh_powell(&graph);
        let base = out.next_group_id;
        for (color, members) in coloring.classes().into_iter().enumerate() {
            let g = base + color as GroupId;
            for c in members {
                out.insert(c, g)?;
                assigned.push((c, g));
            }
        }
    }
    assigned.sort_unstable();
    Ok((out, assigned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gaussian_cluster;
    use crate::grouping::compute_class_stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stat(id: u32, centroid: Vec<f64>, r: f64) -> ClassStats {
        ClassStats { class_id: id, centroid, mean_radius: r, count: 10 }
    }

    fn sample_stats(id: u32, center: &[f64], rng: &mut ChaCha8Rng) -> ClassStats {
        let rows: Vec<Vec<f64>> = gaussian_cluster(id, center, 1.0, 200, rng).iter().map(|r| r.to_f64()).collect();
        compute_class_stats(id, &rows, Distance::Euclidean).unwrap()
    }

    #[test]
    fn first_task_all_dissimilar_single_group() {
        let new = [stat(0, vec![0.0], 0.1), stat(1, vec![5.0], 0.1), stat(2, vec![10.0], 0.1)];
        let (t, a) = assign_task_classes(
            &GroupTable::new(),
            &BTreeMap::new(),
            &new,
            GroupChoicePolicy::default(),
            Distance::Euclidean,
        )
        .unwrap();
        assert_eq!(t.num_groups(), 1);
        assert_eq!(a, vec![(0, 0), (1, 0), (2, 0)]);
    }

    #[test]
    fn dissimilar_newcomer_joins_existing_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_stats(0, &[0.0; 8], &mut rng);
        let mut far = [0.0; 8];
        far[0] = 20.0;
        let x = sample_stats(1, &far, &mut rng);
        assert!(are_dissimilar(&a, &x, Distance::Euclidean).unwrap());
        let mut table = GroupTable::new();
        table.insert(0, 0).unwrap();
        let existing = BTreeMap::from([(0, a)]);
        let (t, assigned) =
            assign_task_classes(&table, &existing, &[x], GroupChoicePolicy::default(), Distance::Euclidean).unwrap();
        assert_eq!(assigned, vec![(1, 0)]);
        assert_eq!(t.num_groups(), 1);
    }

    #[test]
    fn mutually_similar_newcomers_get_singleton_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let center = [3.0; 8];
        let existing = BTreeMap::from([(0, sample_stats(0, &center, &mut rng))]);
        let mut table = GroupTable::new();
        table.insert(0, 0).unwrap();
        let new: Vec<_> = (1..4).map(|id| sample_stats(id, &center, &mut rng)).collect();
        let (t, assigned) =
            assign_task_classes(&table, &existing, &new, GroupChoicePolicy::default(), Distance::Euclidean).unwrap();
        assert_eq!(t.num_groups(), 4);
        assert_eq!(assigned, vec![(1, 1), (2, 2), (3, 3)]);
        for g in 1..4 {
            assert_eq!(t.members(g).len(), 1);
        }
    }

    #[test]
    fn earlier_assignments_constrain_later_ones() {
        // 1 and 2 are similar to each other, both dissimilar to 0
        let mut table = GroupTable::new();
        table.insert(0, 0).unwrap();
        let existing = BTreeMap::from([(0, stat(0, vec![0.0], 0.1))]);
        let new = [stat(1, vec![5.0], 0.1), stat(2, vec![5.05], 0.1)];
        let (t, assigned) =
            assign_task_classes(&table, &existing, &new, GroupChoicePolicy::default(), Distance::Euclidean).unwrap();
        assert_eq!(assigned, vec![(1, 0), (2, 1)]);
        assert_eq!(t.num_groups(), 2);
    }

    #[test]
    fn policy_selects_by_mean_distance() {
        let mut table = GroupTable::new();
        table.insert(0, 0).unwrap();
        table.insert(1, 1).unwrap();
        let existing = BTreeMap::from([(0, stat(0, vec![0.0], 0.1)), (1, stat(1, vec![10.0], 0.1))]);
        let new = [stat(2, vec![3.0], 0.1)];
        let (_, far) =
            assign_task_classes(&table, &existing, &new, GroupChoicePolicy::MaxMeanDistance, Distance::Euclidean)
                .unwrap();
        assert_eq!(far, vec![(2, 1)]);
        let (_, near) =
            assign_task_classes(&table, &existing, &new, GroupChoicePolicy::MinMeanDistance, Distance::Euclidean)
                .unwrap();
        assert_eq!(near, vec![(2, 0)]);
    }

    #[test]
    fn rejects_known_class() {
        let mut table = GroupTable::new();
        table.insert(0, 0).unwrap();
        let existing = BTreeMap::from([(0, stat(0, vec![0.0], 0.1))]);
        let err = assign_task_classes(
            &table,
            &existing,
            &[stat(0, vec![1.0], 0.1)],
            GroupChoicePolicy::default(),
            Distance::Euclidean,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Assignment(_)));
    }

    #[test]
    fn invariant_holds_over_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for round in 0..20 {
            let mut table = GroupTable::new();
            let mut all: BTreeMap<u32, ClassStats> = BTreeMap::new();
            let mut next = 0u32;
            for _task in 0..6 {
                let new: Vec<ClassStats> = (0..rng.random_range(1..8))
                    .map(|_| {
                        next += 1;
                        stat(
                            next,
                            vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)],
                            rng.random_range(0.1..3.0),
                        )
                    })
                    .collect();
                let policy = if round % 2 == 0 {
                    GroupChoicePolicy::MaxMeanDistance
                } else {
                    GroupChoicePolicy::MinMeanDistance
                };
                let (t, _) = assign_task_classes(&table, &all, &new, policy, Distance::Euclidean).unwrap();
                table = t;
                for s in new {
                    all.insert(s.class_id, s);
                }
                table.check_consistency().unwrap();
                assert!(table.dissimilarity_violations(&all, Distance::Euclidean).unwrap().is_empty());
            }
            assert_eq!(table.num_classes(), all.len());
        }
    }
}
