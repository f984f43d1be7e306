//! The continual learner: projection, grouping, per-group ridge models and
//! the group identifier, updated one task at a time.

mod persist;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingRecord;
use crate::distance::Distance;
use crate::error::{check_dim, Error, Result};
use crate::groupid::{rebuild_meta_dataset, ClassRegistry, GroupIdentifier, GroupPredictor, Vote};
use crate::grouping::{assign_task_classes, compute_class_stats, ClassStats, GroupChoicePolicy, GroupId, GroupTable};
use crate::projection::{Activation, RandomProjection};
use crate::reservoir::Reservoir;
use crate::ridge::{default_lambda_pool, select_lambda, select_lambda_held_out, CalibrationSet, GroupModel};

pub use persist::{STATE_FILE, STATE_VERSION};

/// Space the class statistics used for grouping live in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidSpace {
    /// Random-feature space (what the classifiers see).
    #[default]
    Projected,
    /// Backbone embedding space.
    Raw,
}

/// How the calibration residual for λ selection is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Calibration rows are removed from the statistics before fitting.
    #[default]
    HeldOut,
    /// Calibration rows stay in the fit.
    InSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GddsgConfig {
    pub proj_dim: usize,
    pub seed: u64,
    pub activation: Activation,
    pub distance: Distance,
    pub policy: GroupChoicePolicy,
    pub lambda_pool: Vec<f64>,
    pub lambda_selection: LambdaSelection,
    pub reservoir_cap: usize,
    pub k_neighbors: usize,
    pub vote: Vote,
    pub centroid_space: CentroidSpace,
    /// With grouping off every class lands in group 0 (single-model ablation).
    pub grouping_enabled: bool,
    /// Predict by argmax over all groups' scores instead of routing first.
    pub joint_argmax: bool,
    /// Worker threads for per-group work; 0 uses rayon's default.
    pub threads: usize,
}

impl Default for GddsgConfig {
    fn default() -> Self {
        GddsgConfig {
            proj_dim: 1000,
            seed: 0,
            activation: Activation::Relu,
            distance: Distance::Euclidean,
            policy: GroupChoicePolicy::MaxMeanDistance,
            lambda_pool: default_lambda_pool(),
            lambda_selection: LambdaSelection::HeldOut,
            reservoir_cap: 20,
            k_neighbors: 11,
            vote: Vote::DistanceWeighted,
            centroid_space: CentroidSpace::Projected,
            grouping_enabled: true,
            joint_argmax: false,
            threads: 1,
        }
    }
}

impl GddsgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proj_dim == 0 {
            return Err(Error::arg("proj_dim must be positive"));
        }
        if self.lambda_pool.is_empty() {
            return Err(Error::arg("lambda pool is empty"));
        }
        if let Some(l) = self.lambda_pool.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::arg(format!("lambda pool entry {l} is not positive and finite")));
        }
        if self.reservoir_cap == 0 {
            return Err(Error::arg("reservoir capacity must be positive"));
        }
        if self.k_neighbors == 0 {
            return Err(Error::arg("k_neighbors must be positive"));
        }
        Ok(())
    }
}

/// What one call to [`GddsgState::train_task`] did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: usize,
    pub assignments: Vec<(u32, GroupId)>,
    pub new_groups: Vec<GroupId>,
    pub lambdas: BTreeMap<GroupId, f64>,
    pub num_groups: usize,
}

#[derive(Debug, Clone)]
pub struct GddsgState {
    config: GddsgConfig,
    projection: RandomProjection,
    table: GroupTable,
    class_stats: BTreeMap<u32, ClassStats>,
    registry: ClassRegistry,
    models: BTreeMap<GroupId, GroupModel>,
    reservoirs: BTreeMap<u32, Reservoir>,
    identifier: Option<GroupIdentifier>,
    tasks_seen: usize,
}

fn to_matrix(records: &[EmbeddingRecord], dim: usize) -> Result<DMatrix<f64>> {
    let mut data = Vec::with_capacity(records.len() * dim);
    for r in records {
        check_dim(dim, r.vector.len())?;
        data.extend(r.vector.iter().map(|&v| v as f64));
    }
    Ok(DMatrix::from_row_slice(records.len(), dim, &data))
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| m.row(i).iter().copied().collect()).collect()
}

/// Index of the largest score; ties keep the earliest.
fn argmax(scores: impl IntoIterator<Item = (u32, f64)>) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (c, s) in scores {
        match best {
            Some((bc, bs)) if s < bs || (s == bs && c > bc) => {}
            _ => best = Some((c, s)),
        }
    }
    best.map(|b| b.0)
}

impl GddsgState {
    /// Fresh learner for backbone embeddings of width `input_dim`.
    pub fn new(config: GddsgConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let projection = RandomProjection::new(input_dim, config.proj_dim, config.seed, config.activation)?;
        Ok(GddsgState {
            config,
            projection,
            table: GroupTable::new(),
            class_stats: BTreeMap::new(),
            registry: ClassRegistry::new(),
            models: BTreeMap::new(),
            reservoirs: BTreeMap::new(),
            identifier: None,
            tasks_seen: 0,
        })
    }

    pub fn config(&self) -> &GddsgConfig {
        &self.config
    }

    pub fn projection(&self) -> &RandomProjection {
        &self.projection
    }

    pub fn table(&self) -> &GroupTable {
        &self.table
    }

    pub fn class_stats(&self) -> &BTreeMap<u32, ClassStats> {
        &self.class_stats
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn models(&self) -> &BTreeMap<GroupId, GroupModel> {
        &self.models
    }

    pub fn reservoirs(&self) -> &BTreeMap<u32, Reservoir> {
        &self.reservoirs
    }

    pub fn identifier(&self) -> Option<&GroupIdentifier> {
        self.identifier.as_ref()
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.table.num_classes()
    }

    fn check_task(&self, classes: &[u32], records: &[EmbeddingRecord]) -> Result<()> {
        if classes.is_empty() {
            return Err(Error::arg("task has no classes"));
        }
        let set: BTreeSet<u32> = classes.iter().copied().collect();
        if set.len() != classes.len() {
            return Err(Error::Assignment("task lists a class twice".into()));
        }
        if let Some(c) = classes.iter().find(|c| self.table.contains(**c)) {
            return Err(Error::Assignment(format!("class {c} was learned in an earlier task")));
        }
        let mut present = BTreeSet::new();
        for r in records {
            if !set.contains(&r.class_id) {
                return Err(Error::Assignment(format!(
                    "record of class {} is not in the task's class list",
                    r.class_id
                )));
            }
            check_dim(self.input_dim(), r.vector.len())?;
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite embedding for class {}", r.class_id)));
            }
            present.insert(r.class_id);
        }
        if let Some(c) = set.difference(&present).next() {
            return Err(Error::arg(format!("class {c} has no training samples")));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))
    }

    /// Learns one task. Input problems are reported before any state changes.
    pub fn train_task(&mut self, classes: &[u32], records: &[EmbeddingRecord]) -> Result<TaskReport> {
        self.check_task(classes, records)?;
        let raw = to_matrix(records, self.input_dim())?;
        let h = self.projection.expand_batch(&raw)?;
        let labels: Vec<u32> = records.iter().map(|r| r.class_id).collect();

        let mut sorted: Vec<u32> = classes.to_vec();
        sorted.sort_unstable();
        let mut rows_by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            rows_by_class.entry(c).or_default().push(i);
        }

        let metric = self.config.distance;
        let mut new_stats = Vec::with_capacity(sorted.len());
        let mut projected_centroids = BTreeMap::new();
        for &c in &sorted {
            let idx = &rows_by_class[&c];
            let proj = compute_class_stats(c, &rows_of(&h, idx), metric)?;
            let stats = match self.config.centroid_space {
                CentroidSpace::Projected => proj.clone(),
                CentroidSpace::Raw => compute_class_stats(c, &rows_of(&raw, idx), metric)?,
            };
            projected_centroids.insert(c, proj.centroid);
            new_stats.push(stats);
        }

        let (table, assignments) = if self.config.grouping_enabled {
            assign_task_classes(&self.table, &self.class_stats, &new_stats, self.config.policy, metric)?
        } else {
            let mut t = self.table.clone();
            for &c in &sorted {
                t.insert(c, 0)?;
            }
            (t, sorted.iter().map(|&c| (c, 0)).collect())
        };
        let affected: BTreeSet<GroupId> = assignments.iter().map(|&(_, g)| g).collect();
        let new_groups: Vec<GroupId> = affected.iter().copied().filter(|g| !self.models.contains_key(g)).collect();

        let mut reservoirs = BTreeMap::new();
        for &c in &sorted {
            let rows = rows_of(&h, &rows_by_class[&c]);
            reservoirs.insert(c, Reservoir::sample_class(self.config.reservoir_cap, &rows, self.config.seed, c)?);
        }

        // updated copies of the affected models; committed only if every group succeeds
        let work: Vec<(GroupId, GroupModel, Vec<usize>)> = affected
            .iter()
            .map(|&g| {
                let model = match self.models.get(&g) {
                    Some(m) => m.clone(),
                    None => GroupModel::new(g, self.config.proj_dim, self.config.lambda_pool[0])?,
                };
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| table.group_of(labels[i]) == Some(g)).collect();
                Ok((g, model, idx))
            })
            .collect::<Result<_>>()?;

        let all_reservoirs: BTreeMap<u32, &Reservoir> =
            self.reservoirs.iter().chain(reservoirs.iter()).map(|(&c, r)| (c, r)).collect();
        let config = &self.config;
        let fit = |(g, mut model, idx): (GroupId, GroupModel, Vec<usize>)| -> Result<(GroupId, GroupModel)> {
            let feats = h.select_rows(&idx);
            let labs: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
            model.update(&feats, &labs, table.members(g))?;
            let calib = calibration_set(table.members(g), &all_reservoirs, config.proj_dim);
            let lambda = if config.lambda_pool.len() == 1 {
                config.lambda_pool[0]
            } else {
                match config.lambda_selection {
                    LambdaSelection::HeldOut => select_lambda_held_out(&model, &calib, &config.lambda_pool)?,
                    LambdaSelection::InSample => select_lambda(&model, &calib, &config.lambda_pool)?,
                }
            };
            model.set_lambda(lambda)?;
            model.solve()?;
            Ok((g, model))
        };
        let fitted: Vec<(GroupId, GroupModel)> = if self.config.threads == 1 || work.len() == 1 {
            work.into_iter().map(fit).collect::<Result<_>>()?
        } else {
            self.pool()?.install(|| work.into_par_iter().map(fit).collect::<Result<_>>())?
        };

        let mut registry = self.registry.clone();
        for &c in &sorted {
            registry.push(c, projected_centroids.remove(&c).unwrap())?;
        }
        let mut merged_reservoirs = self.reservoirs.clone();
        merged_reservoirs.extend(reservoirs);
        let identifier = build_identifier(&merged_reservoirs, &registry, &table, &self.config)?;

        let lambdas = fitted.iter().map(|(g, m)| (*g, m.lambda())).collect();
        self.models.extend(fitted);
        self.table = table;
        for s in new_stats {
            self.class_stats.insert(s.class_id, s);
        }
        self.registry = registry;
        self.reservoirs = merged_reservoirs;
        self.identifier = Some(identifier);
        let task = self.tasks_seen;
        self.tasks_seen += 1;
        log::info!(
            "task {task}: {} classes, {} groups ({} new)",
            sorted.len(),
            self.table.num_groups(),
            new_groups.len()
        );
        Ok(TaskReport { task, assignments, new_groups, lambdas, num_groups: self.table.num_groups() })
    }

    /// Routes a projected sample to a group.
    pub fn predict_group_projected(&self, h: &[f64]) -> Result<GroupId> {
        let ident = self.identifier.as_ref().ok_or_else(|| Error::State("no task has been learned yet".into()))?;
        let rho = crate::groupid::meta_feature(h, &self.registry, self.config.distance)?;
        ident.predict_group(&rho)
    }

    /// Class prediction for one projected sample.
    pub fn predict_projected(&self, h: &[f64]) -> Result<u32> {
        if self.config.joint_argmax {
            let mut scores = Vec::new();
            for m in self.models.values() {
                scores.extend(m.score(h)?);
            }
            return argmax(scores).ok_or_else(|| Error::State("no classes learned".into()));
        }
        let g = self.predict_group_projected(h)?;
        let model = self
            .models
            .get(&g)
            .ok_or_else(|| Error::Consistency(format!("identifier chose group {g}, which has no model")))?;
        argmax(model.score(h)?).ok_or_else(|| Error::Consistency(format!("group {g} has no classes")))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        self.predict_projected(&self.projection.expand(x)?)
    }

    /// Predictions for many records; expansion is batched.
    pub fn predict_records(&self, records: &[EmbeddingRecord]) -> Result<Vec<u32>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let h = self.projection.expand_batch(&to_matrix(records, self.input_dim())?)?;
        let rows: Vec<Vec<f64>> = h.row_iter().map(|r| r.iter().copied().collect()).collect();
        if self.config.threads == 1 {
            rows.iter().map(|r| self.predict_projected(r)).collect()
        } else {
            self.pool()?.install(|| rows.par_iter().map(|r| self.predict_projected(r)).collect())
        }
    }

    /// Group routing for many records.
    pub fn predict_groups(&self, records: &[EmbeddingRecord]) -> Result<Vec<GroupId>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let h = self.projection.expand_batch(&to_matrix(records, self.input_dim())?)?;
        h.row_iter().map(|r| self.predict_group_projected(&r.iter().copied().collect::<Vec<_>>())).collect()
    }

    /// Checks the invariants tying the components together.
    pub fn check_consistency(&self) -> Result<()> {
        self.table.check_consistency()?;
        let learned: BTreeSet<u32> = self.class_stats.keys().copied().collect();
        let grouped: BTreeSet<u32> = self.table.groups().flat_map(|(_, m)| m.iter().copied()).collect();
        let registered: BTreeSet<u32> = self.registry.class_ids().collect();
        let reserved: BTreeSet<u32> = self.reservoirs.keys().copied().collect();
        if learned != grouped || learned != registered || learned != reserved {
            return Err(Error::Consistency("class sets of stats, groups, registry and reservoirs differ".into()));
        }
        for (g, members) in self.table.groups() {
            let model = self.models.get(&g).ok_or_else(|| Error::Consistency(format!("group {g} has no model")))?;
            let mut cols = model.columns().to_vec();
            cols.sort_unstable();
            if cols != members {
                return Err(Error::Consistency(format!("group {g} model columns differ from its members")));
            }
        }
        if self.models.len() != self.table.num_groups() {
            return Err(Error::Consistency("model count differs from group count".into()));
        }
        Ok(())
    }
}

/// Reservoir samples of `members`, stacked, as a calibration set.
fn calibration_set(members: &[u32], reservoirs: &BTreeMap<u32, &Reservoir>, dim: usize) -> CalibrationSet {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for c in members {
        if let Some(r) = reservoirs.get(c) {
            for s in r.samples() {
                data.extend_from_slice(s);
                labels.push(*c);
            }
        }
    }
    CalibrationSet { features: DMatrix::from_row_slice(labels.len(), dim, &data), labels }
}

/// k is clamped to the stored rows and kept odd.
pub(crate) fn build_identifier(
    reservoirs: &BTreeMap<u32, Reservoir>,
    registry: &ClassRegistry,
    table: &GroupTable,
    config: &GddsgConfig,
) -> Result<GroupIdentifier> {
    let meta = rebuild_meta_dataset(reservoirs, registry, table, config.distance)?;
    let mut k = config.k_neighbors.min(meta.len()).max(1);
    if k % 2 == 0 {
        k -= 1;
    }
    GroupIdentifier::new(meta, k.max(1), config.vote)
}
