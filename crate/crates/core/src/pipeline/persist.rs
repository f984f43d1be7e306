//! Saving and loading learner state: a JSON index plus GDM1 matrix files.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{build_identifier, GddsgConfig, GddsgState};
use crate::error::{check_dim, Error, Result};
use crate::format::{read_matrix, write_matrix};
use crate::groupid::{ClassRegistry, Vote};
use crate::grouping::{ClassStats, GroupId, GroupTable};
use crate::projection::RandomProjection;
use crate::reservoir::Reservoir;
use crate::ridge::GroupModel;

pub const STATE_FILE: &str = "state.json";
pub const STATE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    class_id: u32,
    mean_radius: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct GroupEntry {
    group_id: GroupId,
    lambda: f64,
    columns: Vec<u32>,
    sample_count: usize,
    has_theta: bool,
}

#[derive(Serialize, Deserialize)]
struct ReservoirEntry {
    class_id: u32,
    cap: usize,
    seen: u64,
}

#[derive(Serialize, Deserialize)]
struct IdentifierEntry {
    k: usize,
    vote: Vote,
    rows: usize,
}

#[derive(Serialize, Deserialize)]
struct StateIndex {
    version: u32,
    config: GddsgConfig,
    input_dim: usize,
    tasks_seen: usize,
    table: GroupTable,
    classes: Vec<ClassEntry>,
    registry: Vec<u32>,
    groups: Vec<GroupEntry>,
    reservoirs: Vec<ReservoirEntry>,
    identifier: Option<IdentifierEntry>,
}

fn stack(rows: impl IntoIterator<Item = Vec<f64>>, dim: usize) -> DMatrix<f64> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        data.extend(r);
        n += 1;
    }
    DMatrix::from_row_slice(n, dim, &data)
}

fn unstack(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn stats_dim(stats: &BTreeMap<u32, ClassStats>) -> usize {
    stats.values().next().map_or(0, ClassStats::dim)
}

impl GddsgState {
    /// Writes the state into `dir`, creating it if needed. The JSON index is
    /// written last so a partially written directory fails to load.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&dir.join("projection_w.gdm"), self.projection.weights())?;

        let sdim = stats_dim(&self.class_stats);
        write_matrix(
            &dir.join("class_centroids.gdm"),
            &stack(self.class_stats.values().map(|s| s.centroid.clone()), sdim),
        )?;
        write_matrix(
            &dir.join("registry_centroids.gdm"),
            &stack(self.registry.entries().iter().map(|(_, c)| c.clone()), self.config.proj_dim),
        )?;
        for (g, m) in &self.models {
            write_matrix(&dir.join(format!("group_{g}_gram.gdm")), m.gram())?;
            write_matrix(&dir.join(format!("group_{g}_targets.gdm")), m.targets())?;
            if let Some(theta) = m.theta() {
                write_matrix(&dir.join(format!("group_{g}_theta.gdm")), theta)?;
            }
        }
        for (c, r) in &self.reservoirs {
            write_matrix(&dir.join(format!("reservoir_{c}.gdm")), &stack(r.samples().to_vec(), self.config.proj_dim))?;
        }

        let index = StateIndex {
            version: STATE_VERSION,
            config: self.config.clone(),
            input_dim: self.input_dim(),
            tasks_seen: self.tasks_seen,
            table: self.table.clone(),
            classes: self
                .class_stats
                .values()
                .map(|s| ClassEntry { class_id: s.class_id, mean_radius: s.mean_radius, count: s.count })
                .collect(),
            registry: self.registry.class_ids().collect(),
            groups: self
                .models
                .values()
                .map(|m| GroupEntry {
                    group_id: m.group_id(),
                    lambda: m.lambda(),
                    columns: m.columns().to_vec(),
                    sample_count: m.sample_count(),
                    has_theta: m.theta().is_some(),
                })
                .collect(),
            reservoirs: self
                .reservoirs
                .iter()
                .map(|(&class_id, r)| ReservoirEntry { class_id, cap: r.cap(), seen: r.seen() })
                .collect(),
            identifier: self.identifier.as_ref().map(|i| IdentifierEntry {
                k: i.k(),
                vote: i.vote(),
                rows: i.data().len(),
            }),
        };
        let path = dir.join(STATE_FILE);
        let text = serde_json::to_string_pretty(&index).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a state written by [`GddsgState::save`]. The group identifier is
    /// rebuilt from the reservoirs and checked against the saved summary.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(STATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: StateIndex = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if index.version != STATE_VERSION {
            return Err(Error::State(format!(
                "state version {} is not supported (expected {STATE_VERSION})",
                index.version
            )));
        }
        index.config.validate()?;
        let config = index.config;

        let w = read_matrix(&dir.join("projection_w.gdm"))?;
        check_dim(index.input_dim, w.nrows())?;
        check_dim(config.proj_dim, w.ncols())?;
        let projection = RandomProjection::from_weights(w, config.activation, config.seed)?;

        let centroids = unstack(&read_matrix(&dir.join("class_centroids.gdm"))?);
        check_dim(index.classes.len(), centroids.len())?;
        let class_stats: BTreeMap<u32, ClassStats> = index
            .classes
            .into_iter()
            .zip(centroids)
            .map(|(e, centroid)| {
                (e.class_id, ClassStats { class_id: e.class_id, centroid, mean_radius: e.mean_radius, count: e.count })
            })
            .collect();

        let reg_rows = unstack(&read_matrix(&dir.join("registry_centroids.gdm"))?);
        check_dim(index.registry.len(), reg_rows.len())?;
        let mut registry = ClassRegistry::new();
        for (c, row) in index.registry.into_iter().zip(reg_rows) {
            registry.push(c, row)?;
        }

        let mut models = BTreeMap::new();
        for g in index.groups {
            let gram = read_matrix(&dir.join(format!("group_{}_gram.gdm", g.group_id)))?;
            let targets = read_matrix(&dir.join(format!("group_{}_targets.gdm", g.group_id)))?;
            let theta = if g.has_theta {
                Some(read_matrix(&dir.join(format!("group_{}_theta.gdm", g.group_id)))?)
            } else {
                None
            };
            let model = GroupModel::from_parts(g.group_id, gram, targets, g.columns, g.sample_count, g.lambda, theta)?;
            models.insert(g.group_id, model);
        }

        let mut reservoirs = BTreeMap::new();
        for r in index.reservoirs {
            let m = read_matrix(&dir.join(format!("reservoir_{}.gdm", r.class_id)))?;
            if m.nrows() > 0 {
                check_dim(config.proj_dim, m.ncols())?;
            }
            reservoirs.insert(r.class_id, Reservoir::from_parts(r.cap, r.seen, unstack(&m)));
        }

        let identifier = match index.identifier {
            Some(saved) => {
                let rebuilt = build_identifier(&reservoirs, &registry, &index.table, &config)?;
                if rebuilt.k() != saved.k || rebuilt.vote() != saved.vote || rebuilt.data().len() != saved.rows {
                    return Err(Error::Consistency("rebuilt group identifier differs from the saved one".into()));
                }
                Some(rebuilt)
            }
            None => None,
        };

        let state = GddsgState {
            config,
            projection,
            table: index.table,
            class_stats,
            registry,
            models,
            reservoirs,
            identifier,
            tasks_seen: index.tasks_seen,
        };
        state.check_consistency()?;
        Ok(state)
    }
}
