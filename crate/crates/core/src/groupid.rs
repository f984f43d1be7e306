//! Group identification: distance-to-prototype meta-features and a k-NN
//! model over them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::Distance;
use crate::error::{check_dim, Error, Result};
use crate::grouping::{GroupId, GroupTable};
use crate::reservoir::Reservoir;

/// Class centroids in arrival order; fixes the coordinate order of meta-features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassRegistry {
    entries: Vec<(u32, Vec<f64>)>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, class_id: u32, centroid: Vec<f64>) -> Result<()> {
        if self.entries.iter().any(|(c, _)| *c == class_id) {
            return Err(Error::Assignment(format!("class {class_id} is already registered")));
        }
        if let Some((_, first)) = self.entries.first() {
            check_dim(first.len(), centroid.len())?;
        }
        self.entries.push((class_id, centroid));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|(c, _)| *c)
    }

    pub fn entries(&self) -> &[(u32, Vec<f64>)] {
        &self.entries
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.entries.iter().any(|(c, _)| *c == class_id)
    }
}

/// `[d(h, c_1), ..., d(h, c_k)]` in registry order.
pub fn meta_feature(h: &[f64], registry: &ClassRegistry, metric: Distance) -> Result<Vec<f64>> {
    let (_, first) = registry.entries.first().ok_or_else(|| Error::State("class registry is empty".into()))?;
    check_dim(first.len(), h.len())?;
    Ok(registry.entries.iter().map(|(_, c)| metric.between(h, c)).collect())
}

/// Meta-feature rows with their group labels, stored row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaDataset {
    dim: usize,
    values: Vec<f64>,
    labels: Vec<GroupId>,
}

impl MetaDataset {
    pub fn new(dim: usize) -> Self {
        MetaDataset { dim, values: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, rho: &[f64], label: GroupId) -> Result<()> {
        check_dim(self.dim, rho.len())?;
        self.values.extend_from_slice(rho);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[GroupId] {
        &self.labels
    }

    /// CSV with header `rho_0..rho_{k-1},group`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("rho_{i}")).collect();
        header.push("group".into());
        w.write_record(&header).map_err(to_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// One row per reservoir sample, labelled with its class's group.
pub fn rebuild_meta_dataset(
    reservoirs: &BTreeMap<u32, Reservoir>,
    registry: &ClassRegistry,
    table: &GroupTable,
    metric: Distance,
) -> Result<MetaDataset> {
    let mut data = MetaDataset::new(registry.len());
    for (&class_id, reservoir) in reservoirs {
        if !registry.contains(class_id) {
            return Err(Error::Consistency(format!("reservoir class {class_id} is not registered")));
        }
        let group = table
            .group_of(class_id)
            .ok_or_else(|| Error::Consistency(format!("reservoir class {class_id} has no group")))?;
        for h in reservoir.samples() {
            data.push(&meta_feature(h, registry, metric)?, group)?;
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Majority,
    #[default]
    DistanceWeighted,
}

/// Anything that maps a meta-feature vector to a group.
pub trait GroupPredictor {
    fn predict_group(&self, rho: &[f64]) -> Result<GroupId>;
}

/// k-nearest-neighbour vote in meta-feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIdentifier {
    data: MetaDataset,
    k: usize,
    vote: Vote,
    sole_label: Option<GroupId>,
}

impl GroupIdentifier {
    pub fn new(data: MetaDataset, k: usize, vote: Vote) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("k_neighbors must be positive"));
        }
        let sole_label = match data.labels.first() {
            Some(&first) if data.labels.iter().all(|&l| l == first) => Some(first),
            _ => None,
        };
        Ok(GroupIdentifier { data, k, vote, sole_label })
    }

    pub fn data(&self) -> &MetaDataset {
        &self.data
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vote(&self) -> Vote {
        self.vote
    }

    /// `k` nearest rows as (distance, label), ordered by distance then label.
    fn neighbors(&self, rho: &[f64]) -> Vec<(f64, GroupId)> {
        let mut all: Vec<(f64, GroupId)> = (0..self.data.len())
            .map(|i| (Distance::Euclidean.between(rho, self.data.row(i)), self.data.labels[i]))
            .collect();
        let cmp = |a: &(f64, GroupId), b: &(f64, GroupId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < all.len() {
            all.select_nth_unstable_by(self.k - 1, cmp);
            all.truncate(self.k);
        }
        all.sort_by(cmp);
        all
    }
}

impl GroupPredictor for GroupIdentifier {
    fn predict_group(&self, rho: &[f64]) -> Result<GroupId> {
        if self.data.is_empty() {
            return Err(Error::State("group identifier has no training rows".into()));
        }
        check_dim(self.data.dim, rho.len())?;
        if self.k > self.data.len() {
            return Err(Error::State(format!(
                "k = {} exceeds the {} stored meta-feature rows",
                self.k,
                self.data.len()
            )));
        }
        if let Some(label) = self.sole_label {
            return Ok(label);
        }
        let mut tally: BTreeMap<GroupId, f64> = BTreeMap::new();
        for (d, label) in self.neighbors(rho) {
            let w = match self.vote {
                Vote::Majority => 1.0,
                Vote::DistanceWeighted => 1.0 / (d + 1e-12),
            };
            *tally.entry(label).or_default() += w;
        }
        // BTreeMap iterates ascending, so the strict comparison keeps the smallest id on ties
        let mut best: Option<(GroupId, f64)> = None;
        for (g, w) in tally {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((g, w));
            }
        }
        Ok(best.unwrap().0)
    }
}

/// Free-function form of [`GroupPredictor::predict_group`].
pub fn predict_group(ident: &GroupIdentifier, rho: &[f64]) -> Result<GroupId> {
    ident.predict_group(rho)
}
