//! Task streams: manifests, per-task embedding files and a synthetic
//! Gaussian-cluster generator for backbone-free experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_embedding_file, write_embedding_file};

/// One backbone output with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub class_id: u32,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: usize,
    pub classes: Vec<u32>,
    pub file: PathBuf,
    /// Held-out split used for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub dim: usize,
    pub seed: u64,
    pub tasks: Vec<TaskEntry>,
    /// Directory relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Train/test records of one task, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub id: usize,
    pub classes: Vec<u32>,
    pub train: Vec<EmbeddingRecord>,
    pub test: Vec<EmbeddingRecord>,
}

impl TaskManifest {
    /// Checks id contiguity and class disjointness across tasks.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Manifest("dim must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Manifest("manifest has no tasks".into()));
        }
        let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
        for (pos, task) in self.tasks.iter().enumerate() {
            if task.id != pos {
                return Err(Error::Manifest(format!(
                    "task ids must be contiguous from 0: position {pos} has id {}",
                    task.id
                )));
            }
            if task.classes.is_empty() {
                return Err(Error::Manifest(format!("task {} has no classes", task.id)));
            }
            for &c in &task.classes {
                if let Some(prev) = owner.insert(c, task.id) {
                    return Err(Error::Manifest(format!(
                        "class {c} appears in task {prev} and task {}; task class sets must be disjoint",
                        task.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reads one task's files and checks every record belongs to the task.
    pub fn load_task(&self, index: usize) -> Result<TaskData> {
        let entry = self.tasks.get(index).ok_or_else(|| Error::arg(format!("task {index} out of range")))?;
        let classes: BTreeSet<u32> = entry.classes.iter().copied().collect();
        let read = |p: &Path| -> Result<Vec<EmbeddingRecord>> {
            let path = self.resolve(p);
            let (dim, records) = read_embedding_file(&path)?;
            if dim != self.dim {
                return Err(Error::Manifest(format!(
                    "{} has dim {dim}, manifest declares {}",
                    path.display(),
                    self.dim
                )));
            }
            if let Some(r) = records.iter().find(|r| !classes.contains(&r.class_id)) {
                return Err(Error::Manifest(format!(
                    "{} holds class {} which is not in task {}'s class list",
                    path.display(),
                    r.class_id,
                    entry.id
                )));
            }
            Ok(records)
        };
        let train = read(&entry.file)?;
        let test = match &entry.test_file {
            Some(p) => read(p)?,
            None => Vec::new(),
        };
        Ok(TaskData { id: entry.id, classes: entry.classes.clone(), train, test })
    }

    pub fn load_all(&self) -> Result<Vec<TaskData>> {
        (0..self.tasks.len()).map(|t| self.load_task(t)).collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<TaskManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: TaskManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    for task in &manifest.tasks {
        for p in std::iter::once(&task.file).chain(task.test_file.as_ref()) {
            let full = manifest.resolve(p);
            if !full.is_file() {
                return Err(Error::io(
                    full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "embedding file missing"),
                ));
            }
        }
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &TaskManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_samples: usize,
    /// Held-out samples per class.
    pub test_samples: usize,
    pub num_tasks: usize,
    /// Radius of the sphere cluster centers are drawn from.
    pub center_scale: f64,
    pub within_std: f64,
    /// Pairs `(a, b)`: b's center is a's center moved by half of `within_std`.
    pub similarity_pairs: Vec<(u32, u32)>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 100,
            dim: 32,
            per_class_samples: 100,
            test_samples: 50,
            num_tasks: 10,
            center_scale: 10.0,
            within_std: 1.0,
            similarity_pairs: Vec::new(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::arg("num_classes must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::arg("dim must be at least 1"));
        }
        if self.per_class_samples == 0 {
            return Err(Error::arg("per_class_samples must be at least 1"));
        }
        if self.num_tasks == 0 || self.num_tasks > self.num_classes {
            return Err(Error::arg(format!("num_tasks must be in 1..={}, got {}", self.num_classes, self.num_tasks)));
        }
        if !(self.within_std > 0.0 && self.within_std.is_finite()) {
            return Err(Error::arg("within_std must be positive"));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::arg("center_scale must be positive"));
        }
        for &(a, b) in &self.similarity_pairs {
            if a == b || a as usize >= self.num_classes || b as usize >= self.num_classes {
                return Err(Error::arg(format!("invalid similarity pair ({a}, {b})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dim: usize,
    pub tasks: Vec<TaskData>,
    /// Cluster center per class id.
    pub centers: Vec<Vec<f64>>,
}

/// Uniform point on the sphere of the given radius.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

/// Isotropic Gaussian samples around `center`.
pub fn gaussian_cluster<R: Rng + ?Sized>(
    class_id: u32,
    center: &[f64],
    std: f64,
    count: usize,
    rng: &mut R,
) -> Vec<EmbeddingRecord> {
    (0..count)
        .map(|_| EmbeddingRecord {
            class_id,
            vector: center.iter().map(|&c| (c + std * rng.sample::<f64, _>(StandardNormal)) as f32).collect(),
        })
        .collect()
}

/// Class ids split into contiguous, near-equal task chunks.
pub fn split_into_tasks(classes: &[u32], num_tasks: usize) -> Vec<Vec<u32>> {
    let base = classes.len() / num_tasks;
    let extra = classes.len() % num_tasks;
    let mut out = Vec::with_capacity(num_tasks);
    let mut start = 0;
    for t in 0..num_tasks {
        let len = base + usize::from(t < extra);
        out.push(classes[start..start + len].to_vec());
        start += len;
    }
    out
}

/// In-memory synthetic stream. Deterministic per `spec.seed`.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<Vec<f64>> =
        (0..spec.num_classes).map(|_| sample_sphere(spec.dim, spec.center_scale, &mut rng)).collect();
    for &(a, b) in &spec.similarity_pairs {
        let offset = sample_sphere(spec.dim, 0.5 * spec.within_std, &mut rng);
        centers[b as usize] = centers[a as usize].iter().zip(&offset).map(|(c, o)| c + o).collect();
    }
    let mut train: BTreeMap<u32, Vec<EmbeddingRecord>> = BTreeMap::new();
    let mut test: BTreeMap<u32, Vec<EmbeddingRecord>> = BTreeMap::new();
    for (c, center) in centers.iter().enumerate() {
        let c = c as u32;
        train.insert(c, gaussian_cluster(c, center, spec.within_std, spec.per_class_samples, &mut rng));
        test.insert(c, gaussian_cluster(c, center, spec.within_std, spec.test_samples, &mut rng));
    }
    let ids: Vec<u32> = (0..spec.num_classes as u32).collect();
    let tasks = split_into_tasks(&ids, spec.num_tasks)
        .into_iter()
        .enumerate()
        .map(|(id, classes)| TaskData {
            id,
            train: classes.iter().flat_map(|c| train[c].iter().cloned()).collect(),
            test: classes.iter().flat_map(|c| test[c].iter().cloned()).collect(),
            classes,
        })
        .collect();
    Ok(SyntheticData { dim: spec.dim, tasks, centers })
}

/// Writes a synthetic stream as GDE1 files plus `manifest.json` into `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<(TaskManifest, SyntheticData)> {
    let data = synthesize(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = write_stream(out_dir, data.dim, spec.seed, &data.tasks)?;
    Ok((manifest, data))
}

/// Writes task data to `dir` and returns the manifest that indexes it.
pub fn write_stream(dir: &Path, dim: usize, seed: u64, tasks: &[TaskData]) -> Result<TaskManifest> {
    let mut entries = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let file = PathBuf::from(format!("task_{t}.train.gde"));
        write_embedding_file(&dir.join(&file), dim, &task.train)?;
        let test_file = if task.test.is_empty() {
            None
        } else {
            let f = PathBuf::from(format!("task_{t}.test.gde"));
            write_embedding_file(&dir.join(&f), dim, &task.test)?;
            Some(f)
        };
        entries.push(TaskEntry { id: t, classes: task.classes.clone(), file, test_file });
    }
    let manifest = TaskManifest { dim, seed, tasks: entries, base_dir: dir.to_path_buf() };
    manifest.validate()?;
    save_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reassigns classes to tasks in a seeded random order, keeping task sizes.
pub fn shuffle_class_order(tasks: &[TaskData], seed: u64) -> Vec<TaskData> {
    let mut classes: Vec<u32> = tasks.iter().flat_map(|t| t.classes.iter().copied()).collect();
    classes.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    classes.shuffle(&mut rng);

    let mut train: BTreeMap<u32, Vec<EmbeddingRecord>> = BTreeMap::new();
    let mut test: BTreeMap<u32, Vec<EmbeddingRecord>> = BTreeMap::new();
    for t in tasks {
        for r in &t.train {
            train.entry(r.class_id).or_default().push(r.clone());
        }
        for r in &t.test {
            test.entry(r.class_id).or_default().push(r.clone());
        }
    }
    let mut out = Vec::with_capacity(tasks.len());
    let mut start = 0;
    for (id, t) in tasks.iter().enumerate() {
        let chunk = classes[start..start + t.classes.len()].to_vec();
        start += t.classes.len();
        out.push(TaskData {
            id,
            train: chunk.iter().flat_map(|c| train.remove(c).unwrap_or_default()).collect(),
            test: chunk.iter().flat_map(|c| test.remove(c).unwrap_or_default()).collect(),
            classes: chunk,
        });
    }
    out
}
