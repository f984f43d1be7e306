//! Class-incremental evaluation: final average accuracy, forgetting and the
//! order-robustness spread metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class test accuracy after every task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyLedger {
    acc: BTreeMap<u32, BTreeMap<usize, f64>>,
    first_task: BTreeMap<u32, usize>,
    class_counts_per_task: Vec<usize>,
}

impl AccuracyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_tasks(&self) -> usize {
        self.class_counts_per_task.len()
    }

    pub fn class_counts_per_task(&self) -> &[usize] {
        &self.class_counts_per_task
    }

    pub fn accuracy(&self, class_id: u32, task: usize) -> Option<f64> {
        self.acc.get(&class_id).and_then(|m| m.get(&task)).copied()
    }

    pub fn first_task(&self, class_id: u32) -> Option<usize> {
        self.first_task.get(&class_id).copied()
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.first_task.keys().copied()
    }

    /// Records accuracies measured right after task `task` (0-based, in
    /// order). `new_classes` are the classes that task introduced; `accs` must
    /// cover every class seen so far.
    pub fn record_task(&mut self, task: usize, new_classes: &[u32], accs: &BTreeMap<u32, f64>) -> Result<()> {
        if task != self.class_counts_per_task.len() {
            return Err(Error::State(format!(
                "expected results for task {}, got task {task}",
                self.class_counts_per_task.len()
            )));
        }
        for &c in new_classes {
            if self.first_task.contains_key(&c) {
                return Err(Error::Assignment(format!("class {c} was already introduced")));
            }
        }
        if let Some((c, a)) = accs.iter().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
            return Err(Error::arg(format!("accuracy {a} for class {c} is outside [0, 1]")));
        }
        let seen = |c: &u32| self.first_task.contains_key(c) || new_classes.contains(c);
        if let Some(c) = self.first_task.keys().chain(new_classes).find(|c| !accs.contains_key(c)) {
            return Err(Error::State(format!("no accuracy for seen class {c} after task {task}")));
        }
        if let Some(c) = accs.keys().find(|c| !seen(c)) {
            return Err(Error::State(format!("accuracy reported for unseen class {c}")));
        }
        for &c in new_classes {
            self.first_task.insert(c, task);
        }
        for (&c, &a) in accs {
            self.acc.entry(c).or_default().insert(task, a);
        }
        self.class_counts_per_task.push(new_classes.len());
        Ok(())
    }

    fn require(&self, tasks: usize) -> Result<usize> {
        if tasks == 0 || tasks > self.num_tasks() {
            return Err(Error::State(format!(
                "ledger holds {} tasks, metrics requested after {tasks}",
                self.num_tasks()
            )));
        }
        Ok(tasks - 1)
    }

    /// Mean accuracy (×100) over classes seen by the end of each task.
    pub fn per_task_average(&self) -> Vec<f64> {
        (0..self.num_tasks())
            .map(|t| {
                let vals: Vec<f64> = self.acc.values().filter_map(|m| m.get(&t)).copied().collect();
                100.0 * vals.iter().sum::<f64>() / vals.len().max(1) as f64
            })
            .collect()
    }
}

fn classes_through(ledger: &AccuracyLedger, last: usize) -> Vec<u32> {
    ledger.first_task.iter().filter(|(_, &t)| t <= last).map(|(&c, _)| c).collect()
}

/// A_N: mean over classes of the accuracy after task `tasks`, ×100; every
/// class weighs the same regardless of task size.
pub fn final_average_accuracy(ledger: &AccuracyLedger, tasks: usize) -> Result<f64> {
    let last = ledger.require(tasks)?;
    let classes = classes_through(ledger, last);
    let mut total = 0.0;
    for &c in &classes {
        total += ledger
            .accuracy(c, last)
            .ok_or_else(|| Error::State(format!("class {c} has no accuracy after task {last}")))?;
    }
    Ok(100.0 * total / classes.len() as f64)
}

/// F_N: mean over classes of (accuracy after its first task − final accuracy), ×100.
///
/// Reported as a positive drop, so lower is better.
pub fn forgetting(ledger: &AccuracyLedger, tasks: usize) -> Result<f64> {
    let last = ledger.require(tasks)?;
    let classes = classes_through(ledger, last);
    let mut total = 0.0;
    for &c in &classes {
        let t0 = ledger.first_task[&c];
        let first = ledger.accuracy(c, t0);
        let fin = ledger.accuracy(c, last);
        match (first, fin) {
            (Some(a0), Some(at)) => total += a0 - at,
            _ => return Err(Error::State(format!("class {c} is missing accuracies"))),
        }
    }
    Ok(100.0 * total / classes.len() as f64)
}

/// Average-accuracy curves of the same stream under different class orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRunSet {
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpdReport {
    pub opd: Vec<f64>,
    pub mopd: f64,
    pub aopd: f64,
}

/// Per-task max−min spread across orders, its maximum and its mean.
pub fn opd_metrics(runs: &OrderRunSet) -> Result<OpdReport> {
    if runs.curves.len() < 2 {
        return Err(Error::arg(format!("need at least 2 orders, got {}", runs.curves.len())));
    }
    let t = runs.curves[0].len();
    if t == 0 || runs.curves.iter().any(|c| c.len() != t) {
        return Err(Error::arg("all orders must cover the same, non-zero number of tasks"));
    }
    let opd: Vec<f64> = (0..t)
        .map(|i| {
            let (lo, hi) = runs
                .curves
                .iter()
                .map(|c| c[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .collect();
    let mopd = opd.iter().copied().fold(0.0, f64::max);
    let aopd = opd.iter().sum::<f64>() / t as f64;
    Ok(OpdReport { opd, mopd, aopd })
}
