//! Running a learner over a task stream and scoring it after every task.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{shuffle_class_order, EmbeddingRecord, TaskData};
use crate::error::{Error, Result};
use crate::metrics::{final_average_accuracy, forgetting, opd_metrics, AccuracyLedger, OpdReport, OrderRunSet};
use crate::pipeline::{GddsgConfig, GddsgState, TaskReport};

/// Per-class accuracy of `state` on `records`.
pub fn per_class_accuracy(state: &GddsgState, records: &[EmbeddingRecord]) -> Result<BTreeMap<u32, f64>> {
    let pred = state.predict_records(records)?;
    let mut tally: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (r, p) in records.iter().zip(pred) {
        let e = tally.entry(r.class_id).or_default();
        e.1 += 1;
        if p == r.class_id {
            e.0 += 1;
        }
    }
    Ok(tally.into_iter().map(|(c, (hit, n))| (c, hit as f64 / n as f64)).collect())
}

/// Test records of a task; falls back to its training records when it has no
/// held-out split.
fn eval_records(task: &TaskData) -> &[EmbeddingRecord] {
    if task.test.is_empty() {
        log::warn!("task {} has no test split; evaluating on its training records", task.id);
        &task.train
    } else {
        &task.test
    }
}

/// A learner plus its running accuracy ledger.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub state: GddsgState,
    pub ledger: AccuracyLedger,
    pub group_counts: Vec<usize>,
    pub reports: Vec<TaskReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub a_n: f64,
    pub f_n: f64,
    pub per_task: Vec<f64>,
    pub group_counts: Vec<usize>,
}

impl StreamRun {
    pub fn new(config: GddsgConfig, input_dim: usize) -> Result<Self> {
        Ok(StreamRun {
            state: GddsgState::new(config, input_dim)?,
            ledger: AccuracyLedger::new(),
            group_counts: Vec::new(),
            reports: Vec::new(),
        })
    }

    /// Picks up from a saved learner and ledger.
    pub fn resume(state: GddsgState, ledger: AccuracyLedger, group_counts: Vec<usize>) -> Result<Self> {
        if ledger.num_tasks() != state.tasks_seen() || group_counts.len() != state.tasks_seen() {
            return Err(Error::Consistency(format!(
                "learner has seen {} tasks but the ledger records {}",
                state.tasks_seen(),
                ledger.num_tasks()
            )));
        }
        Ok(StreamRun { state, ledger, group_counts, reports: Vec::new() })
    }

    /// Trains on `tasks[t]` and evaluates on the test splits of `tasks[..=t]`.
    pub fn step(&mut self, tasks: &[TaskData], t: usize) -> Result<&TaskReport> {
        if t != self.state.tasks_seen() || t >= tasks.len() {
            return Err(Error::State(format!(
                "next task is {}, asked to run task {t} of {}",
                self.state.tasks_seen(),
                tasks.len()
            )));
        }
        let task = &tasks[t];
        let report = self.state.train_task(&task.classes, &task.train)?;
        let mut accs = BTreeMap::new();
        for seen in &tasks[..=t] {
            let got = per_class_accuracy(&self.state, eval_records(seen))?;
            for &c in &seen.classes {
                let a = got.get(&c).ok_or_else(|| Error::Manifest(format!("class {c} has no evaluation records")))?;
                accs.insert(c, *a);
            }
        }
        self.ledger.record_task(t, &task.classes, &accs)?;
        self.group_counts.push(report.num_groups);
        self.reports.push(report);
        Ok(self.reports.last().unwrap())
    }

    pub fn run_all(&mut self, tasks: &[TaskData]) -> Result<()> {
        for t in self.state.tasks_seen()..tasks.len() {
            self.step(tasks, t)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<StreamSummary> {
        let n = self.ledger.num_tasks();
        Ok(StreamSummary {
            a_n: final_average_accuracy(&self.ledger, n)?,
            f_n: forgetting(&self.ledger, n)?,
            per_task: self.ledger.per_task_average(),
            group_counts: self.group_counts.clone(),
        })
    }
}

/// Runs the whole stream with a fresh learner.
pub fn run_stream(config: &GddsgConfig, tasks: &[TaskData]) -> Result<StreamRun> {
    let dim = tasks
        .iter()
        .flat_map(|t| t.train.first())
        .map(|r| r.vector.len())
        .next()
        .ok_or_else(|| Error::arg("stream has no training records"))?;
    let mut run = StreamRun::new(config.clone(), dim)?;
    run.run_all(tasks)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdersResult {
    pub seeds: Vec<u64>,
    pub summaries: Vec<StreamSummary>,
    pub report: OpdReport,
}

/// Reruns the stream once per seed with classes reshuffled across tasks and
/// measures the spread of the accuracy curves.
pub fn run_orders(config: &GddsgConfig, tasks: &[TaskData], seeds: &[u64]) -> Result<OrdersResult> {
    if seeds.len() < 2 {
        return Err(Error::arg(format!("need at least 2 orders, got {}", seeds.len())));
    }
    let mut summaries = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let shuffled = shuffle_class_order(tasks, seed);
        let summary = run_stream(config, &shuffled)?.summary()?;
        log::info!("order seed {seed}: A_N = {:.2}", summary.a_n);
        summaries.push(summary);
    }
    let report = opd_metrics(&OrderRunSet { curves: summaries.iter().map(|s| s.per_task.clone()).collect() })?;
    Ok(OrdersResult { seeds: seeds.to_vec(), summaries, report })
}
