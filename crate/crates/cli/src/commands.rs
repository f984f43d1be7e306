use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gddsg::dataset::{generate_synthetic, load_manifest};
use gddsg::experiment::{per_class_accuracy, run_orders, StreamRun};
use gddsg::grouping::build_simgraph;
use gddsg::theory::{
    brooks_probability, expected_forgetting, expected_generalization, permutation_variance_study, BrooksParams,
    StudyMode, TheoryParams,
};
use gddsg::{AccuracyLedger, ClassStats, EmbeddingRecord, GddsgState, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{EvalArgs, InspectArgs, OrdersArgs, SynthArgs, TheoryArgs, TrainArgs};

const STATE_DIR: &str = "state";
const LEDGER_FILE: &str = "ledger.json";
const METRICS_FILE: &str = "metrics.json";
const GROUPS_CSV: &str = "group_counts.csv";

fn emit(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_classes: a.classes,
        dim: a.dim,
        per_class_samples: a.per_class,
        test_samples: a.test_per_class,
        num_tasks: a.tasks,
        center_scale: a.center_scale,
        within_std: a.within_std,
        similarity_pairs: a.similar_pairs,
        seed: a.seed,
    };
    let (manifest, _) = generate_synthetic(&spec, &a.out)?;
    let path = a.out.join("manifest.json");
    eprintln!("wrote {} tasks to {}", manifest.tasks.len(), a.out.display());
    emit(&json!({
        "manifest": path,
        "tasks": manifest.tasks.len(),
        "classes": spec.num_classes,
        "dim": spec.dim,
    }))
}

#[derive(Serialize, Deserialize)]
struct RunProgress {
    ledger: AccuracyLedger,
    group_counts: Vec<usize>,
}

#[derive(Serialize)]
struct Metrics {
    #[serde(rename = "A_N")]
    a_n: f64,
    #[serde(rename = "F_N")]
    f_n: f64,
    per_task: Vec<f64>,
    group_counts: Vec<usize>,
    tasks: usize,
}

fn write_group_counts(path: &Path, counts: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["task", "groups"])?;
    for (t, g) in counts.iter().enumerate() {
        w.write_record([t.to_string(), g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let out: PathBuf = match (&a.out, &a.resume) {
        (Some(o), Some(r)) if o != r => bail!("--out and --resume name different directories"),
        (Some(o), _) => o.clone(),
        (None, Some(r)) => r.clone(),
        (None, None) => bail!("--out is required unless --resume is given"),
    };
    let tasks = manifest.load_all()?;

    let mut run = match &a.resume {
        Some(dir) => {
            let state = GddsgState::load(&dir.join(STATE_DIR))?;
            let text = std::fs::read_to_string(dir.join(LEDGER_FILE))
                .with_context(|| format!("reading {}", dir.join(LEDGER_FILE).display()))?;
            let progress: RunProgress = serde_json::from_str(&text).context("parsing run ledger")?;
            if state.input_dim() != manifest.dim {
                bail!("saved state expects dim {}, manifest has {}", state.input_dim(), manifest.dim);
            }
            log::info!("resuming after task {}; model flags are taken from the saved state", state.tasks_seen());
            StreamRun::resume(state, progress.ledger, progress.group_counts)?
        }
        None => StreamRun::new(a.model.config(), manifest.dim)?,
    };
    if run.state.tasks_seen() > tasks.len() {
        bail!("saved state has seen {} tasks, manifest lists {}", run.state.tasks_seen(), tasks.len());
    }
    let done = run.state.tasks_seen() == tasks.len();
    if done {
        eprintln!("all {} tasks already trained; nothing to do", tasks.len());
    }

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for t in run.state.tasks_seen()..tasks.len() {
        let groups = run.step(&tasks, t)?.num_groups;
        eprintln!(
            "task {t}: {} classes, {} groups, accuracy {:.2}",
            tasks[t].classes.len(),
            groups,
            run.ledger.per_task_average()[t]
        );
        // checkpoint after every task so an interrupted run can resume
        run.state.save(&out.join(STATE_DIR))?;
        write_json(
            &out.join(LEDGER_FILE),
            &RunProgress { ledger: run.ledger.clone(), group_counts: run.group_counts.clone() },
        )?;
    }
    let s = run.summary()?;
    let metrics =
        Metrics { a_n: s.a_n, f_n: s.f_n, per_task: s.per_task, group_counts: s.group_counts, tasks: tasks.len() };
    if !done {
        write_json(&out.join(METRICS_FILE), &metrics)?;
        write_group_counts(&out.join(GROUPS_CSV), &metrics.group_counts)?;
    }
    emit(&metrics)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let dir = if a.state.join(STATE_DIR).is_dir() { a.state.join(STATE_DIR) } else { a.state.clone() };
    let state = GddsgState::load(&dir)?;
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    for t in 0..manifest.tasks.len() {
        let task = manifest.load_task(t)?;
        if task.classes.iter().all(|c| state.table().contains(*c)) {
            records.extend(if task.test.is_empty() { task.train } else { task.test });
        }
    }
    if records.is_empty() {
        bail!("no task in the manifest is fully learned by this state");
    }
    let per_class = per_class_accuracy(&state, &records)?;
    let mean = 100.0 * per_class.values().sum::<f64>() / per_class.len() as f64;
    emit(&json!({
        "accuracy": mean,
        "classes": per_class.len(),
        "samples": records.len(),
        "per_class": per_class,
    }))
}

pub fn orders(a: OrdersArgs) -> Result<()> {
    if a.orders < 2 {
        bail!("--orders must be at least 2, got {}", a.orders);
    }
    let manifest = load_manifest(&a.manifest)?;
    let tasks = manifest.load_all()?;
    let seeds: Vec<u64> =
        (0..a.orders as u64).map(|i| if a.repeat_seed { a.model.seed } else { a.model.seed + i }).collect();
    let result = run_orders(&a.model.config(), &tasks, &seeds)?;
    let out = json!({
        "opd": result.report.opd,
        "mopd": result.report.mopd,
        "aopd": result.report.aopd,
        "seeds": result.seeds,
        "final_accuracy": result.summaries.iter().map(|s| s.a_n).collect::<Vec<_>>(),
        "curves": result.summaries.iter().map(|s| s.per_task.clone()).collect::<Vec<_>>(),
    });
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("orders.json"), &out)?;
        let path = dir.join("opd.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut header = vec!["task".to_string(), "opd".to_string()];
        header.extend(seeds.iter().map(|s| format!("order_{s}")));
        w.write_record(&header)?;
        for (t, opd) in result.report.opd.iter().enumerate() {
            let mut row = vec![t.to_string(), opd.to_string()];
            row.extend(result.summaries.iter().map(|s| s.per_task[t].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    eprintln!("MOPD {:.3}, AOPD {:.3}", result.report.mopd, result.report.aopd);
    emit(&out)
}

pub fn theory(a: TheoryArgs) -> Result<()> {
    let params = match &a.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TheoryParams>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            TheoryParams {
                w_stars: (0..a.tasks).map(|_| (0..a.p).map(|_| rng.sample(StandardNormal)).collect()).collect(),
                n: a.n,
                p: a.p,
                sigma: a.sigma,
            }
        }
    };
    let mode = match a.samples {
        Some(count) => StudyMode::Sampled { count, seed: a.seed },
        None => StudyMode::Exhaustive { max_tasks: a.max_exhaustive },
    };
    let e_g = expected_generalization(&params)?;
    let (e_f, study) = if params.tasks() >= 2 {
        (Some(expected_forgetting(&params)?), Some(permutation_variance_study(&params, &mode)?))
    } else {
        (None, None)
    };
    let brooks = match a.brooks_n {
        Some(n) => Some(brooks_probability(&BrooksParams::new(n, a.brooks_p)?)),
        None => None,
    };
    let out = json!({
        "E_F": e_f,
        "E_G": e_g,
        "sum_sq_distances": gddsg::theory::sum_sq_distances(&params),
        "variance": study,
        "brooks_probability": brooks,
    });
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    emit(&out)
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let dir = if a.state.join(STATE_DIR).is_dir() { a.state.join(STATE_DIR) } else { a.state.clone() };
    let state = GddsgState::load(&dir)?;
    if let Some(path) = &a.graph_out {
        let stats: Vec<ClassStats> = state.class_stats().values().cloned().collect();
        let graph = build_simgraph(&stats, state.config().distance)?;
        write_json(path, &graph.to_json())?;
    }
    if let Some(path) = &a.meta_out {
        match state.identifier() {
            Some(ident) => ident.data().save_csv(path)?,
            None => bail!("state has no group identifier yet"),
        }
    }
    let groups: BTreeMap<String, serde_json::Value> = state
        .table()
        .groups()
        .map(|(g, members)| {
            let model = &state.models()[&g];
            (g.to_string(), json!({ "classes": members, "lambda": model.lambda(), "samples": model.sample_count() }))
        })
        .collect();
    emit(&json!({
        "tasks_seen": state.tasks_seen(),
        "classes": state.num_classes(),
        "num_groups": state.table().num_groups(),
        "input_dim": state.input_dim(),
        "proj_dim": state.config().proj_dim,
        "knn": state.identifier().map(|i| i.k()),
        "meta_rows": state.identifier().map(|i| i.data().len()),
        "groups": groups,
        "config": state.config(),
    }))
}
