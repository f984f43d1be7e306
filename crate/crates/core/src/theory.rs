//! Closed-form order-sensitivity quantities for the overparameterized linear
//! continual-learning model, the probability that a random similarity graph
//! satisfies Brooks' conditions, and a task-permutation study tool.
//!
//! With `r = 1 − n/p` and `c_{i,j} = (1−r)(r^{T−i} − r^{j−i} + r^{T−j})`:
//!
//! ```text
//! E[F_T] = 1/(T−1) Σ_{i<T} [ (r^T − r^i)‖w_i‖² + Σ_{j>i} c_{i,j}‖w_j − w_i‖² + pσ²/(p−n−1) (r^i − r^T) ]
//! E[G_T] = r^T/T Σ_{i<T} ‖w_i‖² + (1−r)/T Σ_i r^{T−i} Σ_k ‖w_k − w_i‖² + pσ²/(p−n−1) (1 − r^T)
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Optimal parameters per task, in task order.
    pub w_stars: Vec<Vec<f64>>,
    /// Samples per task.
    pub n: usize,
    /// Parameter count.
    pub p: usize,
    pub sigma: f64,
}

impl TheoryParams {
    pub fn tasks(&self) -> usize {
        self.w_stars.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_stars.is_empty() {
            return Err(Error::arg("at least one task is required"));
        }
        if self.n == 0 {
            return Err(Error::arg("n must be at least 1"));
        }
        if self.p < self.n + 2 {
            return Err(Error::Domain(format!("requires p >= n + 2, got p = {}, n = {}", self.p, self.n)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg("sigma must be a finite non-negative number"));
        }
        for (t, w) in self.w_stars.iter().enumerate() {
            if w.len() != self.p {
                return Err(Error::arg(format!("w*_{} has dimension {}, expected p = {}", t + 1, w.len(), self.p)));
            }
        }
        Ok(())
    }

    /// Overparameterization ratio `1 − n/p`.
    pub fn ratio(&self) -> f64 {
        1.0 - self.n as f64 / self.p as f64
    }

    fn noise_scale(&self) -> f64 {
        let p = self.p as f64;
        p * self.sigma * self.sigma / (p - self.n as f64 - 1.0)
    }

    /// Same parameters with tasks reordered: task `k` of the result is task `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> TheoryParams {
        TheoryParams { w_stars: order.iter().map(|&i| self.w_stars[i].clone()).collect(), ..self.clone() }
    }
}

fn sq_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `c_{i,j}` with 1-based task indices.
pub fn forgetting_coefficient(r: f64, tasks: usize, i: usize, j: usize) -> f64 {
    let t = tasks as i32;
    let (i, j) = (i as i32, j as i32);
    (1.0 - r) * (r.powi(t - i) - r.powi(j - i) + r.powi(t - j))
}

pub fn expected_forgetting(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    let t = params.tasks();
    if t < 2 {
        return Err(Error::arg("expected forgetting needs at least 2 tasks"));
    }
    let r = params.ratio();
    let noise = params.noise_scale();
    let rt = r.powi(t as i32);
    let w = &params.w_stars;
    let mut total = 0.0;
    for i in 1..t {
        let ri = r.powi(i as i32);
        let mut term = (rt - ri) * sq_norm(&w[i - 1]);
        for j in i + 1..=t {
            term += forgetting_coefficient(r, t, i, j) * sq_dist(&w[j - 1], &w[i - 1]);
        }
        term += noise * (ri - rt);
        total += term;
    }
    Ok(total / (t - 1) as f64)
}

pub fn expected_generalization(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    let t = params.tasks();
    let r = params.ratio();
    let rt = r.powi(t as i32);
    let w = &params.w_stars;
    let norms: f64 = w[..t - 1].iter().map(|v| sq_norm(v)).sum();
    let mut spread = 0.0;
    for i in 1..=t {
        let inner: f64 = w.iter().map(|wk| sq_dist(wk, &w[i - 1])).sum();
        spread += r.powi((t - i) as i32) * inner;
    }
    let tf = t as f64;
    Ok(rt / tf * norms + (1.0 - r) / tf * spread + params.noise_scale() * (1.0 - rt))
}

/// `Σ_{i,j} ‖w_i − w_j‖²` over ordered pairs.
pub fn sum_sq_distances(params: &TheoryParams) -> f64 {
    let w = &params.w_stars;
    w.iter().map(|a| w.iter().map(|b| sq_dist(a, b)).sum::<f64>()).sum()
}

/// Class count and pairwise similarity probability for the Brooks estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrooksParams {
    n: usize,
    p_sim: f64,
}

impl BrooksParams {
    pub fn new(n: usize, p_sim: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg(format!("class count must be at least 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&p_sim) {
            return Err(Error::arg(format!("similarity probability must be in [0, 1], got {p_sim}")));
        }
        Ok(BrooksParams { n, p_sim })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn p_sim(&self) -> f64 {
        self.p_sim
    }
}

/// `exponent · ln(base)` with `0^0 = 1`.
fn log_pow(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else if base == 0.0 {
        f64::NEG_INFINITY
    } else {
        exponent * base.ln()
    }
}

/// `1 − p^{2N}(1−p)^{N²−2N} − p^{N(N−1)/2}`, powers taken in log space.
pub fn brooks_probability(bp: &BrooksParams) -> f64 {
    let n = bp.n as f64;
    let p = bp.p_sim;
    let odd_cycle = (log_pow(p, 2.0 * n) + log_pow(1.0 - p, n * n - 2.0 * n)).exp();
    let complete = log_pow(p, 0.5 * n * (n - 1.0)).exp();
    let value = 1.0 - odd_cycle - complete;
    if (-1e-12..0.0).contains(&value) {
        0.0
    } else if value > 1.0 && value - 1.0 < 1e-12 {
        1.0
    } else {
        value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StudyMode {
    /// All T! orders; refuses when T exceeds `max_tasks`.
    Exhaustive { max_tasks: usize },
    /// `count` uniformly random orders, drawn with replacement.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationRow {
    pub order: Vec<usize>,
    pub expected_forgetting: f64,
    pub expected_generalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub var_forgetting: f64,
    pub var_generalization: f64,
    pub sum_sq_distances: f64,
    pub rows: Vec<PermutationRow>,
}

/// Population variance, reduced over sorted values so the result does not
/// depend on evaluation order.
fn variance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    dev.iter().sum::<f64>() / n
}

fn next_permutation(a: &mut [usize]) -> bool {
    let Some(i) = (1..a.len()).rev().find(|&i| a[i - 1] < a[i]) else {
        return false;
    };
    let j = (i..a.len()).rev().find(|&j| a[j] > a[i - 1]).unwrap();
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// Evaluates both expectations under reordered tasks and reports their
/// variance across orders. The report makes no claim about how the variance
/// relates to the pairwise distance sum.
pub fn permutation_variance_study(params: &TheoryParams, mode: &StudyMode) -> Result<StudyReport> {
    params.validate()?;
    let t = params.tasks();
    if t < 2 {
        return Err(Error::arg("the study needs at least 2 tasks"));
    }
    let orders: Vec<Vec<usize>> = match *mode {
        StudyMode::Exhaustive { max_tasks } => {
            if t > max_tasks {
                return Err(Error::arg(format!(
                    "{t} tasks exceed the exhaustive limit of {max_tasks}; use sampled permutations"
                )));
            }
            let mut cur: Vec<usize> = (0..t).collect();
            let mut all = vec![cur.clone()];
            while next_permutation(&mut cur) {
                all.push(cur.clone());
            }
            all
        }
        StudyMode::Sampled { count, seed } => {
            if count == 0 {
                return Err(Error::arg("sampled study needs at least one permutation"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let mut o: Vec<usize> = (0..t).collect();
                    o.shuffle(&mut rng);
                    o
                })
                .collect()
        }
    };
    let rows = orders
        .into_iter()
        .map(|order| {
            let permuted = params.permuted(&order);
            Ok(PermutationRow {
                expected_forgetting: expected_forgetting(&permuted)?,
                expected_generalization: expected_generalization(&permuted)?,
                order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let f: Vec<f64> = rows.iter().map(|r| r.expected_forgetting).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.expected_generalization).collect();
    Ok(StudyReport {
        var_forgetting: variance(&f),
        var_generalization: variance(&g),
        sum_sq_distances: sum_sq_distances(params),
        rows,
    })
}
