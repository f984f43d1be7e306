//! Bounded per-class sample store (uniform reservoir sampling).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    cap: usize,
    seen: u64,
    samples: Vec<Vec<f64>>,
}

impl Reservoir {
    pub fn new(cap: usize) -> Self {
        Reservoir { cap, seen: 0, samples: Vec::new() }
    }

    pub fn from_parts(cap: usize, seen: u64, samples: Vec<Vec<f64>>) -> Self {
        Reservoir { cap, seen, samples }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Number of samples offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Algorithm R: every offered sample ends up kept with probability cap/seen.
    pub fn offer<R: Rng + ?Sized>(&mut self, sample: Vec<f64>, rng: &mut R) -> Result<()> {
        if let Some(first) = self.samples.first() {
            check_dim(first.len(), sample.len())?;
        }
        self.seen += 1;
        if self.samples.len() < self.cap {
            self.samples.push(sample);
        } else if self.cap > 0 {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.cap {
                self.samples[j as usize] = sample;
            }
        }
        Ok(())
    }

    /// Fills a reservoir from one class's samples with a stream seeded by
    /// `(seed, class_id)`.
    pub fn sample_class<R: AsRef<[f64]>>(cap: usize, rows: &[R], seed: u64, class_id: u32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(class_id)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut r = Reservoir::new(cap);
        for row in rows {
            r.offer(row.as_ref().to_vec(), &mut rng)?;
        }
        Ok(r)
    }
}
