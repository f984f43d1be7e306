use crate::distance::Distance;
use crate::error::{check_dim, Error, Result};

/// Per-class centroid and mean sample-to-centroid distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class_id: u32,
    pub centroid: Vec<f64>,
    pub mean_radius: f64,
    pub count: usize,
}

impl ClassStats {
    pub fn dim(&self) -> usize {
        self.centroid.len()
    }
}

pub fn compute_class_stats<R: AsRef<[f64]>>(class_id: u32, samples: &[R], metric: Distance) -> Result<ClassStats> {
    let first = samples.first().ok_or_else(|| Error::arg(format!("class {class_id} has no samples")))?;
    let dim = first.as_ref().len();
    let mut centroid = vec![0.0; dim];
    for s in samples {
        let s = s.as_ref();
        check_dim(dim, s.len())?;
        for (c, v) in centroid.iter_mut().zip(s) {
            *c += v;
        }
    }
    let n = samples.len() as f64;
    centroid.iter_mut().for_each(|c| *c /= n);
    if centroid.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("class {class_id} centroid is not finite")));
    }
    let mean_radius = samples.iter().map(|s| metric.between(s.as_ref(), &centroid)).sum::<f64>() / n;
    Ok(ClassStats { class_id, centroid, mean_radius, count: samples.len() })
}

/// The larger of the two classes' mean radii.
pub fn adaptive_threshold(a: &ClassStats, b: &ClassStats) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.mean_radius.max(b.mean_radius))
}

/// True iff the centroid distance strictly exceeds the adaptive threshold.
pub fn are_dissimilar(a: &ClassStats, b: &ClassStats, metric: Distance) -> Result<bool> {
    let eta = adaptive_threshold(a, b)?;
    Ok(metric.between(&a.centroid, &b.centroid) > eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gaussian_cluster;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn stats(centroid: Vec<f64>, r: f64) -> ClassStats {
        ClassStats { class_id: 0, centroid, mean_radius: r, count: 1 }
    }

    #[test]
    fn two_point_class() {
        let s = compute_class_stats(3, &[vec![0.0, 0.0], vec![2.0, 0.0]], Distance::Euclidean).unwrap();
        assert_eq!(s.centroid, vec![1.0, 0.0]);
        assert_eq!(s.mean_radius, 1.0);
        assert_eq!(s.count, 2);
    }

    #[test]
    fn single_sample() {
        let v = vec![0.5, -2.0, 7.0];
        let s = compute_class_stats(1, std::slice::from_ref(&v), Distance::Euclidean).unwrap();
        assert_eq!(s.centroid, v);
        assert_eq!(s.mean_radius, 0.0);
    }

    #[test]
    fn empty_rejected() {
        let none: [Vec<f64>; 0] = [];
        assert!(matches!(compute_class_stats(1, &none, Distance::Euclidean), Err(Error::Argument(_))));
    }

    #[test]
    fn ragged_rejected() {
        let rows = [vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(compute_class_stats(1, &rows, Distance::Euclidean), Err(Error::Dimension { .. })));
    }

    #[test]
    fn radius_tracks_chi_mean() {
        // Monte Carlo oracle for E||z||, z ~ N(0, I_16), with an independent stream
        let dim = 16;
        let sigma = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center: Vec<f64> = (0..dim).map(|i| i as f64).collect();
        let rows: Vec<Vec<f64>> =
            gaussian_cluster(0, &center, sigma, 500, &mut rng).iter().map(|r| r.to_f64()).collect();
        let s = compute_class_stats(0, &rows, Distance::Euclidean).unwrap();
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 200_000;
        let chi_mean = (0..draws)
            .map(|_| (0..dim).map(|_| oracle_rng.sample::<f64, _>(StandardNormal).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / draws as f64;
        let expected = sigma * chi_mean;
        assert!((s.mean_radius - expected).abs() < 0.05 * expected, "{} vs {}", s.mean_radius, expected);
    }

    #[test]
    fn threshold_is_max_radius() {
        assert_eq!(adaptive_threshold(&stats(vec![0.0], 0.5), &stats(vec![1.0], 0.8)).unwrap(), 0.8);
        assert_eq!(adaptive_threshold(&stats(vec![0.0], 0.3), &stats(vec![1.0], 0.3)).unwrap(), 0.3);
        assert!(matches!(
            adaptive_threshold(&stats(vec![0.0], 0.3), &stats(vec![1.0, 2.0], 0.3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn threshold_matches_literal_quotients() {
        // Evaluate each class's sum of d(h, c) / count directly over a labelled sample.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut samples = gaussian_cluster(0, &[0.0; 6], 1.0, 40, &mut rng);
        samples.extend(gaussian_cluster(1, &[3.0; 6], 2.0, 25, &mut rng));
        let of = |c: u32| samples.iter().filter(|r| r.class_id == c).map(|r| r.to_f64()).collect::<Vec<_>>();
        let (r0, r1) = (of(0), of(1));
        let s0 = compute_class_stats(0, &r0, Distance::Euclidean).unwrap();
        let s1 = compute_class_stats(1, &r1, Distance::Euclidean).unwrap();

        let literal = |c: u32| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut centroid = [0.0; 6];
            let mut n = 0.0;
            for r in &samples {
                if r.class_id == c {
                    n += 1.0;
                    for (k, v) in r.vector.iter().enumerate() {
                        centroid[k] += *v as f64;
                    }
                }
            }
            centroid.iter_mut().for_each(|v| *v /= n);
            for r in &samples {
                let indicator = if r.class_id == c { 1.0 } else { 0.0 };
                let d: f64 = r.vector.iter().zip(&centroid).map(|(a, b)| (*a as f64 - b).powi(2)).sum::<f64>().sqrt();
                num += indicator * d;
                den += indicator;
            }
            num / den
        };
        let expected = literal(0).max(literal(1));
        let got = adaptive_threshold(&s0, &s1).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn strict_inequality() {
        assert!(are_dissimilar(&stats(vec![0.0], 0.8), &stats(vec![1.0], 0.2), Distance::Euclidean).unwrap());
        // distance exactly equal to the threshold
        assert!(!are_dissimilar(&stats(vec![0.0], 0.5), &stats(vec![0.5], 0.1), Distance::Euclidean).unwrap());
    }

    #[test]
    fn shared_center_clusters_are_similar() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let center = vec![4.0; 10];
        let a: Vec<Vec<f64>> = gaussian_cluster(0, &center, 1.0, 200, &mut rng).iter().map(|r| r.to_f64()).collect();
        let b: Vec<Vec<f64>> = gaussian_cluster(1, &center, 1.0, 200, &mut rng).iter().map(|r| r.to_f64()).collect();
        let sa = compute_class_stats(0, &a, Distance::Euclidean).unwrap();
        let sb = compute_class_stats(1, &b, Distance::Euclidean).unwrap();
        let gap = Distance::Euclidean.between(&sa.centroid, &sb.centroid);
        assert!(gap <= sa.mean_radius.max(sb.mean_radius));
        assert!(!are_dissimilar(&sa, &sb, Distance::Euclidean).unwrap());
    }
}
