//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LrsaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when no center moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            restarts: 20,
            max_iter: 300,
            tol: 1e-8,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// 0-based labels, numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can leave `pick` on a zero-distance point
            if d2[pick] <= 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, cfg: &KMeansConfig) -> KMeansResult {
    let n = points.len();
    let dim = points[0].len();
    let k = centers.len();
    let mut labels = vec![0usize; n];
    for _ in 0..cfg.max_iter {
        for (i, p) in points.iter().enumerate() {
            labels[i] = nearest(p, &centers).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut new_centers = Vec::with_capacity(k);
        for j in 0..k {
            if counts[j] == 0 {
                // reseed an empty cluster at the worst-fitted point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .expect("non-empty input");
                new_centers.push(points[far].clone());
            } else {
                new_centers.push(sums[j].iter().map(|s| s / counts[j] as f64).collect());
            }
        }
        let shift = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = new_centers;
        if shift < cfg.tol {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (l, d) = nearest(p, &centers);
        labels[i] = l;
        inertia += d;
    }
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// Renumbers labels by first appearance and reorders centers to match.
fn canonicalize(mut r: KMeansResult) -> KMeansResult {
    let k = r.centers.len();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &r.labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = next;
            next += 1;
        }
    }
    let mut centers = vec![Vec::new(); k];
    for (old, c) in r.centers.into_iter().enumerate() {
        centers[map[old]] = c;
    }
    r.centers = centers;
    for l in r.labels.iter_mut() {
        *l = map[*l];
    }
    r
}

/// Best-inertia k-means over `cfg.restarts` seeded runs.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(LrsaError::invalid("k-means on an empty point set"));
    }
    if cfg.k == 0 || cfg.k > points.len() {
        return Err(LrsaError::TooManyClusters {
            k: cfg.k,
            n: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus_init(points, cfg.k, &mut rng);
        let r = lloyd(points, init, cfg);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(canonicalize(best.expect("at least one restart")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(vec![0.0 + 0.01 * i as f64, 0.0]);
            pts.push(vec![5.0 + 0.01 * i as f64, 5.0]);
        }
        let r = kmeans(&pts, &KMeansConfig::new(2, 3)).unwrap();
        for (i, &l) in r.labels.iter().enumerate() {
            assert_eq!(l, i % 2);
        }
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans(&pts, &KMeansConfig::new(6, 1)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 6);
    }

    #[test]
    fn same_seed_same_labels() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![((i * 7919) % 101) as f64, ((i * 104729) % 37) as f64])
            .collect();
        let a = kmeans(&pts, &KMeansConfig::new(4, 11)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(4, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            kmeans(&pts, &KMeansConfig::new(3, 0)),
            Err(LrsaError::TooManyClusters { k: 3, n: 2 })
        ));
    }
}
