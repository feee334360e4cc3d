//! Clustering of DE genes by their fitted temporal profiles.
//!
//! Profiles are fitted values on a fine grid, standardised per gene. The
//! affinity between two genes is their Pearson correlation mapped into
//! `[0, 1]`, and clusters come from the normalised-affinity eigenvector
//! embedding followed by k-means (Ng, Jordan & Weiss).

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::format_value;
use crate::error::{LrsaError, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::smoother::GeneFit;
use crate::stats::{mean, median, pearson, same_time, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMatrix {
    pub ids: Vec<String>,
    pub grid: Vec<f64>,
    /// One standardised row per gene.
    pub rows: Vec<Vec<f64>>,
}

impl ProfileMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Rescales to mean 0 and sample standard deviation 1; `None` for a flat row.
pub fn standardize(row: &[f64]) -> Option<Vec<f64>> {
    let m = mean(row);
    let sd = sample_sd(row);
    let scale = row.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if !(sd > 1e-12 * scale) {
        return None;
    }
    Some(row.iter().map(|x| (x - m) / sd).collect())
}

/// Standardised fitted profiles of the genes in `de_ids`, in fit order.
/// Genes whose fit is flat on the grid are left out and returned separately.
pub fn build_profiles(
    fits: &[GeneFit],
    de_ids: &HashSet<&str>,
    grid: &[f64],
) -> Result<(ProfileMatrix, Vec<String>)> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LrsaError::invalid("profile grid must be strictly increasing"));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for fit in fits.iter().filter(|f| de_ids.contains(f.probe_id.as_str())) {
        let raw = grid
            .iter()
            .map(|&t| match fit.point(t) {
                Some(p) => Ok(p.value),
                None => fit.value_at(t),
            })
            .collect::<Result<Vec<_>>>()?;
        match standardize(&raw) {
            Some(row) => {
                ids.push(fit.probe_id.clone());
                rows.push(row);
            }
            None => flat.push(fit.probe_id.clone()),
        }
    }
    Ok((
        ProfileMatrix {
            ids,
            grid: grid.to_vec(),
            rows,
        },
        flat,
    ))
}

/// Affinity `(1 + r_ij) / 2` with a zero diagonal.
pub fn affinity(p: &ProfileMatrix) -> DMatrix<f64> {
    let n = p.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pearson(&p.rows[i], &p.rows[j]).unwrap_or(0.0);
            let v = 0.5 * (1.0 + r);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLabels {
    /// Cluster of each row, in `1..=k`.
    pub labels: Vec<usize>,
    /// Largest `k` eigenvalues of the normalised affinity, descending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_k - lambda_{k+1}`; 0 when `k` equals the number of rows.
    pub eigengap: f64,
    pub inertia: f64,
}

/// Normalised affinity `D^-1/2 A D^-1/2`.
pub fn normalized_affinity(a: &DMatrix<f64>, ids: &[String]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = a.row(i).sum();
        if !(d > 0.0) {
            return Err(LrsaError::IsolatedRow {
                gene: ids.get(i).cloned().unwrap_or_else(|| i.to_string()),
            });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * a[(i, j)] * inv_sqrt[j]))
}

pub fn spectral_cluster(
    a: &DMatrix<f64>,
    ids: &[String],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<SpectralLabels> {
    let n = a.nrows();
    if a.ncols() != n || ids.len() != n {
        return Err(LrsaError::DimensionMismatch(format!(
            "affinity is {}x{} for {} ids",
            a.nrows(),
            a.ncols(),
            ids.len()
        )));
    }
    if k < 2 && n >= 2 {
        return Err(LrsaError::invalid("k must be at least 2"));
    }
    if k > n {
        return Err(LrsaError::TooManyClusters { k, n });
    }
    let l = normalized_affinity(a, ids)?;
    let eig = l
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or(LrsaError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigengap = if k < n {
        eig.eigenvalues[order[k - 1]] - eig.eigenvalues[order[k]]
    } else {
        0.0
    };

    let points: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(r, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let cfg = KMeansConfig {
        restarts,
        ..KMeansConfig::new(k, seed)
    };
    let km = kmeans(&points, &cfg)?;
    Ok(SpectralLabels {
        labels: km.labels.iter().map(|l| l + 1).collect(),
        eigenvalues,
        eigengap,
        inertia: km.inertia,
    })
}

/// Per-cluster median of member profiles at every grid time. Labels are `1..=k`.
pub fn cluster_medians(p: &ProfileMatrix, labels: &[usize], k: usize) -> Result<Vec<Vec<f64>>> {
    if labels.len() != p.len() {
        return Err(LrsaError::DimensionMismatch(format!(
            "{} labels for {} profiles",
            labels.len(),
            p.len()
        )));
    }
    (1..=k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = p
                .rows
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                return Err(LrsaError::EmptyCluster { cluster: c });
            }
            Ok((0..p.grid.len())
                .map(|j| median(&members.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub eigengap: f64,
    pub grid: Vec<f64>,
    /// `medians[c - 1]` is the median pattern of cluster `c` on `grid`.
    pub medians: Vec<Vec<f64>>,
    pub kmeans_inertia: f64,
}

impl ClusterResult {
    pub fn labels_tsv(&self) -> String {
        let mut s = String::from("gene\tcluster\n");
        for (id, l) in self.ids.iter().zip(&self.labels) {
            s.push_str(&format!("{id}\t{l}\n"));
        }
        s
    }

    pub fn median_csv(&self, cluster: usize) -> String {
        let mut s = String::from("t,median\n");
        for (t, m) in self.grid.iter().zip(&self.medians[cluster - 1]) {
            s.push_str(&format!("{},{}\n", format_value(*t), format_value(*m)));
        }
        s
    }
}

/// Full clustering of a profile matrix: affinity, embedding, k-means, medians.
pub fn cluster_profiles(p: &ProfileMatrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    if k > p.len() {
        return Err(LrsaError::TooManyClusters { k, n: p.len() });
    }
    let a = affinity(p);
    let s = spectral_cluster(&a, &p.ids, k, seed, restarts)?;
    let medians = cluster_medians(p, &s.labels, k)?;
    Ok(ClusterResult {
        ids: p.ids.clone(),
        labels: s.labels,
        k,
        eigenvalues: s.eigenvalues,
        eigengap: s.eigengap,
        grid: p.grid.clone(),
        medians,
        kmeans_inertia: s.inertia,
    })
}

/// Pearson correlation between the relative fitted expression
/// `2^(f(t) - f(0))` and reference relative values at shared times.
pub fn validate_against_reference(fit: &GeneFit, reference: &[(f64, f64)]) -> Result<f64> {
    let base = match fit.point(0.0) {
        Some(p) => p.value,
        None => fit.value_at(0.0)?,
    };
    let mut model = Vec::new();
    let mut obs = Vec::new();
    for &(t, r) in reference {
        if let Some(p) = fit.point(t) {
            model.push((p.value - base).exp2());
            obs.push(r);
        }
    }
    if model.len() < 3 {
        return Err(LrsaError::invalid(format!(
            "only {} reference times coincide with the fit grid, need 3",
            model.len()
        )));
    }
    pearson(&model, &obs).ok_or_else(|| LrsaError::invalid("constant profile in validation"))
}

/// Converts raw reference measurements `E(t)` into `E(t) / E(0)`.
pub fn relative_to_control(raw: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let e0 = raw
        .iter()
        .find(|(t, _)| same_time(*t, 0.0))
        .map(|&(_, v)| v)
        .ok_or_else(|| LrsaError::invalid("reference has no t = 0 measurement"))?;
    if e0 == 0.0 {
        return Err(LrsaError::invalid("reference control value is zero"));
    }
    Ok(raw.iter().map(|&(t, v)| (t, v / e0)).collect())
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let comb2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut ua: Vec<usize> = a.to_vec();
    ua.sort_unstable();
    ua.dedup();
    let mut ub: Vec<usize> = b.to_vec();
    ub.sort_unstable();
    ub.dedup();
    let mut table = vec![vec![0usize; ub.len()]; ua.len()];
    for (x, y) in a.iter().zip(b) {
        let i = ua.binary_search(x).unwrap();
        let j = ub.binary_search(y).unwrap();
        table[i][j] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let sum_b: f64 = (0..ub.len())
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return if index == max { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ConsolidatedSeries;
    use crate::smoother::{linspace, select_bandwidth, LocalFitConfig};

    fn profiles(rows: Vec<Vec<f64>>) -> ProfileMatrix {
        let n = rows[0].len();
        ProfileMatrix {
            ids: (0..rows.len()).map(|i| format!("g{i}")).collect(),
            grid: linspace(0.0, (n - 1) as f64, n),
            rows,
        }
    }

    #[test]
    fn standardized_rows() {
        let row: Vec<f64> = (0..=30).map(|t| t as f64).collect();
        let z = standardize(&row).unwrap();
        assert!(mean(&z).abs() < 1e-9);
        assert!((sample_sd(&z) - 1.0).abs() < 1e-9);
        let affine: Vec<f64> = row.iter().map(|x| 2.0 * x + 5.0).collect();
        let z2 = standardize(&affine).unwrap();
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(standardize(&[3.0; 5]).is_none());
    }

    #[test]
    fn affinity_extremes() {
        let p = profiles(vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![-1.0, -2.0, -3.0, -4.0],
        ]);
        let a = affinity(&p);
        assert!((a[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(a[(0, 2)].abs() < 1e-15);
        assert_eq!(a[(0, 0)], 0.0);
    }

    #[test]
    fn block_diagonal_affinity_splits_cleanly() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i != j && (i < 3) == (j < 3) {
                1.0
            } else {
                0.0
            }
        });
        let ids: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
        let s = spectral_cluster(&a, &ids, 2, 7, 20).unwrap();
        assert_eq!(&s.labels[..3], &[1, 1, 1]);
        assert_eq!(&s.labels[3..], &[2, 2, 2]);
        for ev in &s.eigenvalues {
            assert!((ev - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_row_is_named() {
        let mut a = DMatrix::from_element(3, 3, 1.0);
        a.fill_diagonal(0.0);
        for j in 0..3 {
            a[(2, j)] = 0.0;
            a[(j, 2)] = 0.0;
        }
        let ids = vec!["a".to_string(), "b".to_string(), "lonely".to_string()];
        match spectral_cluster(&a, &ids, 2, 1, 5) {
            Err(LrsaError::IsolatedRow { gene }) => assert_eq!(gene, "lonely"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn medians_per_cluster() {
        let p = profiles(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![10.0, 0.0], vec![5.0, 1.0]]);
        let m = cluster_medians(&p, &[1, 1, 1, 2], 2).unwrap();
        assert_eq!(m[0], vec![2.0, 0.0]);
        assert_eq!(m[1], vec![5.0, 1.0]);
        let m = cluster_medians(&p, &[1, 1, 2, 2], 2).unwrap();
        assert_eq!(m[0], vec![1.5, 0.0]);
        assert!(matches!(
            cluster_medians(&p, &[1, 1, 1, 1], 2),
            Err(LrsaError::EmptyCluster { cluster: 2 })
        ));
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[5, 5, 9, 9]), 1.0);
        assert!(adjusted_rand_index(&[1, 1, 2, 2], &[1, 2, 1, 2]) < 0.0);
    }

    #[test]
    fn reference_validation() {
        let times = [0.0, 1.0, 3.0, 7.0, 14.0, 30.0];
        let s = ConsolidatedSeries::from_pairs("g", &times, &[5.0, 5.5, 6.4, 6.0, 5.4, 5.1]);
        let fit = select_bandwidth(&s, &LocalFitConfig::default()).unwrap();
        let f0 = fit.point(0.0).unwrap().value;
        let own: Vec<(f64, f64)> = times
            .iter()
            .map(|&t| (t, (fit.point(t).unwrap().value - f0).exp2()))
            .collect();
        assert!((validate_against_reference(&fit, &own).unwrap() - 1.0).abs() < 1e-12);
        let affine: Vec<(f64, f64)> = own.iter().map(|&(t, v)| (t, 3.0 * v + 1.0)).collect();
        assert!((validate_against_reference(&fit, &affine).unwrap() - 1.0).abs() < 1e-12);
        assert!(validate_against_reference(&fit, &own[..2]).is_err());
        let rel = relative_to_control(&[(0.0, 4.0), (1.0, 8.0)]).unwrap();
        assert_eq!(rel[1].1, 2.0);
    }
}
