//! Spatial concentration: the Gini index of manufacturing shares and a
//! classifier for the number and spacing of agglomerations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{ring_steps, Geography};

/// Tolerance on `sum(lambda) = 1` accepted by [`gini`].
pub const GINI_SUM_TOL: f64 = 1e-6;

/// Gini index of a share vector, read off the Lorenz curve with uniform
/// abscissa steps `1/n`:
///
/// ```text
/// G = 1 - (1/n) * sum_{i=0}^{n-1} (Y_i + Y_{i+1}),   Y_i = cumulative ascending shares
/// ```
///
/// Evaluated in the equivalent rank-weighted form
/// `G = sum_k (2k - n - 1) lambda_(k) / n`, summed over mirrored rank pairs so
/// that equal shares cancel exactly: uniform input gives exactly 0 and a
/// unit mass gives exactly `(n - 1) / n`.
pub fn gini(lambda: &[f64]) -> Result<f64> {
    let n = lambda.len();
    if n == 0 {
        return Err(Error::domain("gini of an empty share vector"));
    }
    if let Some(j) = lambda.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::domain(format!("share {j} = {} is negative or not finite", lambda[j])));
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > GINI_SUM_TOL {
        return Err(Error::domain(format!("shares sum to {total}, expected 1")));
    }
    let mut sorted = lambda.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for k in 0..n / 2 {
        let weight = (n - 1 - 2 * k) as f64;
        acc += weight * (sorted[n - 1 - k] - sorted[k]);
    }
    // Sum in sorted order so the result is exactly permutation invariant.
    let sorted_total: f64 = sorted.iter().sum();
    Ok(acc / (n as f64 * sorted_total))
}

/// Number, location and spacing of agglomerations in a share vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub gini: f64,
    pub agglomeration_count: usize,
    pub peak_regions: Vec<String>,
    pub peak_indices: Vec<usize>,
    /// Ring steps between consecutive peaks going around the ring, starting
    /// from the lowest-index peak; sums to `n`. Empty off-ring or with
    /// fewer than two peaks.
    pub separations: Vec<usize>,
    /// Smallest ring distance between any two peaks.
    pub min_separation: Option<usize>,
}

impl ConcentrationReport {
    /// Whether the peaks split the ring into equal arcs.
    pub fn is_equidistant(&self) -> bool {
        self.separations.len() >= 2 && self.separations.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierOptions {
    /// A region is occupied when its share is at least `threshold_factor / n`.
    pub threshold_factor: f64,
    /// Linking radius (same units as the distance matrix) for non-ring
    /// geographies; `None` treats each occupied region as its own cluster.
    pub radius: Option<f64>,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            threshold_factor: 2.0,
            radius: None,
        }
    }
}

/// Groups occupied regions into agglomerations. On rings, neighbors one
/// step apart are linked; elsewhere regions within `radius` are linked.
/// Each agglomeration is represented by its largest member.
pub fn count_agglomerations(lambda: &[f64], geo: &Geography, options: &ClassifierOptions) -> Result<ConcentrationReport> {
    let n = geo.len();
    if lambda.len() != n {
        return Err(Error::domain(format!("share vector has length {}, expected {n}", lambda.len())));
    }
    if options.threshold_factor.is_nan() || options.threshold_factor <= 1.0 {
        return Err(Error::domain(format!(
            "threshold factor must exceed 1, got {}",
            options.threshold_factor
        )));
    }
    let g = gini(lambda)?;
    let cutoff = options.threshold_factor / n as f64;
    let occupied: Vec<bool> = lambda.iter().map(|&x| x >= cutoff).collect();

    let linked = |a: usize, b: usize| -> bool {
        match (geo.ring_spacing(), options.radius) {
            (Some(_), _) => ring_steps(a, b, n) <= 1,
            (None, Some(r)) => geo.distances().get(a, b) <= r,
            (None, None) => false,
        }
    };

    // Connected components over occupied regions.
    let mut label = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if !occupied[start] || label[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![start];
        label[start] = id;
        let mut cursor = 0;
        while cursor < members.len() {
            let a = members[cursor];
            for b in 0..n {
                if occupied[b] && label[b] == usize::MAX && linked(a, b) {
                    label[b] = id;
                    members.push(b);
                }
            }
            cursor += 1;
        }
        clusters.push(members);
    }

    let mut peaks: Vec<usize> = clusters
        .iter()
        .map(|members| {
            *members
                .iter()
                .max_by(|&&a, &&b| lambda[a].total_cmp(&lambda[b]).then(b.cmp(&a)))
                .expect("clusters are non-empty")
        })
        .collect();
    peaks.sort_unstable();

    let (separations, min_separation) = if geo.ring_spacing().is_some() && peaks.len() >= 2 {
        let arcs: Vec<usize> = peaks
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let next = peaks[(i + 1) % peaks.len()];
                (next + n - p) % n
            })
            .collect();
        let min = peaks
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| peaks[i + 1..].iter().map(move |&b| ring_steps(a, b, n)))
            .min();
        (arcs, min)
    } else {
        (Vec::new(), None)
    };

    Ok(ConcentrationReport {
        gini: g,
        agglomeration_count: peaks.len(),
        peak_regions: peaks.iter().map(|&p| geo.regions()[p].id.clone()).collect(),
        peak_indices: peaks,
        separations,
        min_separation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::racetrack;

    #[test]
    fn gini_endpoints() {
        for n in 1..=40 {
            assert_eq!(gini(&vec![1.0 / n as f64; n]).unwrap(), 0.0);
        }
        let mut unit = vec![0.0; 10];
        unit[3] = 1.0;
        assert_eq!(gini(&unit).unwrap(), 0.9);
    }

    #[test]
    fn gini_half_split_of_four() {
        // Cumulative ascending shares (0, 0, 0, 0.5, 1): 1 - (0 + 0 + 0.5 + 1.5)/4.
        assert!((gini(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gini_rejects_bad_input() {
        assert!(gini(&[]).is_err());
        assert!(gini(&[1.2, -0.2]).is_err());
        assert!(gini(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn single_peak() {
        let geo = racetrack(12, 1.0).unwrap();
        let mut l = vec![0.0; 12];
        l[4] = 1.0;
        let r = count_agglomerations(&l, &geo, &ClassifierOptions::default()).unwrap();
        assert_eq!(r.agglomeration_count, 1);
        assert_eq!(r.peak_regions, vec!["r04".to_string()]);
        assert_eq!(r.min_separation, None);
    }

    #[test]
    fn two_peaks_five_apart() {
        let geo = racetrack(12, 1.0).unwrap();
        let mut l = vec![0.0; 12];
        l[0] = 0.5;
        l[5] = 0.5;
        let r = count_agglomerations(&l, &geo, &ClassifierOptions::default()).unwrap();
        assert_eq!(r.agglomeration_count, 2);
        assert_eq!(r.separations, vec![5, 7]);
        assert_eq!(r.min_separation, Some(5));
        assert!(!r.is_equidistant());
    }

    #[test]
    fn uniform_has_no_agglomeration() {
        let geo = racetrack(12, 1.0).unwrap();
        let r = count_agglomerations(&[1.0 / 12.0; 12], &geo, &ClassifierOptions::default()).unwrap();
        assert_eq!(r.agglomeration_count, 0);
        assert_eq!(r.gini, 0.0);
    }

    #[test]
    fn adjacent_occupied_regions_merge_across_the_seam() {
        let geo = racetrack(12, 1.0).unwrap();
        let mut l = vec![0.0; 12];
        l[11] = 0.2;
        l[0] = 0.3;
        l[4] = 0.25;
        l[8] = 0.25;
        let r = count_agglomerations(&l, &geo, &ClassifierOptions::default()).unwrap();
        assert_eq!(r.agglomeration_count, 3);
        assert_eq!(r.peak_indices, vec![0, 4, 8]);
        assert!(r.is_equidistant());
    }

    #[test]
    fn radius_links_general_geographies() {
        use crate::geodata::{DistanceMatrix, Geography, Region};
        let region = |id: &str| Region {
            id: id.into(),
            name: id.into(),
            latitude: 0.0,
            longitude: 0.0,
            lambda0: 1.0 / 3.0,
            phi: 1.0 / 3.0,
            w0: 1.0,
        };
        let d = DistanceMatrix::from_rows(vec![vec![0.0, 5.0, 50.0], vec![5.0, 0.0, 45.0], vec![50.0, 45.0, 0.0]]).unwrap();
        let geo = Geography::new(vec![region("a"), region("b"), region("c")], d).unwrap();
        let l = [0.45, 0.4, 0.15];
        let opts = ClassifierOptions {
            threshold_factor: 1.05,
            radius: Some(10.0),
        };
        let r = count_agglomerations(&l, &geo, &opts).unwrap();
        assert_eq!(r.agglomeration_count, 1);
        assert_eq!(r.peak_regions, vec!["a".to_string()]);
        let unlinked = ClassifierOptions { radius: None, ..opts };
        assert_eq!(count_agglomerations(&l, &geo, &unlinked).unwrap().agglomeration_count, 2);
    }
}
