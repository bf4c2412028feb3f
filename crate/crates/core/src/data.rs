//! Seeded synthetic long-tailed datasets and stratified splitting.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::ClassStats;
use crate::rng::{seeded, Stream};

/// Train-split class counts of the COVIDx (v8) chest X-ray data:
/// COVID-19, Pneumonia, Normal.
pub const COVIDX_TRAIN: [u64; 3] = [4649, 5964, 8751];

/// Test-split class counts in the same class order.
pub const COVIDX_TEST: [u64; 3] = [274, 105, 100];

pub fn covidx_counts() -> ClassStats {
    ClassStats::new(COVIDX_TRAIN.to_vec()).expect("valid preset")
}

pub fn covidx_test_counts() -> ClassStats {
    ClassStats::new(COVIDX_TEST.to_vec()).expect("valid preset")
}

/// Isotropic Gaussian class clusters with prescribed per-class counts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GaussianSpec {
    pub counts: Vec<u64>,
    pub dims: usize,
    /// Minimum distance between any two class means.
    pub separation: f64,
    /// Within-class standard deviation.
    pub spread: f64,
    pub seed: u64,
}

impl GaussianSpec {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        ClassStats::new(self.counts.clone())?;
        if self.dims == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "must be at least 1",
            });
        }
        for (name, value) in [("separation", self.separation), ("spread", self.spread)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Class means for this spec.
    ///
    /// Means sit on a regular simplex (or, when `dims < k - 1`, a regular
    /// polygon or a line) with edge `1.1 * separation`, and each is then
    /// moved by a seeded jitter of norm at most `0.05 * separation`, so every
    /// pair stays at least `separation` apart.
    pub fn class_means(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let edge = 1.1 * self.separation;
        let mut means = base_means(self.k(), self.dims, edge);
        let mut rng = seeded(self.seed, Stream::Means);
        let radius = 0.05 * self.separation / libm::sqrt(self.dims as f64);
        for mean in &mut means {
            for v in mean.iter_mut() {
                *v += rng.random_range(-radius..=radius);
            }
        }
        Ok(means)
    }
}

fn base_means(k: usize, dims: usize, edge: f64) -> Vec<Vec<f64>> {
    let mut means = vec![vec![0.0; dims]; k];
    if dims + 1 >= k {
        // Standard basis vectors expressed in a Helmert basis of the
        // sum-zero subspace: pairwise distance sqrt(2), k - 1 coordinates.
        let scale = edge / core::f64::consts::SQRT_2;
        for (c, mean) in means.iter_mut().enumerate() {
            for i in 0..k - 1 {
                let norm = libm::sqrt(((i + 1) * (i + 2)) as f64);
                let coord = if c <= i {
                    1.0 / norm
                } else if c == i + 1 {
                    -((i + 1) as f64) / norm
                } else {
                    0.0
                };
                mean[i] = scale * coord;
            }
        }
    } else if dims >= 2 {
        let step = 2.0 * core::f64::consts::PI / k as f64;
        let radius = edge / (2.0 * libm::sin(core::f64::consts::PI / k as f64));
        for (c, mean) in means.iter_mut().enumerate() {
            mean[0] = radius * libm::cos(step * c as f64);
            mean[1] = radius * libm::sin(step * c as f64);
        }
    } else {
        for (c, mean) in means.iter_mut().enumerate() {
            mean[0] = edge * c as f64;
        }
    }
    means
}

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dims: usize,
    k: usize,
    provenance: Option<GaussianSpec>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dims: usize, k: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "must be at least 1",
            });
        }
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::LengthMismatch {
                what: "feature matrix",
                expected: labels.len() * dims,
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            features,
            labels,
            dims,
            k,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, spec: GaussianSpec) -> Self {
        self.provenance = Some(spec);
        self
    }

    pub fn provenance(&self) -> Option<&GaussianSpec> {
        self.provenance.as_ref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks_exact(self.dims)
            .zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Class counts as [`ClassStats`]; fails if any class is absent.
    pub fn class_stats(&self) -> Result<ClassStats> {
        ClassStats::new(self.class_counts())
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            dims: self.dims,
            k: self.k,
            provenance: self.provenance.clone(),
        }
    }
}

/// Draws the dataset described by `spec`. Rows are grouped by class in
/// label order.
pub fn generate(spec: &GaussianSpec) -> Result<Dataset> {
    let means = spec.class_means()?;
    let total: u64 = spec.counts.iter().sum();
    let mut features = Vec::with_capacity(total as usize * spec.dims);
    let mut labels = Vec::with_capacity(total as usize);
    let mut rng = seeded(spec.seed, Stream::Samples);
    for (c, (&count, mean)) in spec.counts.iter().zip(&means).enumerate() {
        for _ in 0..count {
            for &m in mean {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(m + spec.spread * noise);
            }
            labels.push(c);
        }
    }
    Ok(Dataset::new(features, labels, spec.dims, spec.k())?.with_provenance(spec.clone()))
}

/// Number of test rows for a class of size `n`: `round_half_up(n * f)`,
/// clamped so both sides keep at least one row.
pub fn test_count(n: u64, test_fraction: f64) -> u64 {
    let t = libm::floor(n as f64 * test_fraction + 0.5) as u64;
    t.clamp(1, n - 1)
}

/// Per-class random split into `(train, test)`. Both halves keep the
/// original row order.
pub fn stratified_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "test_fraction",
            reason: "must lie in (0, 1)",
        });
    }
    let mut by_class = vec![Vec::new(); d.k];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seeded(seed, Stream::Split);
    let mut is_test = vec![false; d.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        let n = members.len() as u64;
        if n < 2 {
            return Err(Error::ClassTooSmall { class, count: n });
        }
        members.shuffle(&mut rng);
        for &i in &members[..test_count(n, test_fraction) as usize] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| is_test[i]);
    Ok((d.subset(&train), d.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(counts: Vec<u64>, dims: usize) -> GaussianSpec {
        GaussianSpec {
            counts,
            dims,
            separation: 2.0,
            spread: 1.0,
            seed: 17,
        }
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
    }

    #[test]
    fn covidx_preset() {
        let s = covidx_counts();
        assert_eq!(s.counts(), &[4649, 5964, 8751]);
        assert_eq!(s.total(), 19_364);
        assert_eq!(s.k(), 3);
        assert_eq!(covidx_test_counts().total(), 479);
    }

    #[test]
    fn small_generation() {
        let d = generate(&spec(vec![3, 3], 2)).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d.labels(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(d.features().len(), 12);
        assert_eq!(d.provenance().unwrap().seed, 17);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(vec![50, 7, 3], 4);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = GaussianSpec { seed: 18, ..s.clone() };
        assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn means_are_separated() {
        for (k, dims) in [(2, 1), (3, 1), (3, 2), (5, 2), (4, 3), (6, 8), (10, 2)] {
            let s = GaussianSpec { separation: 3.0, ..spec(vec![1; k], dims) };
            let means = s.class_means().unwrap();
            for i in 0..k {
                for j in i + 1..k {
                    assert!(dist(&means[i], &means[j]) >= 3.0, "k={k} dims={dims}");
                }
            }
        }
    }

    #[test]
    fn simplex_is_equidistant_before_jitter() {
        let means = base_means(4, 3, 1.5);
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((dist(&means[i], &means[j]) - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_means_match() {
        let s = GaussianSpec {
            counts: vec![2000, 400, 60],
            dims: 2,
            separation: 2.0,
            spread: 0.8,
            seed: 5,
        };
        let means = s.class_means().unwrap();
        let d = generate(&s).unwrap();
        for (c, &count) in s.counts.iter().enumerate() {
            let tol = 3.0 * s.spread / libm::sqrt(count as f64);
            for dim in 0..2 {
                let avg = d.rows().filter(|r| r.1 == c).map(|r| r.0[dim]).sum::<f64>() / count as f64;
                assert!((avg - means[c][dim]).abs() < tol, "class {c} dim {dim}");
            }
        }
        assert_eq!(d.class_stats().unwrap().imbalance_ratio(), 2000.0 / 60.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&spec(vec![3, 0], 2)).is_err());
        assert!(generate(&spec(vec![3], 2)).is_err());
        assert!(generate(&spec(vec![3, 3], 0)).is_err());
        assert!(generate(&GaussianSpec { spread: 0.0, ..spec(vec![3, 3], 2) }).is_err());
        assert!(generate(&GaussianSpec { separation: -1.0, ..spec(vec![3, 3], 2) }).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![0.0; 4], vec![0, 1], 2, 2).is_ok());
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
        assert_eq!(
            Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2),
            Err(Error::LabelOutOfRange { label: 2, k: 2 })
        );
        assert!(Dataset::new(vec![f64::NAN, 0.0], vec![0], 2, 2).is_err());
    }

    #[test]
    fn split_examples() {
        let d = generate(&spec(vec![10, 10], 2)).unwrap();
        let (train, test) = stratified_split(&d, 0.2, 1).unwrap();
        assert_eq!(test.class_counts(), vec![2, 2]);
        assert_eq!(train.class_counts(), vec![8, 8]);

        let d = generate(&spec(vec![2000, 400, 60], 2)).unwrap();
        let (train, test) = stratified_split(&d, 0.25, 3).unwrap();
        assert_eq!(test.class_counts(), vec![500, 100, 15]);
        assert_eq!(train.class_counts(), vec![1500, 300, 45]);
        assert_eq!(stratified_split(&d, 0.25, 3).unwrap(), (train, test));
    }

    #[test]
    fn split_errors() {
        let d = Dataset::new(vec![0.0; 3], vec![0, 0, 1], 1, 2).unwrap();
        assert_eq!(
            stratified_split(&d, 0.5, 0),
            Err(Error::ClassTooSmall { class: 1, count: 1 })
        );
        assert!(stratified_split(&d, 0.0, 0).is_err());
        assert!(stratified_split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn test_count_rounding() {
        assert_eq!(test_count(10, 0.25), 3);
        assert_eq!(test_count(10, 0.2), 2);
        assert_eq!(test_count(2, 0.01), 1);
        assert_eq!(test_count(2, 0.99), 1);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            counts in prop::collection::vec(2u64..40, 2..5),
            frac in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let d = generate(&spec(counts.clone(), 3)).unwrap();
            let (train, test) = stratified_split(&d, frac, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), d.len());
            for (c, &n) in counts.iter().enumerate() {
                prop_assert_eq!(train.class_counts()[c] + test.class_counts()[c], n);
                prop_assert_eq!(test.class_counts()[c], test_count(n, frac));
            }
            // Every original row lands in exactly one partition.
            let mut all: Vec<(u64, u64, usize)> = Vec::new();
            for part in [&train, &test] {
                all.extend(part.rows().map(|(r, l)| (r[0].to_bits(), r[1].to_bits(), l)));
            }
            let mut orig: Vec<(u64, u64, usize)> = d.rows().map(|(r, l)| (r[0].to_bits(), r[1].to_bits(), l)).collect();
            all.sort_unstable();
            orig.sort_unstable();
            prop_assert_eq!(all, orig);
        }
    }
}
