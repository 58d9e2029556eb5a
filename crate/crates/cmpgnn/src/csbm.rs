//! Conditional stochastic block model generator.
//!
//! Produces one domain at a time: block-model edges (same probabilities for
//! both domains eliminate structural shift) plus class-conditional isotropic
//! Gaussian features. Covariate shift comes from shifting the target class
//! means, label shift from flipping the class ratios.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graphstore::{build_graph, DomainTag, Graph};
use crate::numkernel::DenseMatrix;

/// One domain's generation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CsbmSpec {
    pub num_classes: usize,
    /// Nodes per class; node ids are laid out as consecutive class blocks.
    pub class_counts: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Per-class feature means, `num_classes` rows of `feature_dim` values.
    pub class_means: Vec<Vec<f64>>,
    /// Per-class isotropic standard deviation.
    pub class_stddevs: Vec<f64>,
    pub feature_dim: usize,
    pub seed: u64,
}

impl CsbmSpec {
    pub fn node_count(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.class_counts.len() != self.num_classes {
            return Err(Error::Validation(format!(
                "{} class counts for {} classes",
                self.class_counts.len(),
                self.num_classes
            )));
        }
        if self.class_counts.iter().any(|&c| c == 0) {
            return Err(Error::Validation("every class count must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p_inter)
            || !(0.0..=1.0).contains(&self.p_intra)
            || self.p_inter > self.p_intra
        {
            return Err(Error::Validation(format!(
                "need 0 <= p_inter <= p_intra <= 1, got p_intra={} p_inter={}",
                self.p_intra, self.p_inter
            )));
        }
        if self.class_means.len() != self.num_classes
            || self.class_means.iter().any(|m| m.len() != self.feature_dim)
        {
            return Err(Error::Validation(
                "class means must be num_classes rows of feature_dim values".into(),
            ));
        }
        if self.class_stddevs.len() != self.num_classes
            || self.class_stddevs.iter().any(|&s| s <= 0.0)
        {
            return Err(Error::Validation(
                "need one stddev > 0 per class".into(),
            ));
        }
        Ok(())
    }
}

/// Sample one domain. Iteration order is fixed (labels, then the upper
/// triangle of node pairs, then per-node features), so a given rng state
/// reproduces bitwise.
pub fn generate_domain(spec: &CsbmSpec, domain: DomainTag, rng: &mut ChaCha8Rng) -> Result<Graph> {
    spec.validate()?;
    let n = spec.node_count();

    let mut labels = Vec::with_capacity(n);
    for (class, &count) in spec.class_counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class).take(count));
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if p > 0.0 && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut values = Vec::with_capacity(n * spec.feature_dim);
    for &label in &labels {
        let mean = &spec.class_means[label];
        let sd = spec.class_stddevs[label];
        for d in 0..spec.feature_dim {
            let z: f64 = StandardNormal.sample(rng);
            values.push(mean[d] + sd * z);
        }
    }
    let features = DenseMatrix::from_vec(n, spec.feature_dim, values)?;
    build_graph(&edges, features, Some(labels), domain)
}

/// Sample a source/target pair from two specs sharing the class set and
/// feature dimension. Each domain consumes its own rng.
pub fn generate_shift_pair(
    source_spec: &CsbmSpec,
    target_spec: &CsbmSpec,
    rng_source: &mut ChaCha8Rng,
    rng_target: &mut ChaCha8Rng,
) -> Result<(Graph, Graph)> {
    if source_spec.num_classes != target_spec.num_classes {
        return Err(Error::Validation(format!(
            "class count mismatch: {} vs {}",
            source_spec.num_classes, target_spec.num_classes
        )));
    }
    if source_spec.feature_dim != target_spec.feature_dim {
        return Err(Error::Validation(format!(
            "feature dimension mismatch: {} vs {}",
            source_spec.feature_dim, target_spec.feature_dim
        )));
    }
    let source = generate_domain(source_spec, DomainTag::Source, rng_source)?;
    let target = generate_domain(target_spec, DomainTag::Target, rng_target)?;
    Ok((source, target))
}

/// The two-class label-shift benchmark: p_intra = 0.08, p_inter = 0.02,
/// 400 nodes per domain with class ratios 3:1 (source) vs 1:3 (target), and
/// target means shifted by +0.5 in every coordinate to add covariate shift.
pub fn shift_fixture_specs(seed: u64) -> (CsbmSpec, CsbmSpec) {
    shift_fixture_specs_scaled(seed, 400)
}

/// Same benchmark at an arbitrary per-domain node count (3:1 vs 1:3 split).
/// Class means occupy disjoint coordinate blocks so the cross-domain shift
/// moves both classes without erasing either class's direction.
pub fn shift_fixture_specs_scaled(seed: u64, nodes_per_domain: usize) -> (CsbmSpec, CsbmSpec) {
    let d = 16;
    let major = nodes_per_domain * 3 / 4;
    let minor = nodes_per_domain - major;
    let mean_a: Vec<f64> = (0..d).map(|i| if i < d / 2 { 1.0 } else { 0.0 }).collect();
    let mean_b: Vec<f64> = (0..d).map(|i| if i < d / 2 { 0.0 } else { 1.0 }).collect();
    let shift = 0.5;
    let source = CsbmSpec {
        num_classes: 2,
        class_counts: vec![major, minor],
        p_intra: 0.08,
        p_inter: 0.02,
        class_means: vec![mean_a.clone(), mean_b.clone()],
        class_stddevs: vec![1.0, 1.0],
        feature_dim: d,
        seed,
    };
    let target = CsbmSpec {
        class_counts: vec![minor, major],
        class_means: vec![
            mean_a.iter().map(|m| m + shift).collect(),
            mean_b.iter().map(|m| m + shift).collect(),
        ],
        seed: seed ^ 0x9e3779b97f4a7c15,
        ..source.clone()
    };
    (source, target)
}
