use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{InstanceMeta, Pattern, ProblemInstance};
use crate::rng;

pub const STANDARD_NORMAL: &str = "standard_normal";

/// Random family `A_j = j^p C_j` with sparse symmetric Gaussian `C_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    /// Probability that an upper-triangle position (diagonal included) is stored.
    pub density: f64,
    pub joint_pattern: bool,
    pub seed: u64,
    /// Exponent `p` in `A_j = j^p C_j`.
    pub scaling: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n: 100,
            m: 100,
            density: 0.1,
            joint_pattern: true,
            seed: 0,
            scaling: 1.5,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < 2 {
            return Err(Error::InvalidArgument("n and m must be at least 2".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !self.scaling.is_finite() {
            return Err(Error::InvalidArgument("scaling must be finite".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_pattern(n: usize, density: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut pos = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.random_bool(density) {
                pos.push((i, j));
            }
        }
    }
    pos
}

/// Draws an instance from one sequential stream: the pattern (shared or per
/// matrix) followed by the values of `C_1, ..., C_m` in pattern order.
/// The operator norm is computed and cached.
pub fn generate(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::GENERATOR);
    let (n, m) = (spec.n, spec.m);
    let scale = |j: usize| (j as f64).powf(spec.scaling);
    let meta = InstanceMeta {
        density: Some(spec.density),
        seed: Some(spec.seed),
        scaling: Some(spec.scaling),
        value_distribution: STANDARD_NORMAL.into(),
    };
    let inst = if spec.joint_pattern {
        let pattern = Arc::new(Pattern::new(n, draw_pattern(n, spec.density, &mut rng))?);
        let values = (1..=m)
            .map(|j| {
                let s = scale(j);
                (0..pattern.len())
                    .map(|_| s * normal(&mut rng))
                    .collect()
            })
            .collect();
        ProblemInstance::from_parts(pattern, values, None, None, true, meta)?
    } else {
        let mut per_matrix = Vec::with_capacity(m);
        for j in 1..=m {
            let pos = draw_pattern(n, spec.density, &mut rng);
            let s = scale(j);
            let trip: Vec<(usize, usize, f64)> = pos
                .into_iter()
                .map(|(r, c)| (r, c, s * normal(&mut rng)))
                .collect();
            per_matrix.push(crate::linalg::SparseSymMatrix::from_triplets(n, trip)?);
        }
        ProblemInstance::new(per_matrix, None, None)?.with_meta(meta)
    };
    inst.lipschitz_constant(1e-7)?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_small_instance_follows_scaling() {
        let spec = GeneratorSpec {
            n: 2,
            m: 2,
            density: 1.0,
            seed: 5,
            ..GeneratorSpec::default()
        };
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.pattern().len(), 3);
        // replay the stream: three pattern draws, then C_1 and C_2 values
        let mut rng = rng::stream(5, rng::GENERATOR);
        for _ in 0..3 {
            assert!(rng.random_bool(1.0));
        }
        let c1: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
        let c2: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
        assert_eq!(inst.matrix(0).values(), &c1[..]);
        let s = 2f64.powf(1.5);
        for (a, c) in inst.matrix(1).values().iter().zip(&c2) {
            assert_eq!(*a, s * c);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = GeneratorSpec {
            n: 20,
            m: 5,
            seed: 3,
            ..GeneratorSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn pattern_size_concentrates() {
        let (n, p) = (40, 0.1);
        let total = (n * (n + 1) / 2) as f64;
        let sd = (total * p * (1.0 - p)).sqrt();
        for seed in 0..20 {
            let spec = GeneratorSpec {
                n,
                m: 2,
                density: p,
                seed,
                ..GeneratorSpec::default()
            };
            let nnz = generate(&spec).unwrap().pattern().len() as f64;
            assert!((nnz - p * total).abs() <= 4.0 * sd, "seed {seed}: {nnz}");
        }
    }

    #[test]
    fn joint_pattern_is_shared() {
        let inst = generate(&GeneratorSpec {
            n: 15,
            m: 6,
            seed: 1,
            ..GeneratorSpec::default()
        })
        .unwrap();
        assert!(inst.joint_pattern());
        let id = inst.matrix(0).pattern_id();
        assert!(inst.matrices().iter().all(|a| a.pattern_id() == id));
    }

    #[test]
    fn independent_patterns() {
        let inst = generate(&GeneratorSpec {
            n: 15,
            m: 4,
            seed: 1,
            joint_pattern: false,
            ..GeneratorSpec::default()
        })
        .unwrap();
        assert!(!inst.joint_pattern());
        assert!(inst.lipschitz().unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_density() {
        for d in [0.0, 1.5, f64::NAN] {
            let spec = GeneratorSpec {
                density: d,
                ..GeneratorSpec::default()
            };
            assert!(generate(&spec).is_err());
        }
    }
}
