//! Small summary statistics used by diagnostics and the benchmark harness.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Least-squares slope of `ln y` against `ln x`. `None` when fewer than two
/// points are given or some value is not strictly positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Mean, sample standard deviation and a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let count = values.len();
        if count == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        if count == 1 {
            return Some(Summary {
                count,
                mean,
                std: 0.0,
                ci_low: mean,
                ci_high: mean,
            });
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        let std = var.sqrt();
        let dof = (count - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, dof).ok()?.inverse_cdf(0.975);
        let half = t * std / (count as f64).sqrt();
        Some(Summary {
            count,
            mean,
            std,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn t_interval_matches_table() {
        // ten samples: t_{0.975, 9} = 2.2622
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let s = Summary::of(&v).unwrap();
        assert!((s.mean - 4.5).abs() < 1e-12);
        let half = 2.262_157 * s.std / 10f64.sqrt();
        assert!((s.ci_high - s.mean - half).abs() < 1e-5);
    }
}
