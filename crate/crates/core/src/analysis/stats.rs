//! Paired two-tailed Student's t-test.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed p-value.
    pub p: f64,
}

/// Paired t-test on `a − b`.
///
/// The two-tailed tail mass of Student's t with ν degrees of freedom is the
/// regularized incomplete beta `I_{ν/(ν+t²)}(ν/2, ½)`. All-zero differences
/// give `t = 0, p = 1`; zero spread with a nonzero mean gives `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest { t: mean.signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let nu = df as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t)).clamp(0.0, 1.0);
    Ok(TTest { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.5];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn df4_reference() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t_test(&d, &[0.0; 5]).unwrap();
        assert!((r.t - 4.2426).abs() < 1e-4);
        assert_eq!(r.df, 4);
        assert!((r.p - 0.0132).abs() < 5e-4, "p = {}", r.p);
    }

    #[test]
    fn alternating_differences() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_shift() {
        let r = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn antisymmetric() {
        let a = [0.3, 1.2, 0.7, 2.2, 0.1];
        let b = [0.1, 0.9, 0.9, 1.0, 0.0];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
    }

    #[test]
    fn errors() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }
}
