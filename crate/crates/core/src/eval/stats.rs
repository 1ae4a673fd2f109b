use serde::Serialize;
use statrs::function::beta::beta_reg;

use super::EvalError;

/// One-tailed paired t-test of `H1: mean(a − b) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub t: f64,
    pub df: usize,
    pub p_one_tailed: f64,
    pub significant: bool,
    pub mean_diff: f64,
    /// Set when all differences are identical, so the standard deviation is zero.
    pub degenerate: bool,
}

/// `P(T > t)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function.
pub fn student_t_upper_tail(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Zero-variance differences: a zero mean gives `t = 0, p = 0.5`; a positive
/// mean gives `t = +∞, p = 0`; a negative mean `t = −∞, p = 1`. All three are
/// flagged as degenerate.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<SignificanceResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::InsufficientData(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p, degenerate) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 0.5, true)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0, true)
        } else {
            (f64::NEG_INFINITY, 1.0, true)
        }
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        (t, student_t_upper_tail(t, df as f64), false)
    };
    Ok(SignificanceResult {
        t,
        df,
        p_one_tailed: p,
        significant: p < alpha,
        mean_diff: mean,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 0.05).unwrap();
        // mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt(5)) = 3·sqrt(2)
        assert!((r.t - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 4);
        assert!((r.p_one_tailed - 0.0066).abs() < 1e-3);
        assert!(r.significant);
    }

    #[test]
    fn degenerate_cases() {
        let r = paired_t_test(&[1.0, 1.0], &[1.0, 1.0], 0.05).unwrap();
        assert_eq!(
            (r.t, r.p_one_tailed, r.significant, r.degenerate),
            (0.0, 0.5, false, true)
        );
        let r = paired_t_test(&[2.0, 3.0], &[1.0, 2.0], 0.05).unwrap();
        assert_eq!(r.p_one_tailed, 0.0);
        assert!(r.degenerate && r.significant);
        let r = paired_t_test(&[0.0, 1.0], &[1.0, 2.0], 0.05).unwrap();
        assert_eq!(r.p_one_tailed, 1.0);
        assert!(matches!(
            paired_t_test(&[1.0], &[0.0], 0.05),
            Err(EvalError::InsufficientData(1))
        ));
    }
}
