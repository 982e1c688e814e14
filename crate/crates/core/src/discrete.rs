//! Log-likelihood of an observed (bin, event) pair under a softmax over the
//! `M + 1` time bins.
//!
//! An event in bin `b` contributes `log p[b]`; a subject censored in bin `b`
//! contributes the log of the mass strictly after `b`. Censoring in the
//! overflow bin has no later bins, so its tail is the overflow bin itself.

use std::ops::Range;

/// Bins whose mass counts as survival past a censoring in `bin`.
pub fn tail_bins(bin: usize, num_bins: usize) -> Range<usize> {
    if bin + 1 >= num_bins {
        num_bins - 1..num_bins
    } else {
        bin + 1..num_bins
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// Observation log-likelihood from logits, optionally writing
/// `d loglik / d logits` into `grad` (overwritten, not accumulated).
pub fn observation_loglik(logits: &[f64], bin: usize, event: bool, grad: Option<&mut [f64]>) -> f64 {
    let lse_all = log_sum_exp(logits);
    let (value, tail) = if event {
        (logits[bin] - lse_all, bin..bin + 1)
    } else {
        let tail = tail_bins(bin, logits.len());
        (log_sum_exp(&logits[tail.clone()]) - lse_all, tail)
    };
    if let Some(g) = grad {
        // Target distribution restricted to the observed bins minus the softmax.
        let lse_tail = value + lse_all;
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (logits[k] - lse_all).exp();
            let r = if tail.contains(&k) { (logits[k] - lse_tail).exp() } else { 0.0 };
            *gk = r - p;
        }
    }
    value
}

/// Observation log-likelihood from a probability vector.
pub fn observation_loglik_pmf(pmf: &[f64], bin: usize, event: bool) -> f64 {
    if event {
        pmf[bin].ln()
    } else {
        pmf[tail_bins(bin, pmf.len())].iter().sum::<f64>().ln()
    }
}

/// `S(b) = sum of pmf over bins after b`; `S(M) = 0` for the overflow bin.
pub fn survival_after(pmf: &[f64], bin: usize) -> f64 {
    pmf.iter().skip(bin + 1).sum()
}

/// `F(b) = sum of pmf over bins up to and including b`.
pub fn cdf_through(pmf: &[f64], bin: usize) -> f64 {
    pmf.iter().take(bin + 1).sum()
}
