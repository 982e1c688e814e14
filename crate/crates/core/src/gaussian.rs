//! Diagonal Gaussians parameterized by mean and log-variance.

use rand_distr::{Distribution, StandardNormal};

use crate::seed::Rng;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

pub fn clamp_log_var(v: f64) -> f64 {
    v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_var.len(), "mean/log-variance length mismatch");
        let log_var = log_var.into_iter().map(clamp_log_var).collect();
        Self { mean, log_var }
    }

    /// Splits a network output `mean || log_var` and clamps the log-variance.
    pub fn from_network_output(raw: &[f64]) -> Self {
        assert!(raw.len() % 2 == 0, "network output must have even width");
        let m = raw.len() / 2;
        Self::new(raw[..m].to_vec(), raw[m..].to_vec())
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], log_var: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        log_density(&self.mean, &self.log_var, z)
    }

    /// Reparameterized draw `mean + exp(log_var / 2) * eps`.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_var)
            .map(|(m, lv)| {
                let e: f64 = StandardNormal.sample(rng);
                m + (0.5 * lv).exp() * e
            })
            .collect()
    }
}

/// `log N(z; mean, diag(exp(log_var)))`.
pub fn log_density(mean: &[f64], log_var: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((m, lv), zi) in mean.iter().zip(log_var).zip(z) {
        let d = zi - m;
        acc += lv + d * d * (-lv).exp() + LN_2PI;
    }
    -0.5 * acc
}

/// Closed-form `KL(q || p)` for diagonal Gaussians.
pub fn kl_diag_gaussian(q: &GaussianDiag, p: &GaussianDiag) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL between Gaussians of different dimension");
    kl_terms(&q.mean, &q.log_var, &p.mean, &p.log_var)
}

pub fn kl_terms(q_mean: &[f64], q_lv: &[f64], p_mean: &[f64], p_lv: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..q_mean.len() {
        let r = q_lv[i] - p_lv[i];
        let d = p_mean[i] - q_mean[i];
        // exp(r) - 1 - r >= 0 and vanishes exactly at r = 0.
        acc += (r.exp_m1() - r) + d * d * (-p_lv[i]).exp();
    }
    0.5 * acc
}

/// Gradients of `kl_terms` accumulated (scaled by `scale`) into the four
/// output slices, in the order `(q_mean, q_lv, p_mean, p_lv)`.
pub fn kl_terms_grad(
    q_mean: &[f64],
    q_lv: &[f64],
    p_mean: &[f64],
    p_lv: &[f64],
    scale: f64,
    grads: (&mut [f64], &mut [f64], &mut [f64], &mut [f64]),
) {
    let (g_qm, g_qlv, g_pm, g_plv) = grads;
    for i in 0..q_mean.len() {
        let inv_p = (-p_lv[i]).exp();
        let ratio = (q_lv[i] - p_lv[i]).exp();
        let d = q_mean[i] - p_mean[i];
        g_qm[i] += scale * d * inv_p;
        g_pm[i] -= scale * d * inv_p;
        g_qlv[i] += scale * 0.5 * (ratio - 1.0);
        g_plv[i] += scale * 0.5 * (1.0 - ratio - d * d * inv_p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn kl_identity_is_exactly_zero() {
        let q = GaussianDiag::new(vec![0.3, -1.2], vec![0.7, -3.0]);
        assert_eq!(kl_diag_gaussian(&q, &q), 0.0);
    }

    #[test]
    fn kl_unit_shift() {
        let q = GaussianDiag::new(vec![1.0], vec![0.0]);
        let p = GaussianDiag::standard(1);
        assert!((kl_diag_gaussian(&q, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_variance_e() {
        let q = GaussianDiag::new(vec![0.0], vec![1.0]);
        let p = GaussianDiag::standard(1);
        let expect = 0.5 * (std::f64::consts::E - 1.0 - 1.0);
        assert!((kl_diag_gaussian(&q, &p) - expect).abs() < 1e-15);
        assert!((expect - 0.3591).abs() < 1e-4);
    }

    #[test]
    fn kl_gradient_vanishes_at_match() {
        let (m, lv) = (vec![0.4, -0.1], vec![0.2, 1.5]);
        let mut g = [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
        let [a, b, c, d] = &mut g;
        kl_terms_grad(&m, &lv, &m, &lv, 1.0, (a, b, c, d));
        assert!(g.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn clamp_applies() {
        let d = GaussianDiag::from_network_output(&[0.0, 50.0]);
        assert_eq!(d.log_var, vec![10.0]);
        let d = GaussianDiag::from_network_output(&[0.0, -50.0]);
        assert_eq!(d.log_var, vec![-10.0]);
    }

    #[test]
    fn tiny_variance_sample_near_mean() {
        let d = GaussianDiag::new(vec![2.0, -1.0], vec![-10.0, -10.0]);
        let mut rng = Rng::seed_from_u64(5);
        let z = d.sample(&mut rng);
        for (zi, m) in z.iter().zip(&d.mean) {
            assert!((zi - m).abs() < 0.01 * 5.0);
        }
    }

    #[test]
    fn sample_mean_within_three_se() {
        let d = GaussianDiag::new(vec![1.5], vec![(4.0f64).ln()]);
        let mut rng = Rng::seed_from_u64(9);
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn same_seed_same_draw() {
        let d = GaussianDiag::standard(3);
        let a = d.sample(&mut Rng::seed_from_u64(1));
        let b = d.sample(&mut Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn log_density_standard_normal_at_zero() {
        let d = GaussianDiag::standard(2);
        assert!((d.log_density(&[0.0, 0.0]) + LN_2PI).abs() < 1e-15);
    }
}
