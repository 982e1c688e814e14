//! Analytic gradients of every training loss against central finite
//! differences on small networks.

use ndarray::Array2;
use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use vsi::baselines::{aft_loglik, direct_batch_loglik, noq_batch_loglik, AftCoefficients, NoqNets, Observations};
use vsi::gaussian::{kl_terms, kl_terms_grad};
use vsi::model::{batch_elbo, EncodedRows, TrainConfig, VsiNets};
use vsi::nn::{Mlp, Parameters};
use vsi::seed::Rng;

const CASES: usize = 20;
const RTOL: f64 = 1e-4;
const ATOL: f64 = 1e-8;
const STEP: f64 = 1e-5;
const COVARIATES: usize = 2;
const BINS: usize = 6;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 3,
        prior_hidden: vec![8, 8],
        encoder_hidden: vec![8, 8],
        decoder_hidden: vec![8, 8, 8],
        mlp_hidden: vec![8, 8],
        ..TrainConfig::default()
    }
}

fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn nudge<P: Parameters>(p: &P, index: usize, delta: f64) -> P {
    let mut q = p.clone();
    let mut offset = 0;
    q.visit_mut("", &mut |_, a| {
        if index >= offset && index < offset + a.len() {
            a[index - offset] += delta;
        }
        offset += a.len();
    });
    q
}

/// Compares `analytic` with central differences of `loss` at every coordinate.
fn check<P: Parameters>(label: &str, params: &P, analytic: &P, loss: impl Fn(&P) -> f64) {
    let g = analytic.flatten();
    for (k, &a) in g.iter().enumerate() {
        let numeric = (loss(&nudge(params, k, STEP)) - loss(&nudge(params, k, -STEP))) / (2.0 * STEP);
        let tol = RTOL * a.abs().max(numeric.abs()) + ATOL;
        assert!((a - numeric).abs() <= tol, "{label}: {} analytic {a:e} numeric {numeric:e}", params.name_of(k));
    }
}

fn one_row(rng: &mut Rng, event: bool) -> EncodedRows {
    let x = normals(rng, COVARIATES);
    let mut target: Vec<f64> = (0..BINS).map(|_| rng.random::<f64>()).collect();
    let total: f64 = target.iter().sum();
    target.iter_mut().for_each(|v| *v /= total);
    let encoder_input: Vec<f64> = x.iter().chain(&target).copied().collect();
    EncodedRows {
        x: Array2::from_shape_vec((1, COVARIATES), x).unwrap(),
        encoder_input: Array2::from_shape_vec((1, COVARIATES + BINS), encoder_input).unwrap(),
        bins: vec![rng.random_range(0..BINS)],
        events: vec![event],
    }
}

fn elbo_case(event: bool, seed: u64) {
    let cfg = tiny_config();
    for case in 0..CASES {
        let mut rng = Rng::seed_from_u64(seed + case as u64);
        let nets = VsiNets::new(COVARIATES, BINS, &cfg, &mut rng);
        let rows = one_row(&mut rng, event);
        let eps = Array2::from_shape_vec((1, cfg.latent_dim), normals(&mut rng, cfg.latent_dim)).unwrap();
        let mut grads = nets.zeroed();
        batch_elbo(&nets, &rows, eps.view(), Some(&mut grads)).unwrap();
        let loss = |p: &VsiNets| -batch_elbo(p, &rows, eps.view(), None).unwrap()[0];
        check(if event { "elbo_event" } else { "elbo_censored" }, &nets, &grads, loss);
    }
}

pub fn elbo_event_gradient() {
    elbo_case(true, 100);
}

pub fn elbo_censored_gradient() {
    elbo_case(false, 200);
}

pub fn noq_loss_gradient() {
    let cfg = tiny_config();
    let draws = 4;
    for case in 0..CASES {
        let mut rng = Rng::seed_from_u64(300 + case as u64);
        let nets = NoqNets::new(COVARIATES, BINS, &cfg, &mut rng);
        let obs = Observations {
            x: Array2::from_shape_vec((1, COVARIATES), normals(&mut rng, COVARIATES)).unwrap(),
            bins: vec![rng.random_range(0..BINS)],
            events: vec![case % 2 == 0],
        };
        let eps = Array2::from_shape_vec((draws, cfg.latent_dim), normals(&mut rng, draws * cfg.latent_dim)).unwrap();
        let mut grads = nets.zeroed();
        noq_batch_loglik(&nets, &obs, eps.view(), draws, Some(&mut grads)).unwrap();
        let loss = |p: &NoqNets| -noq_batch_loglik(p, &obs, eps.view(), draws, None).unwrap().0[0];
        check("noq_loss", &nets, &grads, loss);
    }
}

pub fn direct_mlp_loss_gradient() {
    let cfg = tiny_config();
    for case in 0..CASES {
        let mut rng = Rng::seed_from_u64(400 + case as u64);
        let mut widths = vec![COVARIATES];
        widths.extend(&cfg.mlp_hidden);
        widths.push(BINS);
        let net = Mlp::new(&widths, cfg.leaky_slope, &mut rng);
        let obs = Observations {
            x: Array2::from_shape_vec((1, COVARIATES), normals(&mut rng, COVARIATES)).unwrap(),
            bins: vec![rng.random_range(0..BINS)],
            events: vec![case % 2 == 1],
        };
        let mut grads = net.zeroed();
        direct_batch_loglik(&net, &obs, None, Some(&mut grads)).unwrap();
        let loss = |p: &Mlp| -direct_batch_loglik(p, &obs, None, None).unwrap()[0];
        check("direct_mlp_loss", &net, &grads, loss);
    }
}

pub fn aft_loglik_gradient() {
    for case in 0..CASES {
        let mut rng = Rng::seed_from_u64(500 + case as u64);
        let coefs = AftCoefficients {
            mu: rng.sample(StandardNormal),
            log_sigma: 0.5 * rng.sample::<f64, _>(StandardNormal),
            theta: normals(&mut rng, 3),
        };
        let x = normals(&mut rng, 3);
        let t = rng.random_range(0.05..5.0);
        let event = case % 2 == 0;
        let mut grads = coefs.zeroed();
        aft_loglik(&coefs, &x, t, event, Some((&mut grads, 1.0)));
        check("aft_loglik", &coefs, &grads, |p| aft_loglik(p, &x, t, event, None));
    }
}

/// Four concatenated Gaussian parameter vectors, so the KL gradient can go
/// through the same checker.
#[derive(Clone)]
struct KlArgs(Vec<f64>);

impl Parameters for KlArgs {
    fn visit(&self, _: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f("kl", &self.0);
    }

    fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("kl", &mut self.0);
    }
}

pub fn kl_gradient() {
    let d = 4;
    let kl = |a: &KlArgs| kl_terms(&a.0[..d], &a.0[d..2 * d], &a.0[2 * d..3 * d], &a.0[3 * d..]);
    for case in 0..CASES {
        let mut rng = Rng::seed_from_u64(600 + case as u64);
        let args = KlArgs(normals(&mut rng, 4 * d));
        let mut g = vec![0.0; 4 * d];
        let (qm, rest) = g.split_at_mut(d);
        let (qlv, rest) = rest.split_at_mut(d);
        let (pm, plv) = rest.split_at_mut(d);
        kl_terms_grad(
            &args.0[..d],
            &args.0[d..2 * d],
            &args.0[2 * d..3 * d],
            &args.0[3 * d..],
            1.0,
            (qm, qlv, pm, plv),
        );
        check("kl", &args, &KlArgs(g), kl);
    }
}

pub fn all() {
    elbo_event_gradient();
    elbo_censored_gradient();
    noq_loss_gradient();
    direct_mlp_loss_gradient();
    aft_loglik_gradient();
    kl_gradient();
}
