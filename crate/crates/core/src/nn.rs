//! Dense networks with hand-written reverse-mode gradients, and Adam.
//!
//! Every loss in this crate is a composition of [`Mlp`] evaluations and
//! elementwise closed forms, so gradients are propagated explicitly: a loss
//! computes `d loss / d output` for each network it used and hands that to
//! [`Mlp::backward`] together with the cache from [`Mlp::forward_cached`].

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Visits every trainable array of a model under a stable name.
pub trait Parameters: Clone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, a| out.extend_from_slice(a));
        out
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, a| a.fill(0.0));
        z
    }

    /// Name of the array holding flat coordinate `index`.
    fn name_of(&self, index: usize) -> String {
        let mut offset = 0;
        let mut found = String::new();
        self.visit("", &mut |name, a| {
            if found.is_empty() && index < offset + a.len() {
                found = format!("{name}[{}]", index - offset);
            }
            offset += a.len();
        });
        found
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine layer; `weight` is `in x out` so a batch maps as `x . W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multilayer perceptron: leaky-ReLU on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub slope: f64,
}

/// Intermediate values of one forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    dropout_masks: Vec<Option<Array2<f64>>>,
}

fn leaky(slope: f64) -> impl Fn(f64) -> f64 {
    move |v| if v > 0.0 { v } else { slope * v }
}

impl Mlp {
    /// He-style fan-in scaled normal weights, zero biases.
    pub fn new(widths: &[usize], slope: f64, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0), "invalid widths {widths:?}");
        let layers = widths
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                let weight = Array2::from_shape_fn((w[0], w[1]), |_| {
                    let e: f64 = StandardNormal.sample(rng);
                    std * e
                });
                Dense { weight, bias: Array1::zeros(w[1]) }
            })
            .collect();
        Self { layers, slope }
    }

    pub fn zeros(widths: &[usize], slope: f64) -> Self {
        assert!(widths.len() >= 2, "invalid widths {widths:?}");
        let layers = widths
            .windows(2)
            .map(|w| Dense { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers, slope }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.bias.len()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("at least one layer").bias.len()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Shape { expected: self.input_width(), actual: x.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let act = leaky(self.slope);
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if i < last {
                h.mapv_inplace(&act);
            }
        }
        Ok(h)
    }

    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that keeps what backpropagation needs. With
    /// `dropout = Some((rate, rng))` inverted dropout is applied to every
    /// hidden activation.
    pub fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        mut dropout: Option<(f64, &mut Rng)>,
    ) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&x)?;
        let act = leaky(self.slope);
        let last = self.layers.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(last),
            dropout_masks: Vec::with_capacity(last),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = h.dot(&layer.weight) + &layer.bias;
            cache.inputs.push(h);
            if i == last {
                h = pre;
            } else {
                let mut a = pre.mapv(&act);
                let mask = match dropout.as_mut() {
                    Some((rate, rng)) if *rate > 0.0 => {
                        let keep = 1.0 - *rate;
                        let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        });
                        a *= &m;
                        Some(m)
                    }
                    _ => None,
                };
                cache.pre_activations.push(pre);
                cache.dropout_masks.push(mask);
                h = a;
            }
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, cache: &MlpCache, grad_out: Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let slope = self.slope;
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            grads.layers[i].weight += &input.t().dot(&g);
            grads.layers[i].bias += &g.sum_axis(Axis(0));
            g = g.dot(&self.layers[i].weight.t());
            if i > 0 {
                let pre = &cache.pre_activations[i - 1];
                g.zip_mut_with(pre, |gv, &p| {
                    if p <= 0.0 {
                        *gv *= slope
                    }
                });
                if let Some(mask) = &cache.dropout_masks[i - 1] {
                    g *= mask;
                }
            }
        }
        g
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&join(prefix, &format!("layer{i}.weight")), l.weight.as_slice().expect("standard layout"));
            f(&join(prefix, &format!("layer{i}.bias")), l.bias.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&join(prefix, &format!("layer{i}.weight")), l.weight.as_slice_mut().expect("standard layout"));
            f(&join(prefix, &format!("layer{i}.bias")), l.bias.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Adam with bias correction over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    /// One descent step on `params` along `grads` (gradients of a loss to
    /// minimize). Rejects non-finite gradients before touching anything.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        if g.len() != self.first_moment.len() {
            return Err(Error::Shape { expected: self.first_moment.len(), actual: g.len() });
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient for {}", grads.name_of(bad))));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((m, v), &gi) in self.first_moment.iter_mut().zip(&mut self.second_moment).zip(&g) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
        }
        let (lr, eps) = (self.learning_rate, self.epsilon);
        let (m, v) = (&self.first_moment, &self.second_moment);
        let mut offset = 0;
        params.visit_mut("", &mut |_, a| {
            for (k, p) in a.iter_mut().enumerate() {
                let i = offset + k;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += a.len();
        });
        Ok(())
    }
}
