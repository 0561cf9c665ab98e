//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! Weights are stored row-major as `output_dim x input_dim`. A softmax layer
//! is only meaningful as the output layer; the actor uses one, the critic
//! ends in an identity layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.spec.input_dim;
        self.weights
            .chunks_exact(n_in)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let peak = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn activate(activation: Activation, z: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Softmax => softmax(z),
        Activation::Identity => z.to_vec(),
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input fed to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Pre-activation values of layer `l`.
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

/// Parameter gradients, shaped like the network's weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// All entries in parameter order (layer by layer, weights then biases).
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|g| g.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|g| *g *= factor);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    learning_rate: f64,
}

impl Mlp {
    /// Assembles a network from explicit layers, checking shapes and finiteness.
    pub fn from_layers(layers: Vec<Dense>, learning_rate: f64) -> Result<Self> {
        let net = Self {
            layers,
            learning_rate,
        };
        net.validate()?;
        Ok(net)
    }

    /// Random network with scaled-uniform weights `U(-r, r)`,
    /// `r = sqrt(6 / (fan_in + fan_out))`, and zero biases.
    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], learning_rate: f64, rng: &mut R) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|spec| {
                let r = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
                Dense {
                    spec: *spec,
                    weights: (0..spec.input_dim * spec.output_dim)
                        .map(|_| rng.gen_range(-r..=r))
                        .collect(),
                    biases: vec![0.0; spec.output_dim],
                }
            })
            .collect();
        Self::from_layers(layers, learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("network", "at least one layer is required"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid(
                "learning_rate",
                format!("{} must be positive", self.learning_rate),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let spec = layer.spec;
            if spec.input_dim == 0 || spec.output_dim == 0 {
                return Err(invalid("network", format!("layer {l} has a zero dimension")));
            }
            if l > 0 && self.layers[l - 1].spec.output_dim != spec.input_dim {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: self.layers[l - 1].spec.output_dim,
                    actual: spec.input_dim,
                });
            }
            if layer.weights.len() != spec.input_dim * spec.output_dim {
                return Err(Error::DimensionMismatch {
                    context: "layer weights",
                    expected: spec.input_dim * spec.output_dim,
                    actual: layer.weights.len(),
                });
            }
            if layer.biases.len() != spec.output_dim {
                return Err(Error::DimensionMismatch {
                    context: "layer biases",
                    expected: spec.output_dim,
                    actual: layer.biases.len(),
                });
            }
            if spec.activation == Activation::Softmax && l + 1 != self.layers.len() {
                return Err(invalid(
                    "network",
                    "softmax is only supported on the output layer",
                ));
            }
            if !layer.weights.iter().chain(&layer.biases).all(|v| v.is_finite()) {
                return Err(Error::NumericalFault(format!(
                    "layer {l} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if k < layer.weights.len() {
                return &mut layer.weights[k];
            }
            k -= layer.weights.len();
            if k < layer.biases.len() {
                return &mut layer.biases[k];
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].spec.activation
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.layers.iter().fold(x.to_vec(), |h, layer| {
            activate(layer.spec.activation, &layer.affine(&h))
        }))
    }

    /// Forward pass keeping every layer's input and pre-activation for [`Mlp::backward`].
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&h);
            let next = activate(layer.spec.activation, &z);
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradient of `upstream · output` with respect to every parameter.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<Gradients> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let last = self.layers.len() - 1;
        let y = &trace.output;
        let dz = match self.output_activation() {
            Activation::Identity => upstream.to_vec(),
            Activation::Relu => upstream
                .iter()
                .zip(&trace.pre[last])
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::Softmax => {
                let dot: f64 = upstream.iter().zip(y).map(|(g, p)| g * p).sum();
                upstream.iter().zip(y).map(|(g, p)| p * (g - dot)).collect()
            }
        };
        Ok(self.backprop_pre_activation(trace, dz))
    }

    /// `log y[index]` and its gradient for a softmax output layer. The
    /// composite form `e_index - y` avoids dividing by a small probability.
    pub fn log_prob_gradient(&self, x: &[f64], index: usize) -> Result<(f64, Gradients)> {
        if self.output_activation() != Activation::Softmax {
            return Err(invalid(
                "network",
                "log-probability gradient needs a softmax output",
            ));
        }
        if index >= self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "action index",
                expected: self.output_dim(),
                actual: index,
            });
        }
        let trace = self.trace(x)?;
        let last = self.layers.len() - 1;
        let z = &trace.pre[last];
        let peak = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = peak + z.iter().map(|v| (v - peak).exp()).sum::<f64>().ln();
        let log_prob = z[index] - log_norm;
        let dz = trace
            .output
            .iter()
            .enumerate()
            .map(|(k, p)| if k == index { 1.0 - p } else { -p })
            .collect();
        Ok((log_prob, self.backprop_pre_activation(&trace, dz)))
    }

    fn backprop_pre_activation(&self, trace: &Trace, mut dz: Vec<f64>) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let n_in = layer.spec.input_dim;
            let input = &trace.inputs[l];
            for (o, d) in dz.iter().enumerate() {
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g = d * x);
            }
            grads.biases[l].copy_from_slice(&dz);
            if l == 0 {
                break;
            }
            let below = &trace.pre[l - 1];
            dz = (0..n_in)
                .map(|i| {
                    if below[i] <= 0.0 {
                        return 0.0;
                    }
                    dz.iter()
                        .enumerate()
                        .map(|(o, d)| d * layer.weights[o * n_in + i])
                        .sum()
                })
                .collect();
        }
        grads
    }

    /// `params += direction * learning_rate * grads`; `direction` is `+1.0`
    /// for ascent and `-1.0` for descent.
    pub fn sgd_step(&mut self, grads: &Gradients, direction: f64) -> Result<()> {
        self.check_gradients(grads)?;
        let step = direction * self.learning_rate;
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w += step * g);
            layer.biases.iter_mut().zip(gb).for_each(|(b, g)| *b += step * g);
        }
        self.check_finite_params()
    }

    fn check_gradients(&self, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient layers",
                expected: self.layers.len(),
                actual: grads.weights.len(),
            });
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if grads.weights[l].len() != layer.weights.len() || grads.biases[l].len() != layer.biases.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: layer.weights.len() + layer.biases.len(),
                    actual: grads.weights[l].len() + grads.biases[l].len(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::NumericalFault("non-finite gradient".into()));
        }
        Ok(())
    }

    fn check_finite_params(&self) -> Result<()> {
        if self
            .layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()))
        {
            return Err(Error::NumericalFault(
                "update produced non-finite parameters".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// `params += direction * lr * grads`.
    Sgd,
    /// Bias-corrected Adam with the usual defaults; `lr` scales the normalized step.
    #[default]
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for one network, in flat parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Update rule plus whatever state it carries between steps.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(AdamMoments),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &Mlp) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd,
            OptimizerKind::Adam => Self::Adam(AdamMoments {
                m: vec![0.0; net.param_count()],
                v: vec![0.0; net.param_count()],
                t: 0,
            }),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Self::Sgd => OptimizerKind::Sgd,
            Self::Adam(_) => OptimizerKind::Adam,
        }
    }

    /// Moves `net` along `direction * grads` (`+1.0` ascent, `-1.0` descent).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, direction: f64) -> Result<()> {
        let state = match self {
            Self::Sgd => return net.sgd_step(grads, direction),
            Self::Adam(state) => state,
        };
        net.check_gradients(grads)?;
        if state.m.len() != net.param_count() {
            return Err(Error::DimensionMismatch {
                context: "optimizer state",
                expected: net.param_count(),
                actual: state.m.len(),
            });
        }
        state.t = state.t.saturating_add(1);
        let c1 = 1.0 - ADAM_BETA1.powi(state.t);
        let c2 = 1.0 - ADAM_BETA2.powi(state.t);
        let step = direction * net.learning_rate;
        for (k, g) in grads.flat().into_iter().enumerate() {
            state.m[k] = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g;
            state.v[k] = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = state.m[k] / c1;
            let v_hat = state.v[k] / c2;
            *net.param_mut(k) += step * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        net.check_finite_params()
    }
}

/// Hidden-then-output layer stack with rectifier hidden layers.
pub fn layer_stack(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    head: Activation,
) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    dims.windows(2)
        .enumerate()
        .map(|(l, w)| {
            let activation = if l + 2 == dims.len() {
                head
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], activation)
        })
        .collect()
}

/// Default finite-difference step of [`gradient_check`].
pub const FD_STEP: f64 = 1e-6;

/// Rectifier inputs closer than this to zero make the check inconclusive.
pub const KINK_MARGIN: f64 = 1e-4;

/// Denominator floor of the relative error, so that gradients that are zero
/// up to round-off do not register as large relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradCheckStatus {
    Pass,
    Fail,
    /// A rectifier input sits at (or next to) its kink; finite differences are meaningless.
    Excluded,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub status: GradCheckStatus,
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.status == GradCheckStatus::Pass
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Fixed, non-uniform projection vector for scalarizing the output.
fn probe_weights(dim: usize) -> Vec<f64> {
    (0..dim).map(|k| ((k + 1) as f64).cos()).collect()
}

/// Scalar function of the network whose gradient is being checked.
type Objective = Box<dyn Fn(&Mlp) -> f64>;

/// Compares [`Mlp::backward`] (and, for softmax heads, [`Mlp::log_prob_gradient`])
/// against central finite differences on every parameter.
pub fn gradient_check(net: &Mlp, x: &[f64], tolerance: f64) -> Result<GradCheckReport> {
    gradient_check_with_step(net, x, tolerance, FD_STEP)
}

/// [`gradient_check`] with an explicit finite-difference step.
pub fn gradient_check_with_step(net: &Mlp, x: &[f64], tolerance: f64, step: f64) -> Result<GradCheckReport> {
    let trace = net.trace(x)?;
    let near_kink = net
        .layers
        .iter()
        .enumerate()
        .filter(|(_, layer)| layer.spec.activation == Activation::Relu)
        .any(|(l, _)| trace.pre[l].iter().any(|z| z.abs() < KINK_MARGIN));

    let probe = probe_weights(net.output_dim());
    let mut objectives: Vec<(Vec<f64>, Objective)> = Vec::new();
    let projected = net.backward(&trace, &probe)?.flat();
    let probe_for_fd = probe.clone();
    let x_owned = x.to_vec();
    objectives.push((
        projected,
        Box::new(move |m: &Mlp| {
            m.forward(&x_owned)
                .expect("input shape checked")
                .iter()
                .zip(&probe_for_fd)
                .map(|(y, g)| y * g)
                .sum()
        }),
    ));
    if net.output_activation() == Activation::Softmax {
        let x_owned = x.to_vec();
        let (_, g) = net.log_prob_gradient(x, 0)?;
        objectives.push((
            g.flat(),
            Box::new(move |m: &Mlp| m.forward(&x_owned).expect("input shape checked")[0].ln()),
        ));
    }

    let mut max_rel_error = 0.0;
    let mut worst_param = 0;
    let mut probe_net = net.clone();
    for (analytic, objective) in &objectives {
        for (k, a) in analytic.iter().enumerate() {
            let original = *probe_net.param_mut(k);
            *probe_net.param_mut(k) = original + step;
            let up = objective(&probe_net);
            *probe_net.param_mut(k) = original - step;
            let down = objective(&probe_net);
            *probe_net.param_mut(k) = original;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(*a, numeric);
            if err > max_rel_error || err.is_nan() {
                max_rel_error = err;
                worst_param = k;
            }
        }
    }

    let status = if near_kink {
        GradCheckStatus::Excluded
    } else if max_rel_error <= tolerance {
        GradCheckStatus::Pass
    } else {
        GradCheckStatus::Fail
    };
    Ok(GradCheckReport {
        status,
        max_rel_error,
        worst_param,
        params_checked: net.param_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(spec: LayerSpec, weights: Vec<f64>, biases: Vec<f64>) -> Dense {
        Dense {
            spec,
            weights,
            biases,
        }
    }

    #[test]
    fn zero_softmax_is_uniform() {
        let spec = LayerSpec::new(4, 7, Activation::Softmax);
        let net = Mlp::from_layers(vec![dense(spec, vec![0.0; 28], vec![0.0; 7])], 0.1).unwrap();
        let y = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        for p in y {
            assert_abs_diff_eq!(p, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = LayerSpec::new(3, 3, Activation::Identity);
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let net = Mlp::from_layers(vec![dense(spec, eye, vec![0.0; 3])], 0.1).unwrap();
        assert_eq!(net.forward(&[0.5, -2.0, 3.0]).unwrap(), vec![0.5, -2.0, 3.0]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_malformed_networks() {
        let a = dense(LayerSpec::new(2, 3, Activation::Relu), vec![0.0; 6], vec![0.0; 3]);
        let b = dense(
            LayerSpec::new(4, 1, Activation::Identity),
            vec![0.0; 4],
            vec![0.0],
        );
        assert!(Mlp::from_layers(vec![a.clone(), b], 0.1).is_err());
        let mut bad = a.clone();
        bad.weights[0] = f64::NAN;
        assert!(Mlp::from_layers(vec![bad], 0.1).is_err());
        assert!(Mlp::from_layers(vec![a], 0.0).is_err());
    }

    #[test]
    fn golden_two_layer_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = [
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(3, 2, Activation::Softmax),
        ];
        let net = Mlp::init(&specs, 0.01, &mut rng).unwrap();
        let x = [0.25, 0.75];

        // hand computation from the raw parameters
        let l0 = &net.layers()[0];
        let h: Vec<f64> = (0..3)
            .map(|o| (l0.weights[2 * o] * x[0] + l0.weights[2 * o + 1] * x[1] + l0.biases[o]).max(0.0))
            .collect();
        let l1 = &net.layers()[1];
        let z: Vec<f64> = (0..2)
            .map(|o| (0..3).map(|i| l1.weights[3 * o + i] * h[i]).sum::<f64>() + l1.biases[o])
            .collect();
        let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let hand = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];

        let y = net.forward(&x).unwrap();
        for (a, b) in y.iter().zip(hand) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let golden = GOLDEN_SEED0;
        for (a, b) in y.iter().zip(golden) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    const GOLDEN_SEED0: [f64; 2] = [0.5268598524897566, 0.4731401475102433];

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&layer_stack(4, &[5, 5], 3, Activation::Softmax), 0.1, &mut rng).unwrap();
        let trace = net.trace(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = net.backward(&trace, &[0.0; 3]).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_scalar_gradient_is_the_input() {
        let spec = LayerSpec::new(3, 1, Activation::Identity);
        let net = Mlp::from_layers(vec![dense(spec, vec![0.3, -0.2, 0.7], vec![0.1])], 0.1).unwrap();
        let x = [1.5, -0.5, 2.0];
        let g = net.backward(&net.trace(&x).unwrap(), &[1.0]).unwrap();
        assert_eq!(g.weights[0], x.to_vec());
        assert_eq!(g.biases[0], vec![1.0]);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let spec = LayerSpec::new(1, 1, Activation::Identity);
        let mut net = Mlp::from_layers(vec![dense(spec, vec![1.0], vec![0.0])], 0.005).unwrap();
        let grads = Gradients {
            weights: vec![vec![2.0]],
            biases: vec![vec![0.0]],
        };
        net.sgd_step(&grads, 1.0).unwrap();
        assert_abs_diff_eq!(net.layers()[0].weights[0], 1.01, epsilon = 1e-15);

        let before = net.clone();
        net.sgd_step(&Gradients::zeros_like(&before), 1.0).unwrap();
        assert_eq!(net, before);

        let mut up = before.clone();
        let mut down = before.clone();
        up.sgd_step(&grads, 1.0).unwrap();
        down.sgd_step(&grads, -1.0).unwrap();
        let w0 = before.layers()[0].weights[0];
        assert_eq!(up.layers()[0].weights[0] - w0, w0 - down.layers()[0].weights[0]);

        let bad = Gradients {
            weights: vec![vec![f64::INFINITY]],
            biases: vec![vec![0.0]],
        };
        assert!(matches!(net.sgd_step(&bad, 1.0), Err(Error::NumericalFault(_))));
    }

    #[test]
    fn linear_net_checks_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::init(&[LayerSpec::new(5, 2, Activation::Identity)], 0.1, &mut rng).unwrap();
        // Central differences are exact on a linear map; the wider step keeps
        // f64 round-off in the difference quotient below 1e-10.
        let report = gradient_check_with_step(&net, &[0.3, -0.1, 0.8, 0.05, 0.5], 1e-10, 1e-3).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error <= 1e-10);
    }

    #[test]
    fn agent_shaped_nets_pass_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 20 {
            let head = if checked % 2 == 0 {
                Activation::Softmax
            } else {
                Activation::Identity
            };
            let out = if head == Activation::Softmax { 7 } else { 1 };
            let mut net = Mlp::init(&layer_stack(8, &[32, 32], out, head), 0.01, &mut rng).unwrap();
            for layer in &mut net.layers {
                layer
                    .biases
                    .iter_mut()
                    .for_each(|b| *b = rng.gen_range(-0.1..0.1));
            }
            let x: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let report = gradient_check(&net, &x, 1e-5).unwrap();
            if report.status == GradCheckStatus::Excluded {
                continue;
            }
            assert!(report.passed(), "{report:?}");
            checked += 1;
        }
    }

    #[test]
    fn kink_inputs_are_excluded() {
        let l0 = dense(
            LayerSpec::new(2, 2, Activation::Relu),
            vec![1.0, -1.0, 0.5, 0.5],
            vec![0.0; 2],
        );
        let l1 = dense(
            LayerSpec::new(2, 1, Activation::Identity),
            vec![1.0, 1.0],
            vec![0.0],
        );
        let net = Mlp::from_layers(vec![l0, l1], 0.1).unwrap();
        let report = gradient_check(&net, &[0.4, 0.4], 1e-5).unwrap();
        assert_eq!(report.status, GradCheckStatus::Excluded);
    }

    #[test]
    fn softmax_outputs_are_positive_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut net =
                Mlp::init(&layer_stack(8, &[32, 32], 7, Activation::Softmax), 0.1, &mut rng).unwrap();
            // large logits exercise the max-subtraction
            net.layers
                .last_mut()
                .unwrap()
                .weights
                .iter_mut()
                .for_each(|w| *w *= 20.0);
            let x: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let y = net.forward(&x).unwrap();
            assert!(y.iter().all(|p| *p > 0.0));
            assert_abs_diff_eq!(y.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let specs = layer_stack(8, &[32, 32], 7, Activation::Softmax);
        let a = Mlp::init(&specs, 0.1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = Mlp::init(&specs, 0.1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sgd_optimizer_matches_plain_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let net = Mlp::init(&layer_stack(4, &[6], 3, Activation::Softmax), 0.01, &mut rng).unwrap();
        let (_, grads) = net.log_prob_gradient(&[0.1, 0.2, 0.3, 0.4], 1).unwrap();
        let mut a = net.clone();
        a.sgd_step(&grads, -1.0).unwrap();
        let mut b = net.clone();
        Optimizer::new(OptimizerKind::Sgd, &net)
            .step(&mut b, &grads, -1.0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = Mlp::init(&layer_stack(4, &[6], 3, Activation::Softmax), 0.01, &mut rng).unwrap();
        let (_, grads) = net.log_prob_gradient(&[0.1, 0.2, 0.3, 0.4], 2).unwrap();
        let mut moved = net.clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
        opt.step(&mut moved, &grads, 1.0).unwrap();
        let before = net.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases));
        let after = moved
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases));
        for ((old, new), g) in before.zip(after).zip(grads.flat()) {
            assert_abs_diff_eq!(new - old, 0.01 * g / (g.abs() + 1e-8), epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op_and_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let net = Mlp::init(&layer_stack(3, &[4], 1, Activation::Identity), 0.1, &mut rng).unwrap();
        let mut same = net.clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
        opt.step(&mut same, &Gradients::zeros_like(&net), 1.0).unwrap();
        assert_eq!(same, net);

        let mut bad = Gradients::zeros_like(&net);
        bad.biases[0][0] = f64::NAN;
        assert!(opt.step(&mut same, &bad, 1.0).is_err());

        let other = Mlp::init(&layer_stack(5, &[4], 1, Activation::Identity), 0.1, &mut rng).unwrap();
        let mut wrong = Optimizer::new(OptimizerKind::Adam, &other);
        assert!(wrong.step(&mut same, &Gradients::zeros_like(&net), 1.0).is_err());
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // V(x) = w.x with target 2 at a fixed input
        let spec = LayerSpec::new(2, 1, Activation::Identity);
        let mut net = Mlp::from_layers(vec![dense(spec, vec![0.0, 0.0], vec![0.0])], 0.05).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Adam, &net);
        let x = [0.5, 1.0];
        for _ in 0..2000 {
            let trace = net.trace(&x).unwrap();
            let err = 2.0 - trace.output()[0];
            let mut g = net.backward(&trace, &[1.0]).unwrap();
            g.scale(err);
            opt.step(&mut net, &g, 1.0).unwrap();
        }
        assert_abs_diff_eq!(net.forward(&x).unwrap()[0], 2.0, epsilon = 1e-3);
    }
}
