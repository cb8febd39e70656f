//! The shared-weight twin network.
//!
//! One parameter set is evaluated twice per batch: once with the
//! treatment input pinned to 1 and once pinned to 0. The two sigmoid
//! outputs are the estimated conditional means mu1 and mu0; their
//! difference is the predicted uplift. The backward pass is the exact
//! analytic gradient of the composite objective, with contributions
//! flowing through both twin passes.

use crate::error::{Error, Result};
use crate::losses::{self, CompositeSpec, LossTargets, PROB_EPS};
use crate::numerics::{leaky_relu_derivative, Matrix, Vector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed MLP family: affine layers, a linear prefix, leaky-ReLU for the
/// remaining hidden layers, and a single sigmoid output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Covariates plus the treatment slot (p + 1).
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Leading layers with no activation.
    pub linear_prefix: usize,
    pub leaky_slope: f64,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        linear_prefix: usize,
        leaky_slope: f64,
    ) -> Result<Self> {
        if input_dim < 2 {
            return Err(Error::Config(format!(
                "input_dim must cover at least one covariate plus the treatment slot, got {input_dim}"
            )));
        }
        if hidden_widths.is_empty() {
            return Err(Error::Config("hidden_widths must be nonempty".into()));
        }
        if hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if linear_prefix > hidden_widths.len() {
            return Err(Error::Config(format!(
                "linear_prefix {} exceeds the {} hidden layers",
                linear_prefix,
                hidden_widths.len()
            )));
        }
        if !(leaky_slope > 0.0 && leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky slope must lie in (0,1), got {leaky_slope}"
            )));
        }
        Ok(Architecture {
            input_dim,
            hidden_widths,
            linear_prefix,
            leaky_slope,
        })
    }

    /// Default stack for `num_features` covariates: widths
    /// [200,200,300,100,50,10], two linear layers, slope 0.01.
    pub fn default_for(num_features: usize) -> Result<Self> {
        Architecture::new(
            num_features + 1,
            vec![200, 200, 300, 100, 50, 10],
            2,
            0.01,
        )
    }

    pub fn num_features(&self) -> usize {
        self.input_dim - 1
    }

    /// (fan_in, fan_out) per layer, output layer included.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fi, fo)| fi * fo + fo)
            .sum()
    }
}

/// One affine layer: weights are fan_in x fan_out, bias is fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vector,
}

/// The full shared parameter set, output layer included.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<Layer>,
}

impl Parameters {
    /// Uniform init on [-sqrt(6/fan_in), sqrt(6/fan_in)], biases zero.
    pub fn init(arch: &Architecture, seed: u64) -> Parameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction"),
                    bias: Vector::zeros(fan_out),
                }
            })
            .collect();
        Parameters { layers }
    }

    pub fn zeros(arch: &Architecture) -> Parameters {
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| Layer {
                weights: Matrix::zeros(fan_in, fan_out),
                bias: Vector::zeros(fan_out),
            })
            .collect();
        Parameters { layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn matches(&self, arch: &Architecture) -> bool {
        let dims = arch.layer_dims();
        self.layers.len() == dims.len()
            && self
                .layers
                .iter()
                .zip(dims)
                .all(|(l, (fi, fo))| {
                    l.weights.rows() == fi && l.weights.cols() == fo && l.bias.len() == fo
                })
    }

    /// Row-major flattening, weights then bias per layer. Used by the
    /// finite-difference oracle and the file format.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(layer.bias.data());
        }
        out
    }

    pub fn from_flat(arch: &Architecture, flat: &[f64]) -> Result<Parameters> {
        if flat.len() != arch.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                flat.len()
            )));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in arch.layer_dims() {
            let w_len = fan_in * fan_out;
            let weights =
                Matrix::from_vec(fan_in, fan_out, flat[offset..offset + w_len].to_vec())?;
            offset += w_len;
            let bias = Vector::from_vec(flat[offset..offset + fan_out].to_vec());
            offset += fan_out;
            layers.push(Layer { weights, bias });
        }
        Ok(Parameters { layers })
    }

    /// self += factor * other, used for the SGD update.
    pub fn scaled_add(&mut self, other: &Parameters, factor: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("parameter layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() {
                return Err(Error::Shape("parameter layer shapes differ".into()));
            }
            for (x, &y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += factor * y;
            }
            for (x, &y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += factor * y;
            }
        }
        Ok(())
    }
}

/// The two conditional means, the selection by actual treatment, and the
/// uplift prediction.
#[derive(Debug, Clone)]
pub struct TwinOutput {
    pub mu1: Vector,
    pub mu0: Vector,
    pub mu_t: Vector,
    pub uplift: Vector,
}

struct PassCache {
    /// Input to each layer; `inputs[0]` is the batch with the pinned slot.
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    preacts: Vec<Matrix>,
    /// Sigmoid output before clamping.
    raw: Vector,
}

fn check_features(arch: &Architecture, features: &Matrix) -> Result<()> {
    if features.cols() != arch.num_features() {
        return Err(Error::Shape(format!(
            "expected {} feature columns for input_dim {}, got {}",
            arch.num_features(),
            arch.input_dim,
            features.cols()
        )));
    }
    Ok(())
}

fn check_binary(v: &Vector, name: &str) -> Result<()> {
    if v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Config(format!("{name} must contain only 0 or 1")));
    }
    Ok(())
}

fn forward_pass(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
    slot: f64,
) -> Result<PassCache> {
    let hidden = arch.hidden_widths.len();
    let mut inputs = Vec::with_capacity(hidden + 1);
    let mut preacts = Vec::with_capacity(hidden);
    let mut current = features.append_constant_column(slot);
    for (l, layer) in params.layers.iter().enumerate() {
        let z = current.matmul(&layer.weights)?.add_row(&layer.bias)?;
        if !z.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite values after layer {l}"
            )));
        }
        inputs.push(current);
        if l < hidden {
            let activated = if l < arch.linear_prefix {
                z.clone()
            } else {
                z.leaky_relu(arch.leaky_slope)
            };
            preacts.push(z);
            current = activated;
        } else {
            let raw = Vector::from_vec(z.data().iter().map(|&v| crate::numerics::sigmoid(v)).collect());
            return Ok(PassCache {
                inputs,
                preacts,
                raw,
            });
        }
    }
    unreachable!("parameters always include the output layer")
}

/// Two passes through the identical parameters with the treatment slot
/// pinned to 1 and 0. Outputs are clamped to [PROB_EPS, 1-PROB_EPS]
/// before any downstream log.
pub fn forward_twin(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
    treatment: &Vector,
) -> Result<TwinOutput> {
    check_features(arch, features)?;
    check_binary(treatment, "treatment")?;
    if treatment.len() != features.rows() {
        return Err(Error::Shape(format!(
            "treatment length {} does not match {} rows",
            treatment.len(),
            features.rows()
        )));
    }
    let pass1 = forward_pass(params, arch, features, 1.0)?;
    let pass0 = forward_pass(params, arch, features, 0.0)?;
    let mu1 = pass1.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mu0 = pass0.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mu_t = losses::select_by_treatment(&mu1, &mu0, treatment)?;
    let uplift = mu1.sub(&mu0)?;
    Ok(TwinOutput {
        mu1,
        mu0,
        mu_t,
        uplift,
    })
}

/// Predicted uplift only; convenience for scoring.
pub fn predict_uplift(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
) -> Result<Vector> {
    let (mu0, mu1) = conditional_means(params, arch, features)?;
    mu1.sub(&mu0)
}

/// (mu0, mu1) from the two pinned passes; used as the outcome generator
/// for bootstrap replicates.
pub fn conditional_means(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
) -> Result<(Vector, Vector)> {
    check_features(arch, features)?;
    let pass1 = forward_pass(params, arch, features, 1.0)?;
    let pass0 = forward_pass(params, arch, features, 0.0)?;
    let mu1 = pass1.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mu0 = pass0.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok((mu0, mu1))
}

/// Backprop one twin pass, accumulating into `grad`. `upstream` holds the
/// loss derivative with respect to the clamped output, per row.
fn backward_pass(
    params: &Parameters,
    arch: &Architecture,
    cache: &PassCache,
    upstream: &Vector,
    grad: &mut Parameters,
) -> Result<()> {
    let n = cache.raw.len();
    // Sigmoid derivative from the raw output; zero where the clamp was
    // active, since the clamp has zero derivative outside the interior.
    let mut delta = Matrix::zeros(n, 1);
    for i in 0..n {
        let raw = cache.raw.get(i);
        let through = if raw > PROB_EPS && raw < 1.0 - PROB_EPS {
            raw * (1.0 - raw)
        } else {
            0.0
        };
        delta.set(i, 0, upstream.get(i) * through);
    }

    let hidden = arch.hidden_widths.len();
    let out_layer = hidden;
    let gw = cache.inputs[out_layer].transpose_matmul(&delta)?;
    grad.layers[out_layer].weights = grad.layers[out_layer].weights.add(&gw)?;
    grad.layers[out_layer].bias = grad.layers[out_layer].bias.add(&delta.column_sums())?;

    let mut d = delta.matmul_transpose(&params.layers[out_layer].weights)?;
    for l in (0..hidden).rev() {
        if l >= arch.linear_prefix {
            let z = &cache.preacts[l];
            for (dv, &zv) in d.data_mut().iter_mut().zip(z.data()) {
                *dv *= leaky_relu_derivative(zv, arch.leaky_slope);
            }
        }
        let gw = cache.inputs[l].transpose_matmul(&d)?;
        grad.layers[l].weights = grad.layers[l].weights.add(&gw)?;
        grad.layers[l].bias = grad.layers[l].bias.add(&d.column_sums())?;
        if l > 0 {
            d = d.matmul_transpose(&params.layers[l].weights)?;
        }
    }
    if !grad.layers.iter().all(|l| l.weights.is_finite() && l.bias.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(())
}

/// Exact analytic gradient of the composite objective over the batch,
/// together with the loss value. Contributions flow through both twin
/// passes since mu1 and mu0 share the parameters.
pub fn backward(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
    targets: &LossTargets,
    spec: &CompositeSpec,
) -> Result<(Parameters, f64)> {
    check_features(arch, features)?;
    check_binary(targets.treatment, "treatment")?;
    check_binary(targets.outcome, "outcome")?;
    let pass1 = forward_pass(params, arch, features, 1.0)?;
    let pass0 = forward_pass(params, arch, features, 0.0)?;
    let mu1 = pass1.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mu0 = pass0.raw.clamp(PROB_EPS, 1.0 - PROB_EPS);

    let loss = losses::composite_loss(spec, &mu1, &mu0, targets)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    let (g1, g0) = losses::composite_grad_mu(spec, &mu1, &mu0, targets)?;

    let mut grad = Parameters::zeros(arch);
    backward_pass(params, arch, &pass1, &g1, &mut grad)?;
    backward_pass(params, arch, &pass0, &g0, &mut grad)?;
    Ok((grad, loss))
}

/// Composite loss without the gradient, for validation sweeps.
pub fn batch_loss(
    params: &Parameters,
    arch: &Architecture,
    features: &Matrix,
    targets: &LossTargets,
    spec: &CompositeSpec,
) -> Result<f64> {
    let out = forward_twin(params, arch, features, targets.treatment)?;
    losses::composite_loss(spec, &out.mu1, &out.mu0, targets)
}
