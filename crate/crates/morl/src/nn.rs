//! Multilayer perceptron with hand-written reverse-mode gradients and Adam.
//!
//! The network maps a concatenated (state, preference) input to |A|·m
//! outputs, read as one m-vector of Q-values per action. Hidden layers use
//! the rectifier; the output layer is linear. The default architecture
//! ([`MlpParams::mqn`]) scales four hidden layers as {16, 32, 64, 32} times
//! the input width.
//!
//! There is no autodiff graph: [`forward_cached`] records the per-layer
//! activations and [`mlp_backward`] replays them in reverse, which keeps the
//! gradient path auditable and makes the finite-difference checks in the
//! tests meaningful rather than circular.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::pref::Preference;
use crate::real::Real;
use crate::{Error, Result};

/// Hidden-layer widths as multiples of the input width.
pub const MQN_HIDDEN_MULTIPLIERS: [usize; 4] = [16, 32, 64, 32];

/// First line of every checkpoint file.
pub const CHECKPOINT_HEADER: &str = "MOQNET v1";

/// One dense layer; also reused as the container for that layer's gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<F> {
    // [input, output]
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> DenseLayer<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Array2::zeros((input, output)), b: Array1::zeros(output) }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.w.nrows(), self.w.ncols())
    }

    fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite()) && self.b.iter().all(|x| x.is_finite())
    }
}

/// Network parameters plus the problem dimensions they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F> {
    state_dim: usize,
    objective_count: usize,
    action_count: usize,
    layers: Vec<DenseLayer<F>>,
}

impl<F: Real> MlpParams<F> {
    /// Wraps explicit layers, checking that shapes chain from the
    /// (state ⧺ preference) input to the |A|·m output and that every
    /// parameter is finite.
    pub fn new(
        state_dim: usize,
        objective_count: usize,
        action_count: usize,
        layers: Vec<DenseLayer<F>>,
    ) -> Result<Self> {
        if state_dim == 0 || action_count == 0 {
            return Err(Error::invalid("state_dim and action_count must be at least 1"));
        }
        if objective_count < 2 {
            return Err(Error::invalid("networks need at least 2 objectives"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        let input_dim = state_dim + objective_count;
        let output_dim = action_count * objective_count;
        if layers[0].w.nrows() != input_dim {
            return Err(Error::invalid(format!(
                "first layer takes {} inputs, expected state_dim + m = {input_dim}",
                layers[0].w.nrows()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.b.len() != layer.w.ncols() {
                return Err(Error::invalid(format!(
                    "layer {i} has {} bias entries for {} outputs",
                    layer.b.len(),
                    layer.w.ncols()
                )));
            }
            if i + 1 < layers.len() && layers[i + 1].w.nrows() != layer.w.ncols() {
                return Err(Error::invalid(format!(
                    "layer {} takes {} inputs but layer {i} emits {}",
                    i + 1,
                    layers[i + 1].w.nrows(),
                    layer.w.ncols()
                )));
            }
            if !layer.is_finite() {
                return Err(Error::invalid(format!("layer {i} has a non-finite parameter")));
            }
        }
        let last = layers.last().expect("checked non-empty");
        if last.w.ncols() != output_dim {
            return Err(Error::invalid(format!(
                "last layer emits {}, expected action_count × m = {output_dim}",
                last.w.ncols()
            )));
        }
        Ok(Self { state_dim, objective_count, action_count, layers })
    }

    /// The default architecture: four rectified hidden layers of widths
    /// {16, 32, 64, 32} × (state_dim + m), then a linear |A|·m head.
    /// Weights draw uniformly from ±√(6/(fan_in + fan_out)) — in `f64`,
    /// then cast, so a seed produces the same network at every scalar —
    /// and biases start at zero.
    pub fn mqn(
        state_dim: usize,
        objective_count: usize,
        action_count: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input_dim = state_dim + objective_count;
        let mut widths = vec![input_dim];
        widths.extend(MQN_HIDDEN_MULTIPLIERS.iter().map(|k| k * input_dim));
        widths.push(action_count * objective_count);
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    F::from_f64_lossy((2.0 * rng.gen::<f64>() - 1.0) * bound)
                });
                DenseLayer { w, b: Array1::zeros(fan_out) }
            })
            .collect();
        Self::new(state_dim, objective_count, action_count, layers)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn objective_count(&self) -> usize {
        self.objective_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.objective_count
    }

    pub fn output_dim(&self) -> usize {
        self.action_count * self.objective_count
    }

    pub fn layers(&self) -> &[DenseLayer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<F>] {
        &mut self.layers
    }

    /// A zero gradient accumulator shaped like these parameters.
    pub fn zero_grads(&self) -> Vec<DenseLayer<F>> {
        self.layers.iter().map(DenseLayer::zeros_like).collect()
    }
}

/// Per-layer activations recorded by [`forward_cached`]:
/// `activations[0]` is the input batch, `activations[i + 1]` the output of
/// layer i (rectified on hidden layers, raw on the last).
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    activations: Vec<Array2<F>>,
}

impl<F> ForwardCache<F> {
    /// The network output for the cached batch.
    pub fn output(&self) -> &Array2<F> {
        self.activations.last().expect("cache holds at least the input")
    }
}

fn check_input_width<F: Real>(params: &MlpParams<F>, inputs: &Array2<F>) -> Result<()> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::invalid(format!(
            "input rows have {} entries, network takes {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Forward pass over a batch of rows, keeping every activation for a later
/// [`mlp_backward`].
pub fn forward_cached<F: Real>(
    params: &MlpParams<F>,
    inputs: &Array2<F>,
) -> Result<ForwardCache<F>> {
    check_input_width(params, inputs)?;
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(inputs.clone());
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = activations[i].dot(&layer.w);
        for mut row in z.rows_mut() {
            row += &layer.b;
        }
        if i + 1 < params.layers.len() {
            z.mapv_inplace(|x| x.max(F::zero()));
        }
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Forward pass over a batch of rows (one input per row), without caching.
pub fn forward_batch<F: Real>(params: &MlpParams<F>, inputs: &Array2<F>) -> Result<Array2<F>> {
    let mut cache = forward_cached(params, inputs)?;
    Ok(cache.activations.pop().expect("cache holds at least the input"))
}

/// Q-values for one (state, preference) pair, reshaped to one m-vector per
/// action: `out[[a, k]]` is objective k of Q(s, a, ω).
pub fn mlp_forward<F: Real>(
    params: &MlpParams<F>,
    state: &[F],
    pref: &Preference<F>,
) -> Result<Array2<F>> {
    if state.len() != params.state_dim {
        return Err(Error::invalid(format!(
            "state has {} entries, network takes {}",
            state.len(),
            params.state_dim
        )));
    }
    if pref.dim() != params.objective_count {
        return Err(Error::invalid(format!(
            "preference has {} objectives, network takes {}",
            pref.dim(),
            params.objective_count
        )));
    }
    let mut input = Array2::zeros((1, params.input_dim()));
    for (i, x) in state.iter().chain(pref.weights()).enumerate() {
        input[[0, i]] = *x;
    }
    let flat = forward_batch(params, &input)?;
    Ok(flat
        .into_shape((params.action_count, params.objective_count))
        .expect("|A|·m output reshapes to (|A|, m)"))
}

/// Exact reverse-mode gradients of the cached forward pass.
///
/// `upstream[[n, o]]` is ∂L/∂output for batch row n, output o; the return
/// value holds ∂L/∂w and ∂L/∂b per layer. The batch is summed, not
/// averaged — fold any 1/N into the upstream gradient.
pub fn mlp_backward<F: Real>(
    params: &MlpParams<F>,
    cache: &ForwardCache<F>,
    upstream: &Array2<F>,
) -> Result<Vec<DenseLayer<F>>> {
    if cache.activations.len() != params.layers.len() + 1 {
        return Err(Error::invalid("cache does not belong to this network"));
    }
    if upstream.dim() != cache.output().dim() {
        return Err(Error::invalid(format!(
            "upstream gradient is {:?}, output was {:?}",
            upstream.dim(),
            cache.output().dim()
        )));
    }
    let mut grads = params.zero_grads();
    let mut delta = upstream.clone();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        grads[i].w = cache.activations[i].t().dot(&delta);
        grads[i].b = delta.sum_axis(ndarray::Axis(0));
        if i > 0 {
            delta = delta.dot(&layer.w.t());
            // The rectifier's gate: activation > 0 iff pre-activation > 0.
            delta.zip_mut_with(&cache.activations[i], |d, a| {
                if *a <= F::zero() {
                    *d = F::zero();
                }
            });
        }
    }
    Ok(grads)
}

/// Adam accumulator state; shapes mirror the parameters it optimizes.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    learning_rate: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step: u64,
    first: Vec<DenseLayer<F>>,
    second: Vec<DenseLayer<F>>,
}

impl<F: Real> AdamState<F> {
    /// Fresh optimizer state for `params` with the standard defaults
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(learning_rate: F, params: &MlpParams<F>) -> Self {
        Self {
            learning_rate,
            beta1: F::from_f64_lossy(0.9),
            beta2: F::from_f64_lossy(0.999),
            epsilon: F::from_f64_lossy(1e-8),
            step: 0,
            first: params.zero_grads(),
            second: params.zero_grads(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First-moment accumulators, exposed for decay checks in tests.
    pub fn first_moments(&self) -> &[DenseLayer<F>] {
        &self.first
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients so a
/// diverging run surfaces at the step that broke, not at the checkpoint.
pub fn adam_step<F: Real>(
    params: &mut MlpParams<F>,
    grads: &[DenseLayer<F>],
    state: &mut AdamState<F>,
) -> Result<()> {
    if grads.len() != params.layers.len() {
        return Err(Error::invalid("gradient layer count does not match the network"));
    }
    for (i, (layer, grad)) in params.layers.iter().zip(grads).enumerate() {
        if grad.w.dim() != layer.w.dim() || grad.b.dim() != layer.b.dim() {
            return Err(Error::invalid(format!("gradient shape mismatch at layer {i}")));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient at layer {i} is not finite")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (lr, beta1, beta2, eps) = (state.learning_rate, state.beta1, state.beta2, state.epsilon);
    let correct1 = F::one() - beta1.powi(t);
    let correct2 = F::one() - beta2.powi(t);
    let one = F::one();
    for i in 0..params.layers.len() {
        let update = |theta: &mut F, g: F, m: &mut F, v: &mut F| {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        ndarray::Zip::from(&mut params.layers[i].w)
            .and(&grads[i].w)
            .and(&mut state.first[i].w)
            .and(&mut state.second[i].w)
            .for_each(|theta, &g, m, v| update(theta, g, m, v));
        ndarray::Zip::from(&mut params.layers[i].b)
            .and(&grads[i].b)
            .and(&mut state.first[i].b)
            .and(&mut state.second[i].b)
            .for_each(|theta, &g, m, v| update(theta, g, m, v));
    }
    Ok(())
}

/// Serializes parameters to the versioned text checkpoint format.
///
/// Layout: header `MOQNET v1`; `state_dim`, `m`, `action_count`, `layers`
/// key-value lines; per layer a `layer <i> <in> <out>` line, `<in>` weight
/// rows, and one bias line. Floats are written with 17 fractional digits of
/// scientific notation, which round-trips `f64` (and therefore `f32`)
/// exactly. The file is written next to `path` and atomically renamed in.
pub fn save_checkpoint<F: Real>(params: &MlpParams<F>, path: &Path) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{CHECKPOINT_HEADER}");
    let _ = writeln!(text, "state_dim {}", params.state_dim);
    let _ = writeln!(text, "m {}", params.objective_count);
    let _ = writeln!(text, "action_count {}", params.action_count);
    let _ = writeln!(text, "layers {}", params.layers.len());
    for (i, layer) in params.layers.iter().enumerate() {
        let _ = writeln!(text, "layer {i} {} {}", layer.w.nrows(), layer.w.ncols());
        for row in layer.w.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{:.17e}", x.to_f64_lossy())).collect();
            let _ = writeln!(text, "{}", line.join(" "));
        }
        let line: Vec<String> =
            layer.b.iter().map(|x| format!("{:.17e}", x.to_f64_lossy())).collect();
        let _ = writeln!(text, "{}", line.join(" "));
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
///
/// A file whose first line is not exactly `MOQNET v1` is rejected as a
/// version mismatch; structural problems name the offending field.
pub fn load_checkpoint<F: Real>(path: &Path) -> Result<MlpParams<F>> {
    let text = std::fs::read_to_string(path)?;
    let what = "checkpoint";
    let mut lines = text.lines();
    let mut next_line = |field: &str| {
        lines.next().ok_or_else(|| Error::parse(what, field, "file ended early"))
    };

    let header = next_line("header")?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(Error::CheckpointVersion { found: header.trim().to_string() });
    }
    let mut read_count = |field: &'static str| -> Result<usize> {
        let line = next_line(field)?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(what, field, "expected `<key> <count>`"))?;
        if key != field {
            return Err(Error::parse(what, field, format!("found key {key:?} instead")));
        }
        value.trim().parse().map_err(|e| Error::parse(what, field, format!("bad count: {e}")))
    };
    let state_dim = read_count("state_dim")?;
    let m = read_count("m")?;
    let action_count = read_count("action_count")?;
    let layer_count = read_count("layers")?;

    let parse_floats = |line: &str, field: &str, want: usize| -> Result<Vec<F>> {
        let values: Vec<F> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map(F::from_f64_lossy)
                    .map_err(|e| Error::parse(what, field.to_string(), format!("bad float {tok:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != want {
            return Err(Error::parse(
                what,
                field.to_string(),
                format!("{} values, expected {want}", values.len()),
            ));
        }
        Ok(values)
    };

    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let field = format!("layer {i}");
        let line = next_line(&field)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let shape: Option<(usize, usize, usize)> = match parts.as_slice() {
            ["layer", idx, rows, cols] => izip_parse(idx, rows, cols),
            _ => None,
        };
        let (idx, rows, cols) = shape
            .ok_or_else(|| Error::parse(what, field.clone(), "expected `layer <i> <in> <out>`"))?;
        if idx != i {
            return Err(Error::parse(what, field, format!("layer index {idx} out of order")));
        }
        let mut w = Array2::zeros((rows, cols));
        for r in 0..rows {
            let row_field = format!("layer {i} weight row {r}");
            let values = parse_floats(next_line(&row_field)?, &row_field, cols)?;
            for (c, x) in values.into_iter().enumerate() {
                w[[r, c]] = x;
            }
        }
        let bias_field = format!("layer {i} bias");
        let b = Array1::from_vec(parse_floats(next_line(&bias_field)?, &bias_field, cols)?);
        layers.push(DenseLayer { w, b });
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::parse(what, "trailer", "unexpected content after the last layer"));
    }
    MlpParams::new(state_dim, m, action_count, layers)
        .map_err(|e| Error::parse(what, "structure", e.to_string()))
}

fn izip_parse(a: &str, b: &str, c: &str) -> Option<(usize, usize, usize)> {
    Some((a.parse().ok()?, b.parse().ok()?, c.parse().ok()?))
}
