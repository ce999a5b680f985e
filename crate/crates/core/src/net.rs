//! A small fully connected eps-prediction network with sinusoidal time
//! conditioning, plus its reverse-mode gradients.
//!
//! Parameters are kept f32-representable at all times (initialization and every
//! optimizer update snap to f32) so the 32-bit checkpoint format round-trips
//! bit-exactly, while all arithmetic runs in f64.

use rayon::prelude::*;

use crate::diffusion::EpsProvider;
use crate::error::{Error, Result};
use crate::rng::{standard_normal, SeededRng};
use crate::schedule::NoiseSchedule;

/// Architecture hyperparameters, recorded alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Flattened field dimension d (input and output width).
    pub input_dim: usize,
    /// Number of hidden layers.
    pub hidden_layers: usize,
    /// Width of each hidden layer.
    pub hidden_width: usize,
    /// Number of sinusoidal time frequencies; the embedding has 2x this width.
    pub time_freqs: usize,
}

impl NetConfig {
    pub fn embed_width(&self) -> usize {
        2 * self.time_freqs
    }
}

/// One dense layer, weights in row-major `[out][in]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }
}

/// Weights of the eps-prediction network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub arch: NetConfig,
    pub layers: Vec<Layer>,
}

/// Round to the nearest f32-representable value.
#[inline]
pub(crate) fn snap(x: f64) -> f64 {
    x as f32 as f64
}

impl DenoiserParams {
    /// He-style random initialization; the output layer starts at zero so the
    /// initial prediction is the zero field.
    pub fn init(arch: NetConfig, rng: &mut SeededRng) -> Self {
        let dims = layer_dims(&arch);
        let n_layers = dims.len();
        let layers = dims
            .into_iter()
            .enumerate()
            .map(|(i, (in_dim, out_dim))| {
                let mut layer = Layer::zeros(in_dim, out_dim);
                if i + 1 < n_layers {
                    let std = (2.0 / in_dim as f64).sqrt();
                    for w in layer.weights.iter_mut() {
                        *w = snap(std * standard_normal(rng));
                    }
                }
                layer
            })
            .collect();
        Self { arch, layers }
    }

    /// Initialization whose first-layer units start localized: for each group
    /// of input coordinates (for gridded fields, one pixel's channels across
    /// both modality blocks), three of every four units draw weights only on
    /// that group plus the time embedding; every fourth unit starts dense.
    ///
    /// With a dense start every unit averages the whole field and per-pixel
    /// structure emerges impractically slowly; a localized start gives units
    /// an immediate owner pixel while leaving the architecture — and what it
    /// can express — unchanged, since the zeros are free to grow.
    pub fn init_localized(arch: NetConfig, groups: &[Vec<usize>], rng: &mut SeededRng) -> Self {
        let mut params = Self::init(arch, rng);
        if groups.is_empty() {
            return params;
        }
        let first = &mut params.layers[0];
        let embed_start = arch.input_dim;
        for unit in 0..first.out_dim {
            if unit % 4 == 3 {
                continue; // dense unit
            }
            let group = &groups[(unit - unit / 4) % groups.len()];
            let fan_in = group.len() + arch.embed_width();
            let std = (2.0 / fan_in as f64).sqrt();
            let row = &mut first.weights[unit * first.in_dim..(unit + 1) * first.in_dim];
            for w in row.iter_mut() {
                *w = 0.0;
            }
            for &i in group {
                row[i] = snap(std * standard_normal(rng));
            }
            for i in embed_start..first.in_dim {
                row[i] = snap(std * standard_normal(rng));
            }
        }
        params
    }

    /// All-zero network of the given architecture.
    pub fn zeros(arch: NetConfig) -> Self {
        let layers = layer_dims(&arch)
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        Self { arch, layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Deterministic forward pass for a single state.
    pub fn predict_eps(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        if x_t.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x_t.len(),
            });
        }
        let embed = time_embedding(t, self.arch.time_freqs);
        let mut a = Vec::with_capacity(x_t.len() + embed.len());
        a.extend_from_slice(x_t);
        a.extend_from_slice(&embed);
        Ok(self.forward_assembled(&a))
    }

    /// Forward pass for `rows` states sharing one timestep, stored contiguously.
    /// Rows are processed in parallel; output layout matches the input layout.
    pub fn predict_eps_batch(&self, x_t: &[f64], rows: usize, t: usize) -> Vec<f64> {
        self.prepare().predict_eps_batch(x_t, rows, t)
    }

    /// Precompute the transposed weight layout used by the fast forward path.
    pub fn prepare(&self) -> PreparedDenoiser {
        PreparedDenoiser::new(self)
    }

    /// Whether hidden layer `i` adds a skip connection: same-width hidden
    /// layers after the first are residual, which keeps deep stacks easy to
    /// optimize without changing any layer shape.
    fn is_residual(&self, i: usize) -> bool {
        i > 0 && i < self.layers.len() - 1 && self.layers[i].in_dim == self.layers[i].out_dim
    }

    /// Forward from an already assembled `[x, embed]` input.
    fn forward_assembled(&self, input: &[f64]) -> Vec<f64> {
        self.prepare().forward_assembled(input)
    }
}

/// Column-major copy of one layer's weights: `wt[k * out + o] = w[o * in + k]`.
/// The forward pass walks k outward and broadcasts `input[k]` across the
/// contiguous output lane, which vectorizes while keeping each output's
/// accumulation order identical to the naive row dot product.
struct TransposedLayer {
    wt: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl TransposedLayer {
    fn new(layer: &Layer) -> Self {
        let mut wt = vec![0.0; layer.weights.len()];
        for o in 0..layer.out_dim {
            for k in 0..layer.in_dim {
                wt[k * layer.out_dim + o] = layer.weights[o * layer.in_dim + k];
            }
        }
        Self {
            wt,
            bias: layer.bias.clone(),
            in_dim: layer.in_dim,
            out_dim: layer.out_dim,
        }
    }

    #[inline]
    fn affine_into(&self, input: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.in_dim);
        out.clear();
        out.extend_from_slice(&self.bias);
        for (k, &x) in input.iter().enumerate() {
            let row = &self.wt[k * self.out_dim..(k + 1) * self.out_dim];
            for (acc, &w) in out.iter_mut().zip(row) {
                *acc = w.mul_add(x, *acc);
            }
        }
    }
}

/// `C[m x n] += A[m x k_dim] * B[k_dim x n]`, all row-major.
///
/// Per output element the reduction runs in ascending k order, exactly like
/// the textbook triple loop, so results are bit-identical to naive code; the
/// n-tiling only improves locality and lets the inner updates vectorize.
fn gemm_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k_dim: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k_dim);
    debug_assert_eq!(b.len(), k_dim * n);
    // k in the middle so each B row segment is loaded once per tile and
    // reused across all rows of C; C tiles stay cache-resident
    const N_TILE: usize = 256;
    let mut n0 = 0;
    while n0 < n {
        let n1 = (n0 + N_TILE).min(n);
        for k in 0..k_dim {
            let b_row = &b[k * n + n0..k * n + n1];
            for i in 0..m {
                let av = a[i * k_dim + k];
                let c_row = &mut c[i * n + n0..i * n + n1];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv = bv.mul_add(av, *cv);
                }
            }
        }
        n0 = n1;
    }
}

/// A denoiser with its weights re-laid-out for the vectorized forward pass.
/// Prepare once, then evaluate many times; predictions are bit-identical to
/// the unprepared path.
pub struct PreparedDenoiser {
    arch: NetConfig,
    layers: Vec<TransposedLayer>,
    residual: Vec<bool>,
}

impl PreparedDenoiser {
    pub fn new(params: &DenoiserParams) -> Self {
        Self {
            arch: params.arch,
            layers: params.layers.iter().map(TransposedLayer::new).collect(),
            residual: (0..params.layers.len()).map(|i| params.is_residual(i)).collect(),
        }
    }

    pub fn arch(&self) -> &NetConfig {
        &self.arch
    }

    fn forward_assembled(&self, input: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        let mut pre = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine_into(&a, &mut pre);
            if i != last {
                for v in pre.iter_mut() {
                    *v = silu(*v);
                }
                if self.residual[i] {
                    for (p, &prev) in pre.iter_mut().zip(&a) {
                        *p += prev;
                    }
                }
            }
            std::mem::swap(&mut a, &mut pre);
        }
        a
    }

    pub fn predict_eps(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        if x_t.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x_t.len(),
            });
        }
        let embed = time_embedding(t, self.arch.time_freqs);
        let mut input = Vec::with_capacity(x_t.len() + embed.len());
        input.extend_from_slice(x_t);
        input.extend_from_slice(&embed);
        Ok(self.forward_assembled(&input))
    }

    pub fn predict_eps_batch(&self, x_t: &[f64], rows: usize, t: usize) -> Vec<f64> {
        let d = self.arch.input_dim;
        assert_eq!(x_t.len(), rows * d, "batch layout mismatch");
        let embed = time_embedding(t, self.arch.time_freqs);
        let mut out = vec![0.0; rows * d];
        // two chunks per thread balance GEMM size against load skew
        let chunk_rows = rows.div_ceil(rayon::current_num_threads().max(1) * 2).max(1);
        out.par_chunks_mut(chunk_rows * d)
            .zip(x_t.par_chunks(chunk_rows * d))
            .for_each(|(out_chunk, in_chunk)| {
                let n = in_chunk.len() / d;
                let result = self.forward_matrix(in_chunk, n, &embed);
                out_chunk.copy_from_slice(&result);
            });
        out
    }

    /// Chunked matrix forward: assemble `[x, embed]` rows and push the whole
    /// block through each layer with one GEMM.
    fn forward_matrix(&self, xs: &[f64], rows: usize, embed: &[f64]) -> Vec<f64> {
        let d = self.arch.input_dim;
        let in_width = d + embed.len();
        let mut a = vec![0.0; rows * in_width];
        for r in 0..rows {
            a[r * in_width..r * in_width + d].copy_from_slice(&xs[r * d..(r + 1) * d]);
            a[r * in_width + d..(r + 1) * in_width].copy_from_slice(embed);
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = vec![0.0; rows * layer.out_dim];
            for r in 0..rows {
                pre[r * layer.out_dim..(r + 1) * layer.out_dim].copy_from_slice(&layer.bias);
            }
            gemm_acc(&mut pre, &a, &layer.wt, rows, layer.in_dim, layer.out_dim);
            if i != last {
                for v in pre.iter_mut() {
                    *v = silu(*v);
                }
                if self.residual[i] {
                    for (p, &prev) in pre.iter_mut().zip(&a) {
                        *p += prev;
                    }
                }
            }
            a = pre;
        }
        a
    }
}

impl EpsProvider for DenoiserParams {
    fn eps(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        self.predict_eps(x_t, t).expect("provider dimension mismatch")
    }

    fn eps_batch(&self, x_t: &[f64], rows: usize, t: usize) -> Vec<f64> {
        self.predict_eps_batch(x_t, rows, t)
    }
}

/// The trained eps estimator: the closed-form standard-normal-prior term
/// `sqrt(1 - abar_t) x_t` plus the network's learned correction.
///
/// Training bakes the same decomposition into the objective (see
/// [`loss_and_grad`]), so the raw network only has to model the deviation of
/// the data prior from an isotropic Gaussian. Without the analytic term the
/// high-noise regime is an unconditioned regression the network must learn
/// before the reverse chain stops diverging; with it the chain is stable from
/// initialization.
pub struct StabilizedDenoiser<'a> {
    prepared: PreparedDenoiser,
    schedule: &'a NoiseSchedule,
}

impl<'a> StabilizedDenoiser<'a> {
    pub fn new(params: &DenoiserParams, schedule: &'a NoiseSchedule) -> Self {
        Self {
            prepared: params.prepare(),
            schedule,
        }
    }
}

impl EpsProvider for StabilizedDenoiser<'_> {
    fn eps(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        let mut out = self
            .prepared
            .predict_eps(x_t, t)
            .expect("provider dimension mismatch");
        let c = (1.0 - self.schedule.alpha_bar(t)).sqrt();
        for (o, &x) in out.iter_mut().zip(x_t) {
            *o += c * x;
        }
        out
    }

    fn eps_batch(&self, x_t: &[f64], rows: usize, t: usize) -> Vec<f64> {
        let mut out = self.prepared.predict_eps_batch(x_t, rows, t);
        let c = (1.0 - self.schedule.alpha_bar(t)).sqrt();
        for (o, &x) in out.iter_mut().zip(x_t) {
            *o += c * x;
        }
        out
    }
}

fn layer_dims(arch: &NetConfig) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(arch.hidden_layers + 1);
    let mut prev = arch.input_dim + arch.embed_width();
    for _ in 0..arch.hidden_layers {
        dims.push((prev, arch.hidden_width));
        prev = arch.hidden_width;
    }
    dims.push((prev, arch.input_dim));
    dims
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal features of the timestep at geometrically spaced frequencies.
pub fn time_embedding(t: usize, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * freqs);
    for j in 0..freqs {
        let exponent = if freqs > 1 {
            j as f64 / (freqs - 1) as f64
        } else {
            0.0
        };
        let omega = 10_000f64.powf(-exponent);
        let arg = t as f64 * omega;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// Gradient accumulator with the same shape as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &DenoiserParams) -> Self {
        Self {
            weights: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: params.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for a in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for a in self.weights.iter().chain(self.bias.iter()) {
            for x in a {
                sq += x * x;
            }
        }
        sq.sqrt()
    }
}

/// One training example: a clean field, a timestep and the injected noise.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub x0: Vec<f64>,
    pub t: usize,
    pub z: Vec<f64>,
}

/// Mean squared eps-prediction error over the batch and its gradient.
///
/// Per sample the input is the closed-form noised state
/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) z` and the target is `z`; the estimate
/// is the stabilized decomposition `sqrt(1 - abar_t) x_t + net(x_t, t)` (see
/// [`StabilizedDenoiser`]), whose analytic term is constant in the parameters.
/// Samples are processed in parallel chunks whose partial gradients are summed
/// in a fixed order, so the result does not depend on thread scheduling.
pub fn loss_and_grad(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    batch: &[TrainExample],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let n = batch.len();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(1);
    let prepared = params.prepare();

    let partials: Vec<(f64, Gradients, Option<usize>)> = batch
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, examples)| {
            let mut grad = Gradients::zeros_like(params);
            let (loss_sum, bad) =
                backprop_chunk(params, &prepared, schedule, examples, &mut grad);
            (loss_sum, grad, bad.map(|ei| ci * chunk + ei))
        })
        .collect();

    let mut grad = Gradients::zeros_like(params);
    let mut loss_sum = 0.0;
    for (l, g, bad) in &partials {
        if let Some(index) = bad {
            return Err(Error::NonFiniteLoss { index: *index });
        }
        loss_sum += l;
        grad.add_assign(g);
    }
    let inv = 1.0 / n as f64;
    grad.scale(inv);
    let loss = loss_sum * inv;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { index: 0 });
    }
    Ok((loss, grad))
}

/// Backprop one chunk of examples as matrix operations, accumulating into
/// `grad`. Returns the summed loss and the first non-finite sample index.
fn backprop_chunk(
    params: &DenoiserParams,
    prepared: &PreparedDenoiser,
    schedule: &NoiseSchedule,
    examples: &[TrainExample],
    grad: &mut Gradients,
) -> (f64, Option<usize>) {
    let d = params.arch.input_dim;
    let rows = examples.len();
    let in_width = d + params.arch.embed_width();

    // assemble noised inputs with per-example time embeddings
    let mut input = vec![0.0; rows * in_width];
    let mut noise_scales = Vec::with_capacity(rows);
    for (r, ex) in examples.iter().enumerate() {
        assert_eq!(ex.x0.len(), d, "x0 dimension mismatch");
        assert_eq!(ex.z.len(), d, "noise dimension mismatch");
        let abar = schedule.alpha_bar(ex.t);
        let (sa, sn) = (abar.sqrt(), (1.0 - abar).sqrt());
        noise_scales.push(sn);
        let row = &mut input[r * in_width..(r + 1) * in_width];
        for i in 0..d {
            row[i] = sa * ex.x0[i] + sn * ex.z[i];
        }
        row[d..].copy_from_slice(&time_embedding(ex.t, params.arch.time_freqs));
    }

    // forward, keeping per-layer pre-activations and activations
    let last = params.layers.len() - 1;
    let mut activations: Vec<Vec<f64>> = vec![input];
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len());
    for (i, (layer, tl)) in params.layers.iter().zip(&prepared.layers).enumerate() {
        let prev = activations.last().unwrap();
        let mut pre = vec![0.0; rows * layer.out_dim];
        for r in 0..rows {
            pre[r * layer.out_dim..(r + 1) * layer.out_dim].copy_from_slice(&layer.bias);
        }
        gemm_acc(&mut pre, prev, &tl.wt, rows, layer.in_dim, layer.out_dim);
        let act = if i != last {
            let mut act: Vec<f64> = pre.iter().map(|&v| silu(v)).collect();
            if params.is_residual(i) {
                for (a, &p) in act.iter_mut().zip(prev.iter()) {
                    *a += p;
                }
            }
            act
        } else {
            pre.clone()
        };
        pres.push(pre);
        activations.push(act);
    }

    // loss and dL/d(output) for the stabilized estimate
    let out = activations.last().unwrap();
    let mut loss_sum = 0.0;
    let mut bad = None;
    let mut g = vec![0.0; rows * d];
    for (r, ex) in examples.iter().enumerate() {
        let sn = noise_scales[r];
        let x_t = &activations[0][r * in_width..r * in_width + d];
        let mut loss = 0.0;
        for i in 0..d {
            let res = out[r * d + i] + sn * x_t[i] - ex.z[i];
            loss += res * res;
            g[r * d + i] = 2.0 * res / d as f64;
        }
        loss /= d as f64;
        if !loss.is_finite() && bad.is_none() {
            bad = Some(r);
        }
        loss_sum += loss;
    }

    // backward through the stack
    let mut delta_t = Vec::new();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let out_dim = layer.out_dim;
        // delta = dL/d(pre-activation), per row
        let delta: Vec<f64> = if i == last {
            g.clone()
        } else {
            g.iter()
                .zip(&pres[i])
                .map(|(&gv, &p)| gv * silu_grad(p))
                .collect()
        };
        // bias gradient: column sums in ascending row order
        let gb = &mut grad.bias[i];
        for r in 0..rows {
            for (b, &dv) in gb.iter_mut().zip(&delta[r * out_dim..(r + 1) * out_dim]) {
                *b += dv;
            }
        }
        // weight gradient: delta^T (out x rows) times activations (rows x in)
        delta_t.clear();
        delta_t.resize(out_dim * rows, 0.0);
        for r in 0..rows {
            for o in 0..out_dim {
                delta_t[o * rows + r] = delta[r * out_dim + o];
            }
        }
        gemm_acc(
            &mut grad.weights[i],
            &delta_t,
            &activations[i],
            out_dim,
            rows,
            layer.in_dim,
        );
        if i > 0 {
            // g_prev = delta * W (+ skip path when residual)
            let mut g_prev = vec![0.0; rows * layer.in_dim];
            gemm_acc(&mut g_prev, &delta, &layer.weights, rows, out_dim, layer.in_dim);
            if params.is_residual(i) {
                for (nx, &gv) in g_prev.iter_mut().zip(&g) {
                    *nx += gv;
                }
            }
            g = g_prev;
        }
    }
    (loss_sum, bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal_vec};

    fn small_arch() -> NetConfig {
        NetConfig {
            input_dim: 3,
            hidden_layers: 2,
            hidden_width: 8,
            time_freqs: 4,
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let params = DenoiserParams::zeros(small_arch());
        let out = params.predict_eps(&[1.0, -2.0, 0.5], 10).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = rng_from_seed(1);
        let params = DenoiserParams::init(small_arch(), &mut rng);
        let x = [0.1, 0.2, 0.3];
        let a = params.predict_eps(&x, 5).unwrap();
        let b = params.predict_eps(&x, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let params = DenoiserParams::zeros(small_arch());
        assert!(params.predict_eps(&[1.0], 0).is_err());
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = rng_from_seed(2);
        let params = DenoiserParams::init(small_arch(), &mut rng);
        let rows = 5;
        let xs = standard_normal_vec(&mut rng, rows * 3);
        let batch = params.predict_eps_batch(&xs, rows, 7);
        for r in 0..rows {
            let single = params.predict_eps(&xs[r * 3..(r + 1) * 3], 7).unwrap();
            assert_eq!(&batch[r * 3..(r + 1) * 3], single.as_slice());
        }
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        // zero net, zero state, zero target: the estimate is exactly right
        let params = DenoiserParams::zeros(small_arch());
        let schedule = NoiseSchedule::linear(10, 0.01, 0.1).unwrap();
        let batch = vec![TrainExample {
            x0: vec![0.0; 3],
            t: 3,
            z: vec![0.0; 3],
        }];
        let (loss, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn stabilized_provider_adds_analytic_term() {
        let params = DenoiserParams::zeros(small_arch());
        let schedule = NoiseSchedule::linear(10, 0.01, 0.1).unwrap();
        let provider = StabilizedDenoiser::new(&params, &schedule);
        let x = [0.5, -1.0, 2.0];
        let t = 7;
        let c = (1.0 - schedule.alpha_bar(t)).sqrt();
        let eps = provider.eps(&x, t);
        for (e, &xv) in eps.iter().zip(&x) {
            assert!((e - c * xv).abs() < 1e-15);
        }
        // batch path agrees with the single path
        let batch = provider.eps_batch(&[0.5, -1.0, 2.0, 0.1, 0.2, 0.3], 2, t);
        let single = provider.eps(&[0.1, 0.2, 0.3], t);
        assert_eq!(&batch[3..], single.as_slice());
    }

    #[test]
    fn loss_is_nonnegative() {
        let mut rng = rng_from_seed(3);
        let params = DenoiserParams::init(small_arch(), &mut rng);
        let schedule = NoiseSchedule::linear(10, 0.01, 0.1).unwrap();
        for seed in 0..10u64 {
            let mut r = rng_from_seed(seed);
            let batch = vec![TrainExample {
                x0: standard_normal_vec(&mut r, 3),
                t: 1 + (seed as usize % 10),
                z: standard_normal_vec(&mut r, 3),
            }];
            let (loss, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let params = DenoiserParams::zeros(small_arch());
        let schedule = NoiseSchedule::linear(10, 0.01, 0.1).unwrap();
        assert!(loss_and_grad(&params, &schedule, &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // width-8 depth-2 net, a handful of parameters per layer class
        let mut rng = rng_from_seed(4);
        let mut params = DenoiserParams::init(small_arch(), &mut rng);
        // randomize the (zero-initialized) output layer too so its gradient is exercised
        let last = params.layers.len() - 1;
        for w in params.layers[last].weights.iter_mut() {
            *w = snap(0.3 * standard_normal(&mut rng));
        }
        let schedule = NoiseSchedule::linear(10, 0.01, 0.1).unwrap();
        let batch: Vec<TrainExample> = (0..4)
            .map(|i| TrainExample {
                x0: standard_normal_vec(&mut rng, 3),
                t: 1 + i * 3,
                z: standard_normal_vec(&mut rng, 3),
            })
            .collect();
        let (_, grad) = loss_and_grad(&params, &schedule, &batch).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        for li in 0..params.layers.len() {
            for wi in (0..params.layers[li].weights.len()).step_by(7) {
                let orig = params.layers[li].weights[wi];
                params.layers[li].weights[wi] = orig + h;
                let (lp, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
                params.layers[li].weights[wi] = orig - h;
                let (lm, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
                params.layers[li].weights[wi] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grad.weights[li][wi];
                let rel = (fd - an).abs() / an.abs().max(1e-8);
                assert!(rel < 1e-3, "layer {li} w {wi}: fd {fd} vs {an} (rel {rel})");
                checked += 1;
            }
            // one bias per layer
            let orig = params.layers[li].bias[0];
            params.layers[li].bias[0] = orig + h;
            let (lp, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
            params.layers[li].bias[0] = orig - h;
            let (lm, _) = loss_and_grad(&params, &schedule, &batch).unwrap();
            params.layers[li].bias[0] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grad.bias[li][0];
            assert!((fd - an).abs() / an.abs().max(1e-8) < 1e-3);
        }
        assert!(checked >= 20);
    }

    #[test]
    fn time_embedding_shape_and_range() {
        let e = time_embedding(17, 16);
        assert_eq!(e.len(), 32);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        // distinct timesteps get distinct embeddings
        assert_ne!(time_embedding(3, 16), time_embedding(4, 16));
    }
}
