//! Forward inference and hand-derived backpropagation.
//!
//! The backward pass treats the input batch-norm running statistics as
//! constants (they are updated between gradient steps by the training loop),
//! so per-sample gradients are independent and sum linearly across a batch.

use super::loss::{focal_loss, focal_loss_grad, FocalLossConfig};
use super::{ModelParams, ModelSpec, NnError, Result, BATCH_NORM_EPS};
use crate::signal::SampleWindow;

/// Logit clamp keeping sigmoid output strictly inside (0, 1) in f64.
const LOGIT_CLAMP: f64 = 30.0;

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// Activations retained for backprop.
struct Cache {
    /// Normalized-but-unscaled input, (x - mean) / sqrt(var + eps).
    input_hat: Vec<Vec<f64>>,
    /// Input to conv block k (block 0 sees the batch-norm output).
    block_in: Vec<Vec<Vec<f64>>>,
    /// Conv output before ReLU, per block.
    conv_pre: Vec<Vec<Vec<f64>>>,
    /// Winning source index for every pooled position, per block.
    argmax: Vec<Vec<Vec<usize>>>,
    /// Input vector to dense layer j (entry 0 is the flattened features).
    dense_in: Vec<Vec<f64>>,
    /// Pre-activation of dense layer j.
    dense_pre: Vec<Vec<f64>>,
}

fn check_input_shape(spec: &ModelSpec, window: &SampleWindow) -> Result<()> {
    let channels = window.channels.len();
    let length = window.channels.first().map_or(0, Vec::len);
    if channels != spec.input_channels
        || window.channels.iter().any(|c| c.len() != spec.input_length)
    {
        return Err(NnError::Shape {
            layer: "input".into(),
            expected: format!("{} channels x {} samples", spec.input_channels, spec.input_length),
            actual: format!("{channels} channels x {length} samples"),
        });
    }
    Ok(())
}

fn conv_same(
    input: &[Vec<f64>],
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
) -> Vec<Vec<f64>> {
    let in_ch = input.len();
    let len = input[0].len();
    let out_ch = bias.len();
    let pad = (kernel - 1) / 2;
    let mut out = vec![vec![0.0; len]; out_ch];
    for (o, out_row) in out.iter_mut().enumerate() {
        out_row.fill(bias[o]);
        for (c, in_row) in input.iter().enumerate() {
            let w = &weight[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
            for (t, &wt) in w.iter().enumerate() {
                // out[i] += wt * in[i + t - pad], clip to valid range
                let lo = pad.saturating_sub(t);
                let hi = (len + pad).saturating_sub(t).min(len);
                for i in lo..hi {
                    out_row[i] += wt * in_row[i + t - pad];
                }
            }
        }
    }
    out
}

/// Width-2 max pool; ties resolve to the earlier sample.
fn max_pool(input: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut out = Vec::with_capacity(input.len());
    let mut arg = Vec::with_capacity(input.len());
    for row in input {
        let half = row.len() / 2;
        let mut o = Vec::with_capacity(half);
        let mut a = Vec::with_capacity(half);
        for j in 0..half {
            let (l, r) = (row[2 * j], row[2 * j + 1]);
            if r > l {
                o.push(r);
                a.push(2 * j + 1);
            } else {
                o.push(l);
                a.push(2 * j);
            }
        }
        out.push(o);
        arg.push(a);
    }
    (out, arg)
}

fn run_forward(params: &ModelParams, window: &SampleWindow) -> Result<(f64, Cache)> {
    let spec = &params.spec;
    check_input_shape(spec, window)?;

    // input batch norm with running statistics
    let norm = &params.input_norm;
    let mut input_hat = Vec::with_capacity(spec.input_channels);
    let mut normed = Vec::with_capacity(spec.input_channels);
    for (c, channel) in window.channels.iter().enumerate() {
        let inv_std = 1.0 / (norm.running_var[c] + BATCH_NORM_EPS).sqrt();
        let mean = norm.running_mean[c];
        let hat: Vec<f64> = channel.iter().map(|&x| (f64::from(x) - mean) * inv_std).collect();
        normed.push(hat.iter().map(|&h| norm.gamma[c] * h + norm.beta[c]).collect());
        input_hat.push(hat);
    }

    let mut block_in = Vec::with_capacity(spec.conv_blocks.len());
    let mut conv_pre = Vec::with_capacity(spec.conv_blocks.len());
    let mut argmax = Vec::with_capacity(spec.conv_blocks.len());
    let mut current = normed;
    for (block, conv) in spec.conv_blocks.iter().zip(&params.convs) {
        let pre = conv_same(&current, &conv.weight, &conv.bias, block.kernel_size);
        let post: Vec<Vec<f64>> =
            pre.iter().map(|row| row.iter().map(|&v| v.max(0.0)).collect()).collect();
        let (pooled, arg) = max_pool(&post);
        block_in.push(std::mem::replace(&mut current, pooled));
        conv_pre.push(pre);
        argmax.push(arg);
    }

    // flatten channel-major
    let mut vec_in: Vec<f64> = Vec::with_capacity(spec.feature_len());
    for row in &current {
        vec_in.extend_from_slice(row);
    }

    let mut dense_in = Vec::with_capacity(spec.dense_widths.len());
    let mut dense_pre = Vec::with_capacity(spec.dense_widths.len());
    let last = spec.dense_widths.len() - 1;
    for (j, dense) in params.dense.iter().enumerate() {
        let in_dim = vec_in.len();
        let out_dim = dense.bias.len();
        let mut pre = dense.bias.clone();
        for (o, pre_o) in pre.iter_mut().enumerate() {
            let w = &dense.weight[o * in_dim..(o + 1) * in_dim];
            *pre_o += w.iter().zip(&vec_in).map(|(a, b)| a * b).sum::<f64>();
        }
        let next = if j == last {
            pre.clone()
        } else {
            pre.iter().map(|&v| v.max(0.0)).collect()
        };
        dense_in.push(std::mem::replace(&mut vec_in, next));
        dense_pre.push(pre);
        debug_assert_eq!(out_dim, spec.dense_widths[j]);
    }

    let z = dense_pre.last().unwrap()[0];
    let p = sigmoid(z);
    let cache = Cache { input_hat, block_in, conv_pre, argmax, dense_in, dense_pre };
    Ok((p, cache))
}

/// Inference: probability that the window is preictal, strictly in (0, 1).
pub fn forward(params: &ModelParams, window: &SampleWindow) -> Result<f64> {
    run_forward(params, window).map(|(p, _)| p)
}

/// Batched [`forward`].
pub fn predict_proba(params: &ModelParams, windows: &[SampleWindow]) -> Result<Vec<f64>> {
    windows.iter().map(|w| forward(params, w)).collect()
}

/// Gradient of the mean focal loss over a batch, one entry per trainable
/// parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub convs: Vec<super::Conv>,
    pub dense: Vec<super::Dense>,
}

impl ModelGrads {
    pub fn zeros(params: &ModelParams) -> Self {
        Self {
            gamma: vec![0.0; params.input_norm.gamma.len()],
            beta: vec![0.0; params.input_norm.beta.len()],
            convs: params
                .convs
                .iter()
                .map(|c| super::Conv {
                    weight: vec![0.0; c.weight.len()],
                    bias: vec![0.0; c.bias.len()],
                })
                .collect(),
            dense: params
                .dense
                .iter()
                .map(|d| super::Dense {
                    weight: vec![0.0; d.weight.len()],
                    bias: vec![0.0; d.bias.len()],
                })
                .collect(),
        }
    }

    /// Same ordering as [`ModelParams::flatten_trainable`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.beta);
        for c in &self.convs {
            out.extend_from_slice(&c.weight);
            out.extend_from_slice(&c.bias);
        }
        for d in &self.dense {
            out.extend_from_slice(&d.weight);
            out.extend_from_slice(&d.bias);
        }
        out
    }

    fn scale(&mut self, s: f64) {
        for v in self.gamma.iter_mut().chain(self.beta.iter_mut()) {
            *v *= s;
        }
        for c in &mut self.convs {
            for v in c.weight.iter_mut().chain(c.bias.iter_mut()) {
                *v *= s;
            }
        }
        for d in &mut self.dense {
            for v in d.weight.iter_mut().chain(d.bias.iter_mut()) {
                *v *= s;
            }
        }
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |xs: &[f64]| xs.iter().any(|v| !v.is_finite());
        if bad(&self.gamma) || bad(&self.beta) {
            return Err(NnError::Numeric { context: "input-norm gradient".into() });
        }
        for (i, c) in self.convs.iter().enumerate() {
            if bad(&c.weight) || bad(&c.bias) {
                return Err(NnError::Numeric { context: format!("conv{} gradient", i + 1) });
            }
        }
        for (j, d) in self.dense.iter().enumerate() {
            if bad(&d.weight) || bad(&d.bias) {
                return Err(NnError::Numeric { context: format!("dense{} gradient", j + 1) });
            }
        }
        Ok(())
    }
}

/// Backpropagates the mean focal loss over `batch` and returns the gradients
/// plus the mean loss itself.
pub fn backward(
    params: &ModelParams,
    batch: &[SampleWindow],
    cfg: &FocalLossConfig,
) -> Result<(ModelGrads, f64)> {
    if batch.is_empty() {
        return Err(NnError::Config("backward needs a nonempty batch".into()));
    }
    let mut grads = ModelGrads::zeros(params);
    let mut loss_sum = 0.0;
    for window in batch {
        let (p, cache) = run_forward(params, window)?;
        loss_sum += focal_loss(p, window.label, cfg)?;
        let dp = focal_loss_grad(p, window.label, cfg)?;
        let dz = dp * p * (1.0 - p);
        accumulate_sample(params, &cache, dz, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    grads.check_finite()?;
    Ok((grads, loss_sum * inv))
}

fn accumulate_sample(params: &ModelParams, cache: &Cache, dz: f64, grads: &mut ModelGrads) {
    let spec = &params.spec;

    // dense layers, last to first
    let n_dense = spec.dense_widths.len();
    let mut delta = vec![dz];
    for j in (0..n_dense).rev() {
        let input = &cache.dense_in[j];
        let in_dim = input.len();
        let g = &mut grads.dense[j];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] += d;
            let row = &mut g.weight[o * in_dim..(o + 1) * in_dim];
            for (w, &x) in row.iter_mut().zip(input) {
                *w += d * x;
            }
        }
        let weight = &params.dense[j].weight;
        let mut prev = vec![0.0; in_dim];
        for (o, &d) in delta.iter().enumerate() {
            let row = &weight[o * in_dim..(o + 1) * in_dim];
            for (p, &w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        if j > 0 {
            // ReLU mask of the previous dense layer
            for (p, &pre) in prev.iter_mut().zip(&cache.dense_pre[j - 1]) {
                if pre <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }

    // unflatten to [channels][length] of the last pooled map
    let n_blocks = spec.conv_blocks.len();
    let last_len = spec.length_after_block(n_blocks);
    let last_ch = spec.conv_blocks[n_blocks - 1].filters;
    let mut dpool: Vec<Vec<f64>> =
        (0..last_ch).map(|c| delta[c * last_len..(c + 1) * last_len].to_vec()).collect();

    // conv blocks, last to first
    for k in (0..n_blocks).rev() {
        let block = &spec.conv_blocks[k];
        let conv_pre = &cache.conv_pre[k];
        let input = &cache.block_in[k];
        let in_ch = input.len();
        let len = input[0].len();
        let pad = (block.kernel_size - 1) / 2;

        // pool backward + ReLU mask
        let mut dconv = vec![vec![0.0; len]; block.filters];
        for (o, drow) in dpool.iter().enumerate() {
            for (j, &d) in drow.iter().enumerate() {
                let src = cache.argmax[k][o][j];
                if conv_pre[o][src] > 0.0 {
                    dconv[o][src] += d;
                }
            }
        }

        // weight/bias gradients and input delta
        let g = &mut grads.convs[k];
        let weight = &params.convs[k].weight;
        let mut dinput = vec![vec![0.0; len]; in_ch];
        for (o, drow) in dconv.iter().enumerate() {
            g.bias[o] += drow.iter().sum::<f64>();
            for c in 0..in_ch {
                let w_base = (o * in_ch + c) * block.kernel_size;
                let in_row = &input[c];
                let din_row = &mut dinput[c];
                for t in 0..block.kernel_size {
                    let lo = pad.saturating_sub(t);
                    let hi = (len + pad).saturating_sub(t).min(len);
                    let mut acc = 0.0;
                    let w = weight[w_base + t];
                    for i in lo..hi {
                        let d = drow[i];
                        acc += d * in_row[i + t - pad];
                        din_row[i + t - pad] += d * w;
                    }
                    g.weight[w_base + t] += acc;
                }
            }
        }
        dpool = dinput;
    }

    // input batch norm: gradients for gamma/beta only
    for (c, drow) in dpool.iter().enumerate().take(spec.input_channels) {
        let hat = &cache.input_hat[c];
        let mut dg = 0.0;
        let mut db = 0.0;
        for (&h, &d) in hat.iter().zip(drow) {
            dg += d * h;
            db += d;
        }
        grads.gamma[c] += dg;
        grads.beta[c] += db;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConvBlockSpec, ModelSpec};
    use crate::rng::stream_rng;
    use crate::signal::Label;
    use rand::Rng;

    fn mini_spec() -> ModelSpec {
        ModelSpec {
            input_channels: 2,
            input_length: 8,
            conv_blocks: vec![
                ConvBlockSpec { filters: 3, kernel_size: 3, pool_width: 2 },
                ConvBlockSpec { filters: 2, kernel_size: 3, pool_width: 2 },
            ],
            dense_widths: vec![4, 1],
        }
    }

    fn window(spec: &ModelSpec, seed: u64, label: Label) -> SampleWindow {
        let mut rng = stream_rng(seed, "nn-test-window");
        SampleWindow {
            start_time: 0.0,
            sample_rate_hz: spec.input_length as u32 / 4,
            channels: (0..spec.input_channels)
                .map(|_| (0..spec.input_length).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            label,
        }
    }

    #[test]
    fn zero_params_output_half() {
        let spec = mini_spec();
        let params = ModelParams::zeros(&spec).unwrap();
        let w = window(&spec, 1, Label::Preictal);
        assert_eq!(forward(&params, &w).unwrap(), 0.5);
    }

    #[test]
    fn forward_is_deterministic_and_in_unit_interval() {
        let spec = mini_spec();
        let params = ModelParams::init(&spec, 9).unwrap();
        for s in 0..20 {
            let w = window(&spec, s, Label::Interictal);
            let p1 = forward(&params, &w).unwrap();
            let p2 = forward(&params, &w).unwrap();
            assert!(p1 > 0.0 && p1 < 1.0);
            assert_eq!(p1.to_bits(), p2.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let spec = mini_spec();
        let params = ModelParams::init(&spec, 2).unwrap();
        let mut w = window(&spec, 0, Label::Preictal);
        w.channels.pop();
        match forward(&params, &w) {
            Err(NnError::Shape { layer, expected, actual }) => {
                assert_eq!(layer, "input");
                assert!(expected.contains("2 channels"));
                assert!(actual.contains("1 channels"));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn predict_proba_consistency() {
        let spec = mini_spec();
        let params = ModelParams::init(&spec, 4).unwrap();
        assert!(predict_proba(&params, &[]).unwrap().is_empty());
        let w = window(&spec, 3, Label::Preictal);
        let ps = predict_proba(&params, &[w.clone(), w.clone(), w.clone()]).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0], forward(&params, &w).unwrap());
        assert_eq!(ps[0], ps[1]);
        assert_eq!(ps[1], ps[2]);
    }

    /// Central finite differences over every trainable coordinate.
    fn fd_gradient(
        params: &ModelParams,
        batch: &[SampleWindow],
        cfg: &FocalLossConfig,
    ) -> Vec<f64> {
        let h = 1e-6;
        let flat = params.flatten_trainable();
        let mut out = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut probe = params.clone();
            let mut shifted = flat.clone();
            shifted[i] = flat[i] + h;
            probe.assign_trainable(&shifted);
            let hi = mean_loss(&probe, batch, cfg);
            shifted[i] = flat[i] - h;
            probe.assign_trainable(&shifted);
            let lo = mean_loss(&probe, batch, cfg);
            out.push((hi - lo) / (2.0 * h));
        }
        out
    }

    fn mean_loss(params: &ModelParams, batch: &[SampleWindow], cfg: &FocalLossConfig) -> f64 {
        batch
            .iter()
            .map(|w| focal_loss(forward(params, w).unwrap(), w.label, cfg).unwrap())
            .sum::<f64>()
            / batch.len() as f64
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = mini_spec();
        let params = ModelParams::init(&spec, 11).unwrap();
        let batch = vec![window(&spec, 100, Label::Preictal)];
        let cfg = FocalLossConfig::default();
        let (grads, _) = backward(&params, &batch, &cfg).unwrap();
        let analytic = grads.flatten();
        let numeric = fd_gradient(&params, &batch, &cfg);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let scale = n.abs().max(1e-6);
            assert!(
                (a - n).abs() / scale <= 1e-4,
                "coordinate {i}: analytic {a} vs fd {n}"
            );
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let spec = mini_spec();
        let params = ModelParams::init(&spec, 13).unwrap();
        let cfg = FocalLossConfig::default();
        let batch = vec![
            window(&spec, 21, Label::Preictal),
            window(&spec, 22, Label::Interictal),
            window(&spec, 23, Label::Interictal),
        ];
        let (batch_grads, _) = backward(&params, &batch, &cfg).unwrap();
        let flat_batch = batch_grads.flatten();

        let mut sum = vec![0.0; flat_batch.len()];
        for w in &batch {
            let (g, _) = backward(&params, std::slice::from_ref(w), &cfg).unwrap();
            for (s, v) in sum.iter_mut().zip(g.flatten()) {
                *s += v;
            }
        }
        for (b, s) in flat_batch.iter().zip(&sum) {
            assert!((b - s / 3.0).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    /// gamma = 0, alpha = 1/2, and a batch pairing both labels on the same
    /// window puts the zero model at an exact stationary point.
    #[test]
    fn symmetric_batch_at_zero_params_has_zero_gradient() {
        let spec = mini_spec();
        let params = ModelParams::zeros(&spec).unwrap();
        let cfg = FocalLossConfig::bce();
        let w = window(&spec, 55, Label::Preictal);
        let mut w_neg = w.clone();
        w_neg.label = Label::Interictal;
        let (grads, _) = backward(&params, &[w, w_neg], &cfg).unwrap();
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let spec = mini_spec();
        let params = ModelParams::zeros(&spec).unwrap();
        assert!(backward(&params, &[], &FocalLossConfig::default()).is_err());
    }

    /// Shape conservation down the standard stack, asserted via the cache.
    #[test]
    fn standard_stack_halves_length_per_block() {
        let spec = ModelSpec::standard(2, 256);
        let params = ModelParams::init(&spec, 1).unwrap();
        let w = window(&spec, 7, Label::Interictal);
        let (_, cache) = run_forward(&params, &w).unwrap();
        for (k, input) in cache.block_in.iter().enumerate() {
            assert_eq!(input[0].len(), spec.length_after_block(k));
        }
        assert_eq!(cache.dense_in[0].len(), spec.feature_len());
    }

    /// The production-size network (1024 samples, five blocks, four dense
    /// layers) runs end to end.
    #[test]
    fn full_size_architecture_forward_and_backward() {
        let spec = ModelSpec::standard(1, 1024);
        let params = ModelParams::init(&spec, 42).unwrap();
        let mut w = window(&spec, 3, Label::Preictal);
        w.sample_rate_hz = 256;
        let (p, cache) = run_forward(&params, &w).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(cache.block_in.len(), 5);
        assert_eq!(cache.dense_pre.len(), 4);
        assert_eq!(cache.block_in[4][0].len(), 64);
        assert_eq!(cache.dense_in[0].len(), 64 * 32);
        let (grads, loss) = backward(&params, &[w], &FocalLossConfig::default()).unwrap();
        assert!(loss.is_finite());
        assert_eq!(grads.flatten().len(), params.trainable_count());
    }
}
