//! Flow layers: actnorm, Householder reflection stacks, additive couplings
//! for vector and image data, and masked invertible convolutions.
//!
//! Every layer provides analytic forward/inverse/JVP/inverse-JVP plus a
//! reverse-mode `vjp` that accumulates parameter gradients into a flat slice
//! (matching the layer's parameter layout) and returns the gradient with
//! respect to the layer input.

use crate::error::{Error, Result};
use crate::flow::activation::ActivationBank;
use crate::flow::mask::MaskSpec;

/// Learnable per-dimension (vector) or per-channel (image) affine
/// normalization `y = s x + b` with `s = exp(log_scale)`.
///
/// Parameter layout: `[log_scale.., bias..]`.
#[derive(Debug, Clone)]
pub struct ActNorm {
    pub log_scale: Vec<f64>,
    pub bias: Vec<f64>,
    /// Entries covered by one scale: 1 for vectors, `h * w` for images.
    pub spatial: usize,
    pub initialized: bool,
}

impl ActNorm {
    pub fn identity(sites: usize, spatial: usize, initialized: bool) -> Self {
        Self {
            log_scale: vec![0.0; sites],
            bias: vec![0.0; sites],
            spatial,
            initialized,
        }
    }

    fn site(&self, idx: usize) -> usize {
        idx / self.spatial
    }

    fn check_initialized(&self) -> Result<()> {
        if !self.initialized {
            return Err(Error::State(
                "actnorm evaluated before data-dependent initialization".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_initialized()?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let s = self.site(i);
                self.log_scale[s].exp() * v + self.bias[s]
            })
            .collect())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_initialized()?;
        Ok(y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let s = self.site(i);
                (v - self.bias[s]) * (-self.log_scale[s]).exp()
            })
            .collect())
    }

    pub fn jvp(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &u)| self.log_scale[self.site(i)].exp() * u)
            .collect()
    }

    pub fn inverse_jvp(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .enumerate()
            .map(|(i, &u)| (-self.log_scale[self.site(i)]).exp() * u)
            .collect()
    }

    /// `log |det| = spatial * sum(log_scale)`, independent of the input.
    pub fn log_abs_det(&self) -> f64 {
        self.spatial as f64 * self.log_scale.iter().sum::<f64>()
    }

    pub fn param_count(&self) -> usize {
        2 * self.log_scale.len()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.log_scale);
        out.extend_from_slice(&self.bias);
    }

    pub fn read_params(&mut self, params: &[f64]) {
        let n = self.log_scale.len();
        self.log_scale.copy_from_slice(&params[..n]);
        self.bias.copy_from_slice(&params[n..2 * n]);
    }

    /// Reverse-mode gradient. `grad` layout: `[log_scale.., bias..]`.
    pub fn vjp(
        &self,
        x: &[f64],
        upstream: &[f64],
        upstream_logdet: f64,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let n = self.log_scale.len();
        let mut gx = vec![0.0; x.len()];
        for i in 0..x.len() {
            let s = self.site(i);
            let scale = self.log_scale[s].exp();
            grad[s] += upstream[i] * scale * x[i];
            grad[n + s] += upstream[i];
            gx[i] = upstream[i] * scale;
        }
        for s in 0..n {
            grad[s] += upstream_logdet * self.spatial as f64;
        }
        gx
    }

    /// Data-dependent initialization: choose `s, b` so the batch leaves this
    /// layer with per-site mean 0 and variance 1.
    pub fn data_init(&mut self, batch: &[Vec<f64>]) {
        let n = self.log_scale.len();
        let count = (batch.len() * self.spatial) as f64;
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for x in batch {
            for (i, &v) in x.iter().enumerate() {
                mean[self.site(i)] += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        for x in batch {
            for (i, &v) in x.iter().enumerate() {
                let d = v - mean[self.site(i)];
                var[self.site(i)] += d * d;
            }
        }
        for s in 0..n {
            let std = (var[s] / count).sqrt().max(1e-6);
            self.log_scale[s] = -std.ln();
            self.bias[s] = -mean[s] / std;
        }
        self.initialized = true;
    }
}

/// Product of Householder reflections `H_v = I - (2 / ||v||^2) v v^T`.
///
/// Parameter layout: the reflection vectors concatenated in application
/// order.
#[derive(Debug, Clone)]
pub struct HouseholderStack {
    pub vectors: Vec<Vec<f64>>,
}

fn reflect(v: &[f64], x: &[f64]) -> Vec<f64> {
    let beta: f64 = v.iter().map(|a| a * a).sum();
    let alpha: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
    let c = 2.0 * alpha / beta;
    x.iter().zip(v).map(|(&xi, &vi)| xi - c * vi).collect()
}

impl HouseholderStack {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for v in &self.vectors {
            y = reflect(v, &y);
        }
        y
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        for v in self.vectors.iter().rev() {
            x = reflect(v, &x);
        }
        x
    }

    pub fn param_count(&self) -> usize {
        self.vectors.iter().map(|v| v.len()).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for v in &self.vectors {
            out.extend_from_slice(v);
        }
    }

    pub fn read_params(&mut self, params: &[f64]) {
        let mut off = 0;
        for v in self.vectors.iter_mut() {
            let n = v.len();
            v.copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }

    /// Reverse-mode gradient through the reflection chain.
    pub fn vjp(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        // recompute the intermediate inputs of each reflection
        let mut inputs = Vec::with_capacity(self.vectors.len());
        let mut cur = x.to_vec();
        for v in &self.vectors {
            inputs.push(cur.clone());
            cur = reflect(v, &cur);
        }
        let mut u = upstream.to_vec();
        let mut offsets: Vec<usize> = Vec::with_capacity(self.vectors.len());
        let mut off = 0;
        for v in &self.vectors {
            offsets.push(off);
            off += v.len();
        }
        for (r, v) in self.vectors.iter().enumerate().rev() {
            let xin = &inputs[r];
            let beta: f64 = v.iter().map(|a| a * a).sum();
            let alpha: f64 = v.iter().zip(xin).map(|(a, b)| a * b).sum();
            let vu: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
            let g = &mut grad[offsets[r]..offsets[r] + v.len()];
            for i in 0..v.len() {
                g[i] += -2.0
                    * (vu / beta * xin[i] + alpha / beta * u[i]
                        - 2.0 * alpha * vu / (beta * beta) * v[i]);
            }
            // H is symmetric, so the input gradient is another reflection
            u = reflect(v, &u);
        }
        u
    }
}

/// Dense layer `y = W x + b` with `W` stored row-major.
#[derive(Debug, Clone)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for r in 0..self.rows {
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            y[r] += row.iter().zip(x).map(|(&w, &v)| w * v).sum::<f64>();
        }
        y
    }

    pub fn jvp(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            y[r] = row.iter().zip(v).map(|(&w, &u)| w * u).sum();
        }
        y
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `grad` layout: `[weight.., bias..]`.
    pub fn vjp(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.cols];
        for r in 0..self.rows {
            let u = upstream[r];
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += u * x[c];
                gx[c] += u * row[c];
            }
            grad[self.weight.len() + r] += u;
        }
        gx
    }
}

/// Coupling network for vector data.
#[derive(Debug, Clone)]
pub enum VectorNet {
    /// Fixed 1D convolution with filter `[1, 0, 1]` and zero padding,
    /// followed by a learnable activation per entry.
    FixedFilter { act: ActivationBank },
    /// Feed-forward stack with per-node activations on hidden layers.
    FeedForward {
        layers: Vec<Dense>,
        acts: Vec<ActivationBank>,
    },
}

fn fixed_filter_conv(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    (0..d)
        .map(|i| {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < d { u[i + 1] } else { 0.0 };
            left + right
        })
        .collect()
}

impl VectorNet {
    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Self::FixedFilter { act } => {
                let c = fixed_filter_conv(u);
                c.iter().enumerate().map(|(i, &x)| act.value(i, x)).collect()
            }
            Self::FeedForward { layers, acts } => {
                let mut cur = u.to_vec();
                for (l, dense) in layers.iter().enumerate() {
                    cur = dense.eval(&cur);
                    if l < acts.len() {
                        let act = &acts[l];
                        cur = cur
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| act.value(i, x))
                            .collect();
                    }
                }
                cur
            }
        }
    }

    pub fn jvp(&self, u: &[f64], du: &[f64]) -> Vec<f64> {
        match self {
            Self::FixedFilter { act } => {
                let c = fixed_filter_conv(u);
                let dc = fixed_filter_conv(du);
                c.iter()
                    .zip(&dc)
                    .enumerate()
                    .map(|(i, (&x, &dx))| act.derivative(i, x) * dx)
                    .collect()
            }
            Self::FeedForward { layers, acts } => {
                let mut cur = u.to_vec();
                let mut dcur = du.to_vec();
                for (l, dense) in layers.iter().enumerate() {
                    let pre = dense.eval(&cur);
                    dcur = dense.jvp(&dcur);
                    if l < acts.len() {
                        let act = &acts[l];
                        dcur = pre
                            .iter()
                            .zip(&dcur)
                            .enumerate()
                            .map(|(i, (&x, &dx))| act.derivative(i, x) * dx)
                            .collect();
                        cur = pre
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| act.value(i, x))
                            .collect();
                    } else {
                        cur = pre;
                    }
                }
                dcur
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::FixedFilter { act } => act.coeffs.len(),
            Self::FeedForward { layers, acts } => {
                layers.iter().map(|l| l.param_count()).sum::<usize>()
                    + acts.iter().map(|a| a.coeffs.len()).sum::<usize>()
            }
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Self::FixedFilter { act } => out.extend_from_slice(&act.coeffs),
            Self::FeedForward { layers, acts } => {
                for (l, dense) in layers.iter().enumerate() {
                    out.extend_from_slice(&dense.weight);
                    out.extend_from_slice(&dense.bias);
                    if l < acts.len() {
                        out.extend_from_slice(&acts[l].coeffs);
                    }
                }
            }
        }
    }

    pub fn read_params(&mut self, params: &[f64]) {
        match self {
            Self::FixedFilter { act } => act.coeffs.copy_from_slice(params),
            Self::FeedForward { layers, acts } => {
                let mut off = 0;
                let n_acts = acts.len();
                for (l, dense) in layers.iter_mut().enumerate() {
                    let nw = dense.weight.len();
                    dense.weight.copy_from_slice(&params[off..off + nw]);
                    off += nw;
                    let nb = dense.bias.len();
                    dense.bias.copy_from_slice(&params[off..off + nb]);
                    off += nb;
                    if l < n_acts {
                        let a = &mut acts[l];
                        let na = a.coeffs.len();
                        a.coeffs.copy_from_slice(&params[off..off + na]);
                        off += na;
                    }
                }
            }
        }
    }

    /// Reverse-mode gradient; `grad` follows the `write_params` layout.
    pub fn vjp(&self, u: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        match self {
            Self::FixedFilter { act } => {
                let c = fixed_filter_conv(u);
                let d = u.len();
                let mut gc = vec![0.0; d];
                for i in 0..d {
                    act.accumulate_coeff_grad(i, c[i], upstream[i], grad);
                    gc[i] = upstream[i] * act.derivative(i, c[i]);
                }
                // transpose of the symmetric filter [1, 0, 1]
                fixed_filter_conv(&gc)
            }
            Self::FeedForward { layers, acts } => {
                // forward pass caching pre-activations and layer inputs
                let mut inputs = Vec::with_capacity(layers.len());
                let mut pres = Vec::with_capacity(layers.len());
                let mut cur = u.to_vec();
                for (l, dense) in layers.iter().enumerate() {
                    inputs.push(cur.clone());
                    let pre = dense.eval(&cur);
                    cur = if l < acts.len() {
                        let act = &acts[l];
                        pre.iter()
                            .enumerate()
                            .map(|(i, &x)| act.value(i, x))
                            .collect()
                    } else {
                        pre.clone()
                    };
                    pres.push(pre);
                }
                // parameter slice offsets in write_params order
                let mut offsets = Vec::with_capacity(layers.len());
                let mut off = 0;
                for (l, dense) in layers.iter().enumerate() {
                    offsets.push(off);
                    off += dense.param_count();
                    if l < acts.len() {
                        off += acts[l].coeffs.len();
                    }
                }
                let mut up = upstream.to_vec();
                for l in (0..layers.len()).rev() {
                    let dense = &layers[l];
                    let dense_off = offsets[l];
                    if l < acts.len() {
                        let act = &acts[l];
                        let act_off = dense_off + dense.param_count();
                        let pre = &pres[l];
                        let mut up_pre = vec![0.0; pre.len()];
                        for i in 0..pre.len() {
                            act.accumulate_coeff_grad(
                                i,
                                pre[i],
                                up[i],
                                &mut grad[act_off..act_off + act.coeffs.len()],
                            );
                            up_pre[i] = up[i] * act.derivative(i, pre[i]);
                        }
                        up = up_pre;
                    }
                    up = dense.vjp(
                        &inputs[l],
                        &up,
                        &mut grad[dense_off..dense_off + dense.param_count()],
                    );
                }
                up
            }
        }
    }
}

/// Additive coupling for vector data: entries in `J` pass through unchanged
/// and feed the network whose output shifts the complement.
#[derive(Debug, Clone)]
pub struct VectorCoupling {
    pub mask: MaskSpec,
    pub net: VectorNet,
}

impl VectorCoupling {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let f = self.net.eval(&self.mask.apply(x));
        x.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&xi, &m), &fi)| xi + (1.0 - m) * fi)
            .collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        // entries in J are unchanged, so the shift can be recomputed from y
        let f = self.net.eval(&self.mask.apply(y));
        y.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&yi, &m), &fi)| yi - (1.0 - m) * fi)
            .collect()
    }

    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let df = self.net.jvp(&self.mask.apply(x), &self.mask.apply(v));
        v.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&vi, &m), &di)| vi + (1.0 - m) * di)
            .collect()
    }

    pub fn inverse_jvp(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let df = self.net.jvp(&self.mask.apply(y), &self.mask.apply(w));
        w.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&wi, &m), &di)| wi - (1.0 - m) * di)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn vjp(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let u = self.mask.apply(x);
        let up_f = self.mask.apply_complement(upstream);
        let gu = self.net.vjp(&u, &up_f, grad);
        upstream
            .iter()
            .zip(self.mask.values())
            .zip(&gu)
            .map(|((&ui, &m), &gi)| ui + m * gi)
            .collect()
    }
}

/// 2D convolution over channel-major `c x h x w` data with zero padding
/// `(k - 1) / 2`, so spatial shape is preserved.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    /// `out_c x in_c x k x k`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn kidx(&self, oc: usize, ic: usize, ki: usize, kj: usize) -> usize {
        ((oc * self.in_c + ic) * self.k + ki) * self.k + kj
    }

    pub fn eval(&self, input: &[f64], h: usize, w: usize, with_bias: bool) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let mut out = vec![0.0; self.out_c * h * w];
        for oc in 0..self.out_c {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = if with_bias { self.bias[oc] } else { 0.0 };
                    for ic in 0..self.in_c {
                        for ki in 0..self.k {
                            let ii = i + ki;
                            if ii < pad || ii - pad >= h {
                                continue;
                            }
                            let ii = ii - pad;
                            for kj in 0..self.k {
                                let jj = j + kj;
                                if jj < pad || jj - pad >= w {
                                    continue;
                                }
                                let jj = jj - pad;
                                acc += self.kernel[self.kidx(oc, ic, ki, kj)]
                                    * input[(ic * h + ii) * w + jj];
                            }
                        }
                    }
                    out[(oc * h + i) * w + j] = acc;
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// `grad` layout: `[kernel.., bias..]`; returns the input gradient.
    pub fn vjp(
        &self,
        input: &[f64],
        upstream: &[f64],
        h: usize,
        w: usize,
        with_bias: bool,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let mut gin = vec![0.0; self.in_c * h * w];
        for oc in 0..self.out_c {
            for i in 0..h {
                for j in 0..w {
                    let u = upstream[(oc * h + i) * w + j];
                    if u == 0.0 {
                        continue;
                    }
                    if with_bias {
                        grad[self.kernel.len() + oc] += u;
                    }
                    for ic in 0..self.in_c {
                        for ki in 0..self.k {
                            let ii = i + ki;
                            if ii < pad || ii - pad >= h {
                                continue;
                            }
                            let ii = ii - pad;
                            for kj in 0..self.k {
                                let jj = j + kj;
                                if jj < pad || jj - pad >= w {
                                    continue;
                                }
                                let jj = jj - pad;
                                let kix = self.kidx(oc, ic, ki, kj);
                                grad[kix] += u * input[(ic * h + ii) * w + jj];
                                gin[(ic * h + ii) * w + jj] += u * self.kernel[kix];
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

/// Convolutional coupling network for image data: convolutions with
/// per-channel learnable activations between them.
#[derive(Debug, Clone)]
pub struct ConvNet {
    pub convs: Vec<Conv2d>,
    pub acts: Vec<ActivationBank>,
    pub height: usize,
    pub width: usize,
}

impl ConvNet {
    fn act_apply(&self, l: usize, pre: &[f64]) -> Vec<f64> {
        let act = &self.acts[l];
        let hw = self.height * self.width;
        pre.iter()
            .enumerate()
            .map(|(i, &x)| act.value(i / hw, x))
            .collect()
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut cur = u.to_vec();
        for (l, conv) in self.convs.iter().enumerate() {
            cur = conv.eval(&cur, self.height, self.width, true);
            if l < self.acts.len() {
                cur = self.act_apply(l, &cur);
            }
        }
        cur
    }

    pub fn jvp(&self, u: &[f64], du: &[f64]) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut cur = u.to_vec();
        let mut dcur = du.to_vec();
        for (l, conv) in self.convs.iter().enumerate() {
            let pre = conv.eval(&cur, self.height, self.width, true);
            dcur = conv.eval(&dcur, self.height, self.width, false);
            if l < self.acts.len() {
                let act = &self.acts[l];
                dcur = pre
                    .iter()
                    .zip(&dcur)
                    .enumerate()
                    .map(|(i, (&x, &dx))| act.derivative(i / hw, x) * dx)
                    .collect();
                cur = self.act_apply(l, &pre);
            } else {
                cur = pre;
            }
        }
        dcur
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.param_count()).sum::<usize>()
            + self.acts.iter().map(|a| a.coeffs.len()).sum::<usize>()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (l, conv) in self.convs.iter().enumerate() {
            out.extend_from_slice(&conv.kernel);
            out.extend_from_slice(&conv.bias);
            if l < self.acts.len() {
                out.extend_from_slice(&self.acts[l].coeffs);
            }
        }
    }

    pub fn read_params(&mut self, params: &[f64]) {
        let mut off = 0;
        let n_acts = self.acts.len();
        for l in 0..self.convs.len() {
            let conv = &mut self.convs[l];
            let nk = conv.kernel.len();
            conv.kernel.copy_from_slice(&params[off..off + nk]);
            off += nk;
            let nb = conv.bias.len();
            conv.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
            if l < n_acts {
                let a = &mut self.acts[l];
                let na = a.coeffs.len();
                a.coeffs.copy_from_slice(&params[off..off + na]);
                off += na;
            }
        }
    }

    pub fn vjp(&self, u: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pres = Vec::with_capacity(self.convs.len());
        let mut cur = u.to_vec();
        for (l, conv) in self.convs.iter().enumerate() {
            inputs.push(cur.clone());
            let pre = conv.eval(&cur, self.height, self.width, true);
            cur = if l < self.acts.len() {
                self.act_apply(l, &pre)
            } else {
                pre.clone()
            };
            pres.push(pre);
        }
        let mut offsets = Vec::with_capacity(self.convs.len());
        let mut off = 0;
        for (l, conv) in self.convs.iter().enumerate() {
            offsets.push(off);
            off += conv.param_count();
            if l < self.acts.len() {
                off += self.acts[l].coeffs.len();
            }
        }
        let mut up = upstream.to_vec();
        for l in (0..self.convs.len()).rev() {
            let conv = &self.convs[l];
            let conv_off = offsets[l];
            if l < self.acts.len() {
                let act = &self.acts[l];
                let act_off = conv_off + conv.param_count();
                let pre = &pres[l];
                let mut up_pre = vec![0.0; pre.len()];
                for i in 0..pre.len() {
                    act.accumulate_coeff_grad(
                        i / hw,
                        pre[i],
                        up[i],
                        &mut grad[act_off..act_off + act.coeffs.len()],
                    );
                    up_pre[i] = up[i] * act.derivative(i / hw, pre[i]);
                }
                up = up_pre;
            }
            up = conv.vjp(
                &inputs[l],
                &up,
                self.height,
                self.width,
                true,
                &mut grad[conv_off..conv_off + conv.param_count()],
            );
        }
        up
    }
}

/// Additive coupling for image data with a convolutional network.
#[derive(Debug, Clone)]
pub struct ConvCoupling {
    pub mask: MaskSpec,
    pub net: ConvNet,
}

impl ConvCoupling {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let f = self.net.eval(&self.mask.apply(x));
        x.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&xi, &m), &fi)| xi + (1.0 - m) * fi)
            .collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let f = self.net.eval(&self.mask.apply(y));
        y.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&yi, &m), &fi)| yi - (1.0 - m) * fi)
            .collect()
    }

    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let df = self.net.jvp(&self.mask.apply(x), &self.mask.apply(v));
        v.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&vi, &m), &di)| vi + (1.0 - m) * di)
            .collect()
    }

    pub fn inverse_jvp(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let df = self.net.jvp(&self.mask.apply(y), &self.mask.apply(w));
        w.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&wi, &m), &di)| wi - (1.0 - m) * di)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn vjp(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let u = self.mask.apply(x);
        let up_f = self.mask.apply_complement(upstream);
        let gu = self.net.vjp(&u, &up_f, grad);
        upstream
            .iter()
            .zip(self.mask.values())
            .zip(&gu)
            .map(|((&ui, &m), &gi)| ui + m * gi)
            .collect()
    }
}

/// Masked invertible convolution: an additive update of the complement of
/// `mask` by a single convolution of the masked entries. Volume-preserving
/// by the triangular structure.
#[derive(Debug, Clone)]
pub struct MaskedInvConv {
    /// Entries in this set feed the convolution and pass through unchanged.
    pub mask: MaskSpec,
    pub conv: Conv2d,
    pub height: usize,
    pub width: usize,
}

impl MaskedInvConv {
    fn shift(&self, source: &[f64]) -> Vec<f64> {
        self.conv.eval(source, self.height, self.width, true)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let f = self.shift(&self.mask.apply(x));
        x.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&xi, &m), &fi)| xi + (1.0 - m) * fi)
            .collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let f = self.shift(&self.mask.apply(y));
        y.iter()
            .zip(self.mask.values())
            .zip(&f)
            .map(|((&yi, &m), &fi)| yi - (1.0 - m) * fi)
            .collect()
    }

    pub fn jvp(&self, v: &[f64]) -> Vec<f64> {
        let df = self
            .conv
            .eval(&self.mask.apply(v), self.height, self.width, false);
        v.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&vi, &m), &di)| vi + (1.0 - m) * di)
            .collect()
    }

    pub fn inverse_jvp(&self, w: &[f64]) -> Vec<f64> {
        let df = self
            .conv
            .eval(&self.mask.apply(w), self.height, self.width, false);
        w.iter()
            .zip(self.mask.values())
            .zip(&df)
            .map(|((&wi, &m), &di)| wi - (1.0 - m) * di)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.conv.kernel);
        out.extend_from_slice(&self.conv.bias);
    }

    pub fn read_params(&mut self, params: &[f64]) {
        let nk = self.conv.kernel.len();
        self.conv.kernel.copy_from_slice(&params[..nk]);
        self.conv.bias.copy_from_slice(&params[nk..]);
    }

    pub fn vjp(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let u = self.mask.apply(x);
        let up_f = self.mask.apply_complement(upstream);
        let gu = self
            .conv
            .vjp(&u, &up_f, self.height, self.width, true, grad);
        upstream
            .iter()
            .zip(self.mask.values())
            .zip(&gu)
            .map(|((&ui, &m), &gi)| ui + m * gi)
            .collect()
    }
}
