//! Flow assembly: blocks of (invertible linear, additive coupling) with a
//! flat parameter vector, analytic reverse-mode gradients, and a
//! `Diffeomorphism` implementation so flows plug directly into the geometry
//! operations.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffeo::Diffeomorphism;
use crate::error::{Error, Result};
use crate::flow::activation::ActivationBank;
use crate::flow::config::{FlowConfig, VectorCouplingSpec};
use crate::flow::layers::{
    ActNorm, Conv2d, ConvCoupling, ConvNet, Dense, HouseholderStack, MaskedInvConv, VectorCoupling,
    VectorNet,
};
use crate::flow::mask::MaskSpec;

/// Scale of the final-layer weights of coupling networks at initialization,
/// so a fresh flow stays close to an orthogonal map.
pub const COUPLING_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone)]
pub enum Layer {
    ActNorm(ActNorm),
    Householder(HouseholderStack),
    VectorCoupling(VectorCoupling),
    InvConv(MaskedInvConv),
    ConvCoupling(ConvCoupling),
}

impl Layer {
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Self::ActNorm(l) => l.forward(x)?,
            Self::Householder(l) => l.forward(x),
            Self::VectorCoupling(l) => l.forward(x),
            Self::InvConv(l) => l.forward(x),
            Self::ConvCoupling(l) => l.forward(x),
        })
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Self::ActNorm(l) => l.inverse(y)?,
            Self::Householder(l) => l.inverse(y),
            Self::VectorCoupling(l) => l.inverse(y),
            Self::InvConv(l) => l.inverse(y),
            Self::ConvCoupling(l) => l.inverse(y),
        })
    }

    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Self::ActNorm(l) => l.jvp(v),
            Self::Householder(l) => l.forward(v),
            Self::VectorCoupling(l) => l.jvp(x, v),
            Self::InvConv(l) => l.jvp(v),
            Self::ConvCoupling(l) => l.jvp(x, v),
        })
    }

    pub fn inverse_jvp(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Self::ActNorm(l) => l.inverse_jvp(w),
            Self::Householder(l) => l.inverse(w),
            Self::VectorCoupling(l) => l.inverse_jvp(y, w),
            Self::InvConv(l) => l.inverse_jvp(w),
            Self::ConvCoupling(l) => l.inverse_jvp(y, w),
        })
    }

    pub fn log_abs_det(&self) -> f64 {
        match self {
            Self::ActNorm(l) => l.log_abs_det(),
            // reflections, additive couplings, and masked convolutions are
            // volume preserving
            _ => 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::ActNorm(l) => l.param_count(),
            Self::Householder(l) => l.param_count(),
            Self::VectorCoupling(l) => l.param_count(),
            Self::InvConv(l) => l.param_count(),
            Self::ConvCoupling(l) => l.param_count(),
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Self::ActNorm(l) => l.write_params(out),
            Self::Householder(l) => l.write_params(out),
            Self::VectorCoupling(l) => l.net.write_params(out),
            Self::InvConv(l) => l.write_params(out),
            Self::ConvCoupling(l) => l.net.write_params(out),
        }
    }

    pub fn read_params(&mut self, params: &[f64]) {
        match self {
            Self::ActNorm(l) => l.read_params(params),
            Self::Householder(l) => l.read_params(params),
            Self::VectorCoupling(l) => l.net.read_params(params),
            Self::InvConv(l) => l.read_params(params),
            Self::ConvCoupling(l) => l.net.read_params(params),
        }
    }

    pub fn vjp(
        &self,
        x: &[f64],
        upstream: &[f64],
        upstream_logdet: f64,
        grad: &mut [f64],
    ) -> Vec<f64> {
        match self {
            Self::ActNorm(l) => l.vjp(x, upstream, upstream_logdet, grad),
            Self::Householder(l) => l.vjp(x, upstream, grad),
            Self::VectorCoupling(l) => l.vjp(x, upstream, grad),
            Self::InvConv(l) => l.vjp(x, upstream, grad),
            Self::ConvCoupling(l) => l.vjp(x, upstream, grad),
        }
    }
}

/// A constant-determinant normalizing flow.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub config: FlowConfig,
    pub layers: Vec<Layer>,
    /// `(layer_id, offset, len)` into the flat parameter vector.
    layout: Vec<(String, usize, usize)>,
    pub seed: u64,
}

fn normal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Build a freshly initialized flow. Initialization is deterministic in
/// `seed`: linear parts start orthogonal (identity actnorm, random
/// reflections) and coupling shifts start near zero, so the fresh flow is
/// close to an orthogonal map.
pub fn build_flow(config: &FlowConfig, seed: u64) -> Result<FlowModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut names = Vec::new();
    match config {
        FlowConfig::Vector {
            dim,
            blocks,
            coupling,
            householder_reflections,
            actnorm_data_init,
        } => {
            let d = *dim;
            for b in 0..*blocks {
                let parity = b % 2 == 1;
                layers.push(Layer::ActNorm(ActNorm::identity(d, 1, !actnorm_data_init)));
                names.push(format!("b{b}.actnorm"));
                let vectors = (0..*householder_reflections)
                    .map(|_| normal(&mut rng, d, 1.0))
                    .collect();
                layers.push(Layer::Householder(HouseholderStack { vectors }));
                names.push(format!("b{b}.householder"));
                let net = match coupling {
                    VectorCouplingSpec::FixedFilter { activation_order } => {
                        VectorNet::FixedFilter {
                            act: ActivationBank::new(
                                d,
                                *activation_order,
                                normal(&mut rng, d * activation_order, COUPLING_INIT_SCALE),
                            ),
                        }
                    }
                    VectorCouplingSpec::FeedForward {
                        hidden_widths,
                        activation_order,
                    } => {
                        let mut widths = vec![d];
                        widths.extend_from_slice(hidden_widths);
                        widths.push(d);
                        let mut dense = Vec::new();
                        let mut acts = Vec::new();
                        for l in 0..widths.len() - 1 {
                            let (rows, cols) = (widths[l + 1], widths[l]);
                            let last = l == widths.len() - 2;
                            let scale = if last {
                                COUPLING_INIT_SCALE / (cols as f64).sqrt()
                            } else {
                                (cols as f64).sqrt().recip()
                            };
                            dense.push(Dense {
                                rows,
                                cols,
                                weight: normal(&mut rng, rows * cols, scale),
                                bias: vec![0.0; rows],
                            });
                            if !last {
                                acts.push(ActivationBank::tanh_init(rows, *activation_order));
                            }
                        }
                        VectorNet::FeedForward {
                            layers: dense,
                            acts,
                        }
                    }
                };
                layers.push(Layer::VectorCoupling(VectorCoupling {
                    mask: MaskSpec::vector(d, parity),
                    net,
                }));
                names.push(format!("b{b}.coupling"));
            }
        }
        FlowConfig::Image {
            channels,
            height,
            width,
            blocks,
            coupling_channels,
            activation_order,
            kernel_size,
            actnorm_data_init,
        } => {
            let (c, h, w, k) = (*channels, *height, *width, *kernel_size);
            for b in 0..*blocks {
                let parity = b % 2 == 1;
                layers.push(Layer::ActNorm(ActNorm::identity(
                    c,
                    h * w,
                    !actnorm_data_init,
                )));
                names.push(format!("b{b}.actnorm"));
                // first masked convolution updates J, the second its complement
                for (i, conv_parity) in [!parity, parity].into_iter().enumerate() {
                    let fan = (c * k * k) as f64;
                    layers.push(Layer::InvConv(MaskedInvConv {
                        mask: MaskSpec::image(c, h, w, conv_parity),
                        conv: Conv2d {
                            in_c: c,
                            out_c: c,
                            k,
                            kernel: normal(
                                &mut rng,
                                c * c * k * k,
                                COUPLING_INIT_SCALE / fan.sqrt(),
                            ),
                            bias: vec![0.0; c],
                        },
                        height: h,
                        width: w,
                    }));
                    names.push(format!("b{b}.invconv{i}"));
                }
                let mut widths = vec![c];
                widths.extend_from_slice(coupling_channels);
                widths.push(c);
                let mut convs = Vec::new();
                let mut acts = Vec::new();
                for l in 0..widths.len() - 1 {
                    let (in_c, out_c) = (widths[l], widths[l + 1]);
                    let last = l == widths.len() - 2;
                    let fan = (in_c * k * k) as f64;
                    let scale = if last {
                        COUPLING_INIT_SCALE / fan.sqrt()
                    } else {
                        fan.sqrt().recip()
                    };
                    convs.push(Conv2d {
                        in_c,
                        out_c,
                        k,
                        kernel: normal(&mut rng, out_c * in_c * k * k, scale),
                        bias: vec![0.0; out_c],
                    });
                    if !last {
                        acts.push(ActivationBank::tanh_init(out_c, *activation_order));
                    }
                }
                layers.push(Layer::ConvCoupling(ConvCoupling {
                    mask: MaskSpec::image(c, h, w, parity),
                    net: ConvNet {
                        convs,
                        acts,
                        height: h,
                        width: w,
                    },
                }));
                names.push(format!("b{b}.coupling"));
            }
        }
    }
    let mut layout = Vec::with_capacity(layers.len());
    let mut off = 0;
    for (layer, name) in layers.iter().zip(names) {
        let n = layer.param_count();
        layout.push((name, off, n));
        off += n;
    }
    Ok(FlowModel {
        config: config.clone(),
        layers,
        layout,
        seed,
    })
}

fn check_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}

impl FlowModel {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector length {} does not match model size {}",
                params.len(),
                self.param_count()
            )));
        }
        for (layer, (_, off, len)) in self.layers.iter_mut().zip(&self.layout) {
            layer.read_params(&params[*off..*off + *len]);
        }
        Ok(())
    }

    /// `(layer_id, offset, len)` triples into the flat parameter vector.
    pub fn param_layout(&self) -> &[(String, usize, usize)] {
        &self.layout
    }

    pub fn actnorm_initialized(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::ActNorm(a) => a.initialized,
            _ => true,
        })
    }

    pub fn set_actnorm_initialized(&mut self, value: bool) {
        for l in self.layers.iter_mut() {
            if let Layer::ActNorm(a) = l {
                a.initialized = value;
            }
        }
    }

    /// Data-dependent actnorm initialization: the batch is pushed through the
    /// flow and each actnorm layer normalizes it (per dimension or channel)
    /// when first reached.
    pub fn initialize_actnorm(&mut self, batch: &[Vec<f64>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Config(
                "actnorm initialization needs a non-empty batch".into(),
            ));
        }
        let mut cur: Vec<Vec<f64>> = batch.to_vec();
        for layer in self.layers.iter_mut() {
            if let Layer::ActNorm(a) = layer {
                if !a.initialized {
                    a.data_init(&cur);
                }
            }
            for x in cur.iter_mut() {
                *x = layer.forward(x)?;
            }
        }
        Ok(())
    }

    /// Reverse-mode gradient of `upstream_y . phi(x) + upstream_logdet *
    /// log|det D phi|` with respect to parameters (accumulated into `grad`)
    /// and the input (returned).
    pub fn vjp(
        &self,
        x: &[f64],
        upstream_y: &[f64],
        upstream_logdet: f64,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            inputs.push(cur.clone());
            cur = layer.forward(&cur)?;
        }
        let mut up = upstream_y.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (_, off, len) = &self.layout[i];
            up = layer.vjp(
                &inputs[i],
                &up,
                upstream_logdet,
                &mut grad[*off..*off + *len],
            );
        }
        Ok(up)
    }
}

impl Diffeomorphism<f64> for FlowModel {
    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn forward_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        check_finite(&cur, "flow forward")?;
        Ok(cur)
    }

    fn inverse_slice(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut cur = y.to_vec();
        for layer in self.layers.iter().rev() {
            cur = layer.inverse(&cur)?;
        }
        check_finite(&cur, "flow inverse")?;
        Ok(cur)
    }

    fn jvp_slice(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        let mut dcur = v.to_vec();
        for layer in &self.layers {
            dcur = layer.jvp(&cur, &dcur)?;
            cur = layer.forward(&cur)?;
        }
        check_finite(&dcur, "flow jvp")?;
        Ok(dcur)
    }

    fn inverse_jvp_slice(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let mut cur = y.to_vec();
        let mut dcur = w.to_vec();
        for layer in self.layers.iter().rev() {
            dcur = layer.inverse_jvp(&cur, &dcur)?;
            cur = layer.inverse(&cur)?;
        }
        check_finite(&dcur, "flow inverse jvp")?;
        Ok(dcur)
    }

    fn log_abs_det_slice(&self, _x: &[f64]) -> Result<f64> {
        // the determinant is constant: only actnorm scales contribute
        Ok(self.layers.iter().map(|l| l.log_abs_det()).sum())
    }
}
