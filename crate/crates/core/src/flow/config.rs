//! Flow architecture configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_true() -> bool {
    true
}

/// Coupling network for vector data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VectorCouplingSpec {
    /// Fixed 1D convolution with filter `[1, 0, 1]` (zero padding) followed by
    /// a learnable tanh-polynomial activation per entry; the activation
    /// coefficients are the learnables.
    FixedFilter { activation_order: usize },
    /// Feed-forward network with tanh-polynomial activations per hidden node.
    FeedForward {
        hidden_widths: Vec<usize>,
        activation_order: usize,
    },
}

impl VectorCouplingSpec {
    pub fn activation_order(&self) -> usize {
        match self {
            Self::FixedFilter { activation_order } => *activation_order,
            Self::FeedForward {
                activation_order, ..
            } => *activation_order,
        }
    }
}

/// Architecture of a constant-determinant flow.
///
/// Each of the `blocks` composes an invertible linear map (actnorm followed by
/// Householder reflections for vectors, or by two masked invertible
/// convolutions for images) with an additive coupling whose mask parity
/// alternates per block.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowConfig {
    Vector {
        dim: usize,
        blocks: usize,
        coupling: VectorCouplingSpec,
        householder_reflections: usize,
        #[serde(default = "default_true")]
        actnorm_data_init: bool,
    },
    Image {
        channels: usize,
        height: usize,
        width: usize,
        blocks: usize,
        /// Hidden channel counts of the coupling network.
        coupling_channels: Vec<usize>,
        activation_order: usize,
        kernel_size: usize,
        #[serde(default = "default_true")]
        actnorm_data_init: bool,
    },
}

impl FlowConfig {
    /// Ambient dimension `d` (for images, `c * h * w`).
    pub fn dim(&self) -> usize {
        match self {
            Self::Vector { dim, .. } => *dim,
            Self::Image {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
        }
    }

    pub fn blocks(&self) -> usize {
        match self {
            Self::Vector { blocks, .. } | Self::Image { blocks, .. } => *blocks,
        }
    }

    pub fn actnorm_data_init(&self) -> bool {
        match self {
            Self::Vector {
                actnorm_data_init, ..
            }
            | Self::Image {
                actnorm_data_init, ..
            } => *actnorm_data_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match self {
            Self::Vector {
                dim,
                blocks,
                coupling,
                ..
            } => {
                if *dim < 2 {
                    return fail(format!("vector dimension must be >= 2, got {dim}"));
                }
                if *blocks == 0 {
                    return fail("number of blocks must be >= 1".into());
                }
                if coupling.activation_order() == 0 {
                    return fail("activation order must be >= 1".into());
                }
                if let VectorCouplingSpec::FeedForward { hidden_widths, .. } = coupling {
                    if hidden_widths.iter().any(|&w| w == 0) {
                        return fail("feed-forward widths must be positive".into());
                    }
                }
            }
            Self::Image {
                channels,
                height,
                width,
                blocks,
                activation_order,
                kernel_size,
                ..
            } => {
                if *channels == 0 || *height == 0 || *width == 0 {
                    return fail("image shape must be positive".into());
                }
                if *blocks == 0 {
                    return fail("number of blocks must be >= 1".into());
                }
                if *activation_order == 0 {
                    return fail("activation order must be >= 1".into());
                }
                if *kernel_size % 2 == 0 || *kernel_size == 0 {
                    return fail(format!(
                        "kernel size must be odd so padding preserves shape, got {kernel_size}"
                    ));
                }
            }
        }
        Ok(())
    }
}
