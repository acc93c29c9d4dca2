//! Resolution of the `--geometry` argument: built-in closed-form
//! diffeomorphisms or a trained flow checkpoint.

use std::path::Path;

use isoriem_core::diffeo::{Diffeomorphism, Identity, ModeledDoubleGaussian, QuadraticShear};
use isoriem_core::flow::{self, FlowConfig, FlowModel};
use isoriem_core::Error;

pub enum Geometry {
    Modeled(ModeledDoubleGaussian),
    Quadratic(QuadraticShear),
    Identity(Identity),
    Flow(FlowModel),
}

impl Geometry {
    pub fn as_diffeo(&self) -> &dyn Diffeomorphism<f64> {
        match self {
            Self::Modeled(d) => d,
            Self::Quadratic(d) => d,
            Self::Identity(d) => d,
            Self::Flow(d) => d,
        }
    }

    /// `(channels, height, width)` for image flows.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        match self {
            Self::Flow(m) => match m.config {
                FlowConfig::Image {
                    channels,
                    height,
                    width,
                    ..
                } => Some((channels, height, width)),
                FlowConfig::Vector { .. } => None,
            },
            _ => None,
        }
    }
}

/// Accepts "modeled", "quadratic", "identity:<d>", or a checkpoint path.
pub fn resolve_geometry(spec: &str) -> Result<Geometry, Error> {
    match spec {
        "modeled" => Ok(Geometry::Modeled(ModeledDoubleGaussian)),
        "quadratic" => Ok(Geometry::Quadratic(QuadraticShear)),
        other => {
            if let Some(dim) = other.strip_prefix("identity:") {
                let dim: usize = dim.parse().map_err(|_| {
                    Error::Config(format!("bad dimension in geometry '{other}'"))
                })?;
                if dim == 0 {
                    return Err(Error::Config("identity dimension must be >= 1".into()));
                }
                return Ok(Geometry::Identity(Identity { dim }));
            }
            let path = Path::new(other);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "geometry '{other}' is not a builtin (modeled, quadratic, identity:<d>) \
                     and no checkpoint exists at that path"
                )));
            }
            Ok(Geometry::Flow(flow::load(path)?))
        }
    }
}
