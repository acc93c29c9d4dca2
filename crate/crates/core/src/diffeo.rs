//! The diffeomorphism abstraction consumed by every geometric operation, plus
//! closed-form implementations: identity, affine-linear, the modeled
//! double-Gaussian map and a quadratic shear test fixture.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Image shape tag `(channels, height, width)` with `c * h * w = d`.
pub type ShapeTag = (usize, usize, usize);

/// Ambient point in `R^d`, optionally tagged with an image shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<S> {
    coords: Vec<S>,
    shape: Option<ShapeTag>,
}

impl<S: Real> Point<S> {
    pub fn new(coords: Vec<S>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "point" });
        }
        Ok(Self {
            coords,
            shape: None,
        })
    }

    pub fn with_shape(coords: Vec<S>, shape: ShapeTag) -> Result<Self> {
        let (c, h, w) = shape;
        if c * h * w != coords.len() {
            return Err(Error::Shape(format!(
                "shape tag {c}x{h}x{w} does not match dimension {}",
                coords.len()
            )));
        }
        let mut p = Self::new(coords)?;
        p.shape = Some(shape);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn shape(&self) -> Option<ShapeTag> {
        self.shape
    }

    /// Rebuild a point with the same shape tag from raw coordinates.
    pub fn like(&self, coords: Vec<S>) -> Result<Self> {
        match self.shape {
            Some(s) => Self::with_shape(coords, s),
            None => Self::new(coords),
        }
    }
}

/// Tangent vector at a base point; components live in `R^d` like the base.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<S> {
    base: Point<S>,
    components: Vec<S>,
}

impl<S: Real> TangentVector<S> {
    pub fn new(base: Point<S>, components: Vec<S>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(Error::Shape(format!(
                "tangent dimension {} != base dimension {}",
                components.len(),
                base.dim()
            )));
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "tangent vector" });
        }
        Ok(Self { base, components })
    }

    pub fn base(&self) -> &Point<S> {
        &self.base
    }

    pub fn components(&self) -> &[S] {
        &self.components
    }
}

/// Evaluable invertible map with differential, inverse differential and
/// log-abs-det queries.
///
/// The slice-level methods are the implementation surface; the typed wrappers
/// validate shapes and propagate shape tags. `inverse(forward(x)) = x` must
/// hold to numerical tolerance on the declared domain, and `jvp` must be the
/// exact Jacobian-vector product of `forward`.
pub trait Diffeomorphism<S: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn forward_slice(&self, x: &[S]) -> Result<Vec<S>>;
    fn inverse_slice(&self, y: &[S]) -> Result<Vec<S>>;
    fn jvp_slice(&self, x: &[S], v: &[S]) -> Result<Vec<S>>;
    fn inverse_jvp_slice(&self, y: &[S], w: &[S]) -> Result<Vec<S>>;
    fn log_abs_det_slice(&self, x: &[S]) -> Result<S>;

    fn forward(&self, x: &Point<S>) -> Result<Point<S>> {
        self.check_dim(x)?;
        x.like(self.forward_slice(x.coords())?)
    }

    fn inverse(&self, y: &Point<S>) -> Result<Point<S>> {
        self.check_dim(y)?;
        y.like(self.inverse_slice(y.coords())?)
    }

    fn jvp(&self, x: &Point<S>, v: &TangentVector<S>) -> Result<TangentVector<S>> {
        self.check_dim(x)?;
        let out = self.jvp_slice(x.coords(), v.components())?;
        TangentVector::new(self.forward(x)?, out)
    }

    fn inverse_jvp(&self, y: &Point<S>, w: &TangentVector<S>) -> Result<TangentVector<S>> {
        self.check_dim(y)?;
        let out = self.inverse_jvp_slice(y.coords(), w.components())?;
        TangentVector::new(self.inverse(y)?, out)
    }

    fn log_abs_det(&self, x: &Point<S>) -> Result<S> {
        self.check_dim(x)?;
        self.log_abs_det_slice(x.coords())
    }

    fn check_dim(&self, p: &Point<S>) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "point dimension {} != diffeomorphism dimension {}",
                p.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// The identity map on `R^d`.
#[derive(Debug, Clone)]
pub struct Identity {
    pub dim: usize,
}

impl<S: Real> Diffeomorphism<S> for Identity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward_slice(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(x.to_vec())
    }

    fn inverse_slice(&self, y: &[S]) -> Result<Vec<S>> {
        Ok(y.to_vec())
    }

    fn jvp_slice(&self, _x: &[S], v: &[S]) -> Result<Vec<S>> {
        Ok(v.to_vec())
    }

    fn inverse_jvp_slice(&self, _y: &[S], w: &[S]) -> Result<Vec<S>> {
        Ok(w.to_vec())
    }

    fn log_abs_det_slice(&self, _x: &[S]) -> Result<S> {
        Ok(S::zero())
    }
}

/// Invertible affine-linear map `x -> A x + b` (test fixture).
#[derive(Debug, Clone)]
pub struct AffineLinear<S> {
    matrix: Matrix<S>,
    inverse: Matrix<S>,
    bias: Vec<S>,
    log_abs_det: S,
}

impl<S: Real> AffineLinear<S> {
    pub fn new(matrix: Matrix<S>, bias: Vec<S>) -> Result<Self> {
        let d = matrix.rows();
        if matrix.cols() != d || bias.len() != d {
            return Err(Error::Shape("affine map must be square".into()));
        }
        let (inverse, log_abs_det) = invert(&matrix)?;
        Ok(Self {
            matrix,
            inverse,
            bias,
            log_abs_det,
        })
    }

    /// `x -> s * x` in dimension `d`.
    pub fn scaling(d: usize, s: S) -> Result<Self> {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, s);
        }
        Self::new(m, vec![S::zero(); d])
    }
}

/// Invert a small dense matrix by Gauss-Jordan with partial pivoting; also
/// returns `log |det|`.
fn invert<S: Real>(m: &Matrix<S>) -> Result<(Matrix<S>, S)> {
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    let mut log_det = S::zero();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a.get(r, col).abs() > a.get(piv, col).abs() {
                piv = r;
            }
        }
        let pval = a.get(piv, col);
        if pval.abs() < S::epsilon() {
            return Err(Error::Config("singular linear map".into()));
        }
        if piv != col {
            for c in 0..n {
                let (x, y) = (a.get(col, c), a.get(piv, c));
                a.set(col, c, y);
                a.set(piv, c, x);
                let (x, y) = (inv.get(col, c), inv.get(piv, c));
                inv.set(col, c, y);
                inv.set(piv, c, x);
            }
        }
        log_det = log_det + pval.abs().ln();
        for c in 0..n {
            a.set(col, c, a.get(col, c) / pval);
            inv.set(col, c, inv.get(col, c) / pval);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.get(r, col);
            if f == S::zero() {
                continue;
            }
            for c in 0..n {
                a.set(r, c, a.get(r, c) - f * a.get(col, c));
                inv.set(r, c, inv.get(r, c) - f * inv.get(col, c));
            }
        }
    }
    Ok((inv, log_det))
}

fn matvec<S: Real>(m: &Matrix<S>, x: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); m.rows()];
    for c in 0..m.cols() {
        crate::linalg::axpy(x[c], m.column(c), &mut out);
    }
    out
}

impl<S: Real> Diffeomorphism<S> for AffineLinear<S> {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn forward_slice(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(crate::linalg::add(&matvec(&self.matrix, x), &self.bias))
    }

    fn inverse_slice(&self, y: &[S]) -> Result<Vec<S>> {
        Ok(matvec(&self.inverse, &crate::linalg::sub(y, &self.bias)))
    }

    fn jvp_slice(&self, _x: &[S], v: &[S]) -> Result<Vec<S>> {
        Ok(matvec(&self.matrix, v))
    }

    fn inverse_jvp_slice(&self, _y: &[S], w: &[S]) -> Result<Vec<S>> {
        Ok(matvec(&self.inverse, w))
    }

    fn log_abs_det_slice(&self, _x: &[S]) -> Result<S> {
        Ok(self.log_abs_det)
    }
}

/// Closed-form modeled diffeomorphism on `R^2` for the double-Gaussian setup:
/// a 45-degree rotation followed by `(y1, y2) -> (y1 - h(y2), tanh(y2 / 2))`
/// with a piecewise quadratic/absolute-value `h`. Its image is the strip
/// `R x (-1, 1)`; inverting outside the strip is an out-of-image error.
#[derive(Debug, Clone, Default)]
pub struct ModeledDoubleGaussian;

impl ModeledDoubleGaussian {
    fn h<S: Real>(x: S) -> S {
        if x.abs() <= S::one() {
            S::c(0.5) * x * x + S::c(0.5)
        } else {
            x.abs()
        }
    }

    fn h_prime<S: Real>(x: S) -> S {
        if x.abs() <= S::one() {
            x
        } else {
            x.signum()
        }
    }

    fn rotate<S: Real>(x: &[S]) -> (S, S) {
        let c = S::c(std::f64::consts::FRAC_1_SQRT_2);
        (c * x[0] - c * x[1], c * x[0] + c * x[1])
    }

    fn rotate_back<S: Real>(y1: S, y2: S) -> Vec<S> {
        let c = S::c(std::f64::consts::FRAC_1_SQRT_2);
        vec![c * y1 + c * y2, -c * y1 + c * y2]
    }
}

impl<S: Real> Diffeomorphism<S> for ModeledDoubleGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn forward_slice(&self, x: &[S]) -> Result<Vec<S>> {
        let (y1, y2) = Self::rotate(x);
        Ok(vec![y1 - Self::h(y2), (y2 * S::c(0.5)).tanh()])
    }

    fn inverse_slice(&self, z: &[S]) -> Result<Vec<S>> {
        if z[1].abs() >= S::one() {
            return Err(Error::OutOfImage {
                context: "modeled double-Gaussian map: |y2| >= 1",
            });
        }
        let y2 = S::c(2.0) * z[1].atanh();
        let y1 = z[0] + Self::h(y2);
        Ok(Self::rotate_back(y1, y2))
    }

    fn jvp_slice(&self, x: &[S], v: &[S]) -> Result<Vec<S>> {
        let (_, y2) = Self::rotate(x);
        let (w1, w2) = Self::rotate(v);
        let half = S::c(0.5);
        let sech2 = {
            let c = (y2 * half).cosh();
            S::one() / (c * c)
        };
        Ok(vec![w1 - Self::h_prime(y2) * w2, half * sech2 * w2])
    }

    fn inverse_jvp_slice(&self, z: &[S], w: &[S]) -> Result<Vec<S>> {
        if z[1].abs() >= S::one() {
            return Err(Error::OutOfImage {
                context: "modeled double-Gaussian map: |y2| >= 1",
            });
        }
        let y2 = S::c(2.0) * z[1].atanh();
        let half = S::c(0.5);
        let sech2 = {
            let c = (y2 * half).cosh();
            S::one() / (c * c)
        };
        let dy2 = w[1] / (half * sech2);
        let dy1 = w[0] + Self::h_prime(y2) * dy2;
        Ok(Self::rotate_back(dy1, dy2))
    }

    fn log_abs_det_slice(&self, x: &[S]) -> Result<S> {
        // rotation contributes det 1; psi contributes (1/2) sech^2(y2 / 2)
        let (_, y2) = Self::rotate(x);
        Ok(-S::c(std::f64::consts::LN_2) - S::c(2.0) * (y2 * S::c(0.5)).cosh().ln())
    }
}

/// Quadratic shear `(x1, x2) -> (x1, x2 + x1^2)` on `R^2`, a volume-preserving
/// test fixture with analytic inverse and Jacobians.
#[derive(Debug, Clone, Default)]
pub struct QuadraticShear;

impl<S: Real> Diffeomorphism<S> for QuadraticShear {
    fn dim(&self) -> usize {
        2
    }

    fn forward_slice(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(vec![x[0], x[1] + x[0] * x[0]])
    }

    fn inverse_slice(&self, y: &[S]) -> Result<Vec<S>> {
        Ok(vec![y[0], y[1] - y[0] * y[0]])
    }

    fn jvp_slice(&self, x: &[S], v: &[S]) -> Result<Vec<S>> {
        Ok(vec![v[0], v[1] + S::c(2.0) * x[0] * v[0]])
    }

    fn inverse_jvp_slice(&self, y: &[S], w: &[S]) -> Result<Vec<S>> {
        Ok(vec![w[0], w[1] - S::c(2.0) * y[0] * w[0]])
    }

    fn log_abs_det_slice(&self, _x: &[S]) -> Result<S> {
        Ok(S::zero())
    }
}
