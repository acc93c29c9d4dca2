//! Isometrized manifold mappings: geodesics reparametrized to constant
//! `l2`-speed, with the rescaled log/exp/distance/parallel-transport maps they
//! induce and the rho-transforms relating plain and isometrized low-rank
//! objectives.
//!
//! Geodesics are discretized as `M + 1` uniformly parametrized samples; the
//! time change is the closed-form piecewise-linear inverse of the normalized
//! cumulative arc length, and the iso-exponential follows the doubling
//! stepping scheme `chi^k = gamma_{chi^{k-2}, chi^{k-1}}(2)` until the target
//! arc length is reached.

use crate::diffeo::Diffeomorphism;
use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;
use crate::scalar::Real;

/// Default geodesic discretization resolution.
pub const DEFAULT_RESOLUTION: usize = 100;

/// Multiplier on `M` bounding the number of iso-exponential steps.
pub const STEP_CAP_FACTOR: usize = 100;

/// A geodesic sampled at `M + 1` uniform parameter values with cumulative
/// `l2` arc lengths `S_k`.
#[derive(Debug, Clone)]
pub struct DiscreteGeodesic<S> {
    points: Vec<Vec<S>>,
    cum: Vec<S>,
    latent_from: Vec<S>,
    latent_to: Vec<S>,
}

impl<S: Real> DiscreteGeodesic<S> {
    /// Number of segments `M`.
    pub fn resolution(&self) -> usize {
        self.points.len() - 1
    }

    /// Samples `gamma(k / M)` for `k = 0..=M`.
    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    /// Cumulative arc lengths `S_0 = 0 <= S_1 <= ... <= S_M`.
    pub fn cumulative_lengths(&self) -> &[S] {
        &self.cum
    }

    /// Total discrete arc length `S_M`.
    pub fn total_length(&self) -> S {
        *self.cum.last().unwrap()
    }

    /// Evaluate the underlying (non-reparametrized) geodesic at parameter `t`.
    pub fn eval<D: Diffeomorphism<S> + ?Sized>(&self, d: &D, t: S) -> Result<Vec<S>> {
        let z: Vec<S> = self
            .latent_from
            .iter()
            .zip(&self.latent_to)
            .map(|(&a, &b)| (S::one() - t) * a + t * b)
            .collect();
        d.inverse_slice(&z)
    }

    /// The discrete time change `tau^M(t)`:
    /// `K_t / M + (1/M) (t S_M - S_{K_t}) / (S_{K_t + 1} - S_{K_t})` with
    /// `K_t = max{k : S_k <= t S_M}` clamped to `M - 1`. Monotone with
    /// `tau(0) = 0` and `tau(1) = 1`; degenerate (zero-length) geodesics map
    /// `t` to itself.
    pub fn time_change(&self, t: S) -> S {
        let total = self.total_length();
        if total == S::zero() {
            return t;
        }
        let m = self.resolution();
        let target = t * total;
        // binary search for K_t = max{k : S_k <= target}
        let mut lo = 0usize;
        let mut hi = m; // search over 0..=m
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.cum[mid] <= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let k = lo.min(m - 1);
        let seg = self.cum[k + 1] - self.cum[k];
        let m_s = S::from_usize(m).unwrap();
        let frac = if seg > S::zero() {
            (target - self.cum[k]) / seg
        } else {
            S::zero()
        };
        (S::from_usize(k).unwrap() + frac) / m_s
    }
}

/// Sample the pullback geodesic from `x` to `y` at `M + 1` uniform parameters
/// and accumulate segment lengths.
pub fn discretize_geodesic<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    resolution: usize,
) -> Result<DiscreteGeodesic<S>> {
    assert!(resolution >= 1, "resolution must be at least 1");
    let latent_from = d.forward_slice(x)?;
    let latent_to = d.forward_slice(y)?;
    if latent_from == latent_to {
        // degenerate geodesic: constant, zero length
        let p = d.inverse_slice(&latent_from)?;
        return Ok(DiscreteGeodesic {
            points: vec![p; resolution + 1],
            cum: vec![S::zero(); resolution + 1],
            latent_from,
            latent_to,
        });
    }
    let m = S::from_usize(resolution).unwrap();
    let mut points = Vec::with_capacity(resolution + 1);
    let mut cum = Vec::with_capacity(resolution + 1);
    cum.push(S::zero());
    for k in 0..=resolution {
        let t = S::from_usize(k).unwrap() / m;
        let z: Vec<S> = latent_from
            .iter()
            .zip(&latent_to)
            .map(|(&a, &b)| (S::one() - t) * a + t * b)
            .collect();
        let p = d.inverse_slice(&z)?;
        if k > 0 {
            let prev: &Vec<S> = points.last().unwrap();
            let s = *cum.last().unwrap() + linalg::dist(prev, &p);
            cum.push(s);
        }
        points.push(p);
    }
    Ok(DiscreteGeodesic {
        points,
        cum,
        latent_from,
        latent_to,
    })
}

/// Iso-geodesic `gamma^iso_{x,y}(t) = gamma_{x,y}(tau^M(t))`.
pub fn iso_geodesic<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    t: S,
    resolution: usize,
) -> Result<Vec<S>> {
    let g = discretize_geodesic(d, x, y, resolution)?;
    g.eval(d, g.time_change(t))
}

/// Iso-logarithm: `log_x(y)` rescaled so its `l2`-norm equals the discrete
/// arc length `S_M` of the geodesic; zero when `x = y`.
pub fn iso_log<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    resolution: usize,
) -> Result<Vec<S>> {
    let lg = geometry::log(d, x, y)?;
    let n = linalg::norm(&lg);
    if n == S::zero() {
        return Ok(lg);
    }
    let g = discretize_geodesic(d, x, y, resolution)?;
    Ok(linalg::scale(g.total_length() / n, &lg))
}

/// Iso-distance: the discrete `l2` arc length of the geodesic from `x` to
/// `y`. Not asserted to be symmetric or to satisfy the triangle inequality.
pub fn iso_distance<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    resolution: usize,
) -> Result<S> {
    let lg = geometry::log(d, x, y)?;
    if linalg::norm(&lg) == S::zero() {
        return Ok(S::zero());
    }
    Ok(discretize_geodesic(d, x, y, resolution)?.total_length())
}

/// Record of an iso-exponential stepping run.
#[derive(Debug, Clone)]
pub struct IsoExpTrace<S> {
    /// Step points `chi^0 .. chi^K`.
    pub points: Vec<Vec<S>>,
    /// Per-step `l2` lengths `||chi^k - chi^{k-1}||`.
    pub segment_lengths: Vec<S>,
    /// Stopping index `K` (0 when the input vector is zero).
    pub stop_index: usize,
    /// Interpolation fraction inside the final segment, in `(0, 1]`.
    pub fraction: S,
    /// Achieved geodesic parameter per unit input vector: the scalar
    /// `zeta_v` with `exp_x^iso(v) = exp_x(zeta_v v)`.
    pub zeta: S,
}

/// Iso-exponential: walk `chi^0 = x`, `chi^1 = exp_x(v / M)`,
/// `chi^k = gamma_{chi^{k-2}, chi^{k-1}}(2)` until the cumulative `l2` length
/// reaches `||v||_2`, then place the result at arc length `||v||_2` inside the
/// final segment.
pub fn iso_exp<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    v: &[S],
    resolution: usize,
) -> Result<(Vec<S>, IsoExpTrace<S>)> {
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { context: "iso_exp" });
    }
    let target = linalg::norm(v);
    if target == S::zero() {
        return Ok((
            x.to_vec(),
            IsoExpTrace {
                points: vec![x.to_vec()],
                segment_lengths: vec![],
                stop_index: 0,
                fraction: S::one(),
                zeta: S::zero(),
            },
        ));
    }

    let m = S::from_usize(resolution).unwrap();
    let step = linalg::scale(S::one() / m, v);
    // Latent points advance by a constant increment, so each chi^k needs one
    // inverse evaluation only.
    let z0 = d.forward_slice(x)?;
    let dz = d.jvp_slice(x, &step)?;
    let cap = STEP_CAP_FACTOR * resolution;

    let mut points = vec![x.to_vec()];
    let mut lengths: Vec<S> = Vec::new();
    let mut achieved = S::zero();
    let mut z = z0;
    let mut k = 0usize;
    while achieved < target {
        if k >= cap {
            return Err(Error::StepCap { cap });
        }
        k += 1;
        z = linalg::add(&z, &dz);
        let next = match d.inverse_slice(&z) {
            Ok(p) => p,
            Err(Error::OutOfImage { .. }) => {
                return Err(Error::IncompleteGeodesic {
                    steps: k - 1,
                    achieved: achieved.to_f64_lossy(),
                    target: target.to_f64_lossy(),
                    last_point: points
                        .last()
                        .unwrap()
                        .iter()
                        .map(|c| c.to_f64_lossy())
                        .collect(),
                })
            }
            Err(e) => return Err(e),
        };
        let seg = linalg::dist(points.last().unwrap(), &next);
        achieved = achieved + seg;
        lengths.push(seg);
        points.push(next);
    }

    let stop_index = k;
    let seg = lengths[stop_index - 1];
    let excess = target - (achieved - seg);
    let fraction = if seg > S::zero() { excess / seg } else { S::one() };
    let prev = &points[stop_index - 1];
    let last = &points[stop_index];
    let result: Vec<S> = prev
        .iter()
        .zip(last)
        .map(|(&a, &b)| a + fraction * (b - a))
        .collect();
    let zeta = (S::from_usize(stop_index - 1).unwrap() + fraction) / m;
    Ok((
        result,
        IsoExpTrace {
            points,
            segment_lengths: lengths,
            stop_index,
            fraction,
            zeta,
        },
    ))
}

/// Iso-parallel transport `(||log_x y|| / ||log_y x||) P_{y<-x}(v)`;
/// the identity transport when `x = y`.
pub fn iso_parallel_transport<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    v: &[S],
) -> Result<Vec<S>> {
    let fwd = geometry::log(d, x, y)?;
    let bwd = geometry::log(d, y, x)?;
    let (nf, nb) = (linalg::norm(&fwd), linalg::norm(&bwd));
    if nf == S::zero() || nb == S::zero() {
        return Ok(v.to_vec());
    }
    let pt = geometry::parallel_transport(d, x, y, v)?;
    Ok(linalg::scale(nf / nb, &pt))
}

/// Identity rho-transform.
pub fn rho_id<S: Real>(w: &[S]) -> Vec<S> {
    w.to_vec()
}

/// Inverse of the identity rho-transform.
pub fn rho_id_inverse<S: Real>(w: &[S]) -> Vec<S> {
    w.to_vec()
}

/// `rho^iso_p(w) = log_p(exp^iso_p(w)) = zeta_w w`.
pub fn rho_iso<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    p: &[S],
    w: &[S],
    resolution: usize,
) -> Result<Vec<S>> {
    let (point, _) = iso_exp(d, p, w, resolution)?;
    geometry::log(d, p, &point)
}

/// `(rho^iso_p)^{-1}(w) = log^iso_p(exp_p(w)) = (L(w) / ||w||) w` with `L(w)`
/// the arc length of `t -> exp_p(t w)`.
pub fn rho_iso_inverse<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    p: &[S],
    w: &[S],
    resolution: usize,
) -> Result<Vec<S>> {
    let target = geometry::exp(d, p, w)?;
    iso_log(d, p, &target, resolution)
}
