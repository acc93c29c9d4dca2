//! Closed-form pullback Riemannian mappings on `(R^d, (., .)^phi)`.
//!
//! Under a Euclidean pullback structure the geodesic between `x` and `y` is
//! the preimage of the latent straight line, and exp/log/distance/parallel
//! transport all reduce to latent-space identities.

use crate::diffeo::Diffeomorphism;
use crate::error::Result;
use crate::linalg;
use crate::scalar::Real;

/// `gamma_{x,y}(t) = phi^{-1}((1 - t) phi(x) + t phi(y))`.
///
/// `t` outside `[0, 1]` extends the geodesic as long as the latent point stays
/// in the image of `phi`; the iso-exponential stepping relies on `gamma(2)`.
pub fn geodesic<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    t: S,
) -> Result<Vec<S>> {
    let zx = d.forward_slice(x)?;
    let zy = d.forward_slice(y)?;
    let z: Vec<S> = zx
        .iter()
        .zip(&zy)
        .map(|(&a, &b)| (S::one() - t) * a + t * b)
        .collect();
    d.inverse_slice(&z)
}

/// `exp_x(v) = phi^{-1}(phi(x) + D_x phi[v])`.
pub fn exp<S: Real, D: Diffeomorphism<S> + ?Sized>(d: &D, x: &[S], v: &[S]) -> Result<Vec<S>> {
    let zx = d.forward_slice(x)?;
    let dv = d.jvp_slice(x, v)?;
    d.inverse_slice(&linalg::add(&zx, &dv))
}

/// `log_x(y) = D_{phi(x)} phi^{-1}[phi(y) - phi(x)]`.
pub fn log<S: Real, D: Diffeomorphism<S> + ?Sized>(d: &D, x: &[S], y: &[S]) -> Result<Vec<S>> {
    let zx = d.forward_slice(x)?;
    let zy = d.forward_slice(y)?;
    d.inverse_jvp_slice(&zx, &linalg::sub(&zy, &zx))
}

/// Geodesic distance `d^phi(x, y) = ||phi(x) - phi(y)||_2`.
pub fn distance<S: Real, D: Diffeomorphism<S> + ?Sized>(d: &D, x: &[S], y: &[S]) -> Result<S> {
    let zx = d.forward_slice(x)?;
    let zy = d.forward_slice(y)?;
    Ok(linalg::dist(&zx, &zy))
}

/// Parallel transport along the geodesic from `x` to `y`:
/// `P_{y<-x}(v) = D_{phi(y)} phi^{-1}[D_x phi[v]]`.
pub fn parallel_transport<S: Real, D: Diffeomorphism<S> + ?Sized>(
    d: &D,
    x: &[S],
    y: &[S],
    v: &[S],
) -> Result<Vec<S>> {
    let dv = d.jvp_slice(x, v)?;
    let zy = d.forward_slice(y)?;
    d.inverse_jvp_slice(&zy, &dv)
}

/// Riemannian barycentre `phi^{-1}((1/l) sum_i phi(x^i))`, the minimizer of
/// the summed squared geodesic distances.
pub fn barycentre<S: Real, D: Diffeomorphism<S> + ?Sized>(d: &D, points: &[Vec<S>]) -> Result<Vec<S>> {
    assert!(!points.is_empty(), "barycentre of an empty set");
    let dim = points[0].len();
    let mut acc = vec![S::zero(); dim];
    for p in points {
        let z = d.forward_slice(p)?;
        linalg::axpy(S::one(), &z, &mut acc);
    }
    let inv_l = S::one() / S::from_usize(points.len()).unwrap();
    let mean: Vec<S> = acc.into_iter().map(|v| v * inv_l).collect();
    d.inverse_slice(&mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{Identity, ModeledDoubleGaussian, QuadraticShear};
    use crate::linalg::{dist, norm};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_geodesic_is_straight_line() {
        let id = Identity { dim: 2 };
        let g = geodesic(&id, &[0.0, 0.0], &[2.0, 0.0], 0.5).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
    }

    #[test]
    fn quadratic_geodesic_midpoint() {
        let q = QuadraticShear;
        // phi(-1,1) = (-1,2), phi(1,1) = (1,2); latent midpoint (0,2)
        let g = geodesic(&q, &[-1.0, 1.0], &[1.0, 1.0], 0.5).unwrap();
        assert!(dist(&g, &[0.0, 2.0]) < 1e-12);
    }

    #[test]
    fn geodesic_endpoints() {
        let m = ModeledDoubleGaussian;
        let (x, y) = ([0.3, -0.2], [1.0, 0.5]);
        assert!(dist(&geodesic(&m, &x, &y, 0.0).unwrap(), &x) < 1e-8);
        assert!(dist(&geodesic(&m, &x, &y, 1.0).unwrap(), &y) < 1e-8);
    }

    #[test]
    fn exp_log_examples() {
        let id = Identity { dim: 2 };
        assert_eq!(exp(&id, &[1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![2.0, 1.0]);
        assert_eq!(log(&id, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let q = QuadraticShear;
        assert!(dist(&exp(&q, &[0.0, 0.0], &[1.0, 2.0]).unwrap(), &[1.0, 1.0]) < 1e-12);
        assert!(dist(&log(&q, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), &[1.0, 2.0]) < 1e-12);
        // v = 0 -> x, x = y -> 0
        assert!(dist(&exp(&q, &[0.4, 0.2], &[0.0, 0.0]).unwrap(), &[0.4, 0.2]) < 1e-12);
        assert!(norm(&log(&q, &[0.4, 0.2], &[0.4, 0.2]).unwrap()) < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let id = Identity { dim: 2 };
        let d: f64 = distance(&id, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        let a = crate::diffeo::AffineLinear::scaling(2, 2.0).unwrap();
        let d: f64 = distance(&a, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        let q = QuadraticShear;
        let d: f64 = distance(&q, &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_transport_examples() {
        let id = Identity { dim: 2 };
        assert_eq!(
            parallel_transport(&id, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            vec![1.0, 0.0]
        );
        let q = QuadraticShear;
        let pt = parallel_transport(&q, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(dist(&pt, &[1.0, -2.0]) < 1e-12);
        // round trip
        let back = parallel_transport(&q, &[1.0, 1.0], &[0.0, 0.0], &pt).unwrap();
        assert!(dist(&back, &[1.0, 0.0]) < 1e-10);
    }

    #[test]
    fn barycentre_examples() {
        let id = Identity { dim: 2 };
        let b = barycentre(&id, &[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert!(dist(&b, &[1.0, 1.0]) < 1e-12);
        let q = QuadraticShear;
        let b = barycentre(&q, &[vec![-1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(dist(&b, &[0.0, 2.0]) < 1e-12);
        let single = barycentre(&q, &[vec![0.7, -0.3]]).unwrap();
        assert!(dist(&single, &[0.7, -0.3]) < 1e-12);
    }

    #[test]
    fn affine_latent_parametrization() {
        let m = ModeledDoubleGaussian;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, y) = ([-1.0, 0.2], [1.2, -0.4]);
        let total = distance(&m, &x, &y).unwrap();
        for _ in 0..50 {
            let s: f64 = rng.gen();
            let t: f64 = rng.gen();
            let gs = geodesic(&m, &x, &y, s).unwrap();
            let gt = geodesic(&m, &x, &y, t).unwrap();
            let d = distance(&m, &gs, &gt).unwrap();
            assert!((d - (t - s).abs() * total).abs() < 1e-8);
        }
    }

    #[test]
    fn exp_log_inversion_in_strip() {
        let m = ModeledDoubleGaussian;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let v = log(&m, &x, &y).unwrap();
            let back = exp(&m, &x, &v).unwrap();
            assert!(dist(&back, &y) < 1e-6);
        }
    }

    #[test]
    fn distance_metric_axioms() {
        let m = ModeledDoubleGaussian;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let dxy = distance(&m, &x, &y).unwrap();
            let dyx = distance(&m, &y, &x).unwrap();
            let dxz = distance(&m, &x, &z).unwrap();
            let dzy = distance(&m, &z, &y).unwrap();
            assert!(dxy >= 0.0);
            assert_eq!(dxy, dyx);
            assert!(dxy <= dxz + dzy + 1e-10);
        }
    }
}
