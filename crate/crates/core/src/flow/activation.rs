//! Learnable tanh-polynomial activations `sigma(x) = sum_k a_k tanh(x)^k`.
//!
//! Each activation site (a vector entry, a hidden node, or an image channel)
//! carries its own coefficient vector of length `N`.

/// Coefficients for a bank of activation sites: `sites x order`, row-major
/// per site.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBank {
    pub order: usize,
    pub coeffs: Vec<f64>,
}

impl ActivationBank {
    pub fn new(sites: usize, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), sites * order);
        Self { order, coeffs }
    }

    /// All sites start as plain tanh: `a_1 = 1`, higher coefficients zero.
    pub fn tanh_init(sites: usize, order: usize) -> Self {
        let mut coeffs = vec![0.0; sites * order];
        for s in 0..sites {
            coeffs[s * order] = 1.0;
        }
        Self { order, coeffs }
    }

    pub fn sites(&self) -> usize {
        self.coeffs.len() / self.order
    }

    fn site(&self, s: usize) -> &[f64] {
        &self.coeffs[s * self.order..(s + 1) * self.order]
    }

    /// `sigma_s(x)`.
    pub fn value(&self, s: usize, x: f64) -> f64 {
        let t = x.tanh();
        let mut pow = 1.0;
        let mut acc = 0.0;
        for &a in self.site(s) {
            pow *= t;
            acc += a * pow;
        }
        acc
    }

    /// `sigma_s'(x) = sech^2(x) sum_k k a_k tanh(x)^{k-1}`.
    pub fn derivative(&self, s: usize, x: f64) -> f64 {
        let t = x.tanh();
        let sech2 = 1.0 - t * t;
        let mut pow = 1.0; // tanh^{k-1}
        let mut acc = 0.0;
        for (k, &a) in self.site(s).iter().enumerate() {
            acc += (k + 1) as f64 * a * pow;
            pow *= t;
        }
        sech2 * acc
    }

    /// Accumulate `upstream * d sigma_s / d a_k` into the coefficient
    /// gradient slice for site `s`.
    pub fn accumulate_coeff_grad(&self, s: usize, x: f64, upstream: f64, grad: &mut [f64]) {
        let t = x.tanh();
        let mut pow = 1.0;
        let site_grad = &mut grad[s * self.order..(s + 1) * self.order];
        for g in site_grad.iter_mut() {
            pow *= t;
            *g += upstream * pow;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_cases() {
        let b = ActivationBank::tanh_init(1, 1);
        assert_eq!(b.value(0, 0.0), 0.0);
        assert!((b.value(0, 50.0) - 1.0).abs() < 1e-12); // saturation
    }

    #[test]
    fn squared_tanh() {
        let b = ActivationBank::new(1, 2, vec![0.0, 1.0]);
        let expect = 1.0f64.tanh().powi(2);
        assert!((b.value(0, 1.0) - expect).abs() < 1e-12);
        assert!((expect - 0.580026).abs() < 1e-6);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let b = ActivationBank::new(1, 3, vec![0.7, -0.3, 0.2]);
        let h = 1e-6;
        for &x in &[-1.2, 0.0, 0.4, 2.5] {
            let fd = (b.value(0, x + h) - b.value(0, x - h)) / (2.0 * h);
            assert!((b.derivative(0, x) - fd).abs() < 1e-8);
        }
    }
}
