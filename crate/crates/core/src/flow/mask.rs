//! Binary coupling masks: even-index parity for vectors, checkerboard over
//! height + width parity (shared across channels) for images.

/// Binary mask `m_J` together with its parity flag. Entries with mask 1 form
/// the index set `J` (left unchanged by the coupling and feeding its
/// network); entries with mask 0 receive the additive update.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    mask: Vec<f64>,
    parity: bool,
}

impl MaskSpec {
    /// Vector mask: `J = {j : j mod 2 = parity}`.
    pub fn vector(dim: usize, parity: bool) -> Self {
        let p = usize::from(parity);
        let mask = (0..dim).map(|j| f64::from(j % 2 == p)).collect();
        Self { mask, parity }
    }

    /// Image checkerboard: `J = {(c, i, j) : (i + j) mod 2 = parity}`,
    /// identical for every channel.
    pub fn image(channels: usize, height: usize, width: usize, parity: bool) -> Self {
        let p = usize::from(parity);
        let mut mask = Vec::with_capacity(channels * height * width);
        for _ in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    mask.push(f64::from((i + j) % 2 == p));
                }
            }
        }
        Self { mask, parity }
    }

    pub fn parity(&self) -> bool {
        self.parity
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// 0/1 entries of `m_J`.
    pub fn values(&self) -> &[f64] {
        &self.mask
    }

    /// Whether index `j` belongs to `J`.
    pub fn in_set(&self, j: usize) -> bool {
        self.mask[j] == 1.0
    }

    /// `m_J` applied elementwise.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mask).map(|(&v, &m)| v * m).collect()
    }

    /// Complement mask `1 - m_J` applied elementwise.
    pub fn apply_complement(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mask)
            .map(|(&v, &m)| v * (1.0 - m))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_mask_partitions_indices() {
        let a = MaskSpec::vector(5, false);
        let b = MaskSpec::vector(5, true);
        assert_eq!(a.values(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        for j in 0..5 {
            assert!(a.in_set(j) != b.in_set(j));
        }
    }

    #[test]
    fn image_checkerboard_shared_across_channels() {
        let m = MaskSpec::image(2, 2, 2, false);
        assert_eq!(m.values(), &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
