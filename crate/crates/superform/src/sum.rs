//! Deterministic pairwise-tree reduction.
//!
//! All global sums in this crate (quadratures, inner products, norms) go
//! through [`pairwise_sum`], so a report produced from the same inputs is
//! bit-identical across runs regardless of how work is chunked.

/// Sum with a fixed binary-tree association order (split at the midpoint,
/// short runs added left to right).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_sequential_on_small_inputs() {
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(pairwise_sum(&xs), 6.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn association_is_stable() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 2654435761u64 as usize) % 997) as f64 / 997.0)
            .collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn keeps_small_mass_on_adversarial_input() {
        // 1 followed by many tiny values: pairwise keeps the tiny mass.
        let mut xs = vec![1.0f64];
        xs.extend(std::iter::repeat(1e-16).take(1 << 16));
        let exact = 1.0 + 1e-16 * (1 << 16) as f64;
        let pw = pairwise_sum(&xs);
        assert!((pw - exact).abs() <= 1e-15 * exact);
    }
}
