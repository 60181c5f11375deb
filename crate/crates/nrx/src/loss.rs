//! Multi-iteration binary cross-entropy on LLRs.
//!
//! A positive LLR favours bit 0, so the logistic probability `sigmoid(l)`
//! is matched against the target `1 - label`.

use crate::real::Real;

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Cross-entropy of one LLR against one bit label.
pub fn bce<T: Real>(llr: T, label: u8) -> T {
    let t = if label == 0 { T::one() } else { T::zero() };
    softplus(llr) - t * llr
}

fn check_shapes(n_llrs: usize, n_iters: usize, labels: &[u8], mask: &[u8]) -> usize {
    assert_eq!(labels.len(), mask.len(), "labels and mask differ in length");
    assert!(n_iters > 0, "need at least one iteration");
    assert_eq!(n_llrs, n_iters * labels.len(), "llrs must be [n_iters][labels]");
    mask.iter().filter(|&&m| m != 0).count()
}

/// Mean over iterations of the mean masked-bit cross-entropy.
/// `llrs` is `[n_iters][labels.len()]`.
pub fn multi_loss<T: Real>(llrs: &[T], n_iters: usize, labels: &[u8], mask: &[u8]) -> T {
    let n_bits = check_shapes(llrs.len(), n_iters, labels, mask);
    if n_bits == 0 {
        return T::zero();
    }
    let mut total = T::zero();
    for it in llrs.chunks_exact(labels.len()) {
        for ((&l, &y), &m) in it.iter().zip(labels).zip(mask) {
            if m != 0 {
                total = total + bce(l, y);
            }
        }
    }
    total / T::from_usize(n_bits * n_iters).expect("count")
}

/// Loss and its gradient with respect to every LLR.
pub fn multi_loss_grad<T: Real>(llrs: &[T], n_iters: usize, labels: &[u8], mask: &[u8]) -> (T, Vec<T>) {
    let n_bits = check_shapes(llrs.len(), n_iters, labels, mask);
    let mut grad = vec![T::zero(); llrs.len()];
    if n_bits == 0 {
        return (T::zero(), grad);
    }
    let scale = T::one() / T::from_usize(n_bits * n_iters).expect("count");
    let mut total = T::zero();
    for (it, g) in llrs.chunks_exact(labels.len()).zip(grad.chunks_exact_mut(labels.len())) {
        for (((&l, &y), &m), gv) in it.iter().zip(labels).zip(mask).zip(g) {
            if m != 0 {
                total = total + bce(l, y);
                let t = if y == 0 { T::one() } else { T::zero() };
                *gv = (sigmoid(l) - t) * scale;
            }
        }
    }
    (total * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_llrs_cost_ln2_per_bit() {
        let labels = [0u8, 1, 1, 0, 1];
        let mask = [1u8; 5];
        let l = multi_loss(&[0.0f64; 10], 2, &labels, &mask);
        assert_eq!(l, std::f64::consts::LN_2);
    }

    #[test]
    fn confident_correct_llrs_cost_nothing() {
        assert!(bce(80.0f64, 0) < 1e-30);
        assert!(bce(-80.0f64, 1) < 1e-30);
        assert!((bce(80.0f64, 1) - 80.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(1000.0f32), 1000.0);
        assert_eq!(softplus(-1000.0f32), 0.0);
        assert!(softplus(f32::MAX).is_finite());
    }

    #[test]
    fn masked_bits_are_ignored() {
        let (l, g) = multi_loss_grad(&[5.0f64, -100.0], 1, &[0, 0], &[1, 0]);
        assert_eq!(g[1], 0.0);
        assert!((l - bce(5.0, 0)).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_gives_zero() {
        assert_eq!(multi_loss(&[1.0f32, 2.0], 1, &[0, 1], &[0, 0]), 0.0);
    }
}
