//! Exact 1-D p-power Wasserstein costs between projected samples.
//!
//! In one dimension the optimal coupling between two equal-size empirical
//! measures pairs their order statistics, so the cost is a sort followed by
//! a linear scan. Lists of unequal length are first equalised by resampling
//! the shorter one with replacement.

use crate::error::{invalid, Result};
use crate::numeric::RngState;

/// The p-power cost `(1/n) sum |a_(i) - b_(i)|^p` and its gradient with
/// respect to `a`, in the caller's (unsorted) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedCost {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Reusable buffers for repeated cost evaluations.
#[derive(Debug, Default)]
pub(crate) struct CostScratch {
    a_sorted: Vec<(f64, u32)>,
    b_keys: Vec<u64>,
    b_sorted: Vec<f64>,
}

// Maps a float to an integer with the same order as `f64::total_cmp`.
#[inline]
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[inline]
fn from_order_key(k: u64) -> f64 {
    f64::from_bits(if k >> 63 == 1 { k & !(1 << 63) } else { !k })
}

/// Sorts floats ascending in `f64::total_cmp` order.
pub(crate) fn sort_floats(v: &mut [f64]) {
    let mut keys: Vec<u64> = v.iter().map(|&x| order_key(x)).collect();
    keys.sort_unstable();
    for (o, k) in v.iter_mut().zip(keys) {
        *o = from_order_key(k);
    }
}

fn check_inputs(a: &[f64], b: &[f64], p: f64) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("1-D cost needs non-empty sample lists"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("Wasserstein order p must be >= 1, got {p}")));
    }
    Ok(())
}

/// Indices that extend a list of length `len` to length `n`: the identity
/// followed by `n - len` uniform draws with replacement.
fn extension(len: usize, n: usize, rng: &mut RngState) -> impl Iterator<Item = usize> + '_ {
    (0..len).chain((len..n).map(move |_| rng.below(len)))
}

/// Repeats the shorter list (uniformly, with replacement) until both have
/// length `max(|a|, |b|)`. The longer list is returned unchanged.
pub fn equalize_lengths(a: &[f64], b: &[f64], rng: &mut RngState) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("cannot equalise an empty list"));
    }
    let n = a.len().max(b.len());
    let a_out = extension(a.len(), n, rng).map(|i| a[i]).collect();
    let b_out = extension(b.len(), n, rng).map(|i| b[i]).collect();
    Ok((a_out, b_out))
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    let x = x.abs();
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

#[inline]
fn cost_derivative(diff: f64, p: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if p == 1.0 {
        diff.signum()
    } else if p == 2.0 {
        2.0 * diff
    } else {
        p * diff.signum() * diff.abs().powf(p - 1.0)
    }
}

/// Core sorted-pairing evaluation. When `grad` is given (length `a.len()`)
/// the derivative of the cost with respect to each `a` element is added to
/// it; duplicated elements from equalisation accumulate.
pub(crate) fn sorted_cost(
    a: &[f64],
    b: &[f64],
    p: f64,
    rng: &mut RngState,
    scratch: &mut CostScratch,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = a.len().max(b.len());

    scratch.a_sorted.clear();
    scratch.a_sorted.extend(extension(a.len(), n, rng).map(|i| (a[i], i as u32)));
    // stable, so equal values keep their post-equalisation order
    radsort::sort_by_key(&mut scratch.a_sorted, |e| e.0);

    scratch.b_keys.clear();
    scratch.b_keys.extend(extension(b.len(), n, rng).map(|i| order_key(b[i])));
    scratch.b_keys.sort_unstable();
    scratch.b_sorted.clear();
    scratch.b_sorted.extend(scratch.b_keys.iter().map(|&k| from_order_key(k)));

    let inv_n = 1.0 / n as f64;
    let pairs = scratch.a_sorted.iter().zip(&scratch.b_sorted);
    match grad {
        None => pairs.map(|(&(x, _), &y)| pow_abs(x - y, p)).sum::<f64>() * inv_n,
        Some(g) => {
            let mut total = 0.0;
            for (&(x, idx), &y) in pairs {
                let diff = x - y;
                total += pow_abs(diff, p);
                g[idx as usize] += cost_derivative(diff, p) * inv_n;
            }
            total * inv_n
        }
    }
}

/// The p-power 1-D Wasserstein cost between `a` and `b` with its gradient
/// with respect to `a`. Equal values keep their input order (resampled
/// repeats last), and a zero difference contributes a zero subgradient.
pub fn w1d_cost(a: &[f64], b: &[f64], p: f64, rng: &mut RngState) -> Result<SlicedCost> {
    check_inputs(a, b, p)?;
    let mut grad = vec![0.0; a.len()];
    let value = sorted_cost(a, b, p, rng, &mut CostScratch::default(), Some(&mut grad));
    Ok(SlicedCost { value, grad })
}

/// The rooted distance `W_p = cost^(1/p)`, for reporting.
pub fn w_p_distance(a: &[f64], b: &[f64], p: f64, rng: &mut RngState) -> Result<f64> {
    check_inputs(a, b, p)?;
    let cost = sorted_cost(a, b, p, rng, &mut CostScratch::default(), None);
    Ok(cost.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng() -> RngState {
        RngState::new(3)
    }

    /// Minimum over all bijections of the mean p-power cost.
    fn brute_force_cost(a: &[f64], b: &[f64], p: f64) -> f64 {
        fn permute(k: usize, perm: &mut Vec<usize>, a: &[f64], b: &[f64], p: f64, best: &mut f64) {
            if k == perm.len() {
                let c: f64 = perm.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs().powf(p)).sum();
                *best = best.min(c / a.len() as f64);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, a, b, p, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..b.len()).collect();
        let mut best = f64::INFINITY;
        permute(0, &mut perm, a, b, p, &mut best);
        best
    }

    #[test]
    fn equal_lengths_unchanged() {
        let (a, b) = equalize_lengths(&[1.0, 2.0], &[3.0, 4.0], &mut rng()).unwrap();
        assert_eq!((a, b), (vec![1.0, 2.0], vec![3.0, 4.0]));
    }

    #[test]
    fn single_element_repeats() {
        let (a, b) = equalize_lengths(&[0.0, 1.0], &[0.5], &mut rng()).unwrap();
        assert_eq!((a, b), (vec![0.0, 1.0], vec![0.5, 0.5]));
    }

    #[test]
    fn extension_draws_members() {
        let a: Vec<f64> = (1..=8).map(f64::from).collect();
        let b: Vec<f64> = (1..=5).map(f64::from).collect();
        let (a2, b2) = equalize_lengths(&a, &b, &mut rng()).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2.len(), 8);
        assert_eq!(&b2[..5], &b[..]);
        assert!(b2.iter().all(|v| b.contains(v)));
    }

    #[test]
    fn empty_rejected() {
        assert!(equalize_lengths(&[], &[1.0], &mut rng()).is_err());
        assert!(w1d_cost(&[1.0], &[], 1.0, &mut rng()).is_err());
        assert!(w1d_cost(&[1.0], &[1.0], 0.5, &mut rng()).is_err());
    }

    #[test]
    fn identical_multisets_cost_zero() {
        let c = w1d_cost(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0], 1.0, &mut rng()).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_pair_quadratic() {
        let c = w1d_cost(&[0.0], &[2.0], 2.0, &mut rng()).unwrap();
        assert_eq!(c.value, 4.0);
        assert_eq!(c.grad, vec![-4.0]);
        assert_eq!(w_p_distance(&[0.0], &[2.0], 2.0, &mut rng()).unwrap(), 2.0);
    }

    #[test]
    fn sorted_pairing_is_optimal_small() {
        let a = [1.0, 3.0, 2.0];
        let b = [0.0, 0.0, 0.0];
        let brute = brute_force_cost(&a, &b, 1.0);
        assert!((brute - 2.0).abs() < 1e-15);
        let c = w1d_cost(&a, &b, 1.0, &mut rng()).unwrap();
        assert!((c.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_exhaustive_assignment_n6() {
        let mut r = RngState::new(21);
        for _ in 0..5 {
            let a: Vec<f64> = (0..6).map(|_| r.standard_normal()).collect();
            let b: Vec<f64> = (0..6).map(|_| 2.0 * r.standard_normal() + 0.5).collect();
            let brute = brute_force_cost(&a, &b, 1.0);
            let w = w_p_distance(&a, &b, 1.0, &mut rng()).unwrap();
            assert!((w - brute).abs() < 1e-12, "{w} vs {brute}");
            assert_eq!(w_p_distance(&a, &a, 1.7, &mut rng()).unwrap(), 0.0);
        }
    }

    #[test]
    fn duplicated_positions_accumulate() {
        // a is repeated to length 3; the single element receives all three terms
        let c = w1d_cost(&[0.0], &[1.0, 2.0, 3.0], 2.0, &mut rng()).unwrap();
        assert!((c.value - (1.0 + 4.0 + 9.0) / 3.0).abs() < 1e-12);
        assert!((c.grad[0] - 2.0 * (-1.0 - 2.0 - 3.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn translation_identity_p2() {
        let mut r = RngState::new(5);
        let a: Vec<f64> = (0..20).map(|_| r.standard_normal()).collect();
        let b: Vec<f64> = (0..20).map(|_| r.standard_normal() * 1.5).collect();
        let c = 0.7;
        let base = w1d_cost(&a, &b, 2.0, &mut rng()).unwrap().value;
        let shifted: Vec<f64> = a.iter().map(|x| x + c).collect();
        let moved = w1d_cost(&shifted, &b, 2.0, &mut rng()).unwrap().value;
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let mean_diff: f64 = sa.iter().zip(&sb).map(|(x, y)| x - y).sum::<f64>() / 20.0;
        assert!((moved - base - (c * c + 2.0 * c * mean_diff)).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
            shift in 0usize..40,
            p in 1.0f64..3.0,
        ) {
            let a: Vec<f64> = pts.iter().map(|x| x.0).collect();
            let b: Vec<f64> = pts.iter().map(|x| x.1).collect();
            let k = shift % a.len();
            let mut a_rot = a.clone();
            a_rot.rotate_left(k);
            let mut b_rev = b.clone();
            b_rev.reverse();
            let c1 = w1d_cost(&a, &b, p, &mut rng()).unwrap();
            let c2 = w1d_cost(&a_rot, &b_rev, p, &mut rng()).unwrap();
            prop_assert!((c1.value - c2.value).abs() <= 1e-12 * (1.0 + c1.value));
            let mut g = c2.grad.clone();
            g.rotate_right(k);
            for (x, y) in c1.grad.iter().zip(&g) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn zero_iff_sorted_equal(v in prop::collection::vec(-5.0f64..5.0, 1..30), bump in 0usize..30) {
            let mut w = v.clone();
            w.reverse();
            prop_assert_eq!(w1d_cost(&v, &w, 2.0, &mut rng()).unwrap().value, 0.0);
            let i = bump % w.len();
            w[i] += 0.25;
            prop_assert!(w1d_cost(&v, &w, 2.0, &mut rng()).unwrap().value > 0.0);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = RngState::new(8);
        for trial in 0..20 {
            let n = 5 + trial;
            let p = [1.0, 1.5, 2.0, 3.0][trial % 4];
            let a: Vec<f64> = (0..n).map(|_| r.standard_normal()).collect();
            let b: Vec<f64> = (0..n).map(|_| r.standard_normal() + 0.3).collect();
            let c = w1d_cost(&a, &b, p, &mut rng()).unwrap();
            let h = 1e-5;
            for j in 0..n {
                let mut ap = a.clone();
                ap[j] += h;
                let mut am = a.clone();
                am[j] -= h;
                let fd = (w1d_cost(&ap, &b, p, &mut rng()).unwrap().value
                    - w1d_cost(&am, &b, p, &mut rng()).unwrap().value)
                    / (2.0 * h);
                let rel = (fd - c.grad[j]).abs() / c.grad[j].abs().max(1e-6);
                assert!(rel < 1e-4, "trial {trial} j {j}: fd {fd} vs {}", c.grad[j]);
            }
        }
    }

    #[test]
    fn order_key_follows_total_order() {
        let v = [f64::NEG_INFINITY, -3.5, -1e-300, -0.0, 0.0, 1e-300, 2.0, f64::INFINITY];
        for w in v.windows(2) {
            assert!(order_key(w[0]) < order_key(w[1]), "{} {}", w[0], w[1]);
        }
        for x in v {
            assert_eq!(from_order_key(order_key(x)).to_bits(), x.to_bits());
        }
    }
}
