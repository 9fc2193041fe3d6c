use std::collections::BTreeMap;

use serde::Serialize;

use crate::scalar::Scalar;
use crate::schema::Attribute;
use crate::value::Value;

/// Shannon entropy in bits of a histogram given by its counts.
///
/// Counts are summed in ascending order so the result does not depend on the
/// histogram's iteration order. Zero counts are ignored. The result is
/// clamped to `[0, log2(distinct)]`.
pub fn entropy_bits<F: Scalar>(counts: impl IntoIterator<Item = u64>) -> F {
    let mut counts: Vec<u64> = counts.into_iter().filter(|&n| n > 0).collect();
    if counts.len() <= 1 {
        return F::zero();
    }
    counts.sort_unstable();
    let total = F::from_count(counts.iter().sum());
    let h = counts.iter().fold(F::zero(), |acc, &n| {
        let p = F::from_count(n) / total;
        acc - p * p.log2()
    });
    let bound = F::from_count(counts.len() as u64).log2();
    h.max(F::zero()).min(bound)
}

/// Distribution of one attribute over the entities of a candidate set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStats<F> {
    pub attribute: Attribute,
    /// Value to number of distinct base entities having that value.
    pub histogram: BTreeMap<Value, u64>,
    pub distinct: usize,
    pub entropy_bits: F,
    /// Size of the candidate set the statistics were computed over.
    pub candidates: usize,
}

impl<F: Scalar> ColumnStats<F> {
    pub fn from_histogram(attribute: Attribute, histogram: BTreeMap<Value, u64>, candidates: usize) -> Self {
        let entropy_bits = entropy_bits(histogram.values().copied());
        ColumnStats {
            attribute,
            distinct: histogram.len(),
            histogram,
            entropy_bits,
            candidates,
        }
    }

    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_entropy() {
        // {a, a, b, c}: -(1/2 log 1/2 + 1/4 log 1/4 + 1/4 log 1/4) = 1.5
        let h: f64 = entropy_bits([2, 1, 1]);
        assert!((h - 1.5).abs() < 1e-12);
        let h32: f32 = entropy_bits([1, 2, 1]);
        assert!((h32 - 1.5).abs() < 1e-6);
    }

    #[test]
    fn degenerate_histograms_have_zero_entropy() {
        assert_eq!(entropy_bits::<f64>([]), 0.0);
        assert_eq!(entropy_bits::<f64>([7]), 0.0);
        assert_eq!(entropy_bits::<f64>([0, 3, 0]), 0.0);
    }

    proptest! {
        #[test]
        fn entropy_bounds(counts in prop::collection::vec(1u64..50, 1..40)) {
            let h: f64 = entropy_bits(counts.iter().copied());
            let distinct = counts.len() as f64;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= distinct.log2());
            prop_assert_eq!(h == 0.0, counts.len() == 1);
        }

        #[test]
        fn uniform_histogram_gives_log2_n(n in 1usize..200, each in 1u64..20) {
            let h: f64 = entropy_bits(std::iter::repeat_n(each, n));
            prop_assert!((h - (n as f64).log2()).abs() <= 1e-12 * (n as f64).log2().max(1.0));
        }

        #[test]
        fn order_independent(mut counts in prop::collection::vec(1u64..50, 1..20)) {
            let a: f64 = entropy_bits(counts.iter().copied());
            counts.reverse();
            let b: f64 = entropy_bits(counts.iter().copied());
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
