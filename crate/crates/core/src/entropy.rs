//! Plug-in Shannon entropy and the Miller-Madow bias correction.
//!
//! All values are in nats. Bins with a zero count are ignored both in the
//! sum and in the count of occupied bins.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Nonnegative per-bin counts, e.g. interactions per contact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountDistribution {
    counts: Vec<u64>,
}

impl CountDistribution {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    /// Tallies occurrences of each distinct key.
    pub fn from_keys<K: Ord, I: IntoIterator<Item = K>>(keys: I) -> Self {
        let mut tally: BTreeMap<K, u64> = BTreeMap::new();
        for k in keys {
            *tally.entry(k).or_default() += 1;
        }
        Self {
            counts: tally.into_values().collect(),
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of observations `N`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of bins with a nonzero count.
    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Maximum-likelihood (plug-in) Shannon entropy.
pub fn shannon_ml(d: &CountDistribution) -> Result<f64> {
    let n = d.total();
    if n == 0 {
        return Err(Error::EmptyDistribution);
    }
    let n = n as f64;
    let h = d
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    // A single occupied bin gives -1 * ln(1) = -0.0.
    Ok(h + 0.0)
}

/// Shannon entropy with the Miller-Madow correction `(m - 1) / 2N`.
pub fn miller_madow(d: &CountDistribution) -> Result<f64> {
    let h = shannon_ml(d)?;
    let m = d.occupied_bins() as f64;
    Ok(h + (m - 1.0) / (2.0 * d.total() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cd(c: &[u64]) -> CountDistribution {
        CountDistribution::new(c.to_vec())
    }

    #[test]
    fn single_bin_is_zero() {
        assert_eq!(shannon_ml(&cd(&[5])).unwrap(), 0.0);
        assert_eq!(miller_madow(&cd(&[5])).unwrap(), 0.0);
    }

    #[test]
    fn two_uniform_bins() {
        assert!((shannon_ml(&cd(&[1, 1])).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((miller_madow(&cd(&[1, 1])).unwrap() - 0.943147).abs() < 1e-6);
    }

    #[test]
    fn three_bins_hand_values() {
        // -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2
        let d = cd(&[2, 1, 1]);
        assert!((shannon_ml(&d).unwrap() - 1.5 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((shannon_ml(&d).unwrap() - 1.039721).abs() < 1e-6);
        assert!((miller_madow(&d).unwrap() - 1.289721).abs() < 1e-6);
    }

    #[test]
    fn zero_bins_are_ignored() {
        assert_eq!(
            miller_madow(&cd(&[0, 2, 0, 1, 1])).unwrap(),
            miller_madow(&cd(&[2, 1, 1])).unwrap()
        );
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(shannon_ml(&cd(&[])), Err(Error::EmptyDistribution)));
        assert!(matches!(miller_madow(&cd(&[0, 0])), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn uniform_bins_give_ln_k() {
        for k in 1..=64u64 {
            let h = shannon_ml(&cd(&vec![3; k as usize])).unwrap();
            assert!((h - (k as f64).ln()).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn from_keys_counts_each_key() {
        let d = CountDistribution::from_keys(["a", "b", "a"]);
        assert_eq!(d.counts(), &[2, 1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mm_dominates_ml(counts in prop::collection::vec(0u64..100, 1..50)) {
                let d = cd(&counts);
                prop_assume!(d.total() > 0);
                let ml = shannon_ml(&d).unwrap();
                let mm = miller_madow(&d).unwrap();
                if d.occupied_bins() <= 1 {
                    prop_assert_eq!(mm, ml);
                } else {
                    prop_assert!(mm > ml);
                }
            }

            #[test]
            fn permutation_invariant(mut counts in prop::collection::vec(0u64..100, 1..30), seed in any::<u64>()) {
                let d = cd(&counts);
                prop_assume!(d.total() > 0);
                let a = miller_madow(&d).unwrap();
                let b = shannon_ml(&d).unwrap();
                // rotate and reverse
                let r = (seed as usize) % counts.len();
                counts.rotate_left(r);
                counts.reverse();
                let p = cd(&counts);
                prop_assert!((miller_madow(&p).unwrap() - a).abs() < 1e-12);
                prop_assert!((shannon_ml(&p).unwrap() - b).abs() < 1e-12);
            }

            #[test]
            fn doubling_keeps_ml(counts in prop::collection::vec(0u64..50, 1..30)) {
                let d = cd(&counts);
                prop_assume!(d.total() > 0);
                let doubled = cd(&counts.iter().map(|c| c * 2).collect::<Vec<_>>());
                let ml = shannon_ml(&d).unwrap();
                prop_assert!((shannon_ml(&doubled).unwrap() - ml).abs() < 1e-12);
                let m = d.occupied_bins() as f64;
                let n = d.total() as f64;
                let expected = ml + (m - 1.0) / (4.0 * n);
                prop_assert!((miller_madow(&doubled).unwrap() - expected).abs() < 1e-12);
            }
        }
    }
}
