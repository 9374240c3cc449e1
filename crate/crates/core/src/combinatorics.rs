//! Exact counts of matchings and cycle configurations.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};
use crate::matchings::{single_cycle_neighbors, Matching};

/// Largest `n` for which counts are carried exactly.
pub const EXACT_LIMIT: u64 = 64;

/// A count with its natural log. `exact` is `None` once the count is only
/// tracked on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CountValue {
    pub exact: Option<BigUint>,
    pub log_value: f64,
}

impl CountValue {
    fn from_exact(v: BigUint) -> Self {
        let log_value = big_ln(&v);
        Self {
            exact: Some(v),
            log_value,
        }
    }

    fn from_log(log_value: f64) -> Self {
        Self {
            exact: None,
            log_value,
        }
    }

    /// The exact value as `u64`, if it is exact and fits.
    pub fn as_u64(&self) -> Option<u64> {
        self.exact.as_ref().and_then(|v| v.to_u64())
    }
}

fn big_ln(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits < 1000 {
        return v.to_f64().expect("finite below 2^1000").ln();
    }
    let shift = bits - 60;
    let top = (v >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

fn check_even_n(n: u64) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::domain(format!("n must be even and positive, got {n}")));
    }
    Ok(())
}

/// `k!! = k (k-2) (k-4) ...`; `(n-1)!!` counts perfect matchings on `n`
/// vertices.
pub fn double_factorial(k: u64) -> CountValue {
    if k < EXACT_LIMIT {
        let mut v = BigUint::one();
        let mut j = k;
        while j >= 2 {
            v *= j;
            j -= 2;
        }
        CountValue::from_exact(v)
    } else {
        let mut log = 0.0;
        let mut j = k;
        while j >= 2 {
            log += (j as f64).ln();
            j -= 2;
        }
        CountValue::from_log(log)
    }
}

/// Number of perfect matchings on `n` vertices.
pub fn perfect_matching_count(n: u64) -> Result<CountValue> {
    check_even_n(n)?;
    Ok(double_factorial(n - 1))
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut v = BigUint::one();
    for i in 0..k {
        v = v * (n - i) / (i + 1);
    }
    v
}

/// `|M°ν| = C(n/2, ν) (ν-1)!/2 2^ν`: matchings differing from a fixed one by
/// a single cycle of length `2ν`.
pub fn single_cycle_count(n: u64, nu: u64) -> Result<CountValue> {
    check_even_n(n)?;
    if nu < 2 || nu > n / 2 {
        return Err(Error::domain(format!("half-length {nu} outside 2..={}", n / 2)));
    }
    if n <= EXACT_LIMIT {
        let mut v = binomial(n / 2, nu);
        for j in 2..nu {
            v *= j;
        }
        v <<= nu - 1;
        Ok(CountValue::from_exact(v))
    } else {
        let k = n / 2;
        let log_binom: f64 = (0..nu).map(|i| ((k - i) as f64).ln() - ((i + 1) as f64).ln()).sum();
        let log_fact: f64 = (2..nu).map(|j| (j as f64).ln()).sum();
        Ok(CountValue::from_log(
            log_binom + log_fact + (nu - 1) as f64 * std::f64::consts::LN_2,
        ))
    }
}

/// `h_m = 1 + 1/2 + ... + 1/m`.
pub fn harmonic(m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("harmonic number needs m >= 1"));
    }
    Ok((1..=m).rev().map(|j| 1.0 / j as f64).sum())
}

/// Log of the leading term `n^(ν1+ν2-t) / (ν1 ν2) * (t ν1 ν2 / n)^s` bounding
/// the number of ordered pairs of single-cycle neighbors whose new edges
/// overlap in `t` edges forming `s` paths.
pub fn overlap_pair_bound(n: u64, nu1: u64, nu2: u64, t: u64, s: u64) -> Result<f64> {
    if !(1 <= s && s <= t && t < nu1 && nu1 <= nu2) {
        return Err(Error::domain(format!(
            "need 1 <= s <= t < nu1 <= nu2, got s={s} t={t} nu1={nu1} nu2={nu2}"
        )));
    }
    let ln = |v: u64| (v as f64).ln();
    Ok((nu1 + nu2 - t) as f64 * ln(n) - ln(nu1) - ln(nu2)
        + s as f64 * (ln(t) + ln(nu1) + ln(nu2) - ln(n)))
}

/// Largest `n` accepted by [`brute_pair_census`].
pub const CENSUS_LIMIT: usize = 12;

/// Exhaustive overlap census for the reference matching `{(0,1), (2,3), ...}`.
///
/// For every ordered pair `(Π1, Π2)` with `Π1 ∈ M°ν1`, `Π2 ∈ M°ν2`, buckets by
/// `t = |(Π1 \ Π) ∩ (Π2 \ Π)|` and by `s`, the number of connected
/// components of the shared edges once each pair of `Π` is contracted to a
/// node. Shared edges joined through a `Π` pair count as one component.
pub fn brute_pair_census(n: usize, nu1: usize, nu2: usize) -> Result<BTreeMap<(usize, usize), u64>> {
    if n > CENSUS_LIMIT {
        return Err(Error::ResourceCap(format!(
            "pair census limited to n <= {CENSUS_LIMIT}, got {n}"
        )));
    }
    let pi = Matching::consecutive(n)?;
    let edge_index = |a: usize, b: usize| {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        a * n + b
    };
    let masks = |nu: usize| -> Result<Vec<u128>> {
        Ok(single_cycle_neighbors(&pi, nu)?
            .map(|m| {
                let mut mask = 0u128;
                for (a, b) in m.pairs() {
                    if !pi.contains(a, b) {
                        mask |= 1u128 << edge_slot(n, edge_index(a, b));
                    }
                }
                mask
            })
            .collect())
    };
    let first = masks(nu1)?;
    let second = if nu1 == nu2 { first.clone() } else { masks(nu2)? };
    let slots = edge_slots(n);
    let mut out = BTreeMap::new();
    for &m1 in &first {
        for &m2 in &second {
            let shared = m1 & m2;
            let t = shared.count_ones() as usize;
            let s = if t == 0 { 0 } else { contracted_components(shared, &slots) };
            *out.entry((t, s)).or_insert(0u64) += 1;
        }
    }
    Ok(out)
}

/// Bit position of edge `a*n + b` (`a < b`) in a `u128` mask.
fn edge_slot(n: usize, idx: usize) -> usize {
    let (a, b) = (idx / n, idx % n);
    // Row-major over the strict upper triangle.
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

fn edge_slots(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            v.push((a, b));
        }
    }
    v
}

fn contracted_components(mask: u128, slots: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..64).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let mut nodes = 0u64;
    let mut unions = 0;
    let mut bits = mask;
    while bits != 0 {
        let slot = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let (a, b) = slots[slot];
        let (u, v) = (a / 2, b / 2);
        nodes |= 1 << u | 1 << v;
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            unions += 1;
        }
    }
    nodes.count_ones() as usize - unions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchings::{all_matchings, symmetric_difference};

    #[test]
    fn double_factorial_values() {
        assert_eq!(perfect_matching_count(4).unwrap().as_u64(), Some(3));
        assert_eq!(perfect_matching_count(6).unwrap().as_u64(), Some(15));
        assert_eq!(perfect_matching_count(10).unwrap().as_u64(), Some(945));
        assert_eq!(all_matchings(10).len(), 945);
        assert!(perfect_matching_count(7).is_err());
    }

    #[test]
    fn log_value_tracks_exact() {
        for k in [1u64, 9, 33, 35, 63] {
            let c = double_factorial(k);
            let exact = c.exact.as_ref().unwrap();
            let rel = (c.log_value - big_ln(exact)).abs() / c.log_value.max(1.0);
            assert!(rel < 1e-12);
        }
        // 33!! fits u64 but 35!! does not... both are exact regardless.
        assert!(double_factorial(35).as_u64().is_none());
        assert!(double_factorial(35).exact.is_some());
        let big = double_factorial(99);
        assert!(big.exact.is_none());
        let from_exact: f64 = (1..=99u64).step_by(2).map(|j| (j as f64).ln()).sum();
        assert!((big.log_value - from_exact).abs() < 1e-9);
    }

    #[test]
    fn single_cycle_formula_small() {
        assert_eq!(single_cycle_count(4, 2).unwrap().as_u64(), Some(2));
        assert_eq!(single_cycle_count(6, 2).unwrap().as_u64(), Some(6));
        assert!(single_cycle_count(6, 1).is_err());
        assert!(single_cycle_count(6, 4).is_err());
    }

    #[test]
    fn n8_partition() {
        let total: u64 = (2..=4).map(|nu| single_cycle_count(8, nu).unwrap().as_u64().unwrap()).sum();
        let pi = Matching::consecutive(8).unwrap();
        let multi = all_matchings(8)
            .iter()
            .filter(|m| symmetric_difference(&pi, m).unwrap().mu() >= 2)
            .count() as u64;
        assert_eq!(total + multi, 104);
        assert!(multi > 0);
    }

    #[test]
    fn single_cycle_sum_vs_all_matchings() {
        for n in [4u64, 6, 8, 10, 12] {
            let sum: u64 = (2..=n / 2)
                .map(|nu| single_cycle_count(n, nu).unwrap().as_u64().unwrap())
                .sum();
            let all = perfect_matching_count(n).unwrap().as_u64().unwrap() - 1;
            if n <= 6 {
                assert_eq!(sum, all);
            } else {
                assert!(sum < all);
            }
        }
    }

    #[test]
    fn log_mode_agrees_with_exact_at_boundary() {
        let exact = single_cycle_count(64, 5).unwrap();
        let approx = single_cycle_count(66, 5).unwrap();
        assert!(exact.exact.is_some() && approx.exact.is_none());
        let direct = big_ln(&(binomial(33, 5) * BigUint::from(24u32) * BigUint::from(16u32)));
        assert!((approx.log_value - direct).abs() < 1e-10);
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(1).unwrap(), 1.0);
        assert!((harmonic(3).unwrap() - 11.0 / 6.0).abs() < 1e-15);
        assert!(harmonic(0).is_err());
        let gamma = 0.577_215_664_901_532_9;
        let mut prev = f64::INFINITY;
        for m in 1..200u64 {
            let gap = harmonic(m).unwrap() - (m as f64).ln() - gamma;
            assert!(gap > 0.0 && gap < 1.0 / (2.0 * m as f64));
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn overlap_bound_plug_in() {
        // n^3 / 4 * (4 / n) = n^2.
        for n in [8u64, 100, 1000] {
            let v = overlap_pair_bound(n, 2, 2, 1, 1).unwrap();
            assert!((v - 2.0 * (n as f64).ln()).abs() < 1e-12);
        }
        assert!(overlap_pair_bound(10, 3, 3, 1, 2).is_err());
        assert!(overlap_pair_bound(10, 3, 3, 3, 1).is_err());
        assert!(overlap_pair_bound(10, 4, 3, 1, 1).is_err());
    }

    #[test]
    fn census_partition_and_identity_bucket() {
        let c = brute_pair_census(8, 2, 2).unwrap();
        let m2 = single_cycle_count(8, 2).unwrap().as_u64().unwrap();
        assert_eq!(c.values().sum::<u64>(), m2 * m2);
        assert_eq!(c[&(2, 1)], m2);
        let c = brute_pair_census(8, 2, 3).unwrap();
        let m3 = single_cycle_count(8, 3).unwrap().as_u64().unwrap();
        assert_eq!(c.values().sum::<u64>(), m2 * m3);
        assert!(brute_pair_census(14, 2, 2).is_err());
    }

    #[test]
    fn census_components_count_contracted_paths() {
        // A 6-cycle is a triangle on contracted pairs, so any two of its new
        // edges meet at a pair: shared edges of a 6-cycle and an 8-cycle
        // always form one component, never two.
        let c = brute_pair_census(10, 3, 4).unwrap();
        assert!(c.get(&(2, 1)).copied().unwrap_or(0) > 0);
        assert!(!c.contains_key(&(2, 2)));
        assert!(c.keys().all(|&(t, s)| (t == 0) == (s == 0) && s <= t));
    }
}
