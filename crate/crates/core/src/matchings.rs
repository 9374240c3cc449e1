//! Perfect matchings, stability, and the cycle structure of symmetric
//! differences.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::instances::PreferenceProfile;

/// A perfect matching stored as a fixed-point-free involution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching {
    partner: Vec<usize>,
}

impl Matching {
    pub fn new(partner: Vec<usize>) -> Result<Self> {
        let n = partner.len();
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidMatching(format!("odd or empty size {n}")));
        }
        for (i, &p) in partner.iter().enumerate() {
            if p >= n || p == i || partner[p] != i {
                return Err(Error::InvalidMatching(format!(
                    "partner map is not a fixed-point-free involution at {i}"
                )));
            }
        }
        Ok(Self { partner })
    }

    /// Builds a matching from 0-indexed pairs covering `0..n`.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut partner = vec![usize::MAX; n];
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b || partner[a] != usize::MAX || partner[b] != usize::MAX {
                return Err(Error::InvalidMatching(format!("bad pair ({a}, {b})")));
            }
            partner[a] = b;
            partner[b] = a;
        }
        Self::new(partner)
    }

    /// `{(0,1), (2,3), ...}`, the default reference matching.
    pub fn consecutive(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i ^ 1).collect())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.partner.len()
    }

    #[inline]
    pub fn partner(&self, i: usize) -> usize {
        self.partner[i]
    }

    pub fn partners(&self) -> &[usize] {
        &self.partner
    }

    #[inline]
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.partner[a] == b
    }

    /// Pairs `(a, b)` with `a < b`, sorted by `a`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .filter(|&i| i < self.partner[i])
            .map(|i| (i, self.partner[i]))
            .collect()
    }

    /// The neighbor of `self` whose difference consists of disjoint cycles of
    /// the given half-lengths, laid on consecutive pairs of `self`.
    pub fn with_cycles(&self, half_lengths: &[usize]) -> Result<Matching> {
        let pairs = self.pairs();
        let needed: usize = half_lengths.iter().sum();
        if half_lengths.iter().any(|&v| v < 2) || needed > pairs.len() {
            return Err(Error::domain(format!(
                "cannot place cycles of half-lengths {half_lengths:?} on {} pairs",
                pairs.len()
            )));
        }
        let mut partner = self.partner.clone();
        let mut next = 0;
        for &nu in half_lengths {
            let block = &pairs[next..next + nu];
            for k in 0..nu {
                let (_, v) = block[k];
                let (u, _) = block[(k + 1) % nu];
                partner[v] = u;
                partner[u] = v;
            }
            next += nu;
        }
        Matching::new(partner)
    }

    fn check_same_size(&self, other: usize) -> Result<()> {
        if self.n() != other {
            return Err(Error::SizeMismatch {
                expected: self.n(),
                found: other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self
            .pairs()
            .into_iter()
            .map(|(a, b)| format!("{}-{}", a + 1, b + 1))
            .join(" ");
        f.write_str(&s)
    }
}

impl FromStr for Matching {
    type Err = Error;

    /// Parses `"1-2 3-4 ..."` (1-indexed).
    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for tok in s.split_whitespace() {
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| Error::InvalidMatching(format!("bad pair {tok:?}")))?;
            let parse = |t: &str| -> Result<usize> {
                match t.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::InvalidMatching(format!("bad agent {t:?}"))),
                }
            };
            pairs.push((parse(a)?, parse(b)?));
        }
        Matching::from_pairs(pairs.len() * 2, &pairs)
    }
}

/// Every perfect matching on `0..n`, in lexicographic order of the partner
/// chosen for the lowest unmatched vertex.
pub fn all_matchings(n: usize) -> Vec<Matching> {
    let mut out = Vec::new();
    if n == 0 || n % 2 != 0 {
        return out;
    }
    let mut partner = vec![usize::MAX; n];
    fn rec(partner: &mut Vec<usize>, out: &mut Vec<Matching>) {
        let Some(i) = partner.iter().position(|&p| p == usize::MAX) else {
            out.push(Matching {
                partner: partner.clone(),
            });
            return;
        };
        for j in i + 1..partner.len() {
            if partner[j] == usize::MAX {
                partner[i] = j;
                partner[j] = i;
                rec(partner, out);
                partner[i] = usize::MAX;
                partner[j] = usize::MAX;
            }
        }
    }
    rec(&mut partner, &mut out);
    out
}

/// Whether `(i, j)` blocks `m`: both strictly prefer each other to their
/// partners. Assumes `(i, j)` is not an edge of `m`.
#[inline]
pub(crate) fn blocks(p: &PreferenceProfile, m: &Matching, i: usize, j: usize) -> bool {
    p.prefers(i, j, m.partner(i)) && p.prefers(j, i, m.partner(j))
}

/// All unordered pairs `(i, j)`, `i < j`, that block `m`.
pub fn blocking_pairs(p: &PreferenceProfile, m: &Matching) -> Result<Vec<(usize, usize)>> {
    m.check_same_size(p.n())?;
    let n = p.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !m.contains(i, j) && blocks(p, m, i, j) {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

pub fn is_stable(p: &PreferenceProfile, m: &Matching) -> Result<bool> {
    m.check_same_size(p.n())?;
    let n = p.n();
    // Only candidates above the current partner can block.
    for i in 0..n {
        let pi = m.partner(i);
        for &j in p.list(i).iter().take(p.rank(i, pi)) {
            if p.prefers(j as usize, i, m.partner(j as usize)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The even alternating cycles of `m1 △ m2`.
///
/// Each cycle starts at its minimum vertex and proceeds towards the smaller
/// of that vertex's two neighbors; cycles are ordered by their first vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CycleDecomposition {
    pub cycles: Vec<Vec<usize>>,
}

impl CycleDecomposition {
    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Number of cycles.
    pub fn mu(&self) -> usize {
        self.cycles.len()
    }

    /// Half-lengths of the cycles, in cycle order.
    pub fn half_lengths(&self) -> Vec<usize> {
        self.cycles.iter().map(|c| c.len() / 2).collect()
    }

    /// Total number of edges in the symmetric difference.
    pub fn edge_count(&self) -> usize {
        self.cycles.iter().map(Vec::len).sum()
    }

    /// Sorted union of cycle vertices.
    pub fn vertex_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cycles.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// `(μ, total cycle length)`, the census key.
    pub fn key(&self) -> (usize, usize) {
        (self.mu(), self.edge_count())
    }
}

pub fn symmetric_difference(m1: &Matching, m2: &Matching) -> Result<CycleDecomposition> {
    m1.check_same_size(m2.n())?;
    let n = m1.n();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] || m1.partner(start) == m2.partner(start) {
            continue;
        }
        let (a, b) = (m1.partner(start), m2.partner(start));
        let mut use_first = a < b;
        let mut cycle = vec![start];
        seen[start] = true;
        let mut cur = start;
        loop {
            let next = if use_first { m1.partner(cur) } else { m2.partner(cur) };
            if next == start {
                break;
            }
            seen[next] = true;
            cycle.push(next);
            cur = next;
            use_first = !use_first;
        }
        cycles.push(cycle);
    }
    Ok(CycleDecomposition { cycles })
}

/// Lazily yields every matching whose symmetric difference with `m` is a
/// single cycle of length `2ν`, each exactly once.
///
/// A neighbor is determined by the `ν` pairs it rewires and a cyclic order of
/// those pairs with an orientation for each. Fixing the first pair's
/// orientation removes the reflection, leaving `(ν-1)! 2^(ν-1)` arrangements
/// per choice of pairs.
pub fn single_cycle_neighbors(
    m: &Matching,
    nu: usize,
) -> Result<impl Iterator<Item = Matching> + '_> {
    let k = m.n() / 2;
    if nu < 2 || nu > k {
        return Err(Error::domain(format!("cycle half-length {nu} outside 2..={k}")));
    }
    let pairs = m.pairs();
    let iter = (0..k).combinations(nu).flat_map(move |chosen| {
        let pairs = pairs.clone();
        let first = chosen[0];
        chosen[1..]
            .to_vec()
            .into_iter()
            .permutations(nu - 1)
            .flat_map(move |order| {
                let pairs = pairs.clone();
                (0u64..1 << (nu - 1)).map(move |flips| {
                    let mut partner = m.partner.clone();
                    let oriented = |idx: usize, flip: bool| {
                        let (a, b) = pairs[idx];
                        if flip {
                            (b, a)
                        } else {
                            (a, b)
                        }
                    };
                    let seq: Vec<(usize, usize)> = std::iter::once(oriented(first, false))
                        .chain(
                            order
                                .iter()
                                .enumerate()
                                .map(|(t, &idx)| oriented(idx, flips >> t & 1 == 1)),
                        )
                        .collect();
                    for t in 0..nu {
                        let (_, v) = seq[t];
                        let (u, _) = seq[(t + 1) % nu];
                        partner[v] = u;
                        partner[u] = v;
                    }
                    Matching { partner }
                })
            })
    });
    Ok(iter)
}

/// The matching whose difference with `m` is the union of `m1 △ m` and
/// `m2 △ m`. The two differences must be vertex-disjoint.
pub fn combine(m: &Matching, m1: &Matching, m2: &Matching) -> Result<Matching> {
    m.check_same_size(m1.n())?;
    m.check_same_size(m2.n())?;
    let mut partner = m.partner.clone();
    for i in 0..m.n() {
        let d1 = m1.partner(i) != m.partner(i);
        let d2 = m2.partner(i) != m.partner(i);
        match (d1, d2) {
            (true, true) => return Err(Error::NotDisjoint(i)),
            (true, false) => partner[i] = m1.partner(i),
            (false, true) => partner[i] = m2.partner(i),
            (false, false) => {}
        }
    }
    Matching::new(partner)
}

/// Which way a difference vertex moved: `Improved` (set A, `y_i < x_i`) or
/// `Worsened` (set B, `y_i > x_i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Improved,
    Worsened,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Improved => Side::Worsened,
            Side::Worsened => Side::Improved,
        }
    }
}

/// A cycle decomposition together with the A/B split of its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedDifference {
    pub decomposition: CycleDecomposition,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// False if some cycle fails to alternate between A and B. Such
    /// configurations have probability zero under joint stability.
    pub valid: bool,
    side: Vec<Option<Side>>,
}

impl OrientedDifference {
    pub fn side(&self, v: usize) -> Result<Side> {
        self.side
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::domain(format!("vertex {v} is not in the difference")))
    }
}

/// Splits the difference vertices of `m △ m1` by comparing the utility of
/// the new partner `y_i` with that of the old partner `x_i`.
pub fn orient(m: &Matching, m1: &Matching, x: &[f64], y: &[f64]) -> Result<OrientedDifference> {
    let decomposition = symmetric_difference(m, m1)?;
    m.check_same_size(x.len())?;
    m.check_same_size(y.len())?;
    let mut side = vec![None; m.n()];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for v in decomposition.vertex_set() {
        if y[v] == x[v] {
            return Err(Error::domain(format!("y and x agree at difference vertex {v}")));
        }
        if y[v] < x[v] {
            side[v] = Some(Side::Improved);
            a.push(v);
        } else {
            side[v] = Some(Side::Worsened);
            b.push(v);
        }
    }
    let valid = decomposition.cycles.iter().all(|c| {
        (0..c.len()).all(|k| side[c[k]] != side[c[(k + 1) % c.len()]])
    });
    Ok(OrientedDifference {
        decomposition,
        a,
        b,
        valid,
        side,
    })
}

/// The `2^μ` alternating orientations of a decomposition, as `(A, B)` vertex
/// sets. Orientation bit `k` decides the side of cycle `k`'s first vertex.
pub fn orientations(d: &CycleDecomposition) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
    (0u64..1 << d.mu()).map(move |bits| {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (k, c) in d.cycles.iter().enumerate() {
            let first_improved = bits >> k & 1 == 0;
            for (t, &v) in c.iter().enumerate() {
                if (t % 2 == 0) == first_improved {
                    a.push(v);
                } else {
                    b.push(v);
                }
            }
        }
        (a, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{sample_profile, PreferenceProfile};
    use crate::rng::RngStream;

    fn gs4() -> PreferenceProfile {
        // 1:(2,3,4) 2:(3,1,4) 3:(1,2,4) 4:(1,2,3), 0-indexed.
        PreferenceProfile::from_lists(&[vec![1, 2, 3], vec![2, 0, 3], vec![0, 1, 3], vec![0, 1, 2]])
            .unwrap()
    }

    fn m(s: &str) -> Matching {
        s.parse().unwrap()
    }

    #[test]
    fn text_form_round_trip() {
        let x = m("1-2 3-4");
        assert_eq!(x.to_string(), "1-2 3-4");
        assert_eq!(m("4-3 2-1"), x);
        assert!("1-1 2-3".parse::<Matching>().is_err());
        assert!("1-2 2-3".parse::<Matching>().is_err());
    }

    #[test]
    fn invalid_partner_maps() {
        assert!(Matching::new(vec![1, 0, 2, 2]).is_err());
        assert!(Matching::new(vec![1, 2, 0]).is_err());
        assert!(Matching::new(vec![2, 0, 1, 3]).is_err());
    }

    #[test]
    fn matching_counts() {
        assert_eq!(all_matchings(4).len(), 3);
        assert_eq!(all_matchings(6).len(), 15);
        assert_eq!(all_matchings(8).len(), 105);
    }

    #[test]
    fn everyone_first_is_stable() {
        let p = PreferenceProfile::from_lists(&[vec![1, 2, 3], vec![0, 3, 2], vec![3, 1, 0], vec![2, 0, 1]])
            .unwrap();
        let x = m("1-2 3-4");
        assert!(blocking_pairs(&p, &x).unwrap().is_empty());
        assert!(is_stable(&p, &x).unwrap());
    }

    #[test]
    fn gs4_blockers() {
        let p = gs4();
        let bp = blocking_pairs(&p, &m("1-2 3-4")).unwrap();
        assert!(bp.contains(&(1, 2)), "{bp:?}");
        for x in all_matchings(4) {
            assert!(!is_stable(&p, &x).unwrap());
            assert!(!blocking_pairs(&p, &x).unwrap().is_empty());
        }
    }

    #[test]
    fn size_mismatch() {
        let p = gs4();
        let x = Matching::consecutive(6).unwrap();
        assert!(matches!(is_stable(&p, &x), Err(Error::SizeMismatch { .. })));
        assert!(matches!(blocking_pairs(&p, &x), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn blocking_pairs_match_definition_n6() {
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..20 {
            let p = sample_profile(6, &mut rng).unwrap();
            for x in all_matchings(6) {
                let mut expected = Vec::new();
                for i in 0..6 {
                    for j in 0..6 {
                        if i < j && x.partner(i) != j {
                            let ri = p.list(i).iter().position(|&a| a as usize == j).unwrap();
                            let rpi = p.list(i).iter().position(|&a| a as usize == x.partner(i)).unwrap();
                            let rj = p.list(j).iter().position(|&a| a as usize == i).unwrap();
                            let rpj = p.list(j).iter().position(|&a| a as usize == x.partner(j)).unwrap();
                            if ri < rpi && rj < rpj {
                                expected.push((i, j));
                            }
                        }
                    }
                }
                let got = blocking_pairs(&p, &x).unwrap();
                assert_eq!(got, expected);
                assert_eq!(is_stable(&p, &x).unwrap(), expected.is_empty());
            }
        }
    }

    #[test]
    fn difference_examples() {
        let a = m("1-2 3-4");
        assert!(symmetric_difference(&a, &a).unwrap().is_empty());
        let d = symmetric_difference(&a, &m("1-3 2-4")).unwrap();
        assert_eq!(d.cycles, vec![vec![0, 1, 3, 2]]);

        let pi = Matching::consecutive(8).unwrap();
        let two = pi.with_cycles(&[2, 2]).unwrap();
        let d = symmetric_difference(&pi, &two).unwrap();
        assert_eq!(d.mu(), 2);
        assert_eq!(d.vertex_set().len(), 8);
        assert_eq!(d.edge_count(), 8);
    }

    #[test]
    fn neighbor_counts_small() {
        let pi = Matching::consecutive(4).unwrap();
        assert_eq!(single_cycle_neighbors(&pi, 2).unwrap().count(), 2);
        let pi = Matching::consecutive(6).unwrap();
        let all: Vec<_> = single_cycle_neighbors(&pi, 2).unwrap().collect();
        assert_eq!(all.len(), 6);
        for x in &all {
            assert_eq!(symmetric_difference(&pi, x).unwrap().mu(), 1);
        }
        assert!(single_cycle_neighbors(&pi, 1).is_err());
        assert!(single_cycle_neighbors(&pi, 4).is_err());
    }

    #[test]
    fn neighbors_partition_all_matchings() {
        for n in [4usize, 6, 8] {
            let pi = Matching::consecutive(n).unwrap();
            let mut seen = std::collections::HashSet::new();
            for nu in 2..=n / 2 {
                for x in single_cycle_neighbors(&pi, nu).unwrap() {
                    let d = symmetric_difference(&pi, &x).unwrap();
                    assert_eq!(d.half_lengths(), vec![nu]);
                    assert!(seen.insert(x), "duplicate neighbor");
                }
            }
            let multi = all_matchings(n)
                .into_iter()
                .filter(|x| symmetric_difference(&pi, x).unwrap().mu() >= 2)
                .count();
            assert_eq!(seen.len() + multi + 1, all_matchings(n).len());
        }
    }

    #[test]
    fn combine_examples() {
        let pi = Matching::consecutive(8).unwrap();
        let c1 = pi.with_cycles(&[2]).unwrap();
        let c2 = {
            // A 4-cycle on the last two pairs.
            m("1-2 3-4 5-7 6-8")
        };
        assert_eq!(combine(&pi, &pi, &c2).unwrap(), c2);
        let both = combine(&pi, &c1, &c2).unwrap();
        assert_eq!(both, combine(&pi, &c2, &c1).unwrap());
        assert_eq!(symmetric_difference(&pi, &both).unwrap().mu(), 2);
        assert!(matches!(combine(&pi, &c1, &c1), Err(Error::NotDisjoint(_))));
    }

    #[test]
    fn orient_examples() {
        let pi = m("1-2 3-4");
        let p1 = m("1-3 2-4");
        let d = symmetric_difference(&pi, &p1).unwrap();
        let x = vec![0.5; 4];
        // Cycle order 0,1,3,2: below, above, below, above.
        let mut y = vec![0.0; 4];
        for (t, &v) in d.cycles[0].iter().enumerate() {
            y[v] = if t % 2 == 0 { 0.2 } else { 0.8 };
        }
        let o = orient(&pi, &p1, &x, &y).unwrap();
        assert!(o.valid);
        assert_eq!((o.a.len(), o.b.len()), (2, 2));
        assert_eq!(o.side(0).unwrap(), Side::Improved);

        let o = orient(&pi, &p1, &x, &[0.1; 4]).unwrap();
        assert!(!o.valid);

        assert!(orient(&pi, &p1, &x, &x).is_err());
        let same = orient(&pi, &pi, &x, &x).unwrap();
        assert!(same.side(0).is_err());
    }

    #[test]
    fn orientation_count_is_two_to_the_mu() {
        let pi = Matching::consecutive(14).unwrap();
        for lens in [vec![2], vec![2, 2], vec![3, 2, 2]] {
            let d = symmetric_difference(&pi, &pi.with_cycles(&lens).unwrap()).unwrap();
            let all: Vec<_> = orientations(&d).collect();
            assert_eq!(all.len(), 1 << lens.len());
            for (a, b) in &all {
                assert_eq!(a.len(), b.len());
            }
            let distinct: std::collections::HashSet<_> = all.into_iter().collect();
            assert_eq!(distinct.len(), 1 << lens.len());
        }
    }
}
