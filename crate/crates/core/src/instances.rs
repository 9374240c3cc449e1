//! Problem instances: the utility array, ranked preference profiles, and the
//! plain-text instance format.
//!
//! Agent `i` prefers `a` to `b` when `X[i][a] < X[i][b]`: lower utility means
//! more preferred, and rank 0 is an agent's first choice.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matchings::Matching;

/// Smallest instance size the generators accept.
pub const MIN_AGENTS: usize = 4;

fn check_size(n: usize) -> Result<()> {
    if n < MIN_AGENTS || n % 2 != 0 {
        return Err(Error::InvalidInstance(format!(
            "agent count must be even and at least {MIN_AGENTS}, got {n}"
        )));
    }
    Ok(())
}

/// Off-diagonal array of utilities in `[0, 1]`, stored row-major with an
/// unused diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    n: usize,
    u: Vec<f64>,
}

impl UtilityMatrix {
    /// Builds a matrix from a row-major `n * n` buffer. Diagonal entries are
    /// ignored.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_size(n)?;
        if values.len() != n * n {
            return Err(Error::InvalidInstance(format!(
                "expected {} utilities, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInstance(format!(
                        "utility X[{i}][{j}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        let m = Self { n, u: values };
        for i in 0..n {
            m.row_order(i)?;
        }
        Ok(m)
    }

    pub(crate) fn from_raw(n: usize, u: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), n * n);
        Self { n, u }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert_ne!(i, j);
        self.u[i * self.n + j]
    }

    /// `x_i = X[i][m(i)]`, the utility each agent assigns to its partner.
    pub fn partner_utilities(&self, m: &Matching) -> Result<Vec<f64>> {
        if m.n() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: m.n(),
            });
        }
        Ok((0..self.n).map(|i| self.get(i, m.partner(i))).collect())
    }

    /// Ascending-utility order of the agents other than `i`.
    fn row_order(&self, i: usize) -> Result<Vec<u32>> {
        let n = self.n;
        let mut order: Vec<u32> = (0..n as u32).filter(|&j| j as usize != i).collect();
        let row = &self.u[i * n..(i + 1) * n];
        order.sort_unstable_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]));
        for w in order.windows(2) {
            if row[w[0] as usize] == row[w[1] as usize] {
                return Err(Error::Tie {
                    agent: i,
                    a: w[0] as usize,
                    b: w[1] as usize,
                });
            }
        }
        Ok(order)
    }
}

/// Draws every off-diagonal utility i.i.d. uniform on `[0, 1]`.
pub fn sample_utilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<UtilityMatrix> {
    check_size(n)?;
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                u[i * n + j] = rng.random::<f64>();
            }
        }
    }
    Ok(UtilityMatrix { n, u })
}

/// Converts a utility array to ranked lists. Fails on a within-row tie.
pub fn rank_from_utilities(u: &UtilityMatrix) -> Result<PreferenceProfile> {
    let mut lists = Vec::with_capacity(u.n * (u.n - 1));
    for i in 0..u.n {
        lists.extend(u.row_order(i)?);
    }
    Ok(PreferenceProfile::from_flat(u.n, lists))
}

/// Each agent's list is an independent uniform permutation of the others.
pub fn sample_profile<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PreferenceProfile> {
    check_size(n)?;
    let mut lists = Vec::with_capacity(n * (n - 1));
    let mut row: Vec<u32> = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n as u32).filter(|&j| j as usize != i));
        row.shuffle(rng);
        lists.extend_from_slice(&row);
    }
    Ok(PreferenceProfile::from_flat(n, lists))
}

/// Strict complete preference lists over the other `n - 1` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile {
    n: usize,
    /// Row `i` occupies `lists[i*(n-1)..(i+1)*(n-1)]`, most preferred first.
    lists: Vec<u32>,
    /// `rank[i*n + j]` is the position of `j` in `i`'s list.
    rank: Vec<u32>,
}

impl PreferenceProfile {
    fn from_flat(n: usize, lists: Vec<u32>) -> Self {
        let mut rank = vec![u32::MAX; n * n];
        for i in 0..n {
            for (r, &j) in lists[i * (n - 1)..(i + 1) * (n - 1)].iter().enumerate() {
                rank[i * n + j as usize] = r as u32;
            }
        }
        Self { n, lists, rank }
    }

    /// Builds a profile from 0-indexed lists, most preferred first.
    pub fn from_lists(lists: &[Vec<usize>]) -> Result<Self> {
        let n = lists.len();
        check_size(n)?;
        let mut flat = Vec::with_capacity(n * (n - 1));
        for (i, row) in lists.iter().enumerate() {
            validate_row(n, i, row).map_err(Error::InvalidInstance)?;
            flat.extend(row.iter().map(|&j| j as u32));
        }
        Ok(Self::from_flat(n, flat))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Agent `i`'s list, most preferred first.
    pub fn list(&self, i: usize) -> &[u32] {
        &self.lists[i * (self.n - 1)..(i + 1) * (self.n - 1)]
    }

    #[inline]
    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.rank[i * self.n + j] as usize
    }

    #[inline]
    pub fn prefers(&self, i: usize, a: usize, b: usize) -> bool {
        self.rank(i, a) < self.rank(i, b)
    }

    /// Relabels agents: agent `i` becomes `sigma[i]`.
    pub fn relabel(&self, sigma: &[usize]) -> Self {
        let n = self.n;
        let mut lists = vec![Vec::new(); n];
        for i in 0..n {
            lists[sigma[i]] = self.list(i).iter().map(|&j| sigma[j as usize]).collect();
        }
        let lists: Vec<Vec<usize>> = lists;
        Self::from_lists(&lists).expect("relabeling preserves validity")
    }
}

fn validate_row(n: usize, i: usize, row: &[usize]) -> std::result::Result<(), String> {
    if row.len() != n - 1 {
        return Err(format!(
            "agent {} lists {} agents, expected {}",
            i + 1,
            row.len(),
            n - 1
        ));
    }
    let mut seen = vec![false; n];
    for &j in row {
        if j >= n {
            return Err(format!("agent {} lists unknown agent {}", i + 1, j + 1));
        }
        if j == i {
            return Err(format!("agent {} lists itself", i + 1));
        }
        if seen[j] {
            return Err(format!("agent {} lists agent {} twice", i + 1, j + 1));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Parses the instance format: a line holding `n`, then one line
/// `i: a b c ...` per agent (1-indexed, most preferred first).
pub fn parse_instance(text: &str) -> Result<PreferenceProfile> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let n: usize = header.trim().parse().map_err(|_| Error::Parse {
        line: 1,
        message: format!("header must be the agent count, got {header:?}"),
    })?;
    if n < MIN_AGENTS || n % 2 != 0 {
        return Err(Error::Parse {
            line: 1,
            message: format!("agent count must be even and at least {MIN_AGENTS}, got {n}"),
        });
    }
    let mut rows: Vec<Option<Vec<usize>>> = vec![None; n];
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let (head, tail) = raw
            .split_once(':')
            .ok_or_else(|| err(format!("expected `agent: list`, got {raw:?}")))?;
        let agent: usize = head
            .trim()
            .parse()
            .map_err(|_| err(format!("bad agent label {:?}", head.trim())))?;
        if agent == 0 || agent > n {
            return Err(err(format!("agent {agent} out of range 1..={n}")));
        }
        let mut row = Vec::with_capacity(n - 1);
        for tok in tail.split_whitespace() {
            let j: usize = tok
                .parse()
                .map_err(|_| err(format!("agent {agent}: bad entry {tok:?}")))?;
            if j == 0 {
                return Err(err(format!("agent {agent}: entries are 1-indexed")));
            }
            row.push(j - 1);
        }
        validate_row(n, agent - 1, &row).map_err(|m| err(m))?;
        if rows[agent - 1].replace(row).is_some() {
            return Err(err(format!("agent {agent} appears twice")));
        }
    }
    if let Some(missing) = rows.iter().position(Option::is_none) {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("no preference line for agent {}", missing + 1),
        });
    }
    let rows: Vec<Vec<usize>> = rows.into_iter().map(Option::unwrap).collect();
    PreferenceProfile::from_lists(&rows)
}

/// Canonical text form; `parse_instance(&serialize_instance(p)) == p`.
pub fn serialize_instance(p: &PreferenceProfile) -> String {
    let mut out = format!("{}\n", p.n);
    for i in 0..p.n {
        write!(out, "{}:", i + 1).unwrap();
        for &j in p.list(i) {
            write!(out, " {}", j + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn utilities_in_range_and_deterministic() {
        let a = sample_utilities(4, &mut RngStream::new(1, 0).rng()).unwrap();
        let b = sample_utilities(4, &mut RngStream::new(1, 0).rng()).unwrap();
        assert_eq!(a, b);
        let mut count = 0;
        for i in 0..4 {
            for j in (0..4).filter(|&j| j != i) {
                assert!((0.0..=1.0).contains(&a.get(i, j)));
                count += 1;
            }
        }
        assert_eq!(count, 12);
    }

    #[test]
    fn odd_or_small_sizes_rejected() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(matches!(sample_utilities(5, &mut rng), Err(Error::InvalidInstance(_))));
        assert!(matches!(sample_profile(2, &mut rng), Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn pooled_uniform_mean() {
        let mut rng = RngStream::new(3, 0).rng();
        let mut sum = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let u = sample_utilities(10, &mut rng).unwrap();
            for i in 0..10 {
                for j in (0..10).filter(|&j| j != i) {
                    sum += u.get(i, j);
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let sigma = (1.0f64 / 12.0).sqrt() / (count as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn ranking_sorts_ascending() {
        // Agent 1 row (X12, X13, X14) = (0.9, 0.1, 0.5) -> 3 > 4 > 2.
        let mut v = vec![0.0; 16];
        let rows = [[0.0, 0.9, 0.1, 0.5], [0.1, 0.0, 0.2, 0.3], [0.1, 0.2, 0.0, 0.3], [0.1, 0.2, 0.3, 0.0]];
        for i in 0..4 {
            for j in 0..4 {
                v[i * 4 + j] = rows[i][j];
            }
        }
        let p = rank_from_utilities(&UtilityMatrix::new(4, v).unwrap()).unwrap();
        assert_eq!(p.list(0), &[2, 3, 1]);
    }

    #[test]
    fn tie_rejected() {
        let mut v = vec![0.5; 16];
        v[1] = 0.2;
        v[2] = 0.2;
        assert!(matches!(UtilityMatrix::new(4, v), Err(Error::Tie { agent: 0, .. })));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut v: Vec<f64> = (0..16).map(|k| k as f64 / 20.0).collect();
        v[1] = 1.5;
        assert!(UtilityMatrix::new(4, v).is_err());
    }

    #[test]
    fn monotone_row_map_preserves_profile() {
        let mut rng = RngStream::new(9, 1).rng();
        let u = sample_utilities(8, &mut rng).unwrap();
        let mut w = u.u.clone();
        for j in 0..8 {
            if j != 3 {
                w[3 * 8 + j] = w[3 * 8 + j].powi(3) * 0.5;
            }
        }
        let p1 = rank_from_utilities(&u).unwrap();
        let p2 = rank_from_utilities(&UtilityMatrix::new(8, w).unwrap()).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn ranks_invert_lists() {
        let p = sample_profile(8, &mut RngStream::new(2, 2).rng()).unwrap();
        for i in 0..8 {
            for (r, &j) in p.list(i).iter().enumerate() {
                assert_eq!(p.rank(i, j as usize), r);
            }
        }
    }

    #[test]
    fn n4_orderings_uniform() {
        // Chi-square over the 3! orderings of agent 0, 1e5 draws.
        let mut rng = RngStream::new(11, 0).rng();
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            let p = sample_profile(4, &mut rng).unwrap();
            *counts.entry(p.list(0).to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let sigma = (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (k, &c) in &counts {
            assert!((c as f64 - expected).abs() < 4.0 * sigma, "{k:?}: {c}");
        }
    }

    #[test]
    fn parse_round_trip() {
        let text = "4\n1: 2 3 4\n2: 3 1 4\n3: 1 2 4\n4: 1 2 3\n";
        let p = parse_instance(text).unwrap();
        assert_eq!(serialize_instance(&p), text);
        assert_eq!(p.list(1), &[2, 0, 3]);
    }

    #[test]
    fn parse_errors_name_line_and_agent() {
        let err = parse_instance("4\n1: 2 2 3\n2: 3 1 4\n3: 1 2 4\n4: 1 2 3\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("agent 1") && message.contains("twice"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_instance("5\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_instance("x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_instance("4\n1: 2 3 4\n2: 3 1 4\n3: 1 2 4\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_instance("4\n1: 2 3\n2: 3 1 4\n3: 1 2 4\n4: 1 2 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
