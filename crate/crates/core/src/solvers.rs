//! Deciding existence (Irving's two-phase algorithm) and exhaustively
//! counting stable matchings.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instances::PreferenceProfile;
use crate::matchings::{is_stable, symmetric_difference, Matching};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Found(Matching),
    NoneExists,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub outcome: Outcome,
    pub phase1_proposals: u64,
    pub eliminated_rotations: u64,
}

impl SolveResult {
    pub fn exists(&self) -> bool {
        matches!(self.outcome, Outcome::Found(_))
    }
}

/// Irving's reduced preference table: `alive[i*n + j]` marks `j` as still on
/// `i`'s list. Deletions are always symmetric.
struct Table<'a> {
    p: &'a PreferenceProfile,
    n: usize,
    alive: Vec<bool>,
    len: Vec<usize>,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl<'a> Table<'a> {
    fn new(p: &'a PreferenceProfile) -> Self {
        let n = p.n();
        let mut alive = vec![true; n * n];
        for i in 0..n {
            alive[i * n + i] = false;
        }
        Self {
            p,
            n,
            alive,
            len: vec![n - 1; n],
            lo: vec![0; n],
            hi: vec![n - 1; n],
        }
    }

    #[inline]
    fn is_alive(&self, i: usize, j: usize) -> bool {
        self.alive[i * self.n + j]
    }

    fn delete(&mut self, i: usize, j: usize) {
        if self.is_alive(i, j) {
            self.alive[i * self.n + j] = false;
            self.alive[j * self.n + i] = false;
            self.len[i] -= 1;
            self.len[j] -= 1;
        }
    }

    fn first(&mut self, i: usize) -> Option<usize> {
        let list = self.p.list(i);
        while self.lo[i] < self.hi[i] {
            let j = list[self.lo[i]] as usize;
            if self.is_alive(i, j) {
                return Some(j);
            }
            self.lo[i] += 1;
        }
        None
    }

    fn last(&mut self, i: usize) -> Option<usize> {
        let list = self.p.list(i);
        while self.hi[i] > self.lo[i] {
            let j = list[self.hi[i] - 1] as usize;
            if self.is_alive(i, j) {
                return Some(j);
            }
            self.hi[i] -= 1;
        }
        None
    }

    fn second(&mut self, i: usize) -> Option<usize> {
        self.first(i)?;
        let list = self.p.list(i);
        (self.lo[i] + 1..self.hi[i])
            .map(|r| list[r] as usize)
            .find(|&j| self.is_alive(i, j))
    }

    /// `i` drops everyone it ranks below `j`.
    fn truncate_after(&mut self, i: usize, j: usize) {
        let list = self.p.list(i);
        let cut = self.p.rank(i, j) + 1;
        for r in cut..self.hi[i] {
            self.delete(i, list[r] as usize);
        }
        self.hi[i] = self.hi[i].min(cut);
    }
}

/// Decides whether `p` admits a stable matching.
///
/// Phase 1 runs proposals in FIFO order starting from agent 0; an agent
/// holding a proposal from `x` drops everyone it ranks below `x`. Phase 2
/// repeatedly starts the rotation hunt at the lowest-index agent whose list
/// still has two or more entries and eliminates the rotation found. An empty
/// list at any point means no stable matching exists.
pub fn irving_solve(p: &PreferenceProfile) -> SolveResult {
    let n = p.n();
    let mut t = Table::new(p);
    let mut proposals = 0u64;
    let mut rotations = 0u64;
    let none = |proposals, rotations| SolveResult {
        outcome: Outcome::NoneExists,
        phase1_proposals: proposals,
        eliminated_rotations: rotations,
    };

    // Phase 1.
    let mut holder: Vec<Option<usize>> = vec![None; n];
    let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
    while let Some(x) = queue.pop_front() {
        let Some(y) = t.first(x) else {
            return none(proposals, rotations);
        };
        proposals += 1;
        let old = holder[y].replace(x);
        t.truncate_after(y, x);
        if let Some(old) = old {
            if old != x {
                queue.push_back(old);
            }
        }
    }
    if t.len.iter().any(|&l| l == 0) {
        return none(proposals, rotations);
    }

    // Phase 2.
    loop {
        let Some(start) = (0..n).find(|&i| t.len[i] >= 2) else {
            break;
        };
        let mut seq: Vec<usize> = vec![start];
        let mut pos = vec![usize::MAX; n];
        pos[start] = 0;
        let cycle_start = loop {
            let cur = *seq.last().unwrap();
            let q = t.second(cur).expect("list of length >= 2 has a second entry");
            let next = t.last(q).expect("non-empty list");
            if pos[next] != usize::MAX {
                break pos[next];
            }
            pos[next] = seq.len();
            seq.push(next);
        };
        let xs = &seq[cycle_start..];
        let seconds: Vec<usize> = xs.iter().map(|&x| t.second(x).unwrap()).collect();
        for (&x, &y_next) in xs.iter().zip(&seconds) {
            t.truncate_after(y_next, x);
        }
        rotations += 1;
        if t.len.iter().any(|&l| l == 0) {
            return none(proposals, rotations);
        }
    }

    let partner: Vec<usize> = (0..n).map(|i| t.first(i).unwrap()).collect();
    match Matching::new(partner) {
        Ok(m) => {
            debug_assert!(is_stable(p, &m).unwrap());
            SolveResult {
                outcome: Outcome::Found(m),
                phase1_proposals: proposals,
                eliminated_rotations: rotations,
            }
        }
        Err(_) => none(proposals, rotations),
    }
}

/// Default largest `n` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    /// Stop after this many stable matchings. Lifts the size cap.
    pub limit: Option<usize>,
    pub cap: usize,
    pub materialize: bool,
    /// Reference matching for the per-distance histogram.
    pub reference: Option<Matching>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            limit: None,
            cap: DEFAULT_ENUMERATION_CAP,
            materialize: true,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusResult {
    /// Number of stable matchings found.
    pub x: u64,
    pub stable_list: Option<Vec<Matching>>,
    /// Counts keyed by `(μ, total cycle length)` of the difference with the
    /// reference matching.
    pub per_distance: BTreeMap<(usize, usize), u64>,
    /// True when the search stopped at `limit`.
    pub truncated: bool,
}

/// Counts stable matchings by depth-first search.
///
/// The lowest unmatched agent is matched next; a branch is cut as soon as two
/// already-matched agents form a blocking pair, since that pair blocks every
/// completion. This uses no preference-table reduction.
pub fn enumerate_stable(p: &PreferenceProfile, opts: &EnumerateOptions) -> Result<CensusResult> {
    let n = p.n();
    if opts.limit.is_none() && n > opts.cap {
        return Err(Error::ResourceCap(format!(
            "exhaustive enumeration capped at n = {}, got {n}",
            opts.cap
        )));
    }
    if let Some(r) = &opts.reference {
        if r.n() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: r.n(),
            });
        }
    }
    let mut search = Search {
        p,
        opts,
        partner: vec![usize::MAX; n],
        matched: Vec::with_capacity(n),
        result: CensusResult {
            x: 0,
            stable_list: opts.materialize.then(Vec::new),
            per_distance: BTreeMap::new(),
            truncated: false,
        },
    };
    search.run();
    Ok(search.result)
}

struct Search<'a> {
    p: &'a PreferenceProfile,
    opts: &'a EnumerateOptions,
    partner: Vec<usize>,
    matched: Vec<usize>,
    result: CensusResult,
}

impl Search<'_> {
    /// Whether pairing `a` with `b` creates a blocker among matched agents.
    fn creates_blocker(&self, a: usize, b: usize) -> bool {
        let p = self.p;
        for &c in &self.matched {
            let pc = self.partner[c];
            if p.prefers(a, c, b) && p.prefers(c, a, pc) {
                return true;
            }
            if p.prefers(b, c, a) && p.prefers(c, b, pc) {
                return true;
            }
        }
        false
    }

    fn run(&mut self) -> bool {
        let Some(i) = self.partner.iter().position(|&q| q == usize::MAX) else {
            let m = Matching::new(self.partner.clone()).expect("complete search state");
            self.result.x += 1;
            if let Some(r) = &self.opts.reference {
                let key = symmetric_difference(r, &m).unwrap().key();
                *self.result.per_distance.entry(key).or_insert(0) += 1;
            }
            if let Some(list) = &mut self.result.stable_list {
                list.push(m);
            }
            if self.opts.limit.is_some_and(|l| self.result.x as usize >= l) {
                self.result.truncated = true;
                return true;
            }
            return false;
        };
        for j in i + 1..self.partner.len() {
            if self.partner[j] != usize::MAX || self.creates_blocker(i, j) {
                continue;
            }
            self.partner[i] = j;
            self.partner[j] = i;
            self.matched.push(i);
            self.matched.push(j);
            let stop = self.run();
            self.matched.truncate(self.matched.len() - 2);
            self.partner[i] = usize::MAX;
            self.partner[j] = usize::MAX;
            if stop {
                return true;
            }
        }
        false
    }
}

/// Stable matchings that differ from a stable `pi` by one cycle of
/// half-length at most `nu_cap`, each returned once.
///
/// If both `pi` and a neighbor are stable, every vertex of the difference
/// cycle either improves (new partner preferred) or worsens, and the two
/// kinds alternate around the cycle. The search walks the cycle from its
/// smallest improving vertex `a_1`: each improving `a_k` picks a new partner
/// `b_k` it prefers to `pi(a_k)`, subject to `b_k` preferring `pi(b_k)` to
/// `a_k`, and the walk continues from `a_{k+1} = pi(b_k)`. The cycle closes
/// when `b_k = pi(a_1)`. Closed candidates get a full stability check.
pub fn stable_cycle_neighbors(
    p: &PreferenceProfile,
    pi: &Matching,
    nu_cap: usize,
) -> Result<Vec<Matching>> {
    if !is_stable(p, pi)? {
        return Err(Error::domain("reference matching is not stable"));
    }
    let n = p.n();
    let nu_cap = nu_cap.min(n / 2);
    let mut out = Vec::new();
    let mut on_path = vec![false; n];
    let mut path: Vec<(usize, usize)> = Vec::new();
    for a1 in 0..n {
        on_path[a1] = true;
        on_path[pi.partner(a1)] = true;
        extend(p, pi, a1, a1, nu_cap, &mut on_path, &mut path, &mut out);
        on_path[a1] = false;
        on_path[pi.partner(a1)] = false;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    p: &PreferenceProfile,
    pi: &Matching,
    a1: usize,
    a: usize,
    nu_cap: usize,
    on_path: &mut [bool],
    path: &mut Vec<(usize, usize)>,
    out: &mut Vec<Matching>,
) {
    let closing = pi.partner(a1);
    let depth = path.len() + 1;
    let pa = pi.partner(a);
    for &b in &p.list(a)[..p.rank(a, pa)] {
        let b = b as usize;
        let pb = pi.partner(b);
        if !p.prefers(b, pb, a) {
            continue;
        }
        if b == closing {
            if depth >= 2 {
                path.push((a, b));
                let mut partner = pi.partners().to_vec();
                for &(u, v) in path.iter() {
                    partner[u] = v;
                    partner[v] = u;
                }
                let m = Matching::new(partner).expect("alternating cycle");
                if is_stable(p, &m).unwrap() {
                    out.push(m);
                }
                path.pop();
            }
            continue;
        }
        // The next improving vertex is pi(b); a_1 must be the smallest.
        if on_path[b] || pb < a1 || depth >= nu_cap {
            continue;
        }
        on_path[b] = true;
        on_path[pb] = true;
        path.push((a, b));
        extend(p, pi, a1, pb, nu_cap, on_path, path, out);
        path.pop();
        on_path[b] = false;
        on_path[pb] = false;
    }
}
