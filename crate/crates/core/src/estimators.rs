//! Monte Carlo estimators built on the exact conditional identities for
//! stability.
//!
//! Conditioned on `x_i = X[i][Π(i)]`, the events "pair `(i, j)` does not block
//! Π" are independent with probabilities `1 - x_i x_j`, so
//! `P(Π stable | x) = ∏_{ij ∉ Π} (1 - x_i x_j)`. Integrating that product is
//! done by importance sampling with each `x_i` drawn from an exponential of
//! rate `√n` truncated to `[0, 1]`. Under this proposal the log-weight is
//! roughly `n/2 - (∑x_i - √n)^2 / 2`, so weights fluctuate by O(1).
//!
//! Estimators split their samples into fixed-size chunks, each chunk drawing
//! from its own child stream, so results do not depend on the thread count.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::double_factorial;
use crate::error::{Error, Result};
use crate::instances::{rank_from_utilities, PreferenceProfile, UtilityMatrix};
use crate::matchings::{orient, orientations, symmetric_difference, Matching};
use crate::rng::RngStream;

/// Samples per chunk; chunk `c` draws from `stream.child(c)`.
pub const CHUNK: usize = 256;

/// Minimum sample count for the importance estimators.
pub const MIN_SAMPLES: usize = 1000;

/// ESS below this fraction of the sample count flags the estimate.
pub const DEGENERACY_FRACTION: f64 = 0.01;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Log of a long product of factors in `[0, 1]`: factors are multiplied in
/// blocks and only the block products go through `ln`, which is far cheaper
/// than one `ln_1p` per factor and accurate to a few ulps per block.
#[derive(Debug, Clone, Copy)]
struct LogProduct {
    block: f64,
    len: u32,
    logs: CompensatedSum,
    zero: bool,
}

impl LogProduct {
    const BLOCK: u32 = 32;

    fn new() -> Self {
        Self {
            block: 1.0,
            len: 0,
            logs: CompensatedSum::default(),
            zero: false,
        }
    }

    /// Multiplies by `1 - p`.
    #[inline]
    fn push(&mut self, p: f64) {
        if p >= 1.0 {
            self.zero = true;
        }
        self.block *= 1.0 - p;
        self.len += 1;
        if self.len == Self::BLOCK || self.block < 1e-250 {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.len > 0 {
            self.logs.add(self.block.ln());
            self.block = 1.0;
            self.len = 0;
        }
    }

    fn value(mut self) -> f64 {
        self.flush();
        if self.zero {
            f64::NEG_INFINITY
        } else {
            self.logs.value()
        }
    }
}

/// `x_i = X[i][Π(i)]` for a reference matching.
#[derive(Debug, Clone, PartialEq)]
pub struct XVector {
    pub x: Vec<f64>,
    pub reference: Matching,
}

impl XVector {
    pub fn new(x: Vec<f64>, reference: Matching) -> Result<Self> {
        if x.len() != reference.n() {
            return Err(Error::SizeMismatch {
                expected: reference.n(),
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!("x[{i}] = {} outside [0, 1]", x[i])));
        }
        Ok(Self { x, reference })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// A Monte Carlo estimate. `ess` is the effective sample size of the
/// self-normalized weights, `(∑w)^2 / ∑w^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub ess: f64,
    /// Set when `ess < 0.01 * samples`.
    pub degenerate: bool,
}

impl Estimate {
    fn new(mean: f64, stderr: f64, samples: usize, ess: f64) -> Self {
        Self {
            mean,
            stderr,
            samples,
            ess,
            degenerate: ess < DEGENERACY_FRACTION * samples as f64,
        }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// `log ∏_{ij ∉ Π} (1 - x_i x_j)`, `-∞` if a factor vanishes.
pub fn stability_product_log(x: &XVector) -> f64 {
    let (x, pi) = (&x.x, &x.reference);
    let n = x.len();
    let mut acc = LogProduct::new();
    for i in 0..n {
        let skip = pi.partner(i);
        let xi = x[i];
        for j in i + 1..n {
            if j != skip {
                acc.push(xi * x[j]);
            }
        }
    }
    acc.value()
}

/// Log of the joint-stability integrand for `Π = x.reference` and
/// `Π1 = y.reference`:
/// `∏_{ij ∉ Π ∪ Π1} (1 - x_i x_j - y_i y_j + (x_i ∧ y_i)(x_j ∧ y_j))`.
///
/// Returns `None` when `(x, y)` fails to alternate around some cycle of
/// `Π △ Π1` (or ties there), where the joint probability is zero.
pub fn two_point_kernel_log(x: &XVector, y: &XVector) -> Result<Option<f64>> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: y.n(),
        });
    }
    let (pi, pi1) = (&x.reference, &y.reference);
    for i in 0..n {
        if pi.partner(i) == pi1.partner(i) && x.x[i] != y.x[i] {
            return Err(Error::domain(format!(
                "y[{i}] must equal x[{i}] off the difference vertices"
            )));
        }
    }
    match orient(pi, pi1, &x.x, &y.x) {
        Ok(o) if o.valid => {}
        Ok(_) | Err(Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    }
    let (xv, yv) = (&x.x, &y.x);
    let mut acc = LogProduct::new();
    for i in 0..n {
        let (s0, s1) = (pi.partner(i), pi1.partner(i));
        let (xi, yi) = (xv[i], yv[i]);
        let mi = xi.min(yi);
        for j in i + 1..n {
            if j == s0 || j == s1 {
                continue;
            }
            let (xj, yj) = (xv[j], yv[j]);
            acc.push(xi * xj + (yi * yj - mi * xj.min(yj)));
        }
    }
    Ok(Some(acc.value()))
}

/// Exponential of the given rate truncated to `[0, upper]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedExp {
    rate: f64,
    upper: f64,
    /// `log(1 - e^{-rate * upper})`.
    log_mass: f64,
}

impl TruncatedExp {
    pub fn new(rate: f64, upper: f64) -> Self {
        Self {
            rate,
            upper,
            log_mass: (-(-rate * upper).exp_m1()).ln(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // Inverse CDF of the truncated law.
        let v = -(-u * -(-self.rate * self.upper).exp_m1()).ln_1p() / self.rate;
        v.min(self.upper)
    }

    #[inline]
    pub fn log_density(&self, v: f64) -> f64 {
        self.rate.ln() - self.rate * v - self.log_mass
    }
}

/// Default proposal rate, `√n`.
pub fn default_rate(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// Draws `x` from the product proposal; returns `(x, log q(x))`.
pub fn sample_proposal<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> (Vec<f64>, f64) {
    let d = TruncatedExp::new(rate, 1.0);
    let mut log_q = 0.0;
    let x: Vec<f64> = (0..n)
        .map(|_| {
            let v = d.sample(rng);
            log_q += d.log_density(v);
            v
        })
        .collect();
    (x, log_q)
}

/// One draw of `x` with its unnormalized log-weight
/// `log ∏(1 - x_i x_j) - log q(x)` against the conditional law given Π stable.
pub fn sample_conditional_x<R: Rng + ?Sized>(pi: &Matching, rate: f64, rng: &mut R) -> (XVector, f64) {
    let (x, log_q) = sample_proposal(pi.n(), rate, rng);
    let xv = XVector {
        x,
        reference: pi.clone(),
    };
    let lw = stability_product_log(&xv) - log_q;
    (xv, lw)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Runs `f(rng, count)` over fixed-size chunks in parallel, concatenating the
/// per-chunk outputs in chunk order.
fn chunked<T: Send, F>(samples: usize, stream: &RngStream, f: F) -> Vec<T>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, usize) -> Vec<T> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            f(&mut stream.child(c as u64).rng(), count)
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Mean, standard error and ESS of `exp(log_w)` without overflow.
fn summarize_log_weights(log_w: &[f64]) -> Estimate {
    let s = log_w.len();
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Estimate::new(0.0, 0.0, s, 0.0);
    }
    let w: Vec<f64> = log_w.iter().map(|&l| (l - shift).exp()).collect();
    let (mut sum, mut sq) = (CompensatedSum::default(), CompensatedSum::default());
    for &v in &w {
        sum.add(v);
        sq.add(v * v);
    }
    let (sum, sq) = (sum.value(), sq.value());
    let mean = sum / s as f64;
    let var = (sq / s as f64 - mean * mean).max(0.0) * s as f64 / (s as f64 - 1.0);
    let scale = shift.exp();
    Estimate::new(mean * scale, (var / s as f64).sqrt() * scale, s, sum * sum / sq)
}

/// Importance estimate of `E[X] = (n-1)!! ∫ ∏_{ij ∉ Π} (1 - x_i x_j) dx`.
pub fn estimate_expected_x(n: usize, samples: usize, stream: &RngStream) -> Result<Estimate> {
    estimate_expected_x_with_rate(n, samples, stream, default_rate(n))
}

pub fn estimate_expected_x_with_rate(
    n: usize,
    samples: usize,
    stream: &RngStream,
    rate: f64,
) -> Result<Estimate> {
    check_samples(samples)?;
    let pi = Matching::consecutive(n)?;
    let log_count = double_factorial(n as u64 - 1).log_value;
    let log_w = chunked(samples, stream, |rng, count| {
        (0..count)
            .map(|_| log_count + sample_conditional_x(&pi, rate, rng).1)
            .collect()
    });
    Ok(summarize_log_weights(&log_w))
}

/// Self-normalized weighted mean of `values` with delta-method standard
/// error.
pub fn weighted_mean(log_w: &[f64], values: &[f64]) -> Estimate {
    let s = log_w.len();
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|&l| (l - shift).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let mean = w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / sw;
    let var = w
        .iter()
        .zip(values)
        .map(|(w, v)| (w * (v - mean)).powi(2))
        .sum::<f64>()
        / (sw * sw);
    Estimate::new(mean, var.sqrt(), s, sw * sw / sw2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPointEstimate {
    /// `P(Π1 | Π) / (2^μ n^{-|Π1 \ Π|})`; the target is 1.
    pub normalized: Estimate,
    /// The raw conditional probability `P(Π1 | Π)`.
    pub probability: f64,
    pub probability_stderr: f64,
    pub mu: usize,
    pub new_edges: usize,
    /// ESS of the numerator weights.
    pub ess_numerator: f64,
    /// Set when `|Π △ Π1| > n^{1/4}`.
    pub outside_regime: bool,
}

/// Estimates `P(Π1 stable | Π stable)` as a ratio of importance estimates
/// sharing the same `x` draws.
///
/// For each `x` and each of the `2^μ` orientations `(A, B)` of `Π △ Π1`, one
/// `y` is drawn on the difference vertices: uniform on `(0, x_i)` for
/// `i ∈ A`, and `x_i` plus an exponential of rate `∑_{j ∉ V} x_j` (truncated
/// at 1) for `i ∈ B`. The numerator weight is the joint integrand over the
/// product `∏_{ij ∉ Π}(1 - x_i x_j)` times the stability weight of `x`, with
/// the `y` proposal density divided out.
pub fn estimate_conditional_two_point(
    pi: &Matching,
    pi1: &Matching,
    samples: usize,
    stream: &RngStream,
) -> Result<TwoPointEstimate> {
    check_samples(samples)?;
    let n = pi.n();
    let d = symmetric_difference(pi, pi1)?;
    let vertices = d.vertex_set();
    let mu = d.mu();
    let new_edges = d.edge_count() / 2;
    let orients: Vec<(Vec<usize>, Vec<usize>)> = orientations(&d).collect();
    let mut in_v = vec![false; n];
    for &v in &vertices {
        in_v[v] = true;
    }
    let rate = default_rate(n);

    let draws: Vec<(f64, f64)> = chunked(samples, stream, |rng, count| {
        let mut y = vec![0.0; n];
        (0..count)
            .map(|_| {
                let (x, lw0) = sample_conditional_x(pi, rate, rng);
                if vertices.is_empty() {
                    return (lw0, lw0);
                }
                let x = &x.x;
                let outside: f64 = (0..n).filter(|&j| !in_v[j]).map(|j| x[j]).sum();
                let mut terms = Vec::with_capacity(orients.len());
                for (a, b) in &orients {
                    y.copy_from_slice(x);
                    let mut log_qy = 0.0;
                    for &i in a {
                        y[i] = x[i] * rng.random::<f64>();
                        log_qy -= x[i].ln();
                    }
                    for &i in b {
                        let tail = TruncatedExp::new(outside, 1.0 - x[i]);
                        let step = tail.sample(rng);
                        y[i] = x[i] + step;
                        log_qy += tail.log_density(step);
                    }
                    let lk = local_kernel_ratio_log(pi, pi1, &vertices, x, &y);
                    terms.push(lw0 + lk - log_qy);
                }
                (lw0, log_sum_exp(&terms))
            })
            .collect()
    });

    let shift = draws
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold(f64::NEG_INFINITY, f64::max);
    let den: Vec<f64> = draws.iter().map(|&(a, _)| (a - shift).exp()).collect();
    let num: Vec<f64> = draws.iter().map(|&(_, b)| (b - shift).exp()).collect();
    let (sd, sn): (f64, f64) = (den.iter().sum(), num.iter().sum());
    let ratio = sn / sd;
    let resid: f64 = num
        .iter()
        .zip(&den)
        .map(|(nu, de)| (nu - ratio * de).powi(2))
        .sum();
    let stderr = resid.sqrt() / sd;
    let ess_den = sd * sd / den.iter().map(|v| v * v).sum::<f64>();
    let ess_num = sn * sn / num.iter().map(|v| v * v).sum::<f64>();
    let target = (mu as f64) * std::f64::consts::LN_2 - new_edges as f64 * (n as f64).ln();
    let target = target.exp();
    Ok(TwoPointEstimate {
        normalized: Estimate::new(ratio / target, stderr / target, samples, ess_den.min(ess_num)),
        probability: ratio,
        probability_stderr: stderr,
        mu,
        new_edges,
        ess_numerator: ess_num,
        outside_regime: d.edge_count() as f64 > (n as f64).powf(0.25),
    })
}

/// `log` of the joint integrand divided by `∏_{ij ∉ Π}(1 - x_i x_j)`. Only
/// pairs touching the difference vertices contribute.
fn local_kernel_ratio_log(pi: &Matching, pi1: &Matching, vertices: &[usize], x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut kernel = LogProduct::new();
    let mut base_product = LogProduct::new();
    let mut in_v = vec![false; n];
    for &v in vertices {
        in_v[v] = true;
    }
    for &i in vertices {
        let (xi, yi) = (x[i], y[i]);
        let mi = xi.min(yi);
        for j in 0..n {
            if j == i || (in_v[j] && j < i) {
                continue;
            }
            let base = xi * x[j];
            if j != pi.partner(i) {
                base_product.push(base);
            }
            if j != pi.partner(i) && j != pi1.partner(i) {
                kernel.push(base + (yi * y[j] - mi * x[j].min(y[j])));
            }
        }
    }
    let base = base_product.value();
    if base == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    kernel.value() - base
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()
}

/// A profile drawn from the law of preferences conditioned on `Π` being
/// stable, as a weighted sample.
#[derive(Debug, Clone)]
pub struct ConditionalInstance {
    pub profile: PreferenceProfile,
    pub utilities: UtilityMatrix,
    pub x: XVector,
    /// Unnormalized log importance weight; normalize across the ensemble.
    pub log_weight: f64,
}

/// Draws a weighted instance in which `pi` is stable.
///
/// `x` comes from the importance proposal. Each non-matched pair then gets
/// `(X[i][j], X[j][i])` uniform on the unit square minus `[0, x_i) × [0, x_j)`,
/// which is exactly the conditional law of the pair given that it does not
/// block. The region is sampled directly as the union of the strip
/// `X[i][j] >= x_i` and the box `X[i][j] < x_i, X[j][i] >= x_j`.
pub fn sample_instance_given_stable<R: Rng + ?Sized>(
    pi: &Matching,
    rng: &mut R,
) -> Result<ConditionalInstance> {
    sample_instance_given_stable_with_rate(pi, default_rate(pi.n()), rng)
}

pub fn sample_instance_given_stable_with_rate<R: Rng + ?Sized>(
    pi: &Matching,
    rate: f64,
    rng: &mut R,
) -> Result<ConditionalInstance> {
    let n = pi.n();
    if n < crate::instances::MIN_AGENTS {
        return Err(Error::InvalidInstance(format!("need n >= 4, got {n}")));
    }
    let (x, log_weight) = sample_conditional_x(pi, rate, rng);
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        u[i * n + pi.partner(i)] = x.x[i];
        for j in i + 1..n {
            if j == pi.partner(i) {
                continue;
            }
            let (xi, xj) = (x.x[i], x.x[j]);
            let strip = 1.0 - xi;
            let corner = xi * (1.0 - xj);
            let pick: f64 = rng.random::<f64>() * (strip + corner);
            let (a, b) = if pick < strip {
                (xi + (1.0 - xi) * rng.random::<f64>(), rng.random::<f64>())
            } else {
                (xi * rng.random::<f64>(), xj + (1.0 - xj) * rng.random::<f64>())
            };
            u[i * n + j] = a;
            u[j * n + i] = b;
        }
    }
    let utilities = UtilityMatrix::from_raw(n, u);
    let profile = rank_from_utilities(&utilities)?;
    Ok(ConditionalInstance {
        profile,
        utilities,
        x,
        log_weight,
    })
}

/// The four statistics of the quasirandomness event on `x` and whether each
/// is within its window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GPiReport {
    pub n: usize,
    /// `∑ x_i`, window `|· - √n| <= 10 ln n`.
    pub sum: f64,
    /// `max x_i`, window `<= ln²n / √n`.
    pub max: f64,
    /// `∑_{(i,j) ∈ Π} x_i x_j` over the n/2 pairs, window `|· - 1/2| <= n^{-1/3}`.
    pub pair_sum: f64,
    /// `∑ x_i²`, window `|· - 2| <= n^{-1/3}`.
    pub square_sum: f64,
    pub sum_ok: bool,
    pub max_ok: bool,
    pub pair_ok: bool,
    pub square_ok: bool,
    pub scaling: &'static str,
}

impl GPiReport {
    pub fn holds(&self) -> bool {
        self.sum_ok && self.max_ok && self.pair_ok && self.square_ok
    }
}

pub const G_PI_SCALING: &str =
    "unscaled: statistics of x in [0,1]^n; each pair of the reference matching counted once";

pub fn check_g_pi(x: &XVector) -> GPiReport {
    let n = x.n();
    let nf = n as f64;
    let ln = nf.ln();
    let sum: f64 = x.x.iter().sum();
    let max = x.x.iter().copied().fold(0.0, f64::max);
    let pair_sum: f64 = x
        .reference
        .pairs()
        .into_iter()
        .map(|(a, b)| x.x[a] * x.x[b])
        .sum();
    let square_sum: f64 = x.x.iter().map(|v| v * v).sum();
    let tol = nf.powf(-1.0 / 3.0);
    GPiReport {
        n,
        sum,
        max,
        pair_sum,
        square_sum,
        sum_ok: (sum - nf.sqrt()).abs() <= 10.0 * ln,
        max_ok: max <= ln * ln / nf.sqrt(),
        pair_ok: (pair_sum - 0.5).abs() <= tol,
        square_ok: (square_sum - 2.0).abs() <= tol,
        scaling: G_PI_SCALING,
    }
}

/// Weighted frequency of the four sub-events and of their conjunction under
/// the conditional law given Π stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GPiFrequency {
    pub all: Estimate,
    pub sum: Estimate,
    pub max: Estimate,
    pub pair: Estimate,
    pub square: Estimate,
}

pub fn estimate_g_pi_frequency(n: usize, samples: usize, stream: &RngStream) -> Result<GPiFrequency> {
    check_samples(samples)?;
    let pi = Matching::consecutive(n)?;
    let rate = default_rate(n);
    let draws: Vec<(f64, GPiReport)> = chunked(samples, stream, |rng, count| {
        (0..count)
            .map(|_| {
                let (x, lw) = sample_conditional_x(&pi, rate, rng);
                (lw, check_g_pi(&x))
            })
            .collect()
    });
    let lw: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let freq = |f: &dyn Fn(&GPiReport) -> bool| {
        let v: Vec<f64> = draws.iter().map(|d| f(&d.1) as u8 as f64).collect();
        weighted_mean(&lw, &v)
    };
    Ok(GPiFrequency {
        all: freq(&|r| r.holds()),
        sum: freq(&|r| r.sum_ok),
        max: freq(&|r| r.max_ok),
        pair: freq(&|r| r.pair_ok),
        square: freq(&|r| r.square_ok),
    })
}

/// Largest `n` accepted by [`exact_small_integral`].
pub const EXACT_INTEGRAL_LIMIT: usize = 10;

/// `∫_{[0,1]^n} ∏_{j ∈ B1} x_j ∏_{j ∈ B2} x_j² ∏_{ij ∉ Π} (1 - x_i x_j) dx`
/// as an exact rational.
///
/// Expands the product edge by edge, tracking for each monomial only the
/// exponents of vertices with unprocessed edges; a vertex is integrated out
/// (`x^d -> 1/(d+1)`) as soon as its last edge has been expanded.
pub fn exact_small_integral(pi: &Matching, b1: &[usize], b2: &[usize]) -> Result<BigRational> {
    let n = pi.n();
    if n > EXACT_INTEGRAL_LIMIT {
        return Err(Error::ResourceCap(format!(
            "exact integration limited to n <= {EXACT_INTEGRAL_LIMIT}, got {n}"
        )));
    }
    let mut extra = vec![0u8; n];
    for &j in b1 {
        if j >= n || extra[j] != 0 {
            return Err(Error::domain(format!("bad or repeated B1 vertex {j}")));
        }
        extra[j] = 1;
    }
    for &j in b2 {
        if j >= n || extra[j] != 0 {
            return Err(Error::domain(format!("B2 vertex {j} invalid or not disjoint from B1")));
        }
        extra[j] = 2;
    }
    let mut states: HashMap<Vec<u8>, BigInt> = HashMap::new();
    states.insert(extra, BigInt::one());
    // Exponent vectors carry integer coefficients over a common denominator.
    let mut denom = BigInt::one();
    for v in 0..n {
        for u in v + 1..n {
            if u == pi.partner(v) {
                continue;
            }
            let mut next: HashMap<Vec<u8>, BigInt> = HashMap::with_capacity(states.len() * 2);
            for (key, c) in states {
                let mut taken = key.clone();
                taken[v] += 1;
                taken[u] += 1;
                *next.entry(taken).or_insert_with(BigInt::zero) -= &c;
                *next.entry(key).or_insert_with(BigInt::zero) += c;
            }
            next.retain(|_, c| !c.is_zero());
            states = next;
        }
        // All edges at v are expanded: integrate x_v out.
        let l = (1..=(n + 2) as u64).fold(BigInt::one(), |acc, k| acc.lcm(&BigInt::from(k)));
        denom *= &l;
        let mut next: HashMap<Vec<u8>, BigInt> = HashMap::with_capacity(states.len());
        for (mut key, c) in states {
            let d = key[v] as u64 + 1;
            key[v] = 0;
            *next.entry(key).or_insert_with(BigInt::zero) += c * (&l / BigInt::from(d));
        }
        next.retain(|_, c| !c.is_zero());
        states = next;
    }
    let total: BigInt = states.into_values().sum();
    Ok(BigRational::new(total, denom))
}

/// `P(Π stable)` for the reference matching at tiny `n`, exactly.
pub fn exact_stability_probability(n: usize) -> Result<BigRational> {
    exact_small_integral(&Matching::consecutive(n)?, &[], &[])
}
