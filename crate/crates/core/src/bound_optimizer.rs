//! The exponent `t★` of the first-moment bound on `P(X >= 1)`.
//!
//! `t★ = max min{γ ln 2, 1 - 4α, α(1 - e^{-s}) - sγ, 1/3 - α(1 - e^{-s}) - sγ}`
//! over `α ∈ [0, 1/4]`, `γ >= 0`, `s >= 0`. Equating the first three terms
//! gives `γ = g(s) α` with `g(s) = (1 - e^{-s}) / (ln 2 + s)` and
//! `α = 1 / (4 + g(s) ln 2)`; the value increases with `g`, whose maximizer
//! solves `(s + ln 2 + 1) e^{-s} = 1`, i.e. `s = -W(-1/(2e)) - 1 - ln 2`.
//! Only the `W₋₁` branch makes `s` positive.

use std::f64::consts::{E, LN_2};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-12;

/// The four terms of the max-min objective.
pub fn objective_terms(alpha: f64, gamma: f64, s: f64) -> [f64; 4] {
    let c = -(-s).exp_m1();
    [
        gamma * LN_2,
        1.0 - 4.0 * alpha,
        alpha * c - s * gamma,
        1.0 / 3.0 - alpha * c - s * gamma,
    ]
}

pub fn objective(alpha: f64, gamma: f64, s: f64) -> Result<f64> {
    if !(0.0..=0.25).contains(&alpha) || !(gamma >= 0.0) || !(s >= 0.0) {
        return Err(Error::domain(format!(
            "need alpha in [0, 1/4], gamma >= 0, s >= 0; got ({alpha}, {gamma}, {s})"
        )));
    }
    Ok(objective_terms(alpha, gamma, s).into_iter().fold(f64::INFINITY, f64::min))
}

fn halley(z: f64, mut w: f64) -> f64 {
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs();
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Series start near the branch point: `p = sqrt(2(1 + e z))`,
/// `W ≈ -1 ± p - p²/3`.
fn branch_point_guess(z: f64, sign: f64) -> f64 {
    let p = (2.0 * (1.0 + E * z)).max(0.0).sqrt();
    -1.0 + sign * p - p * p / 3.0
}

fn check_residual(w: f64, z: f64) -> Result<f64> {
    let r = (w * w.exp() - z).abs();
    if r > RESIDUAL_TOL {
        return Err(Error::domain(format!("Lambert W did not converge at z = {z}: residual {r:e}")));
    }
    Ok(w)
}

/// Lower real branch `W₋₁` on `[-1/e, 0)`: the solution `w <= -1` of
/// `w e^w = z`.
pub fn lambert_w_branch_minus1(z: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !(z >= branch && z < 0.0) {
        return Err(Error::domain(format!("W-1 is defined on [-1/e, 0), got {z}")));
    }
    if z == branch {
        return Ok(-1.0);
    }
    let guess = if 1.0 + E * z < 0.25 {
        branch_point_guess(z, -1.0)
    } else {
        let l = (-z).ln();
        l - (-l).ln()
    };
    check_residual(halley(z, guess).min(-1.0), z)
}

/// Principal branch `W₀` on `[-1/e, ∞)`.
pub fn lambert_w0(z: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !(z >= branch) || !z.is_finite() {
        return Err(Error::domain(format!("W0 is defined on [-1/e, inf), got {z}")));
    }
    if z == branch {
        return Ok(-1.0);
    }
    let guess = if 1.0 + E * z < 0.25 {
        branch_point_guess(z, 1.0)
    } else {
        z.ln_1p()
    };
    let w = halley(z, guess).max(-1.0);
    let r = (w * w.exp() - z).abs();
    if r > RESIDUAL_TOL * z.abs().max(1.0) {
        return Err(Error::domain(format!("Lambert W did not converge at z = {z}: residual {r:e}")));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TStarSolution {
    pub s: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub t_star: f64,
    pub objective_terms: [f64; 4],
}

impl TStarSolution {
    fn at(alpha: f64, gamma: f64, s: f64) -> Self {
        let terms = objective_terms(alpha, gamma, s);
        Self {
            s,
            alpha,
            gamma,
            t_star: terms.iter().copied().fold(f64::INFINITY, f64::min),
            objective_terms: terms,
        }
    }
}

/// `s` from a given branch value `w = W(-1/(2e))`.
pub fn s_from_branch(w: f64) -> f64 {
    -w - 1.0 - LN_2
}

pub fn tstar_closed_form() -> TStarSolution {
    let w = lambert_w_branch_minus1(-1.0 / (2.0 * E)).expect("-1/(2e) lies in the domain");
    let s = s_from_branch(w);
    let g = -(-s).exp_m1() / (LN_2 + s);
    let alpha = 1.0 / (4.0 + g * LN_2);
    TStarSolution::at(alpha, g * alpha, s)
}

const ALPHA_MAX: f64 = 0.25;
const GAMMA_MAX: f64 = 0.3;
const S_MAX: f64 = 3.0;

/// Largest number of points evaluated in the initial full grid.
const FULL_GRID_BUDGET: f64 = 3e8;
/// Zoom refinement. Near the optimum the objective is linear in `α, γ` but
/// quadratic in `s`, so a grid that resolves `α, γ` to `h` only pins `s`
/// down to about `√h`. Each level refines `α, γ` a hundredfold within two
/// previous steps, and searches `s` within `10√h` at step `√h / 10`.
const ZOOM_LEVELS: usize = 3;
const REFINE_AG: f64 = 100.0;
const ZOOM_WINDOW_AG: f64 = 2.0;

struct Axis {
    lo: f64,
    step: f64,
    count: usize,
}

impl Axis {
    fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self {
            lo,
            step,
            count: ((hi - lo) / step + 1e-9).floor() as usize + 1,
        }
    }

    fn around(center: f64, half: f64, step: f64, min: f64, max: f64) -> Self {
        let lo = (center - half).max(min);
        Self::new(lo, (center + half).min(max), step)
    }

    fn at(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }
}

/// Exhaustive max over the product grid; ties go to the first point in
/// `(α, γ, s)` lexicographic order.
fn grid_max(a: &Axis, g: &Axis, s: &Axis) -> (f64, f64, f64, f64) {
    let svals: Vec<(f64, f64)> = (0..s.count)
        .map(|k| {
            let sv = s.at(k);
            (sv, -(-sv).exp_m1())
        })
        .collect();
    let best = (0..a.count)
        .into_par_iter()
        .map(|ia| {
            let alpha = a.at(ia);
            let t2 = 1.0 - 4.0 * alpha;
            let mut best = (f64::NEG_INFINITY, alpha, 0.0, 0.0);
            for ig in 0..g.count {
                let gamma = g.at(ig);
                let t12 = (gamma * LN_2).min(t2);
                if t12 <= best.0 {
                    continue;
                }
                for &(sv, c) in &svals {
                    let ac = alpha * c;
                    let sg = sv * gamma;
                    let v = t12.min(ac - sg).min(1.0 / 3.0 - ac - sg);
                    if v > best.0 {
                        best = (v, alpha, gamma, sv);
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>();
    best.into_iter()
        .fold((f64::NEG_INFINITY, 0.0, 0.0, 0.0), |acc, b| if b.0 > acc.0 { b } else { acc })
}

/// Grid maximization of the objective over `α ∈ [0, 1/4]`, `γ ∈ [0, 0.3]`,
/// `s ∈ [0, 3]`, independent of the closed form.
///
/// The full grid uses step `resolution` (coarsened by powers of ten if it
/// would exceed the evaluation budget); nested zoom levels then refine
/// around the incumbent.
pub fn tstar_grid_search(resolution: f64) -> Result<TStarSolution> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::domain(format!("resolution must be positive, got {resolution}")));
    }
    let mut h = resolution.min(0.05);
    let points = |h: f64| (ALPHA_MAX / h + 1.0) * (GAMMA_MAX / h + 1.0) * (S_MAX / h + 1.0);
    while points(h) > FULL_GRID_BUDGET {
        h *= 10.0;
    }
    let mut best = grid_max(
        &Axis::new(0.0, ALPHA_MAX, h),
        &Axis::new(0.0, GAMMA_MAX, h),
        &Axis::new(0.0, S_MAX, h),
    );
    let mut h_ag = h;
    for _ in 0..ZOOM_LEVELS {
        let fine = h_ag / REFINE_AG;
        let cand = grid_max(
            &Axis::around(best.1, ZOOM_WINDOW_AG * h_ag, fine, 0.0, ALPHA_MAX),
            &Axis::around(best.2, ZOOM_WINDOW_AG * h_ag, fine, 0.0, GAMMA_MAX),
            &Axis::around(best.3, 10.0 * h_ag.sqrt(), fine.sqrt() / 10.0, 0.0, S_MAX),
        );
        if cand.0 >= best.0 {
            best = cand;
        }
        h_ag = fine;
    }
    Ok(TStarSolution::at(best.1, best.2, best.3))
}
