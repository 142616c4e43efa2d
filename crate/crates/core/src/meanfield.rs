//! Mean-field theory of the fully connected market.
//!
//! In a large market every agent sees the same average purchasing price
//! `phi_p` and the same demand coefficient `y`; an agent's price then depends
//! on its capacity alone through
//!
//! ```text
//! Lambda = y exp(-phi) + v ln((1 + phi_p - phi) / (phi - 1)),
//! ```
//!
//! and `(phi_p, y)` are fixed by `phi_p = <phi e^-phi> / <e^-phi>` and
//! `y = <xi> / <e^-phi>`.
//!
//! For `v > 0` all averages are computed in the logit variable
//! `t = ln((1 + phi_p - phi) / (phi - 1))`, in which `phi = 1 + phi_p sigma(-t)`,
//! `Lambda(t) = y exp(-phi(t)) + v t` is increasing and the demand is simply
//! `v softplus(-t)`. This keeps the quadrature smooth when `v` is small and
//! most agents sit in thin boundary layers near the price bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{CapacityDist, DistError};
use crate::numeric::{
    bisect_increasing, derivative_nonuniform, gauss_legendre, logistic, second_derivative_nonuniform, softplus,
    CompositeRule,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("no equilibrium for mean capacity {mean} at v = {v}: the mean capacity must be positive")]
    Regime { mean: f64, v: f64 },
    #[error("no equilibrium at v = 0 without consumers (capacity support starts at {lo})")]
    NoConsumers { lo: f64 },
    #[error("inventory must be finite and non-negative, got {0}")]
    Inventory(f64),
    #[error("price {phi} outside the admissible range [{lo}, {hi}]")]
    Domain { phi: f64, lo: f64, hi: f64 },
    #[error("demand at the maximum price is not determined by the price when v = 0")]
    Indeterminate,
    #[error("self-consistency did not converge (phi_p = {phi_p}, y = {y}, residual {residual:e})")]
    NoConvergence { phi_p: f64, y: f64, residual: f64 },
    #[error("grid point {index} (mean capacity {mean}): {source}")]
    GridPoint {
        index: usize,
        mean: f64,
        #[source]
        source: Box<MeanFieldError>,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("turning point not found: {0}")]
    TurningPoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on both self-consistency defects: absolute in `phi_p`, relative
    /// in `y` (which grows like `e^phi_p` at small capacities).
    pub tol: f64,
    /// Newton iterations per attempt.
    pub max_iters: usize,
    /// Starting `(phi_p, y)`; a heuristic guess when absent.
    pub initial: Option<(f64, f64)>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iters: 100,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub phi_p: f64,
    pub y: f64,
    pub v: f64,
    pub dist: CapacityDist,
    pub residual: f64,
    /// Quadrature the solution is self-consistent under.
    pub quadrature: Quadrature,
}

/// Averages produced by one application of the self-consistency map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `<phi e^-phi> / <e^-phi>`
    pub phi_p: f64,
    /// `<xi> / <e^-phi>`
    pub y: f64,
    /// Integrated probability mass (1 up to quadrature error).
    pub mass: f64,
}

const T_SPLIT: f64 = 40.0;
const INNER_PANEL: f64 = 0.5;
const OUTER_PANELS: usize = 64;
const GL_ORDER: usize = 8;
const MIN_NODES: usize = 2000;
const MAX_LEVEL: u32 = 3;

impl MeanFieldSolution {
    /// Boundary below which agents are consumers, `y e^(-1-phi_p)`.
    pub fn consumer_boundary(&self) -> f64 {
        self.y * (-1.0 - self.phi_p).exp()
    }

    /// Boundary between quasi consumers and quasi producers, `y e^(-1-phi_p/2)`.
    pub fn quasi_boundary(&self) -> f64 {
        self.y * (-1.0 - 0.5 * self.phi_p).exp()
    }

    /// Boundary above which agents are excess producers, `y e^-1`.
    pub fn producer_boundary(&self) -> f64 {
        self.y * (-1.0f64).exp()
    }
}

fn lambda_of_t(t: f64, phi_p: f64, y: f64, v: f64) -> f64 {
    y * (-(1.0 + phi_p * logistic(-t))).exp() + v * t
}

fn t_of_lambda(lambda: f64, phi_p: f64, y: f64, v: f64) -> f64 {
    let lo = (lambda - y * (-1.0f64).exp()) / v;
    let hi = (lambda - y * (-1.0 - phi_p).exp()) / v;
    // bisect to the last bit: the quadrature ends move with (phi_p, y) and
    // any jitter here shows up as noise in the averages
    bisect_increasing(|t| lambda_of_t(t, phi_p, y, v), lambda, lo, hi, 0.0)
}

/// Capacity at which the mean-field price equals `phi`.
pub fn capacity_of_price(phi: f64, sol: &MeanFieldSolution) -> Result<f64, MeanFieldError> {
    let (lo, hi) = (1.0, 1.0 + sol.phi_p);
    let inside = if sol.v > 0.0 { phi > lo && phi < hi } else { phi >= lo && phi <= hi };
    if !inside || !phi.is_finite() {
        return Err(MeanFieldError::Domain { phi, lo, hi });
    }
    let log_term = if sol.v > 0.0 {
        sol.v * ((1.0 + sol.phi_p - phi) / (phi - 1.0)).ln()
    } else {
        0.0
    };
    Ok(sol.y * (-phi).exp() + log_term)
}

/// Mean-field price of an agent with capacity `lambda`.
pub fn price_of_capacity(lambda: f64, sol: &MeanFieldSolution) -> f64 {
    if sol.v == 0.0 {
        if lambda <= sol.consumer_boundary() {
            1.0 + sol.phi_p
        } else if lambda >= sol.producer_boundary() {
            1.0
        } else {
            (sol.y / lambda).ln()
        }
    } else {
        let t = t_of_lambda(lambda, sol.phi_p, sol.y, sol.v);
        1.0 + sol.phi_p * logistic(-t)
    }
}

/// Mean-field demand of an agent priced at `phi`, `v ln(phi_p / (1 + phi_p - phi))`.
pub fn mf_demand(phi: f64, sol: &MeanFieldSolution) -> Result<f64, MeanFieldError> {
    capacity_of_price(phi, sol)?;
    if sol.v == 0.0 {
        if phi < 1.0 + sol.phi_p {
            return Ok(0.0);
        }
        return Err(MeanFieldError::Indeterminate);
    }
    // -ln(1 - s) with s = (phi - 1) / phi_p, accurate near phi = 1
    Ok(-sol.v * (-(phi - 1.0) / sol.phi_p).ln_1p())
}

/// Mean-field demand of an agent with capacity `lambda`.
pub fn mf_demand_of_capacity(lambda: f64, sol: &MeanFieldSolution) -> f64 {
    if sol.v == 0.0 {
        (sol.consumer_boundary() - lambda).max(0.0)
    } else {
        sol.v * softplus(-t_of_lambda(lambda, sol.phi_p, sol.y, sol.v))
    }
}

/// Quadrature over the capacity distribution: nodes carry the price, the
/// demand and the probability weight.
struct Sample {
    phi: f64,
    xi: f64,
    weight: f64,
}

/// Panel layout of the quadrature. For `v > 0` the inner panels sit on the
/// fixed lattice `k * panel` in `t`, so the averages vary continuously with
/// `(phi_p, y)` while a solve is in progress; only the end panels stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Number of panel doublings.
    pub level: u32,
    /// Inner panel width in `t` before doubling.
    pub panel: f64,
}

impl Quadrature {
    /// Coarsest layout with at least the minimum node count at `(phi_p, y)`.
    pub fn plan(dist: &CapacityDist, v: f64, phi_p: f64, y: f64) -> Self {
        if v == 0.0 {
            return Quadrature { level: 0, panel: INNER_PANEL };
        }
        let (lo, hi) = dist.support();
        let (t_lo, t_hi) = inner_t_range(dist, v, phi_p, y);
        let inner = (t_hi - t_lo).max(0.0);
        let outer = (lo < y * (-1.0 - phi_p).exp() - T_SPLIT * v) as usize
            + (hi > y * (-1.0f64).exp() + T_SPLIT * v) as usize;
        let needed = MIN_NODES.saturating_sub(outer * OUTER_PANELS * GL_ORDER).div_ceil(GL_ORDER) + 1;
        let panel = if inner > 0.0 { INNER_PANEL.min(inner / needed as f64) } else { INNER_PANEL };
        Quadrature { level: 0, panel }
    }

    pub fn refined(self) -> Self {
        Quadrature { level: self.level + 1, ..self }
    }
}

/// Panels over `[lo, hi]` split at `breaks`: `count` panels per piece.
fn fixed_count_rule(lo: f64, hi: f64, breaks: &[f64], count: usize, base: &(Vec<f64>, Vec<f64>), rule: &mut CompositeRule) {
    let edges = sorted_breaks(lo, hi, breaks.iter().cloned());
    for w in edges.windows(2) {
        rule.push_segment(w[0], w[1], count, base);
    }
}

/// Inner `t` range of the quadrature; the tails beyond `+-T_SPLIT` are
/// integrated in capacity space.
fn inner_t_range(dist: &CapacityDist, v: f64, phi_p: f64, y: f64) -> (f64, f64) {
    let (lo, hi) = dist.support();
    let a = y * (-1.0 - phi_p).exp();
    let b = y * (-1.0f64).exp();
    let t_lo = if lo <= a - T_SPLIT * v { -T_SPLIT } else { t_of_lambda(lo, phi_p, y, v).max(-T_SPLIT) };
    let t_hi = if hi >= b + T_SPLIT * v { T_SPLIT } else { t_of_lambda(hi, phi_p, y, v).min(T_SPLIT) };
    (t_lo, t_hi)
}

fn lattice_rule(a: f64, b: f64, breaks: &[f64], q: Quadrature) -> CompositeRule {
    let base = gauss_legendre(GL_ORDER);
    let mut rule = CompositeRule::default();
    if b > a {
        let h = q.panel / (1u64 << q.level) as f64;
        let lattice = ((a / h).ceil() as i64..=(b / h).floor() as i64).map(|k| k as f64 * h);
        let edges = sorted_breaks(a, b, lattice.chain(breaks.iter().cloned()));
        for w in edges.windows(2) {
            rule.push_segment(w[0], w[1], 1, &base);
        }
    }
    rule
}

fn sorted_breaks(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut b = vec![lo, hi];
    b.extend(interior.into_iter().filter(|x| *x > lo && *x < hi));
    b.sort_by(|a, c| a.partial_cmp(c).unwrap());
    b.dedup();
    b
}

fn samples(dist: &CapacityDist, v: f64, phi_p: f64, y: f64, q: Quadrature) -> Vec<Sample> {
    let (lo, hi) = dist.support();
    if v == 0.0 {
        let a = y * (-1.0 - phi_p).exp();
        let b = y * (-1.0f64).exp();
        let breaks: Vec<f64> = [a, b].into_iter().chain(dist.breakpoints()).collect();
        let mut rule = CompositeRule::default();
        let count = MIN_NODES.div_ceil(GL_ORDER) << q.level;
        fixed_count_rule(lo, hi, &breaks, count, &gauss_legendre(GL_ORDER), &mut rule);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&lam, &w)| {
                let (phi, xi) = if lam <= a {
                    (1.0 + phi_p, a - lam)
                } else if lam >= b {
                    (1.0, 0.0)
                } else {
                    ((y / lam).ln(), 0.0)
                };
                Sample {
                    phi,
                    xi,
                    weight: w * dist.density(lam),
                }
            })
            .collect()
    } else {
        let a = y * (-1.0 - phi_p).exp();
        let b = y * (-1.0f64).exp();
        let base = gauss_legendre(GL_ORDER);
        let at = |t: f64, weight: f64| Sample {
            phi: 1.0 + phi_p * logistic(-t),
            xi: v * softplus(-t),
            weight,
        };
        let mut out = Vec::new();
        // deep consumers, t < -T: Lambda = a + v t
        let left_end = (a - T_SPLIT * v).min(hi);
        if lo < left_end {
            let mut rule = CompositeRule::default();
            fixed_count_rule(lo, left_end, &dist.breakpoints(), OUTER_PANELS << q.level, &base, &mut rule);
            out.extend(rule.nodes.iter().zip(&rule.weights).map(|(&l, &w)| at((l - a) / v, w * dist.density(l))));
        }
        let (t_lo, t_hi) = inner_t_range(dist, v, phi_p, y);
        let breaks: Vec<f64> = dist
            .breakpoints()
            .into_iter()
            .map(|l| t_of_lambda(l, phi_p, y, v))
            .collect();
        let rule = lattice_rule(t_lo, t_hi, &breaks, q);
        out.extend(rule.nodes.iter().zip(&rule.weights).map(|(&t, &w)| {
            let s_plus = logistic(t);
            let s_minus = logistic(-t);
            let e = (-(1.0 + phi_p * s_minus)).exp();
            let dlam = v + y * e * phi_p * s_plus * s_minus;
            let lam = y * e + v * t;
            at(t, w * dlam * dist.density(lam.clamp(lo, hi)))
        }));
        // excess producers, t > T: Lambda = b + v t
        let right_start = (b + T_SPLIT * v).max(lo);
        if right_start < hi {
            let mut rule = CompositeRule::default();
            fixed_count_rule(right_start, hi, &dist.breakpoints(), OUTER_PANELS << q.level, &base, &mut rule);
            out.extend(rule.nodes.iter().zip(&rule.weights).map(|(&l, &w)| at((l - b) / v, w * dist.density(l))));
        }
        out
    }
}

fn moments_with(dist: &CapacityDist, v: f64, phi_p: f64, y: f64, q: Quadrature) -> Moments {
    let (mut e, mut p, mut x, mut mass) = (0.0, 0.0, 0.0, 0.0);
    for s in samples(dist, v, phi_p, y, q) {
        let ef = (-s.phi).exp();
        e += s.weight * ef;
        p += s.weight * s.phi * ef;
        x += s.weight * s.xi;
        mass += s.weight;
    }
    Moments {
        phi_p: p / e,
        y: x / e,
        mass,
    }
}

/// One application of the self-consistency map at `(phi_p, y)`.
pub fn self_consistency_map(dist: &CapacityDist, v: f64, phi_p: f64, y: f64, q: Quadrature) -> Moments {
    moments_with(dist, v, phi_p, y, q)
}

struct Problem<'a> {
    dist: &'a CapacityDist,
    v: f64,
    quad: Quadrature,
}

impl<'a> Problem<'a> {
    fn at(dist: &'a CapacityDist, v: f64, start: (f64, f64)) -> Self {
        Problem {
            dist,
            v,
            quad: Quadrature::plan(dist, v, start.0, start.1),
        }
    }

    /// Defects in `(phi_p, ln y)` coordinates and in plain coordinates.
    fn defects(&self, z: [f64; 2]) -> Option<([f64; 2], f64)> {
        let (p, y) = (z[0], z[1].exp());
        if !(p > 0.0) || !(y > 0.0) || !p.is_finite() || !y.is_finite() {
            return None;
        }
        let m = moments_with(self.dist, self.v, p, y, self.quad);
        if !(m.phi_p.is_finite() && m.y > 0.0 && m.y.is_finite()) {
            return None;
        }
        let plain = (m.phi_p - p).abs().max(((m.y - y) / y).abs());
        Some(([m.phi_p - p, m.y.ln() - z[1]], plain))
    }

    fn newton(&self, start: (f64, f64), tol: f64, max_iters: usize) -> Option<(f64, f64, f64)> {
        let mut z = [start.0, start.1.ln()];
        let (mut f, mut plain) = self.defects(z)?;
        for _ in 0..max_iters {
            if plain <= tol {
                return Some((z[0], z[1].exp(), plain));
            }
            let mut jac = [[0.0; 2]; 2];
            for k in 0..2 {
                let h = 1e-7 * z[k].abs().max(1.0);
                let mut zp = z;
                zp[k] += h;
                let (fp, _) = self.defects(zp)?;
                for r in 0..2 {
                    jac[r][k] = (fp[r] - f[r]) / h;
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let dz = [
                -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det,
                -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det,
            ];
            // the Newton direction descends on the Euclidean norm, not the max norm
            let norm = |g: &[f64; 2]| g[0].hypot(g[1]);
            let mut lambda = 1.0;
            let mut accepted = None;
            while lambda > 1e-6 {
                let zn = [z[0] + lambda * dz[0], z[1] + lambda * dz[1]];
                if let Some((fnew, pnew)) = self.defects(zn) {
                    if norm(&fnew) < norm(&f) || pnew <= tol {
                        accepted = Some((zn, fnew, pnew));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let (zn, fnew, pnew) = accepted?;
            z = zn;
            f = fnew;
            plain = pnew;
        }
        (plain <= tol).then(|| (z[0], z[1].exp(), plain))
    }

    /// Damped fixed-point iteration, halving the damping on oscillation.
    fn fixed_point(&self, start: (f64, f64), tol: f64, max_iters: usize) -> Option<(f64, f64, f64)> {
        let (mut p, mut y) = start;
        let mut damping: f64 = 0.5;
        let mut last = f64::INFINITY;
        for _ in 0..max_iters {
            let m = moments_with(self.dist, self.v, p, y, self.quad);
            if !(m.phi_p.is_finite() && m.y.is_finite() && m.y > 0.0) {
                return None;
            }
            let defect = (m.phi_p - p).abs().max(((m.y - y) / y).abs());
            if defect <= tol {
                return Some((p, y, defect));
            }
            if defect > last {
                damping = (damping * 0.5).max(1e-3);
            }
            last = defect;
            p += damping * (m.phi_p - p);
            y += damping * (m.y - y);
        }
        None
    }

    fn solve(&self, start: (f64, f64), opts: &SolverOptions) -> Option<(f64, f64, f64)> {
        self.newton(start, opts.tol, opts.max_iters)
            .or_else(|| self.fixed_point(start, opts.tol, 50 * opts.max_iters))
    }
}

fn default_guess(dist: &CapacityDist) -> (f64, f64) {
    let (lo, hi) = dist.support();
    let m = dist.mean();
    // v = 0 rectangular guide: y / e sits near (sqrt(hi - m) - sqrt(m))^2
    let b = ((hi - m).max(0.0).sqrt() - m.max(0.0).sqrt()).powi(2).max(0.05 * (hi - lo));
    (1.83, std::f64::consts::E * b)
}

fn check_inputs(dist: &CapacityDist, v: f64) -> Result<(), MeanFieldError> {
    dist.validate()?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(MeanFieldError::Inventory(v));
    }
    let mean = dist.mean();
    if !(mean > 0.0) {
        return Err(MeanFieldError::Regime { mean, v });
    }
    let (lo, _) = dist.support();
    if v == 0.0 && lo >= 0.0 {
        return Err(MeanFieldError::NoConsumers { lo });
    }
    Ok(())
}

fn solve_level0(dist: &CapacityDist, v: f64, opts: &SolverOptions) -> Result<(f64, f64, f64), MeanFieldError> {
    let start = opts.initial.unwrap_or_else(|| default_guess(dist));
    if let Some(sol) = Problem::at(dist, v, start).solve(start, opts) {
        return Ok(sol);
    }
    // Continuation in the mean capacity from a comfortable anchor.
    let target = dist.mean();
    let anchor = if v > 0.0 { v.max(0.05) } else { 0.125 };
    let fail = |p: f64, y: f64| MeanFieldError::NoConvergence {
        phi_p: p,
        y,
        residual: f64::NAN,
    };
    if (anchor - target).abs() <= 1e-12 * anchor {
        return Err(fail(start.0, start.1));
    }
    let anchored = dist.with_mean(anchor);
    let guess = default_guess(&anchored);
    let mut current = Problem::at(&anchored, v, guess)
        .solve(guess, opts)
        .ok_or_else(|| fail(start.0, start.1))?;
    let mut m = anchor;
    let mut ratio: f64 = 0.7;
    let geometric = target < anchor;
    while m != target {
        let next = if geometric {
            (m * ratio).max(target)
        } else {
            (m + (1.0 - ratio) * anchor.max(target)).min(target)
        };
        let shifted = dist.with_mean(next);
        let from = (current.0, current.1);
        let step = Problem::at(&shifted, v, from).solve(from, opts);
        match step {
            Some(s) => {
                current = s;
                m = next;
                ratio = (ratio * ratio.sqrt()).max(0.3);
            }
            None => {
                ratio = ratio.sqrt();
                if ratio > 0.999 {
                    return Err(fail(current.0, current.1));
                }
            }
        }
    }
    Ok(current)
}

/// Solves for the self-consistent `(phi_p, y)` of a capacity distribution.
///
/// The quadrature panels are doubled until `phi_p` moves by less than
/// `tol / 10` between refinements.
pub fn solve_self_consistent(
    dist: &CapacityDist,
    v: f64,
    opts: &SolverOptions,
) -> Result<MeanFieldSolution, MeanFieldError> {
    check_inputs(dist, v)?;
    let (p0, y0, _) = solve_level0(dist, v, opts)?;
    let mut quad = Quadrature::plan(dist, v, p0, y0);
    let (mut p, mut y, mut residual) = Problem { dist, v, quad }
        .solve((p0, y0), opts)
        .ok_or(MeanFieldError::NoConvergence {
            phi_p: p0,
            y: y0,
            residual: f64::NAN,
        })?;
    while quad.level < MAX_LEVEL {
        let finer = quad.refined();
        let Some((p2, y2, r2)) = (Problem { dist, v, quad: finer }).solve((p, y), opts) else {
            break;
        };
        let change = (p2 - p).abs();
        (p, y, residual, quad) = (p2, y2, r2, finer);
        if change < opts.tol / 10.0 {
            break;
        }
    }
    Ok(MeanFieldSolution {
        phi_p: p,
        y,
        v,
        dist: dist.clone(),
        residual,
        quadrature: quad,
    })
}

/// Recomputes the larger self-consistency defect of a solution (absolute in
/// `phi_p`, relative in `y`).
pub fn certificate(sol: &MeanFieldSolution) -> f64 {
    let m = moments_with(&sol.dist, sol.v, sol.phi_p, sol.y, sol.quadrature);
    (m.phi_p - sol.phi_p).abs().max(((m.y - sol.y) / sol.y).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentClassification {
    pub consumers: f64,
    pub balanced: f64,
    /// Quasi consumers and quasi producers, reported for `v > 0`.
    pub quasi_consumers: Option<f64>,
    pub quasi_producers: Option<f64>,
    pub excess_producers: f64,
    /// `y e^(-1-phi_p)`
    pub consumer_boundary: f64,
    /// `y e^(-1-phi_p/2)`
    pub quasi_boundary: f64,
    /// `y e^-1`
    pub producer_boundary: f64,
    /// Capacities of excess producers inside the support, if any.
    pub excess_interval: Option<(f64, f64)>,
}

pub fn classify(sol: &MeanFieldSolution) -> AgentClassification {
    let d = &sol.dist;
    let (a, c, b) = (sol.consumer_boundary(), sol.quasi_boundary(), sol.producer_boundary());
    let (fa, fc, fb) = (d.cdf(a), d.cdf(c), d.cdf(b));
    let (_, hi) = d.support();
    let quasi = sol.v > 0.0;
    AgentClassification {
        consumers: fa,
        balanced: fb - fa,
        quasi_consumers: quasi.then_some(fc - fa),
        quasi_producers: quasi.then_some(fb - fc),
        excess_producers: 1.0 - fb,
        consumer_boundary: a,
        quasi_boundary: c,
        producer_boundary: b,
        excess_interval: (b < hi).then(|| (b.max(d.support().0), hi)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCurve {
    pub means: Vec<f64>,
    pub v: f64,
    pub phi_p: Vec<f64>,
    pub y: Vec<f64>,
    /// `-v d phi_p / d <Lambda>`
    pub elasticity: Vec<f64>,
    /// Turning point in units of `<Lambda> / v`.
    pub turning_point: Option<f64>,
    /// `<Lambda> / v` at which quasi producers disappear.
    pub quasi_point: Option<f64>,
    /// `<Lambda> / v` at which excess producers disappear.
    pub excess_point: Option<f64>,
    /// Upper edge of the capacity support relative to the mean.
    pub upper_offset: f64,
}

impl PriceCurve {
    /// Grid in units of `v` (the raw means when `v = 0`).
    pub fn scaled_means(&self) -> Vec<f64> {
        let s = if self.v > 0.0 { self.v } else { 1.0 };
        self.means.iter().map(|m| m / s).collect()
    }

    /// First scaled mean, scanning down from the top of the grid, at which
    /// `phi_p` reaches `level` (log-linear interpolation).
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let u = self.scaled_means();
        for k in (1..u.len()).rev() {
            let (p0, p1) = (self.phi_p[k - 1], self.phi_p[k]);
            if p1 <= level && p0 >= level && p0 > p1 {
                let f = (p0 - level) / (p0 - p1);
                return Some((u[k - 1].ln() + f * (u[k].ln() - u[k - 1].ln())).exp());
            }
        }
        None
    }

    /// `d ln phi_p / d ln <Lambda>`.
    pub fn log_slope(&self) -> Vec<f64> {
        let lx: Vec<f64> = self.means.iter().map(|m| m.ln()).collect();
        let ly: Vec<f64> = self.phi_p.iter().map(|p| p.ln()).collect();
        derivative_nonuniform(&lx, &ly)
    }
}

/// Solves a family of distributions sharing one shape across a grid of means.
pub fn price_curve(
    shape: &CapacityDist,
    means: &[f64],
    v: f64,
    opts: &SolverOptions,
) -> Result<PriceCurve, MeanFieldError> {
    if means.len() < 3 {
        return Err(MeanFieldError::Grid("need at least three grid points".into()));
    }
    if means.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MeanFieldError::Grid("means must be strictly increasing".into()));
    }
    let n = means.len();
    let mut phi_p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut warm: Option<(f64, f64)> = opts.initial;
    for k in (0..n).rev() {
        let dist = shape.with_mean(means[k]);
        let mut o = opts.clone();
        o.initial = warm;
        let sol = solve_self_consistent(&dist, v, &o)
            .or_else(|e| {
                if warm.is_some() {
                    o.initial = None;
                    solve_self_consistent(&dist, v, &o)
                } else {
                    Err(e)
                }
            })
            .map_err(|e| MeanFieldError::GridPoint {
                index: k,
                mean: means[k],
                source: Box::new(e),
            })?;
        phi_p[k] = sol.phi_p;
        y[k] = sol.y;
        warm = Some((sol.phi_p, sol.y));
    }
    let slope = derivative_nonuniform(means, &phi_p);
    let elasticity = slope.iter().map(|d| -v * d).collect();
    let (_, hi) = shape.support();
    let upper_offset = hi - shape.mean();
    let mut curve = PriceCurve {
        means: means.to_vec(),
        v,
        phi_p,
        y,
        elasticity,
        turning_point: None,
        quasi_point: None,
        excess_point: None,
        upper_offset,
    };
    let scale = if v > 0.0 { v } else { 1.0 };
    curve.quasi_point = boundary_crossing(&curve, |p, y| y * (-1.0 - 0.5 * p).exp()).map(|m| m / scale);
    curve.excess_point = boundary_crossing(&curve, |_, y| y * (-1.0f64).exp()).map(|m| m / scale);
    curve.turning_point = locate_turning_point(&curve).ok();
    Ok(curve)
}

/// Mean at which a class boundary meets the top of the support.
fn boundary_crossing(curve: &PriceCurve, boundary: impl Fn(f64, f64) -> f64) -> Option<f64> {
    let gap: Vec<f64> = (0..curve.means.len())
        .map(|k| curve.means[k] + curve.upper_offset - boundary(curve.phi_p[k], curve.y[k]))
        .collect();
    for k in 1..gap.len() {
        if gap[k - 1] <= 0.0 && gap[k] > 0.0 {
            let f = -gap[k - 1] / (gap[k] - gap[k - 1]);
            let (l0, l1) = (curve.means[k - 1].ln(), curve.means[k].ln());
            return Some((l0 + f * (l1 - l0)).exp());
        }
    }
    None
}

/// Location, in units of `<Lambda> / v`, of the fastest change of the
/// dimensionless elasticity `d ln phi_p / d ln <Lambda>`.
///
/// The second derivative of `ln phi_p` against `ln <Lambda>` is maximised on
/// the grid and refined by a parabola through the peak and its neighbours.
pub fn locate_turning_point(curve: &PriceCurve) -> Result<f64, MeanFieldError> {
    if !(curve.v > 0.0) {
        return Err(MeanFieldError::TurningPoint("need v > 0 for a smooth curve".into()));
    }
    let n = curve.means.len();
    if n < 5 {
        return Err(MeanFieldError::TurningPoint("grid too short".into()));
    }
    let lx: Vec<f64> = curve.means.iter().map(|m| (m / curve.v).ln()).collect();
    let ly: Vec<f64> = curve.phi_p.iter().map(|p| p.ln()).collect();
    let curv = second_derivative_nonuniform(&lx, &ly);
    let (k, peak) = curv
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, c)| (k, *c))
        .unwrap();
    if k == 0 || k + 1 >= n {
        return Err(MeanFieldError::TurningPoint("curvature peaks at the edge of the grid".into()));
    }
    if !(peak > 0.0) {
        return Err(MeanFieldError::TurningPoint("no positive curvature on the grid".into()));
    }
    let (x0, x1, x2) = (lx[k - 1], lx[k], lx[k + 1]);
    let (y0, y1, y2) = (curv[k - 1], curv[k], curv[k + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    let vertex = if a < 0.0 { (-b / (2.0 * a)).clamp(x0, x2) } else { x1 };
    Ok(vertex.exp())
}
