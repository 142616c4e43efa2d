//! Small numerical kernels shared by the solvers.

use std::f64::consts::PI;

/// Logistic function `1 / (1 + exp(-x))` without overflow for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))`, exact to rounding on the whole real line.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Composite Gauss–Legendre rule: a list of `(node, weight)` pairs.
#[derive(Debug, Clone, Default)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    /// Appends `panels` equal panels covering `[a, b]`.
    pub fn push_segment(&mut self, a: f64, b: f64, panels: usize, base: &(Vec<f64>, Vec<f64>)) {
        if b <= a || panels == 0 {
            return;
        }
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            for (x, w) in base.0.iter().zip(&base.1) {
                self.nodes.push(mid + half * x);
                self.weights.push(half * w);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Bisection for the crossing of a monotone function with a target.
///
/// `f` must be increasing on `[lo, hi]`; returns the point where it crosses
/// `target`, clamped to the bracket. Stops once the bracket is narrower than
/// `tol` or stops shrinking in floating point.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    if f(lo) >= target {
        return lo;
    }
    if f(hi) <= target {
        return hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of a decreasing function on a bracket using Newton steps that fall
/// back to bisection whenever they leave the bracket.
///
/// `f` returns `(value, derivative)`. Requires `f(lo) > 0 > f(hi)`.
pub fn bracketed_newton_decreasing<F: FnMut(f64) -> (f64, f64)>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= tol {
            break;
        }
        let newton = if dfx < 0.0 { x - fx / dfx } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol * 0.5 {
            return next;
        }
        x = next;
    }
    x.clamp(lo, hi)
}

/// Outcome of a Nelder–Mead minimisation.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimisation with standard coefficients.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64, ftol: f64, max_iter: usize) -> SimplexResult {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[dim];
        if (worst - best).abs() <= ftol * (best.abs() + worst.abs()) + 1e-300 {
            let spread = simplex[1..]
                .iter()
                .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread < 1e-10 || (worst - best).abs() <= 1e-300 {
                converged = true;
                break;
            }
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|p| p[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let (contracted, fc) = if fr < values[dim] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=dim {
                    simplex[i] = simplex[i].iter().zip(&best).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let (mut bi, mut bv) = (0, values[0]);
    for (i, v) in values.iter().enumerate() {
        if *v < bv {
            bi = i;
            bv = *v;
        }
    }
    SimplexResult {
        point: simplex[bi].clone(),
        value: bv,
        iterations,
        converged,
    }
}

/// Derivative of tabulated `ys` over a non-uniform grid `xs`: three-point
/// central differences inside, one-sided differences at both ends.
pub fn derivative_nonuniform(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    d[0] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    d[n - 1] = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
    for i in 1..n - 1 {
        let h1 = xs[i] - xs[i - 1];
        let h2 = xs[i + 1] - xs[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * ys[i - 1] + (h2 - h1) / (h1 * h2) * ys[i] + h1 / (h2 * (h1 + h2)) * ys[i + 1];
    }
    d
}

/// Second derivative on a non-uniform grid at the interior points
/// (entries 0 and n-1 are left at zero).
pub fn second_derivative_nonuniform(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let h1 = xs[i] - xs[i - 1];
        let h2 = xs[i + 1] - xs[i];
        d[i] = 2.0 * ((ys[i + 1] - ys[i]) / h2 - (ys[i] - ys[i - 1]) / h1) / (h1 + h2);
    }
    d
}

/// `n` points from `a` to `b` inclusive, linearly or geometrically spaced.
pub fn grid(a: f64, b: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                (a.ln() + t * (b.ln() - a.ln())).exp()
            } else {
                a + t * (b - a)
            }
        })
        .collect()
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
