//! Brute-force reference: 10^5 agents on a midpoint grid of the rectangular
//! distribution, each priced by bisection in price space, with a plain
//! Newton iteration on (phi_p, y) around it.

const AGENTS: usize = 100_000;

pub fn demand(x: f64, v: f64) -> f64 {
    if v == 0.0 {
        return x.max(0.0);
    }
    let z = x / v;
    if z > 0.0 {
        x + v * (-z).exp().ln_1p()
    } else {
        v * z.exp().ln_1p()
    }
}

pub fn price(lambda: f64, p: f64, y: f64, v: f64) -> f64 {
    if v == 0.0 {
        let (a, b) = (y * (-1.0 - p).exp(), y * (-1.0f64).exp());
        return if lambda <= a {
            1.0 + p
        } else if lambda >= b {
            1.0
        } else {
            (y / lambda).ln()
        };
    }
    // capacity decreases in price on (1, 1 + p)
    let cap = |phi: f64| y * (-phi).exp() + v * ((1.0 + p - phi) / (phi - 1.0)).ln();
    let (mut lo, mut hi) = (1.0, 1.0 + p);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if cap(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn map(mean: f64, v: f64, p: f64, y: f64) -> (f64, f64) {
    let (mut e, mut pe, mut x) = (0.0, 0.0, 0.0);
    for k in 0..AGENTS {
        let lambda = mean - 0.5 + (k as f64 + 0.5) / AGENTS as f64;
        let phi = price(lambda, p, y, v);
        let w = (-phi).exp();
        e += w;
        pe += phi * w;
        x += demand(y * w - lambda, v);
    }
    (pe / e, x / e)
}

pub fn solve(mean: f64, v: f64) -> (f64, f64) {
    let (mut p, mut y) = (1.83, 1.3);
    let defect = |p: f64, y: f64| {
        let (gp, gy) = map(mean, v, p, y);
        [gp - p, gy - y]
    };
    let mut f = defect(p, y);
    for _ in 0..60 {
        if f[0].abs().max(f[1].abs()) < 1e-12 {
            break;
        }
        let h = 1e-7;
        let fp = defect(p + h, y);
        let fy = defect(p, y + h);
        let j = [[(fp[0] - f[0]) / h, (fy[0] - f[0]) / h], [(fp[1] - f[1]) / h, (fy[1] - f[1]) / h]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let dp = -(j[1][1] * f[0] - j[0][1] * f[1]) / det;
        let dy = -(-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        let mut s = 1.0;
        loop {
            let (pn, yn) = (p + s * dp, y + s * dy);
            if pn > 0.0 && yn > 0.0 {
                let fnew = defect(pn, yn);
                if fnew[0].abs().max(fnew[1].abs()) < f[0].abs().max(f[1].abs()) || s < 1e-3 {
                    p = pn;
                    y = yn;
                    f = fnew;
                    break;
                }
            }
            s *= 0.5;
        }
    }
    (p, y)
}
