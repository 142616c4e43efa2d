#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnpoint::elasticity::{ModelCurve, Period, Record};
use turnpoint::CommoditySeries;

/// Box-Muller standard normal.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Price series whose SUR elasticity is `e * M(sur / s)` with multiplicative
/// noise of relative size `noise` on every increment.
///
/// SURs are log-spaced over `[u_lo * s, u_hi * s]` and the price is obtained
/// by integrating the elasticity downward from a base price at the top.
pub fn generate(model: &ModelCurve, s: f64, e: f64, noise: f64, n: usize, u_lo: f64, u_hi: f64, seed: u64) -> CommoditySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sur: Vec<f64> = (0..n)
        .map(|i| (u_lo * s) * ((u_hi / u_lo).powf(i as f64 / (n - 1) as f64)))
        .collect();
    let mut price = vec![0.0; n];
    price[n - 1] = 1.0 + e * s;
    for j in (0..n - 1).rev() {
        let mid = (sur[j] * sur[j + 1]).sqrt();
        let slope = e * model.eval(mid / s) * (1.0 + noise * normal(&mut rng));
        price[j] = price[j + 1] + slope * (sur[j + 1] - sur[j]);
    }
    let records = (0..n)
        .map(|i| Record {
            period: Period::Year(1900 + i as i32),
            price: price[i],
            sur: sur[i],
        })
        .collect();
    CommoditySeries::new("synthetic", records, false).unwrap()
}

/// Peaked elasticity profile mimicking a metal with a yield point: linear
/// rise up to `PEAK`, exponential decay above it.
pub struct PeakedFixture {
    pub top_price: f64,
}

impl PeakedFixture {
    pub const PEAK: f64 = 0.163;
    pub const STEP: f64 = 0.01;
    pub const HEIGHT: f64 = 40.0;
    pub const RISE: f64 = 500.0;
    pub const DECAY: f64 = 0.05;
    pub const POINTS: usize = 26;

    pub fn sur(&self, i: usize) -> f64 {
        Self::PEAK + Self::STEP * (i as f64 - 11.0)
    }

    /// Integral of the elasticity profile from `x` up to `PEAK`, or its
    /// negative above it.
    fn antiderivative(x: f64) -> f64 {
        let d = x - Self::PEAK;
        if d <= 0.0 {
            // integral over [x, PEAK] of HEIGHT + RISE (t - PEAK)
            -d * Self::HEIGHT - Self::RISE * d * d / 2.0
        } else {
            -Self::HEIGHT * Self::DECAY * (1.0 - (-d / Self::DECAY).exp())
        }
    }

    pub fn price_at(&self, x: f64) -> f64 {
        let top = self.sur(Self::POINTS - 1);
        self.top_price + Self::antiderivative(x) - Self::antiderivative(top)
    }

    pub fn series(&self) -> CommoditySeries {
        let records = (0..Self::POINTS)
            .map(|i| Record {
                period: Period::Year(1990 + i as i32),
                price: self.price_at(self.sur(i)),
                sur: self.sur(i),
            })
            .collect();
        CommoditySeries::new("peaked", records, false).unwrap()
    }

    /// Elasticity of the three-point window centred on the peak.
    pub fn peak_window_elasticity() -> f64 {
        let h = Self::STEP;
        (Self::antiderivative(Self::PEAK - h) - Self::antiderivative(Self::PEAK + h)) / (2.0 * h)
    }

    /// Mean price over grid points with SUR in `[PEAK, turning]`.
    pub fn mean_price(&self, turning: f64) -> f64 {
        let xs: Vec<f64> = (0..Self::POINTS).map(|i| self.sur(i)).filter(|x| *x >= Self::PEAK - 1e-12 && *x <= turning).collect();
        xs.iter().map(|x| self.price_at(*x)).sum::<f64>() / xs.len() as f64
    }

    /// Top price that makes the relative yield elasticity equal `target`.
    pub fn tuned(target: f64, turning: f64) -> Self {
        let base = PeakedFixture { top_price: 0.0 };
        let offset = base.mean_price(turning);
        let top_price = Self::peak_window_elasticity() * Self::PEAK / target - offset;
        PeakedFixture { top_price }
    }
}
