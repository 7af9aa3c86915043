//! Closed forms and exact samplers for Brownian motion, first passage below a
//! level, and the three-dimensional Bessel process.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P_x(t < tau_{-y})` for a standard Brownian motion started at `x`.
pub fn first_passage_prob(x: f64, y: f64, t: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) || !(t >= 0.0) {
        return Err(domain(format!("first_passage_prob({x}, {y}, {t}): invalid arguments")));
    }
    let gap = x + y;
    if gap < 0.0 {
        return Err(domain(format!("start {x} lies below the barrier {}", -y)));
    }
    if gap == 0.0 {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::erf(gap / (2.0 * t).sqrt()))
}

/// Parameters of a Bessel-3 marginal `eta_t` under `eta_0 = y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bessel3Params {
    pub y: f64,
    pub t: f64,
}

impl Bessel3Params {
    pub fn new(y: f64, t: f64) -> Result<Self> {
        if !(y > 0.0 && t > 0.0 && y.is_finite() && t.is_finite()) {
            return Err(domain(format!("Bessel-3 parameters y = {y}, t = {t} must be positive")));
        }
        Ok(Self { y, t })
    }

    pub fn density(&self, x: f64) -> f64 {
        bessel3_density(self.y, self.t, x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        bessel3_cdf(self.y, self.t, x)
    }
}

pub fn bessel3_density(y: f64, t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let d = x - y;
    x / (y * (2.0 * std::f64::consts::PI * t).sqrt())
        * (-d * d / (2.0 * t)).exp()
        * (-(-2.0 * x * y / t).exp_m1())
}

/// Distribution function of `eta_t`, obtained by integrating the density in
/// closed form (difference of the free and reflected Gaussian first moments).
pub fn bessel3_cdf(y: f64, t: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    let phi = |u: f64| normal_pdf(u / s) / s;
    let free = t * (phi(-y) - phi(r - y)) + y * (normal_cdf((r - y) / s) - normal_cdf(-y / s));
    let mirror = t * (phi(y) - phi(r + y)) - y * (normal_cdf((r + y) / s) - normal_cdf(y / s));
    ((free - mirror) / y).clamp(0.0, 1.0)
}

/// Exact draw of `eta_t` as the norm of a 3-d Gaussian displacement from `(y, 0, 0)`.
pub fn sample_bessel3<R: Rng + ?Sized>(y: f64, t: f64, rng: &mut R) -> f64 {
    let s = t.sqrt();
    let g1: f64 = StandardNormal.sample(rng);
    let g2: f64 = StandardNormal.sample(rng);
    let g3: f64 = StandardNormal.sample(rng);
    let a = y + s * g1;
    let b = s * g2;
    let c = s * g3;
    (a * a + b * b + c * c).sqrt()
}

/// Incrementally stepped Bessel-3 path; the joint law on any time grid is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bessel3Path {
    coords: [f64; 3],
}

impl Bessel3Path {
    pub fn new(y: f64) -> Self {
        Self {
            coords: [y, 0.0, 0.0],
        }
    }

    pub fn value(&self) -> f64 {
        let [a, b, c] = self.coords;
        (a * a + b * b + c * c).sqrt()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> f64 {
        if dt > 0.0 {
            let s = dt.sqrt();
            for c in &mut self.coords {
                let g: f64 = StandardNormal.sample(rng);
                *c += s * g;
            }
        }
        self.value()
    }
}

/// Probability that a Brownian bridge from `(0, x0)` to `(delta, x1)` dips below `barrier`.
pub fn bridge_min_prob(x0: f64, x1: f64, delta: f64, barrier: f64) -> f64 {
    let a = x0 - barrier;
    let b = x1 - barrier;
    if a <= 0.0 || b <= 0.0 {
        return 1.0;
    }
    if delta <= 0.0 {
        return 0.0;
    }
    (-2.0 * a * b / delta).exp()
}
