//! Cosine DDPM noise schedule.
//!
//! Diffusion steps are 1-based: `n = 1` is the least noisy, `n = N` the
//! most. Index 0 holds the clean boundary `ᾱ_0 = 1`.

use alloc::vec::Vec;

use crate::math::{self, PI};

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(steps: usize) -> Self {
        assert!(steps >= 1, "a schedule needs at least one step");
        let f = |n: usize| {
            let t = (n as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            let c = math::cos(t * PI / 2.0);
            c * c
        };
        let f0 = f(0);
        let mut betas = alloc::vec![0.0];
        let mut alphas = alloc::vec![1.0];
        let mut alpha_bars = alloc::vec![1.0];
        for n in 1..=steps {
            let beta = (1.0 - (f(n) / f0) / (f(n - 1) / f0)).clamp(0.0, MAX_BETA);
            betas.push(beta);
            alphas.push(1.0 - beta);
            alpha_bars.push(alpha_bars[n - 1] * (1.0 - beta));
        }
        Self {
            steps,
            betas,
            alphas,
            alpha_bars,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alphas[n]
    }

    pub fn alpha_bar(&self, n: usize) -> f64 {
        self.alpha_bars[n]
    }

    /// Forward process `√ᾱ_n a0 + √(1-ᾱ_n) ε`.
    pub fn add_noise(&self, a0: &[f64], n: usize, eps: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a0.len(), eps.len());
        let (sa, sb) = (math::sqrt(self.alpha_bars[n]), math::sqrt(1.0 - self.alpha_bars[n]));
        a0.iter().zip(eps).map(|(&a, &e)| sa * a + sb * e).collect()
    }

    /// Clean estimate implied by a noise prediction; inverts
    /// [`add_noise`](Self::add_noise) when `eps` is the true noise.
    pub fn predict_x0(&self, xn: &[f64], n: usize, eps: &[f64]) -> Vec<f64> {
        let (sa, sb) = (math::sqrt(self.alpha_bars[n]), math::sqrt(1.0 - self.alpha_bars[n]));
        xn.iter().zip(eps).map(|(&x, &e)| (x - sb * e) / sa).collect()
    }

    /// Mean and variance of `q(x_{n-1} | x_n, x0)`.
    pub fn posterior(&self, x0: &[f64], xn: &[f64], n: usize) -> (Vec<f64>, f64) {
        let (ab, ab_prev) = (self.alpha_bars[n], self.alpha_bars[n - 1]);
        let beta = self.betas[n];
        let c0 = beta * math::sqrt(ab_prev) / (1.0 - ab);
        let cn = (1.0 - ab_prev) * math::sqrt(self.alphas[n]) / (1.0 - ab);
        let mean = x0.iter().zip(xn).map(|(&a, &x)| c0 * a + cn * x).collect();
        (mean, beta * (1.0 - ab_prev) / (1.0 - ab))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};

    #[test]
    fn alpha_bar_strictly_decreasing() {
        let s = NoiseSchedule::cosine(16);
        assert_eq!(s.alpha_bar(0), 1.0);
        for n in 1..=16 {
            assert!(s.alpha_bar(n) < s.alpha_bar(n - 1));
            assert!(s.beta(n) > 0.0 && s.beta(n) <= MAX_BETA);
        }
    }

    #[test]
    fn zero_noise_scales_only() {
        let s = NoiseSchedule::cosine(16);
        let a0 = [0.5, -0.25, 1.0, 0.0];
        let out = s.add_noise(&a0, 5, &[0.0; 4]);
        let k = math::sqrt(s.alpha_bar(5));
        for (o, a) in out.iter().zip(a0) {
            assert_eq!(*o, k * a);
        }
    }

    #[test]
    fn first_step_is_nearly_clean() {
        let s = NoiseSchedule::cosine(1000);
        let a0 = [0.5, -0.25];
        let out = s.add_noise(&a0, 1, &[1.0, 1.0]);
        for (o, a) in out.iter().zip(a0) {
            assert!((o - a).abs() < 0.01);
        }
    }

    #[test]
    fn forward_variance_matches_schedule() {
        let s = NoiseSchedule::cosine(16);
        let a0 = [0.3, -0.7, 0.0, 1.0];
        let mut r = rng::stream(0, Stream::Training);
        let draws = 10_000;
        for n in [2, 8, 16] {
            let mut sum = [0.0; 4];
            let mut sq = [0.0; 4];
            for _ in 0..draws {
                let eps: Vec<f64> = (0..4).map(|_| rng::standard_normal(&mut r)).collect();
                for (i, v) in s.add_noise(&a0, n, &eps).into_iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
            let target = 1.0 - s.alpha_bar(n);
            for i in 0..4 {
                let mean = sum[i] / draws as f64;
                let var = sq[i] / draws as f64 - mean * mean;
                assert!((var - target).abs() <= 0.05 * target, "n={n} var={var} target={target}");
            }
        }
    }

    #[test]
    fn perfect_denoising_reconstructs() {
        let s = NoiseSchedule::cosine(16);
        let mut r = rng::stream(1, Stream::Training);
        for n in 1..=16 {
            let a0: Vec<f64> = (0..32).map(|_| 2.0 * rng::uniform(&mut r) - 1.0).collect();
            let eps: Vec<f64> = (0..32).map(|_| rng::standard_normal(&mut r)).collect();
            let xn = s.add_noise(&a0, n, &eps);
            for (x, a) in s.predict_x0(&xn, n, &eps).iter().zip(&a0) {
                assert!((x - a).abs() <= 1e-10, "n={n}");
            }
        }
    }
}
