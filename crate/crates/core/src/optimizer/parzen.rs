//! One-dimensional Parzen mixtures of truncated Gaussians on a bounded interval.

use crate::rng::Xoshiro256;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub mu: f64,
    pub sigma: f64,
    /// Probability mass of the untruncated Gaussian inside the domain.
    mass: f64,
}

/// Equal-weight mixture of Gaussians truncated to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenEstimator {
    lo: f64,
    hi: f64,
    components: Vec<Component>,
}

impl ParzenEstimator {
    /// One component per observation plus a prior component at the domain
    /// midpoint whose bandwidth is the domain width. An observation's
    /// bandwidth is the larger gap to its sorted neighbors (the single
    /// existing neighbor at either end, the domain width when alone),
    /// clipped to `[width / floor_divisor, width]`.
    pub fn fit(observations: &[f64], lo: f64, hi: f64, floor_divisor: u32) -> Self {
        let width = hi - lo;
        let min_bw = width / floor_divisor.max(1) as f64;
        let mut sorted = observations.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut components = Vec::with_capacity(n + 1);
        for i in 0..n {
            let left = (i > 0).then(|| sorted[i] - sorted[i - 1]);
            let right = (i + 1 < n).then(|| sorted[i + 1] - sorted[i]);
            let gap = match (left, right) {
                (Some(l), Some(r)) => l.max(r),
                (Some(g), None) | (None, Some(g)) => g,
                (None, None) => width,
            };
            components.push(Component::new(sorted[i], gap.clamp(min_bw, width), lo, hi));
        }
        components.push(Component::new(lo + 0.5 * width, width, lo, hi));
        Self { lo, hi, components }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let sum: f64 = self.components.iter().map(|c| c.pdf(x)).sum();
        sum / self.components.len() as f64
    }

    /// Log density computed with log-sum-exp so that far tails stay finite.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let logs: Vec<f64> = self.components.iter().map(|c| c.log_pdf(x)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        max + sum.ln() - (self.components.len() as f64).ln()
    }

    /// Picks a component uniformly, then draws from it by rejection.
    pub fn sample(&self, rng: &mut Xoshiro256) -> f64 {
        let c = &self.components[rng.below(self.components.len())];
        loop {
            let x = c.mu + c.sigma * rng.standard_normal();
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
    }
}

impl Component {
    fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        let mass = std_normal_cdf((hi - mu) / sigma) - std_normal_cdf((lo - mu) / sigma);
        Self { mu, sigma, mass }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.mass.ln()
    }

    fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on 10k intervals.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases: [&[f64]; 4] = [&[], &[0.5], &[0.0, 0.02, 0.9, 0.91, 1.0], &[0.3, 0.3, 0.3]];
        for obs in cases {
            let p = ParzenEstimator::fit(obs, 0.0, 1.0, 25);
            let total = integrate(|x| p.pdf(x), 0.0, 1.0);
            assert!((total - 1.0).abs() < 1e-6, "{obs:?}: {total}");
        }
    }

    #[test]
    fn bandwidths_follow_neighbor_gaps() {
        let p = ParzenEstimator::fit(&[0.1, 0.5, 0.6], 0.0, 1.0, 100);
        let sig: Vec<f64> = p.components().iter().map(|c| c.sigma).collect();
        assert!((sig[0] - 0.4).abs() < 1e-12);
        assert!((sig[1] - 0.4).abs() < 1e-12);
        assert!((sig[2] - 0.1).abs() < 1e-12);
        assert_eq!((p.components()[3].mu, sig[3]), (0.5, 1.0));
        let lone = ParzenEstimator::fit(&[0.2], 0.0, 1.0, 100);
        assert_eq!(lone.components()[0].sigma, 1.0);
        let tight = ParzenEstimator::fit(&[0.2, 0.2, 0.2], 0.0, 1.0, 100);
        assert_eq!(tight.components()[1].sigma, 0.01);
    }

    #[test]
    fn log_pdf_matches_pdf() {
        let p = ParzenEstimator::fit(&[0.1, 0.4, 0.45, 0.8], 0.0, 1.0, 100);
        for x in [0.0, 0.1, 0.33, 0.999, 1.0] {
            assert!((p.log_pdf(x) - p.pdf(x).ln()).abs() < 1e-10);
        }
        assert_eq!(p.pdf(1.5), 0.0);
    }

    #[test]
    fn samples_stay_in_domain_and_follow_mass() {
        let p = ParzenEstimator::fit(&[0.9, 0.92, 0.95, 0.97], 0.0, 1.0, 100);
        let mut rng = Xoshiro256::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000).map(|_| p.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        let high = xs.iter().filter(|&&x| x > 0.8).count() as f64 / xs.len() as f64;
        let expected = integrate(|x| p.pdf(x), 0.8, 1.0);
        assert!((high - expected).abs() < 0.03, "{high} vs {expected}");
    }
}
