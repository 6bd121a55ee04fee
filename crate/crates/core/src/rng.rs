//! Deterministic random number generation.
//!
//! Reproducibility is part of this crate's external contract: identical seeds
//! must produce bit-identical datasets, weight initializations, and batch
//! orders on every platform. To guarantee that, the generator is a fixed
//! PCG32 (XSH-RR 64/32) seeded through SplitMix64, with Box-Muller Gaussians
//! and a Marsaglia-Tsang gamma sampler layered on top.

/// PCG32 multiplier (Knuth's MMIX LCG constant).
const PCG_MULT: u64 = 6_364_136_223_846_793_005;
/// SplitMix64 increment (golden-ratio constant).
const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded PCG32 generator with convenience samplers.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    inc: u64,
    /// Spare Gaussian from the last Box-Muller pair.
    cached_gaussian: Option<f64>,
}

impl Rng {
    /// Builds a generator whose full 128-bit internal state is derived from
    /// `seed` via SplitMix64, so that nearby seeds give unrelated streams.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = splitmix64(&mut sm);
        // Stream selector must be odd.
        let inc = splitmix64(&mut sm) | 1;
        let mut rng = Rng {
            state: 0,
            inc,
            cached_gaussian: None,
        };
        // Standard PCG initialization: advance once with the seed folded in.
        rng.state = rng.state.wrapping_mul(PCG_MULT).wrapping_add(rng.inc);
        rng.state = rng.state.wrapping_add(state);
        rng.next_u32();
        rng
    }

    /// Next raw 32-bit output (PCG XSH-RR).
    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(PCG_MULT).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Next 64-bit output from two 32-bit draws.
    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform draw in the open interval (0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased uniform integer in `[0, bound)` by rejection.
    pub fn next_below(&mut self, bound: u32) -> u32 {
        assert!(bound > 0, "next_below requires a positive bound");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Standard Gaussian via Box-Muller; pairs are cached so consecutive
    /// calls consume uniforms two at a time.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_gaussian.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Gaussian with the given mean and standard deviation.
    pub fn gaussian_with(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.gaussian()
    }

    /// Gamma(shape, scale 1) via Marsaglia-Tsang squeeze; the shape < 1 case
    /// is boosted through Gamma(shape + 1) and a power of a uniform.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma requires a positive shape");
        if shape < 1.0 {
            let boost = self.gamma(shape + 1.0);
            let u = self.next_f64();
            return boost * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.gaussian();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.next_f64();
            // Cheap squeeze first, exact log test second.
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Inverse-gamma draw with the given shape and scale: the reciprocal of a
    /// Gamma(shape, rate = scale) draw.
    pub fn inverse_gamma(&mut self, shape: f64, scale: f64) -> f64 {
        assert!(scale > 0.0, "inverse_gamma requires a positive scale");
        scale / self.gamma(shape)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut items: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u32 + 1) as usize;
            items.swap(i, j);
        }
        items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_give_identical_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u32(), b.next_u32());
        }
        for _ in 0..100 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
            assert_eq!(a.gamma(2.5).to_bits(), b.gamma(2.5).to_bits());
        }
        assert_eq!(a.permutation(257), b.permutation(257));
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..64).filter(|_| a.next_u32() == b.next_u32()).count();
        assert!(same < 4);
    }

    #[test]
    fn uniform_is_in_open_unit_interval() {
        let mut rng = Rng::new(7);
        for _ in 0..100_000 {
            let u = rng.next_f64();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(1234);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        // 5-sigma bounds at n = 1e5: sd(mean) ~ 1/sqrt(n), sd(var) ~ sqrt(2/n).
        assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn gamma_moments() {
        let mut rng = Rng::new(99);
        let shape = 3.0;
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.gamma(shape)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!((mean - shape).abs() < 0.05, "mean {mean}");
        assert!((var - shape).abs() < 0.15, "var {var}");
    }

    #[test]
    fn gamma_small_shape_mean() {
        let mut rng = Rng::new(5);
        let shape = 0.4;
        let n = 200_000;
        let mean = (0..n).map(|_| rng.gamma(shape)).sum::<f64>() / n as f64;
        assert!((mean - shape).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn inverse_gamma_mean() {
        // InvGamma(shape a, scale b) has mean b / (a - 1) for a > 1.
        let mut rng = Rng::new(11);
        let n = 200_000;
        let mean = (0..n).map(|_| rng.inverse_gamma(3.0, 2.0)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut rng = Rng::new(21);
        let perm = rng.permutation(1000);
        let mut seen = vec![false; 1000];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn next_below_covers_range_uniformly() {
        let mut rng = Rng::new(3);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[rng.next_below(7) as usize] += 1;
        }
        for &c in &counts {
            // Expected 10000 per bucket; 5-sigma of a binomial is ~480.
            assert!((c as i64 - 10_000).abs() < 500, "counts {counts:?}");
        }
    }
}
