//! Quasi-Monte-Carlo standard-normal draws built from Halton sequences.
//!
//! Each random coefficient gets its own prime base (2, 3, 5, ... in
//! declaration order). Individual `i` receives the contiguous block of points
//! `burn_in + i*R + 1 ..= burn_in + (i+1)*R` of every sequence, and the
//! uniforms are mapped to normals by the inverse normal CDF. The tensor is
//! built once per estimation and reused by every likelihood evaluation, which
//! keeps the simulated likelihood a smooth function of the parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniforms are clamped to `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]` before the
/// normal transform.
pub const UNIFORM_CLAMP: f64 = 1e-12;

pub const DEFAULT_BURN_IN: usize = 10;

const PRIME_TABLE: [u64; 30] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113,
];

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// The `index`-th element (1-based) of the Halton sequence in `base`.
///
/// The reversed digits are accumulated as an integer fraction and divided
/// once, so the result is the correctly rounded value of the exact rational.
pub fn radical_inverse(base: u64, index: u64) -> f64 {
    let mut numerator: u64 = 0;
    let mut denominator: u64 = 1;
    let mut i = index;
    while i > 0 {
        numerator = numerator * base + i % base;
        denominator *= base;
        i /= base;
    }
    numerator as f64 / denominator as f64
}

/// Elements `burn_in + 1 ..= burn_in + count` of the Halton sequence.
pub fn radical_inverse_sequence(base: u64, count: usize, burn_in: usize) -> Result<Vec<f64>> {
    if !is_prime(base) {
        return Err(Error::Config(format!("Halton base {base} is not prime")));
    }
    let start = burn_in as u64 + 1;
    Ok((start..start + count as u64)
        .map(|i| radical_inverse(base, i))
        .collect())
}

/// Φ⁻¹(u) for `0 < u < 1`.
pub fn standard_normal_from_uniform(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < u < 1, got {u}"
        )));
    }
    Ok(normal_quantile(u))
}

/// Wichura's AS 241 (PPND16), accurate to about 1e-16 relative.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33_430.575_583_588_128) * r
            + 67_265.770_927_008_7)
            * r
            + 45_921.953_931_549_87)
            * r
            + 13_731.693_765_509_461)
            * r
            + 1971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5226.495_278_852_546 + 28_729.085_735_721_943) * r
            + 39_307.895_800_092_71)
            * r
            + 21_213.794_301_586_596)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_6;
        let den = ((((((r * 1.050_750_071_644_416_8e-9 + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawPlan {
    pub n_draws: usize,
    pub dimensions: usize,
    pub primes: Vec<u64>,
    pub burn_in: usize,
    /// Shuffles each dimension's points across individuals when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
}

impl DrawPlan {
    /// `n_draws` points per individual for `dimensions` random coefficients,
    /// using the first `dimensions` primes and the default burn-in.
    pub fn new(n_draws: usize, dimensions: usize) -> Result<Self> {
        if dimensions > PRIME_TABLE.len() {
            return Err(Error::Config(format!(
                "{dimensions} random dimensions exceed the {} built-in Halton primes",
                PRIME_TABLE.len()
            )));
        }
        let plan = DrawPlan {
            n_draws,
            dimensions,
            primes: PRIME_TABLE[..dimensions].to_vec(),
            burn_in: DEFAULT_BURN_IN,
            permutation_seed: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Replaces the primes. The list must cover every dimension.
    pub fn with_primes(mut self, primes: Vec<u64>) -> Result<Self> {
        self.primes = primes;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("the number of draws must be at least 1".into()));
        }
        if self.primes.len() < self.dimensions {
            return Err(Error::Config(format!(
                "{} random dimensions but only {} Halton primes",
                self.dimensions,
                self.primes.len()
            )));
        }
        if let Some(p) = self.primes.iter().find(|&&p| !is_prime(p)) {
            return Err(Error::Config(format!("Halton base {p} is not prime")));
        }
        if self.primes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "Halton primes must be distinct and ascending".into(),
            ));
        }
        Ok(())
    }
}

/// `N × R × K` standard-normal draws, row-major by individual then draw.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawTensor {
    values: Vec<f64>,
    n_individuals: usize,
    plan: DrawPlan,
}

impl DrawTensor {
    pub fn plan(&self) -> &DrawPlan {
        &self.plan
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_draws(&self) -> usize {
        self.plan.n_draws
    }

    pub fn dimensions(&self) -> usize {
        self.plan.dimensions
    }

    /// The `K` normals of draw `r` for individual `n`.
    #[inline]
    pub fn row(&self, n: usize, r: usize) -> &[f64] {
        let k = self.plan.dimensions;
        let start = (n * self.plan.n_draws + r) * k;
        &self.values[start..start + k]
    }

    /// All `R × K` draws of individual `n`.
    #[inline]
    pub fn individual(&self, n: usize) -> &[f64] {
        let block = self.plan.n_draws * self.plan.dimensions;
        &self.values[n * block..(n + 1) * block]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn build_draw_tensor(plan: &DrawPlan, n_individuals: usize) -> Result<DrawTensor> {
    plan.validate()?;
    let r = plan.n_draws;
    let k = plan.dimensions;
    let total = n_individuals * r;
    let mut values = vec![0.0; total * k];
    for (dim, &base) in plan.primes.iter().take(k).enumerate() {
        let mut uniforms = radical_inverse_sequence(base, total, plan.burn_in)?;
        if let Some(seed) = plan.permutation_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(dim as u64);
            uniforms.shuffle(&mut rng);
        }
        for (point, u) in uniforms.into_iter().enumerate() {
            let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
            values[point * k + dim] = normal_quantile(u);
        }
    }
    Ok(DrawTensor {
        values,
        n_individuals,
        plan: plan.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn base_two_and_three() {
        assert_eq!(radical_inverse_sequence(2, 4, 0).unwrap(), [0.5, 0.25, 0.75, 0.125]);
        assert_eq!(
            radical_inverse_sequence(3, 3, 0).unwrap(),
            [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0]
        );
        assert_eq!(radical_inverse_sequence(2, 2, 2).unwrap(), [0.75, 0.125]);
    }

    #[test]
    fn non_prime_base_rejected() {
        assert!(matches!(radical_inverse_sequence(4, 3, 0), Err(Error::Config(_))));
        assert!(matches!(radical_inverse_sequence(1, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_domain() {
        assert_eq!(standard_normal_from_uniform(0.5).unwrap(), 0.0);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(standard_normal_from_uniform(bad).is_err());
        }
        let u = 0.31;
        let a = standard_normal_from_uniform(u).unwrap();
        let b = standard_normal_from_uniform(1.0 - u).unwrap();
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn tensor_blocking() {
        let plan = DrawPlan::new(2, 1).unwrap().with_burn_in(0);
        let t = build_draw_tensor(&plan, 1).unwrap();
        assert_eq!(t.row(0, 0), [0.0]);
        assert!((t.row(0, 1)[0] + 0.674_489_750_196_081_7).abs() < 1e-12);

        let plan = DrawPlan::new(1, 1).unwrap().with_burn_in(0);
        let t = build_draw_tensor(&plan, 2).unwrap();
        assert_eq!(t.row(1, 0)[0], normal_quantile(0.25));
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let plan = DrawPlan::new(50, 3).unwrap();
        let a = build_draw_tensor(&plan, 20).unwrap();
        let b = build_draw_tensor(&plan, 20).unwrap();
        assert_eq!(a, b);
        let mut shuffled = plan.clone();
        shuffled.permutation_seed = Some(7);
        let c = build_draw_tensor(&shuffled, 20).unwrap();
        assert_eq!(c, build_draw_tensor(&shuffled, 20).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn too_many_dimensions() {
        assert!(DrawPlan::new(10, 31).is_err());
        let plan = DrawPlan::new(10, 2).unwrap();
        assert!(plan.clone().with_primes(vec![2]).is_err());
        assert!(plan.clone().with_primes(vec![3, 2]).is_err());
        assert!(plan.with_primes(vec![2, 9]).is_err());
    }

    #[test]
    fn normal_moments() {
        let plan = DrawPlan::new(200, 3).unwrap();
        let t = build_draw_tensor(&plan, 60).unwrap();
        for dim in 0..3 {
            let xs: Vec<f64> = t.values().iter().skip(dim).step_by(3).copied().collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 0.02, "dim {dim}: mean {mean}");
            assert!((sd - 1.0).abs() < 0.02, "dim {dim}: sd {sd}");
        }
    }

    proptest! {
        #[test]
        fn halton_points_are_distinct_and_interior(
            base in prop::sample::select(PRIME_TABLE.to_vec()),
            n in 0usize..400,
            burn in 0usize..50,
        ) {
            let xs = radical_inverse_sequence(base, n, burn).unwrap();
            prop_assert_eq!(xs.len(), n);
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            prop_assert_eq!(sorted.len(), n);
            prop_assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}
