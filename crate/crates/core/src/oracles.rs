//! Unbiased stochastic gradient oracles.
//!
//! Each oracle reports the constants of the variance condition
//! E‖O(x) − ∇F(x)‖² ≤ σ²(1 + c‖∇F(x)‖²) it satisfies, plus optional
//! almost-sure bounds on ‖O(x)‖∞ and ‖O(x)‖ that the second-moment rules
//! need for their scaling-factor guarantees.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::vector::{check_dim, dist_sq, RealVector};

/// Every run owns one of these; identical seeds give identical draw sequences.
pub type SeededRng = ChaCha8Rng;

/// Clamp used when clamping is requested without an explicit value, in units of σ.
pub const DEFAULT_CLAMP_SIGMAS: f64 = 6.0;

const MINIBATCH_VARIANCE_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub sigma_sq: f64,
    pub c: f64,
    /// Bound with ‖O(x)‖∞ ≤ g_inf for every x and every draw.
    pub g_inf: Option<f64>,
    /// Bound with ‖O(x)‖ ≤ g_two for every x and every draw.
    pub g_two: Option<f64>,
}

impl OracleSpec {
    /// The variance bound σ²(1 + c‖g‖²) at a point whose true gradient has squared norm `grad_norm_sq`.
    pub fn variance_bound(&self, grad_norm_sq: f64) -> f64 {
        self.sigma_sq * (1.0 + self.c * grad_norm_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullBatch {
    Full,
}

/// `"full"` for the deterministic full gradient, or a number of examples
/// drawn uniformly with replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Full(FullBatch),
    Size(usize),
}

/// `true` clamps at 6σ, a number clamps at that value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClampSetting {
    Default(bool),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OracleConfig {
    /// Returns ∇F(x) exactly.
    Exact,
    Gaussian {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clamp: Option<ClampSetting>,
        /// Overrides the reported relative-variance coefficient.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Coordinate,
    Minibatch {
        batch: BatchSize,
    },
}

impl OracleConfig {
    pub fn build(&self, problem: Arc<Problem>) -> Result<Oracle> {
        match self {
            OracleConfig::Exact => Oracle::gaussian(problem, 0.0, None),
            OracleConfig::Gaussian { sigma, clamp, c } => {
                let clamp = match clamp {
                    None | Some(ClampSetting::Default(false)) => None,
                    Some(ClampSetting::Default(true)) => Some(DEFAULT_CLAMP_SIGMAS * sigma),
                    Some(ClampSetting::Value(v)) => Some(*v),
                };
                let oracle = Oracle::gaussian(problem, *sigma, clamp)?;
                match c {
                    Some(c) => oracle.with_c(*c),
                    None => Ok(oracle),
                }
            }
            OracleConfig::Coordinate => Oracle::coordinate(problem),
            OracleConfig::Minibatch { batch } => Oracle::minibatch(problem, *batch),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Gaussian { coord_sd: f64, clamp: Option<f64> },
    Coordinate,
    Minibatch { batch: Option<usize> },
}

/// A stochastic gradient source for one problem.
#[derive(Debug, Clone)]
pub struct Oracle {
    problem: Arc<Problem>,
    kind: Kind,
    spec: OracleSpec,
    name: &'static str,
    empirical_sigma_sq: Option<f64>,
}

impl Oracle {
    /// ∇F(x) + ξ with ξ iid N(0, σ²/d) per coordinate, so E‖ξ‖² = σ².
    ///
    /// With `clamp`, each noise coordinate is clipped to [−clamp, clamp]; the
    /// clipped noise is still symmetric, and σ² stays a valid variance bound.
    pub fn gaussian(problem: Arc<Problem>, sigma: f64, clamp: Option<f64>) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::usage(format!(
                "gaussian oracle: sigma must be >= 0, got {sigma}"
            )));
        }
        if let Some(c) = clamp {
            if c.is_nan() || c < 0.0 {
                return Err(Error::usage(format!(
                    "gaussian oracle: clamp must be >= 0, got {c}"
                )));
            }
        }
        let d = problem.dim() as f64;
        // Zero noise needs no clamp to be bounded.
        let noise_inf = if sigma == 0.0 { Some(0.0) } else { clamp };
        let g_inf = match (problem.grad_bound_inf(), noise_inf) {
            (Some(g), Some(n)) => Some(g + n),
            _ => None,
        };
        let g_two = match (problem.grad_bound_two(), noise_inf) {
            (Some(g), Some(n)) => Some(g + d.sqrt() * n),
            _ => None,
        };
        Ok(Self {
            spec: OracleSpec {
                sigma_sq: sigma * sigma,
                c: 1.0,
                g_inf,
                g_two,
            },
            kind: Kind::Gaussian {
                coord_sd: sigma / d.sqrt(),
                clamp,
            },
            name: if sigma == 0.0 { "exact" } else { "gaussian" },
            problem,
            empirical_sigma_sq: None,
        })
    }

    /// d·∇F(x)∘eᵢ with i uniform; reports (σ² = 1, c = d − 1).
    pub fn coordinate(problem: Arc<Problem>) -> Result<Self> {
        let d = problem.dim() as f64;
        Ok(Self {
            spec: OracleSpec {
                sigma_sq: 1.0,
                c: d - 1.0,
                g_inf: problem.grad_bound_inf().map(|g| d * g),
                g_two: problem.grad_bound_inf().map(|g| d * g),
            },
            kind: Kind::Coordinate,
            name: "coordinate",
            problem,
            empirical_sigma_sq: None,
        })
    }

    /// Mini-batch gradient of the logistic objective, examples drawn with replacement.
    ///
    /// The reported σ² is the data bound (1/b)·(1/n)Σ‖aᵢ‖², which dominates the
    /// mini-batch variance at every x. The Monte Carlo estimate at x0 is kept
    /// alongside it for reference.
    pub fn minibatch(problem: Arc<Problem>, batch: BatchSize) -> Result<Self> {
        let data = problem.logistic_data().ok_or_else(|| {
            Error::usage("minibatch oracle needs a problem with per-example losses")
        })?;
        let (n, d) = (data.samples, data.dim);
        let lambda_term = data.lambda * crate::problems::CURL_GRAD_MAX;
        let max_entry = crate::vector::max_abs(&data.features);
        let max_row = (0..n)
            .map(|i| crate::vector::norm(data.row(i)))
            .fold(0.0, f64::max);
        let mean_row_sq = (0..n)
            .map(|i| crate::vector::norm_sq(data.row(i)))
            .sum::<f64>()
            / n as f64;

        let (batch, sigma_sq) = match batch {
            BatchSize::Full(_) => (None, 0.0),
            BatchSize::Size(0) => return Err(Error::usage("minibatch oracle: batch must be >= 1")),
            BatchSize::Size(b) => (Some(b), mean_row_sq / b as f64),
        };
        let (g_inf, g_two) = match batch {
            None => (problem.grad_bound_inf(), problem.grad_bound_two()),
            Some(_) => (
                Some(max_entry + lambda_term),
                Some(max_row + (d as f64).sqrt() * lambda_term),
            ),
        };
        let mut oracle = Self {
            spec: OracleSpec {
                sigma_sq,
                c: 1.0,
                g_inf,
                g_two,
            },
            kind: Kind::Minibatch { batch },
            name: "minibatch",
            problem,
            empirical_sigma_sq: None,
        };
        if batch.is_some() {
            let x0 = oracle.problem.x0().to_vec();
            let grad = oracle.problem.grad(&x0)?;
            let mut rng = SeededRng::seed_from_u64(0);
            let mut out = vec![0.0; d];
            let mut acc = 0.0;
            for _ in 0..MINIBATCH_VARIANCE_DRAWS {
                oracle.sample_into(&x0, &mut rng, &mut out);
                acc += dist_sq(&out, &grad);
            }
            oracle.empirical_sigma_sq = Some(acc / MINIBATCH_VARIANCE_DRAWS as f64);
        }
        Ok(oracle)
    }

    /// Replaces the reported relative-variance coefficient `c`.
    ///
    /// Only increasing `c` keeps the variance condition valid for oracles
    /// whose bound depends on it; the caller is trusted here.
    pub fn with_c(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::usage(format!("oracle c must be > 0, got {c}")));
        }
        self.spec.c = c;
        Ok(self)
    }

    pub fn spec(&self) -> OracleSpec {
        self.spec
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    /// Monte Carlo estimate of E‖O(x0) − ∇F(x0)‖² (mini-batch oracles only).
    pub fn empirical_sigma_sq(&self) -> Option<f64> {
        self.empirical_sigma_sq
    }

    /// One draw of O(x).
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<RealVector> {
        check_dim("oracle sample", self.problem.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.sample_into(x, rng, &mut out);
        Ok(out)
    }

    /// Every outcome of O(x) with its probability, for oracles with finite support
    /// (coordinate, exact, full batch). `None` for continuous or very large supports.
    pub fn support(&self, x: &[f64]) -> Result<Option<Vec<(f64, RealVector)>>> {
        let g = self.problem.grad(x)?;
        Ok(match &self.kind {
            Kind::Gaussian { coord_sd, .. } if *coord_sd == 0.0 => Some(vec![(1.0, g)]),
            Kind::Minibatch { batch: None } => Some(vec![(1.0, g)]),
            Kind::Coordinate => {
                let d = g.len();
                let outcomes = (0..d)
                    .map(|pick| {
                        let mut o = g.clone();
                        keep_coordinate(&mut o, pick);
                        (1.0 / d as f64, o)
                    })
                    .collect();
                Some(outcomes)
            }
            _ => None,
        })
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            Kind::Gaussian { coord_sd, clamp } => {
                self.problem.grad_unchecked(x, out);
                if *coord_sd > 0.0 {
                    for o in out.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        let mut noise = coord_sd * z;
                        if let Some(c) = clamp {
                            noise = noise.clamp(-c, *c);
                        }
                        *o += noise;
                    }
                }
            }
            Kind::Coordinate => {
                self.problem.grad_unchecked(x, out);
                let pick = rng.random_range(0..out.len());
                keep_coordinate(out, pick);
            }
            Kind::Minibatch { batch: None } => self.problem.grad_unchecked(x, out),
            Kind::Minibatch { batch: Some(b) } => {
                let n = self.problem.logistic_data().map(|d| d.samples).unwrap_or(1);
                let picks: Vec<usize> = (0..*b).map(|_| rng.random_range(0..n)).collect();
                self.problem.batch_grad_unchecked(x, &picks, out);
            }
        }
    }
}

/// Turns a full gradient into d·gᵢ·eᵢ in place.
fn keep_coordinate(g: &mut [f64], pick: usize) {
    let d = g.len() as f64;
    for (i, o) in g.iter_mut().enumerate() {
        *o = if i == pick { d * *o } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_problems;
    use crate::vector::norm_sq;

    fn curl(d: usize) -> Arc<Problem> {
        Arc::new(Problem::bounded_curl(d).unwrap())
    }

    /// Quadratic ½‖x‖² so that ∇F(x) = x can be dialled in directly.
    fn identity_quadratic(d: usize) -> Arc<Problem> {
        Arc::new(Problem::quadratic_diag(vec![1.0; d]).unwrap())
    }

    /// Monte Carlo mean and per-draw squared deviation of an oracle at `x`.
    fn moments(oracle: &Oracle, x: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
        let grad = oracle.problem().grad(x).unwrap();
        let d = x.len();
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        let mut dev = 0.0;
        for _ in 0..n {
            let s = oracle.sample(x, &mut rng).unwrap();
            for i in 0..d {
                sum[i] += s[i];
                sum_sq[i] += s[i] * s[i];
            }
            dev += dist_sq(&s, &grad);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let se: Vec<f64> = (0..d)
            .map(|i| ((sum_sq[i] / nf - mean[i] * mean[i]).max(0.0) / nf).sqrt())
            .collect();
        (mean, se, dev / nf)
    }

    #[test]
    fn zero_noise_is_exact() {
        let p = curl(3);
        let o = Oracle::gaussian(p.clone(), 0.0, None).unwrap();
        assert_eq!(o.spec().sigma_sq, 0.0);
        assert_eq!(o.spec().c, 1.0);
        let mut rng = SeededRng::seed_from_u64(9);
        let x = [0.3, -1.0, 2.0];
        assert_eq!(o.sample(&x, &mut rng).unwrap(), p.grad(&x).unwrap());
    }

    #[test]
    fn gaussian_per_coordinate_variance() {
        let o = Oracle::gaussian(identity_quadratic(4), 1.0, None).unwrap();
        let Kind::Gaussian { coord_sd, .. } = o.kind else {
            unreachable!()
        };
        assert_eq!(coord_sd * coord_sd, 0.25);
    }

    #[test]
    fn gaussian_mean_matches_gradient() {
        let o = Oracle::gaussian(identity_quadratic(2), 1.0, None).unwrap();
        let x = [0.7, -1.3];
        let (mean, _, _) = moments(&o, &x, 100_000, 11);
        for i in 0..2 {
            assert!((mean[i] - x[i]).abs() <= 3.0 / (1e5f64).sqrt());
        }
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(matches!(
            Oracle::gaussian(curl(1), -1.0, None),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn clamped_gaussian_bound() {
        let o = Oracle::gaussian(curl(1), 1.0, Some(3.0)).unwrap();
        let g = o.spec().g_inf.unwrap();
        assert!((g - 3.6495).abs() < 1e-4, "{g}");
        let mut rng = SeededRng::seed_from_u64(0);
        for i in 0..10_000 {
            let x = [(i as f64 - 5000.0) * 1e-3];
            let s = o.sample(&x, &mut rng).unwrap();
            assert!(s[0].abs() <= g);
        }
        let unclamped = Oracle::gaussian(curl(1), 1.0, None).unwrap();
        assert_eq!(unclamped.spec().g_inf, None);
    }

    #[test]
    fn clamp_default_is_six_sigma() {
        let cfg: OracleConfig =
            serde_json::from_str(r#"{"name":"gaussian","sigma":2.0,"clamp":true}"#).unwrap();
        let o = cfg.build(curl(1)).unwrap();
        assert!((o.spec().g_inf.unwrap() - (CURL_GRAD_MAX_TEST + 12.0)).abs() < 1e-12);
    }

    const CURL_GRAD_MAX_TEST: f64 = crate::problems::CURL_GRAD_MAX;

    #[test]
    fn coordinate_single_dimension_is_exact() {
        let p = curl(1);
        let o = Oracle::coordinate(p.clone()).unwrap();
        assert_eq!(o.spec().c, 0.0);
        let mut rng = SeededRng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(o.sample(&[0.4], &mut rng).unwrap(), p.grad(&[0.4]).unwrap());
        }
    }

    #[test]
    fn coordinate_outcomes_two_dims() {
        let o = Oracle::coordinate(identity_quadratic(2)).unwrap();
        let mut rng = SeededRng::seed_from_u64(5);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            let s = o.sample(&[1.0, 1.0], &mut rng).unwrap();
            match s.as_slice() {
                [a, b] if *a == 2.0 && *b == 0.0 => counts[0] += 1,
                [a, b] if *a == 0.0 && *b == 2.0 => counts[1] += 1,
                other => panic!("impossible draw {other:?}"),
            }
        }
        // Each outcome has probability ½; 5 standard errors of a binomial(10⁴, ½).
        assert!((counts[0] as f64 - 5000.0).abs() < 250.0, "{counts:?}");
    }

    /// Exact enumeration of the d equiprobable coordinate-oracle outcomes.
    fn enumerate_coordinate(grad: &[f64]) -> (Vec<f64>, f64) {
        let d = grad.len();
        let mut mean = vec![0.0; d];
        let mut var = 0.0;
        for i in 0..d {
            let mut draw = vec![0.0; d];
            draw[i] = d as f64 * grad[i];
            for j in 0..d {
                mean[j] += draw[j] / d as f64;
            }
            var += dist_sq(&draw, grad) / d as f64;
        }
        (mean, var)
    }

    #[test]
    fn coordinate_enumeration_examples() {
        let (_, var) = enumerate_coordinate(&[1.0, 1.0]);
        assert!((var - 2.0).abs() < 1e-12);
        let (mean, _) = enumerate_coordinate(&[1.0, 0.0, 0.0]);
        assert_eq!(mean, vec![1.0, 0.0, 0.0]);
        for d in [1usize, 2, 3, 10] {
            let g: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 1.1).collect();
            let (mean, var) = enumerate_coordinate(&g);
            assert!(dist_sq(&mean, &g).sqrt() < 1e-12);
            let exact = (d as f64 - 1.0) * norm_sq(&g);
            assert!((var - exact).abs() <= 1e-12 * (1.0 + exact));
            let spec = Oracle::coordinate(identity_quadratic(d)).unwrap().spec();
            assert!(var <= spec.variance_bound(norm_sq(&g)));
        }
    }

    #[test]
    fn minibatch_modes() {
        let p = Arc::new(Problem::logistic(10, 200, 42, 0.1).unwrap());
        let full = Oracle::minibatch(p.clone(), BatchSize::Full(FullBatch::Full)).unwrap();
        assert_eq!(full.spec().sigma_sq, 0.0);
        let mut rng = SeededRng::seed_from_u64(0);
        let x = p.x0().to_vec();
        assert_eq!(full.sample(&x, &mut rng).unwrap(), p.grad(&x).unwrap());

        // n draws with replacement is still random.
        let n_draws = Oracle::minibatch(p.clone(), BatchSize::Size(200)).unwrap();
        let (_, _, var) = moments(&n_draws, &x, 2_000, 3);
        assert!(var > 0.0);
        assert!(n_draws.empirical_sigma_sq().unwrap() > 0.0);
        assert!(n_draws.empirical_sigma_sq().unwrap() <= n_draws.spec().sigma_sq);

        assert!(matches!(
            Oracle::minibatch(p.clone(), BatchSize::Size(0)),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            Oracle::minibatch(curl(2), BatchSize::Size(1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn minibatch_single_example_is_unbiased() {
        let p = Arc::new(Problem::logistic(10, 200, 42, 0.1).unwrap());
        let o = Oracle::minibatch(p.clone(), BatchSize::Size(1)).unwrap();
        let x = p.x0().to_vec();
        let g = p.grad(&x).unwrap();
        let (mean, se, _) = moments(&o, &x, 100_000, 4);
        for i in 0..g.len() {
            assert!((mean[i] - g[i]).abs() <= 3.0 * se[i], "coord {i}");
        }
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let p = Arc::new(Problem::logistic(10, 200, 42, 0.1).unwrap());
        let a = Oracle::minibatch(p.clone(), BatchSize::Size(4)).unwrap();
        let b = Oracle::minibatch(p.clone(), BatchSize::Size(4)).unwrap();
        let mut ra = SeededRng::seed_from_u64(77);
        let mut rb = SeededRng::seed_from_u64(77);
        for _ in 0..50 {
            assert_eq!(
                a.sample(p.x0(), &mut ra).unwrap(),
                b.sample(p.x0(), &mut rb).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch() {
        let o = Oracle::coordinate(curl(3)).unwrap();
        let mut rng = SeededRng::seed_from_u64(0);
        assert!(matches!(o.sample(&[1.0], &mut rng), Err(Error::Usage(_))));
    }

    fn all_oracles() -> Vec<Oracle> {
        let mut out = Vec::new();
        for p in builtin_problems() {
            let p = Arc::new(p);
            out.push(Oracle::gaussian(p.clone(), 0.0, None).unwrap());
            out.push(Oracle::gaussian(p.clone(), 1.0, None).unwrap());
            out.push(Oracle::gaussian(p.clone(), 1.0, Some(1.0)).unwrap());
            out.push(Oracle::coordinate(p.clone()).unwrap());
            if p.logistic_data().is_some() {
                out.push(Oracle::minibatch(p.clone(), BatchSize::Size(1)).unwrap());
                out.push(Oracle::minibatch(p.clone(), BatchSize::Size(8)).unwrap());
            }
        }
        out
    }

    #[test]
    fn unbiased_and_variance_condition_at_fixed_points() {
        const N: usize = 100_000;
        let mut seed = 100;
        for o in all_oracles() {
            let d = o.problem().dim();
            for k in 0..10 {
                let x: Vec<f64> = (0..d)
                    .map(|i| ((k * 7 + i * 3) % 11) as f64 / 5.0 - 1.0)
                    .collect();
                let grad = o.problem().grad(&x).unwrap();
                seed += 1;
                let (mean, se, var) = moments(&o, &x, N, seed);
                for i in 0..d {
                    assert!(
                        (mean[i] - grad[i]).abs() <= 4.0 * se[i] + 1e-9 * (1.0 + grad[i].abs()),
                        "{} on {}: coord {i} mean {} vs {}",
                        o.name(),
                        o.problem().name(),
                        mean[i],
                        grad[i]
                    );
                }
                let bound =
                    o.spec().variance_bound(norm_sq(&grad)) * (1.0 + 4.0 / (N as f64).sqrt());
                assert!(
                    var <= bound + 1e-12,
                    "{} on {}: {var} > {bound}",
                    o.name(),
                    o.problem().name()
                );
            }
        }
    }
}
