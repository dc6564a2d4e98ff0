//! Synthetic smooth objectives with analytic gradients and known constants.
//!
//! Every problem exposes F, ∇F, the gradient Lipschitz constant L_F and the
//! optimal value F_*, so all convergence diagnostics can be evaluated exactly.
//!
//! | name          | F(x)                                                   | L_F                   | F_*            |
//! |---------------|--------------------------------------------------------|-----------------------|----------------|
//! | `quadratic`   | ½ xᵀ diag(λ) x, λ linearly spaced in [µ, L]            | L                     | 0              |
//! | `boundedcurl` | Σᵢ xᵢ²/(1+xᵢ²)                                         | 2                     | 0              |
//! | `logistic`    | (1/n) Σᵢ log(1+exp(−yᵢ aᵢᵀx)) + λ Σⱼ xⱼ²/(1+xⱼ²)         | ‖A‖²/(4n) + 2λ        | by long GD     |

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{check_dim, norm_sq, RealVector};

/// max over x of |d/dx x²/(1+x²)| = 2x/(1+x²)², attained at x² = 1/3.
pub const CURL_GRAD_MAX: f64 = 0.649_519_052_838_329; // 3√3/8

/// Problem selection as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ProblemConfig {
    Quadratic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_l")]
        l: f64,
    },
    Boundedcurl {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Logistic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_dim() -> usize {
    10
}
fn default_mu() -> f64 {
    0.1
}
fn default_l() -> f64 {
    1.0
}
fn default_samples() -> usize {
    200
}
fn default_seed() -> u64 {
    42
}
fn default_lambda() -> f64 {
    0.1
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        match *self {
            ProblemConfig::Quadratic { dim, mu, l } => Problem::quadratic(dim, mu, l),
            ProblemConfig::Boundedcurl { dim } => Problem::bounded_curl(dim),
            ProblemConfig::Logistic {
                dim,
                samples,
                seed,
                lambda,
            } => Problem::logistic(dim, samples, seed, lambda),
        }
    }
}

/// Fixed synthetic classification data for the logistic objective.
///
/// Features are iid standard normal, labels are the sign of a random
/// linear score with 20% of them flipped so the data is not separable.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    pub seed: u64,
    pub samples: usize,
    pub dim: usize,
    /// Row-major `samples × dim`.
    pub features: Vec<f64>,
    /// ±1.
    pub labels: Vec<f64>,
    pub lambda: f64,
}

impl LogisticData {
    pub fn generate(dim: usize, samples: usize, seed: u64, lambda: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let row: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let score: f64 = row.iter().zip(&truth).map(|(a, w)| a * w).sum();
            let mut y = if score >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < 0.2 {
                y = -y;
            }
            features.extend(row);
            labels.push(y);
        }
        Self {
            seed,
            samples,
            dim,
            features,
            labels,
            lambda,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest eigenvalue of AᵀA by power iteration.
    fn spectral_norm_sq(&self) -> f64 {
        let d = self.dim;
        let mut gram = vec![0.0; d * d];
        for i in 0..self.samples {
            let a = self.row(i);
            for j in 0..d {
                for k in 0..d {
                    gram[j * d + k] += a[j] * a[k];
                }
            }
        }
        let mut v = vec![1.0; d];
        let mut eig = 0.0;
        for _ in 0..10_000 {
            let w: Vec<f64> = (0..d)
                .map(|j| (0..d).map(|k| gram[j * d + k] * v[k]).sum())
                .collect();
            let n = norm_sq(&w).sqrt();
            if n == 0.0 {
                return 0.0;
            }
            let next = crate::vector::dot(&v, &w) / norm_sq(&v);
            v = w.into_iter().map(|x| x / n).collect();
            if (next - eig).abs() <= 1e-15 * next {
                eig = next;
                break;
            }
            eig = next;
        }
        eig
    }

    /// Adds the gradient of example `i`'s logistic loss (without the regularizer) to `out`, scaled by `weight`.
    fn accumulate_example_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let a = self.row(i);
        let y = self.labels[i];
        let margin: f64 = y * a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        // d/dm log(1+e^{-m}) = -σ(-m)
        let coef = -y * sigmoid(-margin) * weight;
        for (o, a) in out.iter_mut().zip(a) {
            *o += coef * a;
        }
    }

    fn example_loss(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.row(i);
        let margin: f64 = self.labels[i] * a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        softplus(-margin)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn curl_value(x: &[f64]) -> f64 {
    x.iter().map(|x| x * x / (1.0 + x * x)).sum()
}

fn curl_grad_into(x: &[f64], scale: f64, out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(x) {
        let s = 1.0 + x * x;
        *o += scale * 2.0 * x / (s * s);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    Quadratic { diag: Vec<f64> },
    BoundedCurl,
    Logistic(LogisticData),
}

/// A smooth objective with known constants. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    name: String,
    dim: usize,
    x0: RealVector,
    lipschitz: f64,
    f_star: f64,
    grad_bound_inf: Option<f64>,
    grad_bound_two: Option<f64>,
    objective: Objective,
}

impl Problem {
    /// ½ xᵀAx with A diagonal, eigenvalues linearly spaced in [mu, l].
    pub fn quadratic(dim: usize, mu: f64, l: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("quadratic: dim must be positive"));
        }
        if !(mu > 0.0 && l >= mu && l.is_finite()) {
            return Err(Error::usage(format!(
                "quadratic: need 0 < mu <= l, got mu={mu}, l={l}"
            )));
        }
        let diag = if dim == 1 {
            vec![l]
        } else {
            (0..dim)
                .map(|i| mu + (l - mu) * i as f64 / (dim - 1) as f64)
                .collect()
        };
        Self::quadratic_diag(diag)
    }

    /// ½ xᵀ diag(d) x for an explicit positive diagonal.
    pub fn quadratic_diag(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::usage(
                "quadratic: diagonal must be non-empty and positive",
            ));
        }
        let dim = diag.len();
        let lipschitz = diag.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            name: "quadratic".into(),
            dim,
            x0: vec![1.0; dim],
            lipschitz,
            f_star: 0.0,
            grad_bound_inf: None,
            grad_bound_two: None,
            objective: Objective::Quadratic { diag },
        })
    }

    /// Σᵢ xᵢ²/(1+xᵢ²): non-convex, 2-smooth, with a globally bounded gradient.
    pub fn bounded_curl(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("boundedcurl: dim must be positive"));
        }
        Ok(Self {
            name: "boundedcurl".into(),
            dim,
            x0: vec![1.0; dim],
            lipschitz: 2.0,
            f_star: 0.0,
            grad_bound_inf: Some(CURL_GRAD_MAX),
            grad_bound_two: Some((dim as f64).sqrt() * CURL_GRAD_MAX),
            objective: Objective::BoundedCurl,
        })
    }

    /// Logistic loss with a non-convex regularizer on data generated from `seed`.
    ///
    /// F_* is found by deterministic full-gradient descent with step 1/L_F.
    pub fn logistic(dim: usize, samples: usize, seed: u64, lambda: f64) -> Result<Self> {
        if dim == 0 || samples == 0 {
            return Err(Error::usage("logistic: dim and samples must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::usage("logistic: lambda must be non-negative"));
        }
        let data = LogisticData::generate(dim, samples, seed, lambda);
        let lipschitz = data.spectral_norm_sq() / (4.0 * samples as f64) + 2.0 * lambda;

        // |∂ⱼ| ≤ (1/n)Σᵢ|aᵢⱼ| + λ·max|curl'|, and the 2-norm analogue.
        let n = samples as f64;
        let col_abs_mean = (0..dim)
            .map(|j| (0..samples).map(|i| data.row(i)[j].abs()).sum::<f64>() / n)
            .fold(0.0, f64::max);
        let row_norm_mean = (0..samples)
            .map(|i| norm_sq(data.row(i)).sqrt())
            .sum::<f64>()
            / n;

        let mut problem = Self {
            name: "logistic".into(),
            dim,
            x0: vec![1.0; dim],
            lipschitz,
            f_star: f64::NEG_INFINITY,
            grad_bound_inf: Some(col_abs_mean + lambda * CURL_GRAD_MAX),
            grad_bound_two: Some(row_norm_mean + lambda * (dim as f64).sqrt() * CURL_GRAD_MAX),
            objective: Objective::Logistic(data),
        };
        problem.f_star = problem.descend_to_minimum();
        Ok(problem)
    }

    fn descend_to_minimum(&self) -> f64 {
        let step = 1.0 / self.lipschitz;
        let mut x = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for _ in 0..200_000 {
            self.grad_unchecked(&x, &mut g);
            if norm_sq(&g) < 1e-24 {
                break;
            }
            for (x, g) in x.iter_mut().zip(&g) {
                *x -= step * g;
            }
        }
        self.value_unchecked(&x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Gradient Lipschitz constant L_F.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Δ_F = F(x0) − F_*.
    pub fn delta_f(&self) -> f64 {
        self.value_unchecked(&self.x0) - self.f_star
    }

    /// Global bound on ‖∇F(x)‖∞, when one exists.
    pub fn grad_bound_inf(&self) -> Option<f64> {
        self.grad_bound_inf
    }

    /// Global bound on ‖∇F(x)‖, when one exists.
    pub fn grad_bound_two(&self) -> Option<f64> {
        self.grad_bound_two
    }

    pub fn logistic_data(&self) -> Option<&LogisticData> {
        match &self.objective {
            Objective::Logistic(d) => Some(d),
            _ => None,
        }
    }

    /// Returns a copy starting from `x0` instead of the default all-ones point.
    pub fn with_start(mut self, x0: RealVector) -> Result<Self> {
        check_dim("start point", self.dim, x0.len())?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim("eval", self.dim, x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<RealVector> {
        check_dim("grad", self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        self.grad_unchecked(x, &mut g);
        Ok(g)
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { diag } => {
                0.5 * diag.iter().zip(x).map(|(d, x)| d * x * x).sum::<f64>()
            }
            Objective::BoundedCurl => curl_value(x),
            Objective::Logistic(data) => {
                let loss: f64 = (0..data.samples).map(|i| data.example_loss(i, x)).sum();
                loss / data.samples as f64 + data.lambda * curl_value(x)
            }
        }
    }

    /// Writes ∇F(x) into `out`.
    pub(crate) fn grad_unchecked(&self, x: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { diag } => {
                for ((o, d), x) in out.iter_mut().zip(diag).zip(x) {
                    *o = d * x;
                }
            }
            Objective::BoundedCurl => {
                out.fill(0.0);
                curl_grad_into(x, 1.0, out);
            }
            Objective::Logistic(data) => {
                out.fill(0.0);
                let w = 1.0 / data.samples as f64;
                for i in 0..data.samples {
                    data.accumulate_example_grad(i, x, w, out);
                }
                curl_grad_into(x, data.lambda, out);
            }
        }
    }

    /// Mini-batch gradient over the listed example indices (logistic only).
    pub(crate) fn batch_grad_unchecked(&self, x: &[f64], batch: &[usize], out: &mut [f64]) {
        let Objective::Logistic(data) = &self.objective else {
            self.grad_unchecked(x, out);
            return;
        };
        out.fill(0.0);
        let w = 1.0 / batch.len() as f64;
        for &i in batch {
            data.accumulate_example_grad(i, x, w, out);
        }
        curl_grad_into(x, data.lambda, out);
    }
}

/// The default problem set: a convex quadratic, the bounded-gradient curl and
/// the regularized logistic loss, all in dimension 10.
pub fn builtin_problems() -> Vec<Problem> {
    vec![
        Problem::quadratic(10, 0.1, 1.0).expect("valid quadratic"),
        Problem::bounded_curl(10).expect("valid boundedcurl"),
        Problem::logistic(10, 200, 42, 0.1).expect("valid logistic"),
    ]
}
