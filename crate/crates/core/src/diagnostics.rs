//! Live verification of the descent and variance-recursion inequalities, and
//! the per-step statistics a run reports.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{adam_step, Init, OptimizerState, ScalingBounds, SecondMomentRule};
use crate::oracles::Oracle;
use crate::problems::Problem;
use crate::schedules::Schedule;
use crate::vector::{check_dim, dist_sq, norm_sq, RealVector};

/// Relative slack on scaling-factor bounds, for rounding in √u + G_0.
pub const WITNESS_SLACK: f64 = 1e-12;

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    #[serde(rename = "F")]
    pub f_x: f64,
    pub grad_norm_sq: f64,
    /// ‖v_{t+1} − ∇F(x_t)‖².
    pub delta_t: f64,
    pub run_avg_grad: f64,
    pub run_avg_delta: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub beta_t: f64,
    pub eta_t: f64,
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running means of ‖∇F(x_t)‖² and Δ_t.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    count: u64,
    grad: KahanSum,
    delta: KahanSum,
}

/// Raw per-step metrics handed to [`Tracker::record`].
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub t: u64,
    pub f_x: f64,
    pub grad_norm_sq: f64,
    pub delta_t: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub beta_t: f64,
    pub eta_t: f64,
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, m: StepMetrics) -> Result<StepRecord> {
        for (name, v) in [
            ("F", m.f_x),
            ("grad_norm_sq", m.grad_norm_sq),
            ("delta_t", m.delta_t),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric {
                    iteration: m.t,
                    what: format!("{name} = {v}"),
                });
            }
        }
        self.count += 1;
        self.grad.add(m.grad_norm_sq);
        self.delta.add(m.delta_t);
        let n = self.count as f64;
        Ok(StepRecord {
            t: m.t,
            f_x: m.f_x,
            grad_norm_sq: m.grad_norm_sq,
            delta_t: m.delta_t,
            run_avg_grad: self.grad.value() / n,
            run_avg_delta: self.delta.value() / n,
            s_min: m.s_min,
            s_max: m.s_max,
            beta_t: m.beta_t,
            eta_t: m.eta_t,
        })
    }
}

/// Result of one descent-inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lemma3Outcome {
    /// Holds; `slack` = right-hand side − F(x_{t+1}).
    Pass {
        slack: f64,
    },
    /// Preconditions unmet, nothing asserted.
    Skipped,
    Fail {
        slack: f64,
    },
}

/// Quantities entering the descent inequality at one step.
#[derive(Debug, Clone, Copy)]
pub struct Lemma3Input<'a> {
    pub f_next: f64,
    pub f_cur: f64,
    pub grad: &'a [f64],
    pub v_next: &'a [f64],
    pub eta: f64,
    pub l_f: f64,
    pub bounds: ScalingBounds,
    /// Observed extremes of the step's scaling factor.
    pub s_min: f64,
    pub s_max: f64,
}

/// Checks
///
/// ```text
/// F(x_{t+1}) ≤ F(x_t) + (ηc_u/2)‖∇F(x_t) − v_{t+1}‖² − (ηc_l/2)‖∇F(x_t)‖² − (ηc_l/4)‖v_{t+1}‖²
/// ```
///
/// up to 1e-9·(1 + |F(x_t)|), provided η·L_F ≤ c_l/(2c_u²) and the observed
/// scaling factors lie in [c_l, c_u].
pub fn lemma3_check(input: &Lemma3Input<'_>) -> Lemma3Outcome {
    let ScalingBounds { c_l, c_u } = input.bounds;
    let precondition = input.eta * input.l_f <= c_l / (2.0 * c_u * c_u)
        && input
            .bounds
            .contains(input.s_min, input.s_max, WITNESS_SLACK);
    if !precondition {
        return Lemma3Outcome::Skipped;
    }
    let eta = input.eta;
    let rhs = input.f_cur + 0.5 * eta * c_u * dist_sq(input.grad, input.v_next)
        - 0.5 * eta * c_l * norm_sq(input.grad)
        - 0.25 * eta * c_l * norm_sq(input.v_next);
    let slack = rhs - input.f_next;
    if slack >= -1e-9 * (1.0 + input.f_cur.abs()) {
        Lemma3Outcome::Pass { slack }
    } else {
        Lemma3Outcome::Fail { slack }
    }
}

/// Fixed state for one Monte Carlo check of the moving-average variance recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma2Setup {
    pub z: RealVector,
    pub x_prev: RealVector,
    pub x_cur: RealVector,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2Report {
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the Monte Carlo estimate of lhs − rhs.
    pub stderr: f64,
}

pub const LEMMA2_MIN_TRIALS: usize = 10_000;

/// Monte Carlo check of
///
/// ```text
/// E‖z_{t+1} − h(x_t)‖² ≤ (1−β)‖z_t − h(x_{t−1})‖² + 2β²E‖O_h(x_t) − h(x_t)‖² + L²‖x_t − x_{t−1}‖²/β
/// ```
///
/// where z_{t+1} = (1−β)z_t + β·O_h(x_t). Both expectations are estimated from
/// the same draws; passes iff lhs ≤ rhs + 3·stderr.
pub fn lemma2_mc_check<R, H, O>(
    h: H,
    lipschitz: f64,
    mut oracle: O,
    setup: &Lemma2Setup,
    trials: usize,
    rng: &mut R,
) -> Result<Lemma2Report>
where
    R: Rng + ?Sized,
    H: Fn(&[f64]) -> RealVector,
    O: FnMut(&[f64], &mut R) -> RealVector,
{
    if trials < LEMMA2_MIN_TRIALS {
        return Err(Error::usage(format!(
            "variance check needs >= {LEMMA2_MIN_TRIALS} trials"
        )));
    }
    let beta = setup.beta;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::usage(format!("beta must be in (0,1], got {beta}")));
    }
    let d = setup.z.len();
    check_dim("variance check x_prev", d, setup.x_prev.len())?;
    check_dim("variance check x_cur", d, setup.x_cur.len())?;

    let h_cur = h(&setup.x_cur);
    let h_prev = h(&setup.x_prev);
    let fixed = (1.0 - beta) * dist_sq(&setup.z, &h_prev)
        + lipschitz * lipschitz * dist_sq(&setup.x_cur, &setup.x_prev) / beta;

    let mut lhs = KahanSum::default();
    let mut noise = KahanSum::default();
    let (mut diff_sum, mut diff_sq) = (0.0, 0.0);
    let mut z_next = vec![0.0; d];
    for _ in 0..trials {
        let draw = oracle(&setup.x_cur, rng);
        check_dim("variance check oracle draw", d, draw.len())?;
        for i in 0..d {
            z_next[i] = (1.0 - beta) * setup.z[i] + beta * draw[i];
        }
        let l = dist_sq(&z_next, &h_cur);
        let n = dist_sq(&draw, &h_cur);
        lhs.add(l);
        noise.add(n);
        let diff = l - 2.0 * beta * beta * n;
        diff_sum += diff;
        diff_sq += diff * diff;
    }
    let nt = trials as f64;
    let lhs = lhs.value() / nt;
    let rhs = fixed + 2.0 * beta * beta * noise.value() / nt;
    let mean = diff_sum / nt;
    let var = (diff_sq / nt - mean * mean).max(0.0) * nt / (nt - 1.0);
    let stderr = (var / nt).sqrt();
    Ok(Lemma2Report {
        pass: lhs <= rhs + 3.0 * stderr,
        lhs,
        rhs,
        stderr,
    })
}

/// Pathwise check counters of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCounts {
    pub lemma3_passed: u64,
    pub lemma3_skipped: u64,
    pub lemma3_failed: u64,
    /// Smallest descent slack seen among checked steps.
    pub lemma3_min_slack: Option<f64>,
    /// Steps whose scaling factor was compared against declared bounds.
    pub witness_checked: u64,
    pub witness_failed: u64,
    /// Steps of a decreasing schedule with β_t above c_1.
    pub beta_above_c1: u64,
}

impl DiagnosticCounts {
    pub fn all_passed(&self) -> bool {
        self.lemma3_failed == 0 && self.witness_failed == 0
    }

    pub fn merge(&mut self, other: &DiagnosticCounts) {
        self.lemma3_passed += other.lemma3_passed;
        self.lemma3_skipped += other.lemma3_skipped;
        self.lemma3_failed += other.lemma3_failed;
        self.witness_checked += other.witness_checked;
        self.witness_failed += other.witness_failed;
        self.beta_above_c1 += other.beta_above_c1;
        self.lemma3_min_slack = match (self.lemma3_min_slack, other.lemma3_min_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Everything one tracked run needs besides its random stream.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub oracle: &'a Oracle,
    pub rule: &'a SecondMomentRule,
    pub schedule: Schedule,
    /// Declared scaling bounds. Without them the descent check uses each
    /// step's observed extremes, and no witness check is made.
    pub bounds: Option<ScalingBounds>,
    pub init: Init,
    /// Last iteration index T; the run emits T + 1 records.
    pub horizon: u64,
    /// Turn pathwise failures into errors instead of only counting them.
    pub strict: bool,
}

/// A run of the Adam-style loop emitting one [`StepRecord`] per iteration.
pub struct Trajectory<'a, R: Rng> {
    spec: RunSpec<'a>,
    problem: &'a Problem,
    rng: R,
    state: OptimizerState,
    tracker: Tracker,
    counts: DiagnosticCounts,
    c1: Option<f64>,
    grad: RealVector,
    sample: RealVector,
    f_cur: f64,
    done: bool,
    last: Option<StepRecord>,
}

/// Starts a tracked run. Drawing v_0 for [`Init::Oracle`] consumes the first oracle sample.
pub fn track<'a, R: Rng>(spec: RunSpec<'a>, mut rng: R) -> Trajectory<'a, R> {
    let problem: &'a Problem = spec.oracle.problem();
    let d = problem.dim();
    let mut state = OptimizerState::new(spec.rule, problem.x0());
    if spec.init == Init::Oracle {
        spec.oracle
            .sample_into(problem.x0(), &mut rng, &mut state.v);
    }
    let c1 = match spec.schedule {
        Schedule::Decreasing(s) => Some(s.c1()),
        Schedule::Constant { .. } => None,
    };
    Trajectory {
        f_cur: problem.value_unchecked(problem.x0()),
        problem,
        rng,
        state,
        tracker: Tracker::new(),
        counts: DiagnosticCounts::default(),
        c1,
        grad: vec![0.0; d],
        sample: vec![0.0; d],
        done: false,
        last: None,
        spec,
    }
}

impl<'a, R: Rng> Trajectory<'a, R> {
    pub fn counts(&self) -> &DiagnosticCounts {
        &self.counts
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn last_record(&self) -> Option<&StepRecord> {
        self.last.as_ref()
    }

    /// Runs to completion, returning the final record.
    pub fn finish(&mut self) -> Result<StepRecord> {
        for r in self.by_ref() {
            r?;
        }
        self.last
            .ok_or_else(|| Error::usage("run produced no records"))
    }

    fn step(&mut self) -> Result<StepRecord> {
        let t = self.state.t;
        let (beta, eta) = self.spec.schedule.at(t);
        if let Some(c1) = self.c1 {
            if beta > c1 {
                self.counts.beta_above_c1 += 1;
            }
        }
        self.problem.grad_unchecked(&self.state.x, &mut self.grad);
        self.spec
            .oracle
            .sample_into(&self.state.x, &mut self.rng, &mut self.sample);
        let info = adam_step(self.spec.rule, &mut self.state, beta, eta, &self.sample)?;
        let f_next = self.problem.value_unchecked(&self.state.x);

        let metrics = StepMetrics {
            t,
            f_x: self.f_cur,
            grad_norm_sq: norm_sq(&self.grad),
            delta_t: dist_sq(&self.state.v, &self.grad),
            s_min: info.s_min,
            s_max: info.s_max,
            beta_t: beta,
            eta_t: eta,
        };
        let record = self.tracker.record(metrics)?;

        let mut failure = None;
        if let Some(bounds) = self.spec.bounds {
            self.counts.witness_checked += 1;
            if !bounds.contains(info.s_min, info.s_max, WITNESS_SLACK) {
                self.counts.witness_failed += 1;
                failure = Some(format!(
                    "scaling factor [{}, {}] outside declared [{}, {}]",
                    info.s_min, info.s_max, bounds.c_l, bounds.c_u
                ));
            }
        }
        let bounds = match self.spec.bounds {
            Some(b) => b,
            None => ScalingBounds {
                c_l: info.s_min,
                c_u: info.s_max,
            },
        };
        let outcome = lemma3_check(&Lemma3Input {
            f_next,
            f_cur: self.f_cur,
            grad: &self.grad,
            v_next: &self.state.v,
            eta,
            l_f: self.problem.lipschitz(),
            bounds,
            s_min: info.s_min,
            s_max: info.s_max,
        });
        match outcome {
            Lemma3Outcome::Skipped => self.counts.lemma3_skipped += 1,
            Lemma3Outcome::Pass { slack } | Lemma3Outcome::Fail { slack } => {
                self.counts.lemma3_min_slack =
                    Some(self.counts.lemma3_min_slack.map_or(slack, |m| m.min(slack)));
                if matches!(outcome, Lemma3Outcome::Pass { .. }) {
                    self.counts.lemma3_passed += 1;
                } else {
                    self.counts.lemma3_failed += 1;
                    failure.get_or_insert(format!("descent inequality violated, slack {slack}"));
                }
            }
        }
        self.f_cur = f_next;
        self.last = Some(record);

        match failure {
            Some(message) if self.spec.strict => Err(Error::Diagnostic {
                message,
                record: Box::new(record),
            }),
            _ => Ok(record),
        }
    }
}

impl<'a, R: Rng> Iterator for Trajectory<'a, R> {
    type Item = Result<StepRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.state.t > self.spec.horizon {
            return None;
        }
        let r = self.step();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::SeededRng;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn unit() -> ScalingBounds {
        ScalingBounds { c_l: 1.0, c_u: 1.0 }
    }

    #[test]
    fn lemma3_worked_example() {
        let p = Problem::quadratic_diag(vec![1.0, 1.0]).unwrap();
        let x = [1.0, 0.0];
        let v = [1.0, 0.0];
        let eta = 0.1;
        let next: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x - eta * v).collect();
        let f_next = p.value(&next).unwrap();
        assert_relative_eq!(f_next, 0.405, max_relative = 1e-14);
        let out = lemma3_check(&Lemma3Input {
            f_next,
            f_cur: p.value(&x).unwrap(),
            grad: &p.grad(&x).unwrap(),
            v_next: &v,
            eta,
            l_f: 1.0,
            bounds: unit(),
            s_min: 1.0,
            s_max: 1.0,
        });
        match out {
            Lemma3Outcome::Pass { slack } => assert_relative_eq!(slack, 0.02, max_relative = 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma3_exact_gradient_steps_pass() {
        let p = Problem::bounded_curl(3).unwrap();
        let mut x = vec![2.0, -0.3, 0.7];
        for _ in 0..200 {
            let g = p.grad(&x).unwrap();
            let next: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - 0.25 * g).collect();
            let out = lemma3_check(&Lemma3Input {
                f_next: p.value(&next).unwrap(),
                f_cur: p.value(&x).unwrap(),
                grad: &g,
                v_next: &g,
                eta: 0.25,
                l_f: p.lipschitz(),
                bounds: unit(),
                s_min: 1.0,
                s_max: 1.0,
            });
            assert!(matches!(out, Lemma3Outcome::Pass { .. }), "{out:?}");
            x = next;
        }
    }

    #[test]
    fn lemma3_skips_on_unmet_precondition() {
        let input = Lemma3Input {
            f_next: 100.0,
            f_cur: 0.0,
            grad: &[1.0],
            v_next: &[1.0],
            eta: 0.6,
            l_f: 1.0,
            bounds: unit(),
            s_min: 1.0,
            s_max: 1.0,
        };
        assert_eq!(lemma3_check(&input), Lemma3Outcome::Skipped);
        let outside = Lemma3Input {
            eta: 0.1,
            s_min: 0.5,
            ..input
        };
        assert_eq!(lemma3_check(&outside), Lemma3Outcome::Skipped);
        let checked = Lemma3Input { eta: 0.1, ..input };
        assert!(matches!(lemma3_check(&checked), Lemma3Outcome::Fail { .. }));
    }

    fn identity(x: &[f64]) -> RealVector {
        x.to_vec()
    }

    #[test]
    fn lemma2_noiseless_stationary() {
        let setup = Lemma2Setup {
            z: vec![1.0],
            x_prev: vec![0.0],
            x_cur: vec![0.0],
            beta: 0.5,
        };
        let mut rng = SeededRng::seed_from_u64(0);
        let r = lemma2_mc_check(
            identity,
            1.0,
            |x: &[f64], _: &mut SeededRng| x.to_vec(),
            &setup,
            10_000,
            &mut rng,
        )
        .unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.lhs, 0.25, max_relative = 1e-12);
        assert_relative_eq!(r.rhs, 0.5, max_relative = 1e-12);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn lemma2_gaussian_noise_closed_form() {
        let setup = Lemma2Setup {
            z: vec![0.0],
            x_prev: vec![0.0],
            x_cur: vec![0.0],
            beta: 0.5,
        };
        let mut rng = SeededRng::seed_from_u64(1);
        let noisy = |x: &[f64], r: &mut SeededRng| -> RealVector {
            x.iter()
                .map(|x| x + r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let r = lemma2_mc_check(identity, 1.0, noisy, &setup, 100_000, &mut rng).unwrap();
        assert!(r.pass);
        // Exact: lhs = β²·1 = 0.25, rhs = 2β²·1 = 0.5.
        assert!((r.lhs - 0.25).abs() < 0.01);
        assert!((r.rhs - 0.5).abs() < 0.02);
    }

    #[test]
    fn lemma2_full_weight() {
        let setup = Lemma2Setup {
            z: vec![3.0, -1.0],
            x_prev: vec![0.5, 0.5],
            x_cur: vec![0.0, 1.0],
            beta: 1.0,
        };
        let mut rng = SeededRng::seed_from_u64(2);
        let noisy = |x: &[f64], r: &mut SeededRng| -> RealVector {
            x.iter()
                .map(|x| x + r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let r = lemma2_mc_check(identity, 1.0, noisy, &setup, 50_000, &mut rng).unwrap();
        assert!(r.pass);
        assert!(r.rhs >= 2.0 * r.lhs);
        assert!(lemma2_mc_check(identity, 1.0, noisy, &setup, 10, &mut rng).is_err());
    }

    #[test]
    fn tracker_averages() {
        let mut tr = Tracker::new();
        let m = |t, g| StepMetrics {
            t,
            f_x: 0.0,
            grad_norm_sq: g,
            delta_t: 0.0,
            s_min: 1.0,
            s_max: 1.0,
            beta_t: 1.0,
            eta_t: 1.0,
        };
        assert_eq!(tr.record(m(0, 2.0)).unwrap().run_avg_grad, 2.0);
        assert_eq!(tr.record(m(1, 4.0)).unwrap().run_avg_grad, 3.0);

        let mut flat = Tracker::new();
        for t in 0..1000 {
            assert_eq!(flat.record(m(t, 4.0)).unwrap().run_avg_grad, 4.0);
        }
        assert!(matches!(
            flat.record(m(5, f64::NAN)),
            Err(Error::Numeric { iteration: 5, .. })
        ));
    }

    #[test]
    fn delta_is_estimation_error() {
        let v = [1.0, 0.0];
        let g = [0.0, 0.0];
        assert_eq!(dist_sq(&v, &g), 1.0);
    }

    #[test]
    fn trajectory_emits_horizon_plus_one_records() {
        let problem = Arc::new(Problem::bounded_curl(2).unwrap());
        let oracle = Oracle::gaussian(problem, 0.5, None).unwrap();
        let rule = SecondMomentRule::shb();
        let spec = RunSpec {
            oracle: &oracle,
            rule: &rule,
            schedule: Schedule::Constant {
                beta: 0.1,
                eta: 0.05,
            },
            bounds: Some(unit()),
            init: Init::Zero,
            horizon: 49,
            strict: true,
        };
        let mut traj = track(spec, SeededRng::seed_from_u64(3));
        let records: Vec<StepRecord> = traj.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(records.len(), 50);
        assert_eq!(records.last().unwrap().t, 49);
        let mean = records.iter().map(|r| r.grad_norm_sq).sum::<f64>() / 50.0;
        assert_relative_eq!(records[49].run_avg_grad, mean, max_relative = 1e-12);
        assert_eq!(traj.counts().lemma3_passed, 50);
        assert_eq!(traj.counts().witness_checked, 50);
    }
}
