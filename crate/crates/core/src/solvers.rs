//! Constrained-optimization engines shared by the learners: a proximal
//! first-order inner solver for smooth-loss + L1 objectives, the augmented
//! Lagrangian outer loop, and the decreasing-(mu, s) central-path scheme for
//! the log-det constraint.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::acyclicity::{h_ldet_value_grad, h_value, AcyclicityKind};
use crate::error::{Error, Result};
use crate::linalg::norm_fro;

/// Smooth part of an objective over a weight matrix.
pub trait SmoothScore {
    fn value(&self, w: &Array2<f64>) -> Result<f64>;
    fn value_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)>;
}

/// Zero score; useful for feasibility-only solves and tests.
pub struct ZeroScore;

impl SmoothScore for ZeroScore {
    fn value(&self, _w: &Array2<f64>) -> Result<f64> {
        Ok(0.0)
    }
    fn value_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        Ok((0.0, Array2::zeros(w.raw_dim())))
    }
}

/// A smooth equality constraint h(W) = 0 driven to zero by the ALM loop.
pub trait EqualityConstraint {
    fn h(&self, w: &Array2<f64>) -> Result<f64>;
    fn h_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)>;
}

impl EqualityConstraint for AcyclicityKind {
    fn h(&self, w: &Array2<f64>) -> Result<f64> {
        h_value(*self, &w.view())
    }
    fn h_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let h = h_value(*self, &w.view())?;
        let g = crate::acyclicity::h_gradient(*self, &w.view())?;
        Ok((h, g))
    }
}

/// Proximal map of t*|x|: shrink toward zero by t.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step size; no sufficient-decrease check.
    Fixed { step: f64 },
    /// Halving line search starting from `init`, growing gently after
    /// accepted steps.
    Backtracking { init: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop when the composite gradient-mapping norm drops below this.
    pub tol: f64,
    /// L1 weight applied through the proximal step.
    pub lambda1: f64,
    /// Keep the diagonal pinned to zero (weight-matrix problems). Disable for
    /// plain vector regressions encoded as m x 1 matrices.
    pub pin_diagonal: bool,
}

impl Default for InnerConfig {
    fn default() -> InnerConfig {
        InnerConfig {
            step: StepRule::Backtracking { init: 1.0 },
            max_iters: 20_000,
            tol: 1e-6,
            lambda1: 0.0,
            pin_diagonal: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub w: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 50;
const STEP_GROWTH: f64 = 1.5;
const STEP_CAP: f64 = 1e6;

/// ISTA with a halving line search: repeatedly takes the proximal-gradient
/// step z = prox(w - t grad, t*lambda1), halving t until the smooth part
/// satisfies its quadratic majorization at z, which makes the composite
/// objective non-increasing across accepted steps. Trial points where the
/// loss is non-finite (or raises a domain error) are rejected the same way.
pub fn prox_grad_minimize(
    score: &dyn SmoothScore,
    init: &Array2<f64>,
    cfg: &InnerConfig,
) -> Result<ProxOutcome> {
    let mut w = init.clone();
    if cfg.pin_diagonal {
        pin_diagonal(&mut w);
    }
    let (mut f, mut g) = score.value_grad(&w)?;
    if !f.is_finite() {
        return Err(Error::Numerical("loss is non-finite at the initial point".into()));
    }
    let mut t = match cfg.step {
        StepRule::Fixed { step } => step,
        StepRule::Backtracking { init } => init,
    };
    let backtracking = matches!(cfg.step, StepRule::Backtracking { .. });

    #[cfg(debug_assertions)]
    let mut composite_prev = f + cfg.lambda1 * l1_norm(&w);

    for iter in 0..cfg.max_iters {
        let mut halvings = 0usize;
        let z = loop {
            let mut z = &w - &(&g * t);
            z.mapv_inplace(|v| soft_threshold(v, t * cfg.lambda1));
            if cfg.pin_diagonal {
                pin_diagonal(&mut z);
            }
            if !backtracking {
                break z;
            }
            match score.value(&z) {
                Ok(fz) if fz.is_finite() => {
                    let dz = &z - &w;
                    let quad =
                        f + (&g * &dz).sum() + dz.iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
                    if fz <= quad + 1e-12 {
                        break z;
                    }
                }
                Ok(_) | Err(Error::LdetDomain) | Err(Error::Numerical(_)) => {}
                Err(e) => return Err(e),
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::SolverBreakdown {
                    message: format!(
                        "line search exhausted {MAX_HALVINGS} halvings at iteration {iter}"
                    ),
                    last: Box::new(w),
                });
            }
            t *= 0.5;
        };

        let map_norm = norm_fro(&(&w - &z).view()) / t;
        w = z;
        let (fz, gz) = match score.value_grad(&w) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::SolverBreakdown {
                    message: format!("gradient evaluation failed after an accepted step: {e}"),
                    last: Box::new(w),
                })
            }
        };
        f = fz;
        g = gz;

        #[cfg(debug_assertions)]
        {
            let composite = f + cfg.lambda1 * l1_norm(&w);
            if backtracking {
                debug_assert!(
                    composite <= composite_prev + 1e-9,
                    "composite objective increased: {composite_prev} -> {composite}"
                );
            }
            composite_prev = composite;
        }

        if map_norm <= cfg.tol {
            return Ok(ProxOutcome {
                w,
                iterations: iter + 1,
                converged: true,
            });
        }
        if backtracking {
            t = (t * STEP_GROWTH).min(STEP_CAP);
        }
    }
    Ok(ProxOutcome {
        w,
        iterations: cfg.max_iters,
        converged: false,
    })
}

fn pin_diagonal(w: &mut Array2<f64>) {
    let d = w.nrows().min(w.ncols());
    for i in 0..d {
        w[[i, i]] = 0.0;
    }
}

#[cfg(debug_assertions)]
fn l1_norm(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

/// One per-outer-round trace record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub stage: usize,
    pub score: f64,
    pub h: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "stage={} score={:.6e} h={:.6e} alpha={:.6e} mu={:.6e}",
            self.stage, self.score, self.h, self.alpha, self.mu
        )
    }
}

pub type TraceSink<'a> = Option<&'a mut dyn FnMut(TraceRecord)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    /// Penalty growth factor.
    pub eta: f64,
    /// Required violation-reduction ratio between outer rounds.
    pub gamma: f64,
    /// Stopping tolerance on h.
    pub eps_h: f64,
    pub max_outer: usize,
    pub mu0: f64,
    pub mu_max: f64,
    pub inner: InnerConfig,
}

impl Default for AlmConfig {
    fn default() -> AlmConfig {
        AlmConfig {
            eta: 10.0,
            gamma: 0.25,
            eps_h: 1e-8,
            max_outer: 100,
            mu0: 1.0,
            mu_max: 1e16,
            inner: InnerConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlmOutcome {
    pub w: Array2<f64>,
    pub h: f64,
    pub outer_iterations: usize,
    /// Whether h dropped below eps_h.
    pub converged: bool,
}

struct AlmObjective<'a> {
    score: &'a dyn SmoothScore,
    constraint: &'a dyn EqualityConstraint,
    alpha: f64,
    mu: f64,
}

impl SmoothScore for AlmObjective<'_> {
    fn value(&self, w: &Array2<f64>) -> Result<f64> {
        let f = self.score.value(w)?;
        let h = self.constraint.h(w)?;
        Ok(f + self.alpha * h + 0.5 * self.mu * h * h)
    }
    fn value_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let (f, fg) = self.score.value_grad(w)?;
        let (h, hg) = self.constraint.h_grad(w)?;
        let v = f + self.alpha * h + 0.5 * self.mu * h * h;
        let g = fg + &(&hg * (self.alpha + self.mu * h));
        Ok((v, g))
    }
}

/// Augmented Lagrangian loop: minimizes F(W) + alpha_t h + (mu_t/2) h^2 with
/// the proximal inner solver, then updates alpha += mu h and grows mu by eta
/// whenever |h| failed to shrink by the factor gamma. Stops when |h| < eps_h
/// or the outer budget runs out (the outcome records which).
pub fn alm_solve(
    score: &dyn SmoothScore,
    constraint: &dyn EqualityConstraint,
    cfg: &AlmConfig,
    init: &Array2<f64>,
    mut trace: TraceSink<'_>,
) -> Result<AlmOutcome> {
    let mut w = init.clone();
    let mut alpha = 0.0;
    let mut mu = cfg.mu0;
    let mut h_prev = constraint.h(&w)?.abs();
    let mut stuck_rounds = 0usize;

    for outer in 0..cfg.max_outer {
        let objective = AlmObjective {
            score,
            constraint,
            alpha,
            mu,
        };
        let sub = prox_grad_minimize(&objective, &w, &cfg.inner)?;
        w = sub.w;
        let h = constraint.h(&w)?;
        if let Some(sink) = trace.as_deref_mut() {
            sink(TraceRecord {
                stage: outer,
                score: score.value(&w)?,
                h,
                alpha,
                mu,
            });
        }
        if h.abs() < cfg.eps_h {
            return Ok(AlmOutcome {
                w,
                h,
                outer_iterations: outer + 1,
                converged: true,
            });
        }
        alpha += mu * h;
        if h.abs() > cfg.gamma * h_prev {
            mu = (mu * cfg.eta).min(cfg.mu_max);
        }
        if mu >= cfg.mu_max {
            if h.abs() >= h_prev {
                stuck_rounds += 1;
                if stuck_rounds >= 5 {
                    return Err(Error::NonConvergence(format!(
                        "h stalled at {h:.3e} for {stuck_rounds} rounds with mu at its cap \
                         ({:.1e}) after {} outer iterations",
                        cfg.mu_max,
                        outer + 1
                    )));
                }
            } else {
                stuck_rounds = 0;
            }
        }
        h_prev = h.abs();
    }
    let h = constraint.h(&w)?;
    Ok(AlmOutcome {
        w,
        h,
        outer_iterations: cfg.max_outer,
        converged: h.abs() < cfg.eps_h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralPathConfig {
    /// Log-det s parameter per stage; the last value repeats if there are
    /// fewer entries than mu stages.
    pub s_schedule: Vec<f64>,
    /// Decreasing loss weights; one optimization stage per entry.
    pub mu_schedule: Vec<f64>,
    pub inner: InnerConfig,
}

impl Default for CentralPathConfig {
    fn default() -> CentralPathConfig {
        CentralPathConfig {
            s_schedule: vec![1.0, 0.9, 0.8],
            mu_schedule: vec![1.0, 0.1, 0.01, 0.001],
            inner: InnerConfig {
                max_iters: 30_000,
                ..InnerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralPathOutcome {
    pub w: Array2<f64>,
    pub h: f64,
    pub converged: bool,
}

struct StageObjective<'a> {
    score: &'a dyn SmoothScore,
    mu: f64,
    s: f64,
}

impl SmoothScore for StageObjective<'_> {
    fn value(&self, w: &Array2<f64>) -> Result<f64> {
        let f = self.score.value(w)?;
        let (h, _) = h_ldet_value_grad(&w.view(), self.s)?;
        Ok(self.mu * f + h)
    }
    fn value_grad(&self, w: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let (f, fg) = self.score.value_grad(w)?;
        let (h, hg) = h_ldet_value_grad(&w.view(), self.s)?;
        Ok((self.mu * f + h, fg * self.mu + &hg))
    }
}

/// Path-following scheme for the log-det constraint: each (mu, s) stage
/// minimizes mu * F(W) + h_ldet(W, s) (with the L1 weight scaled by mu),
/// warm-starting from the previous stage. Proximal steps that leave the
/// log-det domain are rejected by the line search, which halves the step.
pub fn central_path_solve(
    score: &dyn SmoothScore,
    cfg: &CentralPathConfig,
    init: &Array2<f64>,
    mut trace: TraceSink<'_>,
) -> Result<CentralPathOutcome> {
    if cfg.mu_schedule.is_empty() || cfg.s_schedule.is_empty() {
        return Err(Error::Parameter("central path schedules must be nonempty".into()));
    }
    if cfg
        .mu_schedule
        .iter()
        .chain(cfg.s_schedule.iter())
        .any(|&v| !(v > 0.0))
    {
        return Err(Error::Parameter("central path schedules must be positive".into()));
    }
    let mut w = init.clone();
    let mut converged = true;
    let mut last_s = *cfg.s_schedule.last().unwrap();
    for (stage, &mu) in cfg.mu_schedule.iter().enumerate() {
        let s = *cfg
            .s_schedule
            .get(stage)
            .unwrap_or_else(|| cfg.s_schedule.last().unwrap());
        last_s = s;
        // A shrinking s can strand the warm start outside the new domain;
        // pull it toward the origin (always interior) until feasible.
        let mut guard = 0;
        while h_ldet_value_grad(&w.view(), s).is_err() {
            w *= 0.9;
            guard += 1;
            if guard > MAX_HALVINGS {
                return Err(Error::SolverBreakdown {
                    message: format!("could not re-enter the log-det domain at stage {stage}"),
                    last: Box::new(w),
                });
            }
        }
        let objective = StageObjective { score, mu, s };
        let stage_cfg = InnerConfig {
            lambda1: mu * cfg.inner.lambda1,
            ..cfg.inner
        };
        let sub = prox_grad_minimize(&objective, &w, &stage_cfg)?;
        converged = sub.converged;
        w = sub.w;
        if let Some(sink) = trace.as_deref_mut() {
            let (h, _) = h_ldet_value_grad(&w.view(), s)?;
            sink(TraceRecord {
                stage,
                score: score.value(&w)?,
                h,
                alpha: s,
                mu,
            });
        }
    }
    let (h, _) = h_ldet_value_grad(&w.view(), last_s)?;
    Ok(CentralPathOutcome { w, h, converged })
}
