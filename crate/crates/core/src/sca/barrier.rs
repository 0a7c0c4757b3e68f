//! Log-domain convex subproblem and its log-barrier Newton solver.
//!
//! After the change of variables `w = ln p`, `μ = ln η`, every constraint of
//! the linearized program is `ln Σₖ exp(aₖ·z + bₖ) ≤ c`, which is convex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::posynomial::NVARS;
use super::program::{BudgetKind, LinearizationPoint};

/// `exp(a·z + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub a: Vec<f64>,
    pub b: f64,
}

/// `ln Σ exp(aₖ·z + bₖ) ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LseConstraint {
    pub label: String,
    pub terms: Vec<ExpTerm>,
    pub rhs: f64,
}

impl LseConstraint {
    /// Value, gradient and Hessian of the log-sum-exp at `z`, with the
    /// exponents shifted by their maximum for overflow safety.
    fn lse(&self, z: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = z.len();
        let exps: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.a.iter().zip(z.iter()).map(|(a, z)| a * z).sum::<f64>() + t.b)
            .collect();
        let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = exps.iter().map(|e| (e - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for (t, w) in self.terms.iter().zip(&weights) {
            let w = w / total;
            let a = DVector::from_column_slice(&t.a);
            g.axpy(w, &a, 1.0);
            h.ger(w, &a, &a, 1.0);
        }
        h.ger(-1.0, &g, &g, 1.0);
        (m + total.ln(), g, h)
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let exps = self
            .terms
            .iter()
            .map(|t| t.a.iter().zip(z.iter()).map(|(a, z)| a * z).sum::<f64>() + t.b);
        let m = exps.clone().fold(f64::NEG_INFINITY, f64::max);
        m + exps.map(|e| (e - m).exp()).sum::<f64>().ln()
    }

    /// `rhs − lse(z)`, positive when strictly satisfied.
    pub fn slack(&self, z: &[f64]) -> f64 {
        self.rhs - self.value(&DVector::from_column_slice(z))
    }
}

/// Minimize `objective · z` subject to log-sum-exp constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<LseConstraint>,
    /// Strictly feasible starting point.
    pub start: Vec<f64>,
    /// Power variable behind each coordinate; the trailing `μ` coordinate,
    /// when present, is not listed.
    pub vars: Vec<usize>,
}

impl ConvexSubproblem {
    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn is_strictly_feasible(&self, z: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.slack(z) > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Initial barrier weight.
    pub mu0: f64,
    /// Barrier weight growth per outer step.
    pub growth: f64,
    /// Outer loop stops once the duality gap `m/t` drops below this.
    pub gap_tol: f64,
    /// Centering stops once `‖∇‖/t` drops below this.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            growth: 10.0,
            gap_tol: 1e-10,
            newton_tol: 1e-10,
            max_newton: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub newton_iters: usize,
    pub outer_iters: usize,
    /// Largest of the stationarity, complementarity and primal feasibility
    /// residuals at the returned point.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub z: Vec<f64>,
    /// `exp` of the power coordinates; unused variables stay at 1.
    pub point: [f64; NVARS],
    /// `exp(μ)` when the subproblem has a trailing `μ` coordinate.
    pub eta: f64,
    pub stats: SolverStats,
}

/// Linearized max-min program in log variables.
///
/// Coordinates are the program's power variables followed by `μ`. The
/// objective is `max μ`; rate constraint `i` is
/// `sᵢ·η + Σ (−½d)·X ≤ Kᵢ` with `s₁ = 1`, `s₂ = 1/f`.
pub fn build_subproblem(lp: &LinearizationPoint, fairness: f64) -> Result<ConvexSubproblem> {
    if !(fairness.is_finite() && fairness > 0.0) {
        return Err(Error::Domain(format!("fairness must be > 0, got {fairness}")));
    }
    let prog = &lp.program;
    let vars = prog.vars.clone();
    let n = vars.len() + 1;
    let mu = vars.len();
    let local = |v: usize| vars.iter().position(|&u| u == v);

    let mut constraints = Vec::new();
    for user in 0..2 {
        let k = lp.constant(user);
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::LinearizationInfeasible(format!(
                "rate constraint of user {} has non-positive constant {k}",
                user + 1
            )));
        }
        let scale = if user == 0 { 1.0 } else { 1.0 / fairness };
        let mut a = vec![0.0; n];
        a[mu] = 1.0;
        let mut terms = vec![ExpTerm { a, b: scale.ln() }];
        for (term, tan) in prog.users[user].iter().zip(&lp.tangents[user]) {
            for (poly, d) in [(&term.x, tan.dx), (&term.y, tan.dy)] {
                for m in &poly.terms {
                    let coef = -0.5 * d * m.coef;
                    let mut a = vec![0.0; n];
                    for (v, &e) in m.exps.iter().enumerate() {
                        if e != 0 {
                            let i = local(v).expect("monomial uses a program variable");
                            a[i] = f64::from(e);
                        }
                    }
                    terms.push(ExpTerm { a, b: coef.ln() });
                }
            }
        }
        constraints.push(LseConstraint {
            label: format!("rate{}", user + 1),
            terms,
            rhs: k.ln(),
        });
    }
    for budget in &prog.budgets {
        let terms = budget
            .vars
            .iter()
            .map(|&v| {
                let mut a = vec![0.0; n];
                a[local(v).expect("budget uses a program variable")] = 1.0;
                ExpTerm { a, b: 0.0 }
            })
            .collect();
        let kind = match budget.kind {
            BudgetKind::Slots => "slots",
            BudgetKind::Split => "split",
        };
        constraints.push(LseConstraint {
            label: format!("{kind}{}", budget.user + 1),
            terms,
            rhs: budget.cap.ln(),
        });
    }

    // Start strictly inside: floor, then shrink off the budget faces.
    let mut p0 = lp.point;
    for &v in &vars {
        p0[v] = p0[v].max(START_FLOOR) * (1.0 - START_SHRINK);
    }
    let eta0 = 0.9 * lp.lower_bound(0, &p0).min(fairness * lp.lower_bound(1, &p0));
    if !(eta0 > 0.0) {
        return Err(Error::LinearizationInfeasible(format!(
            "lower-bound objective {eta0} is not positive at the start point"
        )));
    }
    let mut start: Vec<f64> = vars.iter().map(|&v| p0[v].ln()).collect();
    start.push(eta0.ln());

    let mut objective = vec![0.0; n];
    objective[mu] = -1.0;
    let sp = ConvexSubproblem {
        objective,
        constraints,
        start,
        vars,
    };
    if !sp.is_strictly_feasible(&sp.start) {
        return Err(Error::LinearizationInfeasible(
            "start point is not strictly feasible".into(),
        ));
    }
    Ok(sp)
}

/// Lower limit for powers and splits inside the solver.
pub const START_FLOOR: f64 = 1e-8;
const START_SHRINK: f64 = 1e-3;
const STALL_STEPS: usize = 4;
const QUADRATIC_DECREMENT: f64 = 1e-4;

struct Barrier<'a> {
    sp: &'a ConvexSubproblem,
    t: f64,
}

impl Barrier<'_> {
    /// Barrier value, or `None` outside the domain.
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let mut f = self.t * self.sp.objective.iter().zip(z.iter()).map(|(c, z)| c * z).sum::<f64>();
        for c in &self.sp.constraints {
            let s = c.rhs - c.value(z);
            if !(s > 0.0) {
                return None;
            }
            f -= s.ln();
        }
        Some(f)
    }

    fn derivatives(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = z.len();
        let mut g = DVector::from_column_slice(&self.sp.objective) * self.t;
        let mut h = DMatrix::zeros(n, n);
        for c in &self.sp.constraints {
            let (v, cg, ch) = c.lse(z);
            let s = c.rhs - v;
            g.axpy(1.0 / s, &cg, 1.0);
            h += ch / s;
            h.ger(1.0 / (s * s), &cg, &cg, 1.0);
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            return -ch.solve(g);
        }
        reg = if reg == 0.0 { 1e-12 * scale } else { reg * 10.0 };
    }
}

/// KKT residual of the original (barrier-free) problem at `z`.
///
/// Multipliers of nearly active constraints are re-estimated by least
/// squares on the stationarity condition, which avoids the cancellation in
/// the barrier estimate `1/(t·slack)` once slacks approach round-off.
fn kkt_residual(sp: &ConvexSubproblem, z: &DVector<f64>, t: f64) -> f64 {
    let n = z.len();
    let c = DVector::from_column_slice(&sp.objective);
    let mut primal: f64 = 0.0;
    let mut active = Vec::new();
    let mut stationarity = c.clone();
    let mut complementarity: f64 = 0.0;
    for con in &sp.constraints {
        let (v, g, _) = con.lse(z);
        let s = con.rhs - v;
        primal = primal.max(-s);
        if s < ACTIVE_SLACK {
            active.push((g, s));
        } else {
            let lambda = 1.0 / (t * s);
            stationarity.axpy(lambda, &g, 1.0);
            complementarity = complementarity.max(lambda * s);
        }
    }
    if !active.is_empty() {
        let j = DMatrix::from_fn(n, active.len(), |r, k| active[k].0[r]);
        let lambdas = j
            .clone()
            .svd(true, true)
            .solve(&(-&stationarity), 1e-14)
            .unwrap_or_else(|_| DVector::zeros(active.len()));
        for (k, (g, s)) in active.iter().enumerate() {
            let lambda = lambdas[k].max(0.0);
            stationarity.axpy(lambda, g, 1.0);
            complementarity = complementarity.max(lambda * s.max(0.0));
        }
    }
    stationarity.norm().max(complementarity).max(primal)
}

const ACTIVE_SLACK: f64 = 1e-6;

/// Solves a [`ConvexSubproblem`] with a log-barrier method.
pub fn solve_subproblem(sp: &ConvexSubproblem, opts: &SolverOptions) -> Result<SubproblemSolution> {
    if !sp.is_strictly_feasible(&sp.start) {
        return Err(Error::LinearizationInfeasible(
            "start point is not strictly feasible".into(),
        ));
    }
    let m = sp.constraints.len() as f64;
    let mut z = DVector::from_column_slice(&sp.start);
    let mut t = opts.mu0;
    let mut stats = SolverStats::default();
    let mut grad_norm;
    loop {
        stats.outer_iters += 1;
        let bar = Barrier { sp, t };
        let mut f = bar.value(&z).expect("iterate stays strictly feasible");
        let mut best_grad = f64::INFINITY;
        let mut stalled = 0;
        loop {
            let (g, h) = bar.derivatives(&z);
            grad_norm = g.norm() / t;
            if grad_norm < opts.newton_tol {
                break;
            }
            if stats.newton_iters >= opts.max_newton {
                return Err(Error::SolverExhausted {
                    iterations: stats.newton_iters,
                    last_objective: -sp.objective.iter().zip(z.iter()).map(|(c, z)| c * z).sum::<f64>(),
                });
            }
            stats.newton_iters += 1;
            let dz = newton_direction(&g, &h);
            let decrement = -g.dot(&dz);
            if !(decrement > 0.0) {
                break;
            }
            // Inside the quadratic region take full steps, checking only
            // feasibility; elsewhere backtrack on the barrier value.
            let quadratic = decrement < QUADRATIC_DECREMENT;
            // In the quadratic region the barrier value no longer resolves
            // progress; give up once the gradient stops improving.
            if quadratic {
                if grad_norm < best_grad {
                    best_grad = grad_norm;
                    stalled = 0;
                } else {
                    stalled += 1;
                    if stalled >= STALL_STEPS {
                        break;
                    }
                }
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-20 {
                let cand = &z + &dz * alpha;
                if let Some(fc) = bar.value(&cand) {
                    if quadratic || fc <= f - 0.01 * alpha * decrement {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    z = cand;
                    f = fc;
                }
                None => break,
            }
        }
        if m / t < opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }
    stats.kkt_residual = kkt_residual(sp, &z, t);
    let z: Vec<f64> = z.iter().copied().collect();
    let mut point = [1.0; NVARS];
    for (i, &v) in sp.vars.iter().enumerate() {
        point[v] = z[i].exp();
    }
    let eta = if z.len() > sp.vars.len() {
        z[sp.vars.len()].exp()
    } else {
        f64::NAN
    };
    Ok(SubproblemSolution {
        z,
        point,
        eta,
        stats,
    })
}
