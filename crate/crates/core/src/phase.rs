//! IRS phase optimization over the lifted matrix `V = v v^H`.
//!
//! With beamformers and powers fixed every rate is a difference of two
//! concave log-trace terms `u(V) - d(V)`. Each outer round linearizes `d`
//! and the spectral norm at the current iterate, then runs projected
//! gradient ascent on the smoothed min of the concave surrogate minus a
//! rank-one penalty over `{V PSD, diag(V) = 1}`. A phase vector is read off
//! the dominant eigenvector and refined element by element.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::path::Path;

use crate::beamform::{softmin, softmin_weights};
use crate::config::SolverConfig;
use crate::error::{validation, Error, Result};
use crate::numerics::{hermitian_eig, hermitize, outer, tol, trace_product, trace_re, CMat, CVec, C64};
use crate::rates::{min_of, sum_per_device, RateModel, SolutionState, SubMessage};

/// Lifted phase matrix and the phase vector recovered from it.
#[derive(Debug, Clone)]
pub struct PhaseLift {
    pub big_v: CMat,
    pub v: CVec,
}

impl PhaseLift {
    pub fn from_vector(v: &CVec) -> Self {
        Self { big_v: outer(v), v: v.clone() }
    }

    /// `tr(V) - ||V||_2`, zero exactly when `V` is rank one.
    pub fn rank_one_residual(&self) -> Result<f64> {
        rank_one_residual(&self.big_v)
    }
}

pub fn rank_one_residual(v: &CMat) -> Result<f64> {
    Ok(trace_re(v) - hermitian_eig(v)?.max_value())
}

/// Quadratic forms of one sub-message in `v`: `u = log2(tr(U V) + c)` and
/// `d = log2(tr(D V) + c)`.
#[derive(Debug, Clone)]
pub struct StreamLift {
    pub device: usize,
    pub u: CMat,
    pub d: CMat,
    /// `sigma^2 ||g||^2`.
    pub c: f64,
}

impl StreamLift {
    pub fn eval(&self, big_v: &CMat) -> (f64, f64) {
        ((trace_product(&self.u, big_v) + self.c).log2(), (trace_product(&self.d, big_v) + self.c).log2())
    }

    /// Rate at a phase vector, `log2((v^H U v + c) / (v^H D v + c))`.
    pub fn rate(&self, v: &CVec) -> f64 {
        let num = v.dotc(&(&self.u * v)).re + self.c;
        let den = v.dotc(&(&self.d * v)).re + self.c;
        (num / den).log2()
    }

    /// Gradient of `d` at `V_t`: `d(V) <= d(V_t) + tr(G (V - V_t))`.
    pub fn grad_d(&self, anchor: &CMat) -> CMat {
        let den = trace_product(&self.d, anchor) + self.c;
        &self.d * C64::new(1.0 / (LN_2 * den), 0.0)
    }
}

/// `(N+1) x (N+1)` matrix `C` with `v^H C v = g^H V~ Phi V~^H g`.
pub fn error_lift(phi: &CMat, g: &CVec, n1: usize) -> CMat {
    let m = g.len();
    let mut c = CMat::zeros(n1, n1);
    for a in 0..n1 {
        for b in 0..n1 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    acc += g[i].conj() * g[j] * phi[(i * n1 + b, j * n1 + a)];
                }
            }
            c[(a, b)] = acc;
        }
    }
    hermitize(&c)
}

/// Per-sub-message lifts in flat order.
pub fn lift_streams(model: &RateModel, state: &SolutionState) -> Result<Vec<StreamLift>> {
    model.sub_rates(state)?;
    let n1 = state.v.len();
    let k_all = model.devices();
    Ok((0..state.streams())
        .map(|f| {
            let me = state.stream(f);
            let g = &state.g[f];
            let a: Vec<CVec> = model.h.iter().map(|h| h.adjoint() * g).collect();
            let err: Vec<CMat> = match model.phi {
                Some(phi) => phi.iter().map(|p| error_lift(p, g, n1)).collect(),
                None => vec![CMat::zeros(n1, n1); k_all],
            };
            let l = state.partition.group_of(me).expect("validated partition");
            let mut u = CMat::zeros(n1, n1);
            for t in state.partition.undecoded_from(l) {
                let p = C64::new(state.p[t.flat(state.sub_messages)], 0.0);
                u += (outer(&a[t.device]) + &err[t.device]) * p;
            }
            let d = &u - outer(&a[me.device]) * C64::new(state.p[f], 0.0);
            StreamLift { device: me.device, u: hermitize(&u), d: hermitize(&d), c: model.sigma2 * g.norm_squared() }
        })
        .collect())
}

fn check_lift(big_v: &CMat, n1: usize) -> Result<()> {
    if big_v.shape() != (n1, n1) {
        return validation(format!("V must be {n1}x{n1}, got {:?}", big_v.shape()));
    }
    Ok(())
}

pub fn eval_u_d(model: &RateModel, state: &SolutionState, k: usize, i: usize, big_v: &CMat) -> Result<(f64, f64)> {
    check_lift(big_v, state.v.len())?;
    model.subrate(state, SubMessage::new(k, i))?;
    let lifts = lift_streams(model, state)?;
    Ok(lifts[SubMessage::new(k, i).flat(state.sub_messages)].eval(big_v))
}

pub fn grad_v_d(model: &RateModel, state: &SolutionState, k: usize, i: usize, anchor: &CMat) -> Result<CMat> {
    check_lift(anchor, state.v.len())?;
    model.subrate(state, SubMessage::new(k, i))?;
    let lifts = lift_streams(model, state)?;
    Ok(lifts[SubMessage::new(k, i).flat(state.sub_messages)].grad_d(anchor))
}

/// Euclidean projection onto `{V PSD, diag(V) = 1}`.
///
/// Minimizes the dual `theta(y) = 1/2 ||(Y + Diag(y))_+||^2 - sum(y)` by
/// semismooth Newton steps with a backtracking line search; the primal
/// projection is `(Y + Diag(y*))_+`. The result is finally rescaled by
/// `diag^-1/2` on both sides, which keeps it PSD and makes the diagonal
/// exactly one.
pub fn project_elliptope(y: &CMat, max_iters: usize) -> Result<CMat> {
    let n = y.nrows();
    let g = hermitize(y);
    let mut dual: Vec<f64> = (0..n).map(|i| 1.0 - g[(i, i)].re).collect();
    let shifted = |d: &[f64]| {
        let mut x = g.clone();
        for i in 0..n {
            x[(i, i)] += C64::new(d[i], 0.0);
        }
        x
    };
    let theta = |eig: &crate::numerics::HermitianEig, d: &[f64]| {
        0.5 * eig.values.iter().map(|l| l.max(0.0).powi(2)).sum::<f64>() - d.iter().sum::<f64>()
    };
    let mut eig = hermitian_eig(&shifted(&dual))?;
    for _ in 0..max_iters {
        let plus = eig.reconstruct_with(|l| l.max(0.0));
        let resid: Vec<f64> = (0..n).map(|i| plus[(i, i)].re - 1.0).collect();
        let gap = resid.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        if gap < 1e-10 {
            return Ok(unit_diagonal(&plus));
        }
        let jac = newton_jacobian(&eig, n);
        let rhs = nalgebra::DVector::from_iterator(n, resid.iter().map(|r| -r));
        let reg = 1e-10 * (1.0 + jac.diagonal().max());
        let step = (&jac + nalgebra::DMatrix::<f64>::identity(n, n) * reg)
            .cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(|| rhs.clone());
        let slope: f64 = step.iter().zip(&resid).map(|(d, r)| d * r).sum();
        let (step, slope) = if slope < 0.0 { (step, slope) } else { (rhs.clone(), -rhs.norm_squared()) };
        let base = theta(&eig, &dual);
        let resid_norm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = dual.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let e = hermitian_eig(&shifted(&trial))?;
            // Near the solution theta stops resolving the decrease; fall
            // back on the residual norm as the merit function.
            if theta(&e, &trial) <= base + 1e-4 * t * slope
                || diag_residual(&e, n) < (1.0 - 1e-4 * t) * resid_norm
                || t < 1e-12
            {
                dual = trial;
                eig = e;
                break;
            }
            t *= 0.5;
        }
    }
    let plus = eig.reconstruct_with(|l| l.max(0.0));
    let gap = (0..n).map(|i| (plus[(i, i)].re - 1.0).abs()).fold(0.0, f64::max);
    if gap < tol::DIAGONAL {
        return Ok(unit_diagonal(&plus));
    }
    Err(Error::Numerical(format!(
        "elliptope projection did not converge in {max_iters} iterations (diagonal gap {gap:.2e})"
    )))
}

fn diag_residual(eig: &crate::numerics::HermitianEig, n: usize) -> f64 {
    let plus = eig.reconstruct_with(|l| l.max(0.0));
    (0..n).map(|i| (plus[(i, i)].re - 1.0).powi(2)).sum::<f64>().sqrt()
}

/// Generalized Jacobian of `y -> diag((Y + Diag(y))_+)` at an eigen-decomposition.
fn newton_jacobian(eig: &crate::numerics::HermitianEig, n: usize) -> nalgebra::DMatrix<f64> {
    let lam = &eig.values;
    let q = &eig.vectors;
    let omega = nalgebra::DMatrix::<f64>::from_fn(n, n, |a, b| {
        let (la, lb) = (lam[a], lam[b]);
        match (la > 0.0, lb > 0.0) {
            (true, true) => 1.0,
            (false, false) => 0.0,
            _ => (la.max(0.0) - lb.max(0.0)) / (la - lb),
        }
    });
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let pij: Vec<C64> = (0..n).map(|a| q[(i, a)] * q[(j, a)].conj()).collect();
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += omega[(a, b)] * (pij[a] * pij[b].conj()).re;
                }
            }
            jac[(i, j)] = acc;
            jac[(j, i)] = acc;
        }
    }
    jac
}

/// The same projection by Dykstra's alternating projections. Slow on
/// ill-conditioned inputs; kept as an independent cross-check.
pub fn project_elliptope_dykstra(y: &CMat, max_sweeps: usize) -> Result<CMat> {
    let n = y.nrows();
    let mut x = hermitize(y);
    let mut p = CMat::zeros(n, n);
    let mut q = CMat::zeros(n, n);
    for _ in 0..max_sweeps {
        let psd = hermitian_eig(&(&x + &p))?.reconstruct_with(|l| l.max(0.0));
        p = &x + &p - &psd;
        let diag_gap = (0..n).map(|i| (psd[(i, i)].re - 1.0).abs()).fold(0.0, f64::max);
        if diag_gap < tol::DIAGONAL {
            return Ok(unit_diagonal(&psd));
        }
        let mut next = &psd + &q;
        for i in 0..n {
            next[(i, i)] = C64::new(1.0, 0.0);
        }
        q = &psd + &q - &next;
        x = next;
    }
    Err(Error::Numerical(format!("Dykstra projection did not converge in {max_sweeps} sweeps")))
}

fn unit_diagonal(a: &CMat) -> CMat {
    let n = a.nrows();
    let s: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)].re.max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut out = CMat::from_fn(n, n, |i, j| a[(i, j)] * (s[i] * s[j]));
    for i in 0..n {
        out[(i, i)] = C64::new(1.0, 0.0);
    }
    hermitize(&out)
}

/// Relative change of the round objective below which outer rounds stop.
const ROUND_STALL: f64 = 1e-4;

/// Phase vector from the dominant eigenvector, referenced to the last entry.
pub fn recover_vector(big_v: &CMat) -> Result<CVec> {
    let x = hermitian_eig(big_v)?.dominant_vector();
    let n1 = x.len();
    let reference = x[n1 - 1].arg();
    let mut v = x.map(|z| C64::from_polar(1.0, z.arg() - reference));
    v[n1 - 1] = C64::new(1.0, 0.0);
    Ok(v)
}

fn min_rate_at(lifts: &[StreamLift], v: &CVec, sub_messages: usize) -> f64 {
    let sub: Vec<f64> = lifts.iter().map(|s| s.rate(v)).collect();
    min_of(&sum_per_device(&sub, sub_messages))
}

/// One pass over the elements trying `points` equally spaced phases each,
/// keeping only strict improvements of the min-rate.
pub fn refine_on_grid(lifts: &[StreamLift], v: &CVec, sub_messages: usize, points: usize) -> CVec {
    let mut best = v.clone();
    let mut best_val = min_rate_at(lifts, &best, sub_messages);
    for n in 0..v.len() - 1 {
        for q in 0..points {
            let keep = best[n];
            best[n] = C64::from_polar(1.0, 2.0 * PI * q as f64 / points as f64);
            let val = min_rate_at(lifts, &best, sub_messages);
            if val > best_val {
                best_val = val;
            } else {
                best[n] = keep;
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRound {
    pub round: usize,
    /// Penalty parameter; infinite for relaxation rounds without a penalty.
    pub rho: f64,
    /// Smoothed surrogate min-rate at the end of the round.
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PhaseResult {
    pub lift: PhaseLift,
    /// False when the safeguard kept the input phases.
    pub accepted: bool,
    /// True min-rate at the returned phases.
    pub objective: f64,
    pub rounds: Vec<PhaseRound>,
}

impl PhaseResult {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "round,rho,objective,residual")?;
        for r in &self.rounds {
            writeln!(f, "{},{},{},{}", r.round, r.rho, r.objective, r.residual)?;
        }
        Ok(())
    }
}

/// Concave surrogate of one outer round.
struct Round<'a> {
    lifts: &'a [StreamLift],
    d_anchor: Vec<f64>,
    d_grad: Vec<CMat>,
    anchor: CMat,
    penalty_dir: CMat,
    weight: f64,
    devices: usize,
    sub_messages: usize,
    alpha: f64,
}

impl Round<'_> {
    fn device_rates(&self, v: &CMat) -> Vec<f64> {
        let sub: Vec<f64> = self
            .lifts
            .iter()
            .enumerate()
            .map(|(f, s)| {
                let u = (trace_product(&s.u, v) + s.c).log2();
                let lin = self.d_anchor[f] + trace_product(&self.d_grad[f], v) - trace_product(&self.d_grad[f], &self.anchor);
                u - lin
            })
            .collect();
        sum_per_device(&sub, self.sub_messages)
    }

    /// Penalty term up to a constant; `tr(V)` is fixed on the feasible set.
    fn value(&self, v: &CMat) -> f64 {
        softmin(&self.device_rates(v), self.alpha) + self.weight * trace_product(&self.penalty_dir, v)
    }

    fn gradient(&self, v: &CMat) -> CMat {
        let w = softmin_weights(&self.device_rates(v), self.alpha);
        let mut g = &self.penalty_dir * C64::new(self.weight, 0.0);
        for (f, s) in self.lifts.iter().enumerate() {
            let den = trace_product(&s.u, v) + s.c;
            let coef = w[s.device];
            g += (&s.u * C64::new(1.0 / (LN_2 * den), 0.0) - &self.d_grad[f]) * C64::new(coef, 0.0);
        }
        debug_assert_eq!(w.len(), self.devices);
        g
    }
}

/// Projected gradient ascent on one round's surrogate, started at `big_v`.
fn ascend(round: &Round, mut big_v: CMat, cfg: &SolverConfig) -> Result<CMat> {
    let mut val = round.value(&big_v);
    for _ in 0..cfg.phase_max_inner {
        let grad = round.gradient(&big_v);
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-12 {
            let cand = project_elliptope(&(&big_v + &grad * C64::new(step, 0.0)), cfg.projection_max_iters)?;
            let cand_val = round.value(&cand);
            let predicted = trace_product(&grad, &(&cand - &big_v));
            if cand_val >= val + cfg.armijo * predicted && predicted > 0.0 {
                let gain = cand_val - val;
                big_v = cand;
                val = cand_val;
                moved = gain > 1e-12 * val.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(big_v)
}

/// Phase optimization: SCA rounds on the plain relaxation until the
/// surrogate stalls, then penalty rounds along the `rho` schedule until the
/// lift is rank one. Every round's recovered vector is a candidate; the best
/// is kept if it does not lower the true min-rate.
pub fn solve_phase(model: &RateModel, state: &SolutionState, cfg: &SolverConfig) -> Result<PhaseResult> {
    let start_obj = model.min_rate(state)?;
    let lifts = lift_streams(model, state)?;
    let devices = model.devices();
    let mut big_v = outer(&state.v);
    let mut rounds: Vec<PhaseRound> = Vec::new();
    let mut best_v = state.v.clone();
    let mut best_val = min_rate_at(&lifts, &best_v, state.sub_messages);
    let mut relaxing = true;
    let mut penalty_round = 0;
    for r in 0..2 * cfg.phase_max_outer {
        relaxing &= r < cfg.phase_max_outer;
        let rho = if relaxing {
            f64::INFINITY
        } else {
            (cfg.rho0 * cfg.rho_decay.powi(penalty_round)).max(cfg.rho_floor)
        };
        let lambda = hermitian_eig(&big_v)?.dominant_vector();
        let round = Round {
            lifts: &lifts,
            d_anchor: lifts.iter().map(|s| s.eval(&big_v).1).collect(),
            d_grad: lifts.iter().map(|s| s.grad_d(&big_v)).collect(),
            anchor: big_v.clone(),
            penalty_dir: outer(&lambda),
            weight: if relaxing { 0.0 } else { 1.0 / (2.0 * rho) },
            devices,
            sub_messages: state.sub_messages,
            alpha: cfg.alpha,
        };
        big_v = ascend(&round, big_v, cfg)?;
        let residual = rank_one_residual(&big_v)?;
        let candidate = refine_on_grid(&lifts, &recover_vector(&big_v)?, state.sub_messages, cfg.phase_grid_points);
        let cand_val = min_rate_at(&lifts, &candidate, state.sub_messages);
        if cand_val > best_val {
            best_v = candidate;
            best_val = cand_val;
        }
        let objective = softmin(&round.device_rates(&big_v), cfg.alpha);
        let stalled = rounds
            .last()
            .is_some_and(|p| objective - p.objective <= ROUND_STALL * p.objective.abs().max(1.0));
        rounds.push(PhaseRound { round: r, rho, objective, residual });
        if relaxing {
            if stalled {
                if residual < tol::RANK_ONE {
                    break;
                }
                relaxing = false;
            }
            continue;
        }
        penalty_round += 1;
        if residual < tol::RANK_ONE {
            break;
        }
    }

    let mut trial = state.clone();
    trial.v = best_v;
    let new_obj = model.min_rate(&trial)?;
    if new_obj >= start_obj {
        Ok(PhaseResult { lift: PhaseLift { big_v, v: trial.v }, accepted: true, objective: new_obj, rounds })
    } else {
        Ok(PhaseResult { lift: PhaseLift::from_vector(&state.v), accepted: false, objective: start_obj, rounds })
    }
}
