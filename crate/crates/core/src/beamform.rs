//! Receive beamforming.
//!
//! The min-rate is smoothed with LogSumExp. Each beamformer only enters its
//! own rate `log2(g^H Gu g / g^H Gd g)`, so stationarity reduces to a
//! per-sub-message eigenvector condition on `A = c (Gd^-1 Gu)`, solved either
//! by repeated eigen-decomposition (SCF) or by one power step per iteration
//! (GPI).

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, hermitize, normalized, quad_form, CMat, CVec, HermitianMatrix, C64};
use crate::rates::{min_of, sum_per_device, LinkCache, RateModel, SolutionState, SubMessage};

/// Interference-plus-noise covariances with (`up`) and without (`down`) the
/// own signal of one sub-message.
#[derive(Debug, Clone)]
pub struct GammaPair {
    pub up: HermitianMatrix,
    pub down: HermitianMatrix,
}

impl GammaPair {
    /// `log2(g^H Gu g / g^H Gd g)`.
    pub fn rate(&self, g: &CVec) -> f64 {
        (quad_form(self.up.as_matrix(), g) / quad_form(self.down.as_matrix(), g)).log2()
    }
}

/// Covariance pairs of every sub-message in flat order.
pub fn all_gammas(model: &RateModel, state: &SolutionState, cache: &LinkCache) -> Vec<GammaPair> {
    let m = model.antennas();
    let cov: Vec<CMat> = (0..model.devices()).map(|n| cache.interference_cov(n)).collect();
    let noise = CMat::identity(m, m) * C64::new(model.sigma2, 0.0);
    // Gu is shared by every member of a group: suffix sums over groups.
    let groups = state.partition.groups();
    let mut suffix = vec![noise.clone(); groups.len() + 1];
    for l in (0..groups.len()).rev() {
        let mut acc = suffix[l + 1].clone();
        for s in &groups[l] {
            let f = s.flat(state.sub_messages);
            acc += &cov[s.device] * C64::new(state.p[f], 0.0);
        }
        suffix[l] = acc;
    }
    (0..state.streams())
        .map(|f| {
            let s = state.stream(f);
            let l = state.partition.group_of(s).expect("validated partition");
            let up = &suffix[l];
            let h = &cache.h[s.device];
            let down = up - h * h.adjoint() * C64::new(state.p[f], 0.0);
            GammaPair { up: HermitianMatrix::symmetrized(up), down: HermitianMatrix::symmetrized(&down) }
        })
        .collect()
}

pub fn build_gammas(model: &RateModel, state: &SolutionState, k: usize, i: usize) -> Result<GammaPair> {
    let s = SubMessage::new(k, i);
    model.subrate(state, s)?;
    let cache = model.cache(&state.v);
    Ok(all_gammas(model, state, &cache).swap_remove(s.flat(state.sub_messages)))
}

/// `-alpha ln((1/K) sum_k exp(-R_k / alpha))`, evaluated with the minimum
/// factored out so no exponent is positive.
pub fn softmin(rates: &[f64], alpha: f64) -> f64 {
    let lo = min_of(rates);
    let s: f64 = rates.iter().map(|r| (-(r - lo) / alpha).exp()).sum();
    lo - alpha * (s / rates.len() as f64).ln()
}

/// Derivatives of [`softmin`] with respect to each rate; they sum to one.
pub fn softmin_weights(rates: &[f64], alpha: f64) -> Vec<f64> {
    let lo = min_of(rates);
    let e: Vec<f64> = rates.iter().map(|r| (-(r - lo) / alpha).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn smoothed_objective(model: &RateModel, state: &SolutionState, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Validation(format!("alpha must be positive (got {alpha})")));
    }
    Ok(softmin(&model.device_rates(state)?, alpha))
}

fn device_rates_from(gammas: &[GammaPair], g: &[CVec], sub_messages: usize) -> Vec<f64> {
    let sub: Vec<f64> = gammas.iter().zip(g).map(|(gp, g)| gp.rate(g)).collect();
    sum_per_device(&sub, sub_messages)
}

/// Collapsed iteration matrix `lambda (g^H Gd g / g^H Gu g) Gd^-1 Gu`.
pub fn collapsed_a(pair: &GammaPair, g: &CVec, lambda: f64) -> Result<CMat> {
    let down = pair.down.as_matrix();
    let up = pair.up.as_matrix();
    let chol = down
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("interference covariance is singular".into()))?;
    let scale = lambda * quad_form(down, g) / quad_form(up, g);
    Ok(chol.solve(up) * C64::new(scale, 0.0))
}

pub fn build_a(model: &RateModel, state: &SolutionState, alpha: f64, k: usize, i: usize) -> Result<CMat> {
    let pair = build_gammas(model, state, k, i)?;
    let lambda = smoothed_objective(model, state, alpha)?;
    collapsed_a(&pair, &state.g[SubMessage::new(k, i).flat(state.sub_messages)], lambda)
}

/// `Omega^-1 Psi` with the softmin weight of the device kept in both factors.
pub fn build_a_direct(model: &RateModel, state: &SolutionState, alpha: f64, k: usize, i: usize) -> Result<CMat> {
    let pair = build_gammas(model, state, k, i)?;
    let rates = model.device_rates(state)?;
    let lambda = softmin(&rates, alpha);
    let w = softmin_weights(&rates, alpha)[k];
    let g = &state.g[SubMessage::new(k, i).flat(state.sub_messages)];
    let psi = pair.up.as_matrix() * C64::new(lambda * w / quad_form(pair.up.as_matrix(), g), 0.0);
    let omega = pair.down.as_matrix() * C64::new(w / quad_form(pair.down.as_matrix(), g), 0.0);
    omega
        .lu()
        .solve(&psi)
        .ok_or_else(|| Error::Numerical("Omega is singular".into()))
}

/// Gradient of the smoothed objective with respect to every beamformer,
/// packed as `d/dRe(g) + j d/dIm(g)`.
pub fn objective_gradient(model: &RateModel, state: &SolutionState, alpha: f64) -> Result<Vec<CVec>> {
    model.sub_rates(state)?;
    let cache = model.cache(&state.v);
    let gammas = all_gammas(model, state, &cache);
    let w = softmin_weights(&device_rates_from(&gammas, &state.g, state.sub_messages), alpha);
    Ok(gammas
        .iter()
        .zip(&state.g)
        .enumerate()
        .map(|(f, (gp, g))| {
            let up = gp.up.as_matrix();
            let down = gp.down.as_matrix();
            let c = 2.0 * w[state.stream(f).device] / std::f64::consts::LN_2;
            (up * g / C64::new(quad_form(up, g), 0.0) - down * g / C64::new(quad_form(down, g), 0.0))
                * C64::new(c, 0.0)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub g: Vec<CVec>,
    /// Smoothed objective at `g`.
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant generalized eigenvector of `(Gu, Gd)` via `Gd = L L^H`.
pub fn dominant_generalized(pair: &GammaPair) -> Result<CVec> {
    let chol = pair
        .down
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("interference covariance is singular".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor is singular".into()))?;
    let c = hermitize(&(&linv * pair.up.as_matrix() * linv.adjoint()));
    let y = hermitian_eig(&c)?.dominant_vector();
    Ok(normalized(&(linv.adjoint() * y)))
}

/// Rotates `g` so that `reference^H g` is real and non-negative.
fn align_phase(g: CVec, reference: &CVec) -> CVec {
    let z = reference.dotc(&g);
    if z.norm() > 0.0 {
        g * (z.conj() / z.norm())
    } else {
        g
    }
}

fn check_unit(g: &[CVec]) -> Result<()> {
    for (f, x) in g.iter().enumerate() {
        if (x.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!("beamformer {f} must be unit norm (norm {})", x.norm())));
        }
    }
    Ok(())
}

fn iterate<F>(
    model: &RateModel,
    state: &SolutionState,
    alpha: f64,
    kappa1: f64,
    max_iters: usize,
    relative: bool,
    step: F,
) -> Result<BeamResult>
where
    F: Fn(&GammaPair, &CVec, f64) -> Result<CVec>,
{
    model.sub_rates(state)?;
    check_unit(&state.g)?;
    let cache = model.cache(&state.v);
    let gammas = all_gammas(model, state, &cache);
    let objective = |g: &[CVec]| softmin(&device_rates_from(&gammas, g, state.sub_messages), alpha);
    let mut g = state.g.clone();
    let mut lambda = objective(&g);
    let (mut best_g, mut best_lambda) = (g.clone(), lambda);
    for t in 1..=max_iters {
        let next: Vec<CVec> =
            gammas.iter().zip(&g).map(|(gp, x)| step(gp, x, lambda)).collect::<Result<_>>()?;
        let change: f64 = next.iter().zip(&g).map(|(a, b)| (a - b).norm()).sum();
        let scale: f64 = if relative { g.iter().map(|x| x.norm()).sum() } else { 1.0 };
        g = next;
        lambda = objective(&g);
        if lambda >= best_lambda {
            best_g = g.clone();
            best_lambda = lambda;
        }
        if change / scale <= kappa1 {
            return Ok(BeamResult { g, lambda, iterations: t, converged: true });
        }
    }
    Ok(BeamResult { g: best_g, lambda: best_lambda, iterations: max_iters, converged: false })
}

/// Self-consistent field iteration: every beamformer is replaced by the
/// dominant eigenvector of its iteration matrix.
pub fn scf_solve(
    model: &RateModel,
    state: &SolutionState,
    alpha: f64,
    kappa1: f64,
    max_iters: usize,
) -> Result<BeamResult> {
    iterate(model, state, alpha, kappa1, max_iters, false, |gp, g, _| {
        Ok(align_phase(dominant_generalized(gp)?, g))
    })
}

/// Generalized power iteration: one step `g <- A g / ||A g||` per iteration.
pub fn gpi_solve(
    model: &RateModel,
    state: &SolutionState,
    alpha: f64,
    kappa1: f64,
    max_iters: usize,
) -> Result<BeamResult> {
    iterate(model, state, alpha, kappa1, max_iters, true, |gp, g, lambda| {
        Ok(normalized(&(collapsed_a(gp, g, lambda)? * g)))
    })
}
