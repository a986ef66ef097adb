//! Per-device transmit power allocation.
//!
//! With beamformers and phases fixed each rate is `u(p) - d(p)` with `u`, `d`
//! logarithms of affine functions of `p`. The smoothed min-rate is ascended
//! by projected gradient steps over `{p >= 0, sum_i p_{k,i} <= P_max}`,
//! working in units of `P_max`.

use std::f64::consts::LN_2;

use crate::beamform::{softmin, softmin_weights};
use crate::config::{PowerMode, SolverConfig};
use crate::error::{validation, Result};
use crate::rates::{min_of, sum_per_device, RateModel, SolutionState, SubMessage};

/// Affine numerator and denominator of one sub-message's SINR term in `p`.
#[derive(Debug, Clone)]
pub struct StreamPower {
    pub device: usize,
    /// `num = c + sum_t num_coef[t] p_t`.
    pub num_coef: Vec<f64>,
    /// `den = c + sum_t den_coef[t] p_t`.
    pub den_coef: Vec<f64>,
    pub c: f64,
}

impl StreamPower {
    fn affine(coef: &[f64], c: f64, p: &[f64]) -> f64 {
        c + coef.iter().zip(p).map(|(a, x)| a * x).sum::<f64>()
    }

    pub fn u(&self, p: &[f64]) -> f64 {
        Self::affine(&self.num_coef, self.c, p).log2()
    }

    pub fn d(&self, p: &[f64]) -> f64 {
        Self::affine(&self.den_coef, self.c, p).log2()
    }

    pub fn grad_u(&self, p: &[f64]) -> Vec<f64> {
        let s = LN_2 * Self::affine(&self.num_coef, self.c, p);
        self.num_coef.iter().map(|a| a / s).collect()
    }

    pub fn grad_d(&self, p: &[f64]) -> Vec<f64> {
        let s = LN_2 * Self::affine(&self.den_coef, self.c, p);
        self.den_coef.iter().map(|a| a / s).collect()
    }
}

/// Power coefficients of every sub-message in flat order.
pub fn stream_powers(model: &RateModel, state: &SolutionState) -> Result<Vec<StreamPower>> {
    model.sub_rates(state)?;
    let cache = model.cache(&state.v);
    let n = state.streams();
    Ok((0..n)
        .map(|f| {
            let t = model.terms(state, &cache, f, &state.g[f]);
            let mut den = vec![0.0; n];
            for (&j, a) in t.interferers.iter().zip(&t.interferer_gain) {
                den[j] = *a;
            }
            den[f] = t.own_error;
            let mut num = den.clone();
            num[f] += t.signal_gain;
            StreamPower { device: state.stream(f).device, num_coef: num, den_coef: den, c: t.noise }
        })
        .collect())
}

/// Gradient of `d_{k,i}` with respect to every power at the state's `p`.
pub fn grad_p_d(model: &RateModel, state: &SolutionState, k: usize, i: usize) -> Result<Vec<f64>> {
    model.subrate(state, SubMessage::new(k, i))?;
    let streams = stream_powers(model, state)?;
    Ok(streams[SubMessage::new(k, i).flat(state.sub_messages)].grad_d(&state.p))
}

/// Euclidean projection onto `{x >= 0, sum x <= budget}`.
fn project_capped_simplex(x: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - budget) / (j + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    x.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Per-device projection onto the power budget.
pub fn project_power(p_raw: &[f64], p_max: f64, sub_messages: usize) -> Vec<f64> {
    p_raw.chunks(sub_messages).flat_map(|c| project_capped_simplex(c, p_max)).collect()
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub p: Vec<f64>,
    /// True min-rate at `p`.
    pub objective: f64,
    pub iterations: usize,
    /// Set when no iterate improved on the input, which is then returned.
    pub stalled: bool,
}

/// Device-rate surrogate: exact `u - d`, or `u - d` with `d` replaced by its
/// tangent plane at `anchor`.
struct Surrogate<'a> {
    streams: &'a [StreamPower],
    anchor: Option<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)>,
    sub_messages: usize,
    alpha: f64,
}

impl<'a> Surrogate<'a> {
    fn new(streams: &'a [StreamPower], anchor: Option<&[f64]>, sub_messages: usize, alpha: f64) -> Self {
        let anchor = anchor.map(|p| {
            (
                streams.iter().map(|s| s.d(p)).collect(),
                streams.iter().map(|s| s.grad_d(p)).collect(),
                p.to_vec(),
            )
        });
        Self { streams, anchor, sub_messages, alpha }
    }

    fn d(&self, f: usize, p: &[f64]) -> f64 {
        match &self.anchor {
            None => self.streams[f].d(p),
            Some((d0, grad, p0)) => d0[f] + grad[f].iter().zip(p).zip(p0).map(|((g, x), y)| g * (x - y)).sum::<f64>(),
        }
    }

    fn device_rates(&self, p: &[f64]) -> Vec<f64> {
        let sub: Vec<f64> = (0..self.streams.len()).map(|f| self.streams[f].u(p) - self.d(f, p)).collect();
        sum_per_device(&sub, self.sub_messages)
    }

    fn value(&self, p: &[f64]) -> f64 {
        softmin(&self.device_rates(p), self.alpha)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let w = softmin_weights(&self.device_rates(p), self.alpha);
        let mut g = vec![0.0; p.len()];
        for (f, s) in self.streams.iter().enumerate() {
            let gu = s.grad_u(p);
            let gd = match &self.anchor {
                None => s.grad_d(p),
                Some((_, grad, _)) => grad[f].clone(),
            };
            for j in 0..p.len() {
                g[j] += w[s.device] * (gu[j] - gd[j]);
            }
        }
        g
    }
}

/// Projected gradient ascent with Armijo backtracking, in units of `P_max`.
/// Returns the final point and the number of accepted steps.
fn ascend(sur: &Surrogate, start: &[f64], p_max: f64, sub_messages: usize, armijo: f64, max_iters: usize) -> (Vec<f64>, usize) {
    let mut x: Vec<f64> = start.iter().map(|p| p / p_max).collect();
    let to_watts = |x: &[f64]| x.iter().map(|v| v * p_max).collect::<Vec<f64>>();
    let mut val = sur.value(&to_watts(&x));
    let mut steps = 0;
    // Backtracking restarts from twice the last accepted step.
    let mut last_step: f64 = 0.5;
    for _ in 0..max_iters {
        let grad: Vec<f64> = sur.gradient(&to_watts(&x)).iter().map(|g| g * p_max).collect();
        let mut step = (2.0 * last_step).min(1e6);
        let mut moved = false;
        while step > 1e-12 {
            let raw: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            let cand = project_power(&raw, 1.0, sub_messages);
            let predicted: f64 = grad.iter().zip(&cand).zip(&x).map(|((g, c), a)| g * (c - a)).sum();
            if predicted <= 0.0 {
                break;
            }
            let cand_val = sur.value(&to_watts(&cand));
            if cand_val >= val + armijo * predicted {
                moved = cand_val - val > 1e-13 * val.abs().max(1.0);
                x = cand;
                val = cand_val;
                steps += 1;
                last_step = step;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (to_watts(&x), steps)
}

/// Power allocation for fixed beamformers, phases and partition.
pub fn solve_power(model: &RateModel, state: &SolutionState, p_max: f64, cfg: &SolverConfig) -> Result<PowerResult> {
    if !(p_max > 0.0) {
        return validation(format!("P_max must be positive (got {p_max})"));
    }
    let start_obj = model.min_rate(state)?;
    let streams = stream_powers(model, state)?;
    let sub = state.sub_messages;
    let true_min = |p: &[f64]| {
        let r: Vec<f64> = streams.iter().map(|s| s.u(p) - s.d(p)).collect();
        min_of(&sum_per_device(&r, sub))
    };
    let mut p = project_power(&state.p, p_max, sub);
    let mut iterations = 0;
    // Sharpen the smoothing as the iterate settles so the smoothed maximizer
    // approaches the true max-min point.
    for alpha in [cfg.alpha, cfg.alpha / 10.0, cfg.alpha / 100.0] {
        match cfg.power_mode {
            PowerMode::Exact => {
                let sur = Surrogate::new(&streams, None, sub, alpha);
                let (next, n) = ascend(&sur, &p, p_max, sub, cfg.armijo, cfg.power_max_iters);
                if true_min(&next) >= true_min(&p) || sur.value(&next) > sur.value(&p) {
                    p = next;
                }
                iterations += n;
            }
            PowerMode::Linearized => {
                for _ in 0..20 {
                    let sur = Surrogate::new(&streams, Some(&p), sub, alpha);
                    let (next, n) = ascend(&sur, &p, p_max, sub, cfg.armijo, cfg.power_max_iters);
                    iterations += n;
                    let change: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / p_max;
                    p = next;
                    if n == 0 || change < 1e-9 {
                        break;
                    }
                }
            }
        }
    }
    let mut trial = state.clone();
    trial.p = p;
    let objective = model.min_rate(&trial)?;
    if objective > start_obj {
        Ok(PowerResult { p: trial.p, objective, iterations, stalled: false })
    } else {
        Ok(PowerResult { p: state.p.clone(), objective: start_obj, iterations, stalled: true })
    }
}
