//! Alternating optimization over beamformers, phases, powers and groups.

use rand::Rng;

use crate::beamform::gpi_solve;
use crate::channel::{ChannelSet, CsitModel};
use crate::config::{BeamInit, SolverConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::grouping::{greedy_group, GroupingReturn};
use crate::numerics::{complex_gaussian_vec, normalized, CVec, C64};
use crate::phase::solve_phase;
use crate::power::solve_power;
use crate::rates::{GroupPartition, RateModel, SolutionState, SubMessage};

#[derive(Debug, Clone)]
pub struct AoResult {
    pub state: SolutionState,
    /// Min-rate before the first iteration and after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl AoResult {
    pub fn r_min(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial value")
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

/// Equal power split, unit phases, everything in the first group and either
/// matched-filter or random unit-norm beamformers.
pub fn initial_state<R: Rng + ?Sized>(
    sys: &SystemConfig,
    solver: &SolverConfig,
    model: &RateModel,
    rng: &mut R,
) -> SolutionState {
    let i = sys.sub_messages;
    let v = CVec::from_element(model.h[0].ncols(), C64::new(1.0, 0.0));
    let g = (0..model.devices() * i)
        .map(|f| match solver.beam_init {
            BeamInit::MatchedFilter => {
                let h = &model.h[f / i] * &v;
                if h.norm() > 0.0 {
                    normalized(&h)
                } else {
                    normalized(&CVec::from_element(h.len(), C64::new(1.0, 0.0)))
                }
            }
            BeamInit::Random => normalized(&complex_gaussian_vec(rng, model.antennas())),
        })
        .collect();
    SolutionState {
        g,
        v,
        p: vec![sys.p_max() / i as f64; model.devices() * i],
        partition: GroupPartition::all_in_first(model.devices(), i, sys.groups),
        sub_messages: i,
    }
}

/// Runs the alternating loop on the rate model selected by `csit.mode`
/// (exact rates for perfect CSIT, the ergodic lower bound otherwise).
pub fn run_ao<R: Rng + ?Sized>(
    sys: &SystemConfig,
    solver: &SolverConfig,
    channels: &ChannelSet,
    csit: &CsitModel,
    rng: &mut R,
) -> Result<AoResult> {
    sys.validate()?;
    solver.validate()?;
    if csit.h_hat.len() != channels.devices() {
        return Err(Error::Validation("CSIT model and channels disagree on K".into()));
    }
    let model = RateModel::from_csit(csit, sys.sigma2());
    let state = initial_state(sys, solver, &model, rng);
    let standard = iterate(sys, solver, &model, state)?;
    if !solver.noma_start || sys.sub_messages < 2 {
        return Ok(standard);
    }
    let single = SystemConfig { sub_messages: 1, groups: sys.groups.min(sys.devices), ..sys.clone() };
    let noma = iterate(&single, solver, &model, initial_state(&single, solver, &model, rng))?;
    let padded = iterate(sys, solver, &model, pad_single(&noma.state, sys.sub_messages, sys.groups)?)?;
    Ok(if padded.r_min() > standard.r_min() { padded } else { standard })
}

/// Embeds a one-message-per-device solution: sub-message 0 keeps its beam,
/// power and group, the others get zero power and the same beam in the last
/// group (or the one before it if sub-message 0 sits there).
fn pad_single(state: &SolutionState, sub_messages: usize, groups: usize) -> Result<SolutionState> {
    let devices = state.devices();
    let mut members = vec![Vec::new(); groups];
    let mut g = Vec::with_capacity(devices * sub_messages);
    let mut p = Vec::with_capacity(devices * sub_messages);
    for k in 0..devices {
        let l = state.partition.group_of(SubMessage::new(k, 0)).expect("complete partition");
        members[l].push(SubMessage::new(k, 0));
        let spare = if l + 1 == groups { groups.saturating_sub(2) } else { groups - 1 };
        for i in 1..sub_messages {
            members[spare].push(SubMessage::new(k, i));
        }
        for i in 0..sub_messages {
            g.push(state.g[k].clone());
            p.push(if i == 0 { state.p[k] } else { 0.0 });
        }
    }
    Ok(SolutionState {
        g,
        v: state.v.clone(),
        p,
        partition: GroupPartition::new(members, devices, sub_messages)?,
        sub_messages,
    })
}

/// Continues the alternating loop from a caller-supplied feasible state.
pub fn run_ao_from(sys: &SystemConfig, solver: &SolverConfig, csit: &CsitModel, state: SolutionState) -> Result<AoResult> {
    sys.validate()?;
    solver.validate()?;
    let model = RateModel::from_csit(csit, sys.sigma2());
    model.min_rate(&state)?;
    state.check_feasible(sys.p_max(), 1e-9)?;
    iterate(sys, solver, &model, state)
}

fn iterate(sys: &SystemConfig, solver: &SolverConfig, model: &RateModel, mut state: SolutionState) -> Result<AoResult> {
    let model = *model;
    let mut current = stage("init", model.min_rate(&state))?;
    let mut trace = vec![current];
    for t in 1..=solver.ao_max_iters {
        current = refresh_beams(&model, &mut state, solver, current)?;

        let phase = stage("phase", solve_phase(&model, &state, solver))?;
        if phase.accepted {
            state.v = phase.lift.v;
            current = phase.objective;
        }

        let power = stage("power", solve_power(&model, &state, sys.p_max(), solver))?;
        if !power.stalled {
            state.p = power.p;
            current = power.objective;
        }

        let grouping = stage("grouping", greedy_group(&model, &state, sys.groups, GroupingReturn::BestSoFar))?;
        if grouping.objective > current {
            state.partition = grouping.partition;
            current = grouping.objective;
        }

        let prev = *trace.last().expect("non-empty");
        trace.push(current);
        let gain = if prev > 0.0 { (current - prev) / prev } else { current - prev };
        if gain <= solver.kappa2 {
            finish(&model, &mut state, solver, &mut trace)?;
            return Ok(AoResult { state, trace, iterations: t, converged: true });
        }
    }
    finish(&model, &mut state, solver, &mut trace)?;
    Ok(AoResult { state, trace, iterations: solver.ao_max_iters, converged: false })
}

/// GPI step kept only if the exact min-rate does not drop.
fn refresh_beams(model: &RateModel, state: &mut SolutionState, solver: &SolverConfig, current: f64) -> Result<f64> {
    let beams = stage("beamforming", gpi_solve(model, state, solver.alpha, solver.kappa1, solver.gpi_max_iters))?;
    let mut trial = state.clone();
    trial.g = beams.g;
    let r = stage("beamforming", model.min_rate(&trial))?;
    if r >= current {
        *state = trial;
        Ok(r)
    } else {
        Ok(current)
    }
}

// The last phase, power and grouping updates leave the beamformers one step
// behind; re-fit them and fold the result into the final trace entry.
fn finish(model: &RateModel, state: &mut SolutionState, solver: &SolverConfig, trace: &mut [f64]) -> Result<()> {
    let last = trace.last_mut().expect("non-empty");
    *last = refresh_beams(model, state, solver, *last)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn trace_is_monotone_and_state_feasible() {
        let sys = SystemConfig { antennas: 4, irs_elements: 4, devices: 3, sub_messages: 2, groups: 3, ..Default::default() };
        let ch = sample_channels(&sys, &mut stream_rng(1, Stream::Channel)).unwrap();
        let csit = CsitModel::perfect(&ch);
        let out = run_ao(&sys, &SolverConfig::default(), &ch, &csit, &mut stream_rng(1, Stream::Solver)).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert!(out.trace.len() == out.iterations + 1);
        out.state.check_feasible(sys.p_max(), 1e-8).unwrap();
        let model = RateModel::perfect(&ch, sys.sigma2());
        assert!((model.min_rate(&out.state).unwrap() - out.r_min()).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_rejected() {
        let sys = SystemConfig { devices: 1, sub_messages: 1, groups: 2, ..Default::default() };
        let ok = SystemConfig { groups: 1, ..sys.clone() };
        let ch = sample_channels(&ok, &mut stream_rng(2, Stream::Channel)).unwrap();
        let csit = CsitModel::perfect(&ch);
        assert!(run_ao(&sys, &SolverConfig::default(), &ch, &csit, &mut stream_rng(2, Stream::Solver)).is_err());
    }
}
