#![allow(dead_code)]

pub mod oracles;

use irs_rsma::channel::{sample_channels, ChannelSet};
use irs_rsma::config::SystemConfig;
use irs_rsma::numerics::{complex_gaussian_vec, normalized, CMat, CVec, C64};
use irs_rsma::rates::{GroupPartition, SolutionState, SubMessage};
use irs_rsma::rng::{stream_rng, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use oracles::Instance;

pub fn system(m: usize, n: usize, k: usize, i: usize, l: usize) -> SystemConfig {
    SystemConfig { antennas: m, irs_elements: n, devices: k, sub_messages: i, groups: l, ..Default::default() }
}

pub fn channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    sample_channels(cfg, &mut stream_rng(seed, Stream::Channel)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Symbols)
}

/// Random phases, unit beamformers, powers within budget and a random
/// assignment to `cfg.groups` groups.
pub fn random_state(cfg: &SystemConfig, rng: &mut impl Rng) -> SolutionState {
    let n = cfg.irs_elements;
    let mut v = CVec::from_fn(n + 1, |_, _| C64::from_polar(1.0, rng.random_range(-3.1..3.1)));
    v[n] = C64::new(1.0, 0.0);
    let g = (0..cfg.streams()).map(|_| normalized(&complex_gaussian_vec(rng, cfg.antennas))).collect();
    let p = (0..cfg.streams()).map(|_| rng.random_range(0.05..1.0) * cfg.p_max() / cfg.sub_messages as f64).collect();
    let mut partition = GroupPartition::all_in_first(cfg.devices, cfg.sub_messages, cfg.groups);
    for f in 0..cfg.streams() {
        partition.move_to(SubMessage::from_flat(f, cfg.sub_messages), rng.random_range(0..cfg.groups));
    }
    SolutionState { g, v, p, partition, sub_messages: cfg.sub_messages }
}

pub fn instance(state: &SolutionState, h: &[CMat], sigma2: f64) -> Instance {
    let group = (0..state.streams()).map(|f| state.partition.group_of(state.stream(f)).unwrap()).collect();
    Instance {
        h: h.to_vec(),
        g: state.g.clone(),
        v: state.v.clone(),
        p: state.p.clone(),
        group,
        sub_messages: state.sub_messages,
        sigma2,
    }
}

/// MMSE beamformers `(sum_{later or same group, other} p h h^H + sigma^2 I)^-1 h`
/// built by explicit inversion.
pub fn mmse_beams(state: &SolutionState, h: &[CMat], sigma2: f64) -> Vec<CVec> {
    let eff: Vec<CVec> = h.iter().map(|hk| hk * &state.v).collect();
    let m = eff[0].len();
    (0..state.streams())
        .map(|f| {
            let me = state.stream(f);
            let l = state.partition.group_of(me).unwrap();
            let mut cov = CMat::identity(m, m) * C64::new(sigma2, 0.0);
            for t in 0..state.streams() {
                let s = state.stream(t);
                if t != f && state.partition.group_of(s).unwrap() >= l {
                    cov += &eff[s.device] * eff[s.device].adjoint() * C64::new(state.p[t], 0.0);
                }
            }
            normalized(&(cov.try_inverse().unwrap() * &eff[me.device]))
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
