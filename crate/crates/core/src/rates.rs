//! Successive group decoding (SGD) rates.
//!
//! Sub-message `(k, i)` decoded in group `l` sees every sub-message of groups
//! `l..L` (other than itself) as Gaussian interference; earlier groups have
//! been cancelled. With imperfect CSIT the estimation error of every
//! undecoded device (own included) is added to the interference, which
//! gives the Jensen lower bound on the ergodic rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{lift_v, ChannelSet, CsitModel};
use crate::config::CsitMode;
use crate::error::{validation, Result};
use crate::numerics::{complex_gaussian, complex_gaussian_vec, hermitize, quad_form, tol, CMat, CVec, C64};

/// Sub-message `i` of device `k`, both zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct SubMessage {
    pub device: usize,
    pub index: usize,
}

impl SubMessage {
    pub fn new(device: usize, index: usize) -> Self {
        Self { device, index }
    }

    /// Position in flat per-stream vectors (`k * I + i`).
    pub fn flat(self, sub_messages: usize) -> usize {
        self.device * sub_messages + self.index
    }

    pub fn from_flat(idx: usize, sub_messages: usize) -> Self {
        Self { device: idx / sub_messages, index: idx % sub_messages }
    }

    /// The other sub-message of the same device when `I = 2`.
    pub fn sibling(self, sub_messages: usize) -> Option<Self> {
        (sub_messages == 2).then(|| Self { device: self.device, index: 1 - self.index })
    }
}

impl From<[usize; 2]> for SubMessage {
    fn from([device, index]: [usize; 2]) -> Self {
        Self { device, index }
    }
}

impl From<SubMessage> for [usize; 2] {
    fn from(s: SubMessage) -> Self {
        [s.device, s.index]
    }
}

/// Ordered decoding groups `Q_1, ..., Q_L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupPartition {
    groups: Vec<Vec<SubMessage>>,
}

impl GroupPartition {
    /// Validates that the groups cover every `(k, i)` exactly once.
    pub fn new(groups: Vec<Vec<SubMessage>>, devices: usize, sub_messages: usize) -> Result<Self> {
        if groups.is_empty() {
            return validation("a partition needs at least one group");
        }
        let mut seen = vec![false; devices * sub_messages];
        for s in groups.iter().flatten() {
            if s.device >= devices || s.index >= sub_messages {
                return validation(format!("sub-message {s:?} outside K={devices}, I={sub_messages}"));
            }
            let f = s.flat(sub_messages);
            if seen[f] {
                return validation(format!("sub-message {s:?} appears in two groups"));
            }
            seen[f] = true;
        }
        if let Some(miss) = seen.iter().position(|b| !b) {
            return validation(format!(
                "sub-message {:?} missing from partition",
                SubMessage::from_flat(miss, sub_messages)
            ));
        }
        let mut groups = groups;
        groups.iter_mut().for_each(|g| g.sort());
        Ok(Self { groups })
    }

    /// `Q_1` holds everything, `Q_2..Q_L` are empty.
    pub fn all_in_first(devices: usize, sub_messages: usize, groups: usize) -> Self {
        let mut out = vec![Vec::new(); groups.max(1)];
        for k in 0..devices {
            for i in 0..sub_messages {
                out[0].push(SubMessage::new(k, i));
            }
        }
        Self { groups: out }
    }

    /// Every sub-message in its own group, in flat order.
    pub fn full_sic(devices: usize, sub_messages: usize) -> Self {
        let groups = (0..devices * sub_messages)
            .map(|f| vec![SubMessage::from_flat(f, sub_messages)])
            .collect();
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<SubMessage>] {
        &self.groups
    }

    pub fn group_of(&self, s: SubMessage) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&s))
    }

    /// Sub-messages of `Q_l ∪ ... ∪ Q_L`.
    pub fn undecoded_from(&self, l: usize) -> impl Iterator<Item = SubMessage> + '_ {
        self.groups[l..].iter().flatten().copied()
    }

    /// Moves `s` from its current group to group `to`.
    pub fn move_to(&mut self, s: SubMessage, to: usize) {
        if let Some(from) = self.group_of(s) {
            self.groups[from].retain(|x| *x != s);
        }
        self.groups[to].push(s);
        self.groups[to].sort();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, devices: usize, sub_messages: usize) -> Result<Self> {
        let raw: Vec<Vec<SubMessage>> = serde_json::from_str(text)?;
        Self::new(raw, devices, sub_messages)
    }
}

/// Current iterate of every optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    /// Receive beamformers in flat `(k, i)` order.
    pub g: Vec<CVec>,
    /// Phase vector `[e^{j theta_1}, ..., e^{j theta_N}, 1]`.
    pub v: CVec,
    /// Transmit powers in flat `(k, i)` order, watts.
    pub p: Vec<f64>,
    pub partition: GroupPartition,
    pub sub_messages: usize,
}

impl SolutionState {
    pub fn devices(&self) -> usize {
        self.p.len() / self.sub_messages
    }

    pub fn streams(&self) -> usize {
        self.p.len()
    }

    pub fn stream(&self, flat: usize) -> SubMessage {
        SubMessage::from_flat(flat, self.sub_messages)
    }

    /// Checks the constraint set: unit-norm beamformers, unit-modulus phases
    /// with `v_{N+1} = 1`, non-negative powers within the per-device budget.
    pub fn check_feasible(&self, p_max: f64, tolerance: f64) -> Result<()> {
        for (f, g) in self.g.iter().enumerate() {
            if (g.norm() - 1.0).abs() > tolerance {
                return validation(format!("beamformer {f} has norm {}", g.norm()));
            }
        }
        let n = self.v.len() - 1;
        for (idx, z) in self.v.iter().enumerate() {
            if (z.norm() - 1.0).abs() > tolerance {
                return validation(format!("phase entry {idx} has modulus {}", z.norm()));
            }
        }
        if (self.v[n] - C64::new(1.0, 0.0)).norm() > tolerance {
            return validation("last phase entry must equal 1");
        }
        for k in 0..self.devices() {
            let powers = &self.p[k * self.sub_messages..(k + 1) * self.sub_messages];
            if powers.iter().any(|&x| x < -tolerance) {
                return validation(format!("device {k} has a negative power"));
            }
            let total: f64 = powers.iter().sum();
            if total > p_max * (1.0 + tolerance) {
                return validation(format!("device {k} uses {total} W > P_max = {p_max} W"));
            }
        }
        Ok(())
    }
}

/// Per-phase-vector link quantities: `h_n = H^_n v` and, with imperfect CSIT,
/// `V~ Phi_n V~^H`.
#[derive(Debug, Clone)]
pub struct LinkCache {
    pub h: Vec<CVec>,
    pub err: Option<Vec<CMat>>,
}

impl LinkCache {
    /// `h_n h_n^H + V~ Phi_n V~^H` for device `n`.
    pub fn interference_cov(&self, n: usize) -> CMat {
        let mut r = &self.h[n] * self.h[n].adjoint();
        if let Some(err) = &self.err {
            r += &err[n];
        }
        r
    }

    /// `g^H V~ Phi_n V~^H g`, zero for perfect CSIT.
    pub fn err_power(&self, n: usize, g: &CVec) -> f64 {
        self.err.as_ref().map_or(0.0, |e| quad_form(&e[n], g))
    }
}

/// Rate evaluation against either the true channels or the estimated model.
#[derive(Debug, Clone, Copy)]
pub struct RateModel<'a> {
    pub h: &'a [CMat],
    pub phi: Option<&'a [CMat]>,
    pub sigma2: f64,
}

/// Interference structure seen by one sub-message for fixed `g` and `v`.
#[derive(Debug, Clone)]
pub struct StreamTerms {
    /// `|g^H h_k|^2` of the own device.
    pub signal_gain: f64,
    /// Flat indices of the undecoded sub-messages other than this one.
    pub interferers: Vec<usize>,
    /// Per interferer: `|g^H h_n|^2 + g^H V~ Phi_n V~^H g`.
    pub interferer_gain: Vec<f64>,
    /// `g^H V~ Phi_k V~^H g` of the own device.
    pub own_error: f64,
    /// `sigma^2 ||g||^2`.
    pub noise: f64,
}

impl StreamTerms {
    /// Interference plus noise power.
    pub fn denominator(&self, own_power: f64, p: &[f64]) -> f64 {
        self.noise
            + own_power * self.own_error
            + self.interferers.iter().zip(&self.interferer_gain).map(|(&t, a)| p[t] * a).sum::<f64>()
    }

    pub fn sinr(&self, own_power: f64, p: &[f64]) -> f64 {
        own_power * self.signal_gain / self.denominator(own_power, p)
    }
}

impl<'a> RateModel<'a> {
    pub fn perfect(channels: &'a ChannelSet, sigma2: f64) -> Self {
        Self { h: &channels.composite, phi: None, sigma2 }
    }

    pub fn from_csit(csit: &'a CsitModel, sigma2: f64) -> Self {
        let phi = match csit.mode {
            CsitMode::Perfect => None,
            CsitMode::Estimated => Some(csit.phi.as_slice()),
        };
        Self { h: &csit.h_hat, phi, sigma2 }
    }

    pub fn devices(&self) -> usize {
        self.h.len()
    }

    pub fn antennas(&self) -> usize {
        self.h[0].nrows()
    }

    pub fn is_robust(&self) -> bool {
        self.phi.is_some()
    }

    pub fn cache(&self, v: &CVec) -> LinkCache {
        let h = self.h.iter().map(|hk| hk * v).collect();
        let err = self.phi.map(|phi| {
            let vt = lift_v(v, self.antennas());
            phi.iter().map(|p| hermitize(&(&vt * p * vt.adjoint()))).collect()
        });
        LinkCache { h, err }
    }

    fn check_shapes(&self, state: &SolutionState) -> Result<()> {
        if state.devices() != self.devices() || state.p.len() % state.sub_messages != 0 {
            return validation(format!(
                "state has {} powers for K={} devices",
                state.p.len(),
                self.devices()
            ));
        }
        if state.g.len() != state.p.len() {
            return validation("one beamformer per sub-message is required");
        }
        if state.v.len() != self.h[0].ncols() {
            return validation(format!("phase vector must have N+1 = {} entries", self.h[0].ncols()));
        }
        if let Some(phi) = self.phi {
            let dim = self.h[0].nrows() * self.h[0].ncols();
            if phi.len() != self.devices() || phi.iter().any(|p| p.shape() != (dim, dim)) {
                return validation(format!("error covariances must be {dim}x{dim}, one per device"));
            }
        }
        Ok(())
    }

    /// Interference terms of sub-message `flat` under beamformer `g`.
    pub fn terms(&self, state: &SolutionState, cache: &LinkCache, flat: usize, g: &CVec) -> StreamTerms {
        let me = state.stream(flat);
        let l = state.partition.group_of(me).expect("validated partition");
        let k = me.device;
        let interferers: Vec<usize> = state
            .partition
            .undecoded_from(l)
            .filter(|s| *s != me)
            .map(|s| s.flat(state.sub_messages))
            .collect();
        let device_gain: Vec<f64> = (0..self.devices())
            .map(|n| g.dotc(&cache.h[n]).norm_sqr() + cache.err_power(n, g))
            .collect();
        StreamTerms {
            signal_gain: g.dotc(&cache.h[k]).norm_sqr(),
            interferer_gain: interferers.iter().map(|&t| device_gain[state.stream(t).device]).collect(),
            interferers,
            own_error: cache.err_power(k, g),
            noise: self.sigma2 * g.norm_squared(),
        }
    }

    /// Rate of every sub-message in flat order, bits/s/Hz.
    pub fn sub_rates(&self, state: &SolutionState) -> Result<Vec<f64>> {
        self.check_shapes(state)?;
        let cache = self.cache(&state.v);
        Ok(self.sub_rates_cached(state, &cache))
    }

    pub fn sub_rates_cached(&self, state: &SolutionState, cache: &LinkCache) -> Vec<f64> {
        (0..state.streams())
            .map(|f| {
                let t = self.terms(state, cache, f, &state.g[f]);
                (1.0 + t.sinr(state.p[f], &state.p)).log2()
            })
            .collect()
    }

    pub fn subrate(&self, state: &SolutionState, s: SubMessage) -> Result<f64> {
        self.check_shapes(state)?;
        if state.partition.group_of(s).is_none() {
            return validation(format!("sub-message {s:?} is not in the partition"));
        }
        let cache = self.cache(&state.v);
        let f = s.flat(state.sub_messages);
        let t = self.terms(state, &cache, f, &state.g[f]);
        Ok((1.0 + t.sinr(state.p[f], &state.p)).log2())
    }

    pub fn device_rates(&self, state: &SolutionState) -> Result<Vec<f64>> {
        Ok(sum_per_device(&self.sub_rates(state)?, state.sub_messages))
    }

    /// `min_k sum_i r_{k,i}`.
    pub fn min_rate(&self, state: &SolutionState) -> Result<f64> {
        Ok(min_of(&self.device_rates(state)?))
    }

    pub fn sinrs(&self, state: &SolutionState) -> Result<Vec<f64>> {
        self.check_shapes(state)?;
        let cache = self.cache(&state.v);
        Ok((0..state.streams())
            .map(|f| self.terms(state, &cache, f, &state.g[f]).sinr(state.p[f], &state.p))
            .collect())
    }
}

pub fn sum_per_device(sub_rates: &[f64], sub_messages: usize) -> Vec<f64> {
    sub_rates.chunks(sub_messages).map(|c| c.iter().sum()).collect()
}

pub fn min_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Rate of `(k, i)` with perfect CSIT.
pub fn subrate_perfect(
    state: &SolutionState,
    channels: &ChannelSet,
    k: usize,
    i: usize,
    sigma2: f64,
) -> Result<f64> {
    RateModel::perfect(channels, sigma2).subrate(state, SubMessage::new(k, i))
}

/// `sum_i r_{k,i}` for every device with perfect CSIT.
pub fn device_rates(state: &SolutionState, channels: &ChannelSet, sigma2: f64) -> Result<Vec<f64>> {
    RateModel::perfect(channels, sigma2).device_rates(state)
}

/// Lower bound on the ergodic rate of `(k, i)` given the estimated model.
/// Perfect-mode models evaluate the exact rate.
pub fn subrate_lower(state: &SolutionState, csit: &CsitModel, k: usize, i: usize, sigma2: f64) -> Result<f64> {
    RateModel::from_csit(csit, sigma2).subrate(state, SubMessage::new(k, i))
}

/// Symbol-level SGD receiver: Gaussian unit-power symbols, decode group by
/// group with the state's beamformers, cancel decoded groups exactly.
/// Returns the empirical SINR of every estimate in flat order.
pub fn simulate_sgd_sinr<R: Rng + ?Sized>(
    state: &SolutionState,
    channels: &ChannelSet,
    sigma2: f64,
    n_symbols: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let model = RateModel::perfect(channels, sigma2);
    model.check_shapes(state)?;
    if n_symbols == 0 {
        return validation("need at least one symbol");
    }
    let streams = state.streams();
    let m = model.antennas();
    let h: Vec<CVec> = model.cache(&state.v).h;
    let amp: Vec<f64> = state.p.iter().map(|p| p.max(0.0).sqrt()).collect();
    let col = |f: usize| &h[state.stream(f).device] * C64::new(amp[f], 0.0);
    let tx: Vec<CVec> = (0..streams).map(col).collect();
    let gain: Vec<C64> = (0..streams).map(|f| state.g[f].dotc(&tx[f])).collect();

    let mut err_pow = vec![0.0; streams];
    let mut sym_pow = vec![0.0; streams];
    let noise_std = C64::new(sigma2.sqrt(), 0.0);
    for _ in 0..n_symbols {
        let x: Vec<C64> = (0..streams).map(|_| complex_gaussian(rng)).collect();
        let mut y = complex_gaussian_vec(rng, m) * noise_std;
        for f in 0..streams {
            y += &tx[f] * x[f];
        }
        for group in state.partition.groups() {
            for s in group {
                let f = s.flat(state.sub_messages);
                let estimate = state.g[f].dotc(&y);
                err_pow[f] += (estimate - gain[f] * x[f]).norm_sqr();
                sym_pow[f] += x[f].norm_sqr();
            }
            for s in group {
                let f = s.flat(state.sub_messages);
                y -= &tx[f] * x[f];
            }
        }
    }
    Ok((0..streams).map(|f| gain[f].norm_sqr() * sym_pow[f] / err_pow[f]).collect())
}

/// True when all constraint tolerances of the feasible set hold.
pub fn is_feasible(state: &SolutionState, p_max: f64) -> bool {
    state.check_feasible(p_max, tol::FEASIBILITY).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::config::SystemConfig;
    use crate::numerics::{normalized, solve_hpd};
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;
    use std::f64::consts::PI;

    pub(crate) fn random_state(
        rng: &mut impl Rng,
        cfg: &SystemConfig,
        partition: GroupPartition,
    ) -> SolutionState {
        let n = cfg.irs_elements;
        let mut v = CVec::from_fn(n + 1, |_, _| C64::from_polar(1.0, rng.random_range(-PI..PI)));
        v[n] = C64::new(1.0, 0.0);
        let g = (0..cfg.streams()).map(|_| normalized(&complex_gaussian_vec(rng, cfg.antennas))).collect();
        let p = (0..cfg.streams()).map(|_| rng.random_range(0.1..1.0) * cfg.p_max() / 2.0).collect();
        SolutionState { g, v, p, partition, sub_messages: cfg.sub_messages }
    }

    fn cfg(m: usize, n: usize, k: usize, i: usize) -> SystemConfig {
        SystemConfig { antennas: m, irs_elements: n, devices: k, sub_messages: i, groups: 1, ..Default::default() }
    }

    #[test]
    fn partition_validation() {
        let s = |k, i| SubMessage::new(k, i);
        assert!(GroupPartition::new(vec![vec![s(0, 0), s(0, 1)], vec![s(1, 0), s(1, 1)]], 2, 2).is_ok());
        assert!(GroupPartition::new(vec![vec![s(0, 0), s(0, 1)], vec![s(1, 0)]], 2, 2).is_err());
        assert!(GroupPartition::new(vec![vec![s(0, 0), s(0, 0)], vec![s(1, 0)]], 2, 1).is_err());
        assert!(GroupPartition::new(vec![vec![s(0, 0), s(2, 0)]], 2, 1).is_err());
    }

    #[test]
    fn partition_json_round_trip() {
        let p = GroupPartition::full_sic(2, 2);
        let text = p.to_json().unwrap();
        assert_eq!(text, "[[[0,0]],[[0,1]],[[1,0]],[[1,1]]]");
        assert_eq!(GroupPartition::from_json(&text, 2, 2).unwrap(), p);
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let c = cfg(3, 2, 2, 2);
        let mut rng = stream_rng(1, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let mut st = random_state(&mut rng, &c, GroupPartition::all_in_first(2, 2, 1));
        st.p[1] = 0.0;
        assert_eq!(subrate_perfect(&st, &ch, 0, 1, c.sigma2()).unwrap(), 0.0);
        st.p.iter_mut().for_each(|p| *p = 0.0);
        assert!(device_rates(&st, &ch, c.sigma2()).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn interference_free_matched_filter() {
        let c = cfg(4, 3, 1, 1);
        let mut rng = stream_rng(2, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let mut st = random_state(&mut rng, &c, GroupPartition::all_in_first(1, 1, 1));
        let h = &ch.composite[0] * &st.v;
        st.g[0] = normalized(&h);
        let want = (1.0 + st.p[0] * h.norm_squared() / c.sigma2()).log2();
        let got = subrate_perfect(&st, &ch, 0, 0, c.sigma2()).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        assert_eq!(device_rates(&st, &ch, c.sigma2()).unwrap(), vec![got]);
    }

    #[test]
    fn rates_invariant_to_joint_scaling_and_beam_scaling() {
        let c = cfg(3, 2, 3, 2);
        let mut rng = stream_rng(3, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let st = random_state(&mut rng, &c, GroupPartition::all_in_first(3, 2, 2));
        let base = RateModel::perfect(&ch, c.sigma2()).sub_rates(&st).unwrap();

        let mut scaled = st.clone();
        scaled.p.iter_mut().for_each(|p| *p *= 7.5);
        let r = RateModel::perfect(&ch, 7.5 * c.sigma2()).sub_rates(&scaled).unwrap();
        for (a, b) in base.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut beams = st.clone();
        beams.g.iter_mut().for_each(|g| *g *= C64::new(-2.0, 3.0));
        let r = RateModel::perfect(&ch, c.sigma2()).sub_rates(&beams).unwrap();
        for (a, b) in base.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_sub_message_rejected() {
        let c = cfg(2, 1, 1, 2);
        let mut rng = stream_rng(4, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let st = random_state(&mut rng, &c, GroupPartition::all_in_first(1, 2, 1));
        assert!(subrate_perfect(&st, &ch, 0, 2, c.sigma2()).is_err());
    }

    #[test]
    fn later_group_never_hurts_own_rate() {
        let c = cfg(3, 2, 3, 2);
        let mut rng = stream_rng(5, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        for _ in 0..20 {
            let mut st = random_state(&mut rng, &c, GroupPartition::all_in_first(3, 2, 3));
            let s = SubMessage::new(rng.random_range(0..3), rng.random_range(0..2));
            let before = subrate_perfect(&st, &ch, s.device, s.index, c.sigma2()).unwrap();
            st.partition.move_to(s, 1);
            let mid = subrate_perfect(&st, &ch, s.device, s.index, c.sigma2()).unwrap();
            st.partition.move_to(s, 2);
            let after = subrate_perfect(&st, &ch, s.device, s.index, c.sigma2()).unwrap();
            assert!(mid >= before - 1e-12 && after >= mid - 1e-12);
        }
    }

    #[test]
    fn noma_reduction_single_sub_message() {
        let c = cfg(3, 2, 2, 1);
        let mut rng = stream_rng(6, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let st = random_state(&mut rng, &c, GroupPartition::full_sic(2, 1));
        let dev = device_rates(&st, &ch, c.sigma2()).unwrap();
        for k in 0..2 {
            assert_eq!(dev[k], subrate_perfect(&st, &ch, k, 0, c.sigma2()).unwrap());
        }
    }

    #[test]
    fn chain_rule_with_mmse_full_sic() {
        let c = cfg(4, 3, 1, 2);
        let mut rng = stream_rng(7, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let mut st = random_state(&mut rng, &c, GroupPartition::full_sic(1, 2));
        let model = RateModel::perfect(&ch, c.sigma2());
        let cache = model.cache(&st.v);
        // MMSE for (0,0) treats (0,1) as interference; (0,1) is interference-free.
        let gd = &cache.h[0] * cache.h[0].adjoint() * C64::new(st.p[1], 0.0)
            + CMat::identity(4, 4) * C64::new(c.sigma2(), 0.0);
        st.g[0] = normalized(&solve_hpd(&gd, &cache.h[0]).unwrap());
        st.g[1] = normalized(&cache.h[0]);
        let total: f64 = model.device_rates(&st).unwrap()[0];
        let p_tot = st.p[0] + st.p[1];
        let want = (1.0 + p_tot * cache.h[0].norm_squared() / c.sigma2()).log2();
        assert!((total - want).abs() < 1e-8 * want);
    }

    #[test]
    fn robust_bound_with_zero_error_matches_perfect() {
        let c = cfg(2, 2, 2, 2);
        let mut rng = stream_rng(8, Stream::Solver);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let st = random_state(&mut rng, &c, GroupPartition::all_in_first(2, 2, 2));
        let zeros = vec![CMat::zeros(6, 6); 2];
        let csit = CsitModel::estimated(ch.composite.clone(), zeros, vec![], 10.0).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                let a = subrate_lower(&st, &csit, k, i, c.sigma2()).unwrap();
                let b = subrate_perfect(&st, &ch, k, i, c.sigma2()).unwrap();
                assert!((a - b).abs() < 1e-10);
            }
        }
        let bad = CsitModel { phi: vec![CMat::zeros(3, 3); 2], ..csit };
        assert!(subrate_lower(&st, &bad, 0, 0, c.sigma2()).is_err());
    }

    #[test]
    fn sgd_simulator_single_stream_awgn() {
        let c = cfg(3, 2, 1, 1);
        let mut rng = stream_rng(9, Stream::Symbols);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let st = random_state(&mut rng, &c, GroupPartition::all_in_first(1, 1, 1));
        let emp = simulate_sgd_sinr(&st, &ch, c.sigma2(), 20_000, &mut rng).unwrap();
        let h = &ch.composite[0] * &st.v;
        let want = st.p[0] * st.g[0].dotc(&h).norm_sqr() / c.sigma2();
        assert!((emp[0] / want - 1.0).abs() < 0.03);
    }

    #[test]
    fn sgd_simulator_cancellation_helps_second_group() {
        let c = cfg(2, 2, 2, 1);
        let mut rng = stream_rng(10, Stream::Symbols);
        let ch = sample_channels(&c, &mut rng).unwrap();
        let sic = random_state(&mut rng, &c, GroupPartition::full_sic(2, 1));
        let mut joint = sic.clone();
        joint.partition = GroupPartition::all_in_first(2, 1, 1);
        let a = simulate_sgd_sinr(&sic, &ch, c.sigma2(), 20_000, &mut rng).unwrap();
        let b = simulate_sgd_sinr(&joint, &ch, c.sigma2(), 20_000, &mut rng).unwrap();
        assert!(a[1] > b[1]);
    }
}
