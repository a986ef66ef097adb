//! Geometric multipath channels, composite and lifted forms, and the
//! statistical model of imperfect CSIT.
//!
//! Every link is a sum of multipath components, each a complex gain times
//! uniform-linear-array steering vectors and a delay phase
//! `exp(-j 2 pi tau B_s / 2)`. The composite channel of device `k` is
//! `H_k = [H_rb diag(h_sr,k), h_d,k]`, so that `H_k v` is the effective
//! channel for the phase vector `v = [e^{j theta_1}, ..., e^{j theta_N}, 1]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CsitMode, SystemConfig};
use crate::error::{validation, Error, Result};
use crate::numerics::{
    complex_gaussian, complex_gaussian_vec, hermitian_eig, hermitize, psd_sqrt, tol, CMat, CVec,
    C64,
};

/// Steering vector `[1, e^{-j 2 pi theta}, ..., e^{-j 2 pi (n-1) theta}]^T`.
pub fn steering(theta: f64, n: usize) -> CVec {
    CVec::from_fn(n, |m, _| C64::from_polar(1.0, -2.0 * PI * m as f64 * theta))
}

/// Multipath components of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub gains: Vec<C64>,
    /// Seconds, in `[0, 1/B_s)`.
    pub delays: Vec<f64>,
    /// Normalized angle at the first endpoint (BS side for BS links, IRS side otherwise).
    pub angles: Vec<f64>,
    /// Normalized IRS-side angle; only used for the IRS-to-BS matrix.
    pub far_angles: Vec<f64>,
}

impl PathSet {
    pub fn count(&self) -> usize {
        self.gains.len()
    }

    /// Draws a path count uniformly from the configured range, `CN(0,1)`
    /// gains, delays `U(0, 1/B_s)` and physical angles `U(-pi/2, pi/2)`
    /// mapped through `theta = sin(phi) / 2`.
    pub fn sample<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let count = rng.random_range(cfg.path_count_min..=cfg.path_count_max);
        let mut set = PathSet {
            gains: Vec::with_capacity(count),
            delays: Vec::with_capacity(count),
            angles: Vec::with_capacity(count),
            far_angles: Vec::with_capacity(count),
        };
        let angle = |rng: &mut R| 0.5 * rng.random_range(-PI / 2.0..PI / 2.0).sin();
        for _ in 0..count {
            set.gains.push(complex_gaussian(rng));
            set.delays.push(rng.random_range(0.0..1.0 / cfg.bandwidth_hz));
            set.angles.push(angle(rng));
            set.far_angles.push(angle(rng));
        }
        set
    }

    fn delay_phase(&self, p: usize, bandwidth_hz: f64) -> C64 {
        C64::from_polar(1.0, -2.0 * PI * self.delays[p] * bandwidth_hz / 2.0)
    }

    /// `sum_p beta_p a(theta_p) e^{-j 2 pi tau_p B_s / 2}` with `dim` entries.
    pub fn vector_channel(&self, dim: usize, bandwidth_hz: f64) -> CVec {
        let mut h = CVec::zeros(dim);
        for p in 0..self.count() {
            let w = self.gains[p] * self.delay_phase(p, bandwidth_hz);
            h += steering(self.angles[p], dim) * w;
        }
        h
    }

    /// `sum_p beta_p a_B(theta_B) a_R(theta_R)^H e^{-j 2 pi tau_p B_s / 2}`.
    pub fn matrix_channel(&self, rows: usize, cols: usize, bandwidth_hz: f64) -> CMat {
        let mut h = CMat::zeros(rows, cols);
        for p in 0..self.count() {
            let w = self.gains[p] * self.delay_phase(p, bandwidth_hz);
            let a_b = steering(self.angles[p], rows);
            let a_r = steering(self.far_angles[p], cols);
            h += (a_b * a_r.adjoint()) * w;
        }
        h
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// IRS to BS, `M x N`.
    pub h_rb: CMat,
    /// Device to IRS, `K` vectors of length `N`.
    pub h_sr: Vec<CVec>,
    /// Device to BS, `K` vectors of length `M`.
    pub h_d: Vec<CVec>,
    /// `H_k = [H_rb diag(h_sr,k), h_d,k]`, `M x (N+1)`.
    pub composite: Vec<CMat>,
}

impl ChannelSet {
    pub fn from_parts(h_rb: CMat, h_sr: Vec<CVec>, h_d: Vec<CVec>) -> Result<Self> {
        let (m, n) = h_rb.shape();
        if h_sr.len() != h_d.len() || h_sr.is_empty() {
            return validation("need the same non-zero number of IRS and direct device channels");
        }
        if h_sr.iter().any(|h| h.len() != n) || h_d.iter().any(|h| h.len() != m) {
            return validation(format!("device channels must have {n} (IRS) and {m} (BS) entries"));
        }
        let composite = h_sr
            .iter()
            .zip(&h_d)
            .map(|(sr, d)| composite_matrix(&h_rb, sr, d))
            .collect();
        Ok(Self { h_rb, h_sr, h_d, composite })
    }

    pub fn antennas(&self) -> usize {
        self.h_rb.nrows()
    }

    pub fn irs_elements(&self) -> usize {
        self.h_rb.ncols()
    }

    pub fn devices(&self) -> usize {
        self.h_d.len()
    }

    /// The same realization with every device-to-IRS link removed, so that
    /// `H_k v = h_d,k` for any phase vector.
    pub fn without_irs(&self) -> Self {
        let zero = vec![CVec::zeros(self.irs_elements()); self.devices()];
        Self::from_parts(self.h_rb.clone(), zero, self.h_d.clone()).expect("shapes preserved")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChannelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelJson = serde_json::from_str(text)?;
        doc.into_channels()
    }
}

fn composite_matrix(h_rb: &CMat, h_sr: &CVec, h_d: &CVec) -> CMat {
    let (m, n) = h_rb.shape();
    let mut h = CMat::zeros(m, n + 1);
    for col in 0..n {
        h.set_column(col, &(h_rb.column(col) * h_sr[col]));
    }
    h.set_column(n, h_d);
    h
}

/// Draws `H_rb`, then `h_sr,k` and `h_d,k` for every device, in that order.
pub fn sample_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    cfg.validate()?;
    let (m, n) = (cfg.antennas, cfg.irs_elements);
    let h_rb = PathSet::sample(cfg, rng).matrix_channel(m, n, cfg.bandwidth_hz);
    let mut h_sr = Vec::with_capacity(cfg.devices);
    let mut h_d = Vec::with_capacity(cfg.devices);
    for _ in 0..cfg.devices {
        h_sr.push(PathSet::sample(cfg, rng).vector_channel(n, cfg.bandwidth_hz));
        h_d.push(PathSet::sample(cfg, rng).vector_channel(m, cfg.bandwidth_hz));
    }
    ChannelSet::from_parts(h_rb, h_sr, h_d)
}

/// Checks `|v_n| = 1` for all entries and `v_{N+1} = 1`.
pub fn check_phase_vector(v: &CVec, irs_elements: usize) -> Result<()> {
    if v.len() != irs_elements + 1 {
        return validation(format!(
            "phase vector has {} entries, expected N+1 = {}",
            v.len(),
            irs_elements + 1
        ));
    }
    for (n, z) in v.iter().enumerate() {
        if (z.norm() - 1.0).abs() > tol::MODULUS {
            return validation(format!("phase entry {n} has modulus {}", z.norm()));
        }
    }
    if (v[irs_elements] - C64::new(1.0, 0.0)).norm() > tol::MODULUS {
        return validation("last phase entry must equal 1");
    }
    Ok(())
}

/// `h_k = H_k v`.
pub fn effective_vector(composite: &CMat, v: &CVec) -> Result<CVec> {
    check_phase_vector(v, composite.ncols().saturating_sub(1))?;
    Ok(composite * v)
}

/// Row-wise stacking `[H[0,:], H[1,:], ...]^T` of a composite matrix.
pub fn stack(h: &CMat) -> CVec {
    let (m, n1) = h.shape();
    CVec::from_fn(m * n1, |idx, _| h[(idx / n1, idx % n1)])
}

/// Inverse of [`stack`].
pub fn unstack(h: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |r, c| h[r * cols + c])
}

/// Lifted forms used by the imperfect-CSIT rate expressions.
#[derive(Debug, Clone)]
pub struct LiftedStack {
    /// Row-wise stacking of `H_k`, length `M(N+1)`.
    pub h_tilde: CVec,
    /// `M x M(N+1)`, row `m` carries `v^T` in block `m`.
    pub v_tilde: CMat,
    /// `(N+1) x M(N+1)`, `[g_1 I, ..., g_M I]`.
    pub g_tilde: CMat,
}

pub fn lift_v(v: &CVec, antennas: usize) -> CMat {
    let n1 = v.len();
    let mut out = CMat::zeros(antennas, antennas * n1);
    for m in 0..antennas {
        for j in 0..n1 {
            out[(m, m * n1 + j)] = v[j];
        }
    }
    out
}

pub fn lift_g(g: &CVec, n1: usize) -> CMat {
    let m = g.len();
    let mut out = CMat::zeros(n1, m * n1);
    for a in 0..m {
        for j in 0..n1 {
            out[(j, a * n1 + j)] = g[a];
        }
    }
    out
}

pub fn lift_stack(composite: &CMat, g: &CVec, v: &CVec) -> Result<LiftedStack> {
    let (m, n1) = composite.shape();
    if g.len() != m || v.len() != n1 {
        return validation(format!(
            "lift_stack: H is {m}x{n1}, g has {} entries, v has {}",
            g.len(),
            v.len()
        ));
    }
    Ok(LiftedStack { h_tilde: stack(composite), v_tilde: lift_v(v, m), g_tilde: lift_g(g, n1) })
}

/// Non-centred sample second moment `(1/n) sum x x^H`.
pub fn sample_covariance<I: IntoIterator<Item = CVec>>(draws: I) -> Result<CMat> {
    let mut acc: Option<CMat> = None;
    let mut count = 0usize;
    for x in draws {
        let term = &x * x.adjoint();
        match acc.as_mut() {
            Some(a) => *a += term,
            None => acc = Some(term),
        }
        count += 1;
    }
    let acc = acc.ok_or_else(|| Error::Validation("no samples".into()))?;
    Ok(hermitize(&(acc / C64::new(count as f64, 0.0))))
}

/// `Sigma_k = E[h~_k h~_k^H]` from `n_samples` fresh draws of device `k`'s
/// composite channel (the IRS-to-BS matrix is redrawn with it).
pub fn estimate_sigma<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    k: usize,
    rng: &mut R,
    n_samples: usize,
) -> Result<CMat> {
    if n_samples < 100 {
        return validation(format!("covariance needs at least 100 samples (got {n_samples})"));
    }
    if k >= cfg.devices {
        return validation(format!("device {k} out of range"));
    }
    let (m, n) = (cfg.antennas, cfg.irs_elements);
    let draws = (0..n_samples).map(|_| {
        let h_rb = PathSet::sample(cfg, rng).matrix_channel(m, n, cfg.bandwidth_hz);
        let sr = PathSet::sample(cfg, rng).vector_channel(n, cfg.bandwidth_hz);
        let d = PathSet::sample(cfg, rng).vector_channel(m, cfg.bandwidth_hz);
        stack(&composite_matrix(&h_rb, &sr, &d))
    });
    sample_covariance(draws)
}

/// Estimation-error covariance `Phi = Sigma - Sigma (Sigma + eps I)^{-1} Sigma`
/// with `eps = sigma^2 / (L P_max)`, evaluated in the eigenbasis of `Sigma`
/// as `U diag(eps l / (l + eps)) U^H`.
pub fn error_covariance(sigma: &CMat, eps: f64) -> Result<CMat> {
    if !(eps > 0.0) {
        return Err(Error::Numerical(format!("regularization {eps} must be positive")));
    }
    let eig = hermitian_eig(sigma)?;
    Ok(eig.reconstruct_with(|l| {
        let l = l.max(0.0);
        eps * l / (l + eps)
    }))
}

/// What the receiver knows about the channels.
#[derive(Debug, Clone)]
pub struct CsitModel {
    pub mode: CsitMode,
    /// Estimated composites; equal to the true ones for perfect CSIT.
    pub h_hat: Vec<CMat>,
    /// Error covariances, empty for perfect CSIT (identically zero).
    pub phi: Vec<CMat>,
    /// Channel covariances used to build `phi`, empty for perfect CSIT.
    pub sigma: Vec<CMat>,
    pub l_train: f64,
}

impl CsitModel {
    pub fn perfect(channels: &ChannelSet) -> Self {
        Self {
            mode: CsitMode::Perfect,
            h_hat: channels.composite.clone(),
            phi: Vec::new(),
            sigma: Vec::new(),
            l_train: f64::INFINITY,
        }
    }

    /// Estimated-mode model with explicit estimates and error covariances.
    pub fn estimated(h_hat: Vec<CMat>, phi: Vec<CMat>, sigma: Vec<CMat>, l_train: f64) -> Result<Self> {
        if h_hat.len() != phi.len() {
            return validation("one error covariance per device is required");
        }
        for (h, p) in h_hat.iter().zip(&phi) {
            let dim = h.nrows() * h.ncols();
            if p.shape() != (dim, dim) {
                return validation(format!("error covariance must be {dim}x{dim}"));
            }
        }
        Ok(Self { mode: CsitMode::Estimated, h_hat, phi, sigma, l_train })
    }

    pub fn phi(&self, k: usize) -> Option<&CMat> {
        self.phi.get(k)
    }
}

/// Builds the estimated-CSIT model: `Phi_k` from `Sigma_k`, an error draw
/// `e_k ~ CN(0, Phi_k)` and `H^_k = unstack(h~_k - e_k)`.
pub fn build_csit<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    sigma: &[CMat],
    rng: &mut R,
) -> Result<CsitModel> {
    if cfg.csit == CsitMode::Perfect {
        return Ok(CsitModel::perfect(channels));
    }
    if sigma.len() != channels.devices() {
        return validation("one channel covariance per device is required");
    }
    let eps = cfg.sigma2() / (cfg.l_train * cfg.p_max());
    let (m, n1) = channels.composite[0].shape();
    let mut h_hat = Vec::with_capacity(sigma.len());
    let mut phi = Vec::with_capacity(sigma.len());
    for (k, s) in sigma.iter().enumerate() {
        if s.shape() != (m * n1, m * n1) {
            return validation(format!("Sigma_{k} must be {0}x{0}", m * n1));
        }
        let p = error_covariance(s, eps)?;
        let e = psd_sqrt(&p)? * complex_gaussian_vec(rng, m * n1);
        h_hat.push(unstack(&(stack(&channels.composite[k]) - e), m, n1));
        phi.push(p);
    }
    CsitModel::estimated(h_hat, phi, sigma.to_vec(), cfg.l_train)
}

type Pair = [f64; 2];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    #[serde(rename = "M")]
    antennas: usize,
    #[serde(rename = "N")]
    irs_elements: usize,
    #[serde(rename = "K")]
    devices: usize,
    /// Row-major.
    h_rb: Vec<Vec<Pair>>,
    h_sr: Vec<Vec<Pair>>,
    h_d: Vec<Vec<Pair>>,
}

fn pairs(v: &CVec) -> Vec<Pair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: &[Pair]) -> CVec {
    CVec::from_iterator(p.len(), p.iter().map(|[re, im]| C64::new(*re, *im)))
}

impl From<&ChannelSet> for ChannelJson {
    fn from(c: &ChannelSet) -> Self {
        let rows = (0..c.antennas())
            .map(|r| c.h_rb.row(r).iter().map(|z| [z.re, z.im]).collect())
            .collect();
        Self {
            antennas: c.antennas(),
            irs_elements: c.irs_elements(),
            devices: c.devices(),
            h_rb: rows,
            h_sr: c.h_sr.iter().map(pairs).collect(),
            h_d: c.h_d.iter().map(pairs).collect(),
        }
    }
}

impl ChannelJson {
    fn into_channels(self) -> Result<ChannelSet> {
        if self.h_rb.len() != self.antennas || self.h_rb.iter().any(|r| r.len() != self.irs_elements) {
            return validation("h_rb shape does not match M x N");
        }
        if self.h_sr.len() != self.devices || self.h_d.len() != self.devices {
            return validation("device channel count does not match K");
        }
        let h_rb = CMat::from_fn(self.antennas, self.irs_elements, |r, c| {
            let [re, im] = self.h_rb[r][c];
            C64::new(re, im)
        });
        let h_sr = self.h_sr.iter().map(|p| from_pairs(p)).collect();
        let h_d = self.h_d.iter().map(|p| from_pairs(p)).collect();
        ChannelSet::from_parts(h_rb, h_sr, h_d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{outer, trace_product};
    use crate::rng::{stream_rng, Stream};

    fn small_cfg(m: usize, n: usize, k: usize) -> SystemConfig {
        SystemConfig { antennas: m, irs_elements: n, devices: k, groups: 1, ..Default::default() }
    }

    fn random_phases(rng: &mut impl Rng, n: usize) -> CVec {
        let mut v = CVec::from_fn(n + 1, |_, _| C64::from_polar(1.0, rng.random_range(-PI..PI)));
        v[n] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn single_zero_phase_path_gives_all_ones() {
        let paths = PathSet {
            gains: vec![C64::new(1.0, 0.0)],
            delays: vec![0.0],
            angles: vec![0.0],
            far_angles: vec![0.0],
        };
        let h = paths.matrix_channel(3, 4, 10e6);
        assert!(h.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn delays_within_inverse_bandwidth() {
        let cfg = SystemConfig::default();
        let mut rng = stream_rng(1, Stream::Channel);
        for _ in 0..200 {
            let p = PathSet::sample(&cfg, &mut rng);
            assert!((8..=16).contains(&p.count()));
            assert!(p.delays.iter().all(|&t| (0.0..1e-7).contains(&t)));
            assert!(p.angles.iter().chain(&p.far_angles).all(|a| a.abs() <= 0.5));
        }
    }

    #[test]
    fn direct_channel_entry_variance_matches_mean_path_count() {
        let cfg = small_cfg(2, 1, 1);
        let mut rng = stream_rng(2, Stream::Channel);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let h = PathSet::sample(&cfg, &mut rng).vector_channel(2, cfg.bandwidth_hz);
            acc += h[0].norm_sqr();
        }
        let var = acc / draws as f64;
        assert!((var - 12.0).abs() < 0.05 * 12.0, "variance {var}");
    }

    #[test]
    fn composite_identity_matches_theta_form() {
        let cfg = small_cfg(4, 5, 3);
        let mut rng = stream_rng(3, Stream::Channel);
        for _ in 0..100 {
            let ch = sample_channels(&cfg, &mut rng).unwrap();
            let v = random_phases(&mut rng, 5);
            let theta = CMat::from_diagonal(&v.rows(0, 5).into_owned());
            for k in 0..3 {
                let direct = &ch.h_rb * &theta * &ch.h_sr[k] + &ch.h_d[k];
                let lifted = effective_vector(&ch.composite[k], &v).unwrap();
                assert!((direct - lifted).norm() < 1e-12 * (1.0 + ch.h_rb.norm()));
            }
        }
    }

    #[test]
    fn effective_vector_special_cases() {
        let cfg = small_cfg(3, 2, 1);
        let mut rng = stream_rng(4, Stream::Channel);
        let ch = sample_channels(&cfg, &mut rng).unwrap();
        let ones = CVec::from_element(3, C64::new(1.0, 0.0));
        let want = &ch.h_rb * &ch.h_sr[0] + &ch.h_d[0];
        assert!((effective_vector(&ch.composite[0], &ones).unwrap() - want).norm() < 1e-12);

        let no_irs = ch.without_irs();
        let v = random_phases(&mut rng, 2);
        let h = effective_vector(&no_irs.composite[0], &v).unwrap();
        assert!((h - &ch.h_d[0]).norm() < 1e-14);

        let mut bad = v.clone();
        bad[0] *= C64::new(1.1, 0.0);
        assert!(matches!(effective_vector(&ch.composite[0], &bad), Err(Error::Validation(_))));
    }

    #[test]
    fn lift_identities_hold_across_shapes() {
        let mut rng = stream_rng(5, Stream::Channel);
        for m in [1, 2, 4, 8] {
            for n in [1, 2, 4, 8] {
                let cfg = small_cfg(m, n, 1);
                let ch = sample_channels(&cfg, &mut rng).unwrap();
                let h = &ch.composite[0];
                let v = random_phases(&mut rng, n);
                let g = complex_gaussian_vec(&mut rng, m);
                let lifted = lift_stack(h, &g, &v).unwrap();
                let hv = h * &v;
                assert!((&lifted.v_tilde * &lifted.h_tilde - &hv).norm() < 1e-12 * (1.0 + hv.norm()));
                let scalar = g.dotc(&hv);
                let via_lift = g.dotc(&(&lifted.v_tilde * &lifted.h_tilde));
                assert!((scalar - via_lift).norm() < 1e-12 * (1.0 + scalar.norm()));

                // tr(G~ conj(h~) h~^T G~^H V) = |g^H H v|^2 with V = v v^H.
                let conj_h = lifted.h_tilde.map(|z| z.conj());
                let b = &lifted.g_tilde * &conj_h * lifted.h_tilde.transpose() * lifted.g_tilde.adjoint();
                let tr = trace_product(&b, &outer(&v));
                assert!((tr - scalar.norm_sqr()).abs() < 1e-10 * (1.0 + scalar.norm_sqr()));
            }
        }
    }

    #[test]
    fn degenerate_single_antenna_lift() {
        let mut rng = stream_rng(6, Stream::Channel);
        let ch = sample_channels(&small_cfg(1, 3, 1), &mut rng).unwrap();
        let v = random_phases(&mut rng, 3);
        let g = CVec::from_element(1, C64::new(1.0, 0.0));
        let lifted = lift_stack(&ch.composite[0], &g, &v).unwrap();
        assert_eq!(lifted.v_tilde, v.transpose());
        assert_eq!(lifted.h_tilde, ch.composite[0].row(0).transpose());
        assert!(lift_stack(&ch.composite[0], &CVec::zeros(2), &v).is_err());
    }

    #[test]
    fn deterministic_channel_gives_rank_one_covariance() {
        let h = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(0.0, 3.0)]);
        let s = sample_covariance(std::iter::repeat(h.clone()).take(500)).unwrap();
        assert!((s - outer(&h)).norm() < 1e-12);
    }

    #[test]
    fn covariance_trace_matches_moment() {
        // E|H_rb[m,n] h_sr[n]|^2 = 12 * 12 and E|h_d[m]|^2 = 12.
        let (m, n) = (2, 2);
        let cfg = small_cfg(m, n, 1);
        let mut rng = stream_rng(7, Stream::Covariance(0));
        let s = estimate_sigma(&cfg, 0, &mut rng, 4000).unwrap();
        let want = (m * n) as f64 * 144.0 + m as f64 * 12.0;
        let got: f64 = s.diagonal().iter().map(|z| z.re).sum();
        assert!((got - want).abs() < 0.1 * want, "trace {got} vs {want}");
    }

    #[test]
    fn covariance_resampling_stability() {
        let cfg = small_cfg(2, 2, 1);
        let a = estimate_sigma(&cfg, 0, &mut stream_rng(8, Stream::Covariance(0)), 10_000).unwrap();
        let b = estimate_sigma(&cfg, 0, &mut stream_rng(9, Stream::Covariance(0)), 10_000).unwrap();
        assert!((&a - &b).norm() < 0.1 * a.norm());
        assert!(estimate_sigma(&cfg, 0, &mut stream_rng(9, Stream::Covariance(0)), 50).is_err());
    }

    fn random_sigma(rng: &mut impl Rng, dim: usize) -> CMat {
        let a = CMat::from_fn(dim, dim, |_, _| complex_gaussian(rng));
        hermitize(&(&a * a.adjoint()))
    }

    #[test]
    fn error_covariance_vanishes_with_training() {
        let mut rng = stream_rng(10, Stream::Solver);
        let s = random_sigma(&mut rng, 6);
        let cfg = SystemConfig { l_train: 1e12, ..Default::default() };
        let eps = cfg.sigma2() / (cfg.l_train * cfg.p_max());
        let phi = error_covariance(&s, eps).unwrap();
        assert!(phi.norm() < 1e-6 * s.norm());
    }

    #[test]
    fn error_covariance_sandwiched_and_monotone() {
        let mut rng = stream_rng(11, Stream::Solver);
        for _ in 0..10 {
            let s = random_sigma(&mut rng, 5);
            let mut prev: Option<Vec<f64>> = None;
            for l in [10.0, 100.0, 1000.0] {
                let phi = error_covariance(&s, 0.1 / l).unwrap();
                let ev = hermitian_eig(&phi).unwrap().values;
                assert!(*ev.last().unwrap() >= -1e-10);
                assert!(hermitian_eig(&(&s - &phi)).unwrap().min_value() >= -1e-8);
                if let Some(p) = prev {
                    assert!(ev.iter().zip(&p).all(|(a, b)| *a <= b + 1e-12));
                }
                prev = Some(ev);
            }
        }
    }

    #[test]
    fn error_covariance_matches_inverse_formula() {
        let mut rng = stream_rng(12, Stream::Solver);
        let s = random_sigma(&mut rng, 4);
        let eps = 0.3;
        let reg = &s + CMat::identity(4, 4) * C64::new(eps, 0.0);
        let direct = &s - &s * reg.try_inverse().unwrap() * &s;
        assert!((direct - error_covariance(&s, eps).unwrap()).norm() < 1e-9 * s.norm());
    }

    #[test]
    fn perfect_csit_is_exact() {
        let cfg = small_cfg(2, 2, 2);
        let ch = sample_channels(&cfg, &mut stream_rng(13, Stream::Channel)).unwrap();
        let csit = build_csit(&cfg, &ch, &[], &mut stream_rng(13, Stream::CsitError)).unwrap();
        assert_eq!(csit.mode, CsitMode::Perfect);
        assert_eq!(csit.h_hat, ch.composite);
        assert!(csit.phi(0).is_none());
    }

    #[test]
    fn estimated_csit_perturbs_channels() {
        let cfg = SystemConfig { csit: CsitMode::Estimated, l_train: 10.0, ..small_cfg(2, 2, 2) };
        let ch = sample_channels(&cfg, &mut stream_rng(14, Stream::Channel)).unwrap();
        let sig: Vec<CMat> = (0..2)
            .map(|k| estimate_sigma(&cfg, k, &mut stream_rng(14, Stream::Covariance(k)), 500).unwrap())
            .collect();
        let csit = build_csit(&cfg, &ch, &sig, &mut stream_rng(14, Stream::CsitError)).unwrap();
        assert_eq!(csit.mode, CsitMode::Estimated);
        assert!((&csit.h_hat[0] - &ch.composite[0]).norm() > 0.0);
        assert_eq!(csit.phi[0].shape(), (6, 6));
    }

    #[test]
    fn json_round_trip() {
        let cfg = small_cfg(3, 2, 2);
        let ch = sample_channels(&cfg, &mut stream_rng(15, Stream::Channel)).unwrap();
        let back = ChannelSet::from_json(&ch.to_json().unwrap()).unwrap();
        assert_eq!(back, ch);
        assert!(ChannelSet::from_json(r#"{"M":1,"N":1,"K":1,"h_rb":[],"h_sr":[],"h_d":[]}"#).is_err());
    }
}
