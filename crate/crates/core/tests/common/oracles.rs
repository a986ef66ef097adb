//! Brute-force references. Rates here are recomputed from the channel
//! matrices with explicit loops; nothing calls the library's rate model or
//! solvers.

use irs_rsma::numerics::{CMat, CVec, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Decode-order description: `group[f]` for every flat sub-message `f = k I + i`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub h: Vec<CMat>,
    pub g: Vec<CVec>,
    pub v: CVec,
    pub p: Vec<f64>,
    pub group: Vec<usize>,
    pub sub_messages: usize,
    pub sigma2: f64,
}

fn inner(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Sub-rates with the given (possibly perturbed) channels.
pub fn sub_rates_with(inst: &Instance, h: &[CMat], v: &CVec) -> Vec<f64> {
    let eff: Vec<CVec> = h.iter().map(|hk| hk * v).collect();
    let n = inst.p.len();
    (0..n)
        .map(|f| {
            let k = f / inst.sub_messages;
            let g = &inst.g[f];
            let sig = inst.p[f] * inner(g, &eff[k]).norm_sqr();
            let mut den = inst.sigma2 * g.norm_squared();
            for t in 0..n {
                if t != f && inst.group[t] >= inst.group[f] {
                    den += inst.p[t] * inner(g, &eff[t / inst.sub_messages]).norm_sqr();
                }
            }
            (1.0 + sig / den).log2()
        })
        .collect()
}

pub fn min_rate_with(inst: &Instance, h: &[CMat], v: &CVec) -> f64 {
    sub_rates_with(inst, h, v)
        .chunks(inst.sub_messages)
        .map(|c| c.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

pub fn min_rate(inst: &Instance) -> f64 {
    min_rate_with(inst, &inst.h, &inst.v)
}

/// `log2 det(I + sigma^-2 sum p h h^H)` over all sub-messages.
pub fn detrate(h: &[CMat], v: &CVec, p: &[f64], sub_messages: usize, sigma2: f64) -> f64 {
    let m = h[0].nrows();
    let mut a = DMatrix::<C64>::identity(m, m);
    for (f, pf) in p.iter().enumerate() {
        let x = &h[f / sub_messages] * v;
        a += &x * x.adjoint() * C64::new(pf / sigma2, 0.0);
    }
    a.determinant().re.log2()
}

/// Best min-rate over `points` equally spaced phases of a single IRS element.
pub fn phase_grid_n1(inst: &Instance, points: usize) -> f64 {
    assert_eq!(inst.v.len(), 2);
    (0..points)
        .map(|q| {
            let v = CVec::from_vec(vec![C64::from_polar(1.0, 2.0 * PI * q as f64 / points as f64), C64::new(1.0, 0.0)]);
            min_rate_with(inst, &inst.h, &v)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best min-rate over `draws` uniformly random phase vectors.
pub fn phase_random_search<R: Rng>(inst: &Instance, draws: usize, rng: &mut R) -> f64 {
    let n1 = inst.v.len();
    let n = inst.p.len();
    // a[f][k] = H_k^H g_f so that g_f^H H_k v = a^H v.
    let a: Vec<Vec<CVec>> = (0..n).map(|f| inst.h.iter().map(|h| h.adjoint() * &inst.g[f]).collect()).collect();
    let mut v = CVec::from_element(n1, C64::new(1.0, 0.0));
    let mut best = f64::NEG_INFINITY;
    let kdev = inst.h.len();
    let mut gains = vec![0.0; kdev];
    let mut dev = vec![0.0; kdev];
    for _ in 0..draws {
        for j in 0..n1 - 1 {
            v[j] = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        }
        dev.iter_mut().for_each(|x| *x = 0.0);
        for f in 0..n {
            for (k, ak) in a[f].iter().enumerate() {
                gains[k] = inner(ak, &v).norm_sqr();
            }
            let k = f / inst.sub_messages;
            let mut den = inst.sigma2 * inst.g[f].norm_squared();
            for t in 0..n {
                if t != f && inst.group[t] >= inst.group[f] {
                    den += inst.p[t] * gains[t / inst.sub_messages];
                }
            }
            dev[k] += (1.0 + inst.p[f] * gains[k] / den).log2();
        }
        best = best.max(dev.iter().copied().fold(f64::INFINITY, f64::min));
    }
    best
}

/// Best min-rate over a `points x points` grid of the two powers (K = 2, I = 1).
pub fn power_grid_k2(inst: &Instance, p_max: f64, points: usize) -> f64 {
    assert_eq!(inst.p.len(), 2);
    let mut best = f64::NEG_INFINITY;
    let mut trial = inst.clone();
    for a in 0..points {
        for b in 0..points {
            trial.p = vec![p_max * a as f64 / (points - 1) as f64, p_max * b as f64 / (points - 1) as f64];
            best = best.max(min_rate(&trial));
        }
    }
    best
}

/// Min-rate of every assignment of sub-messages to `groups` groups.
pub fn all_partitions(inst: &Instance, groups: usize) -> Vec<(Vec<usize>, f64)> {
    let n = inst.p.len();
    let total = groups.pow(n as u32);
    let mut trial = inst.clone();
    (0..total)
        .map(|mut code| {
            let assign: Vec<usize> = (0..n)
                .map(|_| {
                    let x = code % groups;
                    code /= groups;
                    x
                })
                .collect();
            trial.group = assign.clone();
            (assign, min_rate(&trial))
        })
        .collect()
}

fn random_unit<R: Rng>(rng: &mut R, m: usize) -> CVec {
    let x = CVec::from_fn(m, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = x.norm();
    x / C64::new(n, 0.0)
}

/// Best min-rate over `draws` random sets of unit-norm beamformers.
pub fn beam_random_search<R: Rng>(inst: &Instance, draws: usize, rng: &mut R) -> f64 {
    let m = inst.h[0].nrows();
    let mut trial = inst.clone();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..draws {
        trial.g = (0..inst.p.len()).map(|_| random_unit(rng, m)).collect();
        best = best.max(min_rate(&trial));
    }
    best
}

/// Dominant generalized eigenvector of `(A, B)` for Hermitian `A` and HPD `B`
/// by plain power iteration on `B^-1 A`, with an eigen-decomposition of `B`
/// replacing any Cholesky factorization.
pub fn generalized_dominant(a: &CMat, b: &CMat) -> CVec {
    let binv = b.clone().try_inverse().expect("invertible");
    let op = &binv * a;
    let mut x = CVec::from_element(a.nrows(), C64::new(1.0, 0.0));
    for _ in 0..5000 {
        let y = &op * &x;
        let n = y.norm();
        x = y / C64::new(n, 0.0);
    }
    x
}

/// Monte-Carlo ergodic rate of one sub-message: true channels `H^ + E`,
/// `stack(E) ~ CN(0, Phi)`, mean and 99% normal half-width.
pub fn mc_ergodic_rate<R: Rng>(inst: &Instance, phi: &[CMat], f: usize, draws: usize, rng: &mut R) -> (f64, f64) {
    assert!(draws >= 1000);
    let (m, n1) = inst.h[0].shape();
    let roots: Vec<CMat> = phi
        .iter()
        .map(|p| {
            let e = nalgebra::SymmetricEigen::new(p.clone());
            let d = e.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
            &e.eigenvectors * CMat::from_diagonal(&d) * e.eigenvectors.adjoint()
        })
        .collect();
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let h: Vec<CMat> = inst
            .h
            .iter()
            .zip(&roots)
            .map(|(hk, r)| {
                let z = CVec::from_fn(m * n1, |_, _| {
                    C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * std::f64::consts::FRAC_1_SQRT_2
                });
                let e = r * z;
                hk + CMat::from_fn(m, n1, |a, b| e[a * n1 + b])
            })
            .collect();
        samples.push(sub_rates_with(inst, &h, &inst.v)[f]);
    }
    // Shifted by the first sample so identical samples give exactly zero width.
    let n = draws as f64;
    let x0 = samples[0];
    let s1: f64 = samples.iter().map(|x| x - x0).sum();
    let s2: f64 = samples.iter().map(|x| (x - x0).powi(2)).sum();
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    (x0 + s1 / n, 2.576 * (var / n).sqrt())
}
