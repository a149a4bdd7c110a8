//! Seeded simulation generators with known coefficient truth.
//!
//! Every generator draws from one `ChaCha8Rng` seeded with
//! `splitmix64(seed ^ tag)`, where `tag` identifies the scenario, in this
//! order: generating parameters first (in the order they are listed on each
//! function), then subjects one at a time. Nonzero positions are chosen by
//! sampling indices without replacement from the same stream.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::induced::{induced_from_parts, InducedCoefficients};
use crate::linalg::{CompoundSymmetric, DenseMatrix};
use crate::sampler::splitmix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Intro1,
    Intro2,
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::Intro1, Scenario::Intro2, Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Intro1 => "intro1",
            Scenario::Intro2 => "intro2",
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Scenario::Intro1 => 0x11,
            Scenario::Intro2 => 0x12,
            Scenario::S1 => 0x21,
            Scenario::S2 => 0x22,
            Scenario::S3 => 0x23,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown scenario `{s}` (expected intro1, intro2, s1, s2 or s3)")))
    }
}

/// Dimensions for the factor-model and Kronecker scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioDims {
    pub n: usize,
    pub p: usize,
    pub times: usize,
    pub k: usize,
}

impl Default for ScenarioDims {
    fn default() -> Self {
        Self {
            n: 200,
            p: 10,
            times: 3,
            k: 5,
        }
    }
}

/// Parameters the data were generated from.
#[derive(Clone, Debug)]
pub enum Generating {
    /// `y = θᵀx + noise` with `θ = vec(Σ_l ω_l β_lᵀ)`.
    Linear {
        beta: DenseMatrix<f64>,
        omega: DenseMatrix<f64>,
        psi: CompoundSymmetric<f64>,
        noise_var: f64,
    },
    /// Longitudinal factor model with a quadratic outcome in `η`.
    Factor {
        lambda: DenseMatrix<f64>,
        sigma2: Vec<f64>,
        phi: CompoundSymmetric<f64>,
        /// `rank × k`.
        beta: DenseMatrix<f64>,
        /// `rank × T`.
        omega: DenseMatrix<f64>,
        b: DenseMatrix<f64>,
        w: DenseMatrix<f64>,
        /// `kT`, indexed `h·T + t`.
        theta: Vec<f64>,
        /// Generated factors, `n × kT`.
        eta: Vec<f64>,
    },
    /// Kronecker-correlated exposures with coefficients drawn directly.
    Kronecker {
        main_exposures: Vec<usize>,
        pairs: Vec<(usize, usize)>,
        phi_exposure: CompoundSymmetric<f64>,
        phi_time: CompoundSymmetric<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct SimTruth {
    pub scenario: Scenario,
    pub p: usize,
    pub times: usize,
    /// True `E[y | x]` coefficients on the `x` scale.
    pub coefficients: InducedCoefficients<f64>,
    /// Per exposure, the change in `E[y | x]` moving it from −1 to 1 at all times.
    pub cumulative: Vec<f64>,
    pub generating: Generating,
}

pub fn truth_cumulative(coefficients: &InducedCoefficients<f64>, p: usize, times: usize) -> Vec<f64> {
    (0..p)
        .map(|j| 2.0 * coefficients.alpha[j * times..(j + 1) * times].iter().sum::<f64>())
        .collect()
}

fn stream(scenario: Scenario, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(scenario.tag())))
}

fn dirichlet_flat(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Uniform on `(−hi, −lo) ∪ (lo, hi)`.
fn signed_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let mag = rng.random_range(lo..hi);
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

fn sparse_signed(rng: &mut ChaCha8Rng, len: usize, nonzero: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let mut idx = sample(rng, len, nonzero.min(len)).into_vec();
    idx.sort_unstable();
    for i in idx {
        v[i] = signed_uniform(rng, lo, hi);
    }
    v
}

fn std_normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `(L_a ⊗ L_b) z` for lower factors `L_a` (`a × a`) and `L_b` (`b × b`).
fn kron_lower_apply(la: &DenseMatrix<f64>, lb: &DenseMatrix<f64>, z: &[f64]) -> Vec<f64> {
    let (na, nb) = (la.rows(), lb.rows());
    let mut tmp = vec![0.0; na * nb];
    for i in 0..na {
        for t in 0..nb {
            tmp[i * nb + t] = (0..=t).map(|s| lb[(t, s)] * z[i * nb + s]).sum();
        }
    }
    let mut out = vec![0.0; na * nb];
    for i in 0..na {
        for t in 0..nb {
            out[i * nb + t] = (0..=i).map(|r| la[(i, r)] * tmp[r * nb + t]).sum();
        }
    }
    out
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("e{j}")).collect()
}

fn assemble(y: Vec<f64>, p: usize, times: usize, x: Vec<f64>) -> Result<ExposureDataset> {
    let n = y.len();
    ExposureDataset::new(
        (1..=n).map(|i| i.to_string()).collect(),
        y,
        p,
        times,
        x,
        vec![false; n * p * times],
        Vec::new(),
        names(p),
        Vec::new(),
    )
}

/// Linear motivating example: 5 exposures at 3 times, `x_i ~ N(0, I_5 ⊗ Ψ)`
/// with `Ψ = CS(0.7)` and `y_i ~ N(θᵀx_i, 5)`.
pub fn gen_intro(rank: usize, n: usize, seed: u64) -> Result<(ExposureDataset, SimTruth)> {
    let (p, tt) = (5, 3);
    let (scenario, beta, omega) = match rank {
        1 => (
            Scenario::Intro1,
            vec![vec![1.0, 3.0, 2.0, -1.0, -2.0]],
            vec![vec![0.25, 0.25, 0.5]],
        ),
        2 => (
            Scenario::Intro2,
            vec![vec![1.0, 3.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, -1.0, -2.0]],
            vec![vec![0.25, 0.25, 0.5], vec![0.8, 0.1, 0.1]],
        ),
        _ => return Err(Error::Usage(format!("motivating example has rank 1 or 2, not {rank}"))),
    };
    let beta = DenseMatrix::from_rows(&beta)?;
    let omega = DenseMatrix::from_rows(&omega)?;
    let theta = crate::model::theta_from_factors(&beta, &omega);
    let psi = CompoundSymmetric::new(tt, 0.7)?;
    let l_psi = psi.to_dense().cholesky()?.factor().clone();
    let noise_var: f64 = 5.0;
    let mut rng = stream(scenario, seed);
    let mut x = Vec::with_capacity(n * p * tt);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z = std_normals(&mut rng, p * tt);
        let xi = kron_lower_apply(&DenseMatrix::identity(p), &l_psi, &z);
        let e: f64 = rng.sample(StandardNormal);
        y.push(theta.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>() + noise_var.sqrt() * e);
        x.extend(xi);
    }
    let coefficients = InducedCoefficients {
        alpha0: 0.0,
        alpha: theta,
        gamma: DenseMatrix::zeros(p * tt, p * tt),
    };
    let cumulative = truth_cumulative(&coefficients, p, tt);
    let data = assemble(y, p, tt, x)?;
    Ok((
        data,
        SimTruth {
            scenario,
            p,
            times: tt,
            coefficients,
            cumulative,
            generating: Generating::Linear {
                beta,
                omega,
                psi,
                noise_var,
            },
        },
    ))
}

/// Simulation scenarios 1–3.
///
/// Scenarios 1 and 2 draw, in order: `Λ` (row-major, N(0,1)); then for each
/// main-effect rank `l`, `ω_l` (flat Dirichlet) and `β_l` (2 nonzero of `k`);
/// then `W` (flat Dirichlet on all `T²` entries, row-major) and `B` (3 nonzero
/// of `k²`). Nonzero values are uniform on `(−2,−1) ∪ (1,2)`. Subjects follow
/// with `η_i`, `ε_i` and the outcome noise. `φ = 0.5`, `σ²_j = 0.25`.
///
/// Scenario 3 draws the 4 main-effect exposures and their values, then the
/// 10 interacting pairs (distinct exposures, same-time products) and their
/// values, then subjects from `N(0, CS_p(0.7) ⊗ CS_T(0.7))`.
pub fn gen_scenario(scenario: Scenario, seed: u64, dims: ScenarioDims) -> Result<(ExposureDataset, SimTruth)> {
    let ScenarioDims { n, p, times: tt, k } = dims;
    if p == 0 || tt == 0 || k == 0 || k > p {
        return Err(Error::Configuration("scenario needs p ≥ k ≥ 1 and T ≥ 1".into()));
    }
    match scenario {
        Scenario::Intro1 => gen_intro(1, n, seed),
        Scenario::Intro2 => gen_intro(2, n, seed),
        Scenario::S1 | Scenario::S2 => gen_factor(scenario, seed, dims),
        Scenario::S3 => gen_kronecker(seed, dims),
    }
}

fn gen_factor(scenario: Scenario, seed: u64, dims: ScenarioDims) -> Result<(ExposureDataset, SimTruth)> {
    let ScenarioDims { n, p, times: tt, k } = dims;
    let rank = if scenario == Scenario::S2 { 2 } else { 1 };
    let mut rng = stream(scenario, seed);
    let lambda = DenseMatrix::new(p, k, std_normals(&mut rng, p * k))?;
    let sigma2: Vec<f64> = vec![0.25; p];
    let phi = CompoundSymmetric::new(tt, 0.5)?;
    let mut beta = DenseMatrix::zeros(rank, k);
    let mut omega = DenseMatrix::zeros(rank, tt);
    for l in 0..rank {
        for (t, v) in dirichlet_flat(&mut rng, tt).into_iter().enumerate() {
            omega[(l, t)] = v;
        }
        for (h, v) in sparse_signed(&mut rng, k, 2, 1.0, 2.0).into_iter().enumerate() {
            beta[(l, h)] = v;
        }
    }
    let w = DenseMatrix::new(tt, tt, dirichlet_flat(&mut rng, tt * tt))?;
    let b = DenseMatrix::new(k, k, sparse_signed(&mut rng, k * k, 3, 1.0, 2.0))?;
    let theta = crate::model::theta_from_factors(&beta, &omega);

    let l_phi = phi.to_dense().cholesky()?.factor().clone();
    let sd: Vec<f64> = sigma2.iter().map(|s| s.sqrt()).collect();
    let mut x = Vec::with_capacity(n * p * tt);
    let mut y = Vec::with_capacity(n);
    let mut all_eta = Vec::with_capacity(n * k * tt);
    for _ in 0..n {
        let eta = kron_lower_apply(&DenseMatrix::identity(k), &l_phi, &std_normals(&mut rng, k * tt));
        let eps = kron_lower_apply(&DenseMatrix::diag(&sd), &l_phi, &std_normals(&mut rng, p * tt));
        for j in 0..p {
            for t in 0..tt {
                let mean: f64 = (0..k).map(|h| lambda[(j, h)] * eta[h * tt + t]).sum();
                x.push(mean + eps[j * tt + t]);
            }
        }
        let lin: f64 = theta.iter().zip(&eta).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for h1 in 0..k {
            for h2 in 0..k {
                let bb = b[(h1, h2)];
                if bb == 0.0 {
                    continue;
                }
                for t1 in 0..tt {
                    for t2 in 0..tt {
                        quad += bb * w[(t1, t2)] * eta[h1 * tt + t1] * eta[h2 * tt + t2];
                    }
                }
            }
        }
        let e: f64 = rng.sample(StandardNormal);
        y.push(lin + quad + e);
        all_eta.extend(eta);
    }
    let coefficients = induced_from_parts(0.0, &theta, &b, &w, &lambda, &sigma2, &phi)?;
    let cumulative = truth_cumulative(&coefficients, p, tt);
    let data = assemble(y, p, tt, x)?;
    Ok((
        data,
        SimTruth {
            scenario,
            p,
            times: tt,
            coefficients,
            cumulative,
            generating: Generating::Factor {
                lambda,
                sigma2,
                phi,
                beta,
                omega,
                b,
                w,
                theta,
                eta: all_eta,
            },
        },
    ))
}

fn gen_kronecker(seed: u64, dims: ScenarioDims) -> Result<(ExposureDataset, SimTruth)> {
    let ScenarioDims { n, p, times: tt, .. } = dims;
    let width = p * tt;
    let mut rng = stream(Scenario::S3, seed);
    let mut alpha = vec![0.0; width];
    let mut main_exposures = sample(&mut rng, p, 4.min(p)).into_vec();
    main_exposures.sort_unstable();
    for &j in &main_exposures {
        let m = signed_uniform(&mut rng, 0.2, 0.4);
        for t in 0..tt {
            let e: f64 = rng.sample(StandardNormal);
            alpha[j * tt + t] = m + 0.05 * e;
        }
    }
    let all_pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| ((a + 1)..p).map(move |b| (a, b))).collect();
    let mut pick = sample(&mut rng, all_pairs.len(), 10.min(all_pairs.len())).into_vec();
    pick.sort_unstable();
    let pairs: Vec<(usize, usize)> = pick.into_iter().map(|i| all_pairs[i]).collect();
    let mut gamma = DenseMatrix::zeros(width, width);
    for &(a, b) in &pairs {
        let m = signed_uniform(&mut rng, 0.05, 0.15);
        for t in 0..tt {
            let e: f64 = rng.sample(StandardNormal);
            let g = m + 0.01 * e;
            gamma[(a * tt + t, b * tt + t)] = 0.5 * g;
            gamma[(b * tt + t, a * tt + t)] = 0.5 * g;
        }
    }
    let phi_exposure = CompoundSymmetric::new(p, 0.7)?;
    let phi_time = CompoundSymmetric::new(tt, 0.7)?;
    let le = phi_exposure.to_dense().cholesky()?.factor().clone();
    let lt = phi_time.to_dense().cholesky()?.factor().clone();
    let coefficients = InducedCoefficients {
        alpha0: 0.0,
        alpha,
        gamma,
    };
    let mut x = Vec::with_capacity(n * width);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = kron_lower_apply(&le, &lt, &std_normals(&mut rng, width));
        let e: f64 = rng.sample(StandardNormal);
        y.push(coefficients.mean_at(&xi) + e);
        x.extend(xi);
    }
    let cumulative = truth_cumulative(&coefficients, p, tt);
    let data = assemble(y, p, tt, x)?;
    Ok((
        data,
        SimTruth {
            scenario: Scenario::S3,
            p,
            times: tt,
            coefficients,
            cumulative,
            generating: Generating::Kronecker {
                main_exposures,
                pairs,
                phi_exposure,
                phi_time,
            },
        },
    ))
}

/// `round(frac · n · pT)` cell positions (row-major into `x`), chosen without
/// replacement from a stream seeded by `seed`.
pub fn random_mask(n_cells: usize, frac: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x6d61_736b));
    let count = ((frac * n_cells as f64).round() as usize).min(n_cells);
    let mut v = sample(&mut rng, n_cells, count).into_vec();
    v.sort_unstable();
    v
}
