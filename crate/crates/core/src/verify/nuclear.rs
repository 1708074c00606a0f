//! Multi-start search for decompositions with a small CP spectrum.
//!
//! Minimizes `0.5 ||X - [[u]]||^2 + mu * Omega_p^alpha(u)` by alternating
//! ridge solves whose diagonal weights reproduce the gradient of the
//! penalty at the current iterate, while `mu` is driven towards zero. The
//! limit fits `X` exactly and, once balanced, its spectrum is a local
//! minimizer of `||sigma||_(alpha/3)`. A final unpenalized polish closes the
//! remaining residual. Values are upper bounds on the true minimum.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::decomposition::{balance, pnorm, spectrum_qnorm, NormalizedDecomposition, SmallDecomposition, Tensor3};
use crate::error::{KbcError, Result};
use crate::par::Exec;

const MU_START: f64 = 1e-1;
const MU_END: f64 = 1e-10;
const SWEEPS_PER_LEVEL: usize = 30;
const POLISH_SWEEPS: usize = 500;
const PRUNE_RELATIVE: f64 = 1e-6;
const DEAD_COMPONENT: f64 = 1e-12;
const WEIGHT_CAP: f64 = 1e12;
const MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct EstimatorOptions {
    pub rank: usize,
    pub p: f64,
    /// Penalty exponent; the minimized spectrum quasi-norm is `alpha / 3`.
    pub alpha: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Required fit `||X - [[u]]||_F <= tolerance * max(1, ||X||_F)`.
    pub tolerance: f64,
    pub exec: Exec,
}

impl EstimatorOptions {
    pub fn new(rank: usize, p: f64, alpha: f64) -> Self {
        EstimatorOptions {
            rank,
            p,
            alpha,
            restarts: 20,
            seed: 0,
            tolerance: 1e-8,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEstimate {
    /// `||sigma||_(alpha/3)` of the best decomposition found.
    pub value: f64,
    pub decomposition: NormalizedDecomposition,
    pub residual: f64,
    /// Seed of the winning restart.
    pub seed: u64,
    /// Restarts that reached the fit tolerance.
    pub fitted: usize,
}

/// Factor matrices `n_d x R`.
type Factors = [DMatrix<f64>; 3];

fn reconstruct(f: &Factors, dims: [usize; 3]) -> Tensor3 {
    let mut t = Tensor3::zeros(dims);
    let rank = f[0].ncols();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let mut s = 0.0;
                for r in 0..rank {
                    s += f[0][(i, r)] * f[1][(j, r)] * f[2][(k, r)];
                }
                t.set(i, j, k, s);
            }
        }
    }
    t
}

fn residual(x: &Tensor3, f: &Factors) -> f64 {
    let fit = reconstruct(f, x.dims());
    x.data()
        .iter()
        .zip(fit.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Penalty weight of entry `(i, r)` of mode factor `u`:
/// `(alpha/3) ||u_r||_p^(alpha - p) |u_ir|^(p - 2)`.
fn weights(u: &DMatrix<f64>, p: f64, alpha: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(u.nrows(), u.ncols());
    for r in 0..u.ncols() {
        let col: Vec<f64> = u.column(r).iter().copied().collect();
        let norm = pnorm(&col, p);
        let scale = if norm > 0.0 { (alpha / 3.0) * norm.powf(alpha - p) } else { WEIGHT_CAP };
        for i in 0..u.nrows() {
            let entry = if p == 2.0 { 1.0 } else { col[i].abs().powf(p - 2.0) };
            w[(i, r)] = (scale * entry).min(WEIGHT_CAP);
        }
    }
    w
}

/// Solves every row of mode `d` against the other two factors.
fn update_mode(x: &Tensor3, f: &mut Factors, d: usize, mu: f64, p: f64, alpha: f64) {
    let dims = x.dims();
    let rank = f[0].ncols();
    let (e, g) = match d {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let gram = (f[e].transpose() * &f[e]).component_mul(&(f[g].transpose() * &f[g]));
    let mut rhs = DMatrix::<f64>::zeros(dims[d], rank);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = x.get(i, j, k);
                if v == 0.0 {
                    continue;
                }
                let idx = [i, j, k];
                for r in 0..rank {
                    rhs[(idx[d], r)] += v * f[e][(idx[e], r)] * f[g][(idx[g], r)];
                }
            }
        }
    }
    let w = if mu > 0.0 { Some(weights(&f[d], p, alpha)) } else { None };
    let floor = 1e-15 * (1.0 + gram.trace());
    for row in 0..dims[d] {
        let mut a = gram.clone();
        for r in 0..rank {
            a[(r, r)] += floor + w.as_ref().map_or(0.0, |w| mu * w[(row, r)]);
        }
        let b = DVector::from_iterator(rank, rhs.row(row).iter().copied());
        let sol = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => match a.lu().solve(&b) {
                Some(s) => s,
                None => continue,
            },
        };
        for r in 0..rank {
            f[d][(row, r)] = sol[r];
        }
    }
}

fn to_decomposition(f: &Factors, dims: [usize; 3]) -> SmallDecomposition {
    let components = (0..f[0].ncols())
        .map(|r| std::array::from_fn(|d| f[d].column(r).iter().copied().collect()))
        .collect();
    SmallDecomposition::new(dims, components).expect("factor shapes are consistent")
}

fn from_decomposition(u: &SmallDecomposition) -> Factors {
    let dims = u.dims();
    std::array::from_fn(|d| {
        DMatrix::from_fn(dims[d], u.rank(), |i, r| u.components()[r][d][i])
    })
}

/// Components collapsed to zero sit at a saddle the alternating solves
/// cannot leave; restart them at the scale of the current misfit so a
/// lower penalty can put them back to use.
fn revive(x: &Tensor3, f: &mut Factors, rng: &mut ChaCha8Rng) {
    let res = residual(x, f);
    if res <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let scale = res.cbrt();
    for r in 0..f[0].ncols() {
        let sigma: f64 = (0..3).map(|d| f[d].column(r).norm()).product();
        if sigma > DEAD_COMPONENT {
            continue;
        }
        for m in f.iter_mut() {
            let n = m.nrows() as f64;
            for i in 0..m.nrows() {
                m[(i, r)] = scale * normal.sample(rng) / n.sqrt();
            }
        }
    }
}

/// Balanced factors with components below `PRUNE_RELATIVE * max sigma` removed.
fn balanced_pruned(f: &Factors, dims: [usize; 3], p: f64) -> Result<Factors> {
    let n = NormalizedDecomposition::from_decomposition(&to_decomposition(f, dims), p)?;
    let max = n.sigma.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n.rank()).filter(|&r| n.sigma[r] > PRUNE_RELATIVE * max).collect();
    let pruned = NormalizedDecomposition {
        p,
        sigma: keep.iter().map(|&r| n.sigma[r]).collect(),
        directions: keep.iter().map(|&r| n.directions[r].clone()).collect(),
    };
    Ok(from_decomposition(&pruned.to_decomposition(dims)?))
}

fn polish(x: &Tensor3, f: &mut Factors, tol: f64) -> f64 {
    let mut res = residual(x, f);
    for _ in 0..POLISH_SWEEPS {
        if res <= tol {
            break;
        }
        for d in 0..3 {
            update_mode(x, f, d, 0.0, 2.0, 2.0);
        }
        res = residual(x, f);
    }
    res
}

/// One restart on the unit-norm tensor `x`; `None` when no exact fit was reached.
fn single_start(x: &Tensor3, opts: &EstimatorOptions, seed: u64) -> Result<Option<(f64, NormalizedDecomposition, f64)>> {
    let dims = x.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut f: Factors = std::array::from_fn(|d| DMatrix::from_fn(dims[d], opts.rank, |_, _| normal.sample(&mut rng)));
    let mut mu = MU_START;
    while mu >= MU_END {
        for _ in 0..SWEEPS_PER_LEVEL {
            for d in 0..3 {
                update_mode(x, &mut f, d, mu, opts.p, opts.alpha);
            }
        }
        revive(x, &mut f, &mut rng);
        mu *= 0.5;
    }
    let tol = opts.tolerance;
    let mut candidates = [balanced_pruned(&f, dims, opts.p)?, f];
    let mut best: Option<(f64, NormalizedDecomposition, f64)> = None;
    for cand in candidates.iter_mut() {
        let res = polish(x, cand, tol);
        if res > tol {
            continue;
        }
        let balanced = balance(&to_decomposition(cand, dims), opts.p)?;
        let norm = NormalizedDecomposition::from_decomposition(&balanced, opts.p)?;
        let value = spectrum_qnorm(&norm.sigma, opts.alpha / 3.0)?;
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, norm, res));
        }
    }
    Ok(best)
}

/// Best `||sigma||_(alpha/3)` over `restarts` seeded searches of rank-`R`
/// exact decompositions, ties broken by the lower seed.
pub fn estimate_min_spectrum(tensor: &Tensor3, opts: &EstimatorOptions) -> Result<SpectrumEstimate> {
    let dims = tensor.dims();
    if dims.iter().any(|&n| n == 0 || n > MAX_DIM) {
        return Err(KbcError::Unsupported(format!(
            "tensor of shape {:?}; every dimension must be in 1..={MAX_DIM}",
            dims
        )));
    }
    if !(opts.p >= 2.0 && opts.p.is_finite()) {
        return Err(KbcError::Unsupported(format!("estimator needs finite p >= 2, got {}", opts.p)));
    }
    if opts.alpha.is_nan() || opts.alpha <= 0.0 || opts.rank == 0 || opts.restarts == 0 {
        return Err(KbcError::Config("estimator needs alpha > 0, rank > 0 and restarts > 0".into()));
    }
    let scale = tensor.frobenius_norm();
    if scale == 0.0 {
        return Ok(SpectrumEstimate {
            value: 0.0,
            decomposition: NormalizedDecomposition { p: opts.p, sigma: Vec::new(), directions: Vec::new() },
            residual: 0.0,
            seed: opts.seed,
            fitted: opts.restarts,
        });
    }
    let unit = tensor.scaled(1.0 / scale);
    let inner_tol = opts.tolerance * scale.max(1.0) / scale;
    let inner = EstimatorOptions { tolerance: inner_tol, ..*opts };
    let runs = opts
        .exec
        .map(opts.restarts, |s| single_start(&unit, &inner, opts.seed + s as u64));
    let mut best: Option<(f64, u64, NormalizedDecomposition, f64)> = None;
    let mut fitted = 0;
    for (s, run) in runs.into_iter().enumerate() {
        let Some((value, decomp, res)) = run? else { continue };
        fitted += 1;
        let seed = opts.seed + s as u64;
        let better = match &best {
            None => true,
            Some((v, bs, _, _)) => value.total_cmp(v).then(seed.cmp(bs)).is_lt(),
        };
        if better {
            best = Some((value, seed, decomp, res));
        }
    }
    let (value, seed, mut decomp, res) = best.ok_or(KbcError::RankTooSmall {
        rank: opts.rank,
        tolerance: opts.tolerance,
        best_residual: f64::NAN,
    })?;
    for s in decomp.sigma.iter_mut() {
        *s *= scale;
    }
    Ok(SpectrumEstimate {
        value: value * scale,
        decomposition: decomp,
        residual: res * scale,
        seed,
        fitted,
    })
}

/// Upper bound on the nuclear `p`-norm: the smallest `||sigma||_1` found.
pub fn nuclear_pnorm_estimate(
    tensor: &Tensor3,
    rank: usize,
    p: f64,
    restarts: usize,
    seed: u64,
) -> Result<(f64, NormalizedDecomposition)> {
    let opts = EstimatorOptions {
        restarts,
        seed,
        ..EstimatorOptions::new(rank, p, 3.0)
    };
    let est = estimate_min_spectrum(tensor, &opts)?;
    Ok((est.value, est.decomposition))
}
