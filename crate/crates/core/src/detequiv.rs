//! Deterministic equivalent of the M-MMSE SINR in the regime where `M` and `K`
//! grow with a fixed ratio and `rho_ul = rho / M`.
//!
//! For each BS `j` the coefficients `mu_jli` solve
//!
//! ```text
//! mu_jlk = (1/M) tr( Phi_jllk T_j(mu) ),
//! T_j(mu) = ( (1/M) sum_{l,i} Phi_jlli / (1 + mu_jli) + Z_j / M + I / rho )^{-1}
//! ```
//!
//! and the SINR of UE `k` is approximated through the `L x L` matrix
//! `[B_jk]_{l,l'} = (1/M) tr(Phi_jl'lk T_j)` as `1 / [(I + B_jk)^{-1}]_{jj} - 1`.

use serde::{Deserialize, Serialize};

use crate::estimation::EstimationStatistics;
use crate::linalg::{self, c, CMat, CVec, HpdFactor};
use crate::network::{CorrelationSet, Dims};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the previous iterate, `0` for plain iteration.
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            damping: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub cell: usize,
    /// `mu_jli` in `(l, i)` order.
    pub mu_star: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Max-update after every iteration.
    pub residual_history: Vec<f64>,
}

impl FixedPointSolution {
    pub fn mu(&self, dims: &Dims, l: usize, i: usize) -> f64 {
        self.mu_star[l * dims.ues + i]
    }
}

fn resolvent_inverse(stats: &EstimationStatistics, mu: &[f64], rho: f64, j: usize) -> CMat {
    let dims = stats.dims;
    let inv_m = 1.0 / dims.antennas as f64;
    let mut t_inv = stats.z(j) * c(inv_m);
    for d in 0..dims.antennas {
        t_inv[(d, d)] += c(1.0 / rho);
    }
    for l in 0..dims.cells {
        for i in 0..dims.ues {
            let w = inv_m / (1.0 + mu[l * dims.ues + i]);
            t_inv += stats.phi_self(j, l, i) * c(w);
        }
    }
    t_inv
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

/// `T_j` for the given coefficients.
pub fn compute_t_star(mu: &[f64], stats: &EstimationStatistics, rho: f64, j: usize) -> Result<CMat> {
    check_rho(rho)?;
    if mu.len() != stats.dims.cells * stats.dims.ues {
        return Err(Error::InvalidInput("coefficient vector has wrong length".into()));
    }
    Ok(HpdFactor::new(&resolvent_inverse(stats, mu, rho, j))?.inverse())
}

/// Solves the fixed-point system for BS `j` by plain iteration from `mu = 1`.
///
/// A result that hits `max_iter` is returned with `converged = false`.
pub fn solve_mu(stats: &EstimationStatistics, rho: f64, j: usize, opts: FixedPointOptions) -> Result<FixedPointSolution> {
    check_rho(rho)?;
    if !(opts.tol > 0.0) || !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidInput("fixed-point tolerance must be positive and damping in [0, 1)".into()));
    }
    let dims = stats.dims;
    if j >= dims.cells {
        return Err(Error::InvalidInput(format!("cell {j} out of range")));
    }
    let inv_m = 1.0 / dims.antennas as f64;
    let n = dims.cells * dims.ues;
    let mut mu = vec![1.0; n];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let t = compute_t_star(&mu, stats, rho, j)?;
        let mut next = vec![0.0; n];
        for l in 0..dims.cells {
            for i in 0..dims.ues {
                let raw = (linalg::trace_product(stats.phi_self(j, l, i), &t).re * inv_m).max(0.0);
                let idx = l * dims.ues + i;
                next[idx] = opts.damping * mu[idx] + (1.0 - opts.damping) * raw;
            }
        }
        residual = mu.iter().zip(&next).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        mu = next;
        iterations += 1;
        history.push(residual);
        if residual <= opts.tol {
            break;
        }
    }
    Ok(FixedPointSolution {
        cell: j,
        mu_star: mu,
        iterations,
        residual,
        converged: residual <= opts.tol,
        residual_history: history,
    })
}

/// `[B_jk]_{l,l'} = (1/M) tr(Phi_jl'lk T_j)`.
pub fn compute_b(stats: &EstimationStatistics, t_star: &CMat, j: usize, k: usize) -> CMat {
    let dims = stats.dims;
    let inv_m = 1.0 / dims.antennas as f64;
    let mut b = CMat::zeros(dims.cells, dims.cells);
    for l in 0..dims.cells {
        for lp in 0..dims.cells {
            b[(l, lp)] = linalg::trace_product(stats.phi(j, lp, l, k), t_star) * c(inv_m);
        }
    }
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBar {
    /// `1 / [(I + B)^{-1}]_{jj} - 1`.
    pub gamma_bar: f64,
    /// `[B]_{jj}`.
    pub first_term_bar: f64,
    /// `b^H (I + B^{[jj]})^{-1} b` with `b` the `j`-th column of `B` without
    /// its diagonal entry.
    pub loss_bar: f64,
}

impl GammaBar {
    /// The same quantity from the split form `[B]_jj - loss`.
    pub fn split_form(&self) -> f64 {
        self.first_term_bar - self.loss_bar
    }
}

pub fn gamma_bar(b: &CMat, j: usize) -> Result<GammaBar> {
    let l = b.nrows();
    if !b.is_square() || j >= l {
        return Err(Error::InvalidInput("B must be square and j in range".into()));
    }
    let inv = linalg::small_inverse(&(linalg::identity(l) + b))?;
    let diag = inv[(j, j)].re;
    if !(diag > 0.0) {
        return Err(Error::InvalidInput("I + B is not positive definite".into()));
    }
    let others: Vec<usize> = (0..l).filter(|&x| x != j).collect();
    let loss_bar = if others.is_empty() {
        0.0
    } else {
        let sub = linalg::identity(others.len()) + b.select_rows(&others).select_columns(&others);
        let col = CVec::from_iterator(others.len(), others.iter().map(|&x| b[(x, j)]));
        let solved = linalg::small_inverse(&sub)? * &col;
        col.dotc(&solved).re
    };
    Ok(GammaBar {
        gamma_bar: 1.0 / diag - 1.0,
        first_term_bar: b[(j, j)].re,
        loss_bar,
    })
}

/// Deterministic equivalent for every UE of one cell.
#[derive(Clone, Debug)]
pub struct CellDetEquiv {
    pub solution: FixedPointSolution,
    pub t_star: CMat,
    /// `B_jk` for every `k`.
    pub b: Vec<CMat>,
    pub gamma: Vec<GammaBar>,
}

/// Runs the fixed point, `T_j`, `B_jk` and the SINR approximation for cell `j`.
/// Non-convergence is an error.
pub fn det_equiv_cell(stats: &EstimationStatistics, rho: f64, j: usize, opts: FixedPointOptions) -> Result<CellDetEquiv> {
    let solution = solve_mu(stats, rho, j, opts)?;
    if !solution.converged {
        return Err(Error::NonConvergence {
            cell: j,
            iterations: solution.iterations,
            residual: solution.residual,
        });
    }
    let t_star = compute_t_star(&solution.mu_star, stats, rho, j)?;
    let b: Vec<CMat> = (0..stats.dims.ues).map(|k| compute_b(stats, &t_star, j, k)).collect();
    let gamma = b.iter().map(|bk| gamma_bar(bk, j)).collect::<Result<Vec<_>>>()?;
    Ok(CellDetEquiv {
        solution,
        t_star,
        b,
        gamma,
    })
}

/// Network-wide constants of the `T_j` sandwich
/// `(M/KL)/varsigma I <= T_j <= (M/KL)/eta I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub varsigma: f64,
    pub eta: f64,
    /// `min lambda_min(R_jli - Phi_jlli)` before adding the noise term.
    pub min_error_eigenvalue: f64,
    /// Noise contribution added to both constants, `(M/KL) / rho`.
    pub noise_term: f64,
}

impl BoundConstants {
    /// True when the error covariances are singular, so that `eta` is carried
    /// by the noise term alone.
    pub fn degenerate(&self) -> bool {
        self.min_error_eigenvalue <= 0.0
    }
}

/// Bound certificate for one UE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeBounds {
    pub first_lower: f64,
    pub first_value: f64,
    pub first_upper: f64,
    pub eta_prime: f64,
    pub varsigma_prime: f64,
    pub loss_lower: f64,
    pub loss_value: f64,
    pub loss_upper: f64,
}

impl UeBounds {
    pub fn first_holds(&self, rel_tol: f64) -> bool {
        let slack = rel_tol * self.first_value.abs();
        self.first_lower <= self.first_value + slack && self.first_value <= self.first_upper + slack
    }

    pub fn loss_holds(&self, rel_tol: f64) -> bool {
        let slack = rel_tol * self.loss_value.abs();
        self.loss_lower <= self.loss_value + slack && self.loss_value <= self.loss_upper + slack
    }
}

pub fn bound_constants(corr: &CorrelationSet, stats: &EstimationStatistics, rho: f64) -> Result<BoundConstants> {
    check_rho(rho)?;
    let dims = stats.dims;
    let mut max_phi: f64 = 0.0;
    let mut max_err: f64 = 0.0;
    let mut min_err = f64::INFINITY;
    for j in 0..dims.cells {
        for l in 0..dims.cells {
            for i in 0..dims.ues {
                let phi = stats.phi_self(j, l, i);
                max_phi = max_phi.max(linalg::hermitian_norm2(phi));
                let err = corr.get(j, l, i) - phi;
                let vals = linalg::hermitian_eigenvalues(&err);
                max_err = max_err.max(vals.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
                min_err = min_err.min(vals.min());
            }
        }
    }
    let kl = (dims.ues * dims.cells) as f64;
    let noise_term = dims.antennas as f64 / (kl * rho);
    Ok(BoundConstants {
        varsigma: max_phi + max_err + noise_term,
        eta: min_err + noise_term,
        min_error_eigenvalue: min_err,
        noise_term,
    })
}

/// Evaluates the sandwiches on `[B_jk]_jj` and on the loss term for every UE of
/// cell `j`, given the cell's deterministic equivalent.
pub fn compute_bounds(stats: &EstimationStatistics, consts: &BoundConstants, cell: &CellDetEquiv, j: usize) -> Vec<UeBounds> {
    let dims = stats.dims;
    let m = dims.antennas as f64;
    let scale = m / (dims.ues * dims.cells) as f64;
    let (varsigma, eta) = (consts.varsigma, consts.eta);
    (0..dims.ues)
        .map(|k| {
            let norm_tr = |l: usize| stats.phi_self(j, l, k).trace().re / m;
            let own = norm_tr(j);
            let others: Vec<f64> = (0..dims.cells).filter(|&l| l != j).map(norm_tr).collect();
            let eta_prime = others.iter().sum::<f64>() / eta;
            let varsigma_prime = others.iter().map(|t| t * t).sum::<f64>() / (varsigma * varsigma);
            let (loss_lower, loss_upper) = if others.is_empty() {
                (0.0, 0.0)
            } else {
                let num = scale * scale * varsigma_prime;
                let lm1 = others.len() as f64;
                (num / (1.0 + scale * eta_prime), num / (1.0 + scale * eta_prime / lm1))
            };
            UeBounds {
                first_lower: scale / varsigma * own,
                first_value: cell.gamma[k].first_term_bar,
                first_upper: scale / eta * own,
                eta_prime,
                varsigma_prime,
                loss_lower,
                loss_value: cell.gamma[k].loss_bar,
                loss_upper,
            }
        })
        .collect()
}

/// Closed form for the uncorrelated model `R_jji = I`, `R_jli = alpha I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncorrelatedClosedForm {
    /// Variance of the own-cell estimate, `rho_tr / (1 + rho_tr L_bar)`.
    pub nu: f64,
    /// `1 + alpha (L - 1)`.
    pub l_bar: f64,
    pub mu_star: f64,
    pub eta_star: f64,
    /// `[B]_jj` (scalar of the rank-one `B`).
    pub x: f64,
    pub noise: f64,
    pub non_coherent: f64,
    pub coherent: f64,
    pub gamma_bar: f64,
}

/// Scalar fixed point of the uncorrelated model, solved by bisection.
///
/// By symmetry `mu_jjk = mu` and `mu_jlk = alpha^2 mu` for `l != j`, and the
/// resolvent is `t I` with `t(mu)` below; the coefficient solves `mu = nu t(mu)`.
pub fn closed_form_uncorrelated(m: usize, k: usize, l: usize, alpha: f64, rho: f64, rho_tr: f64) -> Result<UncorrelatedClosedForm> {
    if m == 0 || k == 0 || l == 0 {
        return Err(Error::InvalidInput("M, K, L must be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha = {alpha} outside (0, 1]")));
    }
    check_rho(rho)?;
    if !(rho_tr > 0.0) {
        return Err(Error::InvalidInput("rho_tr must be positive".into()));
    }
    let (mf, kf, lm1) = (m as f64, k as f64, (l - 1) as f64);
    let a2 = alpha * alpha;
    let l_bar = 1.0 + alpha * lm1;
    let nu = rho_tr / (1.0 + rho_tr * l_bar);
    // L_bar * eta(mu): estimate part plus the error part (R - Phi summed over cells).
    let l_bar_eta = |mu: f64| nu / (1.0 + mu) + nu * a2 * lm1 / (1.0 + a2 * mu) + l_bar - nu * (1.0 + a2 * lm1);
    let t_of = |mu: f64| 1.0 / (kf / mf * l_bar_eta(mu) + 1.0 / rho);

    let (mut lo, mut hi) = (0.0, nu * rho);
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid - nu * t_of(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let mu_star = 0.5 * (lo + hi);
    let eta_star = l_bar_eta(mu_star) / l_bar;
    let noise = 1.0 / (rho * nu);
    let non_coherent = kf / mf * l_bar / nu * eta_star;
    let coherent = alpha * (l_bar - 1.0);
    Ok(UncorrelatedClosedForm {
        nu,
        l_bar,
        mu_star,
        eta_star,
        x: 1.0 / (noise + non_coherent),
        noise,
        non_coherent,
        coherent,
        gamma_bar: 1.0 / (noise + non_coherent + coherent),
    })
}

/// Correlation set of the uncorrelated model: `I` for own-cell links,
/// `alpha I` for every inter-cell link.
pub fn uncorrelated_correlation_set(dims: Dims, alpha: f64) -> Result<CorrelationSet> {
    CorrelationSet::from_fn(dims, |j, l, _| {
        let g = if j == l { 1.0 } else { alpha };
        linalg::identity(dims.antennas) * c(g)
    })
}

/// Per-antenna gains of a diagonal correlation model, `R_jli = diag(r_jli)`.
#[derive(Clone, Debug)]
pub struct DiagonalProfiles {
    pub dims: Dims,
    /// `r_jli(m)`, indexed by [`Dims::link`].
    pub r: Vec<Vec<f64>>,
    pub rho_tr: f64,
}

impl DiagonalProfiles {
    pub fn new(dims: Dims, r: Vec<Vec<f64>>, rho_tr: f64) -> Result<Self> {
        if r.len() != dims.links() || r.iter().any(|p| p.len() != dims.antennas) {
            return Err(Error::InvalidInput("diagonal profiles do not match dimensions".into()));
        }
        if r.iter().flatten().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("diagonal profiles must be nonnegative".into()));
        }
        if !(rho_tr > 0.0) {
            return Err(Error::InvalidInput("rho_tr must be positive".into()));
        }
        Ok(Self { dims, r, rho_tr })
    }

    pub fn r(&self, j: usize, l: usize, i: usize) -> &[f64] {
        &self.r[self.dims.link(j, l, i)]
    }

    /// Diagonal of `Q_ji`.
    pub fn q(&self, j: usize, i: usize, m: usize) -> f64 {
        (0..self.dims.cells).map(|n| self.r(j, n, i)[m]).sum::<f64>() + 1.0 / self.rho_tr
    }

    /// Diagonal of `Phi_jl'li`.
    pub fn phi(&self, j: usize, lp: usize, l: usize, i: usize, m: usize) -> f64 {
        self.r(j, lp, i)[m] * self.r(j, l, i)[m] / self.q(j, i, m)
    }

    /// Diagonal of `Z_j` (estimation errors only).
    pub fn z(&self, j: usize, m: usize) -> f64 {
        let d = self.dims;
        (0..d.cells)
            .flat_map(|l| (0..d.ues).map(move |i| (l, i)))
            .map(|(l, i)| self.r(j, l, i)[m] - self.phi(j, l, l, i, m))
            .sum()
    }

    /// The same model as a dense correlation set.
    pub fn to_correlation_set(&self) -> Result<CorrelationSet> {
        CorrelationSet::from_fn(self.dims, |j, l, i| {
            CMat::from_diagonal(&CVec::from_iterator(self.dims.antennas, self.r(j, l, i).iter().map(|&x| c(x))))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalClosedForm {
    pub cell: usize,
    /// Per-antenna resolvent denominators `varsigma_j(m)`; `T_j = diag(1 / varsigma_j)`.
    pub varsigma: Vec<f64>,
    /// `mu_jli` in `(l, i)` order.
    pub mu_star: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `B_jk` for every `k`, row-major `L x L`.
    pub b: Vec<Vec<f64>>,
    /// Two-cell SINR `[B]_jj - [B]_jo [B]_oj / (1 + [B]_oo)`; only for `L = 2`.
    pub gamma_two_cell: Option<Vec<f64>>,
}

/// Diagonal-correlation closed form for cell `j`.
///
/// Everything is diagonal, so the fixed point collapses to `M` per-antenna
/// unknowns `varsigma_j(m) = (1/M) sum phi_jli(m) / (1 + mu_jli) + z_j(m) / M + 1/rho`
/// with `mu_jli = (1/M) sum_n phi_jli(n) / varsigma_j(n)`.
pub fn closed_form_diagonal(profiles: &DiagonalProfiles, rho: f64, j: usize, opts: FixedPointOptions) -> Result<DiagonalClosedForm> {
    check_rho(rho)?;
    let dims = profiles.dims;
    if j >= dims.cells {
        return Err(Error::InvalidInput(format!("cell {j} out of range")));
    }
    let (cells, ues, m) = (dims.cells, dims.ues, dims.antennas);
    let inv_m = 1.0 / m as f64;
    let phi: Vec<Vec<f64>> = (0..cells)
        .flat_map(|l| (0..ues).map(move |i| (l, i)))
        .map(|(l, i)| (0..m).map(|a| profiles.phi(j, l, l, i, a)).collect())
        .collect();
    let z: Vec<f64> = (0..m).map(|a| profiles.z(j, a)).collect();

    let mu_of = |vs: &[f64]| -> Vec<f64> { phi.iter().map(|p| inv_m * p.iter().zip(vs).map(|(x, s)| x / s).sum::<f64>()).collect() };
    let varsigma_of = |mu: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|a| inv_m * phi.iter().zip(mu).map(|(p, u)| p[a] / (1.0 + u)).sum::<f64>() + inv_m * z[a] + 1.0 / rho)
            .collect()
    };

    let mut varsigma = varsigma_of(&vec![1.0; cells * ues]);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let next = varsigma_of(&mu_of(&varsigma));
        let change = varsigma.iter().zip(&next).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs() / b.abs()));
        varsigma = next;
        iterations += 1;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    let mu_star = mu_of(&varsigma);

    let b: Vec<Vec<f64>> = (0..ues)
        .map(|k| {
            let mut out = vec![0.0; cells * cells];
            for l in 0..cells {
                for lp in 0..cells {
                    out[l * cells + lp] = inv_m * (0..m).map(|a| profiles.phi(j, lp, l, k, a) / varsigma[a]).sum::<f64>();
                }
            }
            out
        })
        .collect();

    let gamma_two_cell = (cells == 2).then(|| {
        let o = 1 - j;
        b.iter()
            .map(|bk| bk[j * 2 + j] - bk[j * 2 + o] * bk[o * 2 + j] / (1.0 + bk[o * 2 + o]))
            .collect()
    });

    Ok(DiagonalClosedForm {
        cell: j,
        varsigma,
        mu_star,
        iterations,
        converged,
        b,
        gamma_two_cell,
    })
}
