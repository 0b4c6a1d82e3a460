//! M-MMSE combining and the instantaneous effective SINR.
//!
//! The SINR of UE `k` in cell `j` is available through three algebraically
//! equivalent routes, all implemented here so they can be checked against each
//! other:
//!
//! * the quadratic form `h^H U^{-1} h` ([`sinr_quadratic`]),
//! * the conditional MSE, `1 / MSE - 1` ([`sinr_via_mse`]),
//! * the difference between a pilot-contamination-free term and the loss caused
//!   by the correlated estimates of pilot-sharing UEs ([`sinr_decomposition`]).
//!
//! [`evaluate_cell`] computes the same quantities for every UE of a cell from
//! a single factorization and is what the Monte Carlo harness uses.

use serde::{Deserialize, Serialize};

use crate::estimation::ChannelBlock;
use crate::linalg::{self, c, CMat, CVec, HpdFactor};
use crate::network::Dims;
use crate::{Error, Result};

/// Per-UE output of the decomposed SINR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrBreakdown {
    pub gamma: f64,
    /// Conditional MSE of the combined data symbol, `1 / (1 + gamma)`.
    pub mse: f64,
    /// `h_hat_jjk^H A_jk^{-1} h_hat_jjk`, independent of the pilot-sharing estimates.
    pub first_term: f64,
    /// Loss caused by the correlation among pilot-contaminating estimates.
    pub loss_term: f64,
}

fn check_indices(dims: &Dims, j: usize, k: usize) -> Result<()> {
    if j >= dims.cells || k >= dims.ues {
        return Err(Error::InvalidInput(format!(
            "UE ({j}, {k}) outside {} cells x {} UEs",
            dims.cells, dims.ues
        )));
    }
    Ok(())
}

fn check_power(rho_ul: f64) -> Result<()> {
    if !(rho_ul > 0.0 && rho_ul.is_finite()) {
        return Err(Error::InvalidInput(format!("uplink power must be positive, got {rho_ul}")));
    }
    Ok(())
}

/// `Z_j + I / rho_ul` plus the outer products of every estimate at BS `j`
/// accepted by `keep(l, i)`.
fn gram_plus_noise(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, keep: impl Fn(usize, usize) -> bool) -> CMat {
    let dims = block.dims;
    let mut a = z_j + linalg::identity(dims.antennas) * c(1.0 / rho_ul);
    for l in 0..dims.cells {
        for i in 0..dims.ues {
            if keep(l, i) {
                linalg::add_outer(&mut a, block.h_hat(j, l, i), 1.0);
            }
        }
    }
    a
}

/// M-MMSE combining vector `(sum h_hat h_hat^H + Z_j + I/rho_ul)^{-1} h_hat_jjk`.
pub fn mmse_combiner(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<CVec> {
    check_indices(&block.dims, j, k)?;
    check_power(rho_ul)?;
    let full = gram_plus_noise(block, z_j, rho_ul, j, |_, _| true);
    Ok(HpdFactor::new(&full)?.solve_vec(block.h_hat(j, j, k)))
}

/// Effective SINR achieved by an arbitrary combining vector `v`.
pub fn sinr_generic(v: &CVec, block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<f64> {
    check_indices(&block.dims, j, k)?;
    check_power(rho_ul)?;
    if v.iter().all(|x| x.norm() == 0.0) {
        return Err(Error::InvalidInput("combining vector is zero".into()));
    }
    let dims = block.dims;
    let signal = v.dotc(block.h_hat(j, j, k)).norm_sqr();
    let mut interference = linalg::sesquilinear(v, z_j, v).re + v.norm_squared() / rho_ul;
    for l in 0..dims.cells {
        for i in 0..dims.ues {
            if (l, i) != (j, k) {
                interference += v.dotc(block.h_hat(j, l, i)).norm_sqr();
            }
        }
    }
    Ok(signal / interference)
}

/// `h_hat_jjk^H U_jk^{-1} h_hat_jjk`, with `U_jk` built from every estimate
/// except the UE's own.
pub fn sinr_quadratic(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<f64> {
    check_indices(&block.dims, j, k)?;
    check_power(rho_ul)?;
    let u = gram_plus_noise(block, z_j, rho_ul, j, |l, i| (l, i) != (j, k));
    Ok(HpdFactor::new(&u)?.inv_quad(block.h_hat(j, j, k)))
}

/// `A_jk` (every estimate except pilot `k`, plus `Z_j + I/rho_ul`) and the
/// `M x L` matrix of the pilot-`k` estimates at BS `j`.
fn pilot_split(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<(HpdFactor, CMat)> {
    let a = gram_plus_noise(block, z_j, rho_ul, j, |_, i| i != k);
    let dims = block.dims;
    let h = CMat::from_fn(dims.antennas, dims.cells, |m, l| block.h_hat(j, l, k)[m]);
    Ok((HpdFactor::new(&a)?, h))
}

/// SINR from the conditional MSE: `MSE = [(I_L + H^H A^{-1} H)^{-1}]_{jj}`,
/// `gamma = 1 / MSE - 1`. Returns `(gamma, mse)`.
pub fn sinr_via_mse(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<(f64, f64)> {
    check_indices(&block.dims, j, k)?;
    check_power(rho_ul)?;
    let (a, h) = pilot_split(block, z_j, rho_ul, j, k)?;
    let l = block.dims.cells;
    let gram = h.adjoint() * a.solve_mat(&h);
    let inner = HpdFactor::new(&(linalg::identity(l) + gram))?;
    let mut e = CVec::zeros(l);
    e[j] = c(1.0);
    let mse = inner.inv_quad(&e);
    Ok((1.0 / mse - 1.0, mse))
}

/// Splits the SINR into the term that does not depend on the pilot-sharing
/// estimates and the loss caused by their correlation.
pub fn sinr_decomposition(block: &ChannelBlock, z_j: &CMat, rho_ul: f64, j: usize, k: usize) -> Result<SinrBreakdown> {
    check_indices(&block.dims, j, k)?;
    check_power(rho_ul)?;
    let (a, h) = pilot_split(block, z_j, rho_ul, j, k)?;
    let own = block.h_hat(j, j, k);
    let a_inv_own = a.solve_vec(own);
    let first_term = own.dotc(&a_inv_own).re;

    let others: Vec<usize> = (0..block.dims.cells).filter(|&l| l != j).collect();
    let loss_term = if others.is_empty() {
        0.0
    } else {
        let hj = h.select_columns(&others);
        let cross = hj.adjoint() * &a_inv_own;
        let inner = linalg::identity(others.len()) + hj.adjoint() * a.solve_mat(&hj);
        HpdFactor::new(&inner)?.inv_quad(&cross)
    };
    let gamma = first_term - loss_term;
    Ok(SinrBreakdown {
        gamma,
        mse: 1.0 / (1.0 + gamma),
        first_term,
        loss_term,
    })
}

/// Evaluates every UE of cell `j` from one factorization of
/// `C_j = sum_{l,i} h_hat h_hat^H + Z_j + I/rho_ul`.
///
/// With `G_k = H_k^H C_j^{-1} H_k` for the pilot-`k` estimates, the Woodbury
/// identity gives `H_k^H A_jk^{-1} H_k = (I - G_k)^{-1} - I` and
/// `gamma = s / (1 - s)` with `s = [G_k]_{jj}`.
///
/// `estimates` holds the estimates at BS `j` in `(l, i)` order.
pub fn evaluate_cell(estimates: &[CVec], dims: Dims, z_j: &CMat, rho_ul: f64, j: usize) -> Result<Vec<SinrBreakdown>> {
    check_power(rho_ul)?;
    let (cells, ues, m) = (dims.cells, dims.ues, dims.antennas);
    if estimates.len() != cells * ues || j >= cells {
        return Err(Error::InvalidInput("estimate set does not match dimensions".into()));
    }
    let h = CMat::from_fn(m, cells * ues, |row, col| estimates[col][row]);
    let mut full = &h * h.adjoint();
    full += z_j;
    for d in 0..m {
        full[(d, d)] += c(1.0 / rho_ul);
    }
    let factor = HpdFactor::new(&full)?;
    let x = factor.solve_mat(&h);

    let mut out = Vec::with_capacity(ues);
    for k in 0..ues {
        let mut g = CMat::zeros(cells, cells);
        for l in 0..cells {
            let hl = h.column(l * ues + k);
            for lp in 0..cells {
                g[(l, lp)] = hl.dotc(&x.column(lp * ues + k));
            }
        }
        let s = g[(j, j)].re;
        let gamma = s / (1.0 - s);

        let mut complement = linalg::identity(cells) - &g;
        linalg::symmetrize(&mut complement);
        let n = HpdFactor::new(&complement)?.inverse() - linalg::identity(cells);
        let first_term = n[(j, j)].re;
        let others: Vec<usize> = (0..cells).filter(|&l| l != j).collect();
        let loss_term = if others.is_empty() {
            0.0
        } else {
            let sub = linalg::identity(others.len()) + n.select_rows(&others).select_columns(&others);
            let b = CVec::from_iterator(others.len(), others.iter().map(|&l| n[(l, j)]));
            HpdFactor::new(&sub)?.inv_quad(&b)
        };
        out.push(SinrBreakdown {
            gamma,
            mse: 1.0 - s,
            first_term,
            loss_term,
        });
    }
    Ok(out)
}

/// Complex multiplications per coherence block for one formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultCount {
    pub estimation: u128,
    pub gamma: u128,
}

/// Multiplication counts for the quadratic-form route and the MSE route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCounts {
    pub quadratic: MultCount,
    pub mse: MultCount,
}

/// Analytic complexity of evaluating the SINR per coherence block, assuming
/// `Z_j`, `R_jli` and `Q_ji^{-1}` are precomputed.
pub fn complexity_counts(m: u64, k: u64, l: u64, tau_p: u64) -> Result<ComplexityCounts> {
    if m == 0 || k == 0 || l == 0 || tau_p == 0 {
        return Err(Error::InvalidInput("complexity counts need positive M, K, L, tau_p".into()));
    }
    let (m, k, l, tau_p) = (m as u128, k as u128, l as u128, tau_p as u128);
    let estimation = m * tau_p + l * m * m;
    let half_gram = (m * m + m) / 2;
    let cholesky = (m * m * m - m) / 3;
    Ok(ComplexityCounts {
        quadratic: MultCount {
            estimation,
            gamma: half_gram * (l * k + 1) + cholesky,
        },
        mse: MultCount {
            estimation,
            gamma: half_gram * (l * l * (k + 2) + l) + cholesky + (l * l * l - l) / 3,
        },
    })
}
