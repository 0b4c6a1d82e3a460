//! MMSE channel estimation under pilot contamination.
//!
//! UE `i` of every cell sends pilot `i`, so BS `j` observes
//! `y_ji = sum_l' h_jl'i + n_ji / sqrt(rho_tr)` and estimates each `h_jli` as
//! `R_jli Q_ji^{-1} y_ji`. The estimates of the `L` pilot-sharing UEs are
//! correlated with cross-covariance `Phi_jl'li = R_jl'i Q_ji^{-1} R_jli`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use num_complex::Complex64;

use crate::linalg::{self, c, CMat, CVec, HpdFactor};
use crate::network::{CorrelationSet, Dims};
use crate::{Error, Result};

/// `Q_ji = sum_l' R_jl'i + I / rho_tr`.
pub fn compute_q(corr: &CorrelationSet, j: usize, i: usize, rho_tr: f64) -> Result<CMat> {
    if !(rho_tr > 0.0) {
        return Err(Error::InvalidInput(format!("pilot power must be positive, got {rho_tr}")));
    }
    let m = corr.dims.antennas;
    let mut q = linalg::identity(m) * c(1.0 / rho_tr);
    for lp in 0..corr.dims.cells {
        q += corr.get(j, lp, i);
    }
    linalg::symmetrize(&mut q);
    Ok(q)
}

/// `Phi_jl'li = R_jl'i Q_ji^{-1} R_jli`.
pub fn compute_phi(corr: &CorrelationSet, q: &HpdFactor, j: usize, lp: usize, l: usize, i: usize) -> CMat {
    let w = q.solve_mat(corr.get(j, l, i));
    let mut phi = corr.get(j, lp, i) * w;
    if lp == l {
        linalg::symmetrize(&mut phi);
    }
    phi
}

/// `Z_j = sum_{l,i} (R_jli - Phi_jlli)`: total estimation-error covariance at BS `j`.
pub fn compute_z<'a>(corr: &CorrelationSet, phi_self: impl Fn(usize, usize) -> &'a CMat, j: usize) -> CMat {
    let dims = corr.dims;
    let mut z = CMat::zeros(dims.antennas, dims.antennas);
    for l in 0..dims.cells {
        for i in 0..dims.ues {
            z += corr.get(j, l, i);
            z -= phi_self(l, i);
        }
    }
    linalg::symmetrize(&mut z);
    z
}

/// Estimator statistics for every BS. Immutable once built.
#[derive(Clone, Debug)]
pub struct EstimationStatistics {
    pub dims: Dims,
    pub rho_tr: f64,
    /// `Q_ji`, indexed by [`Dims::pilot`].
    pub q: Vec<CMat>,
    q_factor: Vec<HpdFactor>,
    /// `Phi_jl'li`, indexed by [`Dims::cross`].
    pub phi: Vec<CMat>,
    /// `Z_j`.
    pub z: Vec<CMat>,
}

impl EstimationStatistics {
    pub fn new(corr: &CorrelationSet, rho_tr: f64) -> Result<Self> {
        let dims = corr.dims;
        let mut q = Vec::with_capacity(dims.cells * dims.ues);
        let mut q_factor = Vec::with_capacity(dims.cells * dims.ues);
        for j in 0..dims.cells {
            for i in 0..dims.ues {
                let qji = compute_q(corr, j, i, rho_tr)?;
                q_factor.push(HpdFactor::new(&qji)?);
                q.push(qji);
            }
        }

        let empty = CMat::zeros(0, 0);
        let mut phi = vec![empty; dims.cells * dims.links()];
        for j in 0..dims.cells {
            for i in 0..dims.ues {
                let factor = &q_factor[dims.pilot(j, i)];
                for l in 0..dims.cells {
                    let w = factor.solve_mat(corr.get(j, l, i));
                    for lp in 0..=l {
                        let mut p = corr.get(j, lp, i) * &w;
                        if lp == l {
                            linalg::symmetrize(&mut p);
                        } else {
                            phi[dims.cross(j, l, lp, i)] = p.adjoint();
                        }
                        phi[dims.cross(j, lp, l, i)] = p;
                    }
                }
            }
        }

        let z = (0..dims.cells)
            .map(|j| compute_z(corr, |l, i| &phi[dims.cross(j, l, l, i)], j))
            .collect();

        Ok(Self {
            dims,
            rho_tr,
            q,
            q_factor,
            phi,
            z,
        })
    }

    #[inline]
    pub fn phi(&self, j: usize, lp: usize, l: usize, i: usize) -> &CMat {
        &self.phi[self.dims.cross(j, lp, l, i)]
    }

    /// Covariance `Phi_jlli` of the estimate `h_hat_jli`.
    #[inline]
    pub fn phi_self(&self, j: usize, l: usize, i: usize) -> &CMat {
        self.phi(j, l, l, i)
    }

    #[inline]
    pub fn q_factor(&self, j: usize, i: usize) -> &HpdFactor {
        &self.q_factor[self.dims.pilot(j, i)]
    }

    #[inline]
    pub fn z(&self, j: usize) -> &CMat {
        &self.z[j]
    }

    /// Writes the statistics in the documented little-endian layout:
    ///
    /// ```text
    /// magic   8 bytes  "MMIMOEST"
    /// version u32      1
    /// L K M   u32 x 3
    /// rho_tr  f64
    /// Q       L*K matrices, (j, i) order
    /// Phi     L*L*L*K matrices, (j, l', l, i) order
    /// Z       L matrices
    /// ```
    ///
    /// Each matrix is M*M entries in row-major order, each entry written as
    /// real part then imaginary part (f64).
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        for n in [self.dims.cells, self.dims.ues, self.dims.antennas] {
            let n = u32::try_from(n).map_err(|_| Error::InvalidInput("dimension exceeds u32".into()))?;
            w.write_all(&n.to_le_bytes())?;
        }
        w.write_all(&self.rho_tr.to_le_bytes())?;
        for m in self.q.iter().chain(&self.phi).chain(&self.z) {
            write_matrix(&mut w, m)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Serialization("not an estimation statistics dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DUMP_VERSION {
            return Err(Error::Serialization(format!("unsupported dump version {version}")));
        }
        let dims = Dims {
            cells: read_u32(&mut r)? as usize,
            ues: read_u32(&mut r)? as usize,
            antennas: read_u32(&mut r)? as usize,
        };
        let rho_tr = read_f64(&mut r)?;
        let m = dims.antennas;
        let read_n = |r: &mut dyn Read, n: usize| -> Result<Vec<CMat>> { (0..n).map(|_| read_matrix(r, m)).collect() };
        let q = read_n(&mut r, dims.cells * dims.ues)?;
        let phi = read_n(&mut r, dims.cells * dims.links())?;
        let z = read_n(&mut r, dims.cells)?;
        let q_factor = q.iter().map(HpdFactor::new).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims,
            rho_tr,
            q,
            q_factor,
            phi,
            z,
        })
    }
}

const DUMP_MAGIC: &[u8; 8] = b"MMIMOEST";
const DUMP_VERSION: u32 = 1;

fn write_matrix(w: &mut impl Write, m: &CMat) -> Result<()> {
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            let z = m[(row, col)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut (impl Read + ?Sized)) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_matrix(r: &mut dyn Read, m: usize) -> Result<CMat> {
    let mut out = CMat::zeros(m, m);
    for row in 0..m {
        for col in 0..m {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            out[(row, col)] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// One coherence block: true channels, their MMSE estimates and the errors,
/// all indexed by [`Dims::link`].
#[derive(Clone, Debug)]
pub struct ChannelBlock {
    pub dims: Dims,
    pub h: Vec<CVec>,
    pub h_hat: Vec<CVec>,
    pub h_tilde: Vec<CVec>,
}

impl ChannelBlock {
    #[inline]
    pub fn h_hat(&self, j: usize, l: usize, i: usize) -> &CVec {
        &self.h_hat[self.dims.link(j, l, i)]
    }
}

/// Draws a vector with i.i.d. `CN(0, 1)` entries (real and imaginary parts
/// each with variance 1/2).
pub fn standard_complex_normal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// Precomputed square roots and estimation filters for repeated sampling.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    dims: Dims,
    rho_tr: f64,
    sqrt_r: Vec<CMat>,
    /// `R_jli Q_ji^{-1}`.
    filter: Vec<CMat>,
}

impl ChannelSampler {
    pub fn new(corr: &CorrelationSet, stats: &EstimationStatistics) -> Result<Self> {
        if corr.dims != stats.dims {
            return Err(Error::InvalidInput("statistics do not match correlation set".into()));
        }
        let dims = corr.dims;
        let sqrt_r = corr.r.iter().map(|r| linalg::psd_sqrt(r, 1e-10)).collect::<Result<Vec<_>>>()?;
        let mut filter = Vec::with_capacity(dims.links());
        for j in 0..dims.cells {
            for l in 0..dims.cells {
                for i in 0..dims.ues {
                    // (Q^{-1} R)^H = R Q^{-1} for Hermitian R and Q.
                    filter.push(stats.q_factor(j, i).solve_mat(corr.get(j, l, i)).adjoint());
                }
            }
        }
        Ok(Self {
            dims,
            rho_tr: stats.rho_tr,
            sqrt_r,
            filter,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Draws all channels and estimates of one coherence block.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelBlock {
        let Dims { cells, ues, antennas } = self.dims;
        let zero = CVec::zeros(antennas);
        let mut h = vec![zero.clone(); self.dims.links()];
        let mut h_hat = vec![zero.clone(); self.dims.links()];
        let noise_scale = c(1.0 / self.rho_tr.sqrt());
        for j in 0..cells {
            for i in 0..ues {
                let mut y = zero.clone();
                for l in 0..cells {
                    let idx = self.dims.link(j, l, i);
                    let w = standard_complex_normal(antennas, rng);
                    h[idx] = &self.sqrt_r[idx] * w;
                    y += &h[idx];
                }
                y += standard_complex_normal(antennas, rng) * noise_scale;
                for l in 0..cells {
                    let idx = self.dims.link(j, l, i);
                    h_hat[idx] = &self.filter[idx] * &y;
                }
            }
        }
        let h_tilde = h.iter().zip(&h_hat).map(|(a, b)| a - b).collect();
        ChannelBlock {
            dims: self.dims,
            h,
            h_hat,
            h_tilde,
        }
    }

    /// Draws only the estimates seen at BS `j`, in `(l, i)` order.
    /// Consumes the same random stream as [`ChannelSampler::sample`] for that BS
    /// when called for `j = 0, 1, ...` in order.
    pub fn sample_estimates_at<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Vec<CVec> {
        let Dims { cells, ues, antennas } = self.dims;
        let noise_scale = c(1.0 / self.rho_tr.sqrt());
        let mut out = vec![CVec::zeros(antennas); cells * ues];
        for i in 0..ues {
            let mut y = CVec::zeros(antennas);
            for l in 0..cells {
                let w = standard_complex_normal(antennas, rng);
                y += &self.sqrt_r[self.dims.link(j, l, i)] * w;
            }
            y += standard_complex_normal(antennas, rng) * noise_scale;
            for l in 0..cells {
                out[l * ues + i] = &self.filter[self.dims.link(j, l, i)] * &y;
            }
        }
        out
    }
}

/// Convenience wrapper that builds a [`ChannelSampler`] and draws one block.
pub fn sample_block<R: Rng + ?Sized>(
    corr: &CorrelationSet,
    stats: &EstimationStatistics,
    rng: &mut R,
) -> Result<ChannelBlock> {
    Ok(ChannelSampler::new(corr, stats)?.sample(rng))
}
