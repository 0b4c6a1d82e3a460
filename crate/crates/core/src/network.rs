//! Scenario generation: square wrap-around cell grid, pathloss with log-normal
//! shadowing, and exponentially correlated antenna arrays.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, c, CMat};
use crate::{Error, Result};

/// Pathloss at 1 km in dB.
pub const PATHLOSS_INTERCEPT_DB: f64 = -148.1;
/// Pathloss slope in dB per decade of distance.
pub const PATHLOSS_SLOPE_DB: f64 = 37.6;

/// How the second shadow-fading parameter is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShadowParam {
    /// Variance in dB².
    #[default]
    Variance,
    /// Standard deviation in dB.
    StdDev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of cells `L`; must be a perfect square for generated layouts.
    pub cells: usize,
    /// UEs per cell `K`; also the number of orthogonal pilots.
    pub ues_per_cell: usize,
    /// BS antennas `M`.
    pub antennas: usize,
    /// Samples per coherence block.
    pub tau_c: usize,
    /// Correlation factor between adjacent antennas.
    pub corr_factor: f64,
    /// Transmit power normalized by the noise power, in dB.
    pub rho_db: f64,
    /// Pilot power is `rho_tr_factor * K * rho`.
    pub rho_tr_factor: f64,
    pub cell_side_km: f64,
    pub shadow_param_db2: f64,
    pub shadow_interpretation: ShadowParam,
    /// Floor applied to every UE-BS distance.
    pub min_dist_m: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            ues_per_cell: 10,
            antennas: 100,
            tau_c: 200,
            corr_factor: 0.5,
            rho_db: 114.0,
            rho_tr_factor: 1.0,
            cell_side_km: 0.4,
            shadow_param_db2: 10.0,
            shadow_interpretation: ShadowParam::Variance,
            min_dist_m: 10.0,
            seed: 0,
        }
    }
}

/// On-disk form of [`NetworkConfig`]: flat `key = value` pairs (TOML syntax).
/// Missing keys fall back to the defaults; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "L")]
    cells: Option<usize>,
    #[serde(rename = "K")]
    ues_per_cell: Option<usize>,
    #[serde(rename = "M")]
    antennas: Option<usize>,
    tau_c: Option<usize>,
    r: Option<f64>,
    rho_db: Option<f64>,
    rho_tr_factor: Option<f64>,
    cell_side_km: Option<f64>,
    shadow_var_db2: Option<f64>,
    min_dist_m: Option<f64>,
    seed: Option<u64>,
}

impl NetworkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let d = Self::default();
        let cfg = Self {
            cells: file.cells.unwrap_or(d.cells),
            ues_per_cell: file.ues_per_cell.unwrap_or(d.ues_per_cell),
            antennas: file.antennas.unwrap_or(d.antennas),
            tau_c: file.tau_c.unwrap_or(d.tau_c),
            corr_factor: file.r.unwrap_or(d.corr_factor),
            rho_db: file.rho_db.unwrap_or(d.rho_db),
            rho_tr_factor: file.rho_tr_factor.unwrap_or(d.rho_tr_factor),
            cell_side_km: file.cell_side_km.unwrap_or(d.cell_side_km),
            shadow_param_db2: file.shadow_var_db2.unwrap_or(d.shadow_param_db2),
            shadow_interpretation: d.shadow_interpretation,
            min_dist_m: file.min_dist_m.unwrap_or(d.min_dist_m),
            seed: file.seed.unwrap_or(d.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Serializes back to the flat key-value form.
    pub fn to_config_string(&self) -> String {
        format!(
            "L = {}\nK = {}\nM = {}\ntau_c = {}\nr = {:?}\nrho_db = {:?}\nrho_tr_factor = {:?}\n\
             cell_side_km = {:?}\nshadow_var_db2 = {:?}\nmin_dist_m = {:?}\nseed = {}\n",
            self.cells,
            self.ues_per_cell,
            self.antennas,
            self.tau_c,
            self.corr_factor,
            self.rho_db,
            self.rho_tr_factor,
            self.cell_side_km,
            self.shadow_param_db2,
            self.min_dist_m,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.cells == 0 || self.ues_per_cell == 0 || self.antennas == 0 || self.tau_c == 0 {
            return fail("L, K, M and tau_c must be positive".into());
        }
        if self.ues_per_cell > self.tau_c {
            return fail(format!("K = {} exceeds tau_c = {}", self.ues_per_cell, self.tau_c));
        }
        if !(0.0..1.0).contains(&self.corr_factor) {
            return fail(format!("correlation factor r = {} outside [0, 1)", self.corr_factor));
        }
        if !self.rho_db.is_finite() {
            return fail("rho_db must be finite".into());
        }
        if !(self.rho_tr_factor > 0.0 && self.rho_tr_factor.is_finite()) {
            return fail("rho_tr_factor must be positive".into());
        }
        if !(self.cell_side_km > 0.0 && self.cell_side_km.is_finite()) {
            return fail("cell_side_km must be positive".into());
        }
        if !(self.shadow_param_db2 >= 0.0 && self.shadow_param_db2.is_finite()) {
            return fail("shadow_var_db2 must be nonnegative".into());
        }
        if !(self.min_dist_m > 0.0 && self.min_dist_m.is_finite()) {
            return fail("min_dist_m must be positive".into());
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        db_to_linear(self.rho_db)
    }

    pub fn rho_tr(&self) -> f64 {
        self.rho_tr_factor * self.ues_per_cell as f64 * self.rho()
    }

    /// Uplink data power `rho / M`.
    pub fn rho_ul(&self) -> f64 {
        self.rho() / self.antennas as f64
    }

    /// Pre-log factor `1 - K / tau_c`.
    pub fn prelog(&self) -> f64 {
        1.0 - self.ues_per_cell as f64 / self.tau_c as f64
    }

    pub fn shadow_std_db(&self) -> f64 {
        match self.shadow_interpretation {
            ShadowParam::Variance => self.shadow_param_db2.sqrt(),
            ShadowParam::StdDev => self.shadow_param_db2,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            cells: self.cells,
            ues: self.ues_per_cell,
            antennas: self.antennas,
        }
    }

    /// Side length of the grid for a square layout.
    pub fn grid_side(&self) -> Result<usize> {
        let g = (self.cells as f64).sqrt().round() as usize;
        if g * g != self.cells {
            return Err(Error::Config(format!("L = {} is not a perfect square", self.cells)));
        }
        Ok(g)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Problem dimensions and the flat indexing used by every per-link table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub cells: usize,
    pub ues: usize,
    pub antennas: usize,
}

impl Dims {
    /// Index of the link from UE `i` in cell `l` to BS `j`.
    #[inline]
    pub fn link(&self, j: usize, l: usize, i: usize) -> usize {
        debug_assert!(j < self.cells && l < self.cells && i < self.ues);
        (j * self.cells + l) * self.ues + i
    }

    /// Index of the pair (BS `j`, pilot `i`).
    #[inline]
    pub fn pilot(&self, j: usize, i: usize) -> usize {
        j * self.ues + i
    }

    /// Index of the cross term between cells `lp` and `l` on pilot `i` at BS `j`.
    #[inline]
    pub fn cross(&self, j: usize, lp: usize, l: usize, i: usize) -> usize {
        ((j * self.cells + lp) * self.cells + l) * self.ues + i
    }

    pub fn links(&self) -> usize {
        self.cells * self.cells * self.ues
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    pub dims: Dims,
    /// Side of the square torus in km.
    pub area_side_km: f64,
    pub bs_positions: Vec<[f64; 2]>,
    /// UE positions, cell-major: `ue_positions[l * K + i]`.
    pub ue_positions: Vec<[f64; 2]>,
    /// Large-scale fading in dB, indexed by [`Dims::link`].
    pub beta_db: Vec<f64>,
    /// Shadow fading realizations in dB, indexed by [`Dims::link`].
    pub shadow_db: Vec<f64>,
}

impl NetworkRealization {
    pub fn beta_db(&self, j: usize, l: usize, i: usize) -> f64 {
        self.beta_db[self.dims.link(j, l, i)]
    }

    pub fn distance_km(&self, j: usize, l: usize, i: usize) -> f64 {
        torus_distance(
            self.bs_positions[j],
            self.ue_positions[l * self.dims.ues + i],
            self.area_side_km,
        )
    }
}

/// Shortest distance between two points on a square torus of the given side.
pub fn torus_distance(p: [f64; 2], q: [f64; 2], side: f64) -> f64 {
    let wrap = |d: f64| {
        let d = d.abs().rem_euclid(side);
        d.min(side - d)
    };
    wrap(p[0] - q[0]).hypot(wrap(p[1] - q[1]))
}

/// Large-scale fading in dB at distance `d_km` with shadowing `shadow_db`.
pub fn large_scale_db(d_km: f64, shadow_db: f64) -> f64 {
    PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * d_km.log10() + shadow_db
}

/// Places BSs at the centres of a `g x g` grid of square cells on a torus and
/// drops `K` UEs uniformly in each cell.
pub fn generate_network<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<NetworkRealization> {
    config.validate()?;
    let g = config.grid_side()?;
    let dims = config.dims();
    let side = config.cell_side_km;
    let area = g as f64 * side;

    let bs_positions: Vec<[f64; 2]> = (0..config.cells)
        .map(|l| {
            let (col, row) = (l % g, l / g);
            [(col as f64 + 0.5) * side, (row as f64 + 0.5) * side]
        })
        .collect();

    let mut ue_positions = Vec::with_capacity(config.cells * config.ues_per_cell);
    for l in 0..config.cells {
        let (col, row) = ((l % g) as f64, (l / g) as f64);
        for _ in 0..config.ues_per_cell {
            let x = (col + rng.random::<f64>()) * side;
            let y = (row + rng.random::<f64>()) * side;
            ue_positions.push([x, y]);
        }
    }

    let shadow = Normal::new(0.0, config.shadow_std_db())
        .map_err(|e| Error::Config(format!("shadow fading: {e}")))?;
    let min_dist_km = config.min_dist_m / 1000.0;
    let mut beta_db = vec![0.0; dims.links()];
    let mut shadow_db = vec![0.0; dims.links()];
    for j in 0..config.cells {
        for l in 0..config.cells {
            for i in 0..config.ues_per_cell {
                let idx = dims.link(j, l, i);
                let d = torus_distance(bs_positions[j], ue_positions[l * dims.ues + i], area).max(min_dist_km);
                let f = shadow.sample(rng);
                shadow_db[idx] = f;
                beta_db[idx] = large_scale_db(d, f);
            }
        }
    }

    Ok(NetworkRealization {
        dims,
        area_side_km: area,
        bs_positions,
        ue_positions,
        beta_db,
        shadow_db,
    })
}

/// Exponential correlation matrix with entries `r^|m-n|`.
pub fn exponential_correlation(m: usize, r: f64) -> Result<CMat> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidInput(format!("correlation factor {r} outside [0, 1)")));
    }
    Ok(CMat::from_fn(m, m, |a, b| c(r.powi(a.abs_diff(b) as i32))))
}

/// Spatial correlation matrices `R_jli` for all links, in linear power units.
#[derive(Clone, Debug)]
pub struct CorrelationSet {
    pub dims: Dims,
    pub r: Vec<CMat>,
}

impl CorrelationSet {
    pub fn new(dims: Dims, r: Vec<CMat>) -> Result<Self> {
        if r.len() != dims.links() {
            return Err(Error::InvalidInput(format!(
                "expected {} correlation matrices, got {}",
                dims.links(),
                r.len()
            )));
        }
        if let Some(bad) = r.iter().position(|m| m.nrows() != dims.antennas || m.ncols() != dims.antennas) {
            return Err(Error::InvalidInput(format!("correlation matrix {bad} has wrong shape")));
        }
        Ok(Self { dims, r })
    }

    /// Builds a set from a closure over `(j, l, i)`.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> CMat) -> Result<Self> {
        let mut r = Vec::with_capacity(dims.links());
        for j in 0..dims.cells {
            for l in 0..dims.cells {
                for i in 0..dims.ues {
                    r.push(f(j, l, i));
                }
            }
        }
        Self::new(dims, r)
    }

    #[inline]
    pub fn get(&self, j: usize, l: usize, i: usize) -> &CMat {
        &self.r[self.dims.link(j, l, i)]
    }

    /// Checks Hermitian symmetry and positive semidefiniteness of every matrix.
    pub fn check(&self) -> Result<()> {
        for (idx, m) in self.r.iter().enumerate() {
            if !linalg::is_hermitian(m, 1e-12) {
                return Err(Error::InvalidInput(format!("correlation matrix {idx} is not Hermitian")));
            }
            let vals = linalg::hermitian_eigenvalues(m);
            let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if vals.min() < -1e-10 * scale {
                return Err(Error::Indefinite {
                    what: format!("correlation matrix {idx}"),
                    min_eigenvalue: vals.min(),
                });
            }
        }
        Ok(())
    }
}

/// `R_jli = beta_li^j * T(r)` with one exponential correlation matrix shared by
/// every link.
pub fn assemble_correlation_set(net: &NetworkRealization, config: &NetworkConfig) -> Result<CorrelationSet> {
    if net.dims != config.dims() {
        return Err(Error::InvalidInput("realization does not match config dimensions".into()));
    }
    let base = exponential_correlation(config.antennas, config.corr_factor)?;
    let dims = net.dims;
    CorrelationSet::from_fn(dims, |j, l, i| &base * c(db_to_linear(net.beta_db(j, l, i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_geometry_for_four_cells() {
        let cfg = NetworkConfig {
            ues_per_cell: 2,
            antennas: 4,
            ..NetworkConfig::default()
        };
        let net = generate_network(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_relative_eq!(net.area_side_km, 0.8);
        let expected = [[0.2, 0.2], [0.6, 0.2], [0.2, 0.6], [0.6, 0.6]];
        for (got, want) in net.bs_positions.iter().zip(expected) {
            assert_relative_eq!(got[0], want[0], epsilon = 1e-15);
            assert_relative_eq!(got[1], want[1], epsilon = 1e-15);
        }
        for l in 0..4 {
            for i in 0..2 {
                let p = net.ue_positions[l * 2 + i];
                let b = net.bs_positions[l];
                assert!((p[0] - b[0]).abs() <= 0.2 && (p[1] - b[1]).abs() <= 0.2);
            }
        }
        assert!(net.beta_db.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn non_square_cell_count_rejected() {
        let cfg = NetworkConfig {
            cells: 3,
            ..NetworkConfig::default()
        };
        let err = generate_network(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn pathloss_reference_values() {
        assert_relative_eq!(large_scale_db(1.0, 0.0), -148.1, epsilon = 1e-12);
        assert_relative_eq!(large_scale_db(0.1, 0.0), -110.5, epsilon = 1e-12);
    }

    #[test]
    fn exponential_correlation_examples() {
        assert_eq!(exponential_correlation(3, 0.0).unwrap(), linalg::identity(3));
        let t = exponential_correlation(3, 0.5).unwrap();
        let want = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(t[(a, b)], c(want[a][b]));
            }
        }
        // Independent oracle: Jacobi eigenvalue sweep on the real Toeplitz matrix.
        let t8 = exponential_correlation(8, 0.5).unwrap();
        let real: Vec<Vec<f64>> = (0..8).map(|a| (0..8).map(|b| t8[(a, b)].re).collect()).collect();
        let oracle_min = jacobi_eigenvalues(real).into_iter().fold(f64::INFINITY, f64::min);
        assert!((oracle_min - 0.344_062_653_733_643).abs() < 1e-12, "oracle {oracle_min}");
        assert!((linalg::lambda_min(&t8) - oracle_min).abs() < 1e-12);
    }

    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let (cs, sn) = (1.0 / (t * t + 1.0).sqrt(), t / (t * t + 1.0).sqrt());
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = cs * akp - sn * akq;
                        a[k][q] = sn * akp + cs * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = cs * apk - sn * aqk;
                        a[q][k] = sn * apk + cs * aqk;
                    }
                }
            }
            if off < 1e-30 {
                break;
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn correlation_factor_one_rejected() {
        assert!(exponential_correlation(4, 1.0).is_err());
    }

    #[test]
    fn assembled_matrices_scale_with_beta() {
        let cfg = NetworkConfig {
            cells: 1,
            ues_per_cell: 1,
            antennas: 2,
            corr_factor: 0.5,
            ..NetworkConfig::default()
        };
        let mut net = generate_network(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        net.beta_db[0] = -110.5;
        let set = assemble_correlation_set(&net, &cfg).unwrap();
        let scale = 10f64.powf(-11.05);
        let want = [[1.0, 0.5], [0.5, 1.0]];
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(set.get(0, 0, 0)[(a, b)].re, scale * want[a][b], max_relative = 1e-12);
            }
        }
        assert_relative_eq!(set.get(0, 0, 0).trace().re, 2.0 * scale, max_relative = 1e-12);
        set.check().unwrap();

        net.beta_db[0] = 0.0;
        let id = assemble_correlation_set(&net, &NetworkConfig { corr_factor: 0.0, ..cfg }).unwrap();
        assert_eq!(id.get(0, 0, 0), &linalg::identity(2));
    }

    #[test]
    fn config_file_parsing() {
        let cfg = NetworkConfig::from_toml_str("L = 4\nK = 8\nM = 32\ntau_c = 200\nr = 0.5\nseed = 7\n").unwrap();
        assert_eq!((cfg.cells, cfg.ues_per_cell, cfg.antennas, cfg.seed), (4, 8, 32, 7));
        assert_relative_eq!(cfg.rho_tr(), 8.0 * cfg.rho());
        let back = NetworkConfig::from_toml_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(NetworkConfig::from_toml_str("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(NetworkConfig::from_toml_str("K = 300"), Err(Error::Config(_))));
        assert!(matches!(NetworkConfig::from_toml_str("r = 1.0"), Err(Error::Config(_))));
    }

    #[test]
    fn shadow_interpretation() {
        let var = NetworkConfig::default();
        assert_relative_eq!(var.shadow_std_db(), 10f64.sqrt());
        let std = NetworkConfig {
            shadow_interpretation: ShadowParam::StdDev,
            ..var
        };
        assert_relative_eq!(std.shadow_std_db(), 10.0);
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = NetworkConfig {
            ues_per_cell: 5,
            antennas: 4,
            ..NetworkConfig::default()
        };
        let a = generate_network(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_network(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let bits = |n: &NetworkRealization| n.beta_db.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn torus_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let side = 0.8;
        for _ in 0..1000 {
            let mut p = || [rand::Rng::random::<f64>(&mut rng) * side, rand::Rng::random::<f64>(&mut rng) * side];
            let (a, b, q) = (p(), p(), p());
            let ab = torus_distance(a, b, side);
            assert_eq!(ab, torus_distance(b, a, side));
            assert!(torus_distance(a, q, side) <= ab + torus_distance(b, q, side) + 1e-12);
            assert!(ab <= side / 2f64.sqrt() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn beta_nonincreasing_in_distance(d1 in 1e-3f64..5.0, d2 in 1e-3f64..5.0, f in -10.0f64..10.0) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(large_scale_db(far, f) <= large_scale_db(near, f));
        }

        #[test]
        fn exponential_correlation_is_valid(m in 1usize..=64, step in 0usize..10) {
            let r = step as f64 / 10.0;
            let t = exponential_correlation(m, r).unwrap();
            prop_assert!(linalg::hermitian_defect(&t) == 0.0);
            for a in 0..m {
                prop_assert_eq!(t[(a, a)], c(1.0));
                for b in 1..m {
                    if a >= 1 {
                        prop_assert_eq!(t[(a, b)], t[(a - 1, b - 1)]);
                    }
                }
            }
            prop_assert!(linalg::lambda_min(&t) > 0.0);
        }
    }
}
