//! Experiment orchestration: seeded Monte Carlo and deterministic-equivalent
//! runs over one or more network drops, and the two figure sweeps.
//!
//! Randomness is keyed by the config seed. Every drop and every coherence block
//! gets its own ChaCha stream, and per-block results are reduced in block
//! order, so the output does not depend on the number of worker threads.

mod output;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combining::{self, SinrBreakdown};
use crate::detequiv::{self, FixedPointOptions};
use crate::estimation::{ChannelSampler, EstimationStatistics};
use crate::network::{self, CorrelationSet, NetworkConfig, NetworkRealization};
use crate::{Error, Result};

pub use output::{emit, write_output, CsvTable, Format};

const NETWORK_STREAM: u64 = 0;
const BLOCK_STREAM: u64 = 1;

/// ChaCha stream for a given purpose, drop and block.
pub fn stream_rng(seed: u64, purpose: u64, drop: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 62) | ((drop as u64) << 32) | block as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub blocks: usize,
    pub drops: usize,
    /// Worker threads; `0` lets rayon decide.
    pub threads: usize,
    /// Keep every per-block SINR in the result.
    pub retain_samples: bool,
    pub fixed_point: FixedPointOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            blocks: 500,
            drops: 1,
            threads: 0,
            retain_samples: false,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

/// Which engines a run evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Engines {
    pub monte_carlo: bool,
    pub det_equiv: bool,
}

impl Engines {
    pub const MONTE_CARLO: Self = Self {
        monte_carlo: true,
        det_equiv: false,
    };
    pub const DET_EQUIV: Self = Self {
        monte_carlo: false,
        det_equiv: true,
    };
    pub const BOTH: Self = Self {
        monte_carlo: true,
        det_equiv: true,
    };
}

/// Monte Carlo statistics of one UE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloUe {
    pub mean_sinr: f64,
    pub sinr_std_err: f64,
    /// `(1 - K/tau_c) * mean(log2(1 + gamma))`.
    pub se: f64,
    /// Same with the loss term dropped from the SINR.
    pub se_first_term_only: f64,
    pub mean_first_term: f64,
    pub mean_loss_term: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sinr_samples: Vec<f64>,
}

/// Deterministic-equivalent values of one UE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetEquivUe {
    pub gamma_bar: f64,
    pub se: f64,
    pub first_term: f64,
    pub loss_term: f64,
    pub mu_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeResult {
    pub drop: usize,
    pub cell: usize,
    pub ue: usize,
    pub mc: Option<MonteCarloUe>,
    pub de: Option<DetEquivUe>,
}

/// Aggregates of one drop. Sum SE is per cell, averaged over cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropSummary {
    pub drop: usize,
    pub sum_se_mc: Option<f64>,
    pub sum_se_mc_first_term_only: Option<f64>,
    pub sum_se_detequiv: Option<f64>,
    pub fixed_point_iterations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: NetworkConfig,
    pub blocks: usize,
    pub drops: usize,
    pub ues: Vec<UeResult>,
    pub per_drop: Vec<DropSummary>,
    pub sum_se_mc: Option<f64>,
    pub sum_se_mc_first_term_only: Option<f64>,
    pub sum_se_detequiv: Option<f64>,
    /// Mean over UEs, blocks and drops of the two SINR terms, in dB.
    pub term1_db_mc: Option<f64>,
    pub term2_db_mc: Option<f64>,
    pub term1_db_detequiv: Option<f64>,
    pub term2_db_detequiv: Option<f64>,
    /// Largest relative standard error of a per-UE mean SINR.
    pub max_rel_std_err: Option<f64>,
    /// Not serialized, so that output files stay reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn mean_sinr_mc(&self) -> Option<f64> {
        mean(self.ues.iter().map(|u| u.mc.as_ref().map(|m| m.mean_sinr)))
    }

    pub fn mean_gamma_bar(&self) -> Option<f64> {
        mean(self.ues.iter().map(|u| u.de.as_ref().map(|d| d.gamma_bar)))
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Everything derived from one network drop that the engines share.
pub struct DropSetup {
    pub realization: NetworkRealization,
    pub correlation: CorrelationSet,
    pub statistics: EstimationStatistics,
}

pub fn setup_drop(config: &NetworkConfig, drop: usize) -> Result<DropSetup> {
    let mut rng = stream_rng(config.seed, NETWORK_STREAM, drop, 0);
    let realization = network::generate_network(config, &mut rng)?;
    let correlation = network::assemble_correlation_set(&realization, config)?;
    let statistics = EstimationStatistics::new(&correlation, config.rho_tr())?;
    Ok(DropSetup {
        realization,
        correlation,
        statistics,
    })
}

/// Monte Carlo over `blocks` coherence blocks of one drop. Returns one entry
/// per `(cell, ue)` in cell-major order.
pub fn monte_carlo_drop(
    config: &NetworkConfig,
    corr: &CorrelationSet,
    stats: &EstimationStatistics,
    drop: usize,
    opts: &RunOptions,
) -> Result<Vec<MonteCarloUe>> {
    if opts.blocks == 0 {
        return Err(Error::Config("at least one coherence block is required".into()));
    }
    let dims = stats.dims;
    let sampler = ChannelSampler::new(corr, stats)?;
    let rho_ul = config.rho_ul();
    let per_block: Vec<Vec<SinrBreakdown>> = (0..opts.blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(config.seed, BLOCK_STREAM, drop, block);
            let mut out = Vec::with_capacity(dims.cells * dims.ues);
            for j in 0..dims.cells {
                let estimates = sampler.sample_estimates_at(j, &mut rng);
                let terms = combining::evaluate_cell(&estimates, dims, stats.z(j), rho_ul, j)?;
                for (k, t) in terms.iter().enumerate() {
                    if !(t.gamma.is_finite() && t.gamma >= 0.0) {
                        return Err(Error::NonFiniteSinr {
                            drop,
                            block,
                            cell: j,
                            ue: k,
                        });
                    }
                }
                out.extend(terms);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let prelog = config.prelog();
    let n = opts.blocks as f64;
    Ok((0..dims.cells * dims.ues)
        .map(|u| {
            let (mut s, mut s2, mut log_sum, mut log_first, mut first, mut loss) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for b in &per_block {
                let t = &b[u];
                s += t.gamma;
                s2 += t.gamma * t.gamma;
                log_sum += (1.0 + t.gamma).log2();
                log_first += (1.0 + t.first_term).log2();
                first += t.first_term;
                loss += t.loss_term;
            }
            let mean_sinr = s / n;
            let var = if opts.blocks > 1 {
                ((s2 - n * mean_sinr * mean_sinr) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            MonteCarloUe {
                mean_sinr,
                sinr_std_err: (var / n).sqrt(),
                se: prelog * (log_sum / n),
                se_first_term_only: prelog * (log_first / n),
                mean_first_term: first / n,
                mean_loss_term: loss / n,
                sinr_samples: if opts.retain_samples {
                    per_block.iter().map(|b| b[u].gamma).collect()
                } else {
                    Vec::new()
                },
            }
        })
        .collect())
}

/// Deterministic equivalent for every UE of one drop, cell-major. Also returns
/// the fixed-point iteration count per cell.
pub fn det_equiv_drop(config: &NetworkConfig, stats: &EstimationStatistics, opts: &RunOptions) -> Result<(Vec<DetEquivUe>, Vec<usize>)> {
    let rho = config.rho();
    let prelog = config.prelog();
    let cells: Vec<detequiv::CellDetEquiv> = (0..stats.dims.cells)
        .into_par_iter()
        .map(|j| detequiv::det_equiv_cell(stats, rho, j, opts.fixed_point))
        .collect::<Result<_>>()?;
    let iterations = cells.iter().map(|c| c.solution.iterations).collect();
    let ues = cells
        .iter()
        .enumerate()
        .flat_map(|(j, cell)| {
            cell.gamma.iter().enumerate().map(move |(k, g)| DetEquivUe {
                gamma_bar: g.gamma_bar,
                se: prelog * (1.0 + g.gamma_bar).log2(),
                first_term: g.first_term_bar,
                loss_term: g.loss_bar,
                mu_star: cell.solution.mu_star[j * stats.dims.ues + k],
            })
        })
        .collect();
    Ok((ues, iterations))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the selected engines over `opts.drops` independent drops.
pub fn run_experiment(config: &NetworkConfig, opts: &RunOptions, engines: Engines) -> Result<ExperimentResult> {
    config.validate()?;
    if opts.drops == 0 {
        return Err(Error::Config("at least one drop is required".into()));
    }
    if engines.monte_carlo && opts.blocks == 0 {
        return Err(Error::Config("at least one coherence block is required".into()));
    }
    let started = Instant::now();
    let dims = config.dims();
    let (ues, per_drop) = with_pool(opts.threads, || -> Result<_> {
        let mut ues = Vec::new();
        let mut per_drop = Vec::new();
        for drop in 0..opts.drops {
            let setup = setup_drop(config, drop)?;
            let mc = if engines.monte_carlo {
                Some(monte_carlo_drop(config, &setup.correlation, &setup.statistics, drop, opts)?)
            } else {
                None
            };
            let (de, iterations) = if engines.det_equiv {
                let (d, it) = det_equiv_drop(config, &setup.statistics, opts)?;
                (Some(d), it)
            } else {
                (None, Vec::new())
            };
            let cells = dims.cells as f64;
            per_drop.push(DropSummary {
                drop,
                sum_se_mc: mc.as_ref().map(|v| v.iter().map(|u| u.se).sum::<f64>() / cells),
                sum_se_mc_first_term_only: mc.as_ref().map(|v| v.iter().map(|u| u.se_first_term_only).sum::<f64>() / cells),
                sum_se_detequiv: de.as_ref().map(|v| v.iter().map(|u| u.se).sum::<f64>() / cells),
                fixed_point_iterations: iterations,
            });
            let mut mc_iter = mc.map(|v| v.into_iter());
            let mut de_iter = de.map(|v| v.into_iter());
            for cell in 0..dims.cells {
                for ue in 0..dims.ues {
                    ues.push(UeResult {
                        drop,
                        cell,
                        ue,
                        mc: mc_iter.as_mut().and_then(|it| it.next()),
                        de: de_iter.as_mut().and_then(|it| it.next()),
                    });
                }
            }
        }
        Ok((ues, per_drop))
    })??;

    let drop_mean = |f: fn(&DropSummary) -> Option<f64>| mean(per_drop.iter().map(f));
    let mc_mean = |f: fn(&MonteCarloUe) -> f64| mean(ues.iter().map(|u| u.mc.as_ref().map(f)));
    let de_mean = |f: fn(&DetEquivUe) -> f64| mean(ues.iter().map(|u| u.de.as_ref().map(f)));
    let max_rel_std_err = engines.monte_carlo.then(|| {
        ues.iter()
            .filter_map(|u| u.mc.as_ref())
            .map(|m| if m.mean_sinr > 0.0 { m.sinr_std_err / m.mean_sinr } else { 0.0 })
            .fold(0.0, f64::max)
    });

    Ok(ExperimentResult {
        config: config.clone(),
        blocks: if engines.monte_carlo { opts.blocks } else { 0 },
        drops: opts.drops,
        sum_se_mc: drop_mean(|d| d.sum_se_mc),
        sum_se_mc_first_term_only: drop_mean(|d| d.sum_se_mc_first_term_only),
        sum_se_detequiv: drop_mean(|d| d.sum_se_detequiv),
        term1_db_mc: mc_mean(|m| m.mean_first_term).map(to_db),
        term2_db_mc: mc_mean(|m| m.mean_loss_term).map(to_db),
        term1_db_detequiv: de_mean(|d| d.first_term).map(to_db),
        term2_db_detequiv: de_mean(|d| d.loss_term).map(to_db),
        max_rel_std_err,
        ues,
        per_drop,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo spectral efficiency with M-MMSE combining.
pub fn run_monte_carlo(config: &NetworkConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    run_experiment(config, opts, Engines::MONTE_CARLO)
}

/// Spectral efficiency from the deterministic equivalent (no channel sampling).
pub fn run_detequiv(config: &NetworkConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    run_experiment(config, opts, Engines::DET_EQUIV)
}

/// Sweep over `K` at fixed antenna-UE ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub ratios: Vec<usize>,
    pub k_values: Vec<usize>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            ratios: vec![2, 4],
            k_values: vec![4, 8, 12, 16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub ratio: usize,
    pub k: usize,
    pub m: usize,
    pub sum_se_mc: f64,
    pub sum_se_detequiv: f64,
    pub sum_se_mc_first_term_only: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub ratio: usize,
    pub k: usize,
    pub term1_db_mc: f64,
    pub term2_db_mc: f64,
    pub term1_db_detequiv: f64,
    pub term2_db_detequiv: f64,
}

fn sweep_runs(base: &NetworkConfig, sweep: &Sweep, opts: &RunOptions) -> Result<Vec<(usize, usize, ExperimentResult)>> {
    let mut out = Vec::new();
    for &ratio in &sweep.ratios {
        for &k in &sweep.k_values {
            let config = NetworkConfig {
                ues_per_cell: k,
                antennas: ratio * k,
                ..base.clone()
            };
            out.push((ratio, k, run_experiment(&config, opts, Engines::BOTH)?));
        }
    }
    Ok(out)
}

fn missing(what: &str) -> Error {
    Error::InvalidInput(format!("run produced no {what}"))
}

/// Average sum SE per cell versus `K` (Monte Carlo, deterministic equivalent,
/// and Monte Carlo with the pilot-contamination loss term dropped).
pub fn run_fig1(base: &NetworkConfig, sweep: &Sweep, opts: &RunOptions) -> Result<Vec<Fig1Row>> {
    sweep_runs(base, sweep, opts)?
        .into_iter()
        .map(|(ratio, k, r)| {
            Ok(Fig1Row {
                ratio,
                k,
                m: ratio * k,
                sum_se_mc: r.sum_se_mc.ok_or_else(|| missing("MC SE"))?,
                sum_se_detequiv: r.sum_se_detequiv.ok_or_else(|| missing("det-equiv SE"))?,
                sum_se_mc_first_term_only: r.sum_se_mc_first_term_only.ok_or_else(|| missing("MC SE"))?,
            })
        })
        .collect()
}

/// Average strength of the two SINR terms versus `K`, in dB.
pub fn run_fig2(base: &NetworkConfig, sweep: &Sweep, opts: &RunOptions) -> Result<Vec<Fig2Row>> {
    sweep_runs(base, sweep, opts)?
        .into_iter()
        .map(|(ratio, k, r)| {
            Ok(Fig2Row {
                ratio,
                k,
                term1_db_mc: r.term1_db_mc.ok_or_else(|| missing("MC terms"))?,
                term2_db_mc: r.term2_db_mc.ok_or_else(|| missing("MC terms"))?,
                term1_db_detequiv: r.term1_db_detequiv.ok_or_else(|| missing("det-equiv terms"))?,
                term2_db_detequiv: r.term2_db_detequiv.ok_or_else(|| missing("det-equiv terms"))?,
            })
        })
        .collect()
}

/// Uncorrelated-model closed form next to the general solver on the same model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormReport {
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub alpha: f64,
    pub rho: f64,
    pub rho_tr: f64,
    pub nu: f64,
    pub mu_star: f64,
    pub noise: f64,
    pub non_coherent: f64,
    pub coherent: f64,
    pub gamma_bar_closed_form: f64,
    pub gamma_bar_general: f64,
    pub rel_diff: f64,
}

pub fn run_closedform(config: &NetworkConfig, alpha: f64, opts: &RunOptions) -> Result<ClosedFormReport> {
    let dims = config.dims();
    let (rho, rho_tr) = (config.rho(), config.rho_tr());
    let cf = detequiv::closed_form_uncorrelated(dims.antennas, dims.ues, dims.cells, alpha, rho, rho_tr)?;
    let corr = detequiv::uncorrelated_correlation_set(dims, alpha)?;
    let stats = EstimationStatistics::new(&corr, rho_tr)?;
    let cell = detequiv::det_equiv_cell(&stats, rho, 0, opts.fixed_point)?;
    let general = cell.gamma[0].gamma_bar;
    Ok(ClosedFormReport {
        m: dims.antennas,
        k: dims.ues,
        l: dims.cells,
        alpha,
        rho,
        rho_tr,
        nu: cf.nu,
        mu_star: cf.mu_star,
        noise: cf.noise,
        non_coherent: cf.non_coherent,
        coherent: cf.coherent,
        gamma_bar_closed_form: cf.gamma_bar,
        gamma_bar_general: general,
        rel_diff: (general - cf.gamma_bar).abs() / cf.gamma_bar,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> SelfTestCheck {
    SelfTestCheck {
        name: name.into(),
        passed,
        detail,
    }
}

/// Quick internal consistency checks on small problems.
pub fn selftest(seed: u64) -> Result<Vec<SelfTestCheck>> {
    let mut out = Vec::new();

    let config = NetworkConfig {
        cells: 4,
        ues_per_cell: 2,
        antennas: 8,
        seed,
        ..NetworkConfig::default()
    };
    let setup = setup_drop(&config, 0)?;
    let sampler = ChannelSampler::new(&setup.correlation, &setup.statistics)?;
    let mut rng = stream_rng(seed, BLOCK_STREAM, 0, 0);
    let block = sampler.sample(&mut rng);
    let rho_ul = config.rho_ul();
    let mut worst = 0.0f64;
    for j in 0..config.cells {
        for k in 0..config.ues_per_cell {
            let z = setup.statistics.z(j);
            let q = combining::sinr_quadratic(&block, z, rho_ul, j, k)?;
            let (m, _) = combining::sinr_via_mse(&block, z, rho_ul, j, k)?;
            let d = combining::sinr_decomposition(&block, z, rho_ul, j, k)?.gamma;
            for x in [m, d] {
                worst = worst.max((x - q).abs() / q.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    out.push(check("sinr_routes_agree", worst <= 1e-9, format!("max relative difference {worst:.3e}")));

    let cf = run_closedform(
        &NetworkConfig {
            cells: 2,
            ues_per_cell: 4,
            antennas: 16,
            ..config.clone()
        },
        0.5,
        &RunOptions::default(),
    )?;
    out.push(check(
        "uncorrelated_closed_form",
        cf.rel_diff <= 1e-8,
        format!("relative difference {:.3e}", cf.rel_diff),
    ));

    let opts = RunOptions {
        blocks: 2,
        ..RunOptions::default()
    };
    let a = serde_json::to_string(&run_experiment(&config, &opts, Engines::BOTH)?)?;
    let b = serde_json::to_string(&run_experiment(&config, &opts, Engines::BOTH)?)?;
    out.push(check("deterministic_rerun", a == b, format!("{} bytes", a.len())));

    Ok(out)
}
