mod common;

use mmimo_core::estimation::{ChannelSampler, EstimationStatistics};
use mmimo_core::linalg::CMat;
use mmimo_core::network::Dims;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BLOCKS: usize = 10_000;

struct Moments {
    sum: CMat,
    sum_sq_re: nalgebra::DMatrix<f64>,
    sum_sq_im: nalgebra::DMatrix<f64>,
}

impl Moments {
    fn new(m: usize) -> Self {
        Self {
            sum: CMat::zeros(m, m),
            sum_sq_re: nalgebra::DMatrix::zeros(m, m),
            sum_sq_im: nalgebra::DMatrix::zeros(m, m),
        }
    }

    fn add(&mut self, x: &mmimo_core::CVec, y: &mmimo_core::CVec) {
        let p = x * y.adjoint();
        for (idx, v) in p.iter().enumerate() {
            self.sum_sq_re[idx] += v.re * v.re;
            self.sum_sq_im[idx] += v.im * v.im;
        }
        self.sum += p;
    }

    fn mean(&self) -> CMat {
        &self.sum / Complex64::new(BLOCKS as f64, 0.0)
    }

    /// Largest entrywise deviation from `target` in units of standard error.
    fn max_z(&self, target: &CMat) -> f64 {
        let n = BLOCKS as f64;
        let mean = self.mean();
        let mut worst: f64 = 0.0;
        for idx in 0..mean.len() {
            let var_re = (self.sum_sq_re[idx] / n - mean[idx].re.powi(2)).max(1e-300);
            let var_im = (self.sum_sq_im[idx] / n - mean[idx].im.powi(2)).max(1e-300);
            let d = mean[idx] - target[idx];
            worst = worst.max(d.re.abs() / (var_re / n).sqrt()).max(d.im.abs() / (var_im / n).sqrt());
        }
        worst
    }
}

fn setup(seed: u64) -> (Dims, mmimo_core::network::CorrelationSet, EstimationStatistics) {
    let dims = Dims {
        cells: 2,
        ues: 1,
        antennas: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corr = common::random_correlation_set(dims, &mut rng);
    let stats = EstimationStatistics::new(&corr, 3.0).unwrap();
    (dims, corr, stats)
}

#[test]
fn estimate_covariance_matches_phi() {
    let (dims, corr, stats) = setup(1);
    let sampler = ChannelSampler::new(&corr, &stats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut self_cov: Vec<Moments> = (0..dims.links()).map(|_| Moments::new(dims.antennas)).collect();
    let mut cross = Moments::new(dims.antennas);
    let mut independence = Moments::new(dims.antennas);
    for _ in 0..BLOCKS {
        let block = sampler.sample(&mut rng);
        for j in 0..dims.cells {
            for l in 0..dims.cells {
                let idx = dims.link(j, l, 0);
                self_cov[idx].add(&block.h_hat[idx], &block.h_hat[idx]);
            }
        }
        cross.add(block.h_hat(0, 1, 0), block.h_hat(0, 0, 0));
        let idx = dims.link(0, 0, 0);
        independence.add(&block.h_hat[idx], &block.h_tilde[idx]);
    }

    for j in 0..dims.cells {
        for l in 0..dims.cells {
            let phi = stats.phi_self(j, l, 0);
            let err = (self_cov[dims.link(j, l, 0)].mean() - phi).norm() / phi.norm();
            assert!(err < 0.05, "Phi_{j}{l}{l}: relative Frobenius error {err}");
        }
    }

    let z = cross.max_z(stats.phi(0, 1, 0, 0));
    assert!(z < 5.0, "contamination correlation z = {z}");

    let z = independence.max_z(&CMat::zeros(dims.antennas, dims.antennas));
    assert!(z < 5.0, "estimate/error correlation z = {z}");
}

#[test]
fn dump_file_round_trip() {
    let (_, _, stats) = setup(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.bin");
    stats.write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"MMIMOEST");
    let back = EstimationStatistics::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.phi, stats.phi);
    assert_eq!(back.z, stats.z);
    assert_eq!(back.q, stats.q);
}
