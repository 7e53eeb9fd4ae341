//! Off-policy data collection and dataset persistence.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::covariance_factor;
use crate::lqr::{CostWeights, LinearSystem, Policy};

pub const RNG_ALGORITHM: &str = "chacha8";

/// Seeded generator: a ChaCha8 keystream selected by `(seed, stream)`.
///
/// Distinct streams of the same seed never share output, so Monte Carlo trials
/// can run in any order or on any thread.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            rng,
            spare: None,
        }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Standard normal draw via the Box-Muller transform.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn standard_normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.standard_normal())
    }
}

/// Zero-mean Gaussian with a fixed covariance; the factor is computed once.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            factor: covariance_factor(cov)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, rng: &mut RngState) -> DVector<f64> {
        let z = rng.standard_normal_vector(self.dim());
        &self.factor * z
    }
}

/// One draw `L z` with `L L' = cov`.
pub fn sample_gaussian(cov: &DMatrix<f64>, rng: &mut RngState) -> Result<DVector<f64>> {
    Ok(GaussianSampler::new(cov)?.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataTriple {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_plus: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub sigma_x: Vec<Vec<f64>>,
    pub sigma_u: Vec<Vec<f64>>,
    pub system_sha: String,
}

/// Ordered triples; index order is the order the estimators consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub triples: Vec<DataTriple>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.meta.n_x
    }

    pub fn n_u(&self) -> usize {
        self.meta.n_u
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// SHA-256 over the dimensions and little-endian entries of `A`, `B`, `Sigma_w`.
pub fn system_fingerprint(sys: &LinearSystem) -> String {
    let mut h = Sha256::new();
    for m in [&sys.a, &sys.b, &sys.sigma_w] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws `n` independent triples `x ~ N(0, Sx)`, `u ~ N(0, Su)`,
/// `x+ = A x + B u + w`.
pub fn collect_dataset(
    sys: &LinearSystem,
    n: usize,
    sigma_x: &DMatrix<f64>,
    sigma_u: &DMatrix<f64>,
    seed: u64,
) -> Result<Dataset> {
    collect_dataset_stream(sys, n, sigma_x, sigma_u, seed, 0)
}

/// As [`collect_dataset`] on an explicit RNG stream.
pub fn collect_dataset_stream(
    sys: &LinearSystem,
    n: usize,
    sigma_x: &DMatrix<f64>,
    sigma_u: &DMatrix<f64>,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("dataset size must be at least 1".into()));
    }
    let (n_x, n_u) = (sys.n_x(), sys.n_u());
    if sigma_x.shape() != (n_x, n_x) || sigma_u.shape() != (n_u, n_u) {
        return Err(Error::Dimension(format!(
            "exploration covariances must be {n_x}x{n_x} and {n_u}x{n_u}"
        )));
    }
    let gx = GaussianSampler::new(sigma_x)?;
    let gu = GaussianSampler::new(sigma_u)?;
    let gw = GaussianSampler::new(&sys.sigma_w)?;
    let mut rng = RngState::new(seed, stream);
    let triples = (0..n)
        .map(|_| {
            let x = gx.sample(&mut rng);
            let u = gu.sample(&mut rng);
            let w = gw.sample(&mut rng);
            let x_plus = &sys.a * &x + &sys.b * &u + w;
            DataTriple { x, u, x_plus }
        })
        .collect();
    Ok(Dataset {
        triples,
        meta: DatasetMeta {
            seed,
            n,
            n_x,
            n_u,
            sigma_x: rows_of(sigma_x),
            sigma_u: rows_of(sigma_u),
            system_sha: system_fingerprint(sys),
        },
    })
}

/// Cesaro average of the stage cost along one closed-loop trajectory
/// started from `x0`.
pub fn rollout_average_cost(
    sys: &LinearSystem,
    w: &CostWeights,
    policy: &Policy,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Argument("rollout needs at least one step".into()));
    }
    let a_k = sys.closed_loop(policy)?;
    let q_k = w.closed_loop_weight(policy);
    let gw = GaussianSampler::new(&sys.sigma_w)?;
    let mut x = x0.clone();
    let mut total = 0.0;
    for _ in 0..steps {
        total += x.dot(&(&q_k * &x));
        x = &a_k * &x + gw.sample(rng);
    }
    Ok(total / steps as f64)
}

/// Sidecar path holding the metadata of a dataset file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn header(n_x: usize, n_u: usize) -> Vec<String> {
    (1..=n_x)
        .map(|i| format!("x{i}"))
        .chain((1..=n_u).map(|i| format!("u{i}")))
        .chain((1..=n_x).map(|i| format!("xp{i}")))
        .collect()
}

/// Writes the triples as CSV (17 significant digits) plus a JSON sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = header(ds.n_x(), ds.n_u()).join(",");
    out.push('\n');
    for t in &ds.triples {
        let row: Vec<String> =
            t.x.iter()
                .chain(t.u.iter())
                .chain(t.x_plus.iter())
                .map(|v| format!("{v:.16e}"))
                .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&ds.meta).expect("metadata serializes");
    let side = sidecar_path(path);
    fs::write(&side, meta + "\n").map_err(|e| Error::io(side, e))
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let meta_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        path: side.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let expected = header(meta.n_x, meta.n_u);
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "{}: header {:?} does not match n_x = {}, n_u = {}",
            path.display(),
            got,
            meta.n_x,
            meta.n_u
        )));
    }

    let width = 2 * meta.n_x + meta.n_u;
    let mut triples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Schema(format!(
                "{}: row at line {line} has {} columns, expected {width}",
                path.display(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        triples.push(DataTriple {
            x: DVector::from_column_slice(&values[..meta.n_x]),
            u: DVector::from_column_slice(&values[meta.n_x..meta.n_x + meta.n_u]),
            x_plus: DVector::from_column_slice(&values[meta.n_x + meta.n_u..]),
        });
    }
    if triples.is_empty() {
        return Err(Error::Schema(format!("{}: dataset has no rows", path.display())));
    }
    if triples.len() != meta.n {
        return Err(Error::Schema(format!(
            "{}: {} rows but metadata declares N = {}",
            path.display(),
            triples.len(),
            meta.n
        )));
    }
    Ok(Dataset { triples, meta })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use nalgebra::dmatrix;

    #[test]
    fn zero_covariance_draws_zero() {
        let mut rng = RngState::new(1, 0);
        for _ in 0..10 {
            assert_eq!(
                sample_gaussian(&DMatrix::zeros(3, 3), &mut rng).unwrap(),
                DVector::zeros(3)
            );
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let a = sample_gaussian(&DMatrix::identity(3, 3), &mut RngState::new(42, 0)).unwrap();
        let b = sample_gaussian(&DMatrix::identity(3, 3), &mut RngState::new(42, 0)).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = sample_gaussian(&DMatrix::identity(3, 3), &mut RngState::new(42, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_variance_matches() {
        let g = GaussianSampler::new(&dmatrix![4.0, 0.0; 0.0, 1.0]).unwrap();
        let mut rng = RngState::new(7, 0);
        let n = 100_000;
        let mut second = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let z = g.sample(&mut rng);
            second += &z * z.transpose();
        }
        second /= n as f64;
        assert!((3.88..=4.12).contains(&second[(0, 0)]));
        let want = dmatrix![4.0, 0.0; 0.0, 1.0];
        assert!((&second - &want).norm() <= 0.03 * want.norm());
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let mut rng = RngState::new(0, 0);
        assert!(matches!(
            sample_gaussian(&dmatrix![1.0, 0.0; 0.0, -1.0], &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noiseless_triples_are_exact() {
        let sys = presets::paper_system().with_noise(DMatrix::zeros(3, 3)).unwrap();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 50, &sx, &su, 3).unwrap();
        for t in &ds.triples {
            assert_eq!(t.x_plus, &sys.a * &t.x + &sys.b * &t.u);
        }
    }

    #[test]
    fn paper_dataset_shape() {
        let sys = presets::paper_system();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, presets::PAPER_SAMPLES, &sx, &su, 0).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!((ds.n_x(), ds.n_u()), (3, 3));
        assert!(matches!(collect_dataset(&sys, 0, &sx, &su, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn state_mean_near_zero() {
        let sys = presets::paper_system();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 100_000, &sx, &su, 11).unwrap();
        let mean = ds.triples.iter().fold(DVector::zeros(3), |acc, t| acc + &t.x) / ds.len() as f64;
        assert!(mean.amax() < 0.02);
    }

    #[test]
    fn identification_from_many_samples() {
        let sys = presets::paper_system();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 10_000, &sx, &su, 5).unwrap();
        let z = DMatrix::from_fn(ds.len(), 6, |k, j| {
            let t = &ds.triples[k];
            if j < 3 {
                t.x[j]
            } else {
                t.u[j - 3]
            }
        });
        let y = DMatrix::from_fn(ds.len(), 3, |k, j| ds.triples[k].x_plus[j]);
        let theta = (z.transpose() * &z).cholesky().unwrap().solve(&(z.transpose() * y));
        let mut ab = DMatrix::zeros(3, 6);
        ab.view_mut((0, 0), (3, 3)).copy_from(&sys.a);
        ab.view_mut((0, 3), (3, 3)).copy_from(&sys.b);
        assert!((theta.transpose() - ab).norm() <= 0.05);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let sys = presets::paper_system();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 100, &sx, &su, 9).unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);

        let one = collect_dataset(&sys, 1, &sx, &su, 9).unwrap();
        save_dataset(&one, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), one);
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let sys = LinearSystem::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.1]).unwrap();
        let ds = collect_dataset(&sys, 3, &dmatrix![1.0], &dmatrix![1.0], 0).unwrap();
        save_dataset(&ds, &path).unwrap();

        fs::write(&path, "x1,u1,xp1\n1,2,3\n1,2\n4,5,6\n").unwrap();
        match load_dataset(&path) {
            Err(Error::Schema(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }

        fs::write(&path, "x1,u1,xp1\n1,2,3\n1,abc,3\n4,5,6\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { line: 3, .. })));

        fs::write(&path, "x1,u1,xp1\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn rollout_matches_trace_formula_scalar() {
        let sys = LinearSystem::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.1]).unwrap();
        let w = CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let k = Policy::zeros(1, 1);
        let mut rng = RngState::new(3, 0);
        let avg = rollout_average_cost(&sys, &w, &k, &DVector::zeros(1), 200_000, &mut rng).unwrap();
        assert!((avg - 0.4 / 3.0).abs() < 0.02 * 0.4 / 3.0);
    }
}
