//! Synthetic benchmark series with known Granger structure: three-variable
//! AR triads (chain, fork, collider), sparse stable VAR(K) and Lorenz-96.
//! Every generator is a pure function of its spec, seed included.

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{read_series_csv, write_series_csv, AdjacencyMatrix, MultivariateSeries};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Steps simulated and discarded before a triad or VAR series is recorded.
pub const BURN_IN: usize = 200;
/// Autoregressive order of every triad channel.
pub const TRIAD_AR_ORDER: usize = 2;
/// Slope of the linear triad influence, `f(u) = c * u`.
pub const LINEAR_INFLUENCE: f64 = 0.5;
/// Spectral radius the VAR companion matrix is rescaled below.
pub const VAR_MAX_RADIUS: f64 = 0.95;
const VAR_RESCALE: f64 = 0.9;
const VAR_MAX_RESCALES: usize = 100;
/// Lorenz-96 states beyond this magnitude count as a blow-up.
pub const LORENZ_BLOWUP: f64 = 1e6;

fn default_sigma() -> f64 {
    0.1f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriadStructure {
    Chain,
    Fork,
    Collider,
}

impl TriadStructure {
    pub const ALL: [TriadStructure; 3] = [Self::Chain, Self::Fork, Self::Collider];

    /// `(cause, effect)` pairs over channels `X = 0, Y = 1, Z = 2`.
    pub fn edges(self) -> [(usize, usize); 2] {
        match self {
            Self::Chain => [(2, 0), (0, 1)],
            Self::Fork => [(2, 0), (2, 1)],
            Self::Collider => [(0, 2), (1, 2)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Chain => "chain",
            Self::Fork => "fork",
            Self::Collider => "collider",
        }
    }
}

impl std::str::FromStr for TriadStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chain" => Ok(Self::Chain),
            "fork" => Ok(Self::Fork),
            "collider" => Ok(Self::Collider),
            other => Err(Error::Config(format!("unknown triad structure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadSpec {
    pub structure: TriadStructure,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    pub length: usize,
    /// Noise standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma_e: f64,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl TriadSpec {
    pub fn new(structure: TriadStructure, length: usize, seed: u64) -> Self {
        Self {
            structure,
            nonlinear: true,
            length,
            sigma_e: default_sigma(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length <= 10 {
            return Err(Error::Config(format!("triad length must exceed 10, got {}", self.length)));
        }
        if !(self.sigma_e > 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::Config(format!("sigma_e must be positive, got {}", self.sigma_e)));
        }
        Ok(())
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        let mut a = AdjacencyMatrix::zeros(3);
        for i in 0..3 {
            a.set_edge(i, i);
        }
        for (cause, effect) in self.structure.edges() {
            a.set_edge(cause, effect);
        }
        a
    }
}

fn influence(u: f64, nonlinear: bool) -> f64 {
    if nonlinear {
        u.abs().tanh() + u.abs().sin()
    } else {
        LINEAR_INFLUENCE * u
    }
}

/// Runs the triad recursion from a zero history and returns `steps` rows.
/// `noise_std` may be zero here, unlike in a [`TriadSpec`].
pub fn simulate_triad<R: Rng>(
    structure: TriadStructure,
    nonlinear: bool,
    steps: usize,
    noise_std: f64,
    rng: &mut R,
) -> Array2<f64> {
    let phi: Vec<f64> = (1..=TRIAD_AR_ORDER).map(|k| 0.5f64.powi(k as i32)).collect();
    let edges = structure.edges();
    let mut out = Array2::zeros((steps, 3));
    let mut hist = vec![[0.0f64; 3]; TRIAD_AR_ORDER];
    for t in 0..steps {
        let mut next = [0.0f64; 3];
        for (i, v) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, c) in phi.iter().enumerate() {
                acc += c * hist[k][i];
            }
            for &(cause, effect) in &edges {
                if effect == i {
                    acc += influence(hist[0][cause], nonlinear);
                }
            }
            let e: f64 = StandardNormal.sample(rng);
            *v = acc + noise_std * e;
        }
        hist.rotate_right(1);
        hist[0] = next;
        for i in 0..3 {
            out[[t, i]] = next[i];
        }
    }
    out
}

pub fn gen_triad<T: Scalar>(spec: &TriadSpec) -> Result<(MultivariateSeries<T>, AdjacencyMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = simulate_triad(spec.structure, spec.nonlinear, BURN_IN + spec.length, spec.sigma_e, &mut rng);
    let values = raw.slice(ndarray::s![BURN_IN.., ..]).mapv(T::of);
    let names = ["X", "Y", "Z"].iter().map(|s| s.to_string()).collect();
    Ok((MultivariateSeries::new(values, names)?, spec.adjacency()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub channels: usize,
    pub lags: usize,
    pub length: usize,
    #[serde(default = "default_sigma")]
    pub sigma_e: f64,
    /// Fraction of off-diagonal entries that carry an edge.
    pub sparsity: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    pub seed: u64,
}

fn default_coupling() -> f64 {
    0.4
}

impl VarSpec {
    pub fn new(channels: usize, lags: usize, length: usize, sparsity: f64, seed: u64) -> Self {
        Self {
            channels,
            lags,
            length,
            sigma_e: default_sigma(),
            sparsity,
            coupling: default_coupling(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::Config("VAR needs at least 2 channels".into()));
        }
        if self.lags == 0 || self.length == 0 {
            return Err(Error::Config("VAR lag order and length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!("sparsity must lie in [0, 1], got {}", self.sparsity)));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite() && self.coupling.is_finite()) {
            return Err(Error::Config("sigma_e and coupling must be finite, sigma_e >= 0".into()));
        }
        Ok(())
    }

    /// Number of off-diagonal edges the sampler draws.
    pub fn off_diagonal_edges(&self) -> usize {
        let slots = (self.channels * (self.channels - 1)) as f64;
        (self.sparsity * slots - 1e-9).ceil().max(0.0) as usize
    }
}

/// Spectral radius of the companion matrix of `X(t) = sum_k A_k X(t-k)`.
pub fn companion_spectral_radius(coefs: &[Array2<f64>]) -> f64 {
    let k = coefs.len();
    if k == 0 {
        return 0.0;
    }
    let p = coefs[0].nrows();
    let n = p * k;
    let mut c = DMatrix::<f64>::zeros(n, n);
    for (lag, a) in coefs.iter().enumerate() {
        for ((i, j), v) in a.indexed_iter() {
            c[(i, lag * p + j)] = *v;
        }
    }
    for i in p..n {
        c[(i, i - p)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Simulates `steps` new rows of a VAR after the given history
/// (`history[0]` is the most recent state; missing lags are zero).
pub fn simulate_var<R: Rng>(
    coefs: &[Array2<f64>],
    history: &[Array1<f64>],
    steps: usize,
    noise_std: f64,
    rng: &mut R,
) -> Array2<f64> {
    let p = coefs[0].nrows();
    let k = coefs.len();
    let mut hist: Vec<Array1<f64>> = (0..k)
        .map(|l| history.get(l).cloned().unwrap_or_else(|| Array1::zeros(p)))
        .collect();
    let mut out = Array2::zeros((steps, p));
    for t in 0..steps {
        let mut next = Array1::zeros(p);
        for (a, x) in coefs.iter().zip(&hist) {
            next += &a.dot(x);
        }
        for v in next.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += noise_std * e;
        }
        out.row_mut(t).assign(&next);
        hist.rotate_right(1);
        hist[0] = next;
    }
    out
}

/// A generated VAR series with its structure and lag matrices.
pub struct VarSample<T> {
    pub series: MultivariateSeries<T>,
    pub adjacency: AdjacencyMatrix,
    pub coefficients: Vec<Array2<f64>>,
}

pub fn gen_var<T: Scalar>(spec: &VarSpec) -> Result<VarSample<T>> {
    spec.validate()?;
    let p = spec.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let off: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut support: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
    let mut picked = sample(&mut rng, off.len(), spec.off_diagonal_edges()).into_vec();
    picked.sort_unstable();
    support.extend(picked.into_iter().map(|idx| off[idx]));

    let mut coefs: Vec<Array2<f64>> = (0..spec.lags)
        .map(|_| {
            let mut a = Array2::zeros((p, p));
            for &(i, j) in &support {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                a[[i, j]] = sign * spec.coupling;
            }
            a
        })
        .collect();

    let mut attempts = 0;
    while companion_spectral_radius(&coefs) >= VAR_MAX_RADIUS {
        attempts += 1;
        if attempts > VAR_MAX_RESCALES {
            return Err(Error::Numeric(format!(
                "VAR could not be stabilized after {VAR_MAX_RESCALES} rescales"
            )));
        }
        for a in coefs.iter_mut() {
            *a *= VAR_RESCALE;
        }
    }

    let mut adjacency = AdjacencyMatrix::zeros(p);
    for a in &coefs {
        for ((i, j), v) in a.indexed_iter() {
            if *v != 0.0 {
                adjacency.set_edge(j, i);
            }
        }
    }

    let raw = simulate_var(&coefs, &[], BURN_IN + spec.length, spec.sigma_e, &mut rng);
    let values = raw.slice(ndarray::s![BURN_IN.., ..]).mapv(T::of);
    Ok(VarSample {
        series: MultivariateSeries::unnamed(values)?,
        adjacency,
        coefficients: coefs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzSpec {
    pub p: usize,
    pub forcing: f64,
    pub length: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Integration steps discarded before recording.
    #[serde(default = "default_lorenz_burn_in")]
    pub burn_in: usize,
    /// Standard deviation of the perturbation added to the `x_i = F` start.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    pub seed: u64,
}

fn default_dt() -> f64 {
    0.01
}
fn default_sample_every() -> usize {
    5
}
fn default_lorenz_burn_in() -> usize {
    1000
}
fn default_perturbation() -> f64 {
    0.1
}

impl LorenzSpec {
    pub fn new(p: usize, forcing: f64, length: usize, seed: u64) -> Self {
        Self {
            p,
            forcing,
            length,
            dt: default_dt(),
            sample_every: default_sample_every(),
            burn_in: default_lorenz_burn_in(),
            perturbation: default_perturbation(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::Config(format!("Lorenz-96 needs p >= 4, got {}", self.p)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sample_every == 0 || self.length == 0 {
            return Err(Error::Config("sample_every and length must be positive".into()));
        }
        Ok(())
    }

    /// `j -> i` iff `j` is one of `i-2, i-1, i, i+1` (mod p).
    pub fn adjacency(&self) -> AdjacencyMatrix {
        let p = self.p;
        let mut a = AdjacencyMatrix::zeros(p);
        for i in 0..p {
            for off in [p - 2, p - 1, 0, 1] {
                a.set_edge((i + off) % p, i);
            }
        }
        a
    }
}

/// `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F` with periodic indices.
pub fn lorenz96_derivative<T: Scalar>(x: &[T], forcing: T, out: &mut [T]) {
    let p = x.len();
    for i in 0..p {
        let ip1 = x[(i + 1) % p];
        let im1 = x[(i + p - 1) % p];
        let im2 = x[(i + p - 2) % p];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

/// One classical fourth-order Runge-Kutta step, in place.
pub fn rk4_step<T: Scalar>(x: &mut [T], forcing: T, dt: T) {
    let p = x.len();
    let two = T::of(2.0);
    let half = dt / two;
    let mut k1 = vec![T::zero(); p];
    let mut k2 = vec![T::zero(); p];
    let mut k3 = vec![T::zero(); p];
    let mut k4 = vec![T::zero(); p];
    let mut tmp = vec![T::zero(); p];

    lorenz96_derivative(x, forcing, &mut k1);
    for i in 0..p {
        tmp[i] = x[i] + half * k1[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k2);
    for i in 0..p {
        tmp[i] = x[i] + half * k2[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k3);
    for i in 0..p {
        tmp[i] = x[i] + dt * k3[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k4);
    let sixth = dt / T::of(6.0);
    for i in 0..p {
        x[i] = x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
}

/// Integrates `steps` RK4 steps; fails when any coordinate leaves
/// `[-1e6, 1e6]` or stops being finite.
pub fn integrate_lorenz96<T: Scalar>(x: &mut [T], forcing: T, dt: T, steps: usize) -> Result<()> {
    let limit = T::of(LORENZ_BLOWUP);
    for step in 0..steps {
        rk4_step(x, forcing, dt);
        if x.iter().any(|v| !v.is_finite() || v.abs() > limit) {
            return Err(Error::Numeric(format!(
                "Lorenz-96 integration blew up at step {step}; try a smaller dt"
            )));
        }
    }
    Ok(())
}

pub fn gen_lorenz96<T: Scalar>(spec: &LorenzSpec) -> Result<(MultivariateSeries<T>, AdjacencyMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let forcing = T::of(spec.forcing);
    let dt = T::of(spec.dt);
    let mut x: Vec<T> = (0..spec.p)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            T::of(spec.forcing + spec.perturbation * e)
        })
        .collect();
    integrate_lorenz96(&mut x, forcing, dt, spec.burn_in)?;
    let mut values = Array2::zeros((spec.length, spec.p));
    for t in 0..spec.length {
        integrate_lorenz96(&mut x, forcing, dt, spec.sample_every)?;
        for (i, v) in x.iter().enumerate() {
            values[[t, i]] = *v;
        }
    }
    let series = MultivariateSeries::unnamed(values)?.with_dt(spec.dt * spec.sample_every as f64);
    Ok((series, spec.adjacency()))
}

/// Reads a series CSV and, optionally, a ground-truth adjacency CSV whose
/// size must match the channel count.
pub fn load_csv_dataset(
    path: &Path,
    adjacency_path: Option<&Path>,
) -> Result<(MultivariateSeries<f64>, Option<AdjacencyMatrix>)> {
    let series = read_series_csv(path)?;
    let adjacency = match adjacency_path {
        Some(p) => {
            let a = AdjacencyMatrix::read_csv(p)?;
            if a.size() != series.channels() {
                return Err(Error::Shape(format!(
                    "adjacency is {0}x{0}, series has {1} channels",
                    a.size(),
                    series.channels()
                )));
            }
            Some(a)
        }
        None => None,
    };
    Ok((series, adjacency))
}

/// A synthetic dataset recipe, as written to config and metadata files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Triad(TriadSpec),
    Var(VarSpec),
    Lorenz96(LorenzSpec),
}

impl GeneratorSpec {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Triad(s) => s.seed,
            Self::Var(s) => s.seed,
            Self::Lorenz96(s) => s.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Triad(s) => s.seed = seed,
            Self::Var(s) => s.seed = seed,
            Self::Lorenz96(s) => s.seed = seed,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Triad(s) => s.validate(),
            Self::Var(s) => s.validate(),
            Self::Lorenz96(s) => s.validate(),
        }
    }

    pub fn generate<T: Scalar>(&self) -> Result<(MultivariateSeries<T>, AdjacencyMatrix)> {
        match self {
            Self::Triad(s) => gen_triad(s),
            Self::Var(s) => gen_var(s).map(|v| (v.series, v.adjacency)),
            Self::Lorenz96(s) => gen_lorenz96(s),
        }
    }
}

/// Writes `series.csv`, `adjacency.csv` and `metadata.json` into `dir`.
pub fn write_dataset<T: Scalar>(
    dir: &Path,
    spec: &GeneratorSpec,
    series: &MultivariateSeries<T>,
    adjacency: &AdjacencyMatrix,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_series_csv(series, &dir.join("series.csv"))?;
    adjacency.write_csv(&dir.join("adjacency.csv"))?;
    let meta = serde_json::json!({
        "spec": spec,
        "seed": spec.seed(),
        "length": series.len(),
        "channels": series.channel_names(),
        "dt": series.dt(),
    });
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn chain_ground_truth() {
        let a = TriadSpec::new(TriadStructure::Chain, 100, 0).adjacency();
        let expected = array![[1u8, 0, 1], [1, 1, 0], [0, 0, 1]];
        assert_eq!(a.entries(), &expected);
    }

    #[test]
    fn triad_adjacency_shape() {
        for s in TriadStructure::ALL {
            let a = TriadSpec::new(s, 100, 0).adjacency();
            assert!((0..3).all(|i| a.has_edge(i, i)));
            assert_eq!(a.count_edges(false), 2);
        }
    }

    #[test]
    fn triad_zero_noise_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in TriadStructure::ALL {
            for nonlinear in [true, false] {
                let x = simulate_triad(s, nonlinear, 300, 0.0, &mut rng);
                assert!(x.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn triad_deterministic() {
        let spec = TriadSpec { sigma_e: 0.1, ..TriadSpec::new(TriadStructure::Fork, 1000, 42) };
        let (a, _) = gen_triad::<f64>(&spec).unwrap();
        let (b, _) = gen_triad::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = gen_triad::<f64>(&TriadSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn triad_rejects_bad_spec() {
        assert!(gen_triad::<f64>(&TriadSpec::new(TriadStructure::Chain, 10, 0)).is_err());
        let spec = TriadSpec { sigma_e: 0.0, ..TriadSpec::new(TriadStructure::Chain, 100, 0) };
        assert!(gen_triad::<f64>(&spec).is_err());
    }

    #[test]
    fn var_scalar_recursion() {
        let coefs = vec![Array2::eye(3) * 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = simulate_var(&coefs, &[Array1::ones(3)], 20, 0.0, &mut rng);
        for t in 1..=20 {
            for v in x.row(t - 1) {
                assert_eq!(*v, 0.5f64.powi(t as i32));
            }
        }
    }

    #[test]
    fn spectral_radius_of_scaled_identity() {
        let r = companion_spectral_radius(&[Array2::eye(4) * 0.5]);
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_var2_scalar() {
        // x_t = 0.5 x_{t-1} + 0.25 x_{t-2}: roots of z^2 - 0.5 z - 0.25
        let r = companion_spectral_radius(&[array![[0.5]], array![[0.25]]]);
        let expected = (0.5 + (0.25f64 + 1.0).sqrt()) / 2.0;
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn var_support_count() {
        let spec = VarSpec::new(10, 2, 1000, 0.2, 7);
        // 18 = ceil(0.2 * 10 * 9)
        assert_eq!(spec.off_diagonal_edges(), 18);
        let v = gen_var::<f64>(&spec).unwrap();
        assert_eq!(v.adjacency.count_edges(false), 18);
        assert_eq!(v.adjacency.count_edges(true), 28);
        assert!(companion_spectral_radius(&v.coefficients) < VAR_MAX_RADIUS);
        for a in &v.coefficients {
            for ((i, j), c) in a.indexed_iter() {
                assert_eq!(*c != 0.0, v.adjacency.has_edge(j, i));
            }
        }
    }

    #[test]
    fn var_cannot_stabilize() {
        let spec = VarSpec { coupling: 1e6, ..VarSpec::new(3, 1, 100, 0.5, 0) };
        assert!(matches!(gen_var::<f64>(&spec), Err(Error::Numeric(_))));
    }

    #[test]
    fn var_second_half_variance_stays_bounded() {
        for seed in 0..5 {
            let v = gen_var::<f64>(&VarSpec::new(10, 2, 1000, 0.2, seed)).unwrap();
            let x = v.series.values();
            let first = x.slice(ndarray::s![..500, ..]).var_axis(ndarray::Axis(0), 1.0);
            let second = x.slice(ndarray::s![500.., ..]).var_axis(ndarray::Axis(0), 1.0);
            for (a, b) in first.iter().zip(second.iter()) {
                assert!(b / a < 3.0 && a / b < 3.0, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lorenz_equilibrium_is_fixed() {
        let f = 20.0_f64;
        let mut x = vec![f; 10];
        integrate_lorenz96(&mut x, f, 0.01, 1000).unwrap();
        assert!(x.iter().all(|&v| (v - f).abs() < 1e-9));
    }

    #[test]
    fn lorenz_ground_truth_rows() {
        let a = LorenzSpec::new(20, 20.0, 100, 0).adjacency();
        for i in 0..20 {
            assert_eq!(a.entries().row(i).iter().filter(|&&v| v == 1).count(), 4);
            assert!(a.has_edge((i + 18) % 20, i));
            assert!(a.has_edge((i + 1) % 20, i));
            assert!(!a.has_edge((i + 2) % 20, i));
        }
    }

    #[test]
    fn lorenz_rk4_fourth_order() {
        // Richardson check: errors at dt and dt/2 against a fine reference.
        let f = 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0: Vec<f64> = (0..8)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                f + 0.1 * z
            })
            .collect();
        let run = |dt: f64| {
            let mut x = x0.clone();
            integrate_lorenz96(&mut x, f, dt, (0.2 / dt).round() as usize).unwrap();
            x
        };
        let reference = run(0.02 / 64.0);
        let err = |x: Vec<f64>| {
            x.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(run(0.02));
        let e2 = err(run(0.01));
        let ratio = e1 / e2;
        assert!((11.0..22.0).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn lorenz_generation_bounded_and_deterministic() {
        let spec = LorenzSpec::new(20, 20.0, 1000, 5);
        let (a, truth) = gen_lorenz96::<f64>(&spec).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(truth.size(), 20);
        assert!(a.values().iter().all(|v| v.abs() < 100.0));
        let (b, _) = gen_lorenz96::<f64>(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lorenz_blowup_reported() {
        let spec = LorenzSpec { dt: 5.0, ..LorenzSpec::new(6, 20.0, 10, 0) };
        let err = gen_lorenz96::<f64>(&spec).unwrap_err();
        assert!(err.to_string().contains("smaller dt"));
    }

    #[test]
    fn lorenz_needs_four_channels() {
        assert!(gen_lorenz96::<f64>(&LorenzSpec::new(3, 8.0, 10, 0)).is_err());
    }

    #[test]
    fn generator_spec_json_tagged() {
        let spec = GeneratorSpec::Triad(TriadSpec::new(TriadStructure::Collider, 500, 9));
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"preset\":\"triad\""));
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
