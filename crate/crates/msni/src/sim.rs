//! Synthetic stream generation with randomly heterogeneous parameters.
//!
//! A stream of `K` batches shares a base parameter `theta_0` while each batch
//! (or each task, in the per-task setting) perturbs it by an isotropic
//! Gaussian random effect `eta ~ N(0, sigma^2 I)`. Covariates follow a
//! mean-zero Gaussian with AR(1) covariance `0.5^|i-j|`; responses come from
//! either the linear model with unit-variance Gaussian noise or a Bernoulli
//! logistic model.
//!
//! Generation is fully deterministic given the configuration: every batch
//! draws from its own counter-based substream, so batch `k` can be
//! regenerated in isolation and parallel replications never interleave.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{sigmoid, ModelKind, SampleBatch};
use crate::rng::{substream, StreamPurpose};
use crate::stream::BatchSource;

/// How true parameters vary along the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Every batch draws its own parameter perturbation.
    PerBatch,
    /// Batches are grouped into `num_tasks` consecutive blocks sharing one
    /// perturbation each.
    PerTask,
}

/// Configuration of one synthetic stream family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Parameter dimension `p` (at least 2; the base parameter divides by `p-1`).
    pub p: usize,
    /// Number of batches `K`.
    pub k: usize,
    /// Samples per batch.
    pub n: usize,
    /// Random-effect scale `sigma`.
    pub sigma: f64,
    pub setting: Setting,
    /// Task count `M` for the per-task setting.
    #[serde(default = "default_num_tasks")]
    pub num_tasks: usize,
    pub kind: ModelKind,
    pub master_seed: u64,
}

fn default_num_tasks() -> usize {
    5
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config("p must be at least 2".into()));
        }
        if self.k == 0 || self.n == 0 {
            return Err(Error::Config("K and n must be positive".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be nonnegative".into()));
        }
        if self.setting == Setting::PerTask {
            if self.num_tasks == 0 {
                return Err(Error::Config("num_tasks must be positive".into()));
            }
            if !self.k.is_multiple_of(self.num_tasks) {
                return Err(Error::Config(format!(
                    "per_task setting requires K divisible by num_tasks ({} % {} != 0)",
                    self.k, self.num_tasks
                )));
            }
        }
        Ok(())
    }

    /// Batches per task in the per-task setting.
    pub fn batches_per_task(&self) -> usize {
        self.k / self.num_tasks
    }

    /// 1-based task index of batch `k` (1-based).
    pub fn task_of_batch(&self, k: usize) -> usize {
        match self.setting {
            Setting::PerBatch => k,
            Setting::PerTask => (k - 1) / self.batches_per_task() + 1,
        }
    }
}

/// True parameters of a realized stream.
#[derive(Debug, Clone)]
pub struct TrueParams {
    theta0: Array1<f64>,
    per_batch: Option<Vec<Array1<f64>>>,
    per_task: Option<Vec<Array1<f64>>>,
    batches_per_task: usize,
}

impl TrueParams {
    pub fn theta0(&self) -> &Array1<f64> {
        &self.theta0
    }

    /// True parameter of batch `k` (1-based).
    pub fn for_batch(&self, k: usize) -> &Array1<f64> {
        if let Some(pb) = &self.per_batch {
            &pb[k - 1]
        } else {
            let task = (k - 1) / self.batches_per_task;
            &self.per_task.as_ref().unwrap()[task]
        }
    }

    /// Task-level parameters (per-task setting only).
    pub fn task_params(&self) -> Option<&[Array1<f64>]> {
        self.per_task.as_deref()
    }
}

/// Base parameter: component `i` (1-based) equals `10 * (p - i) / (sqrt(p) * (p-1))`.
/// The first entry is `10/sqrt(p)` and the last is zero.
pub fn base_parameter(p: usize) -> Result<Array1<f64>> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "base parameter needs p >= 2, got {p}"
        )));
    }
    let scale = 10.0 / (p as f64).sqrt();
    Ok(Array1::from_shape_fn(p, |i| {
        scale * (p - (i + 1)) as f64 / (p - 1) as f64
    }))
}

/// Draws the per-batch or per-task parameter perturbations for replication
/// `rep`. With `sigma = 0` every parameter equals `theta0` exactly.
pub fn draw_heterogeneous_params(cfg: &SimConfig, theta0: &Array1<f64>, rep: u32) -> TrueParams {
    let mut rng = substream(cfg.master_seed, StreamPurpose::Params, rep, 0);
    let draw = |rng: &mut ChaCha12Rng| -> Array1<f64> {
        if cfg.sigma == 0.0 {
            return theta0.clone();
        }
        let eta = Array1::from_shape_fn(cfg.p, |_| cfg.sigma * rng.sample::<f64, _>(StandardNormal));
        theta0 + &eta
    };
    match cfg.setting {
        Setting::PerBatch => {
            let params = (0..cfg.k).map(|_| draw(&mut rng)).collect();
            TrueParams {
                theta0: theta0.clone(),
                per_batch: Some(params),
                per_task: None,
                batches_per_task: 1,
            }
        }
        Setting::PerTask => {
            let params = (0..cfg.num_tasks).map(|_| draw(&mut rng)).collect();
            TrueParams {
                theta0: theta0.clone(),
                per_batch: None,
                per_task: Some(params),
                batches_per_task: cfg.batches_per_task(),
            }
        }
    }
}

/// Rows i.i.d. `N(0, Sigma)` with `Sigma_ij = 0.5^|i-j|`, generated by the
/// AR(1) recursion `x_1 = z_1`, `x_j = 0.5 x_{j-1} + sqrt(0.75) z_j`, which is
/// exact for this covariance.
pub fn gen_covariates(n: usize, p: usize, rng: &mut ChaCha12Rng) -> Array2<f64> {
    let innovation = (1.0f64 - 0.25).sqrt();
    let mut x = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[[i, 0]] = prev;
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = 0.5 * prev + innovation * z;
            x[[i, j]] = prev;
        }
    }
    x
}

/// Responses under the configured model: `y = X theta + eps` with standard
/// normal noise, or independent Bernoulli draws with logistic probabilities.
pub fn gen_responses(
    x: &Array2<f64>,
    theta: ArrayView1<'_, f64>,
    kind: ModelKind,
    rng: &mut ChaCha12Rng,
) -> Result<Array1<f64>> {
    if x.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: theta.len(),
            context: "gen_responses theta",
        });
    }
    let z = x.dot(&theta);
    Ok(match kind {
        ModelKind::Linear => {
            Array1::from_shape_fn(x.nrows(), |i| z[i] + rng.sample::<f64, _>(StandardNormal))
        }
        ModelKind::Logistic => Array1::from_shape_fn(x.nrows(), |i| {
            if rng.gen::<f64>() < sigmoid(z[i]) {
                1.0
            } else {
                0.0
            }
        }),
    })
}

/// Squared Euclidean distance `||theta_k - theta_0||^2`.
pub fn deviation(theta_k: ArrayView1<'_, f64>, theta0: ArrayView1<'_, f64>) -> f64 {
    theta_k
        .iter()
        .zip(theta0.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// A replayable simulated stream for one replication.
pub struct SimStream {
    cfg: SimConfig,
    params: TrueParams,
    rep: u32,
}

impl SimStream {
    pub fn new(cfg: SimConfig, rep: u32) -> Result<Self> {
        cfg.validate()?;
        let theta0 = base_parameter(cfg.p)?;
        let params = draw_heterogeneous_params(&cfg, &theta0, rep);
        Ok(Self { cfg, params, rep })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn params(&self) -> &TrueParams {
        &self.params
    }

    pub fn theta0(&self) -> &Array1<f64> {
        self.params.theta0()
    }
}

impl BatchSource for SimStream {
    fn len(&self) -> usize {
        self.cfg.k
    }

    fn dim(&self) -> usize {
        self.cfg.p
    }

    fn batch(&self, k: usize) -> SampleBatch {
        assert!(k >= 1 && k <= self.cfg.k, "batch index {k} out of 1..={}", self.cfg.k);
        let mut rng = substream(self.cfg.master_seed, StreamPurpose::Batch, self.rep, k as u64);
        let x = gen_covariates(self.cfg.n, self.cfg.p, &mut rng);
        let theta = self.params.for_batch(k);
        let y = gen_responses(&x, theta.view(), self.cfg.kind, &mut rng)
            .expect("generator dimensions are consistent by construction");
        SampleBatch::new(x, y, k).expect("generated batch is valid by construction")
    }
}
