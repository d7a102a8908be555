//! Parallel trajectory farms. Trajectory `i` always draws from
//! `trajectory_rng(seed, i)` and results are returned in index order, so
//! the output does not depend on the worker count.

use rayon::prelude::*;
use thiserror::Error;

use crate::entropy::{EntropyError, EntropyLedger, KernelEngine};
use crate::linops::{expm, unvec, vec, LinalgError};
use crate::model::{liouville_generators, LindbladModel};
use crate::unravel::{steady_state, trajectory_rng, trajectory_seed, Trajectory, TrajectorySampler, UnravelError};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("trajectory {index} (seed {seed:#018x}): {source}")]
    Trajectory {
        index: u64,
        seed: u64,
        #[source]
        source: EntropyError,
    },
    #[error("ensemble needs at least one trajectory")]
    Empty,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Setup(#[from] EntropyError),
    #[error(transparent)]
    Unravel(#[from] UnravelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Sampler and kernel engine for one model and horizon.
pub struct Ensemble {
    sampler: TrajectorySampler,
    engine: KernelEngine,
}

impl Ensemble {
    pub fn new(m: &LindbladModel, horizon: f64) -> Result<Self, EnsembleError> {
        Ok(Self {
            sampler: TrajectorySampler::new(m, horizon)?,
            engine: KernelEngine::new(m, horizon)?,
        })
    }

    /// Replace the steady-state initial distribution.
    pub fn with_sampler(m: &LindbladModel, sampler: TrajectorySampler) -> Result<Self, EnsembleError> {
        let engine = KernelEngine::new(m, sampler.horizon())?;
        Ok(Self { sampler, engine })
    }

    pub fn engine(&self) -> &KernelEngine {
        &self.engine
    }

    pub fn sampler(&self) -> &TrajectorySampler {
        &self.sampler
    }

    /// Map every sampled trajectory through `f`. `threads = None` uses the
    /// global pool.
    pub fn map<T, F>(&self, seed: u64, n: u64, threads: Option<usize>, f: F) -> Result<Vec<T>, EnsembleError>
    where
        T: Send,
        F: Fn(&KernelEngine, &Trajectory, u64, u64) -> Result<T, EntropyError> + Sync,
    {
        if n == 0 {
            return Err(EnsembleError::Empty);
        }
        let job = || -> Vec<Result<T, EnsembleError>> {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let s = trajectory_seed(seed, i);
                    let wrap = |source| EnsembleError::Trajectory { index: i, seed: s, source };
                    let t = self
                        .sampler
                        .sample(&mut trajectory_rng(seed, i))
                        .map_err(|e| wrap(EntropyError::from(e)))?;
                    f(&self.engine, &t, i, s).map_err(wrap)
                })
                .collect()
        };
        let results = match threads {
            None => job(),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| EnsembleError::Pool(e.to_string()))?
                .install(job),
        };
        // first failure by index, not by completion order
        results.into_iter().collect()
    }

    pub fn ledgers(&self, seed: u64, n: u64, threads: Option<usize>) -> Result<Vec<EntropyLedger>, EnsembleError> {
        self.map(seed, n, threads, |engine, t, i, s| engine.ledger(t, i, s))
    }

    /// Empirical final-state populations with their Monte Carlo standard
    /// errors.
    pub fn final_populations(&self, seed: u64, n: u64, threads: Option<usize>) -> Result<PopulationEstimate, EnsembleError> {
        let finals = self.map(seed, n, threads, |_, t, _, _| Ok(t.final_state))?;
        Ok(PopulationEstimate::from_states(&finals, self.engine.model().dim()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl PopulationEstimate {
    pub fn from_states(states: &[usize], dim: usize) -> Self {
        let mut counts = vec![0usize; dim];
        for &s in states {
            counts[s] += 1;
        }
        let n = states.len();
        let nf = n as f64;
        let mean: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        // Bernoulli indicator per state, unbiased variance
        let stderr = mean
            .iter()
            .map(|&p| if n > 1 { (p * (1.0 - p) * nf / (nf - 1.0) / nf).sqrt() } else { f64::INFINITY })
            .collect();
        Self { mean, stderr, n }
    }

    /// Largest `|mean − target| / stderr`, with a zero stderr counting as
    /// consistent only when the deviation is exactly zero.
    pub fn max_z(&self, target: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(target)
            .map(|((&m, &s), &t)| {
                let d = (m - t).abs();
                if s > 0.0 {
                    d / s
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Basis populations of `unvec(e^{𝓖_full t} vec(ρ_ss))`.
pub fn propagated_populations(m: &LindbladModel, t: f64) -> Result<Vec<f64>, EnsembleError> {
    let rho0 = steady_state(m)?.rho;
    let prop = expm(&liouville_generators(m).g_full, t)?;
    let rho_t = unvec(&prop.apply(vec(&rho0).as_slice()), m.dim(), m.dim())?;
    Ok(rho_t.diag().iter().map(|z| z.re).collect())
}
