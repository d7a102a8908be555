//! Visible-record kernels, hidden entropy production and fluctuation-theorem
//! statistics.
//!
//! For a visible record `τ_X = {a; (k_1,t_1) … (k_M,t_M); b}` the forward
//! kernel is `⟨⟨b| e^{𝓖Δt_M} 𝓙_{k_M} ⋯ 𝓙_{k_1} e^{𝓖Δt_0} |a⟩⟩` and the
//! backward kernel is the same product with the backward generator `𝓖̄†`.
//! Their log-ratio is the coarse-grained hidden entropy `Δσ_Y`.
//!
//! Kernels are accumulated in log space: the propagated vector is rescaled
//! to unit norm after each segment and the scale factors are summed as logs,
//! so long records cannot underflow.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linops::{vec_index, vec_norm, ExpLadder, LinalgError, C_ONE, C_ZERO};
use crate::model::{is_diagonal, jump_superoperator, liouville_generators, LindbladModel, ModelError};
use crate::unravel::{
    hidden_env_entropy, steady_state, visible_filter, Trajectory, UnravelError, VisibleTrajectory,
};
use crate::ComplexMatrix;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Unravel(#[from] UnravelError),
    #[error("trajectory is impossible under the model: {0}")]
    ImpossibleTrajectory(String),
    #[error("kernel has imaginary residue {0:e} beyond tolerance")]
    ImaginaryResidue(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("basis state {0} has zero steady-state probability")]
    ZeroProbability(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Largest imaginary part tolerated on a unit-norm kernel vector.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-10;

/// Halvings stored in the kernel ladders; the remainder below `T·2^{-24}` is
/// handled by a Taylor series.
const KERNEL_LADDER_DEPTH: usize = 24;

/// Precomputed propagators for evaluating many records of one model.
#[derive(Clone, Debug)]
pub struct KernelEngine {
    model: LindbladModel,
    horizon: f64,
    forward: ExpLadder,
    backward: ExpLadder,
    /// `𝓙_k` indexed by jump id.
    supers: Vec<Option<ComplexMatrix>>,
    populations: Option<Vec<f64>>,
}

impl KernelEngine {
    /// `horizon` is the ladder's top step; records of any length still work.
    pub fn new(m: &LindbladModel, horizon: f64) -> Result<Self, EntropyError> {
        let gens = liouville_generators(m);
        let forward = ExpLadder::with_depth(&gens.g, horizon, KERNEL_LADDER_DEPTH)?;
        let backward = ExpLadder::with_depth(&gens.g_bar_dag, horizon, KERNEL_LADDER_DEPTH)?;
        let max_id = m.jumps().iter().map(|j| j.id).max().unwrap_or(0);
        let mut supers = vec![None; max_id + 1];
        for j in m.jumps() {
            supers[j.id] = Some(jump_superoperator(m, j.id)?);
        }
        let populations = steady_state(m).ok().map(|s| s.populations);
        Ok(Self {
            model: m.clone(),
            horizon,
            forward,
            backward,
            supers,
            populations,
        })
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steady_populations(&self) -> Option<&[f64]> {
        self.populations.as_deref()
    }

    fn log_kernel(&self, ladder: &ExpLadder, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
        v.check(&self.model)?;
        let n = self.model.dim();
        let mut x = vec![C_ZERO; n * n];
        x[vec_index(n, v.initial, v.initial)] = C_ONE;
        let mut scratch = vec![C_ZERO; n * n];
        let mut log_scale = 0.0;
        let mut t = 0.0;
        let rescale = |x: &mut [Complex64], log_scale: &mut f64, at: f64| -> Result<(), EntropyError> {
            let norm = vec_norm(x);
            if !norm.is_finite() {
                return Err(LinalgError::NonFinite(format!("kernel vector at t = {at}")).into());
            }
            if norm == 0.0 {
                return Err(EntropyError::ImpossibleTrajectory(format!("kernel vanished at t = {at}")));
            }
            x.iter_mut().for_each(|z| *z /= norm);
            *log_scale += norm.ln();
            Ok(())
        };
        for e in &v.events {
            ladder.apply_in_place(e.time - t, &mut x, &mut scratch);
            rescale(&mut x, &mut log_scale, e.time)?;
            let sup = self.supers[e.jump_id].as_ref().expect("visible ids checked against the model");
            sup.apply_into(&x, &mut scratch);
            x.copy_from_slice(&scratch);
            rescale(&mut x, &mut log_scale, e.time)?;
            t = e.time;
        }
        ladder.apply_in_place(v.horizon - t, &mut x, &mut scratch);
        rescale(&mut x, &mut log_scale, v.horizon)?;
        let value = x[vec_index(n, v.final_state, v.final_state)];
        if value.im.abs() > IMAGINARY_RESIDUE_TOL {
            return Err(EntropyError::ImaginaryResidue(value.im.abs()));
        }
        if value.re <= 0.0 {
            return Err(EntropyError::ImpossibleTrajectory(format!(
                "final projection onto state {} is {:e}",
                v.final_state, value.re
            )));
        }
        Ok(log_scale + value.re.ln())
    }

    /// Log of the forward kernel (the `dt^M` factor excluded).
    pub fn forward_log_kernel(&self, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
        self.log_kernel(&self.forward, v)
    }

    /// Log of the backward kernel (the `e^{−Δs_env}` factor excluded).
    pub fn backward_log_kernel(&self, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
        self.log_kernel(&self.backward, v)
    }

    /// `Δσ_Y`: forward minus backward log kernel. Exactly zero when no
    /// channel is hidden.
    pub fn hidden_entropy(&self, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
        if !self.model.has_hidden() {
            v.check(&self.model)?;
            return Ok(0.0);
        }
        Ok(self.forward_log_kernel(v)? - self.backward_log_kernel(v)?)
    }

    /// Stochastic system entropy `ln P(a) − ln P(b)` under the steady state.
    pub fn system_entropy(&self, a: usize, b: usize) -> Result<f64, EntropyError> {
        let pops = self.populations.as_deref().ok_or_else(|| {
            EntropyError::Precondition("model has no unique steady state".into())
        })?;
        system_entropy_from(pops, a, b)
    }

    /// Full entropy ledger of one sampled trajectory.
    pub fn ledger(&self, t: &Trajectory, trajectory_index: u64, seed: u64) -> Result<EntropyLedger, EntropyError> {
        let v = visible_filter(&self.model, t);
        let ds_env_visible = v.env_entropy(&self.model)?;
        let dsigma_y = self.hidden_entropy(&v)?;
        let ds_sys = self.system_entropy(t.initial, t.final_state)?;
        Ok(EntropyLedger {
            trajectory_index,
            seed,
            a: t.initial,
            b: t.final_state,
            n_visible: v.events.len(),
            n_hidden: t.events.len() - v.events.len(),
            ds_env_visible,
            ds_env_hidden_actual: Some(hidden_env_entropy(&self.model, t)),
            dsigma_y,
            ds_sys,
            dsigma: ds_env_visible + dsigma_y + ds_sys,
        })
    }
}

/// Log forward kernel of a single record.
pub fn forward_kernel(m: &LindbladModel, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
    KernelEngine::new(m, v.horizon)?.forward_log_kernel(v)
}

/// Log backward kernel of a single record.
pub fn backward_kernel(m: &LindbladModel, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
    KernelEngine::new(m, v.horizon)?.backward_log_kernel(v)
}

/// `Δσ_Y` of a single record.
pub fn hidden_entropy(m: &LindbladModel, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
    KernelEngine::new(m, v.horizon)?.hidden_entropy(v)
}

/// Stochastic system entropy `ln P(a) − ln P(b)` with `P` the model's
/// steady state, the sign for which `⟨e^{−Δs_tot}⟩ = 1`.
pub fn system_entropy(m: &LindbladModel, a: usize, b: usize) -> Result<f64, EntropyError> {
    system_entropy_from(&steady_state(m)?.populations, a, b)
}

pub fn system_entropy_from(populations: &[f64], a: usize, b: usize) -> Result<f64, EntropyError> {
    let p = |i: usize| -> Result<f64, EntropyError> {
        match populations.get(i) {
            Some(&p) if p > 0.0 => Ok(p),
            Some(_) => Err(EntropyError::ZeroProbability(i)),
            None => Err(EntropyError::Precondition(format!("basis index {i} out of range"))),
        }
    };
    Ok(p(a)?.ln() - p(b)?.ln())
}

/// Initial and final basis state of a rank-one visible jump.
fn jump_endpoints(m: &LindbladModel, id: usize) -> Result<(usize, usize), EntropyError> {
    let l = &m.jump(id)?.matrix;
    let n = m.dim();
    let nonzero: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .filter(|&(r, c)| l[(r, c)].norm() != 0.0)
        .collect();
    match nonzero.as_slice() {
        [(post, pre)] => Ok((*pre, *post)),
        _ => Err(EntropyError::Precondition(format!(
            "visible jump {id} does not map a unique basis state (needs perfect feedback on the visible side)"
        ))),
    }
}

fn check_reconstruction_preconditions(m: &LindbladModel, v: &VisibleTrajectory) -> Result<(), EntropyError> {
    v.check(m)?;
    if !is_diagonal(m.hamiltonian()) {
        return Err(EntropyError::Precondition(
            "Hamiltonian must be diagonal in the measurement basis".into(),
        ));
    }
    for id in m.visible_ids() {
        jump_endpoints(m, id)?;
    }
    Ok(())
}

/// Basis states bounding interval `j`: the post-jump state of event `j`
/// (or `a`) and the pre-jump state of event `j + 1` (or `b`).
fn interval_endpoints(m: &LindbladModel, v: &VisibleTrajectory, j: usize) -> Result<(usize, usize), EntropyError> {
    let m_events = v.events.len();
    if j > m_events {
        return Err(EntropyError::Precondition(format!("interval {j} out of range 0..={m_events}")));
    }
    let from = if j == 0 { v.initial } else { jump_endpoints(m, v.events[j - 1].jump_id)?.1 };
    let to = if j == m_events { v.final_state } else { jump_endpoints(m, v.events[j].jump_id)?.0 };
    Ok((from, to))
}

/// Probabilities `p_k` of each hidden channel having bridged interval `j`,
/// in the order of [`LindbladModel::hidden_ids`]. All zero for a same-state
/// interval.
pub fn hidden_transition_probabilities(
    m: &LindbladModel,
    v: &VisibleTrajectory,
    j: usize,
) -> Result<Vec<f64>, EntropyError> {
    check_reconstruction_preconditions(m, v)?;
    let (from, to) = interval_endpoints(m, v, j)?;
    let hidden = m.hidden_ids();
    if from == to {
        return Ok(vec![0.0; hidden.len()]);
    }
    let weights = hidden
        .iter()
        .map(|&k| Ok(m.jump(k)?.matrix[(to, from)].norm_sqr()))
        .collect::<Result<Vec<f64>, EntropyError>>()?;
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(EntropyError::ImpossibleTrajectory(format!(
            "no hidden channel connects {} to {} in interval {j}",
            m.basis_labels()[from],
            m.basis_labels()[to]
        )));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// `p_k` for hidden channel `k` in interval `j`.
pub fn hidden_transition_probability(
    m: &LindbladModel,
    v: &VisibleTrajectory,
    j: usize,
    k: usize,
) -> Result<f64, EntropyError> {
    let pos = m
        .hidden_ids()
        .iter()
        .position(|&h| h == k)
        .ok_or_else(|| EntropyError::Precondition(format!("jump {k} is not hidden")))?;
    Ok(hidden_transition_probabilities(m, v, j)?[pos])
}

/// `Δσ_Y` rebuilt interval by interval as `−ln Σ_k p_k e^{−Δs_k}`;
/// same-state intervals contribute nothing. Needs rank-one visible jumps and
/// a diagonal Hamiltonian.
pub fn hidden_entropy_reconstructed(m: &LindbladModel, v: &VisibleTrajectory) -> Result<f64, EntropyError> {
    check_reconstruction_preconditions(m, v)?;
    let ds: Vec<f64> = m
        .hidden_ids()
        .iter()
        .map(|&k| m.jump(k).map(|j| j.delta_s))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for j in 0..=v.events.len() {
        let (from, to) = interval_endpoints(m, v, j)?;
        if from == to {
            continue;
        }
        let p = hidden_transition_probabilities(m, v, j)?;
        let s: f64 = p.iter().zip(&ds).map(|(p, d)| p * (-d).exp()).sum();
        total -= s.ln();
    }
    Ok(total)
}

/// Per-trajectory entropy accounting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyLedger {
    pub trajectory_index: u64,
    pub seed: u64,
    pub a: usize,
    pub b: usize,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub ds_env_visible: f64,
    /// Hidden environmental entropy of the underlying full trajectory, when
    /// it is known.
    pub ds_env_hidden_actual: Option<f64>,
    pub dsigma_y: f64,
    pub ds_sys: f64,
    /// `ds_env_visible + dsigma_y + ds_sys`.
    pub dsigma: f64,
}

impl EntropyLedger {
    /// Total entropy production of the full trajectory.
    pub fn ds_tot(&self) -> Option<f64> {
        self.ds_env_hidden_actual.map(|h| self.ds_env_visible + h + self.ds_sys)
    }
}

pub const LEDGER_HEADER: [&str; 11] = [
    "trajectory_index",
    "seed",
    "a",
    "b",
    "n_visible",
    "n_hidden",
    "ds_env_visible",
    "ds_env_hidden_actual",
    "dsigma_y",
    "ds_sys",
    "dsigma",
];

pub fn write_ledger_csv<W: Write>(w: W, ledgers: &[EntropyLedger]) -> Result<(), EntropyError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(LEDGER_HEADER)?;
    for l in ledgers {
        out.serialize(l)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self, EntropyError> {
        let n = xs.len();
        if n < 2 {
            return Err(EntropyError::TooFewSamples(n));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        })
    }

    /// `|mean − target| < k·stderr`, or exact equality when the spread is zero.
    pub fn consistent_with(&self, target: f64, k: f64) -> bool {
        let d = (self.mean - target).abs();
        d < k * self.stderr || d == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IftQuantity {
    /// Coarse-grained `Δσ`.
    Dsigma,
    /// Total entropy of the full trajectory.
    DsTot,
}

/// Mean of `e^{−x}` over trajectories, with its standard error.
pub fn ift_estimate(ledgers: &[EntropyLedger], which: IftQuantity) -> Result<Estimate, EntropyError> {
    let xs = ledgers
        .iter()
        .map(|l| match which {
            IftQuantity::Dsigma => Ok((-l.dsigma).exp()),
            IftQuantity::DsTot => l
                .ds_tot()
                .map(|x| (-x).exp())
                .ok_or_else(|| EntropyError::Precondition("hidden entropy of the full trajectory unknown".into())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Estimate::from_samples(&xs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecondLawReport {
    pub ds_env: Estimate,
    pub dsigma_y: Estimate,
    pub ds_sys: Estimate,
    pub dsigma: Estimate,
    /// `Δs_env + Δσ_Y`, the combination bounded below in the stationary state.
    pub env_plus_hidden: Estimate,
    /// `⟨Δσ⟩ < −3·stderr`.
    pub violated: bool,
    /// `⟨Δs_env + Δσ_Y⟩ < −3·stderr`.
    pub env_plus_hidden_violated: bool,
}

pub fn second_law_check(ledgers: &[EntropyLedger]) -> Result<SecondLawReport, EntropyError> {
    let col = |f: &dyn Fn(&EntropyLedger) -> f64| Estimate::from_samples(&ledgers.iter().map(f).collect::<Vec<_>>());
    let ds_env = col(&|l| l.ds_env_visible)?;
    let dsigma_y = col(&|l| l.dsigma_y)?;
    let ds_sys = col(&|l| l.ds_sys)?;
    let dsigma = col(&|l| l.dsigma)?;
    let env_plus_hidden = col(&|l| l.ds_env_visible + l.dsigma_y)?;
    Ok(SecondLawReport {
        ds_env,
        dsigma_y,
        ds_sys,
        dsigma,
        env_plus_hidden,
        violated: dsigma.mean < -3.0 * dsigma.stderr,
        env_plus_hidden_violated: env_plus_hidden.mean < -3.0 * env_plus_hidden.stderr,
    })
}
