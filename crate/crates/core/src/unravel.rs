//! Quantum-jump unraveling: steady state, trajectory sampling and the
//! observer's conditioned state along a visible record.

use std::io::Write;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linops::{
    null_vector, partial_trace_x, unvec, vec_index, vec_norm, ComplexMatrix, ExpLadder, LinalgError, C_ONE, C_ZERO,
    DEFAULT_NULL_TOL,
};
use crate::model::{jump_superoperator, liouville_generators, LindbladModel, ModelError};

#[derive(Debug, Error)]
pub enum UnravelError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("steady state is not unique (singular-value gap {gap:e})")]
    DegenerateSteadyState { gap: f64 },
    #[error("steady state has negative population {value:e} at index {index}")]
    NegativePopulation { index: usize, value: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("state norm became non-finite")]
    NonFiniteNorm,
    #[error("waiting-time sampling failed: {0}")]
    WaitingTime(String),
    #[error("record is impossible under the model: {0}")]
    ImpossibleRecord(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Steady-state populations below this are treated as rounding noise.
const NEGATIVE_POPULATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub jump_id: usize,
    pub time: f64,
}

impl JumpEvent {
    pub fn new(jump_id: usize, time: f64) -> Self {
        Self { jump_id, time }
    }
}

/// Full trajectory: measured initial basis state, every jump, measured final
/// basis state and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: usize,
    pub events: Vec<JumpEvent>,
    pub final_state: usize,
    pub horizon: f64,
}

/// A trajectory as seen by an observer of the visible channels only.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibleTrajectory {
    pub initial: usize,
    pub events: Vec<JumpEvent>,
    pub final_state: usize,
    pub horizon: f64,
}

fn check_record(initial: usize, events: &[JumpEvent], final_state: usize, horizon: f64, dim: usize) -> Result<(), UnravelError> {
    let bad = |msg: String| Err(UnravelError::InvalidTrajectory(msg));
    if !(horizon.is_finite() && horizon > 0.0) {
        return bad(format!("horizon must be positive, got {horizon}"));
    }
    if initial >= dim || final_state >= dim {
        return bad(format!("basis index out of range for dimension {dim}"));
    }
    let mut last = 0.0;
    for e in events {
        if !(e.time > last && e.time < horizon) {
            return bad(format!(
                "event ({}, {}) is not strictly inside ({last}, {horizon})",
                e.jump_id, e.time
            ));
        }
        last = e.time;
    }
    Ok(())
}

impl Trajectory {
    pub fn check(&self, m: &LindbladModel) -> Result<(), UnravelError> {
        check_record(self.initial, &self.events, self.final_state, self.horizon, m.dim())?;
        for e in &self.events {
            m.jump(e.jump_id)?;
        }
        Ok(())
    }
}

impl VisibleTrajectory {
    pub fn new(initial: usize, events: Vec<JumpEvent>, final_state: usize, horizon: f64) -> Self {
        Self {
            initial,
            events,
            final_state,
            horizon,
        }
    }

    /// Checks ordering, ranges and that every event is a visible channel.
    pub fn check(&self, m: &LindbladModel) -> Result<(), UnravelError> {
        check_record(self.initial, &self.events, self.final_state, self.horizon, m.dim())?;
        for e in &self.events {
            if !m.jump(e.jump_id)?.visible {
                return Err(UnravelError::InvalidTrajectory(format!(
                    "jump {} is hidden but appears in a visible record",
                    e.jump_id
                )));
            }
        }
        Ok(())
    }

    /// Shifts every event by `dt`, keeping the endpoints.
    pub fn shifted(&self, dt: f64) -> Self {
        let mut out = self.clone();
        out.events.iter_mut().for_each(|e| e.time += dt);
        out
    }

    /// Visible entropy `Σ Δs_k` over the record.
    pub fn env_entropy(&self, m: &LindbladModel) -> Result<f64, UnravelError> {
        let mut total = 0.0;
        for e in &self.events {
            total += m.jump(e.jump_id)?.delta_s;
        }
        Ok(total)
    }
}

/// Drops hidden events; endpoints and horizon are kept.
pub fn visible_filter(m: &LindbladModel, t: &Trajectory) -> VisibleTrajectory {
    VisibleTrajectory {
        initial: t.initial,
        events: t
            .events
            .iter()
            .filter(|e| m.jump(e.jump_id).map(|j| j.visible).unwrap_or(false))
            .copied()
            .collect(),
        final_state: t.final_state,
        horizon: t.horizon,
    }
}

/// `Σ Δs_k` over the hidden events of a full trajectory.
pub fn hidden_env_entropy(m: &LindbladModel, t: &Trajectory) -> f64 {
    t.events
        .iter()
        .filter_map(|e| m.jump(e.jump_id).ok())
        .filter(|j| !j.visible)
        .map(|j| j.delta_s)
        .sum()
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    /// Diagonal of the trace-one steady state.
    pub populations: Vec<f64>,
    pub rho: ComplexMatrix,
    pub max_offdiag: f64,
    /// Singular-value gap of the full Liouvillian's null space.
    pub gap: f64,
}

/// Unique trace-one fixed point of the full Liouvillian.
pub fn steady_state(m: &LindbladModel) -> Result<SteadyState, UnravelError> {
    let n = m.dim();
    let gens = liouville_generators(m);
    let nv = null_vector(&gens.g_full, DEFAULT_NULL_TOL)?;
    if !nv.is_unique() {
        return Err(UnravelError::DegenerateSteadyState { gap: nv.gap });
    }
    let rho = unvec(&nv.vector, n, n)?;
    let tr = rho.trace();
    if tr.norm() < 1e-12 {
        return Err(UnravelError::DegenerateSteadyState { gap: nv.gap });
    }
    let rho = rho.scale(C_ONE / tr);
    let rho = (&rho + &rho.adjoint()).scale_real(0.5);
    let mut populations = Vec::with_capacity(n);
    for (index, z) in rho.diag().into_iter().enumerate() {
        if z.re < -NEGATIVE_POPULATION_TOL {
            return Err(UnravelError::NegativePopulation { index, value: z.re });
        }
        populations.push(z.re.max(0.0));
    }
    let total: f64 = populations.iter().sum();
    populations.iter_mut().for_each(|p| *p /= total);
    let mut max_offdiag: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_offdiag = max_offdiag.max(rho[(i, j)].norm());
            }
        }
    }
    Ok(SteadyState {
        populations,
        rho,
        max_offdiag,
        gap: nv.gap,
    })
}

/// Per-trajectory seed derived from a global seed, independent of scheduling.
pub fn trajectory_seed(global_seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(global_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn trajectory_rng(global_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(global_seed, index))
}

/// Outcome of a waiting-time draw.
#[derive(Clone, Debug)]
pub enum WaitingTime {
    /// Jump after `dt`; `state` is the unnormalized no-jump state at that time.
    Jump { dt: f64, state: Vec<Complex64> },
    /// No jump within the window; `state` is the unnormalized state at its end.
    Survives { state: Vec<Complex64> },
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Samples full trajectories by the exact waiting-time method.
#[derive(Clone, Debug)]
pub struct TrajectorySampler {
    dim: usize,
    horizon: f64,
    initial: Vec<f64>,
    no_jump: ExpLadder,
    jumps: Vec<(usize, ComplexMatrix)>,
}

impl TrajectorySampler {
    /// Sampler with initial states drawn from the steady state.
    pub fn new(m: &LindbladModel, horizon: f64) -> Result<Self, UnravelError> {
        let ss = steady_state(m)?;
        Self::with_initial_distribution(m, horizon, ss.populations)
    }

    pub fn with_initial_distribution(m: &LindbladModel, horizon: f64, initial: Vec<f64>) -> Result<Self, UnravelError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(UnravelError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if initial.len() != m.dim() || initial.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(UnravelError::InvalidArgument("initial distribution is not a probability vector".into()));
        }
        let generator = m.effective_hamiltonian().scale(Complex64::new(0.0, -1.0));
        Ok(Self {
            dim: m.dim(),
            horizon,
            initial,
            no_jump: ExpLadder::new(&generator, horizon)?,
            jumps: m.jumps().iter().map(|j| (j.id, j.matrix.clone())).collect(),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// Trajectory starting from a steady-state basis state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Trajectory, UnravelError> {
        let dist = WeightedIndex::new(&self.initial)
            .map_err(|e| UnravelError::InvalidArgument(format!("initial distribution: {e}")))?;
        let a = dist.sample(rng);
        self.sample_from(a, rng)
    }

    /// Trajectory starting from basis state `initial`.
    pub fn sample_from<R: Rng + ?Sized>(&self, initial: usize, rng: &mut R) -> Result<Trajectory, UnravelError> {
        if initial >= self.dim {
            return Err(UnravelError::InvalidArgument(format!("initial state {initial} out of range")));
        }
        let mut psi = vec![C_ZERO; self.dim];
        psi[initial] = C_ONE;
        let mut t = 0.0;
        let mut events = Vec::new();
        loop {
            let r: f64 = rng.random();
            match self.waiting_time(&psi, self.horizon - t, r)? {
                WaitingTime::Survives { state } => {
                    let probs: Vec<f64> = state.iter().map(|z| z.norm_sqr()).collect();
                    let dist = WeightedIndex::new(&probs).map_err(|_| UnravelError::NonFiniteNorm)?;
                    return Ok(Trajectory {
                        initial,
                        events,
                        final_state: dist.sample(rng),
                        horizon: self.horizon,
                    });
                }
                WaitingTime::Jump { dt, state } => {
                    let floor = self.no_jump.step_len(self.no_jump.depth());
                    let time = t + dt.max(floor);
                    if time >= self.horizon {
                        continue;
                    }
                    let k = self.choose_channel(&state, rng)?;
                    let next = self.jumps[k].1.apply(&state);
                    let norm = vec_norm(&next);
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(UnravelError::NonFiniteNorm);
                    }
                    psi = next.into_iter().map(|z| z / norm).collect();
                    events.push(JumpEvent::new(self.jumps[k].0, time));
                    t = time;
                }
            }
        }
    }

    /// Solves `‖e^{−iH_eff t}ψ‖² = r` for `t ∈ [0, window]`.
    ///
    /// The survival probability is monotone, so a greedy descent over the
    /// halving ladder is a bisection with resolution `horizon·2^{-40}`.
    pub fn waiting_time(&self, psi: &[Complex64], window: f64, r: f64) -> Result<WaitingTime, UnravelError> {
        if !(0.0..1.0).contains(&r) {
            return Err(UnravelError::WaitingTime(format!("uniform draw {r} outside [0, 1)")));
        }
        let end = self.no_jump.apply(window.max(0.0), psi);
        let s_end = norm_sqr(&end);
        if !s_end.is_finite() {
            return Err(UnravelError::NonFiniteNorm);
        }
        if s_end > r {
            return Ok(WaitingTime::Survives { state: end });
        }
        let mut cur = psi.to_vec();
        let mut cand = vec![C_ZERO; self.dim];
        let mut dt = 0.0;
        for level in 0..=self.no_jump.depth() {
            self.no_jump.step(level).apply_into(&cur, &mut cand);
            let s = norm_sqr(&cand);
            if !s.is_finite() {
                return Err(UnravelError::NonFiniteNorm);
            }
            if s > r {
                std::mem::swap(&mut cur, &mut cand);
                dt += self.no_jump.step_len(level);
            }
        }
        if dt > window {
            return Err(UnravelError::WaitingTime(format!(
                "root {dt} escaped the window {window}"
            )));
        }
        Ok(WaitingTime::Jump { dt, state: cur })
    }

    /// Draws a channel index (position in the model's jump list) with
    /// probability proportional to `‖L_k ψ‖²`.
    pub fn choose_channel<R: Rng + ?Sized>(&self, psi: &[Complex64], rng: &mut R) -> Result<usize, UnravelError> {
        let weights: Vec<f64> = self.channel_weights(psi);
        WeightedIndex::new(&weights)
            .map(|d| d.sample(rng))
            .map_err(|e| UnravelError::WaitingTime(format!("no channel can fire: {e}")))
    }

    /// `‖L_k ψ‖²` for each channel, in model order.
    pub fn channel_weights(&self, psi: &[Complex64]) -> Vec<f64> {
        self.jumps.iter().map(|(_, l)| norm_sqr(&l.apply(psi))).collect()
    }

    pub fn channel_ids(&self) -> Vec<usize> {
        self.jumps.iter().map(|(id, _)| *id).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Grid,
    PreJump,
    PostJump,
}

#[derive(Clone, Debug)]
pub struct SeriesRow {
    pub t: f64,
    pub kind: RowKind,
    /// Conditioned joint state, normalized to unit trace.
    pub rho: ComplexMatrix,
    /// `tr_X ρ`.
    pub rho_y: ComplexMatrix,
    /// Log of the accumulated trace removed by renormalization.
    pub lognorm: f64,
}

impl SeriesRow {
    /// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of a two-level `ρ_Y`, with `σz`
    /// positive on index 1.
    pub fn bloch(&self) -> [f64; 3] {
        let r = &self.rho_y;
        let c01 = r[(0, 1)];
        [2.0 * c01.re, -2.0 * c01.im, (r[(1, 1)] - r[(0, 0)]).re]
    }
}

#[derive(Clone, Debug)]
pub struct ConditionedSeries {
    pub rows: Vec<SeriesRow>,
    pub final_state: usize,
}

pub const SERIES_HEADER: [&str; 10] = [
    "t", "p00", "p01", "p10", "p11", "pY0", "pY1", "ReRhoY01", "ImRhoY01", "lognorm",
];
pub const BLOCH_HEADER: [&str; 3] = ["bloch_x", "bloch_y", "bloch_z"];

impl ConditionedSeries {
    /// `log` of the record's kernel: the accumulated norm at `T` times the
    /// Born weight of the measured final state.
    pub fn record_log_probability(&self) -> f64 {
        let last = self.rows.last().expect("series always has rows");
        last.lognorm + last.rho[(self.final_state, self.final_state)].re.ln()
    }

    /// Writes the series as CSV; Bloch columns are appended when requested.
    pub fn write_csv<W: Write>(&self, w: W, include_bloch: bool) -> Result<(), UnravelError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = SERIES_HEADER.to_vec();
        if include_bloch {
            header.extend(BLOCH_HEADER);
        }
        out.write_record(&header)?;
        for row in &self.rows {
            let d = row.rho.diag();
            let mut rec = vec![row.t];
            rec.extend(d.iter().take(4).map(|z| z.re));
            rec.extend((d.len()..4).map(|_| 0.0));
            rec.push(row.rho_y[(0, 0)].re);
            rec.push(if row.rho_y.rows() > 1 { row.rho_y[(1, 1)].re } else { 0.0 });
            let c01 = if row.rho_y.rows() > 1 { row.rho_y[(0, 1)] } else { C_ZERO };
            rec.push(c01.re);
            rec.push(c01.im);
            rec.push(row.lognorm);
            if include_bloch {
                rec.extend(row.bloch());
            }
            out.write_record(rec.iter().map(|x| format!("{x:.12e}")))?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Evolves the observer's unnormalized state along a visible record: the
/// visible-record generator between events, `𝓙_k` at each event, with
/// renormalization to unit trace after every step.
pub fn conditioned_state_series(
    m: &LindbladModel,
    v: &VisibleTrajectory,
    grid_dt: f64,
) -> Result<ConditionedSeries, UnravelError> {
    if !(grid_dt.is_finite() && grid_dt > 0.0) {
        return Err(UnravelError::InvalidArgument(format!("grid_dt must be positive, got {grid_dt}")));
    }
    v.check(m)?;
    let n = m.dim();
    let (dim_x, dim_y) = m.subsystem_dims();
    let gens = liouville_generators(m);
    let ladder = ExpLadder::new(&gens.g, v.horizon)?;
    let supers = v
        .events
        .iter()
        .map(|e| jump_superoperator(m, e.jump_id))
        .collect::<Result<Vec<_>, _>>()?;

    let mut state = vec![C_ZERO; n * n];
    state[vec_index(n, v.initial, v.initial)] = C_ONE;
    let mut scratch = vec![C_ZERO; n * n];
    let mut lognorm = 0.0;
    let mut t = 0.0;
    let mut rows = Vec::new();

    let emit = |t: f64, kind, state: &[Complex64], lognorm: f64, rows: &mut Vec<SeriesRow>| -> Result<(), UnravelError> {
        let rho = unvec(state, n, n)?;
        let rho_y = partial_trace_x(&rho, dim_x, dim_y)?;
        rows.push(SeriesRow {
            t,
            kind,
            rho,
            rho_y,
            lognorm,
        });
        Ok(())
    };
    let renormalize = |state: &mut [Complex64], lognorm: &mut f64, what: &str| -> Result<(), UnravelError> {
        let tr: Complex64 = (0..n).map(|i| state[vec_index(n, i, i)]).sum();
        if !tr.re.is_finite() {
            return Err(UnravelError::NonFiniteNorm);
        }
        if tr.re <= 0.0 {
            return Err(UnravelError::ImpossibleRecord(format!("conditioned state vanished {what}")));
        }
        state.iter_mut().for_each(|z| *z /= tr.re);
        *lognorm += tr.re.ln();
        Ok(())
    };

    emit(0.0, RowKind::Grid, &state, lognorm, &mut rows)?;
    let n_grid = (v.horizon / grid_dt).floor() as usize;
    let mut grid: Vec<f64> = (1..=n_grid).map(|i| i as f64 * grid_dt).filter(|&g| g < v.horizon).collect();
    grid.push(v.horizon);
    let mut gi = 0;
    let mut ei = 0;
    while gi < grid.len() || ei < v.events.len() {
        let take_event = ei < v.events.len() && (gi >= grid.len() || v.events[ei].time <= grid[gi]);
        let stop = if take_event { v.events[ei].time } else { grid[gi] };
        ladder.apply_in_place(stop - t, &mut state, &mut scratch);
        t = stop;
        renormalize(&mut state, &mut lognorm, &format!("before t = {t}"))?;
        if take_event {
            emit(t, RowKind::PreJump, &state, lognorm, &mut rows)?;
            supers[ei].apply_into(&state, &mut scratch);
            state.copy_from_slice(&scratch);
            renormalize(
                &mut state,
                &mut lognorm,
                &format!("at jump {} (t = {t})", v.events[ei].jump_id),
            )?;
            emit(t, RowKind::PostJump, &state, lognorm, &mut rows)?;
            ei += 1;
        } else {
            emit(t, RowKind::Grid, &state, lognorm, &mut rows)?;
            gi += 1;
        }
    }
    Ok(ConditionedSeries {
        rows,
        final_state: v.final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{expm, vec};
    use crate::model::{build_demon_model, DemonParams};
    use approx::assert_relative_eq;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn demon(gx: f64, gy: f64) -> LindbladModel {
        build_demon_model(&DemonParams::default().with_gammas(gx, gy)).unwrap()
    }

    fn reference_record() -> VisibleTrajectory {
        VisibleTrajectory::new(
            0,
            vec![JumpEvent::new(4, 0.9), JumpEvent::new(1, 1.5), JumpEvent::new(4, 2.4)],
            3,
            3.0,
        )
    }

    /// Stationary populations of a qubit coupled to two baths with relaxation
    /// rates `d_i` and excitation rates `u_i`: `p_e = Σu / (Σu + Σd)`.
    fn two_bath_qubit(p: &DemonParams, betas: [f64; 2], rates: [f64; 2]) -> [f64; 2] {
        let mut up = 0.0;
        let mut down = 0.0;
        for (b, g) in betas.iter().zip(rates) {
            let n = 1.0 / ((b * p.omega0).exp() - 1.0);
            up += g * n;
            down += g * (n + 1.0);
        }
        [down / (up + down), up / (up + down)]
    }

    #[test]
    fn steady_state_decoupled_is_product() {
        let p = DemonParams::default().with_gammas(1.0, 1.0);
        let ss = steady_state(&build_demon_model(&p).unwrap()).unwrap();
        let x = two_bath_qubit(&p, [p.beta_x_hot, p.beta_x_cold], [p.bath_rates[0], p.bath_rates[1]]);
        let y = two_bath_qubit(&p, [p.beta_y_hot, p.beta_y_cold], [p.bath_rates[2], p.bath_rates[3]]);
        for (xi, px) in x.iter().enumerate() {
            for (yi, py) in y.iter().enumerate() {
                assert_relative_eq!(ss.populations[2 * xi + yi], px * py, epsilon = 1e-12);
            }
        }
        assert!(ss.max_offdiag < 1e-12);
        assert!(ss.gap > 1e6);
    }

    #[test]
    fn steady_state_infinite_temperature_is_uniform() {
        let b = 1e-6;
        let p = DemonParams {
            beta_x_hot: b,
            beta_x_cold: b,
            beta_y_hot: b,
            beta_y_cold: b,
            ..Default::default()
        };
        let ss = steady_state(&build_demon_model(&p).unwrap()).unwrap();
        for q in ss.populations {
            assert!((q - 0.25).abs() < 1e-4, "{q}");
        }
    }

    #[test]
    fn steady_state_matches_long_time_propagation() {
        let m = demon(0.0, 0.0);
        let ss = steady_state(&m).unwrap();
        let g = liouville_generators(&m).g_full;
        let rho0 = vec(&ComplexMatrix::identity(4).scale_real(0.25));
        let out = unvec(expm(&g, 50.0).unwrap().apply(rho0.as_slice()).as_slice(), 4, 4).unwrap();
        for i in 0..4 {
            assert!((out[(i, i)].re - ss.populations[i]).abs() < 1e-8);
        }
        let total: f64 = ss.populations.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(ss.max_offdiag < 1e-12);
    }

    #[test]
    fn zero_rate_model_has_degenerate_steady_state() {
        let m = build_demon_model(&DemonParams {
            bath_rates: [0.0; 4],
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(steady_state(&m), Err(UnravelError::DegenerateSteadyState { .. })));
    }

    #[test]
    fn zero_rate_model_never_jumps() {
        let m = build_demon_model(&DemonParams {
            bath_rates: [0.0; 4],
            ..Default::default()
        })
        .unwrap();
        let s = TrajectorySampler::with_initial_distribution(&m, 3.0, vec![0.25; 4]).unwrap();
        let mut rng = trajectory_rng(1, 0);
        for a in 0..4 {
            for _ in 0..20 {
                let t = s.sample_from(a, &mut rng).unwrap();
                assert!(t.events.is_empty());
                assert_eq!(t.final_state, a);
            }
        }
    }

    #[test]
    fn visible_filter_examples() {
        let m = demon(0.0, 0.0);
        let t = Trajectory {
            initial: 0,
            events: vec![JumpEvent::new(4, 0.9), JumpEvent::new(6, 1.1), JumpEvent::new(1, 1.5)],
            final_state: 1,
            horizon: 3.0,
        };
        let v = visible_filter(&m, &t);
        assert_eq!(v.events, vec![JumpEvent::new(4, 0.9), JumpEvent::new(1, 1.5)]);
        assert_eq!((v.initial, v.final_state, v.horizon), (0, 1, 3.0));
        let all = m.with_all_visible();
        assert_eq!(visible_filter(&all, &t).events, t.events);
        let empty = Trajectory {
            events: vec![],
            ..t.clone()
        };
        assert!(visible_filter(&m, &empty).events.is_empty());
    }

    #[test]
    fn hidden_env_entropy_examples() {
        let m = demon(0.0, 0.0);
        let mk = |ids: &[usize]| Trajectory {
            initial: 0,
            events: ids.iter().enumerate().map(|(i, &k)| JumpEvent::new(k, 0.1 * (i + 1) as f64)).collect(),
            final_state: 0,
            horizon: 3.0,
        };
        assert_relative_eq!(hidden_env_entropy(&m, &mk(&[6, 7, 6])), 3.0, epsilon = 1e-15);
        assert_eq!(hidden_env_entropy(&m, &mk(&[4, 1])), 0.0);
        assert_eq!(hidden_env_entropy(&m, &mk(&[5, 6])), 0.0);
    }

    #[test]
    fn seeding_is_deterministic() {
        let m = demon(0.5, 0.5);
        let s = TrajectorySampler::new(&m, 3.0).unwrap();
        let a = s.sample(&mut trajectory_rng(42, 17)).unwrap();
        let b = s.sample(&mut trajectory_rng(42, 17)).unwrap();
        assert_eq!(a, b);
        assert_ne!(trajectory_seed(42, 17), trajectory_seed(42, 18));
        assert_ne!(trajectory_seed(42, 17), trajectory_seed(43, 17));
    }

    /// Demon flips available through hidden channels at fixed system state.
    fn hidden_reachable(m: &LindbladModel, from: usize, to: usize) -> bool {
        let mut seen = [false; 4];
        let mut stack = vec![from];
        while let Some(s) = stack.pop() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            for j in m.jumps().iter().filter(|j| !j.visible) {
                for dest in 0..4 {
                    if j.matrix[(dest, s)].norm() > 0.0 {
                        stack.push(dest);
                    }
                }
            }
        }
        seen[to]
    }

    #[test]
    fn perfect_feedback_records_follow_transition_graph() {
        let m = demon(0.0, 0.0);
        let s = TrajectorySampler::new(&m, 3.0).unwrap();
        for i in 0..2000 {
            let t = s.sample(&mut trajectory_rng(5, i)).unwrap();
            let v = visible_filter(&m, &t);
            let mut cur = v.initial;
            for e in &v.events {
                let l = &m.jump(e.jump_id).unwrap().matrix;
                let (pre, post) = (0..4)
                    .flat_map(|c| (0..4).map(move |r| (c, r)))
                    .find(|&(c, r)| l[(r, c)].norm() > 0.0)
                    .unwrap();
                assert!(hidden_reachable(&m, cur, pre), "trajectory {i}: {cur} cannot reach {pre}");
                cur = post;
            }
            assert!(hidden_reachable(&m, cur, v.final_state));
        }
    }

    #[test]
    fn waiting_time_distribution_matches_survival() {
        // Kolmogorov–Smirnov against the exact survival curve of a fixed state.
        let m = demon(0.3, 0.6);
        let horizon = 3.0;
        let s = TrajectorySampler::new(&m, horizon).unwrap();
        let psi: Vec<Complex64> = [0.5, 0.5, 0.5, 0.5].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let heff = m.effective_hamiltonian().scale(Complex64::new(0.0, -1.0));
        let survival = |t: f64| norm_sqr(&expm(&heff, t).unwrap().apply(&psi));
        let window = 10.0;
        let s_window = survival(window);
        let mut rng = trajectory_rng(99, 0);
        let n = 100_000;
        let mut times: Vec<f64> = (0..n)
            .map(|_| match s.waiting_time(&psi, window, rng.random()).unwrap() {
                WaitingTime::Jump { dt, .. } => dt,
                WaitingTime::Survives { .. } => f64::INFINITY,
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let cdf = |t: f64| if t.is_infinite() { 1.0 } else { 1.0 - survival(t) };
        let mut ks: f64 = 0.0;
        for (i, &t) in times.iter().enumerate().step_by(50) {
            if t.is_infinite() {
                ks = ks.max(((i as f64) / n as f64 - (1.0 - s_window)).abs());
                break;
            }
            let f = cdf(t);
            ks = ks.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn channel_frequencies_match_weights() {
        let m = demon(0.4, 0.7);
        let s = TrajectorySampler::new(&m, 3.0).unwrap();
        let psi: Vec<Complex64> = [0.3, -0.6, 0.5, 0.2]
            .iter()
            .map(|&x| Complex64::new(x, 0.1))
            .collect();
        let w = s.channel_weights(&psi);
        // direct oracle ⟨ψ|L†L|ψ⟩
        for (k, j) in m.jumps().iter().enumerate() {
            let ldl = &j.matrix.adjoint() * &j.matrix;
            let e: Complex64 = psi.iter().zip(ldl.apply(&psi)).map(|(a, b)| a.conj() * b).sum();
            assert_relative_eq!(w[k], e.re, epsilon = 1e-14);
        }
        let total: f64 = w.iter().sum();
        let n = 200_000;
        let mut counts = [0usize; 8];
        let mut rng = trajectory_rng(3, 3);
        for _ in 0..n {
            counts[s.choose_channel(&psi, &mut rng).unwrap()] += 1;
        }
        for k in 0..8 {
            let p = w[k] / total;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[k] as f64 / n as f64 - p).abs() < 3.0 * sd + 1e-12, "channel {}", k + 1);
        }
    }

    #[test]
    fn coupled_demon_keeps_demon_state_diagonal() {
        let m = demon(0.5, 0.5);
        let series = conditioned_state_series(&m, &reference_record(), 0.05).unwrap();
        for row in &series.rows {
            assert!(row.rho_y[(0, 1)].norm() < 1e-12, "coherence at t = {}", row.t);
            assert_relative_eq!(row.rho_y.trace().re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn perfect_feedback_visible_jump_purifies_demon() {
        let m = demon(0.0, 0.0);
        let series = conditioned_state_series(&m, &reference_record(), 0.05).unwrap();
        let post: Vec<_> = series.rows.iter().filter(|r| r.kind == RowKind::PostJump).collect();
        assert_eq!(post.len(), 3);
        for row in post {
            let purity = (&row.rho_y * &row.rho_y).trace().re;
            assert!((purity - 1.0).abs() < 1e-12, "purity {purity} at {}", row.t);
        }
    }

    #[test]
    fn decoupled_visible_jumps_leave_demon_unchanged() {
        let m = demon(1.0, 1.0);
        let series = conditioned_state_series(&m, &reference_record(), 0.05).unwrap();
        let rows = &series.rows;
        for w in rows.windows(2) {
            if w[0].kind == RowKind::PreJump && w[1].kind == RowKind::PostJump {
                assert!(w[0].rho_y.max_abs_diff(&w[1].rho_y) < 1e-12);
            }
        }
    }

    #[test]
    fn series_rejects_bad_input() {
        let m = demon(0.0, 0.0);
        assert!(conditioned_state_series(&m, &reference_record(), 0.0).is_err());
        let late = VisibleTrajectory::new(0, vec![JumpEvent::new(4, 3.5)], 2, 3.0);
        assert!(matches!(
            conditioned_state_series(&m, &late, 0.1),
            Err(UnravelError::InvalidTrajectory(_))
        ));
        let hidden = VisibleTrajectory::new(0, vec![JumpEvent::new(6, 1.0)], 1, 3.0);
        assert!(conditioned_state_series(&m, &hidden, 0.1).is_err());
        // |g,0⟩ cannot relax the system
        let impossible = VisibleTrajectory::new(0, vec![JumpEvent::new(1, 1.0)], 1, 3.0);
        assert!(matches!(
            conditioned_state_series(&m, &impossible, 0.1),
            Err(UnravelError::ImpossibleRecord(_))
        ));
    }

    #[test]
    fn drive_creates_demon_coherence() {
        let m = build_demon_model(&DemonParams {
            drive: true,
            ..DemonParams::default().with_gammas(0.5, 0.5)
        })
        .unwrap();
        let series = conditioned_state_series(&m, &reference_record(), 0.05).unwrap();
        assert!(series.rows.iter().any(|r| r.rho_y[(0, 1)].im.abs() > 1e-3));
        let mut buf = Vec::new();
        series.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,p00,p01,p10,p11,pY0,pY1,ReRhoY01,ImRhoY01,lognorm,bloch_x,bloch_y,bloch_z\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn determinism_across_seeds(global in any::<u64>(), index in 0u64..1000) {
            let m = demon(0.25, 0.75);
            let s = TrajectorySampler::new(&m, 3.0).unwrap();
            let a = s.sample(&mut trajectory_rng(global, index)).unwrap();
            let b = s.sample(&mut trajectory_rng(global, index)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.check(&m).is_ok());
        }
    }
}
