//! Lindblad models with paired, entropy-labelled jump operators.
//!
//! Each jump `k` carries the environmental entropy `Δs_k` it produces, the id
//! of its complementary jump `k̃` and a visibility tag. The operator form of
//! local detailed balance reads `L_k = L_k̃† e^{Δs_k/2}`.
//!
//! [`build_demon_model`] constructs the two-qubit autonomous demon: a system
//! qubit X exchanging energy with a hot and a cold bath (jumps 1 to 4, visible)
//! and a demon qubit Y doing the same with its own pair of baths (jumps 5 to 8,
//! hidden). The couplings `γ_X`, `γ_Y ∈ [0, 1]` suppress the transitions that
//! would otherwise undo the demon's feedback, so `γ = 0` is perfect feedback
//! and `γ = 1` decouples the qubits.

use std::collections::BTreeMap;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linops::{kron, ComplexMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model structure: {0}")]
    InvalidStructure(String),
    #[error("unknown jump id {0}")]
    UnknownJump(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One jump channel.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    /// 1-based channel id.
    pub id: usize,
    pub matrix: ComplexMatrix,
    /// Environmental entropy produced by the jump, in units of `k_B`.
    pub delta_s: f64,
    pub partner_id: usize,
    pub visible: bool,
}

/// Hamiltonian plus jump channels on a finite Hilbert space `X ⊗ Y`.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    dim: usize,
    hamiltonian: ComplexMatrix,
    jumps: Vec<JumpOperator>,
    basis_labels: Vec<String>,
    dim_x: usize,
    dim_y: usize,
}

const HERMITIAN_TOL: f64 = 1e-12;
const ANTISYMMETRY_TOL: f64 = 1e-12;

impl LindbladModel {
    /// Validates the structural invariants: Hermitian `H`, consistent shapes,
    /// unique ids, involutive partnering with antisymmetric `Δs` and matching
    /// visibility. Detailed balance itself is reported, not enforced; see
    /// [`validate_detailed_balance`].
    pub fn new(
        hamiltonian: ComplexMatrix,
        jumps: Vec<JumpOperator>,
        basis_labels: Vec<String>,
    ) -> Result<Self, ModelError> {
        let dim = hamiltonian.rows();
        if !hamiltonian.is_square() {
            return Err(ModelError::InvalidStructure("Hamiltonian is not square".into()));
        }
        if !hamiltonian.is_finite() || !hamiltonian.is_hermitian(HERMITIAN_TOL) {
            return Err(ModelError::InvalidStructure("Hamiltonian is not Hermitian".into()));
        }
        if basis_labels.len() != dim {
            return Err(ModelError::InvalidStructure(format!(
                "{} basis labels for dimension {dim}",
                basis_labels.len()
            )));
        }
        let mut by_id = BTreeMap::new();
        for (pos, j) in jumps.iter().enumerate() {
            if j.id == 0 {
                return Err(ModelError::InvalidStructure("jump ids are 1-based".into()));
            }
            if j.matrix.rows() != dim || j.matrix.cols() != dim {
                return Err(ModelError::InvalidStructure(format!("jump {} has wrong shape", j.id)));
            }
            if !j.matrix.is_finite() || !j.delta_s.is_finite() {
                return Err(ModelError::InvalidStructure(format!("jump {} is not finite", j.id)));
            }
            if by_id.insert(j.id, pos).is_some() {
                return Err(ModelError::InvalidStructure(format!("duplicate jump id {}", j.id)));
            }
        }
        for j in &jumps {
            let partner = by_id
                .get(&j.partner_id)
                .map(|&p| &jumps[p])
                .ok_or_else(|| ModelError::InvalidStructure(format!("jump {} has no partner {}", j.id, j.partner_id)))?;
            if partner.partner_id != j.id {
                return Err(ModelError::InvalidStructure(format!(
                    "partnering of jump {} is not symmetric",
                    j.id
                )));
            }
            if (j.delta_s + partner.delta_s).abs() > ANTISYMMETRY_TOL * (1.0 + j.delta_s.abs()) {
                return Err(ModelError::InvalidStructure(format!(
                    "entropies of pair ({}, {}) are not antisymmetric",
                    j.id, partner.id
                )));
            }
            if j.visible != partner.visible {
                return Err(ModelError::InvalidStructure(format!(
                    "pair ({}, {}) splits across visible and hidden sets",
                    j.id, partner.id
                )));
            }
        }
        Ok(Self {
            dim,
            hamiltonian,
            jumps,
            basis_labels,
            dim_x: dim,
            dim_y: 1,
        })
    }

    /// Declares the `X ⊗ Y` factorisation used for partial traces.
    pub fn with_subsystems(mut self, dim_x: usize, dim_y: usize) -> Result<Self, ModelError> {
        if dim_x * dim_y != self.dim {
            return Err(ModelError::InvalidStructure(format!(
                "{dim_x}x{dim_y} does not factor dimension {}",
                self.dim
            )));
        }
        self.dim_x = dim_x;
        self.dim_y = dim_y;
        Ok(self)
    }

    /// Same model with every channel marked visible.
    pub fn with_all_visible(&self) -> Self {
        let mut out = self.clone();
        out.jumps.iter_mut().for_each(|j| j.visible = true);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subsystem_dims(&self) -> (usize, usize) {
        (self.dim_x, self.dim_y)
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    pub fn basis_labels(&self) -> &[String] {
        &self.basis_labels
    }

    pub fn basis_index(&self, label: &str) -> Option<usize> {
        self.basis_labels.iter().position(|l| l == label)
    }

    pub fn jump(&self, id: usize) -> Result<&JumpOperator, ModelError> {
        self.jumps.iter().find(|j| j.id == id).ok_or(ModelError::UnknownJump(id))
    }

    pub fn visible_ids(&self) -> Vec<usize> {
        self.jumps.iter().filter(|j| j.visible).map(|j| j.id).collect()
    }

    pub fn hidden_ids(&self) -> Vec<usize> {
        self.jumps.iter().filter(|j| !j.visible).map(|j| j.id).collect()
    }

    pub fn has_hidden(&self) -> bool {
        self.jumps.iter().any(|j| !j.visible)
    }

    /// `H_eff = H − (i/2) Σ_k L_k† L_k`.
    pub fn effective_hamiltonian(&self) -> ComplexMatrix {
        let mut k = ComplexMatrix::zeros(self.dim, self.dim);
        for j in &self.jumps {
            k += &(&j.matrix.adjoint() * &j.matrix);
        }
        &self.hamiltonian - &k.scale(Complex64::new(0.0, 0.5))
    }
}

/// Parameters of the two-qubit demon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemonParams {
    pub omega0: f64,
    pub beta_x_hot: f64,
    pub beta_x_cold: f64,
    pub beta_y_hot: f64,
    pub beta_y_cold: f64,
    /// Suppression of the system transitions that undo the feedback.
    pub coupling_gamma_x: f64,
    /// Suppression of the demon transitions that undo the feedback.
    pub coupling_gamma_y: f64,
    /// Strength of the `|g,1⟩⟨e,0| + h.c.` exchange term.
    pub lambda: f64,
    /// Bath coupling strengths in the order X hot, X cold, Y hot, Y cold.
    pub bath_rates: [f64; 4],
    /// Adds `drive_strength · 𝟙 ⊗ (σ₊ + σ₋)` to the Hamiltonian.
    pub drive: bool,
    pub drive_strength: f64,
}

impl Default for DemonParams {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            beta_x_hot: 1.0,
            beta_x_cold: 2.0,
            beta_y_hot: 0.5,
            beta_y_cold: 4.0,
            coupling_gamma_x: 0.0,
            coupling_gamma_y: 0.0,
            lambda: 0.0,
            bath_rates: [1.0; 4],
            drive: false,
            drive_strength: 1.0,
        }
    }
}

/// Above this `λ / ω₀` the weak-coupling bath model is questionable.
pub const LAMBDA_WARN_RATIO: f64 = 0.2;

impl DemonParams {
    pub fn with_gammas(mut self, gamma_x: f64, gamma_y: f64) -> Self {
        self.coupling_gamma_x = gamma_x;
        self.coupling_gamma_y = gamma_y;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParameter(msg));
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return bad(format!("omega0 must be positive, got {}", self.omega0));
        }
        for (name, b) in [
            ("beta_x_hot", self.beta_x_hot),
            ("beta_x_cold", self.beta_x_cold),
            ("beta_y_hot", self.beta_y_hot),
            ("beta_y_cold", self.beta_y_cold),
        ] {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("{name} must be positive, got {b}"));
            }
        }
        for (name, g) in [
            ("coupling_gamma_x", self.coupling_gamma_x),
            ("coupling_gamma_y", self.coupling_gamma_y),
        ] {
            if !(0.0..=1.0).contains(&g) {
                return bad(format!("{name} must lie in [0, 1], got {g}"));
            }
        }
        if let Some(r) = self.bath_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return bad(format!("bath rates must be non-negative, got {r}"));
        }
        if !self.lambda.is_finite() {
            return bad(format!("lambda must be finite, got {}", self.lambda));
        }
        if !self.drive_strength.is_finite() {
            return bad(format!("drive_strength must be finite, got {}", self.drive_strength));
        }
        Ok(())
    }

    /// Mean occupation `n̄ = 1 / (e^{βω₀} − 1)`.
    pub fn occupation(&self, beta: f64) -> f64 {
        1.0 / (beta * self.omega0).exp_m1()
    }

    /// Jump amplitudes `γ_1..γ_8`: odd ids relax at `√(Γ(n̄+1))`, even ids
    /// excite at `√(Γ n̄)`.
    pub fn jump_rates(&self) -> [f64; 8] {
        let betas = [self.beta_x_hot, self.beta_x_cold, self.beta_y_hot, self.beta_y_cold];
        let mut out = [0.0; 8];
        for (bath, (&beta, &rate)) in betas.iter().zip(&self.bath_rates).enumerate() {
            let n = self.occupation(beta);
            out[2 * bath] = (rate * (n + 1.0)).sqrt();
            out[2 * bath + 1] = (rate * n).sqrt();
        }
        out
    }

    /// `Δs_1..Δs_8`.
    pub fn jump_entropies(&self) -> [f64; 8] {
        let w = self.omega0;
        let (xh, xc, yh, yc) = (
            self.beta_x_hot * w,
            self.beta_x_cold * w,
            self.beta_y_hot * w,
            self.beta_y_cold * w,
        );
        [xh, -xh, xc, -xc, yh, -yh, yc, -yc]
    }
}

/// Basis labels of the demon model, in index order.
pub const DEMON_BASIS: [&str; 4] = ["g0", "g1", "e0", "e1"];

fn real(rows: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_real(rows, rows, entries).expect("static matrix shape")
}

/// `|e⟩⟨g|` with `|g⟩` at index 0.
pub fn sigma_plus() -> ComplexMatrix {
    real(2, &[0.0, 0.0, 1.0, 0.0])
}

/// `|g⟩⟨e|`.
pub fn sigma_minus() -> ComplexMatrix {
    real(2, &[0.0, 1.0, 0.0, 0.0])
}

/// `diag(−1, +1)`: ground state has negative energy.
pub fn sigma_z() -> ComplexMatrix {
    real(2, &[-1.0, 0.0, 0.0, 1.0])
}

/// Builds the two-qubit demon. Jumps 1 to 4 act on X and are visible; jumps
/// 5 to 8 act on Y and are hidden.
pub fn build_demon_model(p: &DemonParams) -> Result<LindbladModel, ModelError> {
    p.validate()?;
    if p.lambda.abs() > LAMBDA_WARN_RATIO * p.omega0 {
        warn!(
            "lambda = {} exceeds {} * omega0; the local bath model may be inaccurate",
            p.lambda, LAMBDA_WARN_RATIO
        );
    }
    let id2 = ComplexMatrix::identity(2);
    let (sp, sm, sz) = (sigma_plus(), sigma_minus(), sigma_z());
    let gx = p.coupling_gamma_x;
    let gy = p.coupling_gamma_y;
    // projectors weighted by the feedback suppression
    let demon_one_open = ComplexMatrix::from_real_diag(&[gx, 1.0]);
    let demon_zero_open = ComplexMatrix::from_real_diag(&[1.0, gx]);
    let system_e_open = ComplexMatrix::from_real_diag(&[gy, 1.0]);
    let system_g_open = ComplexMatrix::from_real_diag(&[1.0, gy]);

    let rates = p.jump_rates();
    let ds = p.jump_entropies();
    let shapes = [
        kron(&sm, &demon_one_open),
        kron(&sp, &demon_one_open),
        kron(&sm, &demon_zero_open),
        kron(&sp, &demon_zero_open),
        kron(&system_e_open, &sm),
        kron(&system_e_open, &sp),
        kron(&system_g_open, &sm),
        kron(&system_g_open, &sp),
    ];
    let jumps = shapes
        .into_iter()
        .enumerate()
        .map(|(i, shape)| {
            let id = i + 1;
            JumpOperator {
                id,
                matrix: shape.scale_real(rates[i]),
                delta_s: ds[i],
                partner_id: if id % 2 == 1 { id + 1 } else { id - 1 },
                visible: id <= 4,
            }
        })
        .collect();

    let mut h = (&kron(&sz, &id2) + &kron(&id2, &sz)).scale_real(p.omega0 / 2.0);
    // |g,1⟩ = 1, |e,0⟩ = 2
    h[(1, 2)] += p.lambda;
    h[(2, 1)] += p.lambda;
    if p.drive {
        h += &kron(&id2, &(&sp + &sm)).scale_real(p.drive_strength);
    }
    LindbladModel::new(h, jumps, DEMON_BASIS.iter().map(|s| s.to_string()).collect())?.with_subsystems(2, 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairResidual {
    pub id: usize,
    pub partner_id: usize,
    /// `max |L_k − L_k̃† e^{Δs_k/2}|`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetailedBalanceReport {
    pub pairs: Vec<PairResidual>,
}

impl DetailedBalanceReport {
    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }

    pub fn residual(&self, id: usize) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.id == id || p.partner_id == id)
            .map(|p| p.residual)
    }
}

/// Residual of `L_k = L_k̃† e^{Δs_k/2}` for each complementary pair, listed
/// once per pair under its smaller id.
pub fn validate_detailed_balance(m: &LindbladModel) -> DetailedBalanceReport {
    let pairs = m
        .jumps()
        .iter()
        .filter(|j| j.id < j.partner_id)
        .map(|j| {
            let partner = m.jump(j.partner_id).expect("partners validated at construction");
            let expected = partner.matrix.adjoint().scale_real((j.delta_s / 2.0).exp());
            PairResidual {
                id: j.id,
                partner_id: j.partner_id,
                residual: j.matrix.max_abs_diff(&expected),
            }
        })
        .collect();
    DetailedBalanceReport { pairs }
}

/// Liouville-space generators of a model.
#[derive(Clone, Debug)]
pub struct Generators {
    /// `−i(𝟙⊗H − Hᵀ⊗𝟙)`.
    pub h_cal: ComplexMatrix,
    /// `−½ Σ_k (𝟙⊗L_k†L_k + (L_k†L_k)ᵀ⊗𝟙)`.
    pub l_nj: ComplexMatrix,
    /// `Σ_{hidden} L_k*⊗L_k`.
    pub l_y: ComplexMatrix,
    /// `Σ_{visible} L_k*⊗L_k`.
    pub l_x: ComplexMatrix,
    /// Visible-record generator `h_cal + l_nj + l_y`.
    pub g: ComplexMatrix,
    /// Backward generator `h_cal + l_nj + l_y†`.
    pub g_bar_dag: ComplexMatrix,
    /// Full Liouvillian `g + l_x`.
    pub g_full: ComplexMatrix,
}

pub fn liouville_generators(m: &LindbladModel) -> Generators {
    let n = m.dim();
    let id = ComplexMatrix::identity(n);
    let h = m.hamiltonian();
    let h_cal = (&kron(&id, h) - &kron(&h.transpose(), &id)).scale(Complex64::new(0.0, -1.0));
    let mut k = ComplexMatrix::zeros(n, n);
    let mut l_y = ComplexMatrix::zeros(n * n, n * n);
    let mut l_x = ComplexMatrix::zeros(n * n, n * n);
    for j in m.jumps() {
        k += &(&j.matrix.adjoint() * &j.matrix);
        let sup = kron(&j.matrix.conj(), &j.matrix);
        if j.visible {
            l_x += &sup;
        } else {
            l_y += &sup;
        }
    }
    let l_nj = (&kron(&id, &k) + &kron(&k.transpose(), &id)).scale_real(-0.5);
    let base = &h_cal + &l_nj;
    let g = &base + &l_y;
    let g_bar_dag = &base + &l_y.adjoint();
    let g_full = &g + &l_x;
    Generators {
        h_cal,
        l_nj,
        l_y,
        l_x,
        g,
        g_bar_dag,
        g_full,
    }
}

/// `𝓙_k = L_k* ⊗ L_k`, so that `𝓙_k vec(ρ) = vec(L_k ρ L_k†)`.
pub fn jump_superoperator(m: &LindbladModel, id: usize) -> Result<ComplexMatrix, ModelError> {
    let j = m.jump(id)?;
    Ok(kron(&j.matrix.conj(), &j.matrix))
}

/// True when every column and row of `a` has at most one nonzero entry, so
/// `a` maps basis states to (multiples of) basis states.
pub fn is_basis_map(a: &ComplexMatrix) -> bool {
    let nz = |z: Complex64| z != Complex64::new(0.0, 0.0);
    let rows_ok = (0..a.rows()).all(|i| (0..a.cols()).filter(|&j| nz(a[(i, j)])).count() <= 1);
    let cols_ok = (0..a.cols()).all(|j| (0..a.rows()).filter(|&i| nz(a[(i, j)])).count() <= 1);
    rows_ok && cols_ok
}

/// True when all off-diagonal entries vanish.
pub fn is_diagonal(a: &ComplexMatrix) -> bool {
    (0..a.rows()).all(|i| (0..a.cols()).all(|j| i == j || a[(i, j)].norm() == 0.0))
}
