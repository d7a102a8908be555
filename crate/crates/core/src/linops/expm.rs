//! Matrix exponential by scaling and squaring with diagonal Padé approximants.

use num_complex::Complex64;

use super::{ComplexMatrix, LinalgError, Result, C_ZERO};

const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539_398_330_063_23e-1,
    9.504178996162932e-1,
    2.097847961257068,
    5.371920351148152,
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Squarings beyond this count mean the input norm is absurd for this crate.
const MAX_SQUARINGS: i32 = 1000;

/// `e^{M t}`.
///
/// Uses Higham's degree selection (3, 5, 7, 9 or 13) on the 1-norm of `M t`,
/// so it is valid for non-normal and defective generators.
pub fn expm(m: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !t.is_finite() {
        return Err(LinalgError::NonFinite(format!("expm time {t}")));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite("expm input".into()));
    }
    let n = m.rows();
    if t == 0.0 {
        return Ok(ComplexMatrix::identity(n));
    }
    let a = m.scale_real(t);
    let norm = a.norm1();
    let out = if norm <= THETA[0] {
        pade_low(&a, &B3)?
    } else if norm <= THETA[1] {
        pade_low(&a, &B5)?
    } else if norm <= THETA[2] {
        pade_low(&a, &B7)?
    } else if norm <= THETA[3] {
        pade_low(&a, &B9)?
    } else {
        let s = (norm / THETA[4]).log2().ceil().max(0.0);
        if s > MAX_SQUARINGS as f64 {
            return Err(LinalgError::ExpmOverflow(format!("1-norm {norm:e} needs 2^{s} scaling")));
        }
        let s = s as i32;
        let scaled = a.scale_real(2f64.powi(-s));
        let mut r = pade13(&scaled)?;
        for _ in 0..s {
            r = &r * &r;
            if !r.is_finite() {
                return Err(LinalgError::ExpmOverflow("overflow while squaring".into()));
            }
        }
        r
    };
    if !out.is_finite() {
        return Err(LinalgError::ExpmOverflow("non-finite result".into()));
    }
    Ok(out)
}

fn axpy_identity(m: &mut ComplexMatrix, s: f64) {
    for i in 0..m.rows() {
        m[(i, i)] += s;
    }
}

fn lin_comb(terms: &[(f64, &ComplexMatrix)], n: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n, n);
    for &(c, m) in terms {
        for (o, z) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *o += z * c;
        }
    }
    out
}

fn finish(u: ComplexMatrix, v: ComplexMatrix) -> Result<ComplexMatrix> {
    let q = &v - &u;
    let p = &v + &u;
    q.solve(&p)
}

/// Padé approximants of degree 3 to 9, built from even powers of `a`.
fn pade_low(a: &ComplexMatrix, b: &[f64]) -> Result<ComplexMatrix> {
    let n = a.rows();
    let a2 = a * a;
    let mut powers = vec![ComplexMatrix::identity(n), a2.clone()];
    while powers.len() < b.len() / 2 {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let odd: Vec<_> = powers.iter().enumerate().map(|(i, p)| (b[2 * i + 1], p)).collect();
    let even: Vec<_> = powers.iter().enumerate().map(|(i, p)| (b[2 * i], p)).collect();
    let u = a * &lin_comb(&odd, n);
    let v = lin_comb(&even, n);
    finish(u, v)
}

fn pade13(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let mut inner_u = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    inner_u = &a6 * &inner_u;
    let mut tail_u = lin_comb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2)], n);
    axpy_identity(&mut tail_u, b[1]);
    let u = a * &(&inner_u + &tail_u);
    let mut inner_v = lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    inner_v = &a6 * &inner_v;
    let mut tail_v = lin_comb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2)], n);
    axpy_identity(&mut tail_v, b[0]);
    let v = &inner_v + &tail_v;
    finish(u, v)
}

/// Default number of halvings stored below the top step.
pub const DEFAULT_LADDER_DEPTH: usize = 40;

/// Precomputed exponentials `e^{M·top·2^{-j}}` for `j = 0..=depth`.
///
/// Applying `e^{M t}` to a vector then costs one matrix-vector product per
/// set bit of `t / top`, plus a short Taylor series for the remainder below
/// `top·2^{-depth}`. Every interval of every trajectory reuses the same
/// handful of matrices.
#[derive(Clone, Debug)]
pub struct ExpLadder {
    generator: ComplexMatrix,
    top: f64,
    depth: usize,
    steps: Vec<ComplexMatrix>,
}

impl ExpLadder {
    pub fn new(generator: &ComplexMatrix, top: f64) -> Result<Self> {
        Self::with_depth(generator, top, DEFAULT_LADDER_DEPTH)
    }

    pub fn with_depth(generator: &ComplexMatrix, top: f64, depth: usize) -> Result<Self> {
        if !(top.is_finite() && top > 0.0) {
            return Err(LinalgError::NonFinite(format!("ladder top step {top}")));
        }
        if depth > 60 {
            return Err(LinalgError::DimensionMismatch(format!("ladder depth {depth} exceeds 60")));
        }
        let steps = (0..=depth)
            .map(|j| expm(generator, top * 2f64.powi(-(j as i32))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            generator: generator.clone(),
            top,
            depth,
            steps,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.rows()
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn step_len(&self, level: usize) -> f64 {
        self.top * 2f64.powi(-(level as i32))
    }

    /// `e^{M·step_len(level)}`.
    pub fn step(&self, level: usize) -> &ComplexMatrix {
        &self.steps[level]
    }

    pub fn generator(&self) -> &ComplexMatrix {
        &self.generator
    }

    /// Replaces `v` by `e^{M t} v`. `scratch` must have the same length.
    pub fn apply_in_place(&self, t: f64, v: &mut [Complex64], scratch: &mut [Complex64]) {
        assert!(t >= 0.0 && t.is_finite(), "ladder time must be finite and non-negative, got {t}");
        let mut rem = t;
        while rem >= self.top {
            self.steps[0].apply_into(v, scratch);
            v.copy_from_slice(scratch);
            rem -= self.top;
        }
        for level in 1..=self.depth {
            let len = self.step_len(level);
            if rem >= len {
                self.steps[level].apply_into(v, scratch);
                v.copy_from_slice(scratch);
                rem -= len;
            }
        }
        if rem > 0.0 {
            self.taylor_remainder(rem, v, scratch);
        }
    }

    fn taylor_remainder(&self, rem: f64, v: &mut [Complex64], scratch: &mut [Complex64]) {
        let scale = super::vec_norm(v);
        let mut term = v.to_vec();
        for k in 1..30 {
            self.generator.apply_into(&term, scratch);
            let f = rem / k as f64;
            for (t, s) in term.iter_mut().zip(scratch.iter()) {
                *t = s * f;
            }
            for (x, t) in v.iter_mut().zip(&term) {
                *x += t;
            }
            if super::vec_norm(&term) <= 1e-17 * scale {
                break;
            }
        }
    }

    /// `e^{M t} v`.
    pub fn apply(&self, t: f64, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = v.to_vec();
        let mut scratch = vec![C_ZERO; v.len()];
        self.apply_in_place(t, &mut out, &mut scratch);
        out
    }
}
