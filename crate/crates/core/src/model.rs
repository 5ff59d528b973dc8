//! Local models `T_C^{n-k} x C^r` with a Hamiltonian `T^n` action.
//!
//! The torus factor `T^{n-k}` acts by rotating the angles of the `w`
//! coordinates; the stabilizer factor `T^k` acts diagonally on the fiber
//! with integer weights `B` (k x r).
//!
//! Real tangent vectors are expressed in the fixed basis
//! `(y_1..y_{n-k}, theta_1..theta_{n-k}, Re z_1, Im z_1, .., Re z_r, Im z_r)`
//! where `w_j = exp(y_j + i theta_j)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Env, FieldKind, ScalarField};
use crate::linalg::{self, RMatrix};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct LocalModel {
    n_torus: usize,
    k_stab: usize,
    r_fiber: usize,
    m_complex: usize,
    weights: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawModel {
    n: usize,
    k: usize,
    r: usize,
    #[serde(rename = "B", default)]
    b: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
}

impl TryFrom<RawModel> for LocalModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let model = LocalModel::new(raw.n, raw.k, raw.r, raw.b)?;
        if let Some(m) = raw.m {
            if m != model.m_complex {
                return Err(Error::DimensionMismatch(format!(
                    "m = {m} but n - k + r = {}",
                    model.m_complex
                )));
            }
        }
        Ok(model)
    }
}

impl From<LocalModel> for RawModel {
    fn from(m: LocalModel) -> Self {
        RawModel {
            n: m.n_torus,
            k: m.k_stab,
            r: m.r_fiber,
            b: m.weights,
            m: Some(m.m_complex),
        }
    }
}

impl LocalModel {
    /// Validates dimensions and the weight matrix; `m = n - k + r`.
    pub fn new(n: usize, k: usize, r: usize, weights: Vec<Vec<i64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch("torus dimension n must be >= 1".into()));
        }
        if k > n {
            return Err(Error::DimensionMismatch(format!("k = {k} exceeds n = {n}")));
        }
        if weights.len() != k || weights.iter().any(|row| row.len() != r) {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be {k} x {r}, got {} rows with lengths {:?}",
                weights.len(),
                weights.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        if k > 0 && integer_rank(&weights) < k {
            return Err(Error::IneffectiveAction);
        }
        Ok(LocalModel {
            n_torus: n,
            k_stab: k,
            r_fiber: r,
            m_complex: n - k + r,
            weights,
        })
    }

    pub fn n_torus(&self) -> usize {
        self.n_torus
    }

    pub fn k_stab(&self) -> usize {
        self.k_stab
    }

    pub fn r_fiber(&self) -> usize {
        self.r_fiber
    }

    pub fn m_complex(&self) -> usize {
        self.m_complex
    }

    /// Number of `w` coordinates, `n - k`.
    pub fn torus_factor(&self) -> usize {
        self.n_torus - self.k_stab
    }

    pub fn real_dim(&self) -> usize {
        2 * self.m_complex
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    /// Weight `b_{gamma l}` with `gamma` indexing the stabilizer factor (0-based).
    pub fn weight(&self, gamma: usize, l: usize) -> f64 {
        self.weights[gamma][l] as f64
    }

    pub fn y_index(&self, j: usize) -> usize {
        j
    }

    pub fn theta_index(&self, j: usize) -> usize {
        self.torus_factor() + j
    }

    pub fn re_z_index(&self, l: usize) -> usize {
        2 * self.torus_factor() + 2 * l
    }

    pub fn im_z_index(&self, l: usize) -> usize {
        2 * self.torus_factor() + 2 * l + 1
    }

    /// Same model with fiber weight column `l` scaled by `factor`.
    pub(crate) fn with_scaled_column(&self, l: usize, factor: i64) -> LocalModel {
        let mut out = self.clone();
        for row in &mut out.weights {
            row[l] *= factor;
        }
        out
    }

    /// Checks that a field only refers to variables that exist on this model.
    pub fn check_field(&self, field: &ScalarField) -> Result<()> {
        match field.kind() {
            FieldKind::Potential => field.check_bounds(self.torus_factor(), self.r_fiber, 0),
            FieldKind::Convex => field.check_bounds(0, 0, self.n_torus),
        }
    }
}

/// Rank of an integer matrix via fraction-free elimination.
fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..n_cols {
        let Some(pivot) = (rank..n_rows).find(|&i| m[i][col] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        for i in 0..n_rows {
            if i != rank && m[i][col] != 0 {
                let (a, b) = (m[rank][col], m[i][col]);
                let pivot_row = m[rank].clone();
                for (x, p) in m[i].iter_mut().zip(&pivot_row) {
                    *x = *x * a - p * b;
                }
                let g = m[i].iter().fold(0i128, |g, &x| gcd(g, x.abs()));
                if g > 1 {
                    m[i].iter_mut().for_each(|x| *x /= g);
                }
            }
        }
        rank += 1;
    }
    rank
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A point of `T_C^{n-k} x C^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    w: Vec<Complex64>,
    z: Vec<Complex64>,
}

impl ModelPoint {
    pub fn new(model: &LocalModel, w: Vec<Complex64>, z: Vec<Complex64>) -> Result<Self> {
        if w.len() != model.torus_factor() || z.len() != model.r_fiber() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} + {} coordinates, model expects {} + {}",
                w.len(),
                z.len(),
                model.torus_factor(),
                model.r_fiber()
            )));
        }
        if let Some(j) = w.iter().position(|wj| !(wj.norm() > 0.0) || !wj.is_finite()) {
            return Err(Error::InvalidPoint(format!(
                "w{} = {} must be finite and nonzero",
                j + 1,
                w[j]
            )));
        }
        if z.iter().any(|zl| !zl.is_finite()) {
            return Err(Error::InvalidPoint("fiber coordinates must be finite".into()));
        }
        Ok(ModelPoint { w, z })
    }

    /// Splits a flat coordinate list `(w_1.., z_1..)`.
    pub fn from_coords(model: &LocalModel, coords: &[Complex64]) -> Result<Self> {
        if coords.len() != model.m_complex() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, model has m = {}",
                coords.len(),
                model.m_complex()
            )));
        }
        let (w, z) = coords.split_at(model.torus_factor());
        ModelPoint::new(model, w.to_vec(), z.to_vec())
    }

    pub fn w(&self) -> &[Complex64] {
        &self.w
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn coords(&self) -> Vec<Complex64> {
        self.w.iter().chain(self.z.iter()).copied().collect()
    }

    /// `y_j = log|w_j|`.
    pub fn y(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.norm().ln()).collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.arg()).collect()
    }

    /// Fiber angles, `None` where `z_l = 0`.
    pub fn fiber_angles(&self) -> Vec<Option<f64>> {
        self.z
            .iter()
            .map(|z| (z.norm() > 0.0).then(|| z.arg()))
            .collect()
    }

    /// Variable assignment for potentials: `y`, `z`, `zb = conj(z)`.
    pub fn env(&self) -> Env {
        Env {
            y: self.y().into_iter().map(|y| Complex64::new(y, 0.0)).collect(),
            z: self.z.clone(),
            zb: self.z.iter().map(|z| z.conj()).collect(),
            mu: Vec::new(),
        }
    }

    /// Point with real coordinates moved by `delta` along basis vector `index`.
    pub fn displaced(&self, model: &LocalModel, index: usize, delta: f64) -> ModelPoint {
        let mut out = self.clone();
        let nk = model.torus_factor();
        if index < nk {
            out.w[index] *= delta.exp();
        } else if index < 2 * nk {
            out.w[index - nk] *= Complex64::from_polar(1.0, delta);
        } else {
            let off = index - 2 * nk;
            let l = off / 2;
            if off.is_multiple_of(2) {
                out.z[l] += delta;
            } else {
                out.z[l] += Complex64::new(0.0, delta);
            }
        }
        out
    }
}

/// Action of `exp(i s)` for `s` in the Lie algebra `R^n`.
pub fn act(model: &LocalModel, p: &ModelPoint, s: &[f64]) -> ModelPoint {
    assert_eq!(s.len(), model.n_torus());
    let nk = model.torus_factor();
    let w = p
        .w
        .iter()
        .zip(s)
        .map(|(w, &sj)| w * Complex64::from_polar(1.0, sj))
        .collect();
    let z = p
        .z
        .iter()
        .enumerate()
        .map(|(l, z)| {
            let phase: f64 = (0..model.k_stab())
                .map(|g| s[nk + g] * model.weight(g, l))
                .sum();
            z * Complex64::from_polar(1.0, phase)
        })
        .collect();
    ModelPoint { w, z }
}

/// Fundamental vector fields at `p` as columns of a `2m x n` real matrix.
pub fn fundamental_fields(model: &LocalModel, p: &ModelPoint) -> RMatrix {
    let nk = model.torus_factor();
    let mut out = DMatrix::zeros(model.real_dim(), model.n_torus());
    for j in 0..nk {
        out[(model.theta_index(j), j)] = 1.0;
    }
    for g in 0..model.k_stab() {
        for (l, z) in p.z.iter().enumerate() {
            let b = model.weight(g, l);
            out[(model.re_z_index(l), nk + g)] = -b * z.im;
            out[(model.im_z_index(l), nk + g)] = b * z.re;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub point: ModelPoint,
    pub stab_dim: usize,
    pub is_regular: bool,
}

/// Stabilizer dimension from the rank of the infinitesimal action.
pub fn regularity(model: &LocalModel, p: &ModelPoint) -> RegularityReport {
    let fields = linalg::complexify(&fundamental_fields(model, p));
    let rank = linalg::rank_loose(&fields, linalg::RANK_TOL);
    let stab_dim = model.n_torus() - rank;
    RegularityReport {
        point: p.clone(),
        stab_dim,
        is_regular: stab_dim == 0,
    }
}

/// Group elements used by the invariance check: the all-`pi` element plus
/// uniformly random angles from a seeded generator.
pub fn group_samples(model: &LocalModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = model.n_torus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![std::f64::consts::PI; n]];
    while out.len() < count.max(4) {
        out.push(
            (0..n)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
        );
    }
    out
}

/// Largest `|rho(g.p) - rho(p)|` (and imaginary part of `rho`) over the samples.
pub fn invariance_deviation(
    model: &LocalModel,
    rho: &ScalarField,
    samples: &[ModelPoint],
    group_samples_count: usize,
    seed: u64,
) -> f64 {
    let group = group_samples(model, group_samples_count, seed);
    let mut worst: f64 = 0.0;
    for p in samples {
        let base = rho.eval(&p.env());
        worst = worst.max(base.im.abs());
        for s in &group {
            let moved = rho.eval(&act(model, p, s).env());
            let dev = (moved - base).norm();
            worst = if dev.is_nan() { f64::INFINITY } else { worst.max(dev) };
        }
    }
    worst
}

/// True iff `rho` is real and torus invariant at every sample within `tol`.
/// At least four group elements are used.
pub fn validate_invariance(
    model: &LocalModel,
    rho: &ScalarField,
    samples: &[ModelPoint],
    group_samples_count: usize,
    tol: f64,
    seed: u64,
) -> bool {
    invariance_deviation(model, rho, samples, group_samples_count, seed) <= tol
}
