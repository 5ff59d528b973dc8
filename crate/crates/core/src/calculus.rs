//! Symbolic calculus on scalar fields, the finite-difference oracle, and the
//! symplectic data derived from a torus-invariant Kähler potential.
//!
//! Conventions: `omega = i ddbar rho`, `iota_{X_f} omega = -df` and
//! `{f, g} = omega(X_f, X_g)`. Moment components are
//! `mu_j = 1/2 d rho / d y_j` on the torus factor (i.e. `d rho / d s_j` with
//! `|w_j|^2 = e^{s_j}`) and `mu_gamma = sum_l b_{gamma l} |z_l|^2 d rho / d|z_l|^2`
//! on the stabilizer factor.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Env, Expr, FieldKind, ScalarField, Var};
use crate::linalg::{self, CMatrix, RMatrix, RVector};
use crate::model::{self, LocalModel, ModelPoint};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Minimum eigenvalue of the complex Hessian below which a potential is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Exact derivative of `field` of the given order (1 or 2) in `var`.
pub fn differentiate(field: &ScalarField, var: Var, order: usize) -> Result<ScalarField> {
    if !field.kind().admits(var) {
        return Err(Error::UnknownVariable(var.to_string()));
    }
    let expr = match order {
        1 => field.expr().derivative(var),
        2 => field.expr().derivative(var).derivative(var),
        other => return Err(Error::InvalidOrder(other)),
    };
    Ok(ScalarField::from_expr_unchecked(expr, field.kind()))
}

fn central(field: &ScalarField, env: &Env, var: Var, h: f64) -> Complex64 {
    (field.eval(&env.with(var, h)) - field.eval(&env.with(var, -h))) / (2.0 * h)
}

/// Central difference with one Richardson step, `(4 D(h/2) - D(h)) / 3`.
///
/// Complex variables are probed along the real axis; fields are analytic in
/// each variable separately, so this is the Wirtinger partial.
pub fn fd_oracle(field: &ScalarField, env: &Env, var: Var, h: f64) -> Complex64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let coarse = central(field, env, var, h);
    let fine = central(field, env, var, h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

fn central_mixed(field: &ScalarField, env: &Env, a: Var, b: Var, h: f64) -> Complex64 {
    let f = |da: f64, db: f64| field.eval(&env.with(a, da).with(b, db));
    (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)
}

/// Second partial `d^2 f / da db` by nested central differences with one
/// Richardson step.
pub fn fd_oracle_second(field: &ScalarField, env: &Env, a: Var, b: Var, h: f64) -> Complex64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let coarse = central_mixed(field, env, a, b, h);
    let fine = central_mixed(field, env, a, b, h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

/// Settings for the torus-invariance gate of a potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceOptions {
    pub group_samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        InvarianceOptions {
            group_samples: 16,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Holomorphic-side variable slots: `y_1..y_{n-k}, z_1..z_r`.
fn holo_slots(model: &LocalModel) -> Vec<Var> {
    (0..model.torus_factor())
        .map(Var::Y)
        .chain((0..model.r_fiber()).map(Var::Z))
        .collect()
}

/// Antiholomorphic-side variable slots: `y_1..y_{n-k}, zb_1..zb_r`.
fn antiholo_slots(model: &LocalModel) -> Vec<Var> {
    (0..model.torus_factor())
        .map(Var::Y)
        .chain((0..model.r_fiber()).map(Var::Zb))
        .collect()
}

/// A Kähler potential that passed the invariance gate, with the symbolic
/// moment map and Hessian entries precomputed.
#[derive(Clone, Debug)]
pub struct KahlerPotential {
    model: LocalModel,
    rho: ScalarField,
    moment: Vec<ScalarField>,
    // d mu_i / d v for v in (y.., z.., zb..)
    moment_grad: Vec<Vec<Expr>>,
    // d^2 rho / d a d b for a in holo slots, b in antiholo slots
    hessian: Vec<Vec<Expr>>,
    deviation: f64,
}

impl KahlerPotential {
    /// Fails with `NonInvariantPotential` when `rho` is not real and
    /// torus-invariant at the samples.
    pub fn new(
        model: &LocalModel,
        rho: ScalarField,
        samples: &[ModelPoint],
        opts: InvarianceOptions,
    ) -> Result<Self> {
        if rho.kind() != FieldKind::Potential {
            return Err(Error::UnknownVariable(format!("{rho} is not a potential")));
        }
        model.check_field(&rho)?;
        let deviation =
            model::invariance_deviation(model, &rho, samples, opts.group_samples, opts.seed);
        if !(deviation <= opts.tol) {
            return Err(Error::NonInvariantPotential { deviation });
        }
        let nk = model.torus_factor();
        let expr = rho.expr();
        let mut moment = Vec::with_capacity(model.n_torus());
        for j in 0..nk {
            let e = Expr::product(Expr::constant(0.5), expr.derivative(Var::Y(j)));
            moment.push(e);
        }
        for g in 0..model.k_stab() {
            let mut acc = Expr::constant(0.0);
            for l in 0..model.r_fiber() {
                let b = model.weight(g, l);
                if b == 0.0 {
                    continue;
                }
                // |z|^2 d rho/d|z|^2, written symmetrically so it stays real.
                let radial = Expr::sum(
                    Expr::product(Expr::var(Var::Z(l)), expr.derivative(Var::Z(l))),
                    Expr::product(Expr::var(Var::Zb(l)), expr.derivative(Var::Zb(l))),
                );
                acc = Expr::sum(acc, Expr::product(Expr::constant(0.5 * b), radial));
            }
            moment.push(acc);
        }
        let all_vars: Vec<Var> = (0..nk)
            .map(Var::Y)
            .chain((0..model.r_fiber()).map(Var::Z))
            .chain((0..model.r_fiber()).map(Var::Zb))
            .collect();
        let moment_grad = moment
            .iter()
            .map(|mu| all_vars.iter().map(|&v| mu.derivative(v)).collect())
            .collect();
        let hessian = holo_slots(model)
            .into_iter()
            .map(|a| {
                let da = expr.derivative(a);
                antiholo_slots(model)
                    .into_iter()
                    .map(|b| da.derivative(b))
                    .collect()
            })
            .collect();
        Ok(KahlerPotential {
            model: model.clone(),
            rho,
            moment: moment
                .into_iter()
                .map(|e| ScalarField::from_expr_unchecked(e, FieldKind::Potential))
                .collect(),
            moment_grad,
            hessian,
            deviation,
        })
    }

    pub fn model(&self) -> &LocalModel {
        &self.model
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    /// Symbolic moment components as fields over `y`, `z`, `zb`.
    pub fn moment_fields(&self) -> &[ScalarField] {
        &self.moment
    }

    /// Largest invariance deviation seen by the gate.
    pub fn invariance_deviation(&self) -> f64 {
        self.deviation
    }

    /// Complex Hessian in log coordinates `(log w, z)`:
    /// `d^2 rho / d zeta_a d conj(zeta_b)`.
    pub fn log_hessian(&self, p: &ModelPoint) -> CMatrix {
        let env = p.env();
        let nk = self.model.torus_factor();
        let m = self.model.m_complex();
        CMatrix::from_fn(m, m, |a, b| {
            // d/d(log w) = 1/2 d/dy on functions of y.
            let scale = match (a < nk, b < nk) {
                (true, true) => 0.25,
                (true, false) | (false, true) => 0.5,
                (false, false) => 1.0,
            };
            self.hessian[a][b].eval(&env) * scale
        })
    }

    /// Complex Hessian in the holomorphic coordinates `(w, z)`.
    pub fn hessian(&self, p: &ModelPoint) -> CMatrix {
        let h = self.log_hessian(p);
        let inv: Vec<Complex64> = p
            .w()
            .iter()
            .map(|w| 1.0 / w)
            .chain(std::iter::repeat_n(Complex64::new(1.0, 0.0), self.model.r_fiber()))
            .collect();
        CMatrix::from_fn(h.nrows(), h.ncols(), |a, b| inv[a] * h[(a, b)] * inv[b].conj())
    }

    /// Differentials `d mu_i` as rows of an `n x 2m` matrix in the real basis.
    pub fn moment_differential(&self, p: &ModelPoint) -> RMatrix {
        let env = p.env();
        let model = &self.model;
        let nk = model.torus_factor();
        let r = model.r_fiber();
        let mut out = RMatrix::zeros(model.n_torus(), model.real_dim());
        for (i, grad) in self.moment_grad.iter().enumerate() {
            for j in 0..nk {
                out[(i, model.y_index(j))] = grad[j].eval(&env).re;
            }
            for l in 0..r {
                let dz = grad[nk + l].eval(&env);
                let dzb = grad[nk + r + l].eval(&env);
                out[(i, model.re_z_index(l))] = (dz + dzb).re;
                out[(i, model.im_z_index(l))] = (Complex64::i() * (dz - dzb)).re;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentValue {
    pub mu: Vec<f64>,
    /// `d mu_i / d y_j` on the torus factor, `(n-k) x (n-k)`.
    pub jac_y: RMatrix,
}

impl MomentValue {
    /// The matrix `A = d mu / d(log w) = 1/2 jac_y`.
    pub fn a_matrix(&self) -> RMatrix {
        &self.jac_y * 0.5
    }
}

pub fn moment_map(pot: &KahlerPotential, p: &ModelPoint) -> MomentValue {
    let env = p.env();
    let mu = pot.moment.iter().map(|f| f.eval(&env).re).collect();
    let nk = pot.model.torus_factor();
    let jac_y = RMatrix::from_fn(nk, nk, |i, j| pot.moment_grad[i][j].eval(&env).re);
    MomentValue { mu, jac_y }
}

/// `omega` and its inverse at a point, in the real basis, plus the complex
/// Hessian of the potential.
#[derive(Clone, Debug)]
pub struct SymplecticFrame {
    pub point: ModelPoint,
    pub omega: RMatrix,
    pub omega_inv: RMatrix,
    /// Hessian in the holomorphic coordinates `(w, z)`.
    pub h_rho: CMatrix,
}

/// Differentials of the log coordinates `(log w_j, z_l)` in the real basis.
pub fn log_coordinate_differentials(model: &LocalModel) -> CMatrix {
    let m = model.m_complex();
    let nk = model.torus_factor();
    let mut l = CMatrix::zeros(m, model.real_dim());
    for j in 0..nk {
        l[(j, model.y_index(j))] = Complex64::new(1.0, 0.0);
        l[(j, model.theta_index(j))] = Complex64::i();
    }
    for k in 0..model.r_fiber() {
        l[(nk + k, model.re_z_index(k))] = Complex64::new(1.0, 0.0);
        l[(nk + k, model.im_z_index(k))] = Complex64::i();
    }
    l
}

/// Real matrix of `i sum h_ab d zeta_a ^ d conj(zeta_b)` for coordinate
/// differentials `l` (rows) and Hermitian `h`.
pub fn two_form_matrix(l: &CMatrix, h: &CMatrix) -> RMatrix {
    let m = l.transpose() * h * l.map(|x| x.conj());
    m.map(|x| -2.0 * x.im)
}

pub fn build_frame(pot: &KahlerPotential, p: &ModelPoint) -> Result<SymplecticFrame> {
    let h_rho = pot.hessian(p);
    let min_eig = linalg::hermitian_eigenvalues(&h_rho)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    if !(min_eig > DEGENERACY_TOL) {
        return Err(Error::DegeneratePotential {
            min_eigenvalue: min_eig,
        });
    }
    let l = log_coordinate_differentials(&pot.model);
    let omega = two_form_matrix(&l, &pot.log_hessian(p));
    let omega_inv = omega
        .clone()
        .try_inverse()
        .ok_or(Error::DegeneratePotential {
            min_eigenvalue: min_eig,
        })?;
    Ok(SymplecticFrame {
        point: p.clone(),
        omega,
        omega_inv,
        h_rho,
    })
}

/// A strictly convex function on the moment image with its gradient and
/// Hessian precomputed.
#[derive(Clone, Debug)]
pub struct ConvexFunction {
    phi: ScalarField,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

impl ConvexFunction {
    pub fn new(model: &LocalModel, phi: ScalarField) -> Result<Self> {
        if phi.kind() != FieldKind::Convex {
            return Err(Error::UnknownVariable(format!("{phi} is not a function of mu")));
        }
        model.check_field(&phi)?;
        let n = model.n_torus();
        let grad: Vec<Expr> = (0..n).map(|j| phi.expr().derivative(Var::Mu(j))).collect();
        let hess = grad
            .iter()
            .map(|g| (0..n).map(|i| g.derivative(Var::Mu(i))).collect())
            .collect();
        Ok(ConvexFunction { phi, grad, hess })
    }

    pub fn field(&self) -> &ScalarField {
        &self.phi
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        self.phi.eval(&Env::from_moment(mu)).re
    }

    pub fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        let env = Env::from_moment(mu);
        self.grad.iter().map(|g| g.eval(&env).re).collect()
    }

    pub fn hessian(&self, mu: &[f64]) -> RMatrix {
        let env = Env::from_moment(mu);
        let n = self.grad.len();
        RMatrix::from_fn(n, n, |i, j| self.hess[i][j].eval(&env).re)
    }

    /// Errors with `NotConvex` unless the Hessian is positive definite at `mu`.
    pub fn check_convex_at(&self, mu: &[f64]) -> Result<f64> {
        let min = linalg::symmetric_eigenvalues(&self.hessian(mu))
            .first()
            .copied()
            .unwrap_or(f64::INFINITY);
        if min > 0.0 {
            Ok(min)
        } else {
            Err(Error::NotConvex {
                at: mu.to_vec(),
                min_eigenvalue: min,
            })
        }
    }
}

/// `X_phi = sum_j (d phi / d mu_j)(mu(p)) xi_j^#` in the real basis.
pub fn hamiltonian_field(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint) -> RVector {
    let mu = moment_map(pot, p).mu;
    let grad = DVector::from_vec(phi.gradient(&mu));
    model::fundamental_fields(&pot.model, p) * grad
}

/// Hamiltonian vector field of a function with differential `df`.
pub fn hamiltonian_vector(frame: &SymplecticFrame, df: &RVector) -> RVector {
    &frame.omega_inv * df
}

/// `{f, g} = omega(X_f, X_g) = -df^T omega^{-1} dg`.
pub fn poisson_bracket(frame: &SymplecticFrame, df: &RVector, dg: &RVector) -> f64 {
    -(df.transpose() * &frame.omega_inv * dg)[(0, 0)]
}

/// Complex-bilinear bracket of complex differentials (given as row vectors).
pub fn poisson_bracket_complex(frame: &SymplecticFrame, df: &[Complex64], dg: &[Complex64]) -> Complex64 {
    let inv = linalg::complexify(&frame.omega_inv);
    let df = DVector::from_column_slice(df);
    let dg = DVector::from_column_slice(dg);
    -(df.transpose() * inv * dg)[(0, 0)]
}

fn relative_gap(sym: Complex64, fd: Complex64) -> f64 {
    (sym - fd).norm() / sym.norm().max(1.0)
}

/// Largest relative gap between every symbolic derivative the toolkit uses at
/// `p` (first and mixed second derivatives of `rho`, the moment gradients, and
/// the gradient and Hessian of `phi` at `mu(p)`) and the finite-difference
/// oracle.
pub fn oracle_audit(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint) -> f64 {
    let env = p.env();
    let model = &pot.model;
    let slots: Vec<Var> = (0..model.torus_factor())
        .map(Var::Y)
        .chain((0..model.r_fiber()).map(Var::Z))
        .chain((0..model.r_fiber()).map(Var::Zb))
        .collect();
    let mut worst: f64 = 0.0;
    for &v in &slots {
        let sym = pot.rho.expr().derivative(v).eval(&env);
        worst = worst.max(relative_gap(sym, fd_oracle(&pot.rho, &env, v, FD_STEP)));
    }
    for (field, grads) in pot.moment.iter().zip(&pot.moment_grad) {
        for (&v, g) in slots.iter().zip(grads) {
            worst = worst.max(relative_gap(g.eval(&env), fd_oracle(field, &env, v, FD_STEP)));
        }
    }
    for (row, &a) in pot.hessian.iter().zip(&holo_slots(model)) {
        for (entry, &b) in row.iter().zip(&antiholo_slots(model)) {
            let fd = fd_oracle_second(&pot.rho, &env, a, b, FD_STEP);
            worst = worst.max(relative_gap(entry.eval(&env), fd));
        }
    }
    let mu = moment_map(pot, p).mu;
    let menv = Env::from_moment(&mu);
    for (j, g) in phi.grad.iter().enumerate() {
        let fd = fd_oracle(&phi.phi, &menv, Var::Mu(j), FD_STEP);
        worst = worst.max(relative_gap(g.eval(&menv), fd));
        for (i, h) in phi.hess[j].iter().enumerate() {
            let fd = fd_oracle_second(&phi.phi, &menv, Var::Mu(j), Var::Mu(i), FD_STEP);
            worst = worst.max(relative_gap(h.eval(&menv), fd));
        }
    }
    worst
}

/// Gap between `d mu_j` obtained by finite differences of the moment map along
/// the real basis and the contraction `omega(-, xi_j)`, relative to
/// `max(1, |d mu|)`.
pub fn moment_identity_residual(pot: &KahlerPotential, p: &ModelPoint) -> Result<f64> {
    let frame = build_frame(pot, p)?;
    let model = &pot.model;
    let xi = model::fundamental_fields(model, p);
    let contraction = (&frame.omega * &xi).transpose();
    let h = FD_STEP;
    let mut fd = RMatrix::zeros(model.n_torus(), model.real_dim());
    for idx in 0..model.real_dim() {
        let diff = |delta: f64| -> Vec<f64> {
            let plus = moment_map(pot, &p.displaced(model, idx, delta)).mu;
            let minus = moment_map(pot, &p.displaced(model, idx, -delta)).mu;
            plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * delta)).collect()
        };
        let coarse = diff(h);
        let fine = diff(h / 2.0);
        for i in 0..model.n_torus() {
            fd[(i, idx)] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
    }
    let scale = linalg::max_abs_real(&fd).max(1.0);
    Ok(linalg::max_abs_real(&(fd - contraction)) / scale)
}
