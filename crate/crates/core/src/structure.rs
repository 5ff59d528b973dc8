//! The complex structure `J_t` declared by the flowed coordinates, the metric
//! `g_t = omega(-, J_t -)`, and the compatibility checks around them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, ConvexFunction, InvarianceOptions, KahlerPotential, DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::field::{Expr, FieldKind, ScalarField, Var};
use crate::flow::{self, Coord, FlowState};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::model::{LocalModel, ModelPoint};

/// `|det S|` below this (rows normalized) means the flowed differentials are dependent.
pub const FRAME_DET_TOL: f64 = 1e-12;
/// Scale-free positivity threshold for eigenvalues of `g_t`.
pub const POSITIVITY_RATIO: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct BlockJacobian {
    /// `[[I + tHA, tHA], [tHA, I + tHA]]`, `2(n-k)` square.
    pub matrix: RMatrix,
    pub det: f64,
    /// `det(I + 2tHA)`, the closed form of `det`.
    pub reduced_det: f64,
}

/// Block matrix of the flow on the torus factor in the coordinates
/// `(log w, log conj w)`, with `A = 1/2 d mu / d y` and `H` the torus block of
/// the Hessian of `phi` at `mu(p)`.
pub fn block_matrix(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
) -> Result<BlockJacobian> {
    let nk = pot.model().torus_factor();
    let moment = calculus::moment_map(pot, p);
    let min_eig = linalg::symmetric_eigenvalues(&moment.jac_y)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    if !(min_eig > DEGENERACY_TOL) {
        return Err(Error::SingularA {
            min_eigenvalue: min_eig,
        });
    }
    let h = phi
        .hessian(&moment.mu)
        .view((0, 0), (nk, nk))
        .into_owned();
    let ha = h * moment.a_matrix();
    let eye = RMatrix::identity(nk, nk);
    let tha = &ha * t;
    let diag = &eye + &tha;
    let mut matrix = RMatrix::zeros(2 * nk, 2 * nk);
    matrix.view_mut((0, 0), (nk, nk)).copy_from(&diag);
    matrix.view_mut((nk, nk), (nk, nk)).copy_from(&diag);
    matrix.view_mut((0, nk), (nk, nk)).copy_from(&tha);
    matrix.view_mut((nk, 0), (nk, nk)).copy_from(&tha);
    let det = matrix.determinant();
    let reduced_det = (&eye + &tha * 2.0).determinant();
    Ok(BlockJacobian {
        matrix,
        det,
        reduced_det,
    })
}

#[derive(Clone, Debug)]
pub struct ComplexStructureAt {
    pub t: f64,
    pub j: RMatrix,
    /// `g = Omega J`, i.e. `g(u, v) = omega(u, J v)`.
    pub g: RMatrix,
    pub block_det: f64,
    /// `|det S|` for the row-normalized stacked differentials.
    pub frame_det: f64,
}

impl ComplexStructureAt {
    /// `max |J^2 + I| / max(1, max |J|^2)`. `J_t` grows with `t` as the
    /// flowed differentials line up, and the rounding floor grows with it.
    pub fn square_residual(&self) -> f64 {
        let n = self.j.nrows();
        let scale = linalg::max_abs_real(&self.j).powi(2).max(1.0);
        linalg::max_abs_real(&(&self.j * &self.j + RMatrix::identity(n, n))) / scale
    }

    /// `max |g - g^T| / max |g|`.
    pub fn symmetry_residual(&self) -> f64 {
        let scale = linalg::max_abs_real(&self.g).max(f64::MIN_POSITIVE);
        linalg::max_abs_real(&(&self.g - self.g.transpose())) / scale
    }

    /// `max |J^T Omega J - Omega| / (max |Omega| max(1, max |J|^2))`.
    pub fn compatibility_residual(&self, omega: &RMatrix) -> f64 {
        let scale = linalg::max_abs_real(omega).max(f64::MIN_POSITIVE)
            * linalg::max_abs_real(&self.j).powi(2).max(1.0);
        linalg::max_abs_real(&(self.j.transpose() * omega * &self.j - omega)) / scale
    }

    /// Smallest over largest eigenvalue of the symmetrized metric.
    pub fn eigenvalue_ratio(&self) -> f64 {
        let ev = linalg::symmetric_eigenvalues(&self.g);
        match (ev.first(), ev.last()) {
            (Some(&lo), Some(&hi)) if hi > 0.0 => lo / hi,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.eigenvalue_ratio() > POSITIVITY_RATIO
    }
}

/// The standard structure: `J d/dy = d/dtheta`, `J d/dx = d/dv`.
pub fn standard_structure(model: &LocalModel) -> RMatrix {
    let mut j = RMatrix::zeros(model.real_dim(), model.real_dim());
    for a in 0..model.torus_factor() {
        j[(model.theta_index(a), model.y_index(a))] = 1.0;
        j[(model.y_index(a), model.theta_index(a))] = -1.0;
    }
    for l in 0..model.r_fiber() {
        j[(model.im_z_index(l), model.re_z_index(l))] = 1.0;
        j[(model.re_z_index(l), model.im_z_index(l))] = -1.0;
    }
    j
}

fn stacked_frame(state: &FlowState) -> Result<(CMatrix, f64)> {
    let rows = linalg::normalize_rows(&state.reduced_jac);
    let s = linalg::vstack(&rows, &rows.map(|x| x.conj()));
    let det = s.determinant().norm();
    if !(det >= FRAME_DET_TOL) {
        return Err(Error::DegenerateFrame { det });
    }
    Ok((s, det))
}

/// `J_t = S^{-1} diag(i, -i) S` with `S = [d zeta^t; conj(d zeta^t)]`.
pub fn complex_structure(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
) -> Result<ComplexStructureAt> {
    let model = pot.model();
    let block_det = if model.torus_factor() == 0 {
        1.0
    } else {
        block_matrix(pot, phi, p, t)?.det
    };
    let frame = calculus::build_frame(pot, p)?;
    let state = flow::closed_flow(pot, phi, p, t);
    let (s, frame_det) = stacked_frame(&state)?;
    let m = model.m_complex();
    let d = CMatrix::from_fn(2 * m, 2 * m, |a, b| match (a == b, a < m) {
        (true, true) => Complex64::i(),
        (true, false) => -Complex64::i(),
        _ => Complex64::new(0.0, 0.0),
    });
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateFrame { det: frame_det })?;
    let j = (s_inv * d * s).map(|x| x.re);
    let g = &frame.omega * &j;
    Ok(ComplexStructureAt {
        t,
        j,
        g,
        block_det,
        frame_det,
    })
}

/// `J_t` as the pullback `R^{-1} J_0 R` of the standard structure through the
/// real Jacobian `R` of the flowed coordinates.
pub fn pullback_structure(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
) -> Result<RMatrix> {
    let model = pot.model();
    let state = flow::closed_flow(pot, phi, p, t);
    let rows = &state.reduced_jac;
    let mut r = RMatrix::zeros(model.real_dim(), model.real_dim());
    let nk = model.torus_factor();
    for col in 0..model.real_dim() {
        for a in 0..nk {
            r[(model.y_index(a), col)] = rows[(a, col)].re;
            r[(model.theta_index(a), col)] = rows[(a, col)].im;
        }
        for l in 0..model.r_fiber() {
            r[(model.re_z_index(l), col)] = rows[(nk + l, col)].re;
            r[(model.im_z_index(l), col)] = rows[(nk + l, col)].im;
        }
    }
    let det = r.determinant();
    let r_inv = r.clone().try_inverse().ok_or(Error::DegenerateFrame { det })?;
    Ok(r_inv * standard_structure(model) * r)
}

/// `max |{zeta_i^t, zeta_j^t}|` over the row-normalized flowed differentials,
/// relative to `max |omega^{-1}|`.
pub fn check_type_11(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint, t: f64) -> Result<f64> {
    let frame = calculus::build_frame(pot, p)?;
    let state = flow::closed_flow(pot, phi, p, t);
    let rows = linalg::normalize_rows(&state.reduced_jac);
    let m = rows.nrows();
    let row = |i: usize| -> Vec<Complex64> { rows.row(i).iter().copied().collect() };
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in i..m {
            let b = calculus::poisson_bracket_complex(&frame, &row(i), &row(j));
            worst = worst.max(b.norm());
        }
    }
    Ok(worst / linalg::max_abs_real(&frame.omega_inv))
}

/// Holomorphic chart change `u = coeff * zeta^power` on one coordinate.
///
/// On a torus coordinate any nonzero power is allowed (the new angle is
/// `power * theta`, so the generator and the moment component rescale). On a
/// fiber coordinate the power must be `+1` or `-1` and the coefficient real,
/// which keeps the substituted potential single valued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub coord: Coord,
    pub coeff: Complex64,
    pub power: i32,
}

impl Transition {
    pub fn inversion(coord: Coord) -> Self {
        Transition {
            coord,
            coeff: Complex64::new(1.0, 0.0),
            power: -1,
        }
    }

    pub fn identity(coord: Coord) -> Self {
        Transition {
            coord,
            coeff: Complex64::new(1.0, 0.0),
            power: 1,
        }
    }

    pub fn apply(&self, zeta: Complex64) -> Result<Complex64> {
        if zeta.norm() == 0.0 && self.power < 0 {
            return Err(Error::DomainEscape(format!("{} = 0 under a negative power", self.coord)));
        }
        Ok(self.coeff * zeta.powi(self.power))
    }

    /// The model, potential, convex function and point expressed in the new chart.
    pub fn chart(
        &self,
        pot: &KahlerPotential,
        phi: &ConvexFunction,
        p: &ModelPoint,
    ) -> Result<(KahlerPotential, ConvexFunction, ModelPoint)> {
        let model = pot.model();
        if self.power == 0 || self.coeff.norm() == 0.0 {
            return Err(Error::DomainEscape("transition is not invertible".into()));
        }
        let a = self.power as f64;
        let mut coords = p.coords();
        let (new_model, rho, phi_expr, index) = match self.coord {
            Coord::W(j) if j < model.torus_factor() => {
                // y = (y' - log|c|) / a
                let y = Expr::sum(
                    Expr::product(Expr::constant(1.0 / a), Expr::var(Var::Y(j))),
                    Expr::constant(-self.coeff.norm().ln() / a),
                );
                let mu = Expr::product(Expr::constant(a), Expr::var(Var::Mu(j)));
                (
                    model.clone(),
                    pot.rho().expr().substitute(Var::Y(j), &y),
                    phi.field().expr().substitute(Var::Mu(j), &mu),
                    j,
                )
            }
            Coord::Z(l) if l < model.r_fiber() => {
                if self.power.abs() != 1 || self.coeff.im != 0.0 {
                    return Err(Error::DomainEscape(format!(
                        "fiber transition on {} must be c * z^(+-1) with real c",
                        self.coord
                    )));
                }
                let c = self.coeff.re;
                let back = |v: Var| {
                    if self.power == 1 {
                        Expr::product(Expr::constant(1.0 / c), Expr::var(v))
                    } else {
                        Expr::product(Expr::constant(c), Expr::power(Expr::var(v), -1.0))
                    }
                };
                let rho = pot
                    .rho()
                    .expr()
                    .substitute(Var::Z(l), &back(Var::Z(l)))
                    .substitute(Var::Zb(l), &back(Var::Zb(l)));
                (
                    model.with_scaled_column(l, self.power as i64),
                    rho,
                    phi.field().expr().clone(),
                    model.torus_factor() + l,
                )
            }
            other => {
                return Err(Error::DimensionMismatch(format!("{other} is not a coordinate of the model")))
            }
        };
        coords[index] = self.apply(coords[index])?;
        let point = ModelPoint::from_coords(&new_model, &coords)?;
        let rho = ScalarField::new(rho.simplify(), FieldKind::Potential)?;
        let pot = KahlerPotential::new(&new_model, rho, std::slice::from_ref(&point), InvarianceOptions::default())?;
        let phi = ConvexFunction::new(&new_model, ScalarField::new(phi_expr.simplify(), FieldKind::Convex)?)?;
        Ok((pot, phi, point))
    }
}

/// `|T(zeta^t) - (T zeta)^t| / max(1, |(T zeta)^t|)`: the flow in the new
/// chart, run from scratch, against the original flow pushed through `T`.
pub fn check_transition_consistency(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    transition: &Transition,
) -> Result<f64> {
    let state = flow::closed_flow(pot, phi, p, t);
    let lhs = transition.apply(state.coord(transition.coord))?;
    let (pot2, phi2, p2) = transition.chart(pot, phi, p)?;
    let rhs = flow::closed_flow(&pot2, &phi2, &p2, t).coord(transition.coord);
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(Error::DomainEscape(format!("{} overflowed at t = {t}", transition.coord)));
    }
    Ok(flow::scaled_residual(lhs, rhs))
}

/// `max_t |y^t - y - t grad phi(mu)|` over the torus factor, with `y^t` read
/// off as `log|w^t|`.
pub fn geodesic_linearity(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint, t_grid: &[f64]) -> f64 {
    let y0 = p.y();
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let state = flow::closed_flow(pot, phi, p, t);
        for (j, y) in y0.iter().enumerate() {
            let expected = y + t * state.rates.w_rates[j];
            worst = worst
                .max((state.w_t[j].norm().ln() - expected).abs())
                .max((state.y_t[j] - expected).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use std::f64::consts::E;

    fn setup(
        n: usize,
        k: usize,
        r: usize,
        b: Vec<Vec<i64>>,
        rho: &str,
        phi: &str,
        coords: &[Complex64],
    ) -> (KahlerPotential, ConvexFunction, ModelPoint) {
        let m = LocalModel::new(n, k, r, b).unwrap();
        let p = ModelPoint::from_coords(&m, coords).unwrap();
        let pot = KahlerPotential::new(
            &m,
            ScalarField::potential(rho).unwrap(),
            std::slice::from_ref(&p),
            InvarianceOptions::default(),
        )
        .unwrap();
        let phi = ConvexFunction::new(&m, ScalarField::convex(phi).unwrap()).unwrap();
        (pot, phi, p)
    }

    fn cylinder() -> (KahlerPotential, ConvexFunction, ModelPoint) {
        setup(1, 0, 0, vec![], "y1^2", "mu1^2/2", &[c(E, 0.0)])
    }

    fn weighted(z: [Complex64; 2]) -> (KahlerPotential, ConvexFunction, ModelPoint) {
        setup(1, 1, 2, vec![vec![1, 2]], "z1*zb1 + z2*zb2", "mu1^2/2", &z)
    }

    fn mixed() -> (KahlerPotential, ConvexFunction, ModelPoint) {
        setup(
            2,
            1,
            1,
            vec![vec![3]],
            "y1^2 + exp(y1)*z1*zb1",
            "mu1^2/2 + mu2^2/2 + mu1*mu2/4",
            &[c(1.1, 0.7), c(0.4, 0.2)],
        )
    }

    #[test]
    fn block_matrix_examples() {
        let (pot, phi, p) = cylinder();
        let block = |t| block_matrix(&pot, &phi, &p, t).unwrap();
        assert!((block(1.0).det - 2.0).abs() < 1e-12);
        assert!((block(0.0).det - 1.0).abs() < 1e-15);
        assert!((block(10.0).det - 11.0).abs() < 1e-10);
        let (pot, phi, p) = mixed();
        let block = |t| block_matrix(&pot, &phi, &p, t).unwrap();
        for t in [0.0, 0.3, 4.0, 50.0] {
            let b = block(t);
            assert!((b.det - b.reduced_det).abs() <= 1e-9 * b.det.abs().max(1.0));
        }
    }

    #[test]
    fn block_matrix_rejects_flat_direction() {
        let m = LocalModel::new(1, 0, 0, vec![]).unwrap();
        let p = ModelPoint::from_coords(&m, &[c(1.0, 0.0)]).unwrap();
        // rho = y^4 has d mu / dy = 6 y^2 = 0 at y = 0.
        let pot = KahlerPotential::new(
            &m,
            ScalarField::potential("y1^4").unwrap(),
            std::slice::from_ref(&p),
            InvarianceOptions::default(),
        )
        .unwrap();
        let phi = ConvexFunction::new(&m, ScalarField::convex("mu1^2/2").unwrap()).unwrap();
        assert!(matches!(block_matrix(&pot, &phi, &p, 1.0), Err(Error::SingularA { .. })));
    }

    #[test]
    fn standard_structure_at_time_zero() {
        let (pot, phi, p) = setup(1, 1, 1, vec![vec![1]], "z1*zb1", "mu1^2/2", &[c(0.3, -0.2)]);
        let s = complex_structure(&pot, &phi, &p, 0.0).unwrap();
        let expected = RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(linalg::max_abs_real(&(&s.j - expected)) < 1e-12);
        for (pot, phi, p) in [cylinder(), mixed()] {
            let s = complex_structure(&pot, &phi, &p, 0.0).unwrap();
            assert!(linalg::max_abs_real(&(&s.j - standard_structure(pot.model()))) < 1e-12);
        }
    }

    #[test]
    fn cylinder_structure_at_time_one() {
        let (pot, phi, p) = cylinder();
        let s = complex_structure(&pot, &phi, &p, 1.0).unwrap();
        assert!(s.square_residual() < 1e-10);
        // d w^t = w^t (2 dy + i dtheta): J d/dy = 2 d/dtheta, J d/dtheta = -1/2 d/dy.
        let expected = RMatrix::from_row_slice(2, 2, &[0.0, -0.5, 2.0, 0.0]);
        assert!(linalg::max_abs_real(&(&s.j - expected)) < 1e-12);
        assert!(s.is_positive());
    }

    #[test]
    fn structures_are_compatible_and_positive() {
        let frames = [
            cylinder(),
            weighted([c(1.0, 1.0), c(1.0, 1.0)]),
            weighted([c(0.6, 0.3), c(0.2, -0.4)]),
            mixed(),
        ];
        for (pot, phi, p) in frames {
            let omega = calculus::build_frame(&pot, &p).unwrap().omega;
            for t in [0.0, 1.0, 5.0, 20.0, 100.0] {
                let s = complex_structure(&pot, &phi, &p, t).unwrap();
                assert!(s.square_residual() < 1e-9, "J^2 at t = {t}");
                assert!(s.symmetry_residual() < 1e-10, "symmetry at t = {t}");
                assert!(s.compatibility_residual(&omega) < 1e-9);
                assert!(s.is_positive());
                assert!(s.block_det > 0.0);
                let pulled = pullback_structure(&pot, &phi, &p, t).unwrap();
                let scale = linalg::max_abs_real(&s.j);
                let gap = linalg::max_abs_real(&(&pulled - &s.j));
                // both constructions invert a frame whose condition number grows like |J|
                assert!(gap < 1e-11 * scale * scale, "t = {t}: gap {gap:e}");
            }
        }
    }

    #[test]
    fn type_11_examples() {
        let (pot, phi, p) = weighted([c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(check_type_11(&pot, &phi, &p, 1.0).unwrap() <= 1e-8);
        assert!(check_type_11(&pot, &phi, &p, 0.0).unwrap() <= 1e-10);
        let (pot, phi, p) = cylinder();
        assert_eq!(check_type_11(&pot, &phi, &p, 3.0).unwrap(), 0.0);
        let (pot, phi, p) = mixed();
        assert!(check_type_11(&pot, &phi, &p, 7.0).unwrap() <= 1e-8);
    }

    #[test]
    fn transition_examples() {
        let (pot, phi, p) = cylinder();
        let inv = Transition::inversion(Coord::W(0));
        assert!(check_transition_consistency(&pot, &phi, &p, 1.0, &inv).unwrap() <= 1e-10);
        let (pot2, phi2, p2) = inv.chart(&pot, &phi, &p).unwrap();
        let flowed = flow::closed_flow(&pot2, &phi2, &p2, 1.0);
        assert!((flowed.w_t[0] - c((-2.0f64).exp(), 0.0)).norm() < 1e-15);
        assert!((calculus::moment_map(&pot2, &p2).mu[0] + 1.0).abs() < 1e-14);
        assert_eq!(check_transition_consistency(&pot, &phi, &p, 0.0, &inv).unwrap(), 0.0);
        let id = Transition::identity(Coord::W(0));
        assert_eq!(check_transition_consistency(&pot, &phi, &p, 4.0, &id).unwrap(), 0.0);
    }

    #[test]
    fn transitions_on_mixed_model() {
        let (pot, phi, p) = mixed();
        let cube = Transition {
            coord: Coord::W(0),
            coeff: c(0.5, 1.5),
            power: 3,
        };
        let fiber = Transition {
            coord: Coord::Z(0),
            coeff: c(2.0, 0.0),
            power: -1,
        };
        for t in [0.0, 1.0, 5.0] {
            assert!(check_transition_consistency(&pot, &phi, &p, t, &cube).unwrap() <= 1e-9);
            assert!(check_transition_consistency(&pot, &phi, &p, t, &fiber).unwrap() <= 1e-9);
        }
        let bad = Transition {
            coord: Coord::Z(0),
            coeff: c(1.0, 0.0),
            power: 2,
        };
        assert!(matches!(
            check_transition_consistency(&pot, &phi, &p, 1.0, &bad),
            Err(Error::DomainEscape(_))
        ));
    }

    #[test]
    fn geodesic_linearity_examples() {
        let grid = [0.0, 1.0, 10.0, 100.0];
        let (pot, phi, p) = cylinder();
        assert!(geodesic_linearity(&pot, &phi, &p, &grid) <= 1e-12);
        let (pot, phi, p) = weighted([c(0.5, 0.0), c(0.5, 0.0)]);
        assert_eq!(geodesic_linearity(&pot, &phi, &p, &grid), 0.0);
        let (pot, phi, p) = mixed();
        assert!(geodesic_linearity(&pot, &phi, &p, &grid) <= 1e-12);
    }
}
