//! Pointwise polarizations as complex subspaces of the complexified tangent
//! space, in the real basis `(y.., theta.., Re z_1, Im z_1, ..)`.
//!
//! Angles between subspaces use the Euclidean Hermitian inner product of that
//! basis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, ConvexFunction, KahlerPotential};
use crate::error::{Error, Result};
use crate::flow;
use crate::linalg::{self, CMatrix};
use crate::model::{self, LocalModel, ModelPoint};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSubspace {
    basis: CMatrix,
}

impl ComplexSubspace {
    /// Subspace spanned by the columns of `spanning`; the stored basis is
    /// orthonormal.
    pub fn span(spanning: &CMatrix) -> Result<Self> {
        Ok(ComplexSubspace {
            basis: linalg::column_space(&linalg::normalize_columns(spanning))?,
        })
    }

    /// Wraps an orthonormal basis as is.
    fn orthonormal(basis: CMatrix) -> Self {
        ComplexSubspace { basis }
    }

    pub fn zero(ambient: usize) -> Self {
        ComplexSubspace {
            basis: CMatrix::zeros(ambient, 0),
        }
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn conj(&self) -> Self {
        ComplexSubspace {
            basis: self.basis.map(|x| x.conj()),
        }
    }

    /// Intersection, as the image of the null space of `[A, -B]`.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.dim() == 0 || other.dim() == 0 {
            return Ok(ComplexSubspace::zero(self.ambient()));
        }
        let stacked = linalg::hstack(&self.basis, &(-&other.basis));
        let ns = linalg::null_space(&stacked)?;
        let coeffs = ns.rows(0, self.dim()).into_owned();
        ComplexSubspace::span(&(&self.basis * coeffs))
    }

    /// `max |(I - Q Q^H) u|` over the basis vectors `u` of `self`; zero iff
    /// `self` lies in `other`.
    pub fn containment_residual(&self, other: &Self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let q = &other.basis;
        let out = &self.basis - q * (q.adjoint() * &self.basis);
        out.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationReport {
    pub dim: usize,
    pub is_lagrangian: bool,
    /// `max |omega(u, v)|` over basis pairs, relative to `max |omega|`.
    pub lagrangian_residual: f64,
    pub real_rank: usize,
    pub regular: bool,
}

/// Tolerance for the Lagrangian condition.
pub const LAGRANGIAN_TOL: f64 = 1e-9;

/// Complex-bilinear `omega(u, v)` over all basis pairs, relative to `max |omega|`.
pub fn lagrangian_residual(omega: &linalg::RMatrix, space: &ComplexSubspace) -> f64 {
    if space.dim() == 0 {
        return 0.0;
    }
    let q = space.basis();
    let form = q.transpose() * linalg::complexify(omega) * q;
    linalg::max_abs(&form) / linalg::max_abs_real(omega)
}

/// `dim (P cap conj P)`.
pub fn real_rank(space: &ComplexSubspace) -> Result<usize> {
    Ok(space.intersect(&space.conj())?.dim())
}

pub fn report(
    model: &LocalModel,
    omega: &linalg::RMatrix,
    space: &ComplexSubspace,
    regular: bool,
) -> Result<PolarizationReport> {
    let residual = lagrangian_residual(omega, space);
    Ok(PolarizationReport {
        dim: space.dim(),
        is_lagrangian: space.dim() == model.m_complex() && residual <= LAGRANGIAN_TOL,
        lagrangian_residual: residual,
        real_rank: real_rank(space)?,
        regular,
    })
}

/// `T^{0,1}` of the standard structure: `1/2 (d/dy + i d/dtheta)` and
/// `1/2 (d/dx + i d/dv)` per coordinate.
pub fn build_p_j(model: &LocalModel) -> ComplexSubspace {
    let m = model.m_complex();
    let nk = model.torus_factor();
    let mut basis = CMatrix::zeros(model.real_dim(), m);
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    for j in 0..nk {
        basis[(model.y_index(j), j)] = half;
        basis[(model.theta_index(j), j)] = half_i;
    }
    for l in 0..model.r_fiber() {
        basis[(model.re_z_index(l), nk + l)] = half;
        basis[(model.im_z_index(l), nk + l)] = half_i;
    }
    ComplexSubspace::orthonormal(basis * Complex64::new(std::f64::consts::SQRT_2, 0.0))
}

/// `D_C = ker d mu` and `I_C = span xi^#` at `p`.
pub fn build_d_and_i(pot: &KahlerPotential, p: &ModelPoint) -> Result<(ComplexSubspace, ComplexSubspace)> {
    let model = pot.model();
    let dmu = linalg::complexify(&pot.moment_differential(p));
    let d = ComplexSubspace::orthonormal(linalg::null_space(&dmu)?);
    let xi = linalg::complexify(&model::fundamental_fields(model, p));
    let i = ComplexSubspace::span(&xi)?;
    Ok((d, i))
}

/// `P_mix = (P_J cap D_C) + I_C`. At regular points the sum must be direct.
pub fn build_p_mix(pot: &KahlerPotential, p: &ModelPoint) -> Result<(ComplexSubspace, PolarizationReport)> {
    let model = pot.model();
    let regular = model::regularity(model, p).is_regular;
    let p_j = build_p_j(model);
    let (d, i) = build_d_and_i(pot, p)?;
    let core = p_j.intersect(&d)?;
    let sum = linalg::hstack(core.basis(), i.basis());
    let space = if sum.ncols() == 0 {
        ComplexSubspace::zero(model.real_dim())
    } else {
        ComplexSubspace::span(&sum)?
    };
    if regular && space.dim() != core.dim() + i.dim() {
        return Err(Error::RankMismatch {
            expected: core.dim() + i.dim(),
            actual: space.dim(),
        });
    }
    let omega = calculus::build_frame(pot, p)?.omega;
    let rep = report(model, &omega, &space, regular)?;
    Ok((space, rep))
}

/// `P_t`: the common kernel of the flowed holomorphic differentials.
pub fn build_p_t(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint, t: f64) -> Result<ComplexSubspace> {
    let state = flow::closed_flow(pot, phi, p, t);
    let rows = linalg::normalize_rows(&state.reduced_jac);
    let kernel = linalg::null_space(&rows)?;
    if kernel.ncols() != pot.model().m_complex() {
        return Err(Error::DegenerateFrame { det: 0.0 });
    }
    Ok(ComplexSubspace::orthonormal(kernel))
}

/// Principal angles in `[0, pi/2]`, ascending. Each angle is
/// `atan2(sigma_sin, sigma_cos)` so that small angles keep full accuracy.
pub fn principal_angles(a: &ComplexSubspace, b: &ComplexSubspace) -> Result<Vec<f64>> {
    if a.dim() != b.dim() || a.ambient() != b.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    let (qa, qb) = (a.basis(), b.basis());
    let cos = linalg::singular_values(&(qa.adjoint() * qb));
    let residual = qb - qa * (qa.adjoint() * qb);
    let mut sin = linalg::singular_values(&residual);
    sin.reverse();
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(c, s)| s.atan2(*c).clamp(0.0, std::f64::consts::FRAC_PI_2))
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub angle_max: f64,
    pub angle_min: f64,
    /// `angle_max * (1 + t h)` with `h` the smallest eigenvalue of the Hessian of `phi`.
    pub normalized_rate: f64,
    pub lagrangian_residual: f64,
}

/// Principal angles between `P_t` and `P_mix` along `t_grid`.
pub fn convergence_sweep(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    let (p_mix, _) = build_p_mix(pot, p)?;
    let omega = calculus::build_frame(pot, p)?.omega;
    let mu = calculus::moment_map(pot, p).mu;
    let h_scale = linalg::symmetric_eigenvalues(&phi.hessian(&mu))
        .first()
        .copied()
        .unwrap_or(0.0);
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let p_t = build_p_t(pot, phi, p, t)?;
        let angles = principal_angles(&p_t, &p_mix)?;
        let angle_max = angles.last().copied().unwrap_or(0.0);
        rows.push(SweepRow {
            t,
            angle_max,
            angle_min: angles.first().copied().unwrap_or(0.0),
            normalized_rate: angle_max * (1.0 + t * h_scale),
            lagrangian_residual: lagrangian_residual(&omega, &p_t),
        });
    }
    Ok(rows)
}

/// Smallest principal angle between `P` and `conj P`; positive iff `P cap conj P = 0`.
pub fn kahler_gap(space: &ComplexSubspace) -> Result<f64> {
    Ok(principal_angles(space, &space.conj())?
        .first()
        .copied()
        .unwrap_or(std::f64::consts::FRAC_PI_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::InvarianceOptions;
    use crate::field::ScalarField;
    use crate::linalg::c;
    use std::f64::consts::{E, FRAC_PI_4};

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

    fn line(v: &[Complex64]) -> ComplexSubspace {
        ComplexSubspace::span(&CMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn p_j_examples() {
        let flat = LocalModel::new(1, 1, 1, vec![vec![1]]).unwrap();
        let pj = build_p_j(&flat);
        assert_eq!(pj.dim(), 1);
        let expected = line(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert!(principal_angles(&pj, &expected).unwrap()[0] < 1e-15);
        let (pot, _, _) = weighted([c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(build_p_j(pot.model()).dim(), 2);
        let (pot, _, _) = cylinder();
        assert!(lagrangian_residual(&calculus::build_frame(&pot, &cylinder().2).unwrap().omega, &build_p_j(pot.model())) < 1e-15);
    }

    #[test]
    fn d_and_i_examples() {
        let (pot, _, p) = cylinder();
        let (d, i) = build_d_and_i(&pot, &p).unwrap();
        let theta = line(&[c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(principal_angles(&d, &theta).unwrap()[0] < 1e-14);
        assert!(principal_angles(&i, &theta).unwrap()[0] < 1e-14);

        let (pot, _, p) = weighted([c(0.0, 0.0), c(0.0, 0.0)]);
        let (d, i) = build_d_and_i(&pot, &p).unwrap();
        assert_eq!((d.dim(), i.dim()), (4, 0));

        let (pot, _, p) = mixed();
        let (d, i) = build_d_and_i(&pot, &p).unwrap();
        assert_eq!((d.dim(), i.dim()), (2, 2));
        assert!(i.containment_residual(&d) < 1e-12);
    }

    #[test]
    fn p_mix_examples() {
        let (pot, _, p) = cylinder();
        let (space, rep) = build_p_mix(&pot, &p).unwrap();
        assert_eq!((rep.dim, rep.real_rank), (1, 1));
        assert!(rep.is_lagrangian);
        assert!(principal_angles(&space, &line(&[c(0.0, 0.0), c(1.0, 0.0)])).unwrap()[0] < 1e-14);

        let (pot, _, p) = mixed();
        let (_, rep) = build_p_mix(&pot, &p).unwrap();
        assert_eq!((rep.dim, rep.real_rank), (2, 2));
        assert!(rep.is_lagrangian);

        let (pot, _, p) = weighted([c(0.6, 0.3), c(0.2, -0.4)]);
        let (_, rep) = build_p_mix(&pot, &p).unwrap();
        assert_eq!((rep.dim, rep.real_rank), (2, 1));
        assert!(rep.is_lagrangian);

        let (pot, _, p) = weighted([c(0.0, 0.0), c(0.0, 0.0)]);
        let (_, rep) = build_p_mix(&pot, &p).unwrap();
        assert!(!rep.regular);
    }

    #[test]
    fn p_t_examples() {
        let (pot, phi, p) = cylinder();
        let p0 = build_p_t(&pot, &phi, &p, 0.0).unwrap();
        assert!(principal_angles(&p0, &build_p_j(pot.model())).unwrap()[0] < 1e-10);
        let p1 = build_p_t(&pot, &phi, &p, 1.0).unwrap();
        let expected = line(&[c(0.5, 0.0), c(0.0, 1.0)]);
        assert!(principal_angles(&p1, &expected).unwrap()[0] < 1e-14);

        for (pot, phi, p) in [cylinder(), mixed(), weighted([c(0.6, 0.3), c(0.2, -0.4)])] {
            let omega = calculus::build_frame(&pot, &p).unwrap().omega;
            for t in [0.0, 1.0, 10.0] {
                let pt = build_p_t(&pot, &phi, &p, t).unwrap();
                assert!(lagrangian_residual(&omega, &pt) < 1e-9);
                assert!(kahler_gap(&pt).unwrap() > 1e-6);
            }
        }
    }

    #[test]
    fn p_t_is_minus_i_eigenspace_of_j_t() {
        let (pot, phi, p) = mixed();
        let t = 2.5;
        let j = linalg::complexify(&crate::structure::complex_structure(&pot, &phi, &p, t).unwrap().j);
        let pt = build_p_t(&pot, &phi, &p, t).unwrap();
        let q = pt.basis();
        let residual = &j * q + q * Complex64::i();
        assert!(linalg::max_abs(&residual) < 1e-10);
    }

    #[test]
    fn principal_angle_examples() {
        let (pot, phi, p) = mixed();
        let pt = build_p_t(&pot, &phi, &p, 1.0).unwrap();
        assert!(principal_angles(&pt, &pt).unwrap().iter().all(|a| *a < 1e-7));
        let (pot, phi, p) = cylinder();
        let (p_mix, _) = build_p_mix(&pot, &p).unwrap();
        let p0 = build_p_t(&pot, &phi, &p, 0.0).unwrap();
        assert!((principal_angles(&p0, &p_mix).unwrap()[0] - FRAC_PI_4).abs() < 1e-14);
        assert!(matches!(
            principal_angles(&p0, &ComplexSubspace::zero(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn cylinder_sweep_matches_closed_form() {
        let (pot, phi, p) = cylinder();
        let rows = convergence_sweep(&pot, &phi, &p, &[0.0, 1.0, 10.0, 100.0]).unwrap();
        for row in &rows {
            let expected = (1.0 / (1.0 + row.t)).atan();
            assert!((row.angle_max - expected).abs() < 1e-12, "t = {}", row.t);
        }
        assert!((rows[3].normalized_rate - 1.0).abs() < 0.02);
        let pj = build_p_j(pot.model());
        let (p_mix, _) = build_p_mix(&pot, &p).unwrap();
        assert!((rows[0].angle_max - principal_angles(&pj, &p_mix).unwrap()[0]).abs() < 1e-15);
    }
}
