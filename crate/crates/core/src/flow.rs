//! Imaginary-time Hamiltonian flow `exp(-i t X_phi)` on a local model.
//!
//! `X_phi = sum_j (d phi/d mu_j) xi_j^#` and the coefficients are torus
//! invariant, so each coordinate is an eigenfunction of `D = -i X_phi`:
//! `D w_j = g_j w_j` with `g_j = d phi/d mu_j (mu(p))`, and
//! `D z_l = c_l z_l` with `c_l = sum_gamma g_gamma b_{gamma l}`. Monomials in
//! the coordinates are eigenfunctions with the summed rates (Leibniz rule),
//! which is what the series engine iterates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, ConvexFunction, KahlerPotential};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix};
use crate::model::{LocalModel, ModelPoint};

/// Default series truncation.
pub const DEFAULT_TRUNCATION: usize = 30;
/// A series counts as converged once its last term is below this fraction of the sum.
pub const SERIES_REL_TOL: f64 = 1e-13;

/// A holomorphic coordinate of the model, or the constant function 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coord {
    W(usize),
    Z(usize),
    One,
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coord::W(j) => write!(f, "w{}", j + 1),
            Coord::Z(l) => write!(f, "z{}", l + 1),
            Coord::One => write!(f, "1"),
        }
    }
}

/// All coordinates `w_1.., z_1..` of a model.
pub fn coordinates(model: &LocalModel) -> Vec<Coord> {
    (0..model.torus_factor())
        .map(Coord::W)
        .chain((0..model.r_fiber()).map(Coord::Z))
        .collect()
}

/// Exponential rates of the flow at a source point.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRates {
    pub mu: Vec<f64>,
    /// `d phi / d mu_j` at `mu(p)`.
    pub grad: Vec<f64>,
    /// Hessian of `phi` at `mu(p)`.
    pub hess: RMatrix,
    /// `g_j` for the `w` coordinates.
    pub w_rates: Vec<f64>,
    /// `c_l = sum_gamma g_gamma b_{gamma l}` for the `z` coordinates.
    pub z_rates: Vec<f64>,
}

pub fn flow_rates(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint) -> FlowRates {
    let model = pot.model();
    let mu = calculus::moment_map(pot, p).mu;
    let grad = phi.gradient(&mu);
    let hess = phi.hessian(&mu);
    let nk = model.torus_factor();
    let w_rates = grad[..nk].to_vec();
    let z_rates = (0..model.r_fiber())
        .map(|l| {
            (0..model.k_stab())
                .map(|g| grad[nk + g] * model.weight(g, l))
                .sum()
        })
        .collect();
    FlowRates {
        mu,
        grad,
        hess,
        w_rates,
        z_rates,
    }
}

impl FlowRates {
    pub fn rate(&self, c: Coord) -> f64 {
        match c {
            Coord::W(j) => self.w_rates[j],
            Coord::Z(l) => self.z_rates[l],
            Coord::One => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub w_t: Vec<Complex64>,
    pub z_t: Vec<Complex64>,
    /// `log|w_j^t|`.
    pub y_t: Vec<f64>,
    /// Rows `d w_j^t`, `d z_l^t` over the real basis at the source point.
    pub jac: CMatrix,
    /// Rows of `jac` divided by their nonzero scalar prefactor
    /// (`w_j^t` resp. `exp(t c_l)`); same span row by row, no overflow.
    pub reduced_jac: CMatrix,
    pub rates: FlowRates,
}

impl FlowState {
    pub fn coord(&self, c: Coord) -> Complex64 {
        match c {
            Coord::W(j) => self.w_t[j],
            Coord::Z(l) => self.z_t[l],
            Coord::One => Complex64::new(1.0, 0.0),
        }
    }
}

/// Closed-form flow `w_j^t = w_j e^{t g_j}`, `z_l^t = z_l e^{t c_l}` with the
/// differentials from the chain rule through `mu`:
/// `d w_j^t = w_j^t (d log w_j + t d g_j)`,
/// `d z_l^t = e^{t c_l} (d z_l + t z_l d c_l)`.
pub fn closed_flow(pot: &KahlerPotential, phi: &ConvexFunction, p: &ModelPoint, t: f64) -> FlowState {
    let model = pot.model();
    let rates = flow_rates(pot, phi, p);
    let nk = model.torus_factor();
    let w_t: Vec<Complex64> = p
        .w()
        .iter()
        .zip(&rates.w_rates)
        .map(|(w, g)| w * (t * g).exp())
        .collect();
    let z_t: Vec<Complex64> = p
        .z()
        .iter()
        .zip(&rates.z_rates)
        .map(|(z, c)| z * (t * c).exp())
        .collect();
    let y_t = p
        .y()
        .iter()
        .zip(&rates.w_rates)
        .map(|(y, g)| y + t * g)
        .collect();

    let dmu = pot.moment_differential(p);
    let dgrad = &rates.hess * &dmu;
    let base = calculus::log_coordinate_differentials(model);
    let mut reduced = base.clone();
    let mut scales = Vec::with_capacity(model.m_complex());
    for j in 0..nk {
        for col in 0..model.real_dim() {
            reduced[(j, col)] += Complex64::new(t * dgrad[(j, col)], 0.0);
        }
        scales.push(w_t[j]);
    }
    for l in 0..model.r_fiber() {
        let row = nk + l;
        for col in 0..model.real_dim() {
            let dc: f64 = (0..model.k_stab())
                .map(|g| model.weight(g, l) * dgrad[(nk + g, col)])
                .sum();
            reduced[(row, col)] += p.z()[l] * (t * dc);
        }
        scales.push(Complex64::new((t * rates.z_rates[l]).exp(), 0.0));
    }
    let jac = CMatrix::from_fn(reduced.nrows(), reduced.ncols(), |r, c| scales[r] * reduced[(r, c)]);
    FlowState {
        t,
        w_t,
        z_t,
        y_t,
        jac,
        reduced_jac: reduced,
        rates,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub truncation: usize,
    pub partial_sums: Vec<Complex64>,
    pub tail_bound: f64,
    /// Largest term over the final sum; rounding error is about this times `f64::EPSILON`.
    pub cancellation: f64,
    pub converged: bool,
}

impl SeriesDiagnostics {
    /// Converged, and cancellation between terms cannot have cost more than `tol` relative accuracy.
    pub fn reliable(&self, tol: f64) -> bool {
        self.converged && self.cancellation * f64::EPSILON <= tol
    }
}

/// Normalized terms `(t rate)^k / k!` for `k = 0..=n`, built by the recursion
/// `term_k = term_{k-1} * t rate / k` (no factorials, no overflow before the
/// terms themselves do).
pub fn eigen_terms(t_rate: f64, n: usize) -> Vec<f64> {
    let mut terms = Vec::with_capacity(n + 1);
    let mut term = 1.0;
    terms.push(term);
    for k in 1..=n {
        term *= t_rate / k as f64;
        terms.push(term);
    }
    terms
}

/// Truncated Lie series of an eigenfunction with value `value` and rate
/// `rate` under `D = -i X_phi`: `sum_{k<=n} (t^k/k!) D^k f`.
pub fn eigen_series(value: Complex64, rate: f64, t: f64, n: usize) -> (Complex64, SeriesDiagnostics) {
    let terms = eigen_terms(t * rate, n);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut partial_sums = Vec::with_capacity(n + 1);
    for term in &terms {
        sum += value * *term;
        partial_sums.push(sum);
    }
    let last = (value * terms[n]).norm();
    let tail_bound = last * (t * rate).abs().exp();
    let converged = last <= SERIES_REL_TOL * sum.norm();
    let biggest = terms.iter().fold(0.0f64, |m, x| m.max(x.abs())) * value.norm();
    let cancellation = if biggest == 0.0 { 1.0 } else { biggest / sum.norm() };
    (
        sum,
        SeriesDiagnostics {
            truncation: n,
            partial_sums,
            tail_bound,
            cancellation,
            converged,
        },
    )
}

/// Truncated Lie series `exp(-i t X_phi) f` for a coordinate `f`, using the
/// power law `(-i)^k X_phi^k (f) = f rate^k`.
pub fn lie_series(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    f: Coord,
    n: usize,
) -> Result<(Complex64, SeriesDiagnostics)> {
    if n == 0 {
        return Err(Error::InvalidOrder(0));
    }
    let value = coord_value(p, f)?;
    let rates = flow_rates(pot, phi, p);
    Ok(eigen_series(value, rates.rate(f), t, n))
}

fn coord_value(p: &ModelPoint, c: Coord) -> Result<Complex64> {
    match c {
        Coord::W(j) => p.w().get(j).copied(),
        Coord::Z(l) => p.z().get(l).copied(),
        Coord::One => Some(Complex64::new(1.0, 0.0)),
    }
    .ok_or_else(|| Error::DimensionMismatch(format!("{c} is not a coordinate of the model")))
}

/// `|lhs - rhs| / max(1, |rhs|)`.
pub fn scaled_residual(lhs: Complex64, rhs: Complex64) -> f64 {
    (lhs - rhs).norm() / rhs.norm().max(1.0)
}

/// Largest scaled gap between the truncated series and the closed flow over
/// all coordinates, with the diagnostics of the worst one.
pub fn series_vs_closed(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    n: usize,
) -> (f64, bool) {
    let state = closed_flow(pot, phi, p, t);
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for c in coordinates(pot.model()) {
        let (value, diag) = lie_series(pot, phi, p, t, c, n).expect("model coordinate");
        all_converged &= diag.converged;
        worst = worst.max(scaled_residual(value, state.coord(c)));
    }
    (worst, all_converged)
}

/// Product law `e^{itX}(fg) = (e^{itX} f)(e^{itX} g)`. The left side is the
/// truncated series of `fg` whose iterates come from the Leibniz expansion
/// `D^v(fg) = sum_i C(v,i) D^i f D^{v-i} g`, i.e. a Cauchy product of the
/// normalized iterate sequences. Returns the scaled residual.
pub fn check_product_law(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    f: Coord,
    g: Coord,
    n: usize,
) -> Result<f64> {
    let rates = flow_rates(pot, phi, p);
    let (fv, gv) = (coord_value(p, f)?, coord_value(p, g)?);
    let a: Vec<Complex64> = eigen_terms(t * rates.rate(f), n).iter().map(|x| fv * x).collect();
    let b: Vec<Complex64> = eigen_terms(t * rates.rate(g), n).iter().map(|x| gv * x).collect();
    let mut lhs = Complex64::new(0.0, 0.0);
    for v in 0..=n {
        for i in 0..=v {
            lhs += a[i] * b[v - i];
        }
    }
    let rhs = a.iter().sum::<Complex64>() * b.iter().sum::<Complex64>();
    Ok(scaled_residual(lhs, rhs))
}

/// A Laurent polynomial `sum c_a zeta^a` in a single coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentPoly {
    pub coord: Coord,
    pub terms: Vec<(Complex64, i32)>,
}

impl LaurentPoly {
    pub fn monomial(coord: Coord, coeff: Complex64, power: i32) -> Self {
        LaurentPoly {
            coord,
            terms: vec![(coeff, power)],
        }
    }

    pub fn eval(&self, zeta: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(c, a) in &self.terms {
            if a < 0 && zeta.norm() == 0.0 {
                return Err(Error::DomainEscape(format!(
                    "{} = 0 with negative power {a}",
                    self.coord
                )));
            }
            acc += c * zeta.powi(a);
        }
        Ok(acc)
    }
}

/// Commuting formula `(e^{itX} f)(p) = f(e^{itX} zeta)(p)` for a Laurent
/// polynomial `f` in one coordinate `zeta`: the left side runs the series on
/// each monomial `zeta^a` (rate `a * rate(zeta)`), the right side evaluates
/// `f` at the closed-form flowed coordinate.
pub fn check_commuting_formula(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    f: &LaurentPoly,
    n: usize,
) -> Result<(f64, SeriesDiagnostics)> {
    let rates = flow_rates(pot, phi, p);
    let zeta = coord_value(p, f.coord)?;
    let mut lhs = Complex64::new(0.0, 0.0);
    let mut worst: Option<SeriesDiagnostics> = None;
    for &(c, a) in &f.terms {
        let value = LaurentPoly::monomial(f.coord, c, a).eval(zeta)?;
        let (term, diag) = eigen_series(value, a as f64 * rates.rate(f.coord), t, n);
        lhs += term;
        worst = Some(match worst {
            Some(w) if w.converged && !diag.converged => diag,
            Some(w) if w.converged == diag.converged && diag.cancellation > w.cancellation => diag,
            Some(w) => w,
            None => diag,
        });
    }
    let state = closed_flow(pot, phi, p, t);
    let flowed = state.coord(f.coord);
    if !flowed.is_finite() {
        return Err(Error::DomainEscape(format!("{} overflowed at t = {t}", f.coord)));
    }
    let rhs = f.eval(flowed)?;
    let diag = worst.unwrap_or_else(|| eigen_series(Complex64::new(0.0, 0.0), 0.0, t, n).1);
    Ok((scaled_residual(lhs, rhs), diag))
}

/// Rate of the monomial `prod w^a prod z^b` under the single summand
/// `(d phi/d mu_j) xi_j^#` of `X_phi`.
fn partial_rate(model: &LocalModel, rates: &FlowRates, j: usize, w_pow: &[i32], z_pow: &[i32]) -> f64 {
    let nk = model.torus_factor();
    if j < nk {
        rates.grad[j] * w_pow[j] as f64
    } else {
        let g = j - nk;
        rates.grad[j]
            * z_pow
                .iter()
                .enumerate()
                .map(|(l, &b)| model.weight(g, l) * b as f64)
                .sum::<f64>()
    }
}

/// Composition law for the commuting summands `X_j = (d phi/d mu_j) xi_j^#`:
/// applying `e^{itX_n}`, then `e^{itX_{n-1}}`, ... agrees with `e^{itX}`.
/// Checked on every coordinate and on the product of all coordinates.
pub fn check_composition_law(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    t: f64,
    n: usize,
) -> f64 {
    let model = pot.model();
    let rates = flow_rates(pot, phi, p);
    let nk = model.torus_factor();
    let r = model.r_fiber();
    let mut monomials: Vec<(Vec<i32>, Vec<i32>)> = Vec::new();
    for j in 0..nk {
        let mut w = vec![0; nk];
        w[j] = 1;
        monomials.push((w, vec![0; r]));
    }
    for l in 0..r {
        let mut z = vec![0; r];
        z[l] = 1;
        monomials.push((vec![0; nk], z));
    }
    monomials.push((vec![1; nk], vec![1; r]));

    let mut worst: f64 = 0.0;
    for (w_pow, z_pow) in &monomials {
        let value: Complex64 = p
            .w()
            .iter()
            .zip(w_pow)
            .map(|(w, &a)| w.powi(a))
            .chain(p.z().iter().zip(z_pow).map(|(z, &b)| z.powi(b)))
            .product();
        // The summands leave each other's coefficients fixed, so applying one
        // series to (constant * monomial) just rescales by its partial sum.
        let mut sequential = value;
        let mut total_rate = 0.0;
        for j in (0..model.n_torus()).rev() {
            let rate = partial_rate(model, &rates, j, w_pow, z_pow);
            total_rate += rate;
            sequential = eigen_series(sequential, rate, t, n).0;
        }
        let joint = eigen_series(value, total_rate, t, n).0;
        worst = worst.max(scaled_residual(sequential, joint));
    }
    worst
}

/// Exponent additivity `w^{s+t} = w e^{s g} e^{t g}` at a fixed source point.
pub fn check_semigroup(
    pot: &KahlerPotential,
    phi: &ConvexFunction,
    p: &ModelPoint,
    s: f64,
    t: f64,
) -> f64 {
    let joint = closed_flow(pot, phi, p, s + t);
    let rates = &joint.rates;
    let mut worst: f64 = 0.0;
    for c in coordinates(pot.model()) {
        let split = coord_value(p, c).expect("model coordinate") * (s * rates.rate(c)).exp() * (t * rates.rate(c)).exp();
        worst = worst.max(scaled_residual(joint.coord(c), split));
    }
    worst
}
