//! The full check battery over a prepared scenario.

use polar_ray_core::flow::{self, Coord, LaurentPoly};
use polar_ray_core::polarization;
use polar_ray_core::structure::{self, Transition, POSITIVITY_RATIO};
use polar_ray_core::{calculus, linalg, model, Complex64, ModelPoint, Prepared, Scenario};

use crate::report::{Record, Report, Summary, Sweep};
use crate::{CliError, RunOptions};

/// Where a J_0 entry may differ from the standard structure.
const STANDARD_J_TOL: f64 = 1e-12;
/// `I_C` must lie inside `D_C` to this accuracy.
const INCLUSION_TOL: f64 = 1e-10;

struct Ctx<'a> {
    scenario: &'a Scenario,
    prepared: &'a Prepared,
    truncation: usize,
    records: Vec<Record>,
}

pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Report, CliError> {
    let prepared = scenario.prepare(opts.seed)?;
    let truncation = opts.truncation.unwrap_or(scenario.truncation);
    if truncation == 0 {
        return Err(polar_ray_core::Error::InvalidOrder(0).into());
    }
    let mut ctx = Ctx {
        scenario,
        prepared: &prepared,
        truncation,
        records: Vec::new(),
    };
    ctx.records.push(Record::at_most(
        "model.invariance",
        None,
        None,
        prepared.potential.invariance_deviation(),
        scenario.tolerances.invariance,
    ));
    let mut sweeps = Vec::new();
    for (i, p) in prepared.points.iter().enumerate() {
        let regular = model::regularity(&scenario.model, p).is_regular;
        ctx.point_checks(i, p, regular);
        for &t in &scenario.t_grid {
            ctx.flow_checks(i, p, t);
            ctx.structure_checks(i, p, t, regular);
        }
        if let Some(rows) = ctx.sweep(i, p, regular) {
            sweeps.push(Sweep { point: i, rows });
        }
    }
    let mut records = ctx.records;
    records.sort_by(|a, b| {
        a.check
            .cmp(&b.check)
            .then(a.point.cmp(&b.point))
            .then(a.t.unwrap_or(-1.0).total_cmp(&b.t.unwrap_or(-1.0)))
    });
    Ok(Report {
        scenario: scenario.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        precision: "f64".into(),
        inner_product: "euclidean hermitian on (y, theta, Re z, Im z)".into(),
        notes: vec![
            "geodesic: only the affine motion of log|w^t| in t is verified; the geodesic equation itself is not discretized".into(),
            "P_mix rank and Lagrangian claims are asserted on the regular locus only".into(),
        ],
        seed: prepared.seed,
        truncation,
        t_grid: scenario.t_grid.clone(),
        timestamp: opts.timestamp,
        summary: Summary::of(&records),
        records,
        sweeps,
    })
}

impl Ctx<'_> {
    fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    fn point_checks(&mut self, i: usize, p: &ModelPoint, regular: bool) {
        let tol = self.scenario.tolerances.clone();
        let pot = &self.prepared.potential;
        let phi = &self.prepared.phi;
        let model = pot.model();
        let pt = Some(i);

        let stab = model::regularity(model, p).stab_dim;
        let mut drift = 0usize;
        for s in model::group_samples(model, self.scenario.group_samples, self.prepared.seed) {
            let moved = model::act(model, p, &s);
            drift = drift.max(model::regularity(model, &moved).stab_dim.abs_diff(stab));
        }
        self.push(Record::at_most("model.regularity_invariance", pt, None, drift as f64, 0.0));
        self.push(Record::observed("model.stab_dim", pt, None, stab as f64, "informational"));

        let mu = calculus::moment_map(pot, p);
        match phi.check_convex_at(&mu.mu) {
            Ok(min) => self.push(Record::above("calculus.convexity", pt, None, min, 0.0)),
            Err(e) => self.push(Record::errored("calculus.convexity", pt, None, &e)),
        }
        self.push(Record::at_most(
            "calculus.oracle",
            pt,
            None,
            calculus::oracle_audit(pot, phi, p),
            tol.oracle,
        ));
        match calculus::moment_identity_residual(pot, p) {
            Ok(v) => self.push(Record::at_most("calculus.moment_identity", pt, None, v, tol.moment_identity)),
            Err(e) => self.push(Record::errored("calculus.moment_identity", pt, None, &e)),
        }
        if model.torus_factor() == 0 {
            self.push(Record::skipped("calculus.jac_y", pt, None, "no-torus-factor"));
        } else {
            let asym = linalg::max_abs_real(&(&mu.jac_y - mu.jac_y.transpose()));
            let min = linalg::symmetric_eigenvalues(&mu.jac_y)[0];
            self.push(Record::at_most("calculus.jac_y_symmetry", pt, None, asym, tol.symmetry));
            self.push(Record::above("calculus.jac_y_positive", pt, None, min, 0.0));
        }
        match calculus::build_frame(pot, p) {
            Ok(frame) => {
                let dmu = pot.moment_differential(p);
                let mut worst: f64 = 0.0;
                for a in 0..dmu.nrows() {
                    for b in 0..dmu.nrows() {
                        let fa = dmu.row(a).transpose();
                        let fb = dmu.row(b).transpose();
                        worst = worst.max(calculus::poisson_bracket(&frame, &fa, &fb).abs());
                    }
                }
                self.push(Record::at_most("calculus.torus_brackets", pt, None, worst, tol.bracket));
            }
            Err(e) => self.push(Record::errored("calculus.torus_brackets", pt, None, &e)),
        }

        match polarization::build_d_and_i(pot, p) {
            Ok((d, inc)) => self.push(Record::at_most(
                "polarization.orbit_in_kernel",
                pt,
                None,
                inc.containment_residual(&d),
                INCLUSION_TOL,
            )),
            Err(e) => self.push(Record::errored("polarization.orbit_in_kernel", pt, None, &e)),
        }
        match polarization::build_p_mix(pot, p) {
            Ok((_, rep)) if regular => {
                let m = model.m_complex() as f64;
                let n = model.n_torus() as f64;
                self.push(Record::at_most("polarization.p_mix_dim", pt, None, (rep.dim as f64 - m).abs(), 0.0));
                self.push(Record::at_most(
                    "polarization.p_mix_real_rank",
                    pt,
                    None,
                    (rep.real_rank as f64 - n).abs(),
                    0.0,
                ));
                self.push(Record::at_most(
                    "polarization.p_mix_lagrangian",
                    pt,
                    None,
                    rep.lagrangian_residual,
                    tol.lagrangian,
                ));
            }
            Ok((_, rep)) => {
                self.push(Record::observed("polarization.p_mix_dim", pt, None, rep.dim as f64, "non-regular"));
                self.push(Record::observed(
                    "polarization.p_mix_real_rank",
                    pt,
                    None,
                    rep.real_rank as f64,
                    "non-regular",
                ));
                self.push(Record::observed(
                    "polarization.p_mix_lagrangian",
                    pt,
                    None,
                    rep.lagrangian_residual,
                    "non-regular",
                ));
            }
            Err(e) => self.push(Record::errored("polarization.p_mix_dim", pt, None, &e)),
        }
        self.push(Record::at_most(
            "structure.geodesic_linearity",
            pt,
            None,
            structure::geodesic_linearity(pot, phi, p, &self.scenario.t_grid),
            tol.linearity,
        ));
    }

    fn flow_checks(&mut self, i: usize, p: &ModelPoint, t: f64) {
        let tol = self.scenario.tolerances.clone();
        let pot = &self.prepared.potential;
        let phi = &self.prepared.phi;
        let n = self.truncation;
        let (pt, tt) = (Some(i), Some(t));
        let state = flow::closed_flow(pot, phi, p, t);
        let coords = flow::coordinates(pot.model());

        let mut worst: f64 = 0.0;
        let mut converged = true;
        for &c in &coords {
            let (value, diag) = flow::lie_series(pot, phi, p, t, c, n).expect("model coordinate");
            converged &= diag.reliable(tol.series);
            let closed = state.coord(c);
            worst = worst.max((value - closed).norm() / (1.0 + closed.norm()));
        }
        if converged {
            self.push(Record::at_most("flow.series", pt, tt, worst, tol.series));
        } else {
            self.push(Record::observed("flow.series", pt, tt, worst, "series-not-converged"));
        }

        let mut product: f64 = 0.0;
        for &a in &coords {
            for &b in coords.iter().chain([Coord::One].iter()) {
                product = product.max(flow::check_product_law(pot, phi, p, t, a, b, n).expect("model coordinate"));
            }
        }
        self.push(Record::at_most("flow.product_law", pt, tt, product, tol.laws));

        let mut commuting: f64 = 0.0;
        let mut reliable = true;
        let mut escaped = None;
        for &c in &coords {
            let one = Complex64::new(1.0, 0.0);
            for power in [2, -1] {
                let f = LaurentPoly::monomial(c, one, power);
                match flow::check_commuting_formula(pot, phi, p, t, &f, n) {
                    Ok((v, diag)) => {
                        commuting = commuting.max(v);
                        reliable &= diag.reliable(tol.laws);
                    }
                    Err(polar_ray_core::Error::DomainEscape(msg)) => escaped = Some(msg),
                    Err(e) => {
                        self.push(Record::errored("flow.commuting_formula", pt, tt, &e));
                        return;
                    }
                }
            }
        }
        let mut r = if reliable {
            Record::at_most("flow.commuting_formula", pt, tt, commuting, tol.laws)
        } else {
            Record::observed("flow.commuting_formula", pt, tt, commuting, "series-not-converged")
        };
        r.detail = escaped.map(|m| format!("some monomials skipped: {m}"));
        self.push(r);

        self.push(Record::at_most(
            "flow.composition_law",
            pt,
            tt,
            flow::check_composition_law(pot, phi, p, t, n),
            tol.laws,
        ));
        self.push(Record::at_most(
            "flow.semigroup",
            pt,
            tt,
            flow::check_semigroup(pot, phi, p, t / 2.0, t / 2.0),
            tol.linearity,
        ));
    }

    fn structure_checks(&mut self, i: usize, p: &ModelPoint, t: f64, regular: bool) {
        let tol = self.scenario.tolerances.clone();
        let pot = &self.prepared.potential;
        let phi = &self.prepared.phi;
        let model = pot.model();
        let (pt, tt) = (Some(i), Some(t));

        if model.torus_factor() == 0 {
            self.push(Record::skipped("structure.block_det", pt, tt, "no-torus-factor"));
        } else {
            match structure::block_matrix(pot, phi, p, t) {
                Ok(b) => {
                    let gap = (b.det - b.reduced_det).abs() / b.reduced_det.abs().max(1.0);
                    self.push(Record::at_most("structure.block_det", pt, tt, gap, tol.block_det));
                    self.push(Record::above("structure.block_det_positive", pt, tt, b.det, 0.0));
                }
                Err(e) if !regular => {
                    let mut r = Record::skipped("structure.block_det", pt, tt, "non-regular");
                    r.detail = Some(e.to_string());
                    self.push(r);
                }
                Err(e) => self.push(Record::errored("structure.block_det", pt, tt, &e)),
            }
        }

        let omega = match calculus::build_frame(pot, p) {
            Ok(f) => f.omega,
            Err(e) => {
                self.push(Record::errored("structure.complex_structure", pt, tt, &e));
                return;
            }
        };
        match structure::complex_structure(pot, phi, p, t) {
            Ok(cs) => {
                self.push(Record::at_most("structure.j_square", pt, tt, cs.square_residual(), tol.j_square));
                self.push(Record::at_most("structure.g_symmetry", pt, tt, cs.symmetry_residual(), tol.symmetry));
                self.push(Record::above(
                    "structure.g_positive",
                    pt,
                    tt,
                    cs.eigenvalue_ratio(),
                    POSITIVITY_RATIO,
                ));
                self.push(Record::at_most(
                    "structure.compatibility",
                    pt,
                    tt,
                    cs.compatibility_residual(&omega),
                    tol.j_square,
                ));
                if t == 0.0 {
                    let gap = linalg::max_abs_real(&(&cs.j - structure::standard_structure(model)));
                    self.push(Record::at_most("structure.j0_standard", pt, tt, gap, STANDARD_J_TOL));
                }
            }
            Err(e) => self.push(Record::errored("structure.complex_structure", pt, tt, &e)),
        }
        match structure::check_type_11(pot, phi, p, t) {
            Ok(v) => self.push(Record::at_most("structure.type_11", pt, tt, v, tol.type_11)),
            Err(e) => self.push(Record::errored("structure.type_11", pt, tt, &e)),
        }
        let first = flow::coordinates(model)[0];
        match structure::check_transition_consistency(pot, phi, p, t, &Transition::inversion(first)) {
            Ok(v) => self.push(Record::at_most("structure.transition", pt, tt, v, tol.transition)),
            Err(polar_ray_core::Error::DomainEscape(msg)) => {
                let mut r = Record::skipped("structure.transition", pt, tt, "domain-escape");
                r.detail = Some(msg);
                self.push(r);
            }
            Err(e) => self.push(Record::errored("structure.transition", pt, tt, &e)),
        }

        if !regular {
            self.push(Record::skipped("polarization.p_t_lagrangian", pt, tt, "non-regular"));
            self.push(Record::skipped("polarization.kahler_gap", pt, tt, "non-regular"));
            return;
        }
        match polarization::build_p_t(pot, phi, p, t) {
            Ok(p_t) => {
                self.push(Record::at_most(
                    "polarization.p_t_lagrangian",
                    pt,
                    tt,
                    polarization::lagrangian_residual(&omega, &p_t),
                    tol.lagrangian,
                ));
                match polarization::kahler_gap(&p_t) {
                    Ok(g) => self.push(Record::above("polarization.kahler_gap", pt, tt, g, tol.kahler_gap)),
                    Err(e) => self.push(Record::errored("polarization.kahler_gap", pt, tt, &e)),
                }
            }
            Err(e) => self.push(Record::errored("polarization.p_t_lagrangian", pt, tt, &e)),
        }
    }

    fn sweep(&mut self, i: usize, p: &ModelPoint, regular: bool) -> Option<Vec<polar_ray_core::SweepRow>> {
        let pt = Some(i);
        if !regular {
            self.push(Record::skipped("polarization.sweep_decreasing", pt, None, "non-regular"));
            return None;
        }
        let pot = &self.prepared.potential;
        let phi = &self.prepared.phi;
        match polarization::convergence_sweep(pot, phi, p, &self.scenario.t_grid) {
            Ok(rows) => {
                // largest step of the angle column; strictly decreasing iff negative
                let step = rows
                    .windows(2)
                    .map(|w| w[1].angle_max - w[0].angle_max)
                    .fold(f64::NEG_INFINITY, f64::max);
                if rows.len() < 2 {
                    self.push(Record::skipped("polarization.sweep_decreasing", pt, None, "single-time"));
                } else {
                    self.push(Record::above("polarization.sweep_decreasing", pt, None, -step, 0.0));
                }
                Some(rows)
            }
            Err(e) => {
                self.push(Record::errored("polarization.sweep_decreasing", pt, None, &e));
                None
            }
        }
    }
}
