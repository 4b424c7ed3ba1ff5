//! Property tests for the structural invariants of the library.

use dbrs_core::convergence::{eps_sweep, SweepOptions};
use dbrs_core::dissipation::{dissipation_eps, dissipation_eps_with, dissipation_zero, fast_slope_integral, QuadratureOptions};
use dbrs_core::dynamics::{integrate_full, integrate_projected, integrate_reduced, lift_reduced, uniform_times};
use dbrs_core::gradient::{cosh_primal, d_energy, energy};
use dbrs_core::network::monomial;
use dbrs_core::{
    fixtures, GradientEvaluator, IntegratorOptions, ReactionNetwork, Scale, SlowManifoldSolver, Speed, TiltVector,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn networks() -> Vec<ReactionNetwork> {
    vec![fixtures::three_species(), fixtures::five_species(0.3), fixtures::autocatalytic_pair()]
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn covector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn three_q(c: &[f64]) -> DVector<f64> {
    fixtures::three_species().coarse_graining() * DVector::from_column_slice(c)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn rates_lie_in_stoichiometric_subspace(which in 0usize..3, raw in state(5), eps in 0.01f64..1.0) {
        let net = &networks()[which];
        let c = &raw[..net.num_species()];
        let q = net.structure().q_matrix();
        let r = net.reaction_rate(c, eps).unwrap();
        prop_assert!((&q * &r).amax() <= 1e-12 * (1.0 + r.amax()));
    }

    #[test]
    fn flux_vanishes_exactly_on_ratio_equality(which in 0usize..3, lam in covector(5), raw in state(5)) {
        let net = &networks()[which];
        let n = net.num_species();
        let q = net.structure().q_matrix();
        let shift = q.tr_mul(&DVector::from_column_slice(&lam[..q.nrows()]));
        let eq: Vec<f64> = (0..n).map(|i| net.c_star()[i] * shift[i].exp()).collect();
        for (c, on_eq) in [(eq.as_slice(), true), (&raw[..n], false)] {
            for (r, rx) in net.reactions().iter().enumerate() {
                let single = net.subnetwork(|x| x == rx).unwrap();
                let rate = single.reaction_rate(c, 1.0).unwrap().amax();
                let scaled: Vec<f64> = c.iter().zip(net.c_star()).map(|(x, s)| x / s).collect();
                let (a, b) = (monomial(&scaled, &rx.alpha), monomial(&scaled, &rx.beta));
                let equal = (a - b).abs() <= 1e-10 * a.max(b);
                prop_assert_eq!(rate <= 1e-10 * (1.0 + a.max(b) * net.kappa()[r]), equal);
                if on_eq {
                    prop_assert!(equal);
                }
            }
        }
    }

    #[test]
    fn equilibrium_representative_does_not_change_the_field(raw in state(3), eps in 0.01f64..1.0) {
        let (a, b) = (fixtures::three_species_scaled(1.0), fixtures::three_species_scaled(2.0));
        let (ra, rb) = (a.reaction_rate(&raw, eps).unwrap(), b.reaction_rate(&raw, eps).unwrap());
        prop_assert!((&ra - &rb).amax() <= 1e-10 * (1.0 + ra.amax()));
    }

    #[test]
    fn jacobian_matches_finite_differences(which in 0usize..3, raw in state(5), eps in 0.05f64..1.0) {
        let net = &networks()[which];
        let n = net.num_species();
        let c = &raw[..n];
        let j = net.jacobian(c, eps).unwrap();
        let mut fd = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-6 * c[k];
            let (mut cp, mut cm) = (c.to_vec(), c.to_vec());
            cp[k] += h;
            cm[k] -= h;
            let col = (net.reaction_rate(&cp, eps).unwrap() - net.reaction_rate(&cm, eps).unwrap()) / (2.0 * h);
            fd.set_column(k, &col);
        }
        prop_assert!((&j - &fd).amax() <= 1e-6 * (1.0 + j.amax()));
    }

    #[test]
    fn dual_potential_is_convex_nonnegative_and_zero_at_origin(
        which in 0usize..2, raw in state(5), x in covector(5), y in covector(5), eps in 0.01f64..1.0,
    ) {
        let net = &networks()[which];
        let n = net.num_species();
        let ev = GradientEvaluator::new(net, Scale::Eps(eps)).unwrap();
        let c = &raw[..n];
        let f = |xi: &[f64]| ev.dual_dissipation(c, xi).unwrap().to_f64();
        let (x, y) = (&x[..n], &y[..n]);
        let m: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
        prop_assert!(f(&m) <= 0.5 * (f(x) + f(y)) + 1e-12 * (1.0 + f(x) + f(y)));
        prop_assert!(f(x) >= 0.0);
        prop_assert_eq!(f(&vec![0.0; n]), 0.0);
    }

    #[test]
    fn fenchel_young_inequality(which in 0usize..2, raw in state(5), xi in covector(5), coef in covector(2), eps in 0.01f64..1.0) {
        let net = &networks()[which];
        let n = net.num_species();
        let ev = GradientEvaluator::new(net, Scale::Eps(eps)).unwrap();
        let c = &raw[..n];
        let mut v = DVector::zeros(n);
        for (r, a) in coef.iter().enumerate().take(net.num_reactions()) {
            v.axpy(*a, &net.gamma_f64(r), 1.0);
        }
        let xi = &xi[..n];
        let lhs = ev.primal_dissipation(c, v.as_slice()).unwrap().to_f64() + ev.dual_dissipation(c, xi).unwrap().to_f64();
        prop_assert!(lhs - dot(xi, v.as_slice()) >= -1e-9);
    }

    #[test]
    fn slope_is_continuous_at_the_boundary(raw in state(3), i in 0usize..3) {
        let net = fixtures::three_species();
        let ev = GradientEvaluator::new(&net, Scale::Eps(0.5)).unwrap();
        let mut at = raw.clone();
        at[i] = 0.0;
        let s0 = ev.slope(&at).unwrap().to_f64();
        let mut near = raw;
        near[i] = 1e-24;
        let s1 = ev.slope(&near).unwrap().to_f64();
        prop_assert!(s0.is_finite());
        prop_assert!((s0 - s1).abs() <= 1e-8 * (1.0 + s0));
    }

    #[test]
    fn psi_is_the_constrained_entropy_minimizer(which in 0usize..2, raw in state(5), coef in covector(2)) {
        let net = &networks()[which];
        let n = net.num_species();
        let solver = SlowManifoldSolver::new(net);
        let q = solver.project(&raw[..n]);
        let c = solver.psi(q.as_slice()).unwrap();
        prop_assert!((net.coarse_graining() * &c - &q).amax() <= 1e-10 * (1.0 + q.amax()));
        let de = d_energy(net, c.as_slice()).unwrap();
        for r in (0..net.num_reactions()).filter(|&r| net.is_fast(r)) {
            prop_assert!(net.gamma_f64(r).dot(&de).abs() <= 1e-8);
        }
        let g = net.structure().gamma_fast_matrix();
        let p = &g * DVector::from_column_slice(&coef[..g.ncols()]);
        let e0 = energy(net, c.as_slice()).unwrap();
        for t in [1e-3, 0.1, 1.0] {
            let shifted = &c + &p * t;
            if shifted.iter().all(|&x| x >= 0.0) {
                prop_assert!(energy(net, shifted.as_slice()).unwrap() >= e0 - 1e-12);
            }
        }
    }

    #[test]
    fn psi_is_tilt_covariant(raw in state(5), eta in covector(5)) {
        let net = fixtures::five_species(0.6);
        let solver = SlowManifoldSolver::new(&net);
        let c = solver.psi(solver.project(&raw).as_slice()).unwrap();
        let (tilted, _) = net.tilt(&TiltVector::new(eta.clone())).unwrap();
        let tc: Vec<f64> = c.iter().zip(&eta).map(|(x, e)| x * e.exp()).collect();
        let ts = SlowManifoldSolver::new(&tilted);
        let back = ts.psi(ts.project(&tc).as_slice()).unwrap();
        prop_assert!(max_diff(back.as_slice(), &tc) <= 1e-8 * (1.0 + tc.iter().cloned().fold(0.0, f64::max)));
    }

    #[test]
    fn psi_derivative_is_a_right_inverse(which in 0usize..2, raw in state(5)) {
        let net = &networks()[which];
        let solver = SlowManifoldSolver::new(net);
        let q = solver.project(&raw[..net.num_species()]);
        let m = q.len();
        let qf = net.coarse_graining();
        let mut prod = DMatrix::zeros(m, m);
        for j in 0..m {
            let h = 1e-6;
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[j] += h;
            qm[j] -= h;
            let col = (solver.psi(qp.as_slice()).unwrap() - solver.psi(qm.as_slice()).unwrap()) / (2.0 * h);
            prod.set_column(j, &(&qf * col));
        }
        prop_assert!((prod - DMatrix::identity(m, m)).amax() <= 1e-5);
    }

    #[test]
    fn reduced_and_effective_potentials_agree(raw in state(3), w in covector(2)) {
        // R_eff(c, v) = R̃(c, Q_fa v) on the slow manifold
        let net = fixtures::three_species();
        let solver = SlowManifoldSolver::new(&net);
        let c = solver.psi(three_q(&raw).as_slice()).unwrap();
        let ev = GradientEvaluator::new(&net, Scale::Limit).unwrap();
        let v = net.gamma_f64(0) * w[0] + net.gamma_f64(1) * w[1];
        let a = ev.effective_primal(c.as_slice(), v.as_slice()).unwrap().to_f64();
        let q = net.coarse_graining() * &v;
        let b = ev.reduced_primal(c.as_slice(), q.as_slice()).unwrap().to_f64();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(12) })]

    #[test]
    fn full_dynamics_conserve_and_dissipate(which in 0usize..2, raw in state(5), eps in 0.01f64..1.0) {
        let net = &networks()[which];
        let n = net.num_species();
        let c0 = &raw[..n];
        let tr = integrate_full(net, eps, c0, 2.0, &IntegratorOptions::default()).unwrap();
        let q = net.structure().q_matrix();
        let q0 = &q * DVector::from_column_slice(c0);
        let mut e_prev = f64::INFINITY;
        for s in &tr.states {
            prop_assert!((&q * DVector::from_column_slice(s) - &q0).amax() <= 1e-8 * (1.0 + q0.amax()));
            let e = energy(net, s).unwrap();
            prop_assert!(e <= e_prev + 1e-9);
            e_prev = e;
        }
    }

    #[test]
    fn fast_only_dynamics_conserve_the_coarse_graining(raw in state(3)) {
        let net = fixtures::three_species();
        let fast = net.subnetwork(|r| r.speed == Speed::Fast).unwrap();
        let tr = integrate_full(&fast, 0.1, &raw, 2.0, &IntegratorOptions::default()).unwrap();
        let q0 = three_q(&raw);
        for s in &tr.states {
            prop_assert!((three_q(s) - &q0).amax() <= 1e-8);
        }
    }

    #[test]
    fn projected_trajectories_satisfy_the_constrained_equation(raw in state(3)) {
        let net = fixtures::three_species();
        let solver = SlowManifoldSolver::new(&net);
        let c0 = solver.psi(three_q(&raw).as_slice()).unwrap();
        let tr = integrate_projected(&net, c0.as_slice(), 2.0, &IntegratorOptions::default()).unwrap();
        let slow = net.subnetwork(|r| r.speed == Speed::Slow).unwrap();
        let ev = GradientEvaluator::new(&net, Scale::Limit).unwrap();
        let (dc, lam) = (tr.derivatives.as_ref().unwrap(), tr.multipliers.as_ref().unwrap());
        let mut e_prev = f64::INFINITY;
        for (k, s) in tr.states.iter().enumerate() {
            let r_sl = slow.reaction_rate(s, 1.0).unwrap();
            let res: Vec<f64> = (0..3).map(|i| dc[k][i] - r_sl[i] - lam[k][i]).collect();
            prop_assert!(res.iter().all(|x| x.abs() <= 1e-7));
            let (_, fa) = ev.slope_parts(s).unwrap();
            prop_assert!(fa <= 1e-10 * ev.fast_slope_scale(s));
            let e = energy(&net, s).unwrap();
            prop_assert!(e <= e_prev + 1e-9);
            e_prev = e;
        }
    }

    #[test]
    fn dissipation_parts_are_monotone_in_eps(raw in state(3), e1 in 0.02f64..0.5, factor in 1.5f64..4.0) {
        let net = fixtures::three_species();
        let tr = integrate_full(&net, 0.3, &raw, 1.0, &IntegratorOptions::default()).unwrap();
        let zero = TiltVector::zero(3);
        let small = dissipation_eps(&tr, &net, e1, &zero).unwrap();
        let large = dissipation_eps(&tr, &net, e1 * factor, &zero).unwrap();
        let tol = 1e-9 * (1.0 + large.total.to_f64());
        prop_assert!(small.slope_part.to_f64() >= large.slope_part.to_f64() - tol);
        prop_assert!(small.velocity_part.to_f64() <= large.velocity_part.to_f64() + tol);
        prop_assert!(small.velocity_part.to_f64() >= -1e-12 && small.slope_part.to_f64() >= -1e-12);
    }

    #[test]
    fn tilted_dissipation_matches_the_tilted_network(raw in state(3), eta in covector(3), eps in 0.05f64..1.0) {
        let net = fixtures::three_species();
        let tr = integrate_full(&net, eps, &raw, 1.0, &IntegratorOptions::default()).unwrap();
        let eta = TiltVector::new(eta);
        let a = dissipation_eps(&tr, &net, eps, &eta).unwrap().total.to_f64();
        let (tilted, _) = net.tilt(&eta).unwrap();
        let b = dissipation_eps(&tr, &tilted, eps, &TiltVector::zero(3)).unwrap().total.to_f64();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn cosh_primal_is_uniformly_superlinear() {
    for i in 0..=20_000 {
        let s = -100.0 + i as f64 * 0.01;
        assert!(cosh_primal(s) >= 0.5 * s.abs() * (1.0 + s.abs()).ln() - 1e-12, "s = {s}");
    }
}

#[test]
fn quadrature_error_estimate_is_reliable() {
    let net = fixtures::three_species();
    let zero = TiltVector::zero(3);
    let opts = QuadratureOptions::default();
    for eps in [1.0, 0.1] {
        let coarse = integrate_full(&net, eps, &[10.0, 4.0, 1.0], 2.0, &IntegratorOptions::default().with_output_times(uniform_times(2.0, 100)))
            .unwrap();
        let fine = integrate_full(&net, eps, &[10.0, 4.0, 1.0], 2.0, &IntegratorOptions::default().with_output_times(uniform_times(2.0, 200)))
            .unwrap();
        let a = dissipation_eps_with(&coarse, &net, eps, &zero, &opts, None).unwrap();
        let b = dissipation_eps_with(&fine, &net, eps, &zero, &opts, None).unwrap();
        let change = (a.total.to_f64() - b.total.to_f64()).abs();
        assert!(change < 4.0 * a.quadrature_error, "eps {eps}: change {change:e}, estimate {:e}", a.quadrature_error);
    }
}

#[test]
fn sweep_rows_bound_the_fast_slope_and_the_limit() {
    let net = fixtures::three_species();
    let c0 = [10.0, 4.0, 0.0];
    let eps = [0.1, 0.025, 0.00625];
    let opts = IntegratorOptions::default().with_output_times(uniform_times(3.0, 600));
    let res = eps_sweep(&net, &c0, 3.0, &eps, Some(0.5), &opts, SweepOptions { keep_trajectories: true }).unwrap();
    assert!(res.rows.windows(2).all(|w| w[0].eps > w[1].eps));
    for (row, tr) in res.rows.iter().zip(&res.trajectories) {
        assert!(row.dist_manifold.unwrap() >= 0.0 && row.dist_reduced.unwrap() >= 0.0);
        let d = row.dissipation.unwrap();
        assert!(row.fast_slope_integral.unwrap() <= row.eps * d * (1.0 + 1e-9));
        let tail = tr.as_ref().unwrap().tail_from(row.delta);
        assert!((fast_slope_integral(&tail, &net).unwrap() - row.fast_slope_integral.unwrap()).abs() <= 1e-12 * (1.0 + d));
    }
    let last = res.rows.last().unwrap();
    let limit = res.limit_dissipation.unwrap();
    assert!(last.dissipation.unwrap() >= limit - 0.05 * (1.0 + limit));
    let d = res.rows.iter().map(|r| r.dist_manifold.unwrap()).collect::<Vec<_>>();
    assert!(d[2] <= 0.5 * d[1]);
}

#[test]
fn lifted_reduced_solution_has_limit_balance() {
    let net = fixtures::five_species(0.5);
    let q0 = [2.0, 1.5, 1.0, 0.5];
    let red = integrate_reduced(&net, &q0, 3.0, &IntegratorOptions::with_tolerances(1e-10, 1e-12)).unwrap();
    let lifted = lift_reduced(&net, &red).unwrap();
    let a = dissipation_zero(&red, &net).unwrap();
    let b = dissipation_zero(&lifted, &net).unwrap();
    assert!(a.edb_residual.unwrap().abs() <= 1e-6 * (1.0 + a.energy_initial));
    assert!(b.edb_residual.unwrap().abs() <= 1e-6 * (1.0 + b.energy_initial));
}
