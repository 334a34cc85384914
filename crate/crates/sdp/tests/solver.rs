use enrand_sdp::{
    check_feasible, feasibility_slack, solve, LinearConstraint, LmiBlock, SdpOptions, SdpProblem, Sense, Status,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, v)
}

fn unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m[(j, i)] = 1.0;
    m
}

/// Gram-matrix feasibility problem for a prepare-and-measure behaviour.
fn gram_problem(e: (f64, f64), w: (f64, f64)) -> SdpProblem {
    // variables: u, v, eta1, eta2
    let mut c = DMatrix::identity(4, 4);
    c[(0, 2)] = e.0;
    c[(2, 0)] = e.0;
    c[(1, 2)] = e.1;
    c[(2, 1)] = e.1;
    c[(0, 3)] = -1.0;
    c[(3, 0)] = -1.0;
    c[(1, 3)] = -1.0;
    c[(3, 1)] = -1.0;
    let blk = LmiBlock::new(c)
        .with_term(0, unit(4, 0, 1))
        .with_term(1, unit(4, 2, 3))
        .with_term(2, unit(4, 0, 3) * 2.0)
        .with_term(3, unit(4, 1, 3) * 2.0);
    let mut p = SdpProblem::new(4);
    p.add_block(blk);
    p.set_upper(2, w.0);
    p.set_upper(3, w.1);
    p
}

#[test]
fn two_by_two_determinant() {
    let mut p = SdpProblem::new(1);
    p.set_objective(vec![1.0]);
    p.add_block(LmiBlock::new(mat(2, &[0.0, 1.0, 1.0, 0.0])).with_term(0, DMatrix::identity(2, 2)));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-7, "{}", sol.x[0]);
    assert!(sol.dual_objective <= sol.primal_objective + 1e-8);
    assert!((sol.primal_objective - sol.dual_objective).abs() < 1e-7);
}

#[test]
fn constant_identity_without_variables() {
    let mut p = SdpProblem::new(0);
    p.add_block(LmiBlock::new(DMatrix::identity(4, 4)));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert_eq!(sol.primal_objective, 0.0);
}

#[test]
fn gram_outside_boundary_is_infeasible_with_certificate() {
    let p = gram_problem((0.95, -0.95), (0.3, 0.3));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    assert!(p.verify_infeasibility(&sol.duals, 1e-7));
}

#[test]
fn gram_inside_is_feasible() {
    let p = gram_problem((0.5, -0.5), (0.3, 0.3));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!(p.min_block_eigenvalue(&sol.x) > -1e-8);
    assert!(check_feasible(&p, 1e-7).unwrap());
    assert!(!check_feasible(&gram_problem((1.0, -1.0), (0.0, 0.0)), 1e-7).unwrap());
}

#[test]
fn phase_one_slack_examples() {
    let mut p = SdpProblem::new(0);
    p.add_block(LmiBlock::new(DMatrix::identity(3, 3)));
    let r = feasibility_slack(&p, &SdpOptions::default()).unwrap();
    assert!((r.slack - 1.0).abs() < 1e-7);

    let mut q = SdpProblem::new(1);
    q.add_block(LmiBlock::new(mat(2, &[-1.0, 0.0, 0.0, 0.0])).with_term(0, mat(2, &[0.0, 0.0, 0.0, 1.0])));
    assert!(!check_feasible(&q, 1e-7).unwrap());
}

#[test]
fn unbounded_direction_is_reported() {
    let mut p = SdpProblem::new(1);
    p.set_objective(vec![-1.0]);
    p.add_block(LmiBlock::zeros(1).with_term(0, DMatrix::identity(1, 1)));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Unbounded);
    assert!(p.verify_ray(sol.ray.as_ref().unwrap(), 1e-9));
}

#[test]
fn non_symmetric_input_is_rejected() {
    let mut p = SdpProblem::new(0);
    p.add_block(LmiBlock::new(mat(2, &[1.0, 0.5, 0.0, 1.0])));
    assert!(solve(&p, &SdpOptions::default()).is_err());
}

#[test]
fn equality_constraints_are_eliminated() {
    // minimize x0 + x1 s.t. x0 - x1 = 1, [[x0, 1], [1, x1 + 3]] ⪰ 0
    let mut p = SdpProblem::new(2);
    p.set_objective(vec![1.0, 1.0]);
    p.add_block(
        LmiBlock::new(mat(2, &[0.0, 1.0, 1.0, 3.0]))
            .with_term(0, mat(2, &[1.0, 0.0, 0.0, 0.0]))
            .with_term(1, mat(2, &[0.0, 0.0, 0.0, 1.0])),
    );
    p.add_linear(LinearConstraint::new(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    // x0 (x0 + 2) = 1  ->  x0 = √2 − 1
    let x0 = 2f64.sqrt() - 1.0;
    assert!((sol.x[0] - x0).abs() < 1e-7, "{:?}", sol.x);
    assert!((sol.x[1] - (x0 - 1.0)).abs() < 1e-7);
    let r = p.stationarity_residual(&p.objective().to_vec(), &sol.duals);
    assert!(r.iter().all(|v| v.abs() < 1e-6), "{r:?}");
}

#[test]
fn inconsistent_equalities_are_infeasible() {
    let mut p = SdpProblem::new(1);
    p.add_linear(LinearConstraint::new(vec![(0, 1.0)], Sense::Eq, 1.0));
    p.add_linear(LinearConstraint::new(vec![(0, 2.0)], Sense::Eq, 3.0));
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    assert!(p.verify_infeasibility(&sol.duals, 1e-9));
}

#[test]
fn many_blocks_sharing_one_variable() {
    // minimize t + Σ u_b s.t. [[u_b, 1], [1, t]] ⪰ 0; optimum t = √B, value 2√B
    let nb = 100;
    let mut p = SdpProblem::new(nb + 1);
    p.set_objective(vec![1.0; nb + 1]);
    for b in 0..nb {
        p.add_block(
            LmiBlock::new(mat(2, &[0.0, 1.0, 1.0, 0.0]))
                .with_term(b + 1, mat(2, &[1.0, 0.0, 0.0, 0.0]))
                .with_term(0, mat(2, &[0.0, 0.0, 0.0, 1.0])),
        );
    }
    let sol = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    // the objective is flat at the optimum: a 1e-10 objective error allows ~1e-5 in t
    assert!((sol.primal_objective - 20.0).abs() < 1e-7, "{}", sol.primal_objective);
    assert!((sol.x[0] - 10.0).abs() < 1e-4, "{}", sol.x[0]);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let p = gram_problem((0.3, -0.1), (0.2, 0.1));
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(a, b);
}

fn sym_from(n: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // minimize t s.t. tI − A ⪰ 0 gives the largest eigenvalue of A
    #[test]
    fn largest_eigenvalue_matches_eigensolver(n in 1usize..=6, vals in prop::collection::vec(-3.0f64..3.0, 21)) {
        let a = sym_from(n, &vals);
        let mut p = SdpProblem::new(1);
        p.set_objective(vec![1.0]);
        p.add_block(LmiBlock::new(-a.clone()).with_term(0, DMatrix::identity(n, n)));
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let lmax = a.symmetric_eigenvalues().max();
        prop_assert!((sol.x[0] - lmax).abs() < 1e-6 * (1.0 + lmax.abs()));
        prop_assert!(sol.dual_objective <= sol.primal_objective + 1e-8 * (1.0 + lmax.abs()));
    }

    #[test]
    fn feasibility_verdict_is_scale_invariant(e1 in -1.0f64..1.0, e2 in -1.0f64..1.0, w1 in 0.0f64..0.5, w2 in 0.0f64..0.5) {
        let base = gram_problem((e1, e2), (w1, w2));
        let slack = feasibility_slack(&base, &SdpOptions::default()).unwrap().slack;
        prop_assume!(slack.abs() > 1e-5);
        for c in [1e-3, 1e3] {
            let mut p = base.clone();
            let blk = p.blocks()[0].clone().scaled(c);
            p.blocks_mut()[0] = blk;
            prop_assert_eq!(check_feasible(&p, 1e-7).unwrap(), slack >= -1e-7);
        }
    }
}
