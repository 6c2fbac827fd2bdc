use graphon::kernel::{cut_norm, opnorm_inf_to_1, CutMode, Kernel, Matrix};
use graphon::law::{InitialLaw, LabelMap};
use graphon::lqflock::{solve_lq, LqParams};
use graphon::measure::{bl_distance, neighborhood_measure, LabelStateMeasure, ParticleMeasure, StateMeasure};
use proptest::prelude::*;

fn signed_matrix(max_n: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| Matrix::from_fn(n, |i, j| v[i * n + j]))
    })
}

fn nonneg_matrix(n: usize, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0..hi, n * n).prop_map(move |v| Matrix::from_fn(n, |i, j| v[i * n + j]))
}

fn measure() -> impl Strategy<Value = ParticleMeasure> {
    prop::collection::vec((-3.0..3.0f64, 0.0..1.0f64), 1..12)
        .prop_map(|a| ParticleMeasure::from_atoms(a).unwrap())
}

fn lq(kernel: Kernel, initial: InitialLaw) -> LqParams {
    LqParams { c: 1.0, horizon: 1.0, sigma: 0.3, kernel, initial }
}

fn affine(intercept: f64, slope: f64) -> InitialLaw {
    InitialLaw::Map { map: LabelMap::Affine { intercept, slope } }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_sandwich_and_l1_dominance(xi in signed_matrix(7)) {
        let cut = cut_norm(&xi, CutMode::Exact).unwrap().value;
        let op = opnorm_inf_to_1(&xi, CutMode::Exact).unwrap().value;
        let n = xi.n() as f64;
        let l1 = xi.as_slice().iter().map(|v| v.abs()).sum::<f64>() / (n * n);
        prop_assert!(cut <= op + 1e-12);
        prop_assert!(op <= 4.0 * cut + 1e-12);
        prop_assert!(op <= l1 + 1e-12);
    }

    #[test]
    fn heuristic_never_exceeds_exact(xi in signed_matrix(9), seed in any::<u64>()) {
        let mode = CutMode::Heuristic { restarts: 4, seed };
        prop_assert!(cut_norm(&xi, mode).unwrap().value <= cut_norm(&xi, CutMode::Exact).unwrap().value + 1e-12);
        prop_assert!(opnorm_inf_to_1(&xi, mode).unwrap().value <= opnorm_inf_to_1(&xi, CutMode::Exact).unwrap().value + 1e-12);
    }

    #[test]
    fn bl_is_a_metric_bounded_by_mass(a in measure(), b in measure(), c in measure()) {
        let ab = bl_distance(&a, &b);
        prop_assert!(bl_distance(&a, &a).abs() < 1e-12);
        prop_assert!((ab - bl_distance(&b, &a)).abs() < 1e-12);
        prop_assert!(ab <= bl_distance(&a, &c) + bl_distance(&c, &b) + 1e-12);
        prop_assert!(ab <= a.mass() + b.mass() + 1e-12);
        prop_assert!(ab >= (a.mass() - b.mass()).abs() - 1e-12);
    }

    #[test]
    fn apply_to_measure_is_linear(
        atoms in prop::collection::vec((0.0..=1.0f64, -2.0..2.0f64, 0.0..1.0f64), 1..10),
        s in 0.0..3.0f64,
        u in 0.0..=1.0f64,
    ) {
        let w = Kernel::two_block(0.9, 0.3, 0.2, 0.7).unwrap();
        let m = LabelStateMeasure::from_atoms(atoms.clone()).unwrap();
        let scaled = LabelStateMeasure::from_atoms(atoms.iter().map(|&(a, x, q)| (a, x, s * q))).unwrap();
        let doubled = LabelStateMeasure::from_atoms(atoms.iter().chain(&atoms).copied()).unwrap();
        let base = w.apply_to_measure(&m, u);
        prop_assert!(bl_distance(&w.apply_to_measure(&scaled, u), &base.scaled(s)) < 1e-12);
        prop_assert!(bl_distance(&w.apply_to_measure(&doubled, u), &base.plus(&base)) < 1e-12);
    }

    #[test]
    fn step_kernel_neighbourhood_matches_matrix_row(
        xi in (1..8usize).prop_flat_map(|n| nonneg_matrix(n, 1.0)),
        seed in any::<u64>(),
    ) {
        let n = xi.n();
        let mut rng = graphon::seeds::rng(seed);
        let states: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
        let labels: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let w = Kernel::step(xi.clone()).unwrap();
        let emp = LabelStateMeasure::empirical(&labels, &states).unwrap();
        for (i, &u) in labels.iter().enumerate() {
            let lhs = w.apply_to_measure(&emp, u);
            let rhs = neighborhood_measure(&xi, &states, i).unwrap();
            prop_assert!(bl_distance(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn target_is_linear_in_the_initial_mean(
        a1 in -2.0..2.0f64, b1 in -2.0..2.0f64, a2 in -2.0..2.0f64, b2 in -2.0..2.0f64,
        blocks in nonneg_matrix(3, 1.0),
    ) {
        let w = Kernel::step(blocks).unwrap();
        let m1 = solve_lq(&lq(w.clone(), affine(a1, b1)), 12).unwrap().target;
        let m2 = solve_lq(&lq(w.clone(), affine(a2, b2)), 12).unwrap().target;
        let m = solve_lq(&lq(w, affine(a1 + a2, b1 + b2)), 12).unwrap().target;
        for l in 0..12 {
            prop_assert!((m[l] - m1[l] - m2[l]).abs() < 1e-10);
        }
    }

    #[test]
    fn target_satisfies_its_fixed_point(blocks in nonneg_matrix(3, 1.2), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let w = Kernel::step(blocks).unwrap();
        let sol = solve_lq(&lq(w.clone(), affine(a, b)), 9).unwrap();
        let grid = sol.labels;
        let ct = sol.params.c * sol.params.horizon;
        let kpsi = w.apply_to_function(&grid, &sol.psi).unwrap();
        let km = w.apply_to_function(&grid, &sol.target).unwrap();
        for l in 0..9 {
            let rhs = kpsi[l] / (ct + 1.0) + sol.katz_parameter * km[l];
            prop_assert!((sol.target[l] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn block_targets_are_stable_under_refinement(blocks in nonneg_matrix(2, 1.0), means in prop::collection::vec(-2.0..2.0f64, 2)) {
        let w = Kernel::step(blocks).unwrap();
        let init = InitialLaw::Map { map: LabelMap::Table { values: means } };
        let coarse = solve_lq(&lq(w.clone(), init.clone()), 2).unwrap().target;
        let fine = solve_lq(&lq(w, init), 8).unwrap().target;
        for l in 0..8 {
            prop_assert!((fine[l] - coarse[l / 4]).abs() < 1e-10);
        }
    }
}
