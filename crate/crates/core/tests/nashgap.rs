use graphon::arena::{Policy, StrategyProfile};
use graphon::grid::StateGrid;
use graphon::kernel::Kernel;
use graphon::law::{InitialLaw, StateLaw};
use graphon::mfgpde::{ActionSet, PicardOptions};
use graphon::model::ModelSpec;
use graphon::nashgap::{
    estimate_gap, estimate_gaps, gap_sweep, Aggregate, Estimator, GapOptions, Generator, LabelChoice, PdeSettings,
    SweepConfig, CAVEAT,
};
use graphon::netgen::{erdos_renyi, LabelAssignment};

fn lq_sweep(ns: Vec<usize>, trials: usize) -> SweepConfig {
    SweepConfig {
        model: ModelSpec::LqTruncated { c: 1.0, horizon: 1.0, sigma: 0.3 },
        kernel: Kernel::constant(1.0).unwrap(),
        initial: InitialLaw::Product { law: StateLaw::Normal { mean: 1.0, sd: 0.5, truncate: 6.0 } },
        generator: Generator::ErdosRenyi { p: 0.5, normalize: true },
        labels: LabelChoice::RandomPerCell,
        aggregate: Aggregate::Mean,
        ns,
        trials,
        paths: 300,
        dt: 0.05,
        seed: 5,
        estimator: Estimator::LqClosedForm,
        lq_cells: 64,
        pde: None,
        thresholds: vec![0.02, 0.0, 0.005],
    }
}

#[test]
fn best_responding_player_in_decoupled_model_gains_nothing() {
    let n = 5;
    let xi = erdos_renyi(n, 0.5, false, 1).unwrap();
    let labels = LabelAssignment::midpoint(n);
    let model = ModelSpec::DecoupledTest { c: 1.0, z0: 0.4, horizon: 1.0, sigma: 0.4 };
    let initial = InitialLaw::Product { law: StateLaw::Uniform { lo: -1.0, hi: 1.0 } };
    let states = StateGrid::new(-3.0, 3.0, 120).unwrap();
    let actions = ActionSet { min: -3.0, max: 3.0, count: 121 };
    let incumbent = StrategyProfile::uniform(n, Policy::Tracking { c: 1.0, horizon: 1.0, target: 0.4 });
    let e = estimate_gap(&xi, &labels, &incumbent, &model, &initial, &Estimator::HjbBestResponse { states, actions }, 2, &GapOptions { paths: 2000, dt: 0.02, seed: 3 }).unwrap();
    // the grid best response approximates the incumbent; allow its discretization loss
    assert!(e.mean <= 3.0 * e.stderr + 1e-3, "{e:?}");
    assert!(e.mean >= -3.0 * e.stderr - 0.02, "{e:?}");
}

#[test]
fn gap_estimates_are_reproducible() {
    let n = 10;
    let xi = erdos_renyi(n, 0.5, true, 4).unwrap();
    let labels = LabelAssignment::random_per_cell(n, 5);
    let model = ModelSpec::LqTruncated { c: 1.0, horizon: 1.0, sigma: 0.3 };
    let initial = InitialLaw::Product { law: StateLaw::Normal { mean: 1.0, sd: 0.5, truncate: 6.0 } };
    let incumbent = StrategyProfile::uniform(n, Policy::Tracking { c: 1.0, horizon: 1.0, target: 1.0 });
    let players: Vec<usize> = (0..n).collect();
    let opts = GapOptions { paths: 200, dt: 0.05, seed: 6 };
    let a = estimate_gaps(&xi, &labels, &incumbent, &model, &initial, &Estimator::LqClosedForm, &players, &opts).unwrap();
    let b = estimate_gaps(&xi, &labels, &incumbent, &model, &initial, &Estimator::LqClosedForm, &players, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|(_, e)| e.mean.is_finite() && e.stderr.is_finite()));
}

#[test]
fn sweep_reports_are_consistent() {
    let reports = gap_sweep(&lq_sweep(vec![10, 20], 2)).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.players.len(), 2 * r.n);
        assert!(r.overall_mean <= r.overall_max);
        assert!(r.mean.mean <= r.max.mean);
        let fr: Vec<f64> = r.fractions.iter().map(|f| f.fraction).collect();
        assert!(fr.windows(2).all(|w| w[1] <= w[0]));
        assert!(fr.iter().all(|f| (0.0..=1.0).contains(f)));
        assert_eq!(r.estimator, "lq_closed_form");
        assert_eq!(r.caveat, CAVEAT);
        let recomputed = r.players.iter().map(|p| p.eps_hat).sum::<f64>() / r.players.len() as f64;
        assert!((recomputed - r.overall_mean).abs() < 1e-15);
    }
}

#[test]
fn lq_gap_shrinks_from_20_to_200_players() {
    let mut cfg = lq_sweep(vec![20, 200], 4);
    cfg.paths = 1000;
    cfg.dt = 0.02;
    let r = gap_sweep(&cfg).unwrap();
    assert!(r[1].mean.mean < r[0].mean.mean);
}

#[test]
fn sweep_rejects_bad_configs() {
    assert!(gap_sweep(&lq_sweep(vec![20, 10], 1)).is_err());
    assert!(gap_sweep(&lq_sweep(vec![10], 0)).is_err());
    let mut cfg = lq_sweep(vec![10], 1);
    cfg.generator = Generator::Sampled { weighted: true };
    assert!(gap_sweep(&cfg).is_err());
    let mut cfg = lq_sweep(vec![10], 1);
    cfg.model = ModelSpec::CrowdAversion { kappa: 1.0, h: 0.2, c: 1.0, z: 0.0, horizon: 1.0, sigma: 0.3 };
    assert!(gap_sweep(&cfg).is_err());
}

#[test]
fn crowd_aversion_sweep_uses_the_pde_incumbent() {
    let states = StateGrid::new(-3.0, 3.0, 60).unwrap();
    let actions = ActionSet { min: -3.0, max: 3.0, count: 31 };
    let mut cfg = lq_sweep(vec![6, 12], 1);
    cfg.model = ModelSpec::CrowdAversion { kappa: 1.0, h: 0.3, c: 1.0, z: 0.0, horizon: 1.0, sigma: 0.4 };
    cfg.kernel = Kernel::two_block(1.6, 0.4, 0.2, 1.0).unwrap();
    cfg.generator = Generator::KernelAtLabels;
    cfg.labels = LabelChoice::Midpoint;
    cfg.initial = InitialLaw::Product { law: StateLaw::Uniform { lo: -0.5, hi: 0.5 } };
    cfg.estimator = Estimator::HjbBestResponse { states, actions };
    cfg.paths = 200;
    cfg.dt = 0.05;
    cfg.pde = Some(PdeSettings { states, actions, time_steps: 20, labels: 4, picard: PicardOptions { damping: 0.5, max_iter: 50, tol: 1e-5 } });
    let r = gap_sweep(&cfg).unwrap();
    assert_eq!(r[0].estimator, "hjb_best_response");
    assert!(r.iter().all(|x| x.players.iter().all(|p| p.eps_hat.is_finite())));
}
