use surrobench::encoding::{categorical_layout, to_categorical};
use surrobench::metrics::median;
use surrobench::optimizers::{
    run_bananas, run_local_search, run_optimizer, run_re, run_rs, BananasConfig, CategoricalEstimator, Evaluation,
    FnObjective, LocalSearchConfig, OptimizerConfig, OptimizerKind, OracleObjective, ReConfig, TpeSmoothing,
    Trajectory,
};
use surrobench::rng::{seeded, substream};
use surrobench::searchspace::{pair_index, sample_uniform, validate};
use surrobench::synth::{OracleParams, SyntheticOracle};
use surrobench::{Genotype, Operation, SimRng, SpaceConfig};

fn check_invariants(t: &Trajectory, budget: usize, space: &SpaceConfig) {
    assert_eq!(t.events.len(), budget);
    let mut clock = 0.0;
    let mut best = f64::INFINITY;
    for (k, e) in t.events.iter().enumerate() {
        assert_eq!(e.eval_index, k + 1);
        clock += e.runtime_s;
        assert!((e.sim_time_s - clock).abs() <= 1e-9 * clock);
        best = best.min(e.val_error);
        assert_eq!(e.incumbent_error, best);
        validate(&e.genotype, space).unwrap();
    }
}

#[test]
fn every_optimizer_keeps_trajectory_invariants_on_the_oracle() {
    let space = SpaceConfig::default();
    let oracle = SyntheticOracle::new(&space, OracleParams::with_seed(90));
    let obj = OracleObjective::noisy(&oracle);
    let cfg = OptimizerConfig {
        bananas: BananasConfig { n_init: 30, ..BananasConfig::default() },
        ..OptimizerConfig::default()
    };
    for kind in OptimizerKind::ALL {
        let t = run_optimizer(kind, &cfg, &obj, 250, &mut seeded(91));
        check_invariants(&t, 250, &space);
        assert_eq!(t, run_optimizer(kind, &cfg, &obj, 250, &mut seeded(91)), "{kind}");
    }
}

#[test]
fn rs_node4_parent_pairs_pass_chi_square() {
    let space = SpaceConfig::default();
    let obj = FnObjective {
        space: space.clone(),
        f: |_: &Genotype, _: &mut SimRng| Evaluation { val_error: 0.5, runtime_s: 1.0 },
    };
    let n = 20_000;
    let t = run_rs(&obj, n, &mut seeded(92));
    let mut counts = [0f64; 10];
    for e in &t.events {
        for cell in [&e.genotype.normal, &e.genotype.reduction] {
            let [a, b] = cell.nodes()[3];
            counts[pair_index(3, a.parent, b.parent)] += 1.0;
        }
    }
    let expected = 2.0 * n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99.9 % quantile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.877, "chi2 {chi2}, counts {counts:?}");
}

fn tiny_space() -> SpaceConfig {
    SpaceConfig::reduced(1, &SpaceConfig::default().ops).unwrap()
}

/// Error = share of edges that are not sep_conv_3x3; unimodal under one-edit moves.
fn count_objective(space: SpaceConfig) -> FnObjective<impl Fn(&Genotype, &mut SimRng) -> Evaluation + Sync> {
    FnObjective {
        space,
        f: |g: &Genotype, _: &mut SimRng| {
            let edges: Vec<_> = g.normal.edges().chain(g.reduction.edges()).collect();
            let bad = edges.iter().filter(|e| e.op != Operation::SepConv3x3).count();
            Evaluation { val_error: bad as f64 / edges.len() as f64, runtime_s: 1.0 }
        },
    }
}

#[test]
fn local_search_reaches_the_optimum_within_one_climb() {
    let obj = count_objective(tiny_space());
    // 24 neighbors per step, at most 4 improving steps, plus the start
    let one_climb = 1 + 24 * 5;
    for seed in 0..100 {
        let t = run_local_search(&obj, &LocalSearchConfig::default(), one_climb, &mut substream(93, "ls", seed));
        assert_eq!(t.final_incumbent(), Some(0.0), "seed {seed}");
    }
}

#[test]
fn rs_samples_without_replacement_until_the_space_is_exhausted() {
    let space = tiny_space();
    let obj = count_objective(space.clone());
    let t = run_rs(&obj, 2401, &mut seeded(94));
    let distinct: std::collections::HashSet<_> = t.events.iter().map(|e| &e.genotype).collect();
    assert_eq!(distinct.len(), 2401);
}

#[test]
fn tpe_estimator_concentrates_on_a_dominant_category() {
    let space = SpaceConfig::default();
    let layout = categorical_layout(&space);
    let mut rng = seeded(95);
    // node-4 parent pair of the normal cell is dimension 3
    let good: Vec<_> = (0..20)
        .map(|_| {
            let mut v = to_categorical(&sample_uniform(&mut rng, &space), &space);
            v.dims[3].value = 7;
            v
        })
        .collect();
    let refs: Vec<_> = good.iter().collect();
    let est = CategoricalEstimator::fit(&layout, &refs, TpeSmoothing::AddOne);
    assert!((est.prob(3, 7) - 21.0 / 30.0).abs() < 1e-12);
    let n = 5000;
    let hits = (0..n).filter(|_| est.sample(&mut rng).dims[3].value == 7).count() as f64;
    let p = 0.7;
    assert!((hits - n as f64 * p).abs() <= 3.0 * (n as f64 * p * (1.0 - p)).sqrt(), "{hits}");
}

#[test]
fn proportional_smoothing_ignores_duplication() {
    let space = SpaceConfig::default();
    let layout = categorical_layout(&space);
    let mut rng = seeded(96);
    let obs: Vec<_> = (0..30).map(|_| to_categorical(&sample_uniform(&mut rng, &space), &space)).collect();
    let once: Vec<_> = obs.iter().collect();
    let twice: Vec<_> = obs.iter().chain(obs.iter()).collect();
    let smoothing = TpeSmoothing::Proportional { alpha: 0.5 };
    let a = CategoricalEstimator::fit(&layout, &once, smoothing);
    let b = CategoricalEstimator::fit(&layout, &twice, smoothing);
    for v in &obs {
        assert!((a.log_prob(v) - b.log_prob(v)).abs() < 1e-12);
    }
}

fn final_medians(seeds: u64, f: impl Fn(u64) -> Trajectory) -> f64 {
    median(&(0..seeds).map(|s| f(s).final_incumbent().unwrap()).collect::<Vec<_>>())
}

#[test]
fn re_and_bananas_beat_rs_on_a_smooth_objective() {
    let space = SpaceConfig::default();
    let oracle = SyntheticOracle::new(&space, OracleParams::additive(97));
    let obj = OracleObjective::exact(&oracle);
    let budget = 400;
    let rs = final_medians(10, |s| run_rs(&obj, budget, &mut substream(97, "rs", s)));
    let re_cfg = ReConfig { init_pop: 50, sample_size: 10 };
    let re = final_medians(10, |s| run_re(&obj, &re_cfg, budget, &mut substream(97, "re", s)));
    let ba_cfg = BananasConfig { n_init: 50, ..BananasConfig::default() };
    let ba = final_medians(10, |s| run_bananas(&obj, &ba_cfg, budget, &mut substream(97, "bananas", s)));
    assert!(re < rs, "RE {re} vs RS {rs}");
    assert!(ba < rs, "BANANAS {ba} vs RS {rs}");
}
