mod common;

use common::Fixture;
use treefuse::admm::AdmmConfig;
use treefuse::experiment::{
    run_experiment, run_replication, select_lambda, write_csv, write_outputs, Arm, ExperimentConfig, LambdaRule, TauRule,
};
use treefuse::graph::NetworkGraph;
use treefuse::synthetic::{generate_datasets, ClusterModel};
use treefuse::Error;

fn small(replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        nodes: 10,
        samples: 30,
        clusters: 2,
        radius: 0.7,
        replications,
        lambda: LambdaRule::ScaledGrid { lo: 1e-2, hi: 10.0, points: 6 },
        ..ExperimentConfig::default()
    }
}

#[test]
fn one_replication_gives_one_row_per_arm_with_a_shared_seed() {
    let out = run_experiment(&small(1)).unwrap();
    assert!(out.failures.is_empty());
    let mut buf = Vec::new();
    write_csv(&out.reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], rows[1][2]);
    assert_eq!([rows[0][1], rows[1][1]], ["mst_l1", "graph_l1"]);
    let rep = &out.reports[0];
    let (m, g) = (rep.arm(Arm::MstL1).unwrap(), rep.arm(Arm::GraphL1).unwrap());
    assert_eq!(m.scalars_setup, g.scalars_setup);
    assert_eq!(m.scalars_setup, 2 * rep.graph_edges as u64 * 2);
    assert_eq!(m.penalty_edges, 9);
    assert_eq!(g.penalty_edges, rep.graph_edges);
}

#[test]
fn per_round_traffic_ratio_is_structural() {
    let out = run_experiment(&small(4)).unwrap();
    for rep in &out.reports {
        let (m, g) = (rep.arm(Arm::MstL1).unwrap(), rep.arm(Arm::GraphL1).unwrap());
        assert_eq!(m.scalars_per_round(), (2 * 9 * 2) as f64);
        assert_eq!(g.scalars_per_round(), (2 * rep.graph_edges * 2) as f64);
    }
}

#[test]
fn replications_do_not_depend_on_scheduling() {
    let serial = run_experiment(&small(3)).unwrap();
    let parallel = run_experiment(&ExperimentConfig { workers: 2, ..small(3) }).unwrap();
    let strip = |reps: &[treefuse::experiment::ReplicationReport]| {
        reps.iter()
            .map(|r| {
                let mut r = r.clone();
                r.arms.iter_mut().for_each(|a| a.wall_time_ms = 0.0);
                r
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&serial.reports), strip(&parallel.reports));
    let alone = run_replication(&small(3), 2, None).unwrap();
    assert_eq!(strip(&[alone])[0], strip(&serial.reports)[2]);
}

#[test]
fn unconnectable_networks_are_recorded_as_attrition() {
    let cfg = ExperimentConfig { radius: 0.01, ..small(2) };
    let out = run_experiment(&cfg).unwrap();
    assert!(out.reports.is_empty());
    assert_eq!(out.failures.len(), 2);
    assert_eq!(out.summary.replications_completed, 0);
    assert_eq!(out.summary.attrition.len(), 2);
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(2)).unwrap();
    write_outputs(dir.path(), &out).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["replications_completed"], 2);
    assert!(summary["arms"]["mst_l1"]["mse"]["p50"].is_number());
    assert!(summary["ratios"]["graph_l1"]["per_round_scalars_ratio_median"].is_number());
    assert_eq!(summary["environment"]["config_hash"].as_str().unwrap().len(), 64);
}

fn two_cluster_path(noise_sd: f64, seed: u64) -> Fixture {
    let graph = NetworkGraph::new(6, (0..5).map(|i| (i, i + 1))).unwrap();
    let truth = ClusterModel {
        coefficients: vec![vec![1.0, 1.0], vec![-1.0, 2.0]],
        assignment: vec![0, 0, 0, 1, 1, 1],
        noise_sd,
    };
    let datasets = generate_datasets(&truth, 40, seed).unwrap();
    Fixture::from_parts(graph, truth, datasets, true)
}

#[test]
fn noiseless_clusters_are_recovered() {
    let f = two_cluster_path(0.0, 3);
    let p = f.problem();
    let grid = [0.01, 0.1, 1.0, 10.0];
    let sel = select_lambda(&p, &AdmmConfig::with_tau(40.0).tolerances(1e-9, 1e-10).max_iters(50_000), &grid, 1e-8).unwrap();
    assert_eq!(sel.partition.cluster_count, 2);
    assert_eq!(sel.partition.cluster_of, vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(sel.grid.len(), 4);
}

#[test]
fn selection_ignores_grid_order_and_duplicates() {
    let f = two_cluster_path(0.5, 4);
    let p = f.problem();
    let base = AdmmConfig::with_tau(40.0).max_iters(20_000);
    let a = select_lambda(&p, &base, &[0.1, 1.0, 10.0, 100.0], 1e-8).unwrap();
    let b = select_lambda(&p, &base, &[100.0, 1.0, 10.0, 0.1, 1.0], 1e-8).unwrap();
    assert_eq!(a.lambda, b.lambda);
    assert_eq!(a.result.solution.beta, b.result.solution.beta);
    let single = select_lambda(&p, &base, &[3.0], 1e-8).unwrap();
    assert_eq!(single.lambda, 3.0);
    assert!(matches!(select_lambda(&p, &base, &[], 1e-8), Err(Error::Selection(_))));
    let starved = AdmmConfig { max_iters: 1, ..base };
    assert!(matches!(select_lambda(&p, &starved, &[1.0], 1e-8), Err(Error::Selection(_))));
}

#[test]
fn config_text_round_trip() {
    let cfg = ExperimentConfig::parse(
        "# comment\nnodes = 12\nsamples=40\nclusters = 2\ncoefficients = 1, 1; -1, 2\n\
         tau = 5\nlambda_grid = 0.1, 1, 10\narms = mst_l1\nseed = 7 # trailing\nworkers = 3\n",
    )
    .unwrap();
    assert_eq!(cfg.nodes, 12);
    assert_eq!(cfg.tau, TauRule::Fixed(5.0));
    assert_eq!(cfg.lambda, LambdaRule::Grid(vec![0.1, 1.0, 10.0]));
    assert_eq!(cfg.coefficients, Some(vec![vec![1.0, 1.0], vec![-1.0, 2.0]]));
    assert_eq!(cfg.arms, vec![Arm::MstL1]);
    cfg.validate().unwrap();
    assert_eq!(cfg.hash(), ExperimentConfig { workers: 1, out: "elsewhere".into(), ..cfg.clone() }.hash());
    assert_ne!(cfg.hash(), ExperimentConfig { seed: 8, ..cfg.clone() }.hash());

    assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(ExperimentConfig::parse("nodes = 3\nsamples = x"), Err(Error::Parse { line: 2, .. })));
    let bad = ExperimentConfig::parse("clusters = 3\ncoefficients = 1, 1; -1, 2").unwrap();
    assert!(bad.validate().is_err());
    assert!(ExperimentConfig { lambda: LambdaRule::Grid(vec![1.0, 0.5]), ..small(1) }.validate().is_err());
}
