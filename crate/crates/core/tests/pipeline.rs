use colink_core::baselines::BaselineModel;
use colink_core::dataset::{
    generate_synthetic, ingest_checkins, ingest_social_links, PreprocessParams, SyntheticParams,
};
use colink_core::defense::{ObfuscationSpec, PopularityTable};
use colink_core::evaluation::{
    read_scores_csv, run_one, write_report_csv, write_scores_csv, AttackParams, ExperimentConfig, ExperimentInputs,
};

fn small() -> SyntheticParams {
    SyntheticParams {
        n_users: 150,
        n_locations: 80,
        n_communities: 6,
        checkins_per_user: 30,
        seed: 21,
        ..SyntheticParams::default()
    }
}

fn quick_attack() -> AttackParams {
    AttackParams {
        walk_times: 5,
        walk_length: 30,
        dim: 16,
        window: 4,
        epochs: 1,
        ..AttackParams::default()
    }
}

fn config(name: &str, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        preprocess: PreprocessParams {
            min_checkins: 1,
            ..PreprocessParams::default()
        },
        ..ExperimentConfig::attack(name, quick_attack(), seed)
    }
}

#[test]
fn files_round_trip_into_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, social) = generate_synthetic(&small()).unwrap();
    let cpath = dir.path().join("checkins.csv");
    let spath = dir.path().join("social.csv");
    ds.write_csv(&cpath).unwrap();
    social.write_csv(&spath).unwrap();

    let ds2 = ingest_checkins(&cpath).unwrap();
    let links = ingest_social_links(&spath, ds2.users()).unwrap();
    assert_eq!(ds2.len(), ds.len());
    assert_eq!(links.graph.len(), social.len());

    let a = run_one(
        &ExperimentInputs { checkins: &ds, social: &social, meta: None, popularity: None },
        &config("mem", 4),
    )
    .unwrap();
    let b = run_one(
        &ExperimentInputs { checkins: &ds2, social: &links.graph, meta: None, popularity: None },
        &config("file", 4),
    )
    .unwrap();
    assert_eq!(a.scores, b.scores);
    assert!(a.row.auc > 0.6, "auc {}", a.row.auc);

    let scores = dir.path().join("scores.csv");
    write_scores_csv(&scores, &a.pairs, &a.scores, None).unwrap();
    let back = read_scores_csv(&scores).unwrap();
    assert_eq!(back.pairs.pairs, a.pairs.pairs);
    assert_eq!(back.scores, a.scores);

    let report = dir.path().join("report.csv");
    write_report_csv(&report, &[a.row.clone()]).unwrap();
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn defended_and_baseline_runs_complete() {
    let (ds, social) = generate_synthetic(&small()).unwrap();
    let pop = PopularityTable::from_dataset(&ds);
    let inputs = ExperimentInputs { checkins: &ds, social: &social, meta: None, popularity: Some(&pop) };

    let plain = run_one(&inputs, &config("plain", 7)).unwrap();
    let hidden = run_one(
        &inputs,
        &ExperimentConfig {
            defense: Some(ObfuscationSpec::hiding(0.9, 0)),
            ..config("hidden", 7)
        },
    )
    .unwrap();
    let u = hidden.utility.expect("utility for a defended run");
    assert!(u < 1.0);
    assert!(hidden.row.auc < plain.row.auc, "{} vs {}", hidden.row.auc, plain.row.auc);

    let base = run_one(
        &inputs,
        &ExperimentConfig {
            preprocess: config("", 0).preprocess,
            ..ExperimentConfig::baseline("aa", BaselineModel::AaEnt, 7)
        },
    )
    .unwrap();
    assert_eq!(base.pairs.pairs, plain.pairs.pairs);
    assert!(base.row.auc > 0.5);
}
