use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use placelab::window::TimeWindow;
use placelab_cli::cache::DependencyError;
use placelab_cli::config::LabelTarget;
use placelab_cli::fixture::{write_fixture, FixtureParams};
use placelab_cli::{validate, Pipeline, PipelineConfig, Stage};

fn small_fixture(dir: &Path) -> PathBuf {
    let params = FixtureParams { communities: 40, canvas: 70, seed: 11, n_trees: 15 };
    write_fixture(&dir.join("inputs"), &params).unwrap()
}

fn config(cfg_path: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(cfg_path).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg.labels.targets = vec![LabelTarget::Binary, LabelTarget::SSize];
    cfg
}

fn reran(outcomes: &[placelab_cli::cache::UnitOutcome]) -> BTreeSet<String> {
    outcomes.iter().filter(|o| !o.cached).map(|o| o.unit.clone()).collect()
}

#[test]
fn fixture_config_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(&small_fixture(tmp.path()), &tmp.path().join("out"));
    assert_eq!(validate(&cfg), vec![]);

    let mut broken = cfg.clone();
    broken.data.meta = tmp.path().join("nope.csv");
    broken.features.blocks.push("glove".into());
    let codes: Vec<_> = validate(&broken).into_iter().map(|p| p.code).collect();
    assert!(codes.contains(&"MISSING_PATH"), "{codes:?}");
    assert!(codes.contains(&"UNKNOWN_BLOCK") || codes.contains(&"BLOCK_UNAVAILABLE"), "{codes:?}");
}

#[test]
fn stages_refuse_to_run_out_of_order() {
    let tmp = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(config(&small_fixture(tmp.path()), &tmp.path().join("out")));
    let err = pipeline.run(Stage::Canvas).unwrap_err();
    let dep = err.downcast_ref::<DependencyError>().expect("dependency error");
    assert_eq!(dep.run_first, "ingest");

    pipeline.run(Stage::Ingest).unwrap();
    pipeline.run(Stage::Canvas).unwrap();
    let err = pipeline.run(Stage::Labels).unwrap_err();
    assert_eq!(err.downcast_ref::<DependencyError>().expect("dependency error").run_first, "measure");
}

#[test]
fn reruns_only_what_changed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_fixture(tmp.path());
    let pipeline = Pipeline::new(config(&cfg_path, &tmp.path().join("out")));
    let first = pipeline.run_all().unwrap();
    assert!(first.iter().all(|o| !o.cached));
    let second = pipeline.run_all().unwrap();
    assert_eq!(reran(&second), BTreeSet::new());
    assert_eq!(first.len(), second.len());

    // a new comment during the experiment touches only the DP text path
    let dp = TimeWindow::during_place();
    let content = cfg_path.with_file_name("content.jsonl");
    let mut text = fs::read_to_string(&content).unwrap();
    text.push_str(&format!(
        "{{\"kind\":\"comment\",\"id\":\"t1_extra\",\"parent_id\":\"t3_s1\",\"author\":\"late_user\",\"subreddit\":\"comm001\",\"created_utc\":{},\"body\":\"team plan together\",\"score\":3}}\n",
        dp.start / 1000 + 60
    ));
    fs::write(&content, text).unwrap();
    let third = pipeline.run_all().unwrap();
    let mut expected: BTreeSet<String> = ["ingest/content", "features/dp", "report"].map(String::from).into();
    for stage in ["models", "eval", "explain"] {
        for t in ["binary", "s_size"] {
            expected.insert(format!("{stage}/dp/{t}"));
        }
    }
    assert_eq!(reran(&third), expected);
}

#[test]
fn report_holds_the_summary_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    Pipeline::new(config(&small_fixture(tmp.path()), &out)).run_all().unwrap();
    let report = out.join("report");
    for f in ["table1_correlations.csv", "table3_summary.csv", "table5_window_contrast.csv", "group_importance.csv", "divergent_communities.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let png = fs::read(report.join("final_snapshot.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");

    let table3 = fs::read_to_string(report.join("table3_summary.csv")).unwrap();
    assert!(table3.starts_with("window,label,model,metric,mean,std"));
    for needle in ["dp,binary,gbt,auc", "bp,binary,size_baseline,f1", "dp,s_size,gbt,rmse", "dp,s_size,linear,adj_r2"] {
        assert!(table3.contains(needle), "{needle}");
    }
    let table5 = fs::read_to_string(report.join("table5_window_contrast.csv")).unwrap();
    assert!(table5.lines().any(|l| l.starts_with("binary,gbt,auc,")), "{table5}");
}

#[test]
fn binary_reports_missing_stage_and_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_fixture(tmp.path());
    let bin = env!("CARGO_BIN_EXE_placelab");

    let out = Command::new(bin).args(["-q", "--config"]).arg(&cfg_path).args(["--out"]).arg(tmp.path().join("o")).arg("label").output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run `placelab measure` first"), "{stderr}");

    let out = Command::new(bin).arg("--config").arg(&cfg_path).arg("validate").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let bad = tmp.path().join("bad.toml");
    let text = fs::read_to_string(&cfg_path).unwrap().replace("[canvas]", "[labels]\nalpha = 1.5\n\n[canvas]");
    fs::write(&bad, text).unwrap();
    let out = Command::new(bin).arg("--config").arg(&bad).args(["validate", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let problems: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(problems.as_array().unwrap().iter().any(|p| p["code"] == "ALPHA_RANGE"), "{problems}");
}
