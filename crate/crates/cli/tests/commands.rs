use std::path::{Path, PathBuf};
use std::process::Command;

use boxseq::config::RunConfig;
use boxseq::data::load_tracklets;
use boxseq::tracker::load_predictions;
use boxseq_cli::*;

fn micro_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/micro.toml")
}

fn ctx(out: &Path, overrides: &[&str]) -> Context {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Context::load(Some(&micro_config()), &ov, None, out, 1).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_boxseq"))
}

#[test]
fn gen_data_writes_requested_counts_and_archives_config() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_gen_data(&ctx(dir.path(), &["data.train_count=8"])).unwrap();
    assert_eq!(load_tracklets(&dir.path().join("train.txt")).unwrap().len(), 8);
    assert_eq!(summary.splits[0].2, 8);
    assert_eq!(summary.histogram.iter().map(|h| h.1).sum::<usize>(), 12);
    let archived = RunConfig::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
    assert_eq!(archived.data.train_count, 8);
}

#[test]
fn sparse_schedule_caps_first_frames() {
    let dir = tempfile::tempdir().unwrap();
    let c = ctx(dir.path(), &["data.synthetic.first_frame_points=[0, 15]", "data.train_count=10"]);
    cmd_gen_data(&c).unwrap();
    for t in load_tracklets(&dir.path().join("train.txt")).unwrap() {
        // Count in-box points post hoc.
        let f = &t.frames[0];
        let inside = f.points.iter().filter(|p| f.gt_box.contains(**p)).count();
        assert!(inside <= 15, "{}: {inside}", t.id);
    }
    assert!(c.sparse_suite().unwrap().iter().all(|t| t.first_frame_points() <= 15));
}

#[test]
fn train_track_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let s = cmd_train(&ctx(&train_dir, &["train.epochs=1"]), None).unwrap();
    assert_eq!(s.logs.len(), 1);
    assert!(s.best.exists() && s.last.exists());
    assert!(train_dir.join("loss.svg").exists());
    let rows = read_train_log(&train_dir.join(TRAIN_LOG)).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].val.is_some());

    let track_dir = dir.path().join("track");
    let c = ctx(&track_dir, &[]);
    let t = cmd_track(&c, &s.last, None).unwrap();
    let test = c.split(Split::Test).unwrap();
    let preds = load_predictions(&t.predictions).unwrap();
    assert_eq!(preds.len(), test.len());
    for (p, tr) in preds.iter().zip(&test) {
        assert_eq!(p.boxes.len(), tr.len());
    }

    let eval_dir = dir.path().join("eval");
    let r = cmd_eval(&ctx(&eval_dir, &[]), &t.predictions, None).unwrap();
    assert!((0.0..=100.0).contains(&r.overall.success));
    for f in ["report.txt", "curves.txt", "success.svg", "precision.svg", "buckets.svg", "config.toml"] {
        assert!(eval_dir.join(f).exists(), "{f}");
    }

    let plot_dir = dir.path().join("plot");
    let written = cmd_plot(&ctx(&plot_dir, &[]), &[eval_dir, train_dir]).unwrap();
    assert_eq!(written.len(), 4);
}

#[test]
fn resume_continues_the_epoch_counter() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    cmd_train(&ctx(&a, &["train.epochs=1"]), None).unwrap();
    let s = cmd_train(&ctx(&a, &["train.epochs=2"]), Some(&a.join(LAST_CHECKPOINT))).unwrap();
    assert_eq!(s.logs.iter().map(|l| l.epoch).collect::<Vec<_>>(), vec![2]);
    let resumed = std::fs::read(a.join(TRAIN_LOG)).unwrap();

    let b = dir.path().join("b");
    cmd_train(&ctx(&b, &["train.epochs=2"]), None).unwrap();
    assert_eq!(resumed, std::fs::read(b.join(TRAIN_LOG)).unwrap());
    assert_eq!(std::fs::read(a.join(LAST_CHECKPOINT)).unwrap(), std::fs::read(b.join(LAST_CHECKPOINT)).unwrap());
}

#[test]
fn checkpoint_mismatch_is_reported_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_train(&ctx(&dir.path().join("t"), &["train.epochs=1"]), None).unwrap();
    let other = ctx(&dir.path().join("x"), &["model.channels=16", "model.token_channels=16"]);
    let err = cmd_track(&other, &s.last, None).unwrap_err();
    assert!(matches!(err, boxseq::Error::Checkpoint(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("x").join(PREDICTIONS).exists());
    let err = cmd_train(&other, Some(&s.last)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn echo_checkpoint_tracks_a_static_target_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let c = ctx(
        dir.path(),
        &["data.synthetic.speed=[0.0, 0.0]", "data.synthetic.ego_speed=[0.0, 0.0]", "data.synthetic.ego_yaw_rate=[0.0, 0.0]"],
    );
    let ck = dir.path().join("echo.json");
    write_echo_checkpoint(&c.config, &ck).unwrap();
    let t = cmd_track(&c, &ck, None).unwrap();
    let r = cmd_eval(&c, &t.predictions, None).unwrap();
    for ts in &r.tracklets {
        assert!(ts.success_curve.iter().all(|&v| v == 1.0 || v == 0.0));
    }
    assert!((r.overall.success - 100.0 * 20.0 / 21.0).abs() < 1e-9);
}

#[test]
fn ablation_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let table = cmd_ablate(&ctx(dir.path(), &["train.epochs=1", "data.synthetic.frames=3"])).unwrap();
    let components: Vec<&str> = table.rows.iter().filter(|r| r.study == Study::Components).map(|r| r.label.as_str()).collect();
    assert_eq!(components, vec!["C", "C+L+G+D"]);
    assert!(table.row(Study::Window, "1+2").is_some());
    assert!(table.row(Study::Constraints, "1+0").is_some());
    // The default variant appears in several studies and is trained once.
    assert_eq!(table.row(Study::Components, "C+L+G+D").unwrap().standard, table.row(Study::Window, "1+1").unwrap().standard);
    let md = std::fs::read_to_string(dir.path().join("ablation.md")).unwrap();
    assert_eq!(md.matches("### ").count(), 3);
    assert!(md.contains("| C+L+G+D |"));
}

#[test]
fn default_component_table_has_four_rows_two_column_groups() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.ablate.components, vec!["C", "C+G+D", "C+L+D", "C+L+G+D"]);
    let table = AblationTable {
        rows: cfg
            .ablate
            .components
            .iter()
            .map(|c| AblationRow { study: Study::Components, label: c.clone(), standard: (1.0, 2.0), sparse: (3.0, 4.0) })
            .collect(),
        sparse_label: "Sparse 0-15".into(),
    };
    let text = table.to_string();
    let body: Vec<&str> = text.lines().filter(|l| l.starts_with("| C")).collect();
    assert_eq!(body.len(), 4);
    assert!(body.iter().all(|l| l.matches('|').count() == 6));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = bin().args(["--config", micro_config().to_str().unwrap(), "--out", out, "gen-data"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("first-frame target points"));

    let cfg_err = bin().args(["--out", out, "--override", "model.bogus=1", "gen-data"]).output().unwrap();
    assert_eq!(cfg_err.status.code(), Some(2));

    let junk = dir.path().join("junk.txt");
    std::fs::write(&junk, "not a tracklet file\n").unwrap();
    let data_err = bin()
        .args(["--out", out, "--override", &format!("data.train_path=\"{}\"", junk.display()), "train"])
        .output()
        .unwrap();
    assert_eq!(data_err.status.code(), Some(3), "{}", String::from_utf8_lossy(&data_err.stderr));
}

#[test]
fn inputs_are_not_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    cmd_gen_data(&ctx(&data_dir, &[])).unwrap();
    let test = data_dir.join("test.txt");
    let before = std::fs::read(&test).unwrap();
    let ck = dir.path().join("echo.json");
    let c = ctx(&dir.path().join("run"), &[]);
    write_echo_checkpoint(&c.config, &ck).unwrap();
    let ck_before = std::fs::read(&ck).unwrap();
    let t = cmd_track(&c, &ck, Some(&test)).unwrap();
    let preds_before = std::fs::read(&t.predictions).unwrap();
    cmd_eval(&ctx(&dir.path().join("ev"), &[]), &t.predictions, Some(&test)).unwrap();
    assert_eq!(std::fs::read(&test).unwrap(), before);
    assert_eq!(std::fs::read(&ck).unwrap(), ck_before);
    assert_eq!(std::fs::read(&t.predictions).unwrap(), preds_before);
}
