use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sba_core::synthetic::gen_tone_wav;

fn sba(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sba"))
        .args(args)
        .env_remove("SBA_DATA_ROOT")
        .output()
        .expect("run sba")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Every file under `dir`, by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir), "--n", "12", "--dim", "4", "--classifier", "rf"];
    args.extend_from_slice(extra);
    let o = sba(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn run_emits_a_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("config.toml");
    let out = dir.path().join("a");
    let o = sba(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.toml", "run_manifest.json", "cohort.csv", "metrics.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for s in [0, 50, 100, 150, 200] {
        assert!(out.join(format!("scores/seed_{s}.csv")).is_file());
        assert!(out.join(format!("models/seed_{s}.json")).is_file());
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 5 + 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let text = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(!text.contains(p(dir.path())), "run manifest leaks an absolute path");
}

#[test]
fn two_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("config.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(sba(&["run", "--config", p(&cfg), "--out", p(&a)]).status.success());
    assert!(sba(&["--jobs", "1", "run", "--config", p(&cfg), "--out", p(&b)]).status.success());
    for d in [&a, &b] {
        assert!(sba(&["bias-report", "--run", p(d)]).status.success());
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 10);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }
}

#[test]
fn seeds_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let out = dir.path().join("r");
    let o = sba(&["run", "--config", p(&dir.path().join("config.toml")), "--out", p(&out), "--seeds", "3,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("scores/seed_3.csv").is_file());
    assert!(!out.join("scores/seed_0.csv").exists());
    let o = sba(&["run", "--config", p(&dir.path().join("config.toml")), "--out", p(&out), "--seeds", "3,3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bias_report_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--gender-gap", "0.1"]);
    let run = dir.path().join("r");
    assert!(sba(&["run", "--config", p(&dir.path().join("config.toml")), "--out", p(&run)]).status.success());
    let rep = dir.path().join("rep");
    let o = sba(&["bias-report", "--run", p(&run), "--out", p(&rep), "--dimensions", "gender,age"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bias = fs::read_to_string(rep.join("bias.csv")).unwrap();
    assert_eq!(bias.lines().next().unwrap(), "dimension,group,n_ci,n_nci,sensitivity,specificity,delta,auc,overlap");
    assert_eq!(bias.lines().count(), 5);
    let disp = fs::read_to_string(rep.join("disparity.csv")).unwrap();
    assert!(disp.contains("gender,male,female,"));
    let dist = fs::read_to_string(rep.join("distributions.csv")).unwrap();
    assert_eq!(dist.lines().count(), 1 + 4 * 30);
}

#[test]
fn bias_report_without_scores_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let run = dir.path().join("r");
    assert!(sba(&["run", "--config", p(&dir.path().join("config.toml")), "--out", p(&run)]).status.success());
    fs::remove_dir_all(run.join("scores")).unwrap();
    let o = sba(&["bias-report", "--run", p(&run)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scores"), "{}", stderr(&o));
}

fn rewrite(cfg: &Path, from: &str, to: &str) {
    let text = fs::read_to_string(cfg).unwrap();
    assert!(text.contains(from));
    fs::write(cfg, text.replace(from, to)).unwrap();
}

#[test]
fn invalid_classifier_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("config.toml");
    rewrite(&cfg, "classifier = \"rf\"", "classifier = \"knn\"");
    let o = sba(&["run", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("knn"));
}

#[test]
fn unknown_keys_and_missing_inputs_fail_before_work() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("config.toml");
    let original = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, format!("colour = \"red\"\n{original}")).unwrap();
    assert_eq!(sba(&["run", "--config", p(&cfg)]).status.code(), Some(1));
    fs::write(&cfg, original).unwrap();
    rewrite(&cfg, "features.csv", "nowhere.csv");
    let o = sba(&["run", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.csv"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn feature_rows_missing_for_the_cohort_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let f = dir.path().join("features.csv");
    let text = fs::read_to_string(&f).unwrap();
    let kept: Vec<&str> = text.lines().take(10).collect();
    fs::write(&f, kept.join("\n") + "\n").unwrap();
    let o = sba(&["run", "--config", p(&dir.path().join("config.toml"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn tone_manifest(dir: &Path, wav_dir: &Path, extra: &str) -> PathBuf {
    fs::create_dir_all(wav_dir).unwrap();
    let mut m = String::from("subject_id,utterance_id,gender,age,mmse,hamd,wav_path\n");
    for (i, f) in [220.0, 440.0, 880.0].iter().enumerate() {
        gen_tone_wav(&wav_dir.join(format!("t{i}.wav")), *f, 0.5, 0.5).unwrap();
        m.push_str(&format!("S{i},U{i},F,60,20,3,t{i}.wav\n"));
    }
    m.push_str(extra);
    let path = dir.join("manifest.csv");
    fs::write(&path, m).unwrap();
    path
}

#[test]
fn extract_features_writes_one_row_per_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tone_manifest(dir.path(), dir.path(), "");
    let out = dir.path().join("feat");
    let o = sba(&["extract-features", "--manifest", p(&manifest), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(out.join("mfcc40.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 41);
    assert!(sba(&["extract-features", "--manifest", p(&manifest), "--out", p(&out)]).status.success());
    assert_eq!(fs::read(out.join("mfcc40.csv")).unwrap(), first);
}

#[test]
fn extract_features_names_missing_audio() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tone_manifest(dir.path(), dir.path(), "S9,U9,M,70,28,0,gone.wav\n");
    let out = dir.path().join("feat");
    let o = sba(&["extract-features", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gone.wav"));
    let text = fs::read_to_string(out.join("mfcc40.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(fs::read_to_string(out.join("failures.csv")).unwrap().contains("U9"));
}

#[test]
fn data_root_resolves_audio_paths() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    let manifest = tone_manifest(dir.path(), &audio, "");
    let out = dir.path().join("feat");
    let o = sba(&["extract-features", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_sba"))
        .args(["extract-features", "--manifest", p(&manifest), "--out", p(&out)])
        .env("SBA_DATA_ROOT", &audio)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn check_tables_reports_every_row() {
    let o = sba(&["check-tables"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(rows.len(), 32 + 18);
    assert!(rows.iter().filter(|l| l.contains("Table II ")).all(|l| l.starts_with("[PASS]")));
    let failed = rows.iter().filter(|l| l.starts_with("[FAIL]")).count();
    assert_eq!(o.status.code(), Some(if failed == 0 { 0 } else { 2 }));
}

#[test]
fn check_tables_on_a_user_table() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("m.csv");
    fs::write(
        &t,
        "table,task,dataset,feature,classifier,accuracy,uar,sensitivity,specificity\nX,ci_vs_nci,IMB,f,svm,80,80.56,83.33,77.78\n",
    )
    .unwrap();
    let b = dir.path().join("b.csv");
    fs::write(
        &b,
        "table,dataset,dimension,group_a,group_b,sp_a,se_a,delta_a,sp_b,se_b,delta_b,delta_sp,delta_se\nX,IMB,gender,Male,Female,86,76,10,68,80,-12,18,-4\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = sba(&["check-tables", "--metrics", p(&t), "--bias", p(&b), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(out.join("table_checks.csv").is_file());
}

#[test]
fn sweep_over_synthetic_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--embeddings"]);
    let out = dir.path().join("sw");
    let o = sba(&["sweep", "--config", p(&dir.path().join("config.toml")), "--out", p(&out), "--layers", "hidden-1,hidden-9", "--seeds", "0,50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("\nhidden-9,rf,"));
    let o = sba(&["sweep", "--config", p(&dir.path().join("config.toml")), "--out", p(&out), "--layers", "hidden-13"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn quick_start_runs_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = sba(&["synth", "--out", p(dir.path())]);
    assert!(o.status.success());
    let start = std::time::Instant::now();
    let o = sba(&["run", "--config", p(&dir.path().join("config.toml"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 300);
    assert!(dir.path().join("run/run_manifest.json").is_file());
}
