mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use skillbank::io::to_ndjson;
use skillbank::mirror::{generate, MirrorSpec};
use skillbank_core::metrics::ResponsePair;
use skillbank_core::taxonomy::Strategy;

use common::*;

fn skillbank(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillbank"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BACKEND_URL")
        .env_remove("BACKEND_API_KEY")
        .env_remove("BACKEND_MODEL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_bank(dir: &Path, docs: impl IntoIterator<Item = (String, String)>) {
    fs::create_dir_all(dir).unwrap();
    for (name, text) in docs {
        fs::write(dir.join(format!("{name}.md")), text).unwrap();
    }
}

#[test]
fn help_and_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let help = skillbank(&["--help"], tmp.path());
    assert_eq!(code(&help), 0);
    for sub in ["ingest", "induce", "synthesize", "simulate", "evolve", "eval", "bank"] {
        assert!(stdout(&help).contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&skillbank(&["--version"], tmp.path())), 0);
    assert_eq!(code(&skillbank(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&skillbank(&["ingest"], tmp.path())), 1);
    assert_eq!(
        code(&skillbank(&["eval", "--bleu", "both", "--pairs", "x"], tmp.path())),
        1
    );
}

#[test]
fn ingest_then_induce_mirror_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = generate(&MirrorSpec::scaled(10, 5));
    fs::write(tmp.path().join("corpus.ndjson"), corpus.text()).unwrap();

    let o = skillbank(&["ingest", "--corpus", "corpus.ndjson", "--out", "ing"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats = json_file(&tmp.path().join("ing/stats.json"));
    assert_eq!(stats["total"], 1786);
    assert_eq!(stats["key"], 1018);
    assert_eq!(stats["positive"], 970);
    assert_eq!(stats["negative"], 48);
    assert!(tmp.path().join("ing/manifest.json").exists());
    let ius = fs::read_to_string(tmp.path().join("ing/ius.ndjson")).unwrap();
    assert_eq!(ius.lines().count(), 1786);

    let o = skillbank(
        &[
            "induce",
            "--ius",
            "ing/ius.ndjson",
            "--min-support",
            "5",
            "--out",
            "ind",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let protos = fs::read_to_string(tmp.path().join("ind/prototypes.ndjson")).unwrap();
    assert_eq!(protos.lines().count(), corpus.census_at(5).len());
    let summary = fs::read_to_string(tmp.path().join("ind/summary.txt")).unwrap();
    assert!(summary.contains("min_support"));
    assert!(tmp.path().join("ind/clusters.json").exists());
}

#[test]
fn strict_ingest_rejects_bad_records() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = generate(&MirrorSpec::scaled(100, 1)).text();
    text.push_str("{\"dialog_id\": \"x\"}\nnot json\n");
    fs::write(tmp.path().join("c.ndjson"), &text).unwrap();

    let lenient = skillbank(&["ingest", "--corpus", "c.ndjson", "--out", "a"], tmp.path());
    assert_eq!(code(&lenient), 0);
    let report = json_file(&tmp.path().join("a/ingest_report.json"));
    assert_eq!(report["skipped"].as_array().unwrap().len(), 2);

    let strict = skillbank(
        &["ingest", "--corpus", "c.ndjson", "--strict", "--out", "b"],
        tmp.path(),
    );
    assert_eq!(code(&strict), 2, "{}", stderr(&strict));
}

#[test]
fn evolve_reproduces_golden_bank() {
    let tmp = tempfile::tempdir().unwrap();
    write_bank(&tmp.path().join("b0"), b0_docs());
    fs::write(tmp.path().join("profiles.ndjson"), to_ndjson(&evolve_profiles())).unwrap();
    write_script(&tmp.path().join("script.ndjson"), &evolve_script(false));

    let o = skillbank(
        &[
            "evolve",
            "--bank",
            "b0",
            "--profiles",
            "profiles.ndjson",
            "--script",
            "script.ndjson",
            "--parallelism",
            "4",
            "--out",
            "ev",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("skills: 27 -> 34"), "{out}");
    assert!(out.contains("plan: 9 updates, 12 additions"), "{out}");
    assert!(out.contains("accepted: 9 updates, 7 additions"), "{out}");

    for (name, text) in golden_bank() {
        let got = fs::read_to_string(tmp.path().join(format!("ev/bank/{name}.md"))).unwrap();
        assert_eq!(got, text, "{name}");
    }
    let log = fs::read_to_string(tmp.path().join("ev/bank/mutations.log")).unwrap();
    assert_eq!(log.lines().count(), 16);
    let summary = json_file(&tmp.path().join("ev/summary.json"));
    assert_eq!(summary["final_skills"], 34);
    for f in [
        "audit.ndjson",
        "plan.json",
        "analysis_reports.ndjson",
        "stage1_transcripts.ndjson",
        "manifest.json",
    ] {
        assert!(tmp.path().join("ev").join(f).exists(), "{f}");
    }

    // the evolved bank validates and lists as a later generation
    let v = skillbank(&["bank", "validate", "--bank", "ev/bank"], tmp.path());
    assert_eq!(code(&v), 0, "{}", stdout(&v));
    let l = skillbank(&["bank", "list", "--bank", "ev/bank"], tmp.path());
    assert!(stdout(&l).starts_with("34 skills"), "{}", stdout(&l));
}

#[test]
fn evolve_without_backend_explains_setup() {
    let tmp = tempfile::tempdir().unwrap();
    write_bank(&tmp.path().join("b0"), b0_docs());
    fs::write(tmp.path().join("profiles.ndjson"), to_ndjson(&evolve_profiles())).unwrap();
    let o = skillbank(
        &["evolve", "--bank", "b0", "--profiles", "profiles.ndjson", "--out", "ev"],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--script"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    write_bank(&tmp.path().join("b0"), b0_docs());
    fs::write(tmp.path().join("profiles.ndjson"), to_ndjson(&sim_profiles(20))).unwrap();
    write_script(&tmp.path().join("script.ndjson"), &sim_script(20, "sim"));
    let o = skillbank(
        &[
            "simulate",
            "--bank",
            "b0",
            "--profiles",
            "profiles.ndjson",
            "--script",
            "script.ndjson",
            "--max-turns",
            "6",
            "--out",
            "sim",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json_file(&tmp.path().join("sim/report.json"));
    assert_eq!(report["n"], 20);
    let transcripts = fs::read_to_string(tmp.path().join("sim/transcripts.ndjson")).unwrap();
    assert_eq!(transcripts.lines().count(), 20);
    assert!(tmp.path().join("sim/report.txt").exists());
}

#[test]
fn eval_metrics_and_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs: Vec<ResponsePair> = (0..4)
        .map(|i| ResponsePair {
            context_id: format!("c{i}"),
            gold_strategy: Strategy::Question,
            gold_text: format!("what happened on day {i}?"),
            pred_strategy: Strategy::Question,
            pred_text: format!("what happened on day {i}?"),
        })
        .collect();
    fs::write(tmp.path().join("pairs.ndjson"), to_ndjson(&pairs)).unwrap();
    let o = skillbank(&["eval", "--pairs", "pairs.ndjson", "--out", "ev"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json_file(&tmp.path().join("ev/metrics.json"));
    for k in [
        "acc", "bleu1", "bleu2", "bleu4", "rouge1", "rouge2", "rouge_l", "meteor",
    ] {
        assert_eq!(m[k].as_f64(), Some(100.0), "{k}");
    }
    assert!(tmp.path().join("ev/metrics.txt").exists());

    fs::write(
        tmp.path().join("ratings.ndjson"),
        "{\"ratings\": [1, 1]}\n{\"ratings\": [3, 3]}\n{\"ratings\": [5, 5]}\n{\"ratings\": [2, 2]}\n",
    )
    .unwrap();
    let o = skillbank(&["eval", "--ratings", "ratings.ndjson", "--out", "ag"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = json_file(&tmp.path().join("ag/agreement.json"));
    assert_eq!(a["fleiss_kappa"].as_f64(), Some(1.0));
    assert_eq!(a["cohen_kappa_quadratic"].as_f64(), Some(1.0));
}

#[test]
fn bank_validate_flags_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = golden_dir().join("bank");
    let ok = skillbank(&["bank", "validate", "--bank", golden.to_str().unwrap()], tmp.path());
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let mut docs = b0_docs();
    let text = docs.remove("esc-grief-and-loss").unwrap();
    docs.insert("wrong-file-name".into(), text);
    write_bank(&tmp.path().join("bad"), docs);
    let bad = skillbank(&["bank", "validate", "--bank", "bad"], tmp.path());
    assert_eq!(code(&bad), 2);

    let show = skillbank(
        &[
            "bank",
            "show",
            "--bank",
            golden.to_str().unwrap(),
            "esc-dialectical-analysis",
        ],
        tmp.path(),
    );
    assert_eq!(code(&show), 0);
    assert!(stdout(&show).contains("name: esc-dialectical-analysis"));
    let missing = skillbank(
        &["bank", "show", "--bank", golden.to_str().unwrap(), "esc-nope"],
        tmp.path(),
    );
    assert_eq!(code(&missing), 1);
}

#[test]
fn default_run_directory_names_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("c.ndjson"),
        generate(&MirrorSpec::scaled(100, 2)).text(),
    )
    .unwrap();
    let o = skillbank(&["ingest", "--corpus", "c.ndjson"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let runs: Vec<String> = fs::read_dir(tmp.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].contains("-ingest-"), "{}", runs[0]);
}
