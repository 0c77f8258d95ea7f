//! End-to-end tests of the `mmkg` binary: exit codes, file outputs, and
//! reproducibility of every subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mmkg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmkg"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = mmkg().args(args).output().expect("spawn mmkg");
    assert!(
        out.status.success(),
        "mmkg {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn digest(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(fs::read(path).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

const ANNOTATIONS: &str = concat!(
    r#"{"report_id":"r1","image_ids":["img1"],"report_text":"FINDINGS: pleural effusion on the left. IMPRESSION: likely infection.","mentions":[{"surface":"pleural effusion","start":10,"end":26,"candidates":[{"cui":"C0032227","name":"Pleural effusion disorder","semantic_type":"Disease or Syndrome"}]},{"surface":"infection","start":48,"end":57,"candidates":[{"cui":"C0009450","name":"Communicable Diseases","semantic_type":"Disease or Syndrome"}]}]}"#,
    "\n",
    r#"{"report_id":"r2","image_ids":["img2","img3"],"report_text":"FINDINGS: cardiomegaly. IMPRESSION: stable.","mentions":[{"surface":"cardiomegaly","start":10,"end":22,"candidates":[{"cui":"C0018800","name":"Cardiomegaly","semantic_type":"Finding"},{"cui":"C2243117","name":"EnlargedHeart","semantic_type":"Finding"}]}]}"#,
    "\n",
    r#"{"report_id":"r3","image_ids":["img4"],"report_text":"IMPRESSION: no acute process in boston area.","mentions":[{"surface":"no acute process","start":12,"end":28,"candidates":[{"cui":"C0332529","name":"No acute process","semantic_type":"Finding"}]},{"surface":"boston","start":32,"end":38,"candidates":[{"cui":"C0006023","name":"Boston","semantic_type":"Geographic Area"}]}]}"#,
    "\n",
);

const RELATIONS: &str = "C0032227\tassociated_with\tC0009450\nC0018800\tmanifestation_of\tC0032227\n";

fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let annotations = dir.join("annotations.jsonl");
    let relations = dir.join("relations.tsv");
    fs::write(&annotations, ANNOTATIONS).unwrap();
    fs::write(&relations, RELATIONS).unwrap();
    (annotations, relations)
}

#[test]
fn build_produces_golden_graph() {
    let tmp = TempDir::new().unwrap();
    let (annotations, relations) = write_fixture(tmp.path());
    let out = tmp.path().join("built");
    run_ok(&[
        "build",
        "--annotations",
        annotations.to_str().unwrap(),
        "--relations",
        relations.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    // Digests frozen from the first verified run: the graph holds exactly
    // the first-candidate selections (boston filtered out by semantic
    // type), all-Positive cross edges, and the one co-selected intra edge.
    assert_eq!(
        digest(&out.join("graph/nodes.tsv")),
        "0dcba5b483852129af958b8ea324f1ea1d4e78471dae42d9eea54e07bda30248"
    );
    assert_eq!(
        digest(&out.join("graph/relations.tsv")),
        "ee720974869ebc0e33a3a3425a961fa1a1fe0132c1f9622f1443d880f785fbfa"
    );
    assert_eq!(
        digest(&out.join("graph/triples.tsv")),
        "2940cdef312fc1dd293f7f32e9f85d2ed73d52047eaf12be369d4851291510c2"
    );
    assert!(out.join("manifest.json").exists());
    assert!(out.join("build_report.json").exists());
}

#[test]
fn build_rejects_empty_annotations() {
    let tmp = TempDir::new().unwrap();
    let annotations = tmp.path().join("empty.jsonl");
    fs::write(&annotations, "").unwrap();
    let relations = tmp.path().join("relations.tsv");
    fs::write(&relations, RELATIONS).unwrap();
    let out = mmkg()
        .args([
            "build",
            "--annotations",
            annotations.to_str().unwrap(),
            "--relations",
            relations.to_str().unwrap(),
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no records"));
}

#[test]
fn build_fails_when_http_annotator_unreachable() {
    let tmp = TempDir::new().unwrap();
    let (annotations, relations) = write_fixture(tmp.path());
    let out = mmkg()
        .args([
            "build",
            "--annotations",
            annotations.to_str().unwrap(),
            "--relations",
            relations.to_str().unwrap(),
            "--annotator",
            "http",
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ])
        .env("MMKG_ANNOTATOR_URL", "http://127.0.0.1:9/complete")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("failed"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_two() {
    let out = mmkg().args(["train", "--nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_protection() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("synth");
    let args = [
        "gen-synth",
        "--concepts",
        "10",
        "--images",
        "8",
        "--relations",
        "4",
        "--cross",
        "20",
        "--intra",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    run_ok(&args);
    let second = mmkg().args(args).output().unwrap();
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&second.stderr).contains("--force"));
    let mut forced: Vec<&str> = args.to_vec();
    forced.push("--force");
    run_ok(&forced);
}

#[test]
fn stats_prints_published_ratios() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    run_ok(&[
        "gen-synth",
        "--concepts",
        "3149",
        "--images",
        "4868",
        "--relations",
        "262",
        "--cross",
        "20705",
        "--intra",
        "14682",
        "--out",
        synth.to_str().unwrap(),
    ]);
    let out = run_ok(&["stats", "--graph", synth.join("graph").to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1.55"), "{stdout}");
    assert!(stdout.contains("4.25"), "{stdout}");
    assert!(stdout.contains("11.24"), "{stdout}");
}

#[test]
fn split_ten_triples_into_exact_files() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    run_ok(&[
        "gen-synth",
        "--concepts",
        "6",
        "--images",
        "5",
        "--relations",
        "4",
        "--cross",
        "6",
        "--intra",
        "4",
        "--out",
        synth.to_str().unwrap(),
    ]);
    let splits = tmp.path().join("splits");
    run_ok(&[
        "split",
        "--graph",
        synth.join("graph").to_str().unwrap(),
        "--ratios",
        "8:1:1",
        "--out",
        splits.to_str().unwrap(),
    ]);
    let count_lines = |name: &str| {
        fs::read_to_string(splits.join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .count()
    };
    assert_eq!(count_lines("train.tsv"), 8);
    assert_eq!(count_lines("valid.tsv"), 1);
    assert_eq!(count_lines("test.tsv"), 1);
}

#[test]
fn filter_outputs_are_worker_independent() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    run_ok(&[
        "gen-synth",
        "--concepts",
        "25",
        "--images",
        "30",
        "--relations",
        "5",
        "--cross",
        "150",
        "--intra",
        "60",
        "--out",
        synth.to_str().unwrap(),
    ]);
    let graph = synth.join("graph");
    let one = tmp.path().join("w1");
    let two = tmp.path().join("w2");
    run_ok(&[
        "--workers",
        "1",
        "filter",
        "--graph",
        graph.to_str().unwrap(),
        "--out",
        one.to_str().unwrap(),
    ]);
    run_ok(&[
        "--workers",
        "2",
        "filter",
        "--graph",
        graph.to_str().unwrap(),
        "--out",
        two.to_str().unwrap(),
    ]);
    assert_eq!(digest(&one.join("scores.tsv")), digest(&two.join("scores.tsv")));
    assert_eq!(digest(&one.join("selected.txt")), digest(&two.join("selected.txt")));
    assert_eq!(
        digest(&one.join("graph/triples.tsv")),
        digest(&two.join("graph/triples.tsv"))
    );
    // Selected list is a subset of images, and the filtered graph parses.
    let selected = fs::read_to_string(one.join("selected.txt")).unwrap();
    assert!(selected.lines().count() <= 30);
}

#[test]
fn evaluate_rejects_mismatched_vocabulary() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, concepts) in [(&a, "40"), (&b, "41")] {
        run_ok(&[
            "gen-synth",
            "--concepts",
            concepts,
            "--images",
            "20",
            "--relations",
            "4",
            "--cross",
            "120",
            "--intra",
            "60",
            "--out",
            dir.to_str().unwrap(),
        ]);
    }
    let splits = tmp.path().join("splits");
    run_ok(&[
        "split",
        "--graph",
        a.join("graph").to_str().unwrap(),
        "--out",
        splits.to_str().unwrap(),
    ]);
    let train_dir = tmp.path().join("train");
    run_ok(&[
        "train",
        "--graph",
        a.join("graph").to_str().unwrap(),
        "--splits",
        splits.to_str().unwrap(),
        "--model",
        "distmult",
        "--dim",
        "8",
        "--max-epochs",
        "1",
        "--batch-size",
        "64",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    let out = mmkg()
        .args([
            "evaluate",
            "--graph",
            b.join("graph").to_str().unwrap(),
            "--checkpoint",
            train_dir.join("checkpoint.bin").to_str().unwrap(),
            "--test",
            splits.join("test.tsv").to_str().unwrap(),
            "--out",
            tmp.path().join("eval").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));
}
