use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use typicality_core::fixture::PlantedFixture;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_typicality"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn fixture(images: usize) -> PlantedFixture {
    PlantedFixture {
        categories: 5,
        exemplars: 8,
        images,
        dim: 16,
        sigma: 1.0,
        image_jitter: 2.0,
        seed: 21,
        text_models: vec!["t1".into(), "t2".into()],
        vision_models: vec!["v1".into()],
        clip_model: Some("clip".into()),
    }
}

const FULL: &str = r#"embeddings_path = "embeddings.jsonl"
ratings_path = "ratings.csv"
logits_path = "logits.csv"
text_models = ["t1", "t2"]
vision_models = ["v1"]
clip_model = "clip"
clip_approaches = ["category", "mean", "appended", "cross_modality"]
seed = 4

[stability]
model_id = "v1"
category = "cat00"
trials = 20
"#;

fn setup(images: usize, config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fixture(images).write(dir.path()).unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config).unwrap();
    (dir, path)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn validate_accepts_fixture_inputs_silently() {
    let (_dir, config) = setup(2, FULL);
    let out = run(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_reports_one_line_per_violation() {
    let (dir, config) = setup(2, FULL);
    let path = dir.path().join("embeddings.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str(
        r#"{"model":"t1","modality":"text","kind":"exemplar","category":"cat00","exemplar":"extra","vector":[1.0,2.0]}"#,
    );
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    let out = run(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    assert!(stdout.contains("dim mismatch"));
}

#[test]
fn config_problems_exit_two() {
    let (dir, _) = setup(1, FULL);
    let no_ratings = dir.path().join("no_ratings.toml");
    std::fs::write(&no_ratings, "embeddings_path = \"embeddings.jsonl\"\n").unwrap();
    assert_eq!(
        code(&run(&[
            "validate",
            "--config",
            no_ratings.to_str().unwrap()
        ])),
        2
    );

    let missing_file = dir.path().join("missing_file.toml");
    std::fs::write(&missing_file, "ratings_path = \"gone.csv\"\n").unwrap();
    assert_eq!(
        code(&run(&[
            "validate",
            "--config",
            missing_file.to_str().unwrap()
        ])),
        2
    );

    let nowhere = dir.path().join("nowhere.toml");
    assert_eq!(
        code(&run(&["eval", "--config", nowhere.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&run(&["eval"])), 2);
}

#[test]
fn unknown_model_is_a_config_error() {
    let (_dir, config) = setup(
        1,
        "embeddings_path = \"embeddings.jsonl\"\nratings_path = \"ratings.csv\"\ntext_models = [\"ghost\"]\n",
    );
    assert_eq!(
        code(&run(&["eval", "--config", config.to_str().unwrap()])),
        2
    );
}

#[test]
fn eval_twice_gives_identical_trees() {
    let (dir, config) = setup(3, FULL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = config.to_str().unwrap();
    assert_eq!(
        code(&run(&["eval", "--config", c, "--out", a.to_str().unwrap()])),
        0
    );
    assert_eq!(
        code(&run(&[
            "--jobs",
            "1",
            "eval",
            "--config",
            c,
            "--out",
            b.to_str().unwrap()
        ])),
        0
    );
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("combined_grid.csv")));
    assert!(ta.contains_key(Path::new("beta_weights/t1__v1.csv")));
    assert_eq!(ta, tb);
}

#[test]
fn clip_only_config_writes_only_the_clip_summary() {
    let (dir, config) = setup(
        2,
        "ratings_path = \"ratings.csv\"\nlogits_path = \"logits.csv\"\nclip_model = \"clip\"\nclip_approaches = [\"cross_modality\"]\n",
    );
    let out = dir.path().join("out");
    let status = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&status),
        0,
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let files: Vec<PathBuf> = tree(&out).into_keys().collect();
    assert_eq!(
        files,
        [
            PathBuf::from("clip_summary.csv"),
            PathBuf::from("manifest.json")
        ]
    );
}

fn stability_rows(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("stability.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_owned())
        .collect()
}

fn stability(config: &Path, out: &Path, seed: &str) -> String {
    let o = run(&[
        "stability",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        seed,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn stability_with_one_image_is_flat() {
    let (dir, config) = setup(1, FULL);
    let summary = stability(&config, dir.path(), "1");
    let multi = summary.trim().rsplit('=').next().unwrap().to_owned();
    let rows = stability_rows(dir.path());
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| *r == multi), "{rows:?} vs {multi}");
}

#[test]
fn stability_seed_changes_trials_not_multi_image_rho() {
    let (dir, config) = setup(6, FULL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sa = stability(&config, &a, "1");
    let sb = stability(&config, &b, "2");
    let multi = |s: &str| s.trim().rsplit('=').next().unwrap().to_owned();
    assert_eq!(multi(&sa), multi(&sb));
    assert_ne!(stability_rows(&a), stability_rows(&b));
}

#[test]
fn stability_on_a_text_only_model_is_a_data_error() {
    let (_dir, config) = setup(
        1,
        "embeddings_path = \"embeddings.jsonl\"\nratings_path = \"ratings.csv\"\n\n[stability]\nmodel_id = \"t1\"\ncategory = \"cat00\"\n",
    );
    assert_eq!(
        code(&run(&["stability", "--config", config.to_str().unwrap()])),
        1
    );
}

#[test]
fn gen_fixture_round_trips_through_validate_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let args = [
        "gen-fixture",
        "--out",
        fx.to_str().unwrap(),
        "--categories",
        "4",
        "--dim",
        "16",
        "--models",
        "2",
    ];
    assert_eq!(code(&run(&args)), 0);
    let config = fx.join("run.toml");
    assert_eq!(
        code(&run(&["validate", "--config", config.to_str().unwrap()])),
        0
    );
    assert_eq!(
        code(&run(&["eval", "--config", config.to_str().unwrap()])),
        0
    );
    assert!(fx.join("results/combined_grid.csv").exists());
}
