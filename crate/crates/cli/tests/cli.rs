use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use unpaired::data::{make_dataset, DatasetJson, SyntheticDataset};
use unpaired::diagnostics::second_differences;
use unpaired::TransitionModel;
use unpaired_cli::{run, Cli, Workspace};

fn cli(dir: &Path, args: &[&str]) -> anyhow::Result<Workspace> {
    let mut argv = vec!["unpaired", "--out-dir", dir.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv)?)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k]).collect()
}

#[test]
fn generate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate", "--seed", "4"]).unwrap();
    let text = fs::read_to_string(dir.path().join("dataset.json")).unwrap();
    let loaded = SyntheticDataset::try_from(serde_json::from_str::<DatasetJson>(&text).unwrap()).unwrap();
    let expected = make_dataset(&TransitionModel::default_benchmark(), 10_000, 0.8, 4).unwrap();
    assert_eq!(loaded, expected);

    let prior: TransitionModel =
        serde_json::from_str(&fs::read_to_string(dir.path().join("prior.json")).unwrap()).unwrap();
    assert_eq!(prior.matrix(), TransitionModel::default_benchmark().matrix());
}

#[test]
fn seeds_give_different_permutations() {
    let dir = tempfile::tempdir().unwrap();
    let perm = |seed: u64| {
        cli(dir.path(), &["generate", "--seed", &seed.to_string(), "--length", "20", "--unpaired-length", "2"])
            .unwrap();
        let key: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("answer_key.json")).unwrap()).unwrap();
        key["permutation"].clone()
    };
    let differ = (0..50u64).filter(|&i| perm(2 * i) != perm(2 * i + 1)).count();
    assert!(differ >= 40, "only {differ} of 50 seed pairs differ");
}

#[test]
fn observations_file_carries_no_labels() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate"]).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("observations.json")).unwrap()).unwrap();
    let mut keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["dimension", "observations", "split"]);

    let unpaired: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("unpaired_labels.json")).unwrap()).unwrap();
    let dataset: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dataset.json")).unwrap()).unwrap();
    assert_ne!(unpaired["labels"], dataset["labels"]);
}

#[test]
fn unsupervised_training_never_reads_the_answer() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate"]).unwrap();
    let prior = dir.path().join("prior.json");
    let unpaired = dir.path().join("unpaired_labels.json");
    for extra in [
        vec![],
        vec!["--prior", prior.to_str().unwrap()],
        vec!["--prior-from-unpaired", unpaired.to_str().unwrap()],
    ] {
        let mut args = vec!["train", "--epochs", "20"];
        args.extend(extra);
        let ws = cli(dir.path(), &args).unwrap();
        let names: Vec<String> = ws
            .reads()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"observations.json".to_string()));
        assert!(!names.iter().any(|n| n == "answer_key.json" || n == "dataset.json"), "{names:?}");
    }

    // evaluation data is read only when asked for
    let ws = cli(dir.path(), &["train", "--epochs", "20", "--eval-dataset", dir.path().join("dataset.json").to_str().unwrap()])
        .unwrap();
    assert!(ws.reads().iter().any(|p| p.ends_with("dataset.json")));
    assert!(!ws.reads().iter().any(|p| p.ends_with("answer_key.json")));
}

#[test]
fn zero_lambda_trace_has_no_regularization_contribution() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate"]).unwrap();
    cli(dir.path(), &["train", "--lambda", "0", "--epochs", "200"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header.join(","), "epoch,fitness,regularization,total,test_error,rank1_score,grad_norm");
    let fitness = column(&header, &rows, "fitness");
    let total = column(&header, &rows, "total");
    assert_eq!(fitness, total);
    assert_eq!(column(&header, &rows, "epoch"), vec![0.0, 100.0, 200.0]);
}

#[test]
fn supervised_training_reaches_zero_test_error() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate"]).unwrap();
    let dataset = dir.path().join("dataset.json");
    let ws = cli(dir.path(), &["train", "--supervised", "--dataset", dataset.to_str().unwrap(), "--lr", "0.5", "--epochs", "500"])
        .unwrap();
    assert!(!ws.reads().iter().any(|p| p.ends_with("answer_key.json")));
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(*column(&header, &rows, "test_error").last().unwrap(), 0.0);

    cli(dir.path(), &["eval"]).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["test_error"], 0.0);
}

#[test]
fn supervised_flag_requires_dataset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cli(dir.path(), &["train", "--supervised"]).is_err());
}

#[test]
fn landscape_has_one_row_per_grid_point_and_convex_supervised_curve() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate"]).unwrap();
    cli(dir.path(), &["landscape", "--grid-min", "-1", "--grid-max", "2", "--grid-step", "0.05"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("landscape.csv"));
    assert_eq!(header, ["t", "supervised", "unsup_lambda_0", "unsup_lambda_30"]);
    assert_eq!(rows.len(), 61);
    assert_eq!(rows[0][0], -1.0);
    assert_eq!(rows[60][0], 2.0);
    let worst = second_differences(&column(&header, &rows, "supervised"))
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    assert!(worst >= -1e-9);
}

#[test]
fn landscape_without_answer_key_says_to_generate() {
    let dir = tempfile::tempdir().unwrap();
    let err = cli(dir.path(), &["landscape"]).unwrap_err();
    assert!(format!("{err:#}").contains("unpaired generate"), "{err:#}");
}

#[test]
fn sweep_grid_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["sweep-noise", "--epochs", "50", "--length", "500", "--jobs", "3"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("noise_sweep.csv"));
    assert_eq!(header.join(","), "sigma_p,lambda,seed,test_error,rank1_score");
    assert_eq!(rows.len(), 45);
    // sorted by σ_P, then λ, then seed
    let keys: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn failed_sweep_cells_get_the_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    // a one-position dataset cannot be trained on, so every cell fails
    cli(dir.path(), &["sweep-noise", "--length", "1", "--sigma-p-grid", "0", "--lambda-grid", "1", "--seeds", "0,1"])
        .unwrap();
    let (_, rows) = read_csv(&dir.path().join("noise_sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[3] == -1.0 && r[4] == -1.0));
}

#[test]
fn zero_noise_sweep_rows_use_the_exact_prior() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--lambda-grid", "30", "--seeds", "3", "--epochs", "100", "--length", "2000"];
    let mut args = vec!["sweep-noise", "--sigma-p-grid", "0"];
    args.extend(common);
    cli(dir.path(), &args).unwrap();
    let (_, sweep) = read_csv(&dir.path().join("noise_sweep.csv"));

    // the same cell trained directly against the unperturbed prior
    let prior = TransitionModel::default_benchmark();
    let ds = make_dataset(&prior, 2_000, 0.8, 3).unwrap();
    let cfg = unpaired::trainer::TrainConfig { lambda: 30.0, epochs: 100, init_seed: 3, ..Default::default() };
    let (pred, _, _) = unpaired::trainer::train_unsupervised(&cfg, &ds.train_observations(), &prior, None).unwrap();
    let (x, y) = ds.test_pairs();
    assert_eq!(sweep[0][3], unpaired::diagnostics::test_error(&pred, &x, &y).unwrap());
}

#[test]
fn oracle_flags_uniform_prior() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = serde_json::to_string(&TransitionModel::uniform(4).unwrap()).unwrap();
    let prior_path = dir.path().join("uniform.json");
    fs::write(&prior_path, uniform).unwrap();
    cli(dir.path(), &["generate", "--prior", prior_path.to_str().unwrap(), "--length", "500"]).unwrap();
    cli(dir.path(), &["oracle", "--prior", prior_path.to_str().unwrap()]).unwrap();
    let text = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(text.lines().count(), 25);
    assert_eq!(text.lines().next().unwrap(), "permutation,score");

    let out = Process::new(env!("CARGO_BIN_EXE_unpaired"))
        .args(["--out-dir", dir.path().to_str().unwrap(), "oracle", "--prior", prior_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("non-identifiable"));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate", "--length", "1000"]).unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"train": {"epochs": 30, "eval_every": 10, "lambda": 0.0}}"#).unwrap();
    cli(dir.path(), &["--config", config.to_str().unwrap(), "train"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(column(&header, &rows, "epoch"), vec![0.0, 10.0, 20.0, 30.0]);
    assert_eq!(column(&header, &rows, "fitness"), column(&header, &rows, "total"));

    cli(dir.path(), &["--config", config.to_str().unwrap(), "train", "--epochs", "40"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(*column(&header, &rows, "epoch").last().unwrap(), 40.0);
}

#[test]
fn out_dir_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Process::new(env!("CARGO_BIN_EXE_unpaired"))
        .env("UNPAIRED_OUT_DIR", dir.path())
        .args(["generate", "--length", "100", "--unpaired-length", "100"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("observations.json").exists());
}

#[test]
fn divergence_exits_nonzero_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    cli(dir.path(), &["generate", "--length", "200"]).unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_unpaired"))
        .args(["--out-dir", dir.path().to_str().unwrap(), "train", "--lr", "1.7e308", "--epochs", "50", "--eval-every", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert!(!rows.is_empty());
    assert!(column(&header, &rows, "total").iter().all(|v| v.is_finite()));
    assert!(!dir.path().join("model.json").exists());
}
