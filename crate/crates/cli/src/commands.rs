use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::Serialize;
use unpaired::data::{
    invert_permutation, make_dataset, unpaired_labels, DatasetJson, SyntheticDataset,
};
use unpaired::diagnostics::{
    landscape_line, line_grid, max_tv_distance, permutation_oracle, random_line_endpoint,
    rank1_score, routing_weights, test_error, Curve,
};
use unpaired::models::WeightsJson;
use unpaired::objective::{PairCounts, UnsupervisedProblem};
use unpaired::prior::{estimate_transition, TransitionModelJson};
use unpaired::trainer::{train_supervised, train_unsupervised, TrainError, Window};
use unpaired::{GeneratorParams, InitScheme, OneHotSequence, PredictorParams, TransitionModel};

use crate::config::{ExperimentConfig, PriorSource};
use crate::files::*;
use crate::sweep::run_noise_sweep;
use crate::workspace::Workspace;
use crate::{
    Cli, Command, DatasetFlags, EvalArgs, GenerateArgs, LandscapeArgs, OracleArgs, PriorArgs,
    SweepArgs, TrainArgs, TrainFlags,
};

/// Training diverged; the partial trace has been written.
#[derive(Debug)]
pub struct Diverged {
    pub epoch: usize,
    pub trace_path: PathBuf,
}

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training diverged at epoch {}; partial trace in {}",
            self.epoch,
            self.trace_path.display()
        )
    }
}

impl std::error::Error for Diverged {}

/// Runs one subcommand and returns the workspace with its read/write log.
pub fn run(cli: Cli) -> anyhow::Result<Workspace> {
    let ws = Workspace::resolve(cli.out_dir.clone());
    let mut config = match &cli.config {
        Some(path) => ws.read_json::<ExperimentConfig>(path)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Generate(args) => cmd_generate(&ws, &mut config, args)?,
        Command::Train(args) => cmd_train(&ws, &mut config, args)?,
        Command::Landscape(args) => cmd_landscape(&ws, &mut config, args)?,
        Command::SweepNoise(args) => cmd_sweep_noise(&ws, &mut config, args)?,
        Command::Oracle(args) => cmd_oracle(&ws, &mut config, args)?,
        Command::Eval(args) => cmd_eval(&ws, args)?,
    }
    Ok(ws)
}

fn apply_prior_flags(config: &mut ExperimentConfig, flags: &PriorArgs) {
    if let Some(path) = &flags.prior {
        config.prior = PriorSource::File { path: path.clone() };
    }
    if let Some(path) = &flags.prior_from_unpaired {
        config.prior = PriorSource::EstimateFromUnpaired {
            path: path.clone(),
            alpha: flags.alpha.unwrap_or(1.0),
        };
    } else if let (Some(alpha), PriorSource::EstimateFromUnpaired { alpha: a, .. }) =
        (flags.alpha, &mut config.prior)
    {
        *a = alpha;
    }
}

fn apply_train_flags(config: &mut ExperimentConfig, flags: &TrainFlags) -> anyhow::Result<()> {
    let t = &mut config.train;
    if let Some(v) = flags.lambda {
        t.lambda = v;
    }
    if let Some(v) = flags.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if let Some(w) = &flags.window {
        t.window = if w == "full" {
            Window::Full
        } else {
            Window::Length(w.parse().with_context(|| format!("bad --window {w:?}"))?)
        };
    }
    if let Some(v) = flags.gamma_d {
        t.gamma_d = v;
    }
    if let Some(v) = flags.gamma_g {
        t.gamma_g = v;
    }
    if let Some(sigma) = flags.init_sigma {
        t.init_scheme = InitScheme::Gaussian { sigma };
        t.generator_init_scheme = InitScheme::Gaussian { sigma };
    }
    if let Some(v) = flags.init_seed {
        t.init_seed = v;
    }
    if let Some(v) = flags.shuffle_seed {
        t.shuffle_seed = v;
    }
    if let Some(v) = flags.eval_every {
        t.eval_every = v;
    }
    Ok(())
}

fn apply_dataset_flags(config: &mut ExperimentConfig, flags: &DatasetFlags) {
    if let Some(v) = flags.length {
        config.dataset.length = v;
    }
    if let Some(v) = flags.train_fraction {
        config.dataset.train_fraction = v;
    }
}

fn load_prior(ws: &Workspace, source: &PriorSource) -> anyhow::Result<TransitionModel> {
    Ok(match source {
        PriorSource::Default => TransitionModel::default_benchmark(),
        PriorSource::Inline { model } => TransitionModel::try_from(model.clone())?,
        PriorSource::File { path } => {
            TransitionModel::try_from(ws.read_json::<TransitionModelJson>(path)?)?
        }
        PriorSource::EstimateFromUnpaired { path, alpha } => {
            let doc: UnpairedLabelsFile = ws.read_json(path)?;
            let est = estimate_transition(&doc.labels, doc.num_classes, *alpha)?;
            if !est.defaulted_columns.is_empty() {
                eprintln!(
                    "warning: no transitions observed out of states {:?}; their columns were set to uniform",
                    est.defaulted_columns
                );
            }
            est.model
        }
    })
}

fn load_dataset(ws: &Workspace, path: &Path) -> anyhow::Result<SyntheticDataset> {
    Ok(SyntheticDataset::try_from(ws.read_json::<DatasetJson>(path)?)?)
}

fn load_model(ws: &Workspace, path: &Path) -> anyhow::Result<ModelFile> {
    ws.read_json(path)
}

fn or_default(ws: &Workspace, path: &Option<PathBuf>, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| ws.out_path(name))
}

fn cmd_generate(
    ws: &Workspace,
    config: &mut ExperimentConfig,
    args: &GenerateArgs,
) -> anyhow::Result<()> {
    apply_prior_flags(config, &args.prior);
    apply_dataset_flags(config, &args.dataset);
    if let Some(seed) = args.seed {
        config.dataset.seed = seed;
    }
    if let Some(n) = args.unpaired_length {
        config.dataset.unpaired_length = n;
    }
    if matches!(config.prior, PriorSource::EstimateFromUnpaired { .. }) {
        bail!("generate needs a known prior, not one estimated from unpaired labels");
    }
    let prior = load_prior(ws, &config.prior)?;
    let d = &config.dataset;
    let dataset = make_dataset(&prior, d.length, d.train_fraction, d.seed)?;
    let corpus = unpaired_labels(&prior, d.unpaired_length, d.seed)?;

    ws.write_json(DATASET_FILE, &DatasetJson::from(&dataset))?;
    ws.write_json(
        OBSERVATIONS_FILE,
        &ObservationsFile {
            dimension: dataset.observations().dimension(),
            split: dataset.split(),
            observations: dataset.observations().indices().to_vec(),
        },
    )?;
    ws.write_json(
        UNPAIRED_LABELS_FILE,
        &UnpairedLabelsFile {
            num_classes: prior.num_classes(),
            labels: corpus,
        },
    )?;
    ws.write_json(PRIOR_FILE, &prior)?;
    ws.write_json(
        ANSWER_KEY_FILE,
        &AnswerKeyFile {
            permutation: dataset.permutation().to_vec(),
        },
    )?;
    println!(
        "wrote {} positions (split {}) to {}",
        dataset.len(),
        dataset.split(),
        ws.out_dir().display()
    );
    Ok(())
}

fn model_file(predictor: &PredictorParams, generator: Option<&GeneratorParams>) -> ModelFile {
    ModelFile {
        predictor: WeightsJson::from(predictor),
        generator: generator.map(WeightsJson::from),
    }
}

fn cmd_train(ws: &Workspace, config: &mut ExperimentConfig, args: &TrainArgs) -> anyhow::Result<()> {
    apply_prior_flags(config, &args.prior);
    apply_train_flags(config, &args.train)?;
    config.validate()?;

    let eval = match &args.eval_dataset {
        Some(path) => Some(load_dataset(ws, path)?),
        None => None,
    };
    let eval_pairs = eval.as_ref().map(SyntheticDataset::test_pairs);
    let eval_ref = eval_pairs.as_ref().map(|(x, y)| (x, y));

    let result = if args.supervised {
        let path = args.dataset.as_ref().context("--supervised needs --dataset")?;
        let dataset = load_dataset(ws, path)?;
        let (x, y) = dataset.train_pairs();
        let test = dataset.test_pairs();
        let eval_ref = eval_ref.or(Some((&test.0, &test.1)));
        train_supervised(&config.train, &x, &y, eval_ref)
            .map(|(p, trace)| (model_file(&p, None), p, trace))
    } else {
        let path = or_default(ws, &args.observations, OBSERVATIONS_FILE);
        let doc: ObservationsFile = ws.read_json(&path)?;
        ensure!(doc.split <= doc.observations.len(), "split exceeds observation count");
        let observations = OneHotSequence::new(doc.observations[..doc.split].to_vec(), doc.dimension)?;
        let prior = load_prior(ws, &config.prior)?;
        train_unsupervised(&config.train, &observations, &prior, eval_ref)
            .map(|(p, g, trace)| (model_file(&p, Some(&g)), p, trace))
    };

    match result {
        Ok((model, predictor, trace)) => {
            ws.write_json(&args.model_name, &model)?;
            ws.write_text(&args.trace_name, &trace.to_csv())?;
            let last = trace.last().expect("trace has at least one row");
            println!(
                "epochs {}  total {}  rank1 {:.4}  test_error {}  max_tv {:.4}",
                last.epoch,
                last.total,
                last.rank1_score,
                last.test_error,
                max_tv_distance(&predictor)
            );
            Ok(())
        }
        Err(TrainError::Diverged { epoch, trace }) => {
            let trace_path = ws.write_text(&args.trace_name, &trace.to_csv())?;
            Err(Diverged { epoch, trace_path }.into())
        }
        Err(TrainError::Invalid(e)) => Err(e.into()),
    }
}

fn cmd_landscape(
    ws: &Workspace,
    config: &mut ExperimentConfig,
    args: &LandscapeArgs,
) -> anyhow::Result<()> {
    apply_prior_flags(config, &args.prior);
    apply_train_flags(config, &args.train)?;
    let l = &mut config.landscape;
    for (slot, flag) in [
        (&mut l.lambda_star, args.lambda_star),
        (&mut l.kappa, args.kappa),
        (&mut l.random_scale, args.random_scale),
        (&mut l.grid_min, args.grid_min),
        (&mut l.grid_max, args.grid_max),
        (&mut l.grid_step, args.grid_step),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(seed) = args.line_seed {
        l.line_seed = seed;
    }
    let l = config.landscape.clone();

    let key_path = or_default(ws, &args.answer_key, ANSWER_KEY_FILE);
    if !key_path.exists() {
        bail!(
            "answer key {} not found; run `unpaired generate` first",
            key_path.display()
        );
    }
    let key: AnswerKeyFile = ws.read_json(&key_path)?;
    let dataset = load_dataset(ws, &or_default(ws, &args.dataset, DATASET_FILE))?;
    ensure!(
        key.permutation == dataset.permutation(),
        "answer key does not belong to this dataset"
    );
    let prior = load_prior(ws, &config.prior)?;
    let c = prior.num_classes();
    let truth = routing_weights(&invert_permutation(&key.permutation), c, l.kappa);

    let far = match &args.endpoint {
        Some(path) => {
            let w = load_model(ws, path)?.predictor.to_predictor()?.weights;
            ensure!(w.shape() == truth.shape(), "endpoint shape {:?} does not match", w.shape());
            w
        }
        None => random_line_endpoint(&truth, l.random_scale, l.line_seed)?,
    };
    let generator = match &args.generator {
        Some(path) => load_model(ws, path)?
            .generator
            .context("model file has no generator")?
            .to_generator()?,
        None => GeneratorParams::new(
            routing_weights(&key.permutation, c, l.kappa),
            config.train.gamma_g,
        )?,
    };

    let observations = dataset.train_observations();
    let problem = UnsupervisedProblem::new(&observations, &prior)?;
    let (x, y) = dataset.train_pairs();
    let pairs = PairCounts::new(&x, &y)?;
    let gamma_d = config.train.gamma_d;
    let predictor = |w: &unpaired::Matrix| PredictorParams::new(w.clone(), gamma_d);
    let curves = vec![
        Curve::new("supervised", |w| pairs.log_likelihood(&predictor(w)?)),
        Curve::new("unsup_lambda_0", |w| problem.fitness(&predictor(w)?)),
        Curve::new(format!("unsup_lambda_{}", l.lambda_star), |w| {
            Ok(problem.evaluate(&predictor(w)?, &generator, l.lambda_star)?.total)
        }),
    ];
    let grid = line_grid(l.grid_min, l.grid_max, l.grid_step)?;
    let probe = landscape_line(&truth, &far, &grid, &curves)?;
    let path = ws.write_text(&args.output, &probe.to_csv())?;
    println!("wrote {} grid points to {}", probe.rows.len(), path.display());
    Ok(())
}

fn cmd_sweep_noise(
    ws: &Workspace,
    config: &mut ExperimentConfig,
    args: &SweepArgs,
) -> anyhow::Result<()> {
    apply_prior_flags(config, &args.prior);
    apply_train_flags(config, &args.train)?;
    apply_dataset_flags(config, &args.dataset);
    if let Some(v) = &args.sigma_p_grid {
        config.sweep.sigma_p_grid = v.clone();
    }
    if let Some(v) = &args.lambda_grid {
        config.sweep.lambda_grid = v.clone();
    }
    if let Some(v) = &args.seeds {
        config.sweep.seeds = v.clone();
    }
    if let Some(v) = args.jobs {
        config.sweep.jobs = v;
    }
    config.validate()?;
    let prior = load_prior(ws, &config.prior)?;
    let result = run_noise_sweep(&prior, config)?;
    let path = ws.write_text(&args.output, &result.to_csv())?;
    for line in result.summary() {
        println!("{line}");
    }
    let failed = result.failed_cells();
    if failed > 0 {
        eprintln!("warning: {failed} sweep cells failed (recorded with sentinel -1)");
    }
    println!("wrote {} rows to {}", result.rows.len(), path.display());
    Ok(())
}

fn cmd_oracle(ws: &Workspace, config: &mut ExperimentConfig, args: &OracleArgs) -> anyhow::Result<()> {
    apply_prior_flags(config, &args.prior);
    let dataset = load_dataset(ws, &or_default(ws, &args.dataset, DATASET_FILE))?;
    let prior = load_prior(ws, &config.prior)?;
    let result = permutation_oracle(&dataset.train_observations(), &prior)?;
    let path = ws.write_text(&args.output, &result.to_csv())?;
    let matches = result.best == dataset.inverse_permutation();
    println!("best permutation: {:?} (score {})", result.best, result.best_score);
    println!("equals inverse data permutation: {matches}");
    if result.is_identifiable() {
        println!("margin over runner-up: {}", result.margin);
    } else {
        println!("non-identifiable: best score is tied (margin {})", result.margin);
    }
    println!("wrote {} rows to {}", result.table.len(), path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    test_error: f64,
    train_error: f64,
    rank1_score: f64,
    max_tv_distance: f64,
    singular_values: Vec<f64>,
}

fn cmd_eval(ws: &Workspace, args: &EvalArgs) -> anyhow::Result<()> {
    let model = load_model(ws, &or_default(ws, &args.model, MODEL_FILE))?;
    let dataset = load_dataset(ws, &or_default(ws, &args.dataset, DATASET_FILE))?;
    let predictor = model.predictor.to_predictor()?;
    let (tx, ty) = dataset.test_pairs();
    let (rx, ry) = dataset.train_pairs();
    let report = EvalReport {
        test_error: test_error(&predictor, &tx, &ty)?,
        train_error: test_error(&predictor, &rx, &ry)?,
        rank1_score: rank1_score(&predictor.weights).unwrap_or(f64::NAN),
        max_tv_distance: max_tv_distance(&predictor),
        singular_values: unpaired::diagnostics::singular_values(&predictor.weights)?,
    };
    ws.write_json(EVAL_FILE, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
