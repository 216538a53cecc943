//! Command-line surface: generate data, train models, decode, evaluate,
//! gradient-check, and analyze embeddings.
//!
//! Every run prints its effective configuration (defaults resolved) so any
//! result can be reproduced from the logged flags alone.

use std::ffi::OsString;
use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{
    cross_validate_weight, em_mixture_markov, train_unary, transition_stats,
};
use crate::data::{generate_synthetic, load_dataset, save_dataset, split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{export_embeddings, nearest_neighbors, recall_at_precision};
use crate::model::{CrfParams, ModelDims};
use crate::objectives::{
    finite_diff_check, global_nll, l2_penalty, memm_nll, piecewise_nll, pseudolikelihood_nll,
    pwpl_nll, BnMode, PairSample,
};
use crate::persist::{load_model, save_model, ModelFile, SavedModel};
use crate::training::{history_table, sgd_train, standardize_features, Objective, TrainConfig};
use crate::trellis::DecodeMode;

#[derive(Parser)]
#[command(
    name = "cecrf",
    version,
    about = "Sequence classification with a class-embedding linear-chain CRF"
)]
struct Cli {
    /// Worker threads for batch decoding (results are identical for every
    /// setting).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic benchmark dataset.
    Generate(GenerateArgs),
    /// Train the CRF or one of the baseline models.
    Train(TrainArgs),
    /// Decode a dataset with a trained model.
    Infer(InferArgs),
    /// Score a trained model on a labeled dataset.
    Eval(EvalArgs),
    /// Check an objective's analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Inspect or export the learned class embeddings.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full generator configuration; inline flags override
    /// its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    p_repeat: Option<f64>,
    #[arg(long)]
    p_group: Option<f64>,
    #[arg(long)]
    delta_within: Option<f64>,
    #[arg(long)]
    delta_between: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    length_min: Option<usize>,
    #[arg(long)]
    length_max: Option<usize>,
    #[arg(long)]
    num_sequences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    model_out: PathBuf,
    /// Training objective: global, global_folded, memm_bn, memm,
    /// pseudolikelihood, piecewise, pwpl.
    #[arg(long, default_value = "memm_bn")]
    objective: String,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 5e-4)]
    l2: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// Drop the batch-norm part of the objective (memm_bn becomes memm,
    /// global_folded becomes global).
    #[arg(long)]
    no_bn: bool,
    /// Train a baseline instead of the CRF: unary, stats, or mixture.
    #[arg(long)]
    baseline: Option<String>,
    /// Mixture components for the mixture baseline.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// EM iterations for the mixture baseline.
    #[arg(long, default_value_t = 50)]
    em_iters: usize,
    /// Additive smoothing for transition statistics.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Candidate unary/pairwise weights for cross validation.
    #[arg(long, default_value = "0,0.25,0.5,1,2,4")]
    weight_grid: String,
    /// Fraction of the training data kept for fitting during weight cross
    /// validation; the rest becomes the held-out split.
    #[arg(long, default_value_t = 0.8)]
    cv_fraction: f64,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// viterbi or marginal (marginal adds a per-object confidence column).
    #[arg(long, default_value = "viterbi")]
    mode: String,
    /// Predictions path, one sequence per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Precision target (percent) for the recall calibration.
    #[arg(long, default_value_t = 91.0)]
    precision_target: f64,
    /// Also print the report as one tab-separated line.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Objective to check: global, global_folded, memm_bn, memm,
    /// pseudolikelihood, piecewise, pwpl, or l2.
    #[arg(long)]
    objective: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Maximum acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Print the nearest neighbors of this class under the neighbor
    /// embedding.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Export all class embeddings to this path.
    #[arg(long)]
    export: Option<PathBuf>,
}

/// Parse `argv`, dispatch, and map the outcome to a process exit code:
/// 0 on success, 1 on a module error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(threads) = cli.threads {
        // the pool can only be installed once per process; later runs with
        // the same setting are no-ops
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        }
        None => SynthConfig::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    overlay!(
        num_classes,
        group_size,
        feature_dim,
        p_repeat,
        p_group,
        delta_within,
        delta_between,
        noise_sigma,
        length_min,
        length_max,
        num_sequences,
        seed
    );
    println!(
        "config: generate num_classes={} group_size={} feature_dim={} p_repeat={} p_group={} \
         delta_within={} delta_between={} noise_sigma={} length_min={} length_max={} \
         num_sequences={} seed={} out={}",
        cfg.num_classes,
        cfg.group_size,
        cfg.feature_dim,
        cfg.p_repeat,
        cfg.p_group,
        cfg.delta_within,
        cfg.delta_between,
        cfg.noise_sigma,
        cfg.length_min,
        cfg.length_max,
        cfg.num_sequences,
        cfg.seed,
        args.out.display()
    );
    let dataset = generate_synthetic(&cfg)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} sequences / {} objects to {}",
        dataset.num_sequences(),
        dataset.num_objects(),
        args.out.display()
    );
    Ok(0)
}

fn parse_weight_grid(text: &str) -> Result<Vec<f64>> {
    let grid: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let grid = grid.map_err(|e| Error::Argument(format!("bad weight grid {text:?}: {e}")))?;
    if grid.is_empty() {
        return Err(Error::Argument("weight grid must be nonempty".into()));
    }
    Ok(grid)
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let raw = load_dataset(&args.data)?;
    let (stats, dataset) = standardize_features(&raw)?;

    let mut objective: Objective = args.objective.parse()?;
    if args.no_bn {
        objective = match objective {
            Objective::MemmBn => Objective::Memm,
            Objective::GlobalFolded => Objective::Global,
            other => other,
        };
    }
    let config = TrainConfig {
        objective,
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
        l2: args.l2,
        embed_dim: args.embed_dim,
        epochs: args.epochs,
        seed: args.seed,
        init_scale: args.init_scale,
    };
    println!(
        "config: train data={} model_out={} baseline={} objective={} embed_dim={} batch_size={} \
         lr={} momentum={} l2={} epochs={} seed={} init_scale={} k={} em_iters={} alpha={} \
         weight_grid={} cv_fraction={}",
        args.data.display(),
        args.model_out.display(),
        args.baseline.as_deref().unwrap_or("none"),
        config.objective,
        config.embed_dim,
        config.batch_size,
        config.lr,
        config.momentum,
        config.l2,
        config.epochs,
        config.seed,
        config.init_scale,
        args.k,
        args.em_iters,
        args.alpha,
        args.weight_grid,
        args.cv_fraction
    );

    let losses_path = {
        let mut os = args.model_out.as_os_str().to_owned();
        os.push(".losses.txt");
        PathBuf::from(os)
    };

    let (model, history) = match args.baseline.as_deref() {
        None => {
            let (params, history) = sgd_train(&config, &dataset)?;
            (
                SavedModel::Raw {
                    params,
                    bn_active: config.objective.uses_bn(),
                },
                history,
            )
        }
        Some("unary") => {
            let (unary, history) = train_unary(&dataset, &config)?;
            (SavedModel::Unary(unary), history)
        }
        Some("stats") => {
            let grid = parse_weight_grid(&args.weight_grid)?;
            let (fit, holdout) = split(&dataset, args.cv_fraction, config.seed)?;
            let (cv_unary, _) = train_unary(&fit, &config)?;
            let cv_stats =
                transition_stats(&fit.label_sequences(), dataset.num_classes, args.alpha)?;
            let (weight, cv_err) = cross_validate_weight(
                &cv_unary,
                &cv_stats,
                &holdout,
                &grid,
                DecodeMode::Viterbi,
            )?;
            println!("cross-validated weight={weight} (held-out error {cv_err:.4}%)");
            // refit on the full training set with the selected weight
            let (unary, history) = train_unary(&dataset, &config)?;
            let stats =
                transition_stats(&dataset.label_sequences(), dataset.num_classes, args.alpha)?;
            (SavedModel::StatsCrf { unary, stats, weight }, history)
        }
        Some("mixture") => {
            let grid = parse_weight_grid(&args.weight_grid)?;
            let (fit, holdout) = split(&dataset, args.cv_fraction, config.seed)?;
            let (cv_unary, _) = train_unary(&fit, &config)?;
            let cv_stats =
                transition_stats(&fit.label_sequences(), dataset.num_classes, args.alpha)?;
            let (weight, _) = cross_validate_weight(
                &cv_unary,
                &cv_stats,
                &holdout,
                &grid,
                DecodeMode::Viterbi,
            )?;
            println!("cross-validated weight={weight}");
            let (unary, history) = train_unary(&dataset, &config)?;
            let (mixture, trace) = em_mixture_markov(
                &dataset.label_sequences(),
                dataset.num_classes,
                args.k,
                args.em_iters,
                config.seed,
                args.alpha,
            )?;
            println!(
                "em: {} iterations, log-likelihood {:.4} -> {:.4}",
                trace.len(),
                trace.first().copied().unwrap_or(f64::NAN),
                trace.last().copied().unwrap_or(f64::NAN)
            );
            (SavedModel::Mixture { unary, mixture, weight }, history)
        }
        Some(other) => {
            return Err(Error::Argument(format!(
                "unknown baseline {other:?}; expected unary, stats, or mixture"
            )))
        }
    };

    let file = ModelFile {
        model,
        feature_stats: Some(stats),
    };
    save_model(&file, &args.model_out)?;
    fs::write(&losses_path, history_table(&history))?;
    if let Some(last) = history.last() {
        println!("final epoch loss: {:.6}", last.loss);
    }
    println!(
        "wrote {} model to {}",
        file.model.kind_name(),
        args.model_out.display()
    );
    Ok(0)
}

fn cmd_infer(args: InferArgs) -> Result<i32> {
    let mode: DecodeMode = args.mode.parse()?;
    println!(
        "config: infer model={} data={} mode={} out={}",
        args.model.display(),
        args.data.display(),
        args.mode,
        args.out.display()
    );
    let file = load_model(&args.model)?;
    let raw = load_dataset(&args.data)?;
    let dataset = file.standardize(&raw);
    let predictions = file.decode_dataset(&dataset, mode)?;

    let mut out = String::new();
    for pred in &predictions {
        let labels: Vec<String> = pred.labels.iter().map(|y| y.to_string()).collect();
        out.push_str(&labels.join(" "));
        if let Some(conf) = &pred.confidences {
            let cols: Vec<String> = conf.iter().map(|c| format!("{c:.6}")).collect();
            out.push('\t');
            out.push_str(&cols.join(" "));
        }
        out.push('\n');
    }
    fs::write(&args.out, out)?;
    println!(
        "wrote predictions for {} sequences to {}",
        predictions.len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    println!(
        "config: eval model={} data={} precision_target={} tsv={}",
        args.model.display(),
        args.data.display(),
        args.precision_target,
        args.tsv
    );
    let file = load_model(&args.model)?;
    let raw = load_dataset(&args.data)?;
    let dataset = file.standardize(&raw);
    let predictions = file.decode_dataset(&dataset, DecodeMode::Marginal)?;

    let mut predicted = Vec::with_capacity(dataset.num_objects());
    let mut confidences = Vec::with_capacity(dataset.num_objects());
    for pred in &predictions {
        predicted.extend_from_slice(&pred.labels);
        confidences.extend_from_slice(pred.confidences.as_ref().expect("marginal mode"));
    }
    let gold = dataset.flat_labels();
    let report = recall_at_precision(&confidences, &predicted, &gold, args.precision_target)?;
    print!("{}", report.text_block());
    if args.tsv {
        println!("{}", report.tsv_line());
    }
    Ok(0)
}

// Small, seeded instances for the gradient checker. Batch-norm state is
// deliberately non-identity so its gradients are exercised.
fn gradcheck_fixture(seed: u64) -> (CrfParams, Vec<crate::data::LabeledSequence>, Vec<PairSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims::new(3, 4, 2).unwrap();
    let mut params = CrfParams::init(dims, seed, 0.8).unwrap();
    params.bn.gamma = Array1::from_shape_fn(2, |_| rng.random_range(0.5..1.5));
    params.bn.beta = Array1::from_shape_fn(2, |_| rng.random_range(-0.5..0.5));
    params.bn.running_mean = Array1::from_shape_fn(2, |_| rng.random_range(-0.5..0.5));
    params.bn.running_var = Array1::from_shape_fn(2, |_| rng.random_range(0.5..2.0));

    let sequences: Vec<crate::data::LabeledSequence> = (0..3)
        .map(|_| {
            let n = rng.random_range(2..=4);
            crate::data::LabeledSequence {
                features: Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.5..1.5)),
                labels: (0..n).map(|_| rng.random_range(0..4)).collect(),
            }
        })
        .collect();
    let batch: Vec<PairSample> = (0..8)
        .map(|i| PairSample {
            prev_label: (i % 3 != 0).then(|| rng.random_range(0..4)),
            features: Array1::from_shape_fn(3, |_| rng.random_range(-1.5..1.5)),
            label: rng.random_range(0..4),
        })
        .collect();
    (params, sequences, batch)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    println!(
        "config: gradcheck objective={} seed={} step={} tolerance={}",
        args.objective, args.seed, args.step, args.tolerance
    );
    let (params, sequences, batch) = gradcheck_fixture(args.seed);
    let err = match args.objective.as_str() {
        "global" => finite_diff_check(|p| global_nll(p, &sequences, false), &params, args.step)?,
        "global_folded" => {
            finite_diff_check(|p| global_nll(p, &sequences, true), &params, args.step)?
        }
        "memm_bn" => finite_diff_check(
            |p| memm_nll(p, &batch, BnMode::Train).map(|(l, g, _)| (l, g)),
            &params,
            args.step,
        )?,
        "memm" => finite_diff_check(
            |p| memm_nll(p, &batch, BnMode::Off).map(|(l, g, _)| (l, g)),
            &params,
            args.step,
        )?,
        "pseudolikelihood" => {
            finite_diff_check(|p| pseudolikelihood_nll(p, &sequences), &params, args.step)?
        }
        "piecewise" => finite_diff_check(|p| piecewise_nll(p, &sequences), &params, args.step)?,
        "pwpl" => finite_diff_check(|p| pwpl_nll(p, &sequences), &params, args.step)?,
        "l2" => finite_diff_check(|p| l2_penalty(p, 0.37), &params, args.step)?,
        other => {
            return Err(Error::Argument(format!(
                "unknown objective {other:?} for gradcheck"
            )))
        }
    };
    println!("max relative gradient error: {err:.3e}");
    if err <= args.tolerance {
        println!("gradcheck: pass");
        Ok(0)
    } else {
        println!("gradcheck: FAIL (tolerance {:.3e})", args.tolerance);
        Ok(1)
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    println!(
        "config: analyze model={} class={} top_k={} export={}",
        args.model.display(),
        args.class.map_or("none".to_string(), |c| c.to_string()),
        args.top_k,
        args.export
            .as_ref()
            .map_or("none".to_string(), |p| p.display().to_string())
    );
    if args.class.is_none() && args.export.is_none() {
        return Err(Error::Argument(
            "analyze needs --class and/or --export".into(),
        ));
    }
    let file = load_model(&args.model)?;
    let params = match &file.model {
        SavedModel::Raw { params, .. } => params,
        other => {
            return Err(Error::Argument(format!(
                "model kind {:?} carries no class embeddings",
                other.kind_name()
            )))
        }
    };
    if let Some(path) = &args.export {
        export_embeddings(params, path)?;
        println!(
            "exported {} embedding rows to {}",
            params.dims.num_classes,
            path.display()
        );
    }
    if let Some(class) = args.class {
        let ranked = nearest_neighbors(params.neighbor_embed.view(), class, args.top_k)?;
        let mut table = String::new();
        writeln!(table, "nearest neighbors of class {class} (neighbor embedding):")
            .expect("string write");
        for (rank, (other, cosine)) in ranked.iter().enumerate() {
            writeln!(table, "  {:>2}. class {:>4}  cosine {:+.6}", rank + 1, other, cosine)
                .expect("string write");
        }
        print!("{table}");
    }
    Ok(0)
}
