//! Command-line driver: synthetic-tree generation, training, evaluation,
//! embedding diagnostics, gradient checking, and multi-seed sweeps.
//!
//! Run directories are laid out as `<run>/{config.cfg, embedding.txt,
//! weights.txt, metrics.json, history.csv}`; tree directories as
//! `<out>/{graph.edges, features.csv, labels.txt, depth.txt}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyprel::data::{load_embedding, load_graph_dir, save_embedding, save_graph};
use hyprel::error::{Error, Result};
use hyprel::eval::{hdo_diagnostics, hierarchy_accuracy};
use hyprel::gradcheck;
use hyprel::graph::{gen_tree, homophily, TreeVariant};
use hyprel::trainer::{evaluate, sweep, train, Split, TrainConfig, TrainOutput};

#[derive(Parser)]
#[command(name = "hyprel", version, about = "Hyperbolic representation learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled tree with Gaussian features.
    GenTree(GenTreeArgs),
    /// Train a model on a graph directory and write run artifacts.
    Train(TrainArgs),
    /// Recompute metrics from a finished run directory.
    Eval(EvalArgs),
    /// Distance-to-origin diagnostics on a saved embedding.
    Probe(ProbeArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck,
    /// Train one configuration across a seed grid and aggregate.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenTreeArgs {
    /// Label scheme: H (subtree classes) or L (level classes).
    #[arg(long, default_value = "H")]
    variant: String,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    /// Total node budget; the default fills seven complete ternary levels.
    #[arg(long, default_value_t = 1093)]
    budget: usize,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. `--set hie.mode=full --set lr=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Convenience override for the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::from_str_body(&fs::read_to_string(path)?)?,
            None => TrainConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects key=value, got `{kv}`")))?;
            config.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Graph directory produced by gen-tree (or hand-assembled).
    #[arg(long)]
    data: PathBuf,
    /// Run output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Where to write the recomputed report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Embedding file written by `train`.
    #[arg(long)]
    embedding: PathBuf,
    /// Optional depth file enabling the relative-hierarchy score.
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Optional CSV destination for the HDO histogram.
    #[arg(long)]
    hist_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    #[command(flatten)]
    config: ConfigArgs,
}

fn write_history(path: &Path, output: &TrainOutput) -> Result<()> {
    let mut body = String::from("epoch,total_loss,val_metric\n");
    for row in &output.history {
        body.push_str(&format!("{},{:?},{:?}\n", row.epoch, row.total_loss, row.val_metric));
    }
    fs::write(path, body)?;
    Ok(())
}

fn write_weights(path: &Path, output: &TrainOutput) -> Result<()> {
    let mut body = String::new();
    for p in &output.params {
        let space = match p.space {
            hyprel::autodiff::ParamSpace::Euclidean => "euclidean",
            hyprel::autodiff::ParamSpace::TangentAtOrigin => "tangent_at_origin",
            hyprel::autodiff::ParamSpace::RiemannianPoincare => "riemannian_poincare",
        };
        body.push_str(&format!(
            "param {} {} {} {}\n",
            p.name,
            space,
            p.value.nrows(),
            p.value.ncols()
        ));
        for row in p.value.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
    }
    fs::write(path, body)?;
    Ok(())
}

fn read_weights(path: &Path) -> Result<Vec<hyprel::autodiff::Parameter>> {
    use hyprel::autodiff::{ParamSpace, Parameter};
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().peekable();
    let mut params = Vec::new();
    while let Some((li, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "param" {
            return Err(Error::Parse { line: li + 1, msg: "expected `param name space rows cols`".into() });
        }
        let name = parts[1].to_string();
        let space = match parts[2] {
            "euclidean" => ParamSpace::Euclidean,
            "tangent_at_origin" => ParamSpace::TangentAtOrigin,
            "riemannian_poincare" => ParamSpace::RiemannianPoincare,
            other => {
                return Err(Error::Parse { line: li + 1, msg: format!("unknown space `{other}`") })
            }
        };
        let rows: usize =
            parts[3].parse().map_err(|e| Error::Parse { line: li + 1, msg: format!("{e}") })?;
        let cols: usize =
            parts[4].parse().map_err(|e| Error::Parse { line: li + 1, msg: format!("{e}") })?;
        let mut value = ndarray::Array2::zeros((rows, cols));
        for r in 0..rows {
            let (li, row_line) = lines
                .next()
                .ok_or_else(|| Error::invalid("unexpected end of weights file"))?;
            let vals: Vec<f64> = row_line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Parse { line: li + 1, msg: format!("{e}") }))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(Error::Parse { line: li + 1, msg: "short weight row".into() });
            }
            for (c, v) in vals.into_iter().enumerate() {
                value[[r, c]] = v;
            }
        }
        params.push(Parameter::new(name, value, space));
    }
    Ok(params)
}

fn cmd_gen_tree(args: &GenTreeArgs) -> Result<()> {
    let variant = TreeVariant::parse(&args.variant)?;
    let graph = gen_tree(args.branching, args.budget, variant, args.feature_dim, args.seed)?;
    save_graph(&graph, &args.out)?;
    println!(
        "wrote {} nodes, {} edges, {} classes (homophily {:.3}) to {}",
        graph.n,
        graph.edges.len(),
        graph.num_classes(),
        homophily(&graph)?,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.config.build()?;
    let graph = load_graph_dir(&args.data)?;
    let split = Split::for_config(&config, &graph)?;
    let output = train(&config, &graph, &split)?;
    let report = evaluate(&config, &graph, &split, &output)?;

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.cfg"), config.to_file_body())?;
    save_embedding(&output.embedding, &args.out.join("embedding.txt"))?;
    write_weights(&args.out.join("weights.txt"), &output)?;
    write_history(&args.out.join("history.csv"), &output)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::invalid(format!("serialize report: {e}")))?;
    fs::write(args.out.join("metrics.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = TrainConfig::from_str_body(&fs::read_to_string(args.run.join("config.cfg"))?)?;
    let graph = load_graph_dir(&args.data)?;
    let split = Split::for_config(&config, &graph)?;
    let params = read_weights(&args.run.join("weights.txt"))?;
    let embedding = hyprel::trainer::embed(&config, &graph, &split, params.clone())?;
    let output = TrainOutput {
        embedding,
        params,
        history: Vec::new(),
        best_epoch: 0,
        best_val: f64::NAN,
    };
    let report = evaluate(&config, &graph, &split, &output)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::invalid(format!("serialize report: {e}")))?;
    match &args.out {
        Some(path) => fs::write(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let embedding = load_embedding(&args.embedding)?;
    let report = hdo_diagnostics(&embedding, args.bins)?;
    let mut doc = serde_json::json!({
        "n": embedding.n(),
        "model": embedding.space.model.as_str(),
        "dim": embedding.dim(),
        "hdo_stats": {
            "min": report.hdo.min,
            "max": report.hdo.max,
            "mean": report.hdo.mean,
            "root": report.hdo.root,
        },
        "hdc_stats": {
            "min": report.hdc.min,
            "max": report.hdc.max,
            "mean": report.hdc.mean,
        },
    });
    if let Some(depth_path) = &args.depth {
        let text = fs::read_to_string(depth_path)?;
        let depth: Vec<usize> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().map_err(|e| Error::invalid(format!("depth: {e}"))))
            .collect::<Result<_>>()?;
        let acc = hierarchy_accuracy(&embedding, &depth, args.pairs, args.seed)?;
        doc["hierarchy_accuracy"] = serde_json::json!(acc);
    }
    if let Some(hist_path) = &args.hist_out {
        let hist = report.hdo.histogram.as_ref().expect("histogram requested");
        fs::write(hist_path, hist.to_csv())?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(format!("{e}")))?
    );
    Ok(())
}

fn cmd_gradcheck() -> Result<()> {
    let cases = gradcheck::run_suite()?;
    if gradcheck::report_suite(&cases) {
        Ok(())
    } else {
        Err(Error::invalid("gradient check failures"))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = args.config.build()?;
    let graph = load_graph_dir(&args.data)?;
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|t| t.trim().parse().map_err(|e| Error::invalid(format!("seeds: {e}"))))
        .collect::<Result<_>>()?;
    let summary = sweep(&config, &graph, &seeds)?;
    fs::create_dir_all(&args.out)?;
    for (seed, report) in summary.seeds.iter().zip(&summary.per_seed) {
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| Error::invalid(format!("{e}")))?;
        fs::write(args.out.join(format!("metrics_seed{seed}.json")), json)?;
    }
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::invalid(format!("{e}")))?;
    fs::write(args.out.join("summary.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenTree(args) => cmd_gen_tree(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
