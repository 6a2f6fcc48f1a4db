//! Command-line pipeline: hierarchy building, benchmark generation,
//! training, rollout, evaluation, and the two-variant sticks demo.
//!
//! Exit codes: 0 success, 2 bad flags or invalid inputs, 3 I/O failures,
//! 4 numerical failures. Results go only to declared output paths; logs are
//! single-line key=value records on standard error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use bistride::bistride::{build_hierarchy, Parity, Seeding};
use bistride::dense::Matrix;
use bistride::error::Error;
use bistride::heat1d::{
    gen_heat1d, run_demo, DemoConfig, DemoReport, HeatSample, Split, StickConfig,
};
use bistride::mesh::{
    export_hierarchy, load_mesh, load_trajectory, mesh_to_graph, save_mesh, save_trajectory, Mesh,
    Trajectory,
};
use bistride::model::{BsmsParams, ModelConfig, Transition};
use bistride::train::{
    eval_metrics, fit_normalizer, inject_noise, rollout, train_step, training_pairs, Adam,
    Normalizer, RolloutMetrics, TrainPair,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "bsms", version, about = "Bi-stride multi-scale graph hierarchies and message-passing models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a multi-scale hierarchy from a mesh file.
    Build(BuildArgs),
    /// Generate the 1-D heat-transfer sticks benchmark.
    GenHeat1d(GenArgs),
    /// Train a model on a mesh and its trajectories.
    Train(TrainArgs),
    /// Roll a trained model out along a trajectory's horizon.
    Rollout(RolloutArgs),
    /// Compare a predicted trajectory against ground truth.
    Eval(EvalArgs),
    /// End-to-end sticks demo: train and evaluate both coarsening variants.
    DemoHeat1d(DemoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeuristicArg {
    Minave,
    Closecenter,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParityArg {
    Even,
    Odd,
}

#[derive(Args)]
struct BuildArgs {
    /// Mesh JSON input.
    #[arg(long)]
    mesh: PathBuf,
    /// Number of hierarchy levels.
    #[arg(long)]
    depth: usize,
    #[arg(long, value_enum, default_value = "minave")]
    heuristic: HeuristicArg,
    #[arg(long, value_enum, default_value = "even")]
    parity: ParityArg,
    /// Hierarchy JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    split: SplitArg,
    /// Directory receiving mesh_<i>.json and trajectory_<i>.json per sample.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 17)]
    nodes: usize,
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    /// Gap between sticks in the test layout; defaults to 0.3 element
    /// spacings.
    #[arg(long)]
    gap: Option<f64>,
}

/// Training settings; JSON config file fields, all overridable by flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSettings {
    depth: usize,
    latent_dim: usize,
    hidden_dim: usize,
    epochs: usize,
    learning_rate: f64,
    noise: f64,
    seed: u64,
    input_fields: Vec<String>,
    input_components: Vec<usize>,
    output_fields: Vec<String>,
    output_components: Vec<usize>,
    num_node_types: usize,
    transition: Transition,
    skip_connections: bool,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        TrainSettings {
            depth: 2,
            latent_dim: 16,
            hidden_dim: 64,
            epochs: 100,
            learning_rate: 1e-3,
            noise: 0.0,
            seed: 0,
            input_fields: vec!["temp".into()],
            input_components: vec![1],
            output_fields: vec!["temp".into()],
            output_components: vec![1],
            num_node_types: 3,
            transition: Transition::Weighted,
            skip_connections: true,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Trajectory JSON files; at least one.
    #[arg(long, required = true, num_args = 1..)]
    trajectory: Vec<PathBuf>,
    /// JSON settings file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Training-noise standard deviation on dynamic inputs.
    #[arg(long)]
    noise: Option<f64>,
    /// RNG seed; defaults to BSMS_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Model JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    /// Ground-truth trajectory providing the initial state and horizon.
    #[arg(long)]
    trajectory: PathBuf,
    /// Predicted trajectory JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted trajectory JSON.
    #[arg(long)]
    prediction: PathBuf,
    /// Ground-truth trajectory JSON.
    #[arg(long)]
    truth: PathBuf,
    /// Fields to score; all prediction fields when omitted.
    #[arg(long, num_args = 1..)]
    fields: Vec<String>,
    /// Metrics JSON output; a per-step CSV lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// JSON settings file mirroring the demo configuration; flags override.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving metrics.json, metrics.csv, and optional plots.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also emit per-pairing temperature-profile SVG plots.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::GenHeat1d(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Eval(a) => cmd_eval(a),
        Command::DemoHeat1d(a) => cmd_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Io { .. } | Error::Parse { .. } => 3,
                Error::Numerical(_) => 4,
                Error::InvalidInput(_) | Error::DimensionMismatch(_) => 2,
            };
            eprintln!("level=error exit={code} message={:?}", e.to_string());
            ExitCode::from(code)
        }
    }
}

fn log(event: &str, details: &str) {
    eprintln!("level=info event={event} {details}");
}

fn env_seed() -> u64 {
    std::env::var("BSMS_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn cmd_build(a: BuildArgs) -> Result<(), Error> {
    let mesh = load_mesh(&a.mesh)?;
    let graph = mesh_to_graph(&mesh)?;
    let heuristic = match a.heuristic {
        HeuristicArg::Minave => Seeding::MinAve,
        HeuristicArg::Closecenter => Seeding::CloseCenter,
    };
    let parity = match a.parity {
        ParityArg::Even => Parity::Even,
        ParityArg::Odd => Parity::Odd,
    };
    let hier = build_hierarchy(&graph, &mesh.positions, None, a.depth, heuristic, parity)?;
    export_hierarchy(&hier, &a.out)?;
    let sizes: Vec<usize> = hier.levels.iter().map(|l| l.adj.n()).collect();
    log("build", &format!("levels={sizes:?} out={}", a.out.display()));
    Ok(())
}

fn sample_mesh(s: &HeatSample) -> Mesh {
    Mesh {
        dim: 1,
        positions: s.positions.clone(),
        cells: s.edges.iter().map(|&(u, v)| vec![u, v]).collect(),
        node_type: s.node_type.clone(),
    }
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    let mut stick = StickConfig {
        nodes: a.nodes,
        length: a.length,
        ..StickConfig::default()
    };
    stick.gap = a.gap.unwrap_or(0.3 * stick.spacing());
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let samples = gen_heat1d(split, &stick)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Error::io(a.out_dir.display().to_string(), e))?;
    for (i, s) in samples.iter().enumerate() {
        save_mesh(&sample_mesh(s), a.out_dir.join(format!("mesh_{i}.json")))?;
        save_trajectory(&s.trajectory, a.out_dir.join(format!("trajectory_{i}.json")))?;
    }
    log(
        "gen-heat1d",
        &format!("samples={} out_dir={}", samples.len(), a.out_dir.display()),
    );
    Ok(())
}

/// Everything needed to apply a trained model later.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: ModelConfig,
    normalizer: Normalizer,
    params: BsmsParams,
}

fn model_config_from(settings: &TrainSettings, position_dim: usize) -> ModelConfig {
    ModelConfig {
        latent_dim: settings.latent_dim,
        hidden_dim: settings.hidden_dim,
        depth: settings.depth,
        edge_sets: 1,
        position_dim,
        offset_norm: true,
        num_node_types: settings.num_node_types,
        input_fields: settings.input_fields.clone(),
        input_components: settings.input_components.clone(),
        output_fields: settings.output_fields.clone(),
        output_components: settings.output_components.clone(),
        transition: settings.transition,
        skip_connections: settings.skip_connections,
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let mut settings: TrainSettings = match &a.config {
        Some(path) => read_config(path)?,
        None => TrainSettings::default(),
    };
    if let Some(v) = a.depth {
        settings.depth = v;
    }
    if let Some(v) = a.latent_dim {
        settings.latent_dim = v;
    }
    if let Some(v) = a.hidden_dim {
        settings.hidden_dim = v;
    }
    if let Some(v) = a.epochs {
        settings.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        settings.learning_rate = v;
    }
    if let Some(v) = a.noise {
        settings.noise = v;
    }
    settings.seed = a.seed.unwrap_or_else(env_seed);

    let mesh = load_mesh(&a.mesh)?;
    let graph = mesh_to_graph(&mesh)?;
    let trajectories = a
        .trajectory
        .iter()
        .map(|p| load_trajectory(p, mesh.n()))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = model_config_from(&settings, mesh.positions.cols);
    cfg.validate()?;
    let hier = build_hierarchy(
        &graph,
        &mesh.positions,
        None,
        settings.depth,
        Seeding::MinAve,
        Parity::Even,
    )?;
    let refs: Vec<&Trajectory> = trajectories.iter().collect();
    let norm = fit_normalizer(&refs, &cfg)?;
    let pairs = training_pairs(&refs, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut params = BsmsParams::init(&cfg, &mut rng)?;
    let mut opt = Adam::new(
        params.flatten().len(),
        settings.learning_rate,
        settings.epochs,
    );
    for epoch in 0..settings.epochs {
        let batch: Vec<TrainPair> = if settings.noise > 0.0 {
            pairs
                .iter()
                .map(|p| inject_noise(p, settings.noise, &mut rng))
                .collect()
        } else {
            pairs.clone()
        };
        let batch_refs: Vec<&TrainPair> = batch.iter().collect();
        let loss = train_step(
            &mut params,
            &mut opt,
            &hier,
            &mesh.node_type,
            &batch_refs,
            &cfg,
            &norm,
        )?;
        if epoch % 50 == 0 || epoch + 1 == settings.epochs {
            log("train", &format!("epoch={epoch} loss={loss:.6e}"));
        }
    }
    write_json(
        &a.out,
        &ModelFile {
            config: cfg,
            normalizer: norm,
            params,
        },
    )?;
    log("train", &format!("out={}", a.out.display()));
    Ok(())
}

fn cmd_rollout(a: RolloutArgs) -> Result<(), Error> {
    let model: ModelFile = read_config(&a.model)?;
    let mesh = load_mesh(&a.mesh)?;
    let graph = mesh_to_graph(&mesh)?;
    let truth = load_trajectory(&a.trajectory, mesh.n())?;
    let hier = build_hierarchy(
        &graph,
        &mesh.positions,
        None,
        model.config.depth,
        Seeding::MinAve,
        Parity::Even,
    )?;
    let predicted = rollout(
        &model.params,
        &hier,
        &mesh.node_type,
        &truth,
        &model.config,
        &model.normalizer,
    )?;
    let steps = predicted.values().next().map_or(0, |f| f.len());
    save_trajectory(
        &Trajectory {
            dt: truth.dt,
            fields: predicted,
        },
        &a.out,
    )?;
    log(
        "rollout",
        &format!("steps={steps} out={}", a.out.display()),
    );
    Ok(())
}

fn metrics_csv(metrics: &RolloutMetrics) -> String {
    let mut csv = String::from("step,rmse\n");
    for (i, r) in metrics.per_step_rmse.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, r));
    }
    csv
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let prediction_file = read_config::<serde_json::Value>(&a.prediction)?;
    let n = prediction_file
        .get("fields")
        .and_then(|f| f.as_object())
        .and_then(|f| f.values().next())
        .and_then(|frames| frames.get(0))
        .and_then(|m| m.as_array())
        .map(|rows| rows.len())
        .ok_or_else(|| Error::Parse {
            path: a.prediction.display().to_string(),
            message: "no fields with frames".into(),
        })?;
    let prediction = load_trajectory(&a.prediction, n)?;
    let truth = load_trajectory(&a.truth, n)?;
    let fields: Vec<String> = if a.fields.is_empty() {
        prediction.fields.keys().cloned().collect()
    } else {
        a.fields.clone()
    };
    let predicted: BTreeMap<String, Vec<Matrix>> = prediction.fields;
    let metrics = eval_metrics(&predicted, &truth, &fields)?;
    write_json(&a.out, &metrics)?;
    write_text(&a.out.with_extension("csv"), &metrics_csv(&metrics))?;
    log(
        "eval",
        &format!(
            "rmse_1={:.6e} rmse_all={:.6e} out={}",
            metrics.rmse_1,
            metrics.rmse_all,
            a.out.display()
        ),
    );
    Ok(())
}

fn demo_csv(report: &DemoReport) -> String {
    let mut csv =
        String::from("variant,pairing,symmetric,rmse_all_nodes,boundary_error,coarse_cross_edges\n");
    for (name, variant) in [("bistride", &report.bistride), ("proximity", &report.proximity)] {
        for (i, p) in variant.pairings.iter().enumerate() {
            let cross: usize = p.cross_cluster_edges_per_level.iter().skip(1).sum();
            csv.push_str(&format!(
                "{name},{i},{},{},{},{cross}\n",
                p.symmetric, p.rmse_all_nodes, p.boundary_error
            ));
        }
    }
    csv
}

/// Minimal standalone line plot: one polyline per series over node index.
fn profile_svg(series: &[(&str, &[f64])]) -> String {
    let w = 640.0;
    let h = 360.0;
    let pad = 40.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, ys) in series {
        for &y in *ys {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let n = series.iter().map(|(_, ys)| ys.len()).max().unwrap_or(2);
    let sx = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n - 1).max(1) as f64;
    let sy = |y: f64| h - pad - (h - 2.0 * pad) * (y - lo) / (hi - lo);
    let colors = ["#1f77b4", "#d62728", "#2ca02c"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| format!("{:.2},{:.2}", sx(i), sy(y)))
            .collect();
        let color = colors[k % colors.len()];
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"14\">{name}</text>\n",
            pts.join(" "),
            pad,
            20.0 + 16.0 * k as f64,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn cmd_demo(a: DemoArgs) -> Result<(), Error> {
    let mut demo: DemoConfig = match &a.config {
        Some(path) => read_config(path)?,
        None => DemoConfig::default(),
    };
    if let Some(v) = a.epochs {
        demo.epochs = v;
    }
    demo.seed = a.seed.unwrap_or_else(env_seed);
    log("demo-heat1d", &format!("epochs={} seed={}", demo.epochs, demo.seed));
    let report = run_demo(&demo)?;
    write_json(&a.out_dir.join("metrics.json"), &report)?;
    write_text(&a.out_dir.join("metrics.csv"), &demo_csv(&report))?;
    if a.svg {
        let test = gen_heat1d(Split::Test, &demo.stick)?;
        for (i, s) in test.iter().enumerate() {
            let truth: Vec<f64> = s.trajectory.fields["temp"].last().unwrap().data.clone();
            let svg = profile_svg(&[("steady truth", &truth)]);
            write_text(&a.out_dir.join(format!("pairing_{i}.svg")), &svg)?;
        }
    }
    println!("variant    train_rmse  pairing  symmetric  boundary_error  coarse_cross_edges");
    for (name, variant) in [("bistride", &report.bistride), ("proximity", &report.proximity)] {
        for (i, p) in variant.pairings.iter().enumerate() {
            let cross: usize = p.cross_cluster_edges_per_level.iter().skip(1).sum();
            println!(
                "{name:<10} {:<11.4e} {i:<8} {:<10} {:<15.4e} {cross}",
                variant.train_rmse, p.symmetric, p.boundary_error
            );
        }
    }
    log("demo-heat1d", &format!("out_dir={}", a.out_dir.display()));
    Ok(())
}
