//! Command-line interface for the feature quantization toolkit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use bwsq_core::checkpoint::Checkpoint;
use bwsq_core::deploy::{
    emit_encoder_source, export_table, footprint_report, pack, unpack, EncoderStyle, EncoderTable,
    PackedFrame,
};
use bwsq_core::harness::report::{curves_svg, emit_report, read_results_csv, results_markdown};
use bwsq_core::harness::{build_quant_layer, data, run_ablation, run_experiment, Method};
use bwsq_core::nn::{train, DenseNet, QuantLayer, TrainConfig};
use bwsq_core::quant::Code;
use bwsq_core::soft::TemperatureSchedule;
use bwsq_core::{ExperimentConfig, ResultTable};

#[derive(Parser)]
#[command(
    name = "bwsq",
    about = "Trainable feature quantization for split inference",
    version
)]
struct Cli {
    /// Number of worker threads for grid search and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-feature quantizer thresholds on a dataset and write them out.
    Fit(FitArgs),
    /// Train one model on the full dataset and write checkpoint.json.
    Train(TrainArgs),
    /// Full protocol: grid search + repeated splits, writes results files.
    Eval(EvalArgs),
    /// Ablation variants (SQ, Bw-MQ, Bw-QQ) against Bw-SQ at one bit width.
    Ablate(AblateArgs),
    /// Re-render results.md and curves.svg from an existing results.csv.
    Report(ReportArgs),
    /// Emit a portable C encoder from a checkpoint.
    #[command(name = "export-encoder")]
    ExportEncoder(ExportArgs),
    /// Encode one raw feature row into a packed frame.
    Pack(PackArgs),
    /// Decode a packed frame back into integer codes.
    Unpack(UnpackArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV path, or `fried[:n[:noise_std]]` for the synthetic benchmark.
    #[arg(long)]
    dataset: String,
    /// Target column name for CSV datasets.
    #[arg(long, default_value = "target")]
    target: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "Bw-QQ")]
    method: String,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "Bw-SQ")]
    method: String,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    /// JSON config file (see README for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated method list, e.g. `FP,Bw-SQ`.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated bit widths, e.g. `2,4,6`.
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing results.csv; markdown and SVG land beside it.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `if-chain` or `binary-search`.
    #[arg(long, default_value = "if-chain")]
    style: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PackArgs {
    /// Encoder table JSON produced by export-encoder.
    #[arg(long)]
    table: PathBuf,
    /// Comma-separated raw feature values in table order.
    #[arg(long)]
    row: String,
    /// Write the binary frame here; otherwise print hex to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UnpackArgs {
    /// Binary frame file.
    #[arg(long)]
    frame: PathBuf,
}

/// Optional JSON config file: every section may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    experiment: Option<ExperimentConfig>,
    #[serde(default)]
    train: Option<TrainSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSpec {
    dropout: f64,
    learning_rate: f64,
    hidden_layers: usize,
    hidden_neurons: usize,
    epochs: u32,
    decrease_factor: f64,
    batch_size: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            dropout: 0.0,
            learning_rate: 0.001,
            hidden_layers: 2,
            hidden_neurons: 64,
            epochs: 30,
            decrease_factor: 0.001,
            batch_size: 128,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Report(args) => cmd_report(args),
        Command::ExportEncoder(args) => cmd_export(args),
        Command::Pack(args) => cmd_pack(args),
        Command::Unpack(args) => cmd_unpack(args),
    }
}

fn load_dataset(args: &DataArgs, seed: u64) -> Result<data::Dataset> {
    if let Some(rest) = args.dataset.strip_prefix("fried") {
        let mut n = 8000usize;
        let mut noise = 1.0f64;
        let mut parts = rest.trim_start_matches(':').split(':').filter(|s| !s.is_empty());
        if let Some(p) = parts.next() {
            n = p.parse().context("fried row count")?;
        }
        if let Some(p) = parts.next() {
            noise = p.parse().context("fried noise std")?;
        }
        return Ok(data::generate_fried(n, noise, seed));
    }
    let (ds, dropped) = data::load_csv(Path::new(&args.dataset), &args.target)
        .with_context(|| format!("loading {}", args.dataset))?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} rows with missing values");
    }
    Ok(ds)
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn parse_method(s: &str) -> Result<Method> {
    s.parse::<Method>().map_err(|e| anyhow::anyhow!("{e}"))
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let method = parse_method(&args.method)?;
    if method == Method::Fp {
        bail!("full precision has no thresholds to fit");
    }
    let ds = load_dataset(&args.data, args.seed)?;
    let std = data::Standardizer::fit(&ds.x, &ds.y, &ds.feature_names)?;
    let xs = std.apply_features(&ds.x);
    let quant = build_quant_layer(method, args.bits, &xs)?.expect("non-FP method");
    let sets = match &quant {
        QuantLayer::Fixed { sets, .. } => sets.clone(),
        QuantLayer::Soft(layer) => layer.harden()?,
    };
    let std_thresholds: Vec<Vec<f64>> = sets.iter().map(|s| s.thresholds().to_vec()).collect();
    let raw_thresholds: Vec<Vec<f64>> = std_thresholds
        .iter()
        .enumerate()
        .map(|(k, t)| {
            t.iter()
                .map(|a| a * std.feature_std[k] + std.feature_mean[k])
                .collect()
        })
        .collect();
    std::fs::create_dir_all(&args.out)?;
    let out = args.out.join("thresholds.json");
    let doc = serde_json::json!({
        "method": method.label(),
        "bits": args.bits,
        "features": ds.feature_names,
        "standardized_thresholds": std_thresholds,
        "raw_thresholds": raw_thresholds,
    });
    std::fs::write(&out, serde_json::to_string_pretty(&doc)?)?;
    println!(
        "fitted {} thresholds for {} features -> {}",
        method,
        ds.feature_count(),
        out.display()
    );
    if method.is_soft() {
        println!("note: learned methods are initialized here; run `bwsq train` to optimize them");
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let method = parse_method(&args.method)?;
    let cfg = load_file_config(&args.config)?;
    let spec = cfg.train.unwrap_or_default();
    let ds = load_dataset(&args.data, args.seed)?;
    let std = data::Standardizer::fit(&ds.x, &ds.y, &ds.feature_names)?;
    let xs = std.apply_features(&ds.x);
    let ys = std.apply_labels(&ds.y);

    let quant = build_quant_layer(method, args.bits, &xs)?;
    let mut net = DenseNet::new(
        ds.feature_count(),
        quant,
        spec.hidden_layers,
        spec.hidden_neurons,
        spec.dropout,
        args.seed,
    )?;
    let train_cfg = TrainConfig {
        learning_rate: spec.learning_rate,
        epochs: spec.epochs,
        dropout_rate: spec.dropout,
        batch_size: spec.batch_size,
        seed: args.seed.wrapping_add(1),
        schedule: TemperatureSchedule::exponential(spec.decrease_factor, spec.epochs.max(1))?,
    };
    let report = train(&mut net, &xs, &ys, &train_cfg)?;
    let final_loss = report.epoch_losses.last().copied().unwrap_or(f64::NAN);

    let ckpt = Checkpoint::from_net(
        &ds.name,
        method.label(),
        &net,
        method.threshold_source(),
        &std,
        &ds.feature_names,
    )?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("checkpoint.json");
    ckpt.save(&path)?;
    println!(
        "trained {} ({} bits) for {} epochs, final train MSE {:.6} -> {}",
        method,
        if method.uses_bits() { args.bits.to_string() } else { "32".into() },
        spec.epochs,
        final_loss,
        path.display()
    );
    Ok(())
}

fn experiment_config(
    file: &FileConfig,
    method: &Option<String>,
    bits: &Option<String>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = file.experiment.clone().unwrap_or_default();
    if let Some(methods) = method {
        cfg.methods = methods
            .split(',')
            .map(|m| parse_method(m.trim()))
            .collect::<Result<_>>()?;
    }
    if let Some(bits) = bits {
        cfg.bit_widths = bits
            .split(',')
            .map(|b| b.trim().parse::<u8>().context("bit width"))
            .collect::<Result<_>>()?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_rows(table: &ResultTable) {
    for r in &table.rows {
        println!(
            "{:12} {:6} bits={:<2} mse={:.4} ci=[{:.4}, {:.4}]",
            r.dataset,
            r.method.label(),
            r.bits,
            r.mean_mse,
            r.ci_low,
            r.ci_high
        );
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let cfg = experiment_config(&file, &args.method, &args.bits, args.seed)?;
    let ds = load_dataset(&args.data, cfg.seed)?;
    let table = run_experiment(&ds, &cfg)?;
    let files = emit_report(&table, &args.out)?;
    print_rows(&table);
    println!(
        "wrote {}, {}, {}",
        files.csv.display(),
        files.markdown.display(),
        files.svg.display()
    );
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let mut cfg = experiment_config(&file, &None, &None, args.seed)?;
    cfg.bit_widths = vec![args.bits];
    let ds = load_dataset(&args.data, cfg.seed)?;
    let report = run_ablation(&ds, &cfg)?;
    let files = emit_report(&report.table, &args.out)?;
    print_rows(&report.table);

    let mut md =
        String::from("# Ablation vs Bw-SQ\n\n| method | mean MSE | vs Bw-SQ |\n|---|---|---|\n");
    for r in &report.ratios {
        md.push_str(&format!(
            "| {} | {:.4} | {:+.2}% |\n",
            r.method.label(),
            r.mean_mse,
            r.percent_vs_baseline
        ));
        println!(
            "{:6} mse={:.4} vs Bw-SQ {:+.2}%",
            r.method.label(),
            r.mean_mse,
            r.percent_vs_baseline
        );
    }
    let ablation_md = args.out.join("ablation.md");
    std::fs::write(&ablation_md, md)?;
    println!(
        "wrote {}, {}, {}, {}",
        files.csv.display(),
        files.markdown.display(),
        files.svg.display(),
        ablation_md.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let csv = args.out.join("results.csv");
    let table = read_results_csv(&csv).with_context(|| format!("reading {}", csv.display()))?;
    if table.rows.is_empty() {
        bail!("nothing to report");
    }
    std::fs::write(args.out.join("results.md"), results_markdown(&table.rows))?;
    std::fs::write(args.out.join("curves.svg"), curves_svg(&table.rows))?;
    print_rows(&table);
    println!("re-rendered results.md and curves.svg from {}", csv.display());
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let style: EncoderStyle = args.style.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let table = export_table(&ckpt)?;
    let source = emit_encoder_source(&table, style)?;
    let report = footprint_report(&table, style)?;
    std::fs::create_dir_all(&args.out)?;
    let c_path = args.out.join(format!("{}_encoder.c", ckpt.name));
    let t_path = args.out.join(format!("{}_table.json", ckpt.name));
    std::fs::write(&c_path, source)?;
    table.save(&t_path)?;
    println!("{report}");
    println!("wrote {} and {}", c_path.display(), t_path.display());
    Ok(())
}

fn cmd_pack(args: PackArgs) -> Result<()> {
    let table = EncoderTable::load(&args.table)
        .with_context(|| format!("loading {}", args.table.display()))?;
    let row: Vec<f64> = args
        .row
        .split(',')
        .map(|v| v.trim().parse::<f64>().context("row value"))
        .collect::<Result<_>>()?;
    if row.len() != table.k {
        bail!("row has {} values, table expects {}", row.len(), table.k);
    }
    let sets = table.threshold_sets()?;
    let codes: Vec<Code> = sets
        .iter()
        .zip(&row)
        .map(|(set, &x)| bwsq_core::quant::encode(x, set))
        .collect();
    let frame = pack(&codes, table.bits)?;
    let bytes = frame.to_bytes();
    println!(
        "codes: [{}]",
        codes.iter().map(|c| c.value().to_string()).collect::<Vec<_>>().join(", ")
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, &bytes)?;
            println!("wrote {} bytes to {}", bytes.len(), path.display());
        }
        None => {
            let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02x}")).collect();
            println!("frame: {}", hex.join(""));
        }
    }
    Ok(())
}

fn cmd_unpack(args: UnpackArgs) -> Result<()> {
    let bytes =
        std::fs::read(&args.frame).with_context(|| format!("reading {}", args.frame.display()))?;
    let frame = PackedFrame::from_bytes(&bytes)?;
    let codes = unpack(&frame)?;
    println!("features: {}, bits: {}", frame.feature_count, frame.bits);
    println!(
        "codes: [{}]",
        codes.iter().map(|c| c.value().to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}
