//! The `airscript` command line.
//!
//! ```text
//! airscript synth   --participants N --per-digit M --seed S --out FILE [--noise PROFILE]
//! airscript viz     --in FILE --index I --out OUT.svg|OUT.png [--sensitivity K ...]
//! airscript train   --model gru1|gru2|cnn --data FILE --seed S --out CKPT [--epochs E --lr L --batch B]
//! airscript eval    --mode dependent|independent --data FILE --seed S --report OUT.json [--models ...]
//! airscript predict --ckpt A [--ckpt B ...] --in FILE --index I
//! ```
//!
//! Errors are reported on standard error as `error[CODE]: message`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datastore::{self, Dataset, Recording};
use crate::difviz::{self, DifVizConfig, RoundingMode};
use crate::error::{Error, Result};
use crate::evalharness::{self, Classifier, EvalOptions, NeuralClassifier, Protocol, DEFAULT_EVAL_EPOCHS};
use crate::fusion::borda_fuse;
use crate::neuralnet::{self, Checkpoint, ModelKind, TrainConfig};
use crate::synthgen::{self, NoiseProfile};

#[derive(Debug, Parser)]
#[command(name = "airscript", version, about = "Air-written digit reconstruction and recognition")]
pub struct Cli {
    /// Worker threads for evaluation; results do not depend on it.
    #[arg(long, global = true, env = "AIRSCRIPT_THREADS")]
    pub threads: Option<usize>,

    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Render one recording's trajectory as SVG or PNG.
    Viz(VizArgs),
    /// Train one classifier and write a checkpoint.
    Train(TrainArgs),
    /// Run an evaluation protocol and write a JSON report.
    Eval(EvalArgs),
    /// Rank the digit classes for one recording.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub participants: usize,
    #[arg(long)]
    pub per_digit: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// clean, default or hard.
    #[arg(long, default_value = "default")]
    pub noise: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rounding {
    PerStep,
    RemainderCarry,
}

impl From<Rounding> for RoundingMode {
    fn from(r: Rounding) -> Self {
        match r {
            Rounding::PerStep => RoundingMode::PerStep,
            Rounding::RemainderCarry => RoundingMode::RemainderCarry,
        }
    }
}

#[derive(Debug, Args)]
pub struct DifVizArgs {
    /// JSON file with a full reconstruction config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pixels per unit of angular rate and second.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    #[arg(long)]
    pub pixel_density: Option<f64>,
    /// Seconds per sample.
    #[arg(long)]
    pub frame_duration: Option<f64>,
    #[arg(long, value_enum)]
    pub rounding: Option<Rounding>,
}

impl DifVizArgs {
    fn resolve(&self) -> Result<DifVizConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)?
            }
            None => DifVizConfig::default(),
        };
        if let Some(v) = self.sensitivity {
            cfg.sensitivity = v;
        }
        if let Some(v) = self.pixel_density {
            cfg.pixel_density = v;
        }
        if let Some(v) = self.frame_duration {
            cfg.frame_duration = v;
        }
        if let Some(r) = self.rounding {
            cfg.rounding = r.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub index: usize,
    /// Output path; the extension selects SVG or PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Edge length of PNG output in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[command(flatten)]
    pub difviz: DifVizArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to 150.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 0.001 for the GRU models and 0.0001 for the CNN.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size, default 16.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_parser = parse_protocol)]
    pub mode: Protocol,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
    /// Comma-separated subset of gru1, gru2, cnn, fusion.
    #[arg(long, default_value = "gru1,gru2,cnn,fusion")]
    pub models: String,
    /// Training epochs per fold or round.
    #[arg(long, default_value_t = DEFAULT_EVAL_EPOCHS)]
    pub epochs: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint file; repeat to fuse several models.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub index: usize,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn pick(dataset: &Dataset, index: usize) -> Result<&Recording> {
    dataset.recordings.get(index).ok_or_else(|| {
        Error::domain(format!(
            "index {index} out of range for a dataset of {} recordings",
            dataset.len()
        ))
    })
}

/// Parses `args` (including the program name) and runs the command, writing
/// normal output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    execute(cli, out)
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    match cli.command {
        Command::Synth(a) => {
            let profile = NoiseProfile::by_name(&a.noise)?;
            let ds = synthgen::generate_dataset(a.participants, a.per_digit, &profile, a.seed)?;
            datastore::save_jsonl(&ds, &a.out)?;
            writeln!(
                out,
                "wrote {} recordings ({} participants x {} digits x {}) to {}",
                ds.len(),
                a.participants,
                crate::NUM_CLASSES,
                a.per_digit,
                a.out.display()
            )
            .map_err(io)?;
        }
        Command::Viz(a) => {
            let cfg = a.difviz.resolve()?;
            let ds = datastore::load_jsonl(&a.input)?;
            let rec = pick(&ds, a.index)?;
            let coords = difviz::reconstruct(rec, &cfg)?;
            difviz::render_to_file(&coords, &a.out, a.size)?;
            writeln!(
                out,
                "rendered recording {} (digit {}, {} points) to {}",
                a.index,
                rec.label,
                coords.len(),
                a.out.display()
            )
            .map_err(io)?;
        }
        Command::Train(a) => {
            let mut cfg = TrainConfig::for_kind(a.model);
            if let Some(e) = a.epochs {
                cfg.adam.epochs = e;
            }
            if let Some(lr) = a.lr {
                cfg.adam.learning_rate = lr;
            }
            if let Some(b) = a.batch {
                cfg.adam.batch_size = b;
            }
            cfg.adam.validate()?;
            let ds = datastore::load_jsonl(&a.data)?;
            if ds.is_empty() {
                return Err(Error::domain("dataset too small: no recordings"));
            }
            let ckpt = neuralnet::train(a.model, &ds, &cfg, a.seed)?;
            ckpt.save(&a.out)?;
            let last = ckpt
                .loss_history
                .last()
                .map_or("n/a".to_string(), |l| format!("{l:.4}"));
            writeln!(
                out,
                "trained {} on {} recordings for {} epochs, final loss {last}; wrote {}",
                a.model,
                ckpt.train_size,
                ckpt.loss_history.len(),
                a.out.display()
            )
            .map_err(io)?;
        }
        Command::Eval(a) => {
            let mut kinds = Vec::new();
            let mut fusion = false;
            for name in a.models.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                if name == evalharness::FUSION_NAME {
                    fusion = true;
                } else {
                    let k: ModelKind = name.parse()?;
                    if kinds.contains(&k) {
                        return Err(Error::domain(format!("model `{k}` listed twice")));
                    }
                    kinds.push(k);
                }
            }
            if kinds.is_empty() {
                return Err(Error::domain("eval needs at least one of gru1, gru2, cnn"));
            }
            let ds = datastore::load_jsonl(&a.data)?;
            let models: Vec<NeuralClassifier> =
                kinds.iter().map(|&k| NeuralClassifier::new(k, a.epochs)).collect();
            let refs: Vec<&dyn Classifier> = models.iter().map(|m| m as &dyn Classifier).collect();
            let options = EvalOptions {
                seed: a.seed,
                fusion,
                threads: cli.threads,
            };
            let report = evalharness::run_protocol(a.mode, &ds, &refs, &options)?;
            fs::write(&a.report, report.to_json()?).map_err(|e| Error::io(&a.report, e))?;
            write!(out, "{}", evalharness::summarize(&report)).map_err(io)?;
        }
        Command::Predict(a) => {
            let ckpts = a
                .ckpt
                .iter()
                .map(Checkpoint::load)
                .collect::<Result<Vec<_>>>()?;
            for (i, c) in ckpts.iter().enumerate() {
                if ckpts[..i].iter().any(|o| o.kind == c.kind) {
                    return Err(Error::domain(format!(
                        "two checkpoints of kind {}; give each model kind once",
                        c.kind
                    )));
                }
            }
            let ds = datastore::load_jsonl(&a.input)?;
            let rec = pick(&ds, a.index)?;
            let preds = ckpts
                .iter()
                .map(|c| c.predict_ranked(rec))
                .collect::<Result<Vec<_>>>()?;
            let ranking = if preds.len() == 1 {
                preds.into_iter().next().expect("one prediction")
            } else {
                borda_fuse(&preds)?
            };
            let kinds: Vec<String> = ckpts.iter().map(|c| c.kind.to_string()).collect();
            writeln!(out, "# models: {}", kinds.join(",")).map_err(io)?;
            writeln!(out, "rank label score").map_err(io)?;
            for (r, &l) in ranking.labels.iter().enumerate() {
                writeln!(out, "{} {} {:.6}", r + 1, l, ranking.scores[l]).map_err(io)?;
            }
        }
    }
    Ok(())
}
