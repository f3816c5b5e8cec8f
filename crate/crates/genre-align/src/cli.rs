//! Command-line interface: `genre-align {gen-data|train|eval}`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use genre_align_core::eval::{
    eer_matrix_from_trials, matrix_trials, EerMatrix, Embedder, EmbeddingTable, RawVectors, TrialOptions,
};
use genre_align_core::losses::{DaConfig, DaMethod, Sigma};
use genre_align_core::sampler::{SamplerConfig, SamplerMode};
use genre_align_core::synth::{generate_dataset, SynthConfig};
use genre_align_core::trainer::{train, ClassLossKind, ClassLossParams, TrainConfig};
use genre_align_core::{Dataset, EmbeddingRecord};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::Settings;
use crate::error::{Error, Result};
use crate::io::{format_history, format_trials, load_dataset, save_dataset, write_text};
use crate::report::{format_csv, write_reports};

pub const LAMBDA_TABLE: &str = "\
Default lambda per --method (used when --lambda is not given):
  none     0
  coral    0.1
  mmd      0.8
  center   0.1
  wda      0.9
  bda      0.03
  wbda     0.9

Exit status: 0 ok, 1 file unreadable or malformed, 2 bad configuration, 3 training diverged.";

#[derive(Debug, Parser)]
#[command(name = "genre-align", version, about = "Multi-genre speaker embedding alignment toolkit", after_help = LAMBDA_TABLE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-genre embedding dataset.
    GenData(GenDataArgs),
    /// Train a projection model with an optional genre alignment loss.
    #[command(after_help = LAMBDA_TABLE)]
    Train(TrainArgs),
    /// Score cross-genre verification trials and write the EER matrix.
    Eval(EvalArgs),
}

/// Hidden layer width, or `none` for a single affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hidden(pub Option<usize>);

impl FromStr for Hidden {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" | "0" => Ok(Hidden(None)),
            _ => s
                .parse()
                .map(|h| Hidden(Some(h)))
                .map_err(|_| format!("expected a width or `none`, found `{s}`")),
        }
    }
}

impl fmt::Display for Hidden {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(h) => write!(f, "{h}"),
            None => f.write_str("none"),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// `key = value` file supplying any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of speakers [default: 50]
    #[arg(long)]
    pub speakers: Option<usize>,
    /// Comma-separated genre names [default: g1,g2,g3]
    #[arg(long)]
    pub genres: Option<String>,
    /// Embedding dimension [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Utterances per speaker per genre [default: 20]
    #[arg(long)]
    pub utts: Option<usize>,
    /// Std-dev of speaker centers [default: 1.0]
    #[arg(long)]
    pub speaker_spread: Option<f64>,
    /// Std-dev of utterances around their speaker center [default: 1.0]
    #[arg(long)]
    pub within_spread: Option<f64>,
    /// Magnitude of the per-genre affine distortion; 0 disables it [default: 1.0]
    #[arg(long)]
    pub genre_shift: Option<f64>,
    /// Generator seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file (required)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` file supplying any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset file (required)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output checkpoint file (required)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step loss history CSV [default: <out> with extension history.csv]
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Alignment loss: none, coral, mmd, center, wda, bda or wbda [default: none]
    #[arg(long)]
    pub method: Option<DaMethod>,
    /// Weight of the alignment loss [default: per method, see below]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Within-class weight for wbda [default: 0.5]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Between-class weight for wbda [default: 0.5]
    #[arg(long)]
    pub beta: Option<f64>,
    /// RBF width for mmd: a positive number or `median` [default: median]
    #[arg(long)]
    pub sigma: Option<Sigma>,
    /// Gradient steps [default: 2000]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate [default: 0.05]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Speakers per genre (per batch for speaker-only batches) [default: 8]
    #[arg(long)]
    pub speakers_per_genre: Option<usize>,
    /// Utterances per speaker [default: 4]
    #[arg(long)]
    pub utts_per_speaker: Option<usize>,
    /// Batch mode for --method none: genre_pair or speaker_only [default: genre_pair]
    #[arg(long)]
    pub batch_mode: Option<SamplerMode>,
    /// Classification loss: softmax_ce or aam_softmax [default: aam_softmax]
    #[arg(long)]
    pub loss_kind: Option<ClassLossKind>,
    /// Additive angular margin in radians [default: 0.2]
    #[arg(long)]
    pub margin: Option<f64>,
    /// AAM-softmax logit scale [default: 30]
    #[arg(long)]
    pub scale: Option<f64>,
    /// Hidden layer width, or `none` for a single affine layer [default: 64]
    #[arg(long)]
    pub hidden: Option<Hidden>,
    /// Embedding dimension [default: 16]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Seed for initialization and batch sampling [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave out the last K speakers (sorted by id) from training [default: 0]
    #[arg(long)]
    pub holdout_speakers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `key = value` file supplying any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to embed with; scores the raw vectors when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Evaluation dataset file (required)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated genres for the matrix [default: all genres in the data]
    #[arg(long)]
    pub genres: Option<String>,
    /// Utterances averaged into each enrollment [default: 3]
    #[arg(long)]
    pub enroll_k: Option<usize>,
    /// Non-target trials per enrolled speaker, at most [default: 50]
    #[arg(long)]
    pub max_nontargets: Option<usize>,
    /// Trial sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate only the last K speakers (sorted by id); 0 uses all [default: 0]
    #[arg(long)]
    pub holdout_speakers: Option<usize>,
    /// Report prefix; writes <out>.csv and <out>.json (required)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-cell trial lists, <enroll>__<test>.trials
    #[arg(long)]
    pub trials_dir: Option<PathBuf>,
    /// Write the embedded dataset (labeled vectors) to this file
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(format!("missing required --{flag}")))
}

fn genre_list(s: &str) -> Result<Vec<String>> {
    let genres: Vec<String> = s.split(',').map(|g| g.trim().to_string()).collect();
    if genres.iter().any(String::is_empty) {
        return Err(Error::config(format!("empty genre name in `{s}`")));
    }
    Ok(genres)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut s = Settings::new(a.config.as_deref())?;
    let d = SynthConfig::default();
    let genres = match s.get::<String>("genres", a.genres)? {
        Some(g) => genre_list(&g)?,
        None => d.genres.clone(),
    };
    let cfg = SynthConfig {
        num_speakers: s.get_or("speakers", a.speakers, d.num_speakers)?,
        genres,
        dim: s.get_or("dim", a.dim, d.dim)?,
        utts_per_speaker_per_genre: s.get_or("utts", a.utts, d.utts_per_speaker_per_genre)?,
        speaker_spread: s.get_or("speaker_spread", a.speaker_spread, d.speaker_spread)?,
        within_spread: s.get_or("within_spread", a.within_spread, d.within_spread)?,
        genre_shift: s.get_or("genre_shift", a.genre_shift, d.genre_shift)?,
        seed: s.get_or("seed", a.seed, d.seed)?,
    };
    let out: Option<PathBuf> = s.get("out", a.out)?;
    s.finish()?;
    let out = required(out, "out")?;
    cfg.validate()?;

    let ds = generate_dataset(&cfg)?;
    save_dataset(&ds, &out)?;
    println!(
        "genres={} speakers={} utterances={} dim={}",
        cfg.genres.join(","),
        ds.num_speakers(),
        ds.len(),
        ds.dim()
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut s = Settings::new(a.config.as_deref())?;
    let d = TrainConfig::default();
    let data: Option<PathBuf> = s.get("data", a.data)?;
    let out: Option<PathBuf> = s.get("out", a.out)?;
    let history: Option<PathBuf> = s.get("history", a.history)?;
    let method = s.get_or("method", a.method, DaMethod::None)?;
    let lambda: Option<f64> = s.get("lambda", a.lambda)?;
    let mut da = DaConfig::for_method(method);
    if let Some(l) = lambda {
        da.lambda = l;
    }
    da.alpha = s.get_or("alpha", a.alpha, da.alpha)?;
    da.beta = s.get_or("beta", a.beta, da.beta)?;
    da.sigma = s.get_or("sigma", a.sigma, da.sigma)?;
    let seed = s.get_or("seed", a.seed, d.seed)?;
    let cfg = TrainConfig {
        da,
        sampler: SamplerConfig {
            speakers: s.get_or("speakers_per_genre", a.speakers_per_genre, d.sampler.speakers)?,
            utts_per_speaker: s.get_or("utts_per_speaker", a.utts_per_speaker, d.sampler.utts_per_speaker)?,
            seed,
            mode: s.get_or("batch_mode", a.batch_mode, d.sampler.mode)?,
        },
        steps: s.get_or("steps", a.steps, d.steps)?,
        learning_rate: s.get_or("lr", a.lr, d.learning_rate)?,
        class_loss: ClassLossParams {
            kind: s.get_or("loss_kind", a.loss_kind, d.class_loss.kind)?,
            margin: s.get_or("margin", a.margin, d.class_loss.margin)?,
            scale: s.get_or("scale", a.scale, d.class_loss.scale)?,
        },
        embed_dim: s.get_or("embed_dim", a.embed_dim, d.embed_dim)?,
        hidden: s.get_or("hidden", a.hidden, Hidden(d.hidden))?.0,
        seed,
    };
    let holdout = s.get_or("holdout_speakers", a.holdout_speakers, 0usize)?;
    s.finish()?;
    let data = required(data, "data")?;
    let out = required(out, "out")?;
    let history = history.unwrap_or_else(|| out.with_extension("history.csv"));
    cfg.validate()?;

    let ds = load_dataset(&data)?;
    let ds = holdout_split(&ds, holdout)?.0;
    println!("method={method}");
    match lambda {
        Some(l) => println!("lambda={l}"),
        None if method != DaMethod::None => println!("lambda={} (default for {method})", method.default_lambda()),
        None => {}
    }
    let (model, hist) = train(&ds, &cfg)?;
    save_checkpoint(
        &Checkpoint {
            model,
            class_loss: cfg.class_loss,
        },
        &out,
    )?;
    write_text(&history, &format_history(&hist))?;
    if let Some(last) = hist.last() {
        println!(
            "steps={} final ce={:.4} da={:.4} total={:.4}",
            hist.len(),
            last.ce,
            last.da,
            last.total
        );
    }
    println!("wrote {} and {}", out.display(), history.display());
    Ok(())
}

/// `(training part, held-out part)`; with `holdout = 0` both are the full set.
fn holdout_split(ds: &Dataset, holdout: usize) -> Result<(Dataset, Dataset)> {
    if holdout == 0 {
        return Ok((ds.clone(), ds.clone()));
    }
    if holdout >= ds.num_speakers() {
        return Err(Error::config(format!(
            "--holdout-speakers {holdout} leaves no speakers (dataset has {})",
            ds.num_speakers()
        )));
    }
    Ok(ds.split_speakers(holdout))
}

pub fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut s = Settings::new(a.config.as_deref())?;
    let d = TrialOptions::default();
    let model: Option<PathBuf> = s.get("model", a.model)?;
    let data: Option<PathBuf> = s.get("data", a.data)?;
    let genres = s.get::<String>("genres", a.genres)?.map(|g| genre_list(&g)).transpose()?;
    let opts = TrialOptions {
        enroll_k: s.get_or("enroll_k", a.enroll_k, d.enroll_k)?,
        max_nontargets_per_test: s.get_or("max_nontargets", a.max_nontargets, d.max_nontargets_per_test)?,
        seed: s.get_or("seed", a.seed, d.seed)?,
    };
    let holdout = s.get_or("holdout_speakers", a.holdout_speakers, 0usize)?;
    let out: Option<PathBuf> = s.get("out", a.out)?;
    let trials_dir: Option<PathBuf> = s.get("trials_dir", a.trials_dir)?;
    let embeddings_out: Option<PathBuf> = s.get("embeddings_out", a.embeddings_out)?;
    s.finish()?;
    let data = required(data, "data")?;
    let out = required(out, "out")?;
    if opts.enroll_k == 0 {
        return Err(Error::config("--enroll-k must be positive"));
    }
    if opts.max_nontargets_per_test == 0 {
        return Err(Error::config("--max-nontargets must be positive"));
    }

    let ds = load_dataset(&data)?;
    let ds = holdout_split(&ds, holdout)?.1;
    let genres = genres.unwrap_or_else(|| ds.genres().map(String::from).collect());
    if let Some(g) = genres.iter().find(|g| !ds.has_genre(g)) {
        return Err(Error::config(format!("genre `{g}` is not in {}", data.display())));
    }
    let matrix = match model {
        Some(path) => {
            let ck = load_checkpoint(&path)?;
            if ck.model.input_dim() != ds.dim() {
                return Err(Error::config(format!(
                    "model input dimension {} does not match dataset dimension {}",
                    ck.model.input_dim(),
                    ds.dim()
                )));
            }
            evaluate(&ck.model, &ds, &genres, &opts, trials_dir.as_deref(), embeddings_out.as_deref())?
        }
        None => evaluate(&RawVectors, &ds, &genres, &opts, trials_dir.as_deref(), embeddings_out.as_deref())?,
    };
    write_reports(&matrix, &out)?;
    print!("{}", format_csv(&matrix));
    print!("mean same-genre EER {:.3}", matrix.mean_diagonal());
    if genres.len() > 1 {
        print!(", mean cross-genre EER {:.3}", matrix.mean_off_diagonal());
    }
    println!();
    Ok(())
}

fn evaluate(
    embedder: &impl Embedder,
    ds: &Dataset,
    genres: &[String],
    opts: &TrialOptions,
    trials_dir: Option<&Path>,
    embeddings_out: Option<&Path>,
) -> Result<EerMatrix> {
    let trials = matrix_trials(ds, genres, opts)?;
    if let Some(dir) = trials_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (r, row) in genres.iter().zip(&trials) {
            for (c, tl) in genres.iter().zip(row) {
                write_text(&dir.join(format!("{r}__{c}.trials")), &format_trials(tl))?;
            }
        }
    }
    let table = EmbeddingTable::new(ds, embedder);
    if let Some(path) = embeddings_out {
        let records: Vec<EmbeddingRecord> = ds
            .records()
            .iter()
            .map(|r| EmbeddingRecord::new(r.utt_id.clone(), r.speaker.clone(), r.genre.clone(), embedder.embed(&r.vector)))
            .collect();
        let dim = records.first().map_or(ds.dim(), |r| r.vector.len());
        save_dataset(&Dataset::new(dim, records), path)?;
    }
    Ok(eer_matrix_from_trials(&table, genres, &trials)?)
}
