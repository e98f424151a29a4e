//! The `sharc` command line: `synth`, `train`, `infer`, `eval` and
//! `gradcheck`, wired on top of the library.
//!
//! A TOML config file can carry `lr`, `epochs`, `batch_size`, `k`, `p_tau`,
//! `M`, `dims` and `seed`; explicit flags always win. Every subcommand is
//! deterministic given its seed, and `--threads` only changes how much work
//! runs in parallel, never the output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{sharc_infer, InferOptions};
use crate::data::{
    read_embeddings, read_rttm, records_from_labels, synth_generate, write_embeddings,
    write_rttm, RttmRecord, SynthConfig,
};
use crate::train::{build_training_hierarchy, grad_check, train, TrainConfig};
use crate::types::{EmbeddingSet, ScorerDims};
use crate::{eval, gnn};

#[derive(Parser)]
#[command(name = "sharc", version, about = "Supervised hierarchical graph clustering for speaker diarization")]
struct Cli {
    /// TOML config file (keys: lr, epochs, batch_size, k, p_tau, M, dims, seed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; defaults to all cores. Output is independent of it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled recordings (embeddings, segments, reference RTTM).
    Synth(SynthArgs),
    /// Train a scorer on labeled embedding files and write a checkpoint.
    Train(TrainArgs),
    /// Cluster embeddings with a trained checkpoint and write hypothesis RTTM.
    Infer(InferArgs),
    /// Score hypothesis RTTM against reference RTTM.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for .emb/.segs/.rttm files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_recordings: usize,
    #[arg(long, default_value_t = 2)]
    speakers_min: usize,
    #[arg(long, default_value_t = 5)]
    speakers_max: usize,
    /// Embedding dimension F.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Noise norm relative to the unit centroids.
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long, default_value_t = 2.0)]
    turn_min: f64,
    #[arg(long, default_value_t = 6.0)]
    turn_max: f64,
    #[arg(long, default_value_t = 60.0)]
    duration_min: f64,
    #[arg(long, default_value_t = 120.0)]
    duration_max: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of labeled .emb files (with .segs sidecars).
    #[arg(long)]
    data: PathBuf,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional loss log: one "epoch loss conn den" line per epoch.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Scorer dimensions as F',h1,h2.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<ScorerDims>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// One .emb file or a directory of them; segments sidecars required.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output RTTM file (single input) or directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p_tau: Option<f64>,
    /// Maximum number of merge rounds.
    #[arg(long)]
    max_levels: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference RTTM file or directory.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis RTTM file or directory.
    #[arg(long)]
    hyp: PathBuf,
    /// Collar in seconds excised around segment boundaries.
    #[arg(long)]
    collar: Option<f64>,
    /// Drop reference regions with two or more simultaneous speakers.
    #[arg(long)]
    ignore_overlap: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Total coordinates to sample across the random instances.
    #[arg(long, default_value_t = 1000)]
    coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Embedding dimension of the random instances.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, value_parser = parse_dims)]
    dims: Option<ScorerDims>,
    /// Maximum relative error accepted.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

fn parse_dims(s: &str) -> Result<ScorerDims, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated sizes, e.g. 64,32,32".into());
    }
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid size {p:?}"))
    };
    Ok(ScorerDims {
        latent: parse(parts[0])?,
        hidden1: parse(parts[1])?,
        hidden2: parse(parts[2])?,
    })
}

/// Config-file schema; every key optional, flags override.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    k: Option<usize>,
    p_tau: Option<f64>,
    #[serde(rename = "M")]
    max_levels: Option<usize>,
    dims: Option<[usize; 3]>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn dims(&self) -> Option<ScorerDims> {
        self.dims.map(|[latent, hidden1, hidden2]| ScorerDims {
            latent,
            hidden1,
            hidden2,
        })
    }
}

/// Parses argv and runs one subcommand.
pub fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => run_synth(args, &file),
        Command::Train(args) => run_train(args, &file),
        Command::Infer(args) => run_infer(args, &file),
        Command::Eval(args) => run_eval(args),
        Command::Gradcheck(args) => run_gradcheck(args, &file),
    }
}

fn run_synth(args: SynthArgs, file: &FileConfig) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        n_recordings: args.n_recordings,
        speakers: (args.speakers_min, args.speakers_max),
        dim: args.dim,
        spread: args.spread,
        turn_length: (args.turn_min, args.turn_max),
        duration: (args.duration_min, args.duration_max),
        seed: args.seed.or(file.seed).unwrap_or(7),
        ..SynthConfig::default()
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let sets = synth_generate(&cfg)?;
    for set in &sets {
        let emb = args.out.join(format!("{}.emb", set.recording_id));
        write_embeddings(set, &emb)?;
        let records = records_from_labels(
            set.labels.as_ref().expect("synthetic sets are labeled"),
            set.segments.as_ref().expect("synthetic sets carry segments"),
            &set.recording_id,
        );
        write_rttm(&records, &args.out.join(format!("{}.rttm", set.recording_id)))?;
        println!(
            "{}: {} segments, {} speakers",
            set.recording_id,
            set.len(),
            set.labels.as_ref().unwrap().iter().max().unwrap() + 1
        );
    }
    println!("wrote {} recordings to {}", sets.len(), args.out.display());
    Ok(())
}

fn embedding_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "emb"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .emb files under {}", path.display());
    }
    Ok(files)
}

fn run_train(args: TrainArgs, file: &FileConfig) -> anyhow::Result<()> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: args.lr.or(file.lr).unwrap_or(defaults.learning_rate),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        k: args.k.or(file.k).unwrap_or(defaults.k),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        dims: args.dims.or_else(|| file.dims()).unwrap_or(defaults.dims),
    };
    let sets: Vec<EmbeddingSet> = embedding_files(&args.data)?
        .iter()
        .map(|p| read_embeddings(p))
        .collect::<crate::Result<_>>()?;
    println!(
        "training on {} recordings (lr {}, {} epochs, batch {}, k {})",
        sets.len(),
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.k
    );
    let (params, history) = train(&sets, &cfg)?;
    gnn::save_checkpoint(&params, &args.checkpoint)?;
    if let Some(log) = &args.log {
        let mut w = fs::File::create(log)
            .with_context(|| format!("creating {}", log.display()))?;
        writeln!(w, "# epoch loss conn den")?;
        for s in &history {
            writeln!(w, "{} {} {} {}", s.epoch, s.loss, s.conn, s.den)?;
        }
    }
    let last = history.last().expect("at least one epoch");
    println!(
        "final loss {:.6} (conn {:.6}, den {:.6}); checkpoint -> {}",
        last.loss,
        last.conn,
        last.den,
        args.checkpoint.display()
    );
    Ok(())
}

fn run_infer(args: InferArgs, file: &FileConfig) -> anyhow::Result<()> {
    let opts = InferOptions {
        k: args.k.or(file.k).unwrap_or(60),
        p_tau: args.p_tau.or(file.p_tau).unwrap_or(0.0),
        max_levels: args.max_levels.or(file.max_levels).unwrap_or(15),
    };
    let params = gnn::load_checkpoint(&args.checkpoint)?;
    let inputs = embedding_files(&args.embeddings)?;
    let to_dir = inputs.len() > 1 || args.out.is_dir();
    if to_dir {
        fs::create_dir_all(&args.out)
            .with_context(|| format!("creating {}", args.out.display()))?;
    }
    for input in &inputs {
        let set = read_embeddings(input)?;
        if set.dim() != params.embedding_dim() {
            let dims = params.dims();
            return Err(crate::Error::IncompatibleCheckpoint {
                path: args.checkpoint.display().to_string(),
                f: params.embedding_dim(),
                latent: dims.latent,
                hidden1: dims.hidden1,
                hidden2: dims.hidden2,
                reason: format!("{} has F = {}", set.recording_id, set.dim()),
            }
            .into());
        }
        let Some(segments) = set.segments.clone() else {
            bail!(
                "{} has no .segs sidecar; segment times are required to write RTTM",
                input.display()
            );
        };
        let hierarchy = sharc_infer(&set, &params, opts)?;
        let records = records_from_labels(&hierarchy.final_labels, &segments, &set.recording_id);
        let out_path = if to_dir {
            args.out.join(format!("{}.rttm", set.recording_id))
        } else {
            args.out.clone()
        };
        write_rttm(&records, &out_path)?;
        println!(
            "{}: {} segments -> {} clusters in {} levels",
            set.recording_id,
            set.len(),
            hierarchy.num_clusters(),
            hierarchy.depth()
        );
    }
    Ok(())
}

fn rttm_inputs(path: &Path) -> anyhow::Result<Vec<RttmRecord>> {
    let files: Vec<PathBuf> = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "rttm"))
            .collect();
        files.sort();
        files
    };
    if files.is_empty() {
        bail!("no RTTM files under {}", path.display());
    }
    let mut records = Vec::new();
    for f in files {
        records.extend(read_rttm(&f)?);
    }
    Ok(records)
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let refs = rttm_inputs(&args.reference)?;
    let hyps = rttm_inputs(&args.hyp)?;
    if args.collar.is_none() && !args.ignore_overlap {
        // No condition requested: report both standard conditions.
        print!("{}", eval::der_report(&refs, &hyps)?);
        return Ok(());
    }
    let collar = args.collar.unwrap_or(0.0);
    let score_overlap = !args.ignore_overlap;
    let per = eval::per_recording_der(&refs, &hyps, collar, score_overlap)?;
    let mut total = eval::DerBreakdown::default();
    for (id, b) in &per {
        println!(
            "{id}: DER {:.2}% (miss {:.3}s, fa {:.3}s, conf {:.3}s / {:.3}s)",
            b.percent(),
            b.missed_ms as f64 / 1000.0,
            b.false_alarm_ms as f64 / 1000.0,
            b.confusion_ms as f64 / 1000.0,
            b.scored_ref_ms as f64 / 1000.0,
        );
        total = eval::DerBreakdown {
            missed_ms: total.missed_ms + b.missed_ms,
            false_alarm_ms: total.false_alarm_ms + b.false_alarm_ms,
            confusion_ms: total.confusion_ms + b.confusion_ms,
            scored_ref_ms: total.scored_ref_ms + b.scored_ref_ms,
        };
    }
    println!(
        "corpus: DER {:.2}% (collar {collar}s, overlap {})",
        total.percent(),
        if score_overlap { "scored" } else { "ignored" }
    );
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs, file: &FileConfig) -> anyhow::Result<()> {
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let dims = args.dims.or_else(|| file.dims()).unwrap_or(ScorerDims {
        latent: 16,
        hidden1: 8,
        hidden2: 8,
    });
    let sets = synth_generate(&SynthConfig {
        n_recordings: 4,
        speakers: (2, 4),
        dim: args.dim,
        spread: 0.25,
        duration: (15.0, 25.0),
        seed,
        ..SynthConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let params = crate::types::ScorerParams::init(args.dim, dims, &mut rng);
    let mut graphs = Vec::new();
    for set in &sets {
        graphs.extend(build_training_hierarchy(set, file.k.unwrap_or(8))?);
    }
    let per_graph = (args.coords / graphs.len()).max(1);
    let mut max_rel = 0.0f64;
    for tg in &graphs {
        let rel = grad_check(&params, tg, per_graph, args.step, &mut rng)?;
        max_rel = max_rel.max(rel);
    }
    println!(
        "max relative error {max_rel:.3e} over {} coordinates ({} graphs, step {:.0e})",
        per_graph * graphs.len(),
        graphs.len(),
        args.step
    );
    if max_rel >= args.tol {
        bail!("gradient check failed: {max_rel:.3e} >= tolerance {:.0e}", args.tol);
    }
    println!("gradient check passed (tolerance {:.0e})", args.tol);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parser_accepts_triples() {
        assert_eq!(
            parse_dims("64,32,16").unwrap(),
            ScorerDims { latent: 64, hidden1: 32, hidden2: 16 }
        );
        assert!(parse_dims("64,32").is_err());
        assert!(parse_dims("a,b,c").is_err());
    }

    #[test]
    fn config_file_parses_and_rejects_unknown_keys() {
        let cfg: FileConfig =
            toml::from_str("lr = 0.01\nepochs = 20\nM = 9\ndims = [32, 16, 16]\nseed = 3\n")
                .unwrap();
        assert_eq!(cfg.lr, Some(0.01));
        assert_eq!(cfg.max_levels, Some(9));
        assert_eq!(
            cfg.dims(),
            Some(ScorerDims { latent: 32, hidden1: 16, hidden2: 16 })
        );
        assert!(toml::from_str::<FileConfig>("banana = 1\n").is_err());
    }

    #[test]
    fn cli_structure_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
