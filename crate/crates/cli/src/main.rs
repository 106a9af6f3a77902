use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;

use loae::config::RunConfig;
use loae::data::{
    build_model, examples, load_checkpoint, load_clips, parse_manifest, run_schedule, save_checkpoint,
    synthesize_corpus, DataError, TrainingSchedule,
};
use loae::fluency::{correction_pipeline, CorrectionMode, CorrectorConfig, ExternalError, RuleDetector};
use loae::frontend::load_wav;
use loae::lora::{TrainMode, TrainStrategy};
use loae::metrics::{evaluate_corpus, join_items, parse_candidates, parse_references, parse_spice, EvalItem, MetricsError};
use loae::model::AacModel;
use loae::ModelError;

#[derive(Parser)]
#[command(name = "loae", version, about = "Audio captioning: synthesize, train, caption, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus of tone/chirp/noise clips and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on one or more manifests.
    Train(TrainArgs),
    /// Caption one WAV file.
    Caption {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        correct: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Caption every clip of a manifest and score against its captions.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        spice: Option<PathBuf>,
        #[arg(long)]
        correct: bool,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate captions against references.
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        spice: Option<PathBuf>,
        #[arg(long)]
        correct: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect and correct fluency errors in one caption.
    Correct {
        #[arg(long)]
        text: String,
        /// Chat-completions endpoint; without it the rule corrector is used.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in gradient and oracle checks.
    Selftest,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss curve path; defaults to `<out>.curve.json`.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, value_parser = ["frozen", "full", "lora"])]
    strategy: Option<String>,
    #[arg(long, value_parser = ["standard", "desk"])]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
    External(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Runtime(_) => 3,
            Self::External(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Runtime(m) | Self::External(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::NonFiniteLoss { .. } | DataError::InvalidSchedule(_) => Self::Runtime(e.to_string()),
            DataError::Model(m) => m.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Frontend(_) | ModelError::EmptyCorpus => Self::Data(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<ExternalError> for CliError {
    fn from(e: ExternalError) -> Self {
        Self::External(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::from_json(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

fn corrector(cfg: &RunConfig, endpoint: Option<String>) -> CorrectorConfig {
    let mut c = cfg.corrector.clone();
    if let Some(url) = endpoint {
        c.external.endpoint = Some(url);
        c.mode = CorrectionMode::External;
    }
    c
}

fn maybe_correct(text: String, enabled: bool, cfg: &CorrectorConfig, warnings: &mut Vec<String>) -> Result<String> {
    if !enabled {
        return Ok(text);
    }
    let out = correction_pipeline(&text, cfg, &RuleDetector::default())?;
    warnings.extend(out.warnings);
    Ok(out.text)
}

fn check_beam(beam: Option<usize>) -> Result<()> {
    if beam == Some(0) {
        return Err(CliError::Usage("--beam must be >= 1".into()));
    }
    Ok(())
}

fn decode(model: &AacModel<f32>, patches: &loae::frontend::PatchSequence, beam: Option<usize>) -> Result<String> {
    // A beam of 1 is greedy decoding.
    let beam = beam.filter(|&k| k > 1);
    Ok(model.caption(patches, beam)?)
}

fn cmd_synth(out: &Path, n: usize, seed: u64) -> Result<()> {
    if n == 0 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    let m = synthesize_corpus(n, seed, out)?;
    println!("wrote {} clips to {}", m.entries.len(), out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = &a.preset {
        cfg.train.schedule = TrainingSchedule::preset(p).expect("clap restricts presets");
    }
    if let Some(s) = &a.strategy {
        let mode: TrainMode = s.parse().map_err(|e: loae::lora::LoraError| CliError::Usage(e.to_string()))?;
        cfg.model.strategy = TrainStrategy::uniform(mode);
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if a.dump_config {
        print!("{}", cfg.to_json_pretty() + "\n");
        return Ok(());
    }
    if a.manifest.is_empty() {
        return Err(CliError::Usage("train needs at least one --manifest".into()));
    }
    let out = a.out.ok_or_else(|| CliError::Usage("train needs --out".into()))?;
    cfg.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.train.schedule.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let curve_path = a.curve.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".curve.json");
        PathBuf::from(s)
    });

    let mut per_manifest = Vec::new();
    for path in &a.manifest {
        let m = parse_manifest(path)?;
        let clips = load_clips(&m, &cfg.model)?;
        per_manifest.push((path.display().to_string(), clips));
    }
    let all: Vec<_> = per_manifest.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let mut model = build_model(cfg.model.clone(), &all)?;
    let mut corpora = IndexMap::new();
    for (name, clips) in &per_manifest {
        corpora.insert(name.clone(), examples(&model, clips));
    }
    log::info!("training on {} clips, {} parameters", all.len(), model.params.numel());
    let outcome = run_schedule(&mut model, &cfg.train, &corpora)?;
    save_checkpoint(&model, Some(&outcome.optimizer), &out)?;
    write_text(&curve_path, &to_json(&outcome.curve))?;
    if let Some(l) = outcome.curve.last_loss() {
        println!("final loss {l:.6}");
    }
    println!("checkpoint {}", out.display());
    Ok(())
}

fn cmd_caption(ckpt: &Path, wav: &Path, beam: Option<usize>, correct: bool, config: Option<&Path>) -> Result<()> {
    check_beam(beam)?;
    let cfg = load_config(config)?;
    let (model, _) = load_checkpoint(ckpt)?;
    let w = load_wav(wav).map_err(|e| CliError::Data(format!("{}: {e}", wav.display())))?;
    let patches = model.features(&w)?;
    let mut warnings = Vec::new();
    let text = maybe_correct(decode(&model, &patches, beam)?, correct, &corrector(&cfg, None), &mut warnings)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("{text}");
    Ok(())
}

fn score_items(
    items: Vec<EvalItem>,
    spice: Option<&Path>,
    correct: bool,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    let spice = spice.map(|p| read_text(p).and_then(|t| Ok(parse_spice(&t)?))).transpose()?;
    let corr = corrector(cfg, None);
    let mut warnings = Vec::new();
    let items = items
        .into_iter()
        .map(|mut it| {
            it.candidate = maybe_correct(std::mem::take(&mut it.candidate), correct, &corr, &mut warnings)?;
            Ok(it)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = evaluate_corpus(&items, &RuleDetector::default(), spice.as_ref(), &cfg.metrics)?;
    report.warnings.extend(warnings);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_text(out, &to_json(&report))?;
    for (k, v) in &report.corpus {
        match v.value() {
            Some(x) => println!("{k}: {x}"),
            None => println!("{k}: absent"),
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    ckpt: &Path,
    manifest: &Path,
    spice: Option<&Path>,
    correct: bool,
    beam: Option<usize>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    check_beam(beam)?;
    let cfg = load_config(config)?;
    let (model, _) = load_checkpoint(ckpt)?;
    let m = parse_manifest(manifest)?;
    let clips = load_clips(&m, &model.config)?;
    let items = clips
        .iter()
        .map(|c| {
            Ok(EvalItem {
                id: c.id.clone(),
                candidate: decode(&model, &c.patches, beam)?,
                references: c.captions.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    score_items(items, spice, correct, &cfg, out)
}

fn cmd_score(
    candidates: &Path,
    references: &Path,
    spice: Option<&Path>,
    correct: bool,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let cands = parse_candidates(&read_text(candidates)?)?;
    let refs = parse_references(&read_text(references)?)?;
    score_items(join_items(&cands, &refs)?, spice, correct, &cfg, out)
}

fn cmd_correct(text: &str, endpoint: Option<String>, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let out = correction_pipeline(text, &corrector(&cfg, endpoint), &RuleDetector::default())?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", out.text);
    println!(
        "{}",
        serde_json::json!({"pre": out.pre, "post": out.post, "corrected": out.corrected})
    );
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let results = loae::selftest::run_all();
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, n, seed } => cmd_synth(&out, n, seed),
        Command::Train(a) => cmd_train(a),
        Command::Caption {
            ckpt,
            wav,
            beam,
            correct,
            config,
        } => cmd_caption(&ckpt, &wav, beam, correct, config.as_deref()),
        Command::Evaluate {
            ckpt,
            manifest,
            spice,
            correct,
            beam,
            config,
            out,
        } => cmd_evaluate(&ckpt, &manifest, spice.as_deref(), correct, beam, config.as_deref(), &out),
        Command::Score {
            candidates,
            references,
            spice,
            correct,
            config,
            out,
        } => cmd_score(&candidates, &references, spice.as_deref(), correct, config.as_deref(), &out),
        Command::Correct { text, endpoint, config } => cmd_correct(&text, endpoint, config.as_deref()),
        Command::Selftest => cmd_selftest(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
