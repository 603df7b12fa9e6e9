use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use screengraph::analysis::{analyze_characters, export_scatter, AnalysisError};
use screengraph::corpus::{build_examples, load_corpus, load_screenplay, CorpusError, ScriptFormat};
use screengraph::embed::{EmbedError, Embedder, EmbedderSpec, DEFAULT_DIM};
use screengraph::eval::{evaluate, ngram_novelty, reports_csv};
use screengraph::graph::{
    build_graph_with, export_graph, graph_stats, import_graph, strip_characters, ExportFormat, GraphError,
    GraphOptions,
};
use screengraph::lgat::{run_ablation, train, LgatConfig, LgatError, LgatModel, Profile, Variant};
use screengraph::summarize::{summarize_abstractive, summarize_extractive};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "screengraph", version, about = "Screenplay discourse graphs and graph-text summarization")]
struct Cli {
    /// Built-in hyperparameter defaults.
    #[arg(long, value_enum, global = true, default_value = "desk")]
    profile: ProfileArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Xml,
    Txt,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    Hash,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportArg {
    Json,
    Gexf,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    TextOnly,
    GraphOnly,
    FullWithoutCharacters,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::TextOnly => Variant::TextOnly,
            VariantArg::GraphOnly => Variant::GraphOnly,
            VariantArg::FullWithoutCharacters => Variant::FullWithoutCharacters,
        }
    }
}

#[derive(Args, Clone)]
struct EmbedderArgs {
    /// Embedder used for node and metric vectors.
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
    /// Hashing embedder dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Hashing embedder seed.
    #[arg(long = "embed-seed")]
    embed_seed: Option<u64>,
    /// JSONL file of precomputed vectors for the external embedder.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

impl EmbedderArgs {
    fn spec(&self, fallback: EmbedderSpec) -> Result<EmbedderSpec, CliError> {
        let hashing = || EmbedderSpec::Hashing { dim: self.dim.unwrap_or(DEFAULT_DIM), seed: self.embed_seed.unwrap_or(0) };
        Ok(match self.embedder {
            Some(EmbedderKind::Hash) => hashing(),
            Some(EmbedderKind::External) => EmbedderSpec::External {
                path: self.vectors.clone().ok_or_else(|| CliError::new("usage", "--embedder external needs --vectors"))?,
            },
            None if self.dim.is_some() || self.embed_seed.is_some() => hashing(),
            None => fallback,
        })
    }

    fn build(&self, fallback: EmbedderSpec) -> Result<Box<dyn Embedder>, CliError> {
        Ok(self.spec(fallback)?.build()?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of screenplays plus summaries.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Summary file, if not inside the corpus directory.
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// JSON object overriding profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "max-steps")]
    max_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a screenplay into JSON.
    Parse {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a discourse graph from a screenplay.
    BuildGraph {
        screenplay: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long = "no-characters")]
        no_characters: bool,
        #[arg(long = "include-mentions")]
        include_mentions: bool,
        #[arg(long = "include-heading")]
        include_heading: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node, edge, and character-degree counts of a graph.
    Stats { graph: PathBuf },
    /// Write a graph as JSON, GEXF, or DOT.
    Export {
        graph: PathBuf,
        #[arg(long, value_enum)]
        format: ExportArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model variant on a corpus.
    Train {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long, value_enum, default_value = "full")]
        variant: VariantArg,
    },
    /// Train and evaluate several variants on held-out pairs.
    Ablate {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long, value_enum, value_delimiter = ',')]
        variants: Vec<VariantArg>,
    },
    /// Summarize a screenplay with a checkpoint or extractively.
    Summarize {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        extractive: bool,
        /// Scene budget for extractive summaries.
        #[arg(short = 'k', default_value_t = 3)]
        k: usize,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PCA and K-Means over trained character embeddings.
    AnalyzeCharacters {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(short = 'K', default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// ROUGE and embedding scores of a candidate against a reference.
    Eval {
        #[arg(long)]
        cand: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Percentage of summary n-grams absent from the script.
    Novelty {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        script: PathBuf,
    },
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }
}

macro_rules! cli_error {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        })*
    };
}

cli_error! {
    std::io::Error => "io",
    serde_json::Error => "json",
    EmbedError => "embed",
    GraphError => "graph",
    LgatError => "model",
    AnalysisError => "analysis",
    CorpusError => "input",
}

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    inner: T,
}

fn versioned<T: Serialize>(inner: T) -> Versioned<T> {
    Versioned { schema_version: SCHEMA_VERSION, inner }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| CliError::new("io", format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            let written = stdout.write_all(bytes).and_then(|()| {
                if bytes.ends_with(b"\n") {
                    Ok(())
                } else {
                    stdout.write_all(b"\n")
                }
            });
            match written {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    emit(&serde_json::to_vec_pretty(value)?, out)
}

fn script_format(f: Option<FormatArg>) -> Option<ScriptFormat> {
    f.map(|f| match f {
        FormatArg::Xml => ScriptFormat::Xml,
        FormatArg::Txt => ScriptFormat::Text,
        FormatArg::Json => ScriptFormat::Json,
    })
}

fn load_config(profile: ProfileArg, args: &TrainArgs) -> Result<LgatConfig, CliError> {
    let base = LgatConfig::for_profile(match profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    let mut config = match &args.config {
        Some(path) => base.with_overrides(&serde_json::from_slice(&read(path)?)?)?,
        None => base,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if args.max_steps.is_some() {
        config.max_steps = args.max_steps;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    config.validate()?;
    Ok(config)
}

fn text_of_script(path: &Path) -> Result<String, CliError> {
    match ScriptFormat::from_path(path) {
        Some(ScriptFormat::Xml | ScriptFormat::Json) => Ok(load_screenplay(path, None)?.script_text()),
        _ => Ok(String::from_utf8_lossy(&read(path)?).into_owned()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Parse { file, format, out } => {
            let sp = load_screenplay(&file, script_format(format))?;
            emit_json(&versioned(&sp), out.as_deref())
        }
        Command::BuildGraph { screenplay, embedder, no_characters, include_mentions, include_heading, out } => {
            let sp = load_screenplay(&screenplay, None)?;
            let e = embedder.build(EmbedderSpec::default())?;
            let options = GraphOptions { include_mentions, include_heading };
            let mut graph = build_graph_with(&sp, e.as_ref(), options)?;
            if no_characters {
                graph = strip_characters(&graph);
            }
            graph.validate()?;
            emit(&export_graph(&graph, ExportFormat::Json), out.as_deref())
        }
        Command::Stats { graph } => {
            let g = import_graph(&read(&graph)?)?;
            emit_json(&graph_stats(&g), None)
        }
        Command::Export { graph, format, out } => {
            let g = import_graph(&read(&graph)?)?;
            let format = match format {
                ExportArg::Json => ExportFormat::Json,
                ExportArg::Gexf => ExportFormat::Gexf,
                ExportArg::Dot => ExportFormat::Dot,
            };
            emit(&export_graph(&g, format), out.as_deref())
        }
        Command::Train { args, variant } => {
            let config = load_config(cli.profile, &args)?;
            let pairs = load_corpus(&args.corpus, args.summaries.as_deref())?;
            let examples = build_examples(&pairs, &config)?;
            let variant = Variant::from(variant);
            let (_, report) = train(&examples, &config, variant, Some(&args.out))?;
            emit_json(
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "variant": variant,
                    "steps": report.steps,
                    "final_loss": report.final_loss(),
                    "epoch_means": report.epoch_means,
                    "checkpoint": args.out,
                }),
                None,
            )
        }
        Command::Ablate { args, variants } => {
            let config = load_config(cli.profile, &args)?;
            let pairs = load_corpus(&args.corpus, args.summaries.as_deref())?;
            let examples = build_examples(&pairs, &config)?;
            let variants: Vec<Variant> =
                if variants.is_empty() { Variant::ALL.to_vec() } else { variants.into_iter().map(Variant::from).collect() };
            let mut reports = Vec::with_capacity(variants.len());
            for v in variants {
                let dir = args.out.join(v.as_str());
                fs::create_dir_all(&dir)?;
                reports.push(run_ablation(&examples, v, &config, Some(&dir))?);
            }
            let rows: Vec<(String, &str, _)> = reports
                .iter()
                .flat_map(|r| r.per_example.iter().map(move |(id, e)| (id.clone(), r.variant.as_str(), e)))
                .collect();
            let csv = reports_csv(rows.iter().map(|(id, v, e)| (id.as_str(), *v, *e)));
            fs::write(args.out.join("ablation.csv"), csv)?;
            let summary: Vec<_> = reports.iter().map(|r| json!({"variant": r.variant, "eval": r.eval})).collect();
            emit_json(&json!({"schema_version": SCHEMA_VERSION, "variants": summary}), None)
        }
        Command::Summarize { ckpt, script, extractive, k, embedder, out } => {
            let sp = load_screenplay(&script, None)?;
            if extractive {
                let e = embedder.build(EmbedderSpec::default())?;
                let excerpts = summarize_extractive(&sp, e.as_ref(), k)?;
                return emit_json(&json!({"schema_version": SCHEMA_VERSION, "excerpts": excerpts}), out.as_deref());
            }
            let ckpt = ckpt.ok_or_else(|| CliError::new("usage", "abstractive summaries need --ckpt"))?;
            let model = LgatModel::load(&ckpt)?;
            let e = embedder.build(model.config.embedder.clone())?;
            let summary = summarize_abstractive(&model, &sp, e.as_ref())?;
            emit(summary.as_bytes(), out.as_deref())
        }
        Command::AnalyzeCharacters { ckpt, graph, clusters, seed, out, csv } => {
            let model = LgatModel::load(&ckpt)?;
            let g = import_graph(&read(&graph)?)?;
            let analysis = analyze_characters(&model, &g, clusters, seed)?;
            let scatter = export_scatter(&analysis, &out, csv.as_deref())?;
            emit_json(
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "characters": scatter.points.len(),
                    "k": clusters,
                    "inertia": analysis.clusters.inertia(),
                    "degenerate": analysis.pca.degenerate,
                    "out": out,
                }),
                None,
            )
        }
        Command::Eval { cand, reference, embedder } => {
            let e = embedder.build(EmbedderSpec::default())?;
            let c = String::from_utf8_lossy(&read(&cand)?).into_owned();
            let r = String::from_utf8_lossy(&read(&reference)?).into_owned();
            emit_json(&evaluate(&c, &r, e.as_ref())?, None)
        }
        Command::Novelty { summary, script } => {
            let s = String::from_utf8_lossy(&read(&summary)?).into_owned();
            emit_json(&ngram_novelty(&s, &text_of_script(&script)?), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind;
            let body = json!({"schema_version": SCHEMA_VERSION, "error": kind, "message": e.message});
            eprintln!("{body}");
            ExitCode::from(if kind == "usage" { 2 } else { 1 })
        }
    }
}
