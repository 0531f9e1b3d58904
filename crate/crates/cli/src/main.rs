use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use triage_cli::config::{ServiceConfig, DEFAULT_LIBRARY_DIR, ENV_LIBRARY_DIR};
use triage_cli::stack::{build_engine, provider_from_env};
use triage_core::conversation::Engine;
use triage_core::demographics::{parse_age, Demographics, Sex};
use triage_core::eval::records::{read_opening_statements, read_patient_responses, write_jsonl};
use triage_core::eval::{
    emit_report, eval_navigation, eval_retrieval, generate_opening_statements, generate_responses, EvalReport, OpeningStyle, RetrievalModes,
};
use triage_core::flowchart::{enumerate_paths, load_library, FlowchartLibrary, LibraryError};
use triage_core::gateway::{HashEmbedder, HttpProvider, ProviderConfig, StubGenerator, TextGenerator};
use triage_core::retrieval::{build_index, select_flowchart, ApplicabilityFilter, Index, Query};

#[derive(Parser)]
#[command(name = "triage", version, about = "Flowchart-guided self-triage engine")]
struct Cli {
    /// Directory of flowchart documents [default: fixtures/flowcharts].
    #[arg(long, global = true, env = ENV_LIBRARY_DIR)]
    library: Option<PathBuf>,
    /// Provider settings file (JSON). The provider is also used when its env vars are set.
    #[arg(long, global = true)]
    provider: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

impl Cli {
    fn library_dir(&self) -> PathBuf {
        self.library.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_LIBRARY_DIR))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate every flowchart in a directory.
    Validate { dir: PathBuf },
    /// Print every decision path of one flowchart.
    Paths { chart_id: String },
    /// Build the retrieval index for a directory and write it to a file.
    Index { dir: PathBuf, out: PathBuf },
    /// Rank flowcharts for a concern and show the selection.
    Retrieve {
        #[arg(long)]
        sex: Sex,
        /// e.g. "35 years" or "8 months"; a bare number means years.
        #[arg(long)]
        age: String,
        #[arg(long)]
        text: String,
        /// Use a saved index instead of building one.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        no_filter: bool,
    },
    /// Talk to the engine on stdin/stdout.
    Chat {
        #[arg(long)]
        sex: Option<Sex>,
        #[arg(long)]
        age: Option<String>,
    },
    /// Generate synthetic opening statements and patient responses.
    EvalGenerate {
        #[arg(long)]
        out: PathBuf,
        /// Statements per chart and style.
        #[arg(long, default_value_t = 10)]
        per_chart: usize,
        /// Responses per question node, pattern and answer.
        #[arg(long, default_value_t = 5)]
        per_cell: usize,
        /// Restrict to these chart ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        charts: Vec<String>,
        /// Canned replies (JSON map of prompt hash to reply) instead of a provider.
        #[arg(long)]
        stub: Option<PathBuf>,
        #[arg(long)]
        skip_openings: bool,
        #[arg(long)]
        skip_responses: bool,
    },
    /// Evaluate datasets and write report.csv and report.json.
    EvalRun {
        #[arg(long)]
        openings: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip the selector-over-all-charts mode.
        #[arg(long)]
        no_llm_only: bool,
    },
    /// Run the HTTP service.
    Serve {
        /// Service settings file (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { dir } => validate(&dir),
        Command::Paths { ref chart_id } => paths(&cli.library_dir(), chart_id),
        Command::Index { ref dir, ref out } => index(dir, out, cli.provider.as_deref()),
        Command::Retrieve { sex, ref age, ref text, ref index, no_filter } => {
            retrieve(&cli, Demographics::new(sex, parse_age(age)?.0, parse_age(age)?.1)?, text, index.as_deref(), no_filter)
        }
        Command::Chat { sex, ref age } => chat(&cli, sex, age.as_deref()),
        Command::EvalGenerate { ref out, per_chart, per_cell, ref charts, ref stub, skip_openings, skip_responses } => {
            eval_generate(&cli, out, per_chart, per_cell, charts, stub.as_deref(), skip_openings, skip_responses)
        }
        Command::EvalRun { ref openings, ref responses, ref out, no_llm_only } => {
            eval_run(&cli, openings.as_deref(), responses.as_deref(), out, no_llm_only)
        }
        Command::Serve { ref config, ref listen } => serve(&cli, config.as_deref(), listen.clone()),
    }
}

fn load(dir: &Path) -> Result<FlowchartLibrary> {
    let (lib, report) = load_library(dir).with_context(|| format!("loading {}", dir.display()))?;
    for issue in &report.errors {
        log::warn!("excluded: {issue}");
    }
    Ok(lib)
}

fn engine(cli: &Cli) -> Result<Engine> {
    let lib = Arc::new(load(&cli.library_dir())?);
    let provider = provider_from_env(cli.provider.as_deref())?;
    Ok(build_engine(lib, Default::default(), provider.as_ref())?)
}

fn validate(dir: &Path) -> Result<ExitCode> {
    let (lib, report) = match load_library(dir) {
        Ok(r) => r,
        Err(LibraryError::EmptyLibrary { report }) => {
            for e in &report.errors {
                println!("error: {e}");
            }
            println!("0 flowchart(s) valid, {} error(s)", report.errors.len());
            return Ok(ExitCode::FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for e in &report.errors {
        println!("error: {e}");
    }
    println!("{} flowchart(s) valid, {} error(s), {} warning(s)", lib.len(), report.errors.len(), report.warnings.len());
    Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn paths(library: &Path, chart_id: &str) -> Result<ExitCode> {
    let lib = load(library)?;
    let chart = lib.find(chart_id).with_context(|| format!("no flowchart {chart_id:?}"))?;
    let paths = enumerate_paths(chart)?;
    for p in &paths {
        println!("{p}");
    }
    eprintln!("{} path(s)", paths.len());
    Ok(ExitCode::SUCCESS)
}

fn index(dir: &Path, out: &Path, provider_file: Option<&Path>) -> Result<ExitCode> {
    let lib = load(dir)?;
    let provider = provider_from_env(provider_file)?;
    let idx = match provider.as_ref().filter(|p| p.embed_model.is_some()) {
        Some(p) => build_index(&lib, &triage_core::gateway::HttpEmbedder::new(p.clone())?)?,
        None => build_index(&lib, &HashEmbedder)?,
    };
    idx.save(out)?;
    println!("indexed {} flowchart(s) with {} into {}", idx.entries().len(), idx.embedder_id(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn retrieve(cli: &Cli, demographics: Demographics, text: &str, index: Option<&Path>, no_filter: bool) -> Result<ExitCode> {
    let mut engine = engine(cli)?;
    if let Some(path) = index {
        engine.retriever.index = Index::load(path, engine.retriever.embedder.id())?;
    }
    let r = &engine.retriever;
    let filter = if no_filter { ApplicabilityFilter::Off } else { ApplicabilityFilter::On };
    let query = Query::new(demographics, text)?;
    let ranked = r.index.search(r.embedder.as_ref(), &query, r.config.top_n, filter)?;
    let selection = select_flowchart(&r.index, &ranked, &query, r.selector.as_ref())?;
    match selection.outcome.flowchart_id() {
        Some(id) => println!("selected: {id}"),
        None => println!("selected: no flowchart available"),
    }
    println!("rank\tscore\tflowchart");
    for (i, c) in ranked.iter().enumerate() {
        println!("{}\t{:.6}\t{}", i + 1, c.score, c.flowchart_id);
    }
    Ok(ExitCode::SUCCESS)
}

fn chat(cli: &Cli, sex: Option<Sex>, age: Option<&str>) -> Result<ExitCode> {
    let engine = engine(cli)?;
    let age = age.map(parse_age).transpose()?;
    let mut session = engine.start_session_from(sex, age)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "agent> {}", session.transcript.last().map(|m| m.text.as_str()).unwrap_or_default())?;
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        match engine.submit_message(&mut session, &line) {
            Ok(reply) => writeln!(out, "agent> {reply}")?,
            Err(e) => writeln!(out, "[error] {e}")?,
        }
        if session.phase.is_closed() {
            writeln!(out, "[session {}]", session.phase.name())?;
            break;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn eval_generate(
    cli: &Cli,
    out: &Path,
    per_chart: usize,
    per_cell: usize,
    charts: &[String],
    stub: Option<&Path>,
    skip_openings: bool,
    skip_responses: bool,
) -> Result<ExitCode> {
    let full = load(&cli.library_dir())?;
    let lib = if charts.is_empty() {
        full
    } else {
        let picked = charts
            .iter()
            .map(|id| full.get(id).cloned().with_context(|| format!("no flowchart {id:?}")))
            .collect::<Result<Vec<_>>>()?;
        FlowchartLibrary::from_charts(picked).0
    };
    let generator: Box<dyn TextGenerator> = match stub {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Box::new(StubGenerator::from_json("stub", &text)?)
        }
        None => {
            let Some(cfg) = provider_from_env(cli.provider.as_deref())? else {
                bail!("eval-generate needs a provider (set TRIAGE_PROVIDER_BASE_URL / TRIAGE_PROVIDER_KEY) or --stub");
            };
            Box::new(HttpProvider::new(ProviderConfig { ..cfg })?)
        }
    };
    std::fs::create_dir_all(out)?;
    if !skip_openings {
        let mut records = Vec::new();
        for style in OpeningStyle::ALL {
            records.extend(generate_opening_statements(&lib, generator.as_ref(), per_chart, style)?);
        }
        let path = out.join("openings.jsonl");
        write_jsonl(&path, &records)?;
        println!("{} opening statement(s) -> {}", records.len(), path.display());
    }
    if !skip_responses {
        let records = generate_responses(&lib, generator.as_ref(), per_cell)?;
        let path = out.join("responses.jsonl");
        write_jsonl(&path, &records)?;
        println!("{} patient response(s) -> {}", records.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_run(cli: &Cli, openings: Option<&Path>, responses: Option<&Path>, out: &Path, no_llm_only: bool) -> Result<ExitCode> {
    if openings.is_none() && responses.is_none() {
        bail!("give --openings and/or --responses");
    }
    let engine = engine(cli)?;
    let r = &engine.retriever;
    let retrieval = openings
        .map(|p| -> Result<_> {
            let records = read_opening_statements(p)?;
            let modes = RetrievalModes { llm_only: !no_llm_only, top_n: r.config.top_n, filter: r.config.filter, ..RetrievalModes::default() };
            Ok(eval_retrieval(&records, &engine.library, &r.index, r.embedder.as_ref(), r.selector.as_ref(), &modes)?)
        })
        .transpose()?;
    let navigation = responses.map(|p| -> Result<_> { Ok(eval_navigation(&read_patient_responses(p)?, engine.classifier.as_ref())) }).transpose()?;
    let report = EvalReport { retrieval, navigation };
    let (csv, json) = emit_report(&report, out)?;
    if let Some(m) = &report.retrieval {
        let a = m.pooled.accuracy;
        println!(
            "retrieval (n={}): llm_only={:?} top1={:?} top3={:?} top5={:?} agent={:?}",
            m.pooled.n, a.llm_only_acc, a.sim_top1_acc, a.sim_top3_acc, a.sim_top5_acc, a.agent_acc
        );
    }
    if let Some(n) = &report.navigation {
        println!("navigation (n={}, excluded={}): acceptable={:?}", n.pooled.n, n.pooled.excluded, n.pooled.acceptable);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(cli: &Cli, config: Option<&Path>, listen: Option<String>) -> Result<ExitCode> {
    let mut cfg = ServiceConfig::load(config)?;
    if let Some(dir) = &cli.library {
        cfg.library_dir = dir.clone();
    }
    if cli.provider.is_some() {
        cfg.provider_file = cli.provider.clone();
    }
    if let Some(addr) = listen {
        cfg.listen_addr = addr;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(triage_cli::service::serve(cfg))?;
    Ok(ExitCode::SUCCESS)
}
