use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rightsalloc::allocate::{Algorithm, AllocOptions, Candidate, DateTimeTiebreak};
use rightsalloc::cases::{run_cases, CasesReport};
use rightsalloc::constraint::AgentState;
use rightsalloc::corpus::{
    corpus_from_value, parse_corpus, parse_timestamp, serialize_corpus, CorpusDocument,
    CorpusError, ParseOptions,
};
use rightsalloc::error::EngineError;
use rightsalloc::harness::{
    fuzz_campaign, CampaignConfig, CampaignReport, Check, GeneratorCaps, GeneratorMode,
};
use rightsalloc::model::{Action, Content, Request};
use rightsalloc::session::{run_request, simulate, AllocationReport, Outcome, SimulationReport};

const EXIT_PARSE: u8 = 1;
const EXIT_LABELS: u8 = 2;
const EXIT_PROMPT: u8 = 3;
const EXIT_NO_MATCH: u8 = 4;
const EXIT_PROPERTY: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "rightsalloc",
    version,
    about = "Evaluate and allocate DRM licenses"
)]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = AlgorithmArg::Proposed)]
    algorithm: AlgorithmArg,
    #[arg(long, global = true, value_enum, default_value_t = TiebreakArg::Earliest)]
    datetime_tiebreak: TiebreakArg,
    /// Reject files whose stored labels differ from the computed ones.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    strict_labels: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Ask on the terminal when the allocator needs a decision.
    #[arg(long, global = true, overrides_with = "no_interactive")]
    interactive: bool,
    #[arg(long, global = true, overrides_with = "interactive")]
    no_interactive: bool,
    /// Overrides request timestamps (integer seconds or ISO-8601).
    #[arg(long, global = true)]
    time: Option<String>,
    /// Prefer licenses whose use depletes nothing in the final step.
    #[arg(long, global = true)]
    prefer_undepleted: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the corpus in canonical form with computed labels.
    Label { corpus: PathBuf },
    /// Allocate a single request.
    Allocate {
        corpus: PathBuf,
        action: String,
        content: String,
        /// Request time (integer seconds or ISO-8601); defaults to now.
        #[arg(long)]
        at: Option<String>,
        /// Usage duration in seconds.
        #[arg(long, default_value_t = 0)]
        usage: u64,
    },
    /// Replay the corpus's request script.
    Simulate { corpus: PathBuf },
    /// Run a seeded verification campaign.
    Verify {
        #[arg(short, long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 4)]
        licenses: usize,
        #[arg(long, default_value_t = 3)]
        sublicenses: usize,
        #[arg(long, default_value_t = 3)]
        cps: usize,
        #[arg(long, default_value_t = 4)]
        permissions: usize,
        #[arg(long, default_value_t = 3)]
        count: u32,
        #[arg(long, default_value_t = 5)]
        requests: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Standard)]
        mode: ModeArg,
        /// Comma separated: property3, weak_minimal_loss, filter_neutrality, liveness.
        #[arg(long, value_delimiter = ',', default_value = "property3")]
        checks: Vec<Check>,
        /// Write each counterexample as a corpus file here.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        #[arg(long)]
        no_shrink: bool,
    },
    /// Run the bundled case studies under both allocators.
    Cases {
        /// Read fixtures from this directory instead.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgorithmArg {
    Oma,
    Proposed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TiebreakArg {
    Earliest,
    Furthest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Standard,
    NoOnceComplex,
    Depleting,
}

struct Config {
    algorithm: Algorithm,
    opts: AllocOptions,
    parse: ParseOptions,
    seed: u64,
    format: Format,
    interactive: bool,
    time: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::LabelMismatch { .. } => EXIT_LABELS,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::ChooserContract(_) => EXIT_PROMPT,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let time = match cli.time.as_deref().map(parse_timestamp).transpose() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: --time: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let cfg = Config {
        algorithm: match cli.algorithm {
            AlgorithmArg::Oma => Algorithm::Oma,
            AlgorithmArg::Proposed => Algorithm::Proposed,
        },
        opts: AllocOptions {
            datetime_tiebreak: match cli.datetime_tiebreak {
                TiebreakArg::Earliest => DateTimeTiebreak::Earliest,
                TiebreakArg::Furthest => DateTimeTiebreak::Furthest,
            },
            prefer_undepleted: cli.prefer_undepleted,
        },
        parse: ParseOptions {
            strict_labels: cli.strict_labels,
        },
        seed: cli.seed,
        format: cli.format,
        interactive: cli.interactive && !cli.no_interactive,
        time,
    };
    let result = match cli.command {
        Command::Label { corpus } => cmd_label(&cfg, &corpus),
        Command::Allocate {
            corpus,
            action,
            content,
            at,
            usage,
        } => cmd_allocate(&cfg, &corpus, &action, &content, at.as_deref(), usage),
        Command::Simulate { corpus } => cmd_simulate(&cfg, &corpus),
        Command::Verify {
            n,
            licenses,
            sublicenses,
            cps,
            permissions,
            count,
            requests,
            mode,
            checks,
            dump_dir,
            no_shrink,
        } => {
            let caps = GeneratorCaps {
                licenses,
                sublicenses,
                cps,
                permissions,
                count,
                requests,
            };
            let mode = match mode {
                ModeArg::Standard => GeneratorMode::Standard,
                ModeArg::NoOnceComplex => GeneratorMode::NoOnceComplex,
                ModeArg::Depleting => GeneratorMode::Depleting,
            };
            cmd_verify(&cfg, caps, mode, n, checks, dump_dir.as_deref(), !no_shrink)
        }
        Command::Cases { fixtures } => cmd_cases(&cfg, fixtures.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(cfg: &Config, path: &Path) -> Result<CorpusDocument, Failure> {
    let bytes =
        fs::read(path).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse_corpus(&bytes, cfg.parse).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.code, format!("{}: {}", path.display(), f.message))
    })
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    println!("{text}");
}

fn cmd_label(cfg: &Config, path: &Path) -> CmdResult {
    let doc = load(cfg, path)?;
    print!("{}", serialize_corpus(&doc));
    Ok(0)
}

/// Reads a license choice from the terminal; an empty answer at end of
/// input leaves the prompt unresolved.
fn terminal_choice(r: &Request, candidates: &[Candidate]) -> String {
    let mut err = io::stderr();
    let _ = writeln!(
        err,
        "No license can serve {r} without losing rights. Choose one:"
    );
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(err, "  [{}] {}  loses {}", i + 1, c.id, c.loss);
    }
    let stdin = io::stdin();
    let mut line = String::new();
    loop {
        let _ = write!(err, "license (number or id): ");
        let _ = err.flush();
        line.clear();
        match stdin.lock().read_line(&mut line) {
            Ok(0) | Err(_) => return String::new(),
            Ok(_) => {}
        }
        let answer = line.trim();
        if let Ok(k) = answer.parse::<usize>() {
            if (1..=candidates.len()).contains(&k) {
                return candidates[k - 1].id.clone();
            }
        }
        if let Some(c) = candidates.iter().find(|c| c.id == answer) {
            return c.id.clone();
        }
        let _ = writeln!(err, "not a candidate: {answer}");
    }
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn render_allocation(a: &AllocationReport, out: &mut String) {
    use std::fmt::Write as _;
    let _ = writeln!(out, "request: {}", a.request);
    for c in &a.candidates {
        let _ = writeln!(
            out,
            "  candidate {}: loss {}{}",
            c.license,
            c.loss,
            if c.lossy { " (loses rights)" } else { "" }
        );
    }
    match (&a.outcome, &a.path) {
        (Outcome::Chosen, Some(p)) => {
            let _ = writeln!(out, "chosen: {} ({p})", p.license);
        }
        (Outcome::Prompted, Some(p)) => {
            let _ = writeln!(out, "chosen after prompt: {} ({p})", p.license);
        }
        (Outcome::Unresolved, _) => {
            let _ = writeln!(out, "prompt required: every candidate loses rights");
        }
        _ => {
            let _ = writeln!(out, "no license matches");
        }
    }
    if let Some(d) = a.depletion {
        let _ = writeln!(
            out,
            "depletion: {}",
            serde_json::to_value(d).unwrap().as_str().unwrap_or("")
        );
    }
    for ch in &a.label_changes {
        let _ = writeln!(out, "relabeled {}: {} -> {}", ch.node, ch.before, ch.after);
    }
    let _ = writeln!(out, "rights after: {}", a.rights_after);
}

fn outcome_code(o: Outcome) -> u8 {
    match o {
        Outcome::Chosen | Outcome::Prompted => 0,
        Outcome::Unresolved => EXIT_PROMPT,
        Outcome::NoMatch => EXIT_NO_MATCH,
    }
}

fn cmd_allocate(
    cfg: &Config,
    path: &Path,
    action: &str,
    content: &str,
    at: Option<&str>,
    usage: u64,
) -> CmdResult {
    let doc = load(cfg, path)?;
    let action: Action = action
        .parse()
        .map_err(|e: rightsalloc::ModelError| Failure::new(EXIT_PARSE, e.to_string()))?;
    let content = Content::new(content).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    let at = match (cfg.time, at) {
        (Some(t), _) => t,
        (None, Some(s)) => {
            parse_timestamp(s).map_err(|e| Failure::new(EXIT_PARSE, format!("--at: {e}")))?
        }
        (None, None) => now(),
    };
    let r = Request::new(action, content, at).with_usage(usage);
    let state = AgentState::new(doc.licenses);
    let mut chooser = terminal_choice;
    let chooser: Option<&mut dyn rightsalloc::Chooser> = if cfg.interactive {
        Some(&mut chooser)
    } else {
        None
    };
    let (report, _) = run_request(&state, &r, cfg.algorithm, &cfg.opts, chooser)?;
    if cfg.format == Format::Json {
        print_json(&report);
    } else {
        let mut out = String::new();
        render_allocation(&report, &mut out);
        print!("{out}");
    }
    Ok(outcome_code(report.outcome))
}

fn cmd_simulate(cfg: &Config, path: &Path) -> CmdResult {
    let doc = load(cfg, path)?;
    let requests = doc.requests.clone().unwrap_or_default();
    let mut term = terminal_choice;
    let chooser: Option<&mut dyn rightsalloc::Chooser> = if cfg.interactive {
        Some(&mut term)
    } else {
        None
    };
    let rep: SimulationReport =
        simulate(&doc, &requests, cfg.algorithm, &cfg.opts, cfg.time, chooser)?;
    if cfg.format == Format::Json {
        print_json(&rep);
    } else {
        let mut out = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(out, "initial rights: {}", rep.initial_rights);
        for s in &rep.steps {
            let _ = writeln!(out, "step {}", s.index + 1);
            render_allocation(&s.allocation, &mut out);
            if s.allocation.outcome == Outcome::Prompted && !cfg.interactive {
                let _ = writeln!(out, "note: prompt resolved by the minimal-loss chooser");
            }
            let black: Vec<String> = s.black.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "black: [{}]", black.join(", "));
        }
        let _ = writeln!(out, "final rights: {}", rep.final_rights);
        print!("{out}");
    }
    Ok(if rep.unserved > 0 { EXIT_NO_MATCH } else { 0 })
}

fn cmd_verify(
    cfg: &Config,
    caps: GeneratorCaps,
    mode: GeneratorMode,
    n: u64,
    checks: Vec<Check>,
    dump_dir: Option<&Path>,
    shrink: bool,
) -> CmdResult {
    let mut campaign = CampaignConfig::new(caps, cfg.seed, n);
    campaign.generator = campaign.generator.with_mode(mode);
    campaign.algorithm = cfg.algorithm;
    campaign.opts = cfg.opts;
    campaign.checks = checks;
    campaign.shrink = shrink;
    let rep: CampaignReport = fuzz_campaign(&campaign);
    if let Some(dir) = dump_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", dir.display())))?;
        for c in &rep.checks {
            let name = c.check.map_or("check", Check::name);
            for cx in &c.counterexamples {
                let doc = corpus_from_value(cx.corpus.clone(), cfg.parse)?;
                let file = dir.join(format!("{name}-{}.json", cx.instance));
                fs::write(&file, serialize_corpus(&doc))
                    .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", file.display())))?;
            }
        }
    }
    if cfg.format == Format::Json {
        print_json(&rep);
    } else {
        println!(
            "seed {} n {} algorithm {} mode {}",
            rep.seed,
            rep.n,
            serde_json::to_value(rep.algorithm)
                .unwrap()
                .as_str()
                .unwrap_or(""),
            serde_json::to_value(rep.mode)
                .unwrap()
                .as_str()
                .unwrap_or("")
        );
        for c in &rep.checks {
            println!(
                "{}: {} trials, {} passed, {} vacuous, {} gated, {} failed ({} instances)",
                c.check.map_or("?", Check::name),
                c.trials,
                c.passed,
                c.vacuous,
                c.gated,
                c.failed,
                c.failing_instances
            );
            for cx in &c.counterexamples {
                println!(
                    "  instance {} step {}: {}",
                    cx.instance,
                    cx.step + 1,
                    cx.reason
                );
            }
        }
    }
    Ok(if rep.ok() { 0 } else { EXIT_PROPERTY })
}

fn cmd_cases(cfg: &Config, dir: Option<&Path>) -> CmdResult {
    let rep: CasesReport = run_cases(dir, cfg.parse, &cfg.opts);
    if cfg.format == Format::Json {
        print_json(&rep);
    } else {
        println!(
            "{:<4} {:<22} {:<22} {:<22}",
            "row", "request", "proposed", "oma"
        );
        for r in &rep.rows {
            let cell = |c: &rightsalloc::cases::Cell| {
                if c.matches {
                    c.actual.clone()
                } else {
                    format!("{} (want {})", c.actual, c.expected)
                }
            };
            println!(
                "{:<4} {:<22} {:<22} {:<22}",
                r.row,
                format!("{} {}", r.request.action, r.request.content),
                cell(&r.proposed),
                cell(&r.oma)
            );
        }
        let bad = rep.mismatches();
        if bad.is_empty() {
            println!("all 8 cells match");
        }
    }
    for m in rep.mismatches() {
        eprintln!("mismatch: {m}");
    }
    Ok(if rep.all_match { 0 } else { EXIT_PROPERTY })
}
