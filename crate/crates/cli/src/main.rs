mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cutchoose::auditor::{
    audit_regret, check_fairness, find_envy_free_contiguous, AuditError, DeviationGrids, SubtreeAudit,
};
use cutchoose::dsl::{is_oblivious, parse, validate, CompiledProgram, ParseError, ProtocolProgram};
use cutchoose::engine::{replay, run, trace_from_json, trace_to_json, FinishedRun, Strategy, StrategyTable};
use cutchoose::protocols::{generate, GeneratedProtocol, ProtocolKind};
use cutchoose::solver::{solve, SolveOptions, SolverError, DEFAULT_BUDGET};
use cutchoose::{parse_rational, Rational, ValuationProfile};
use rand::SeedableRng;
use serde_json::{json, Value};

use report::{outcome_json, Report};

#[derive(Parser)]
#[command(name = "cutchoose", version, about = "Generalized cut-and-choose protocols: run, solve and audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a protocol file and list every violation.
    Validate { file: PathBuf },
    /// Write a builtin protocol, or a random valuation profile.
    Generate(GenerateArgs),
    /// Play a protocol with honest or tabulated strategies, or replay a trace.
    Run(RunArgs),
    /// Compute an approximate subgame-perfect equilibrium on grids.
    Solve(SolveArgs),
    /// Fairness of an outcome plus best-response regret of the strategies.
    Audit(AuditArgs),
    /// Brute-force searches.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct GenerateArgs {
    /// cc, ds, ep, sc, thieves or orr.
    #[arg(long, required_unless_present = "random_profile")]
    protocol: Option<String>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_parser = rational)]
    eps: Option<Rational>,
    /// Write a random valuation profile for `--n` agents instead.
    #[arg(long, conflicts_with = "protocol")]
    random_profile: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also record the honest play on `--profile` as a strategy table.
    #[arg(long, requires = "profile")]
    strategies_out: Option<PathBuf>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Play {
    /// Honest strategies of the protocol the file was generated from.
    #[arg(long, conflicts_with_all = ["strategies", "replay"])]
    honest: bool,
    /// Strategy table JSON, as written by `generate --strategies-out` or `solve`.
    #[arg(long, conflicts_with = "replay")]
    strategies: Option<PathBuf>,
    /// Trace JSON to re-execute.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    play: Play,
    /// Tolerance for the eps flags of the fairness report; defaults to the
    /// eps in the file header, else 0.
    #[arg(long, value_parser = rational)]
    eps: Option<Rational>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_parser = rational)]
    eps: Rational,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    /// Audit the solution on grids one refinement finer.
    #[arg(long)]
    audit: bool,
    /// Keep at most this many strategy table entries in the report.
    #[arg(long)]
    table_limit: Option<usize>,
    #[arg(long, env = "CUTCHOOSE_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    file: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    play: Play,
    /// Regret tolerance; the audit fails when some agent gains more.
    #[arg(long, value_parser = rational)]
    eps: Option<Rational>,
    /// Cut deviations range over {k/grid}.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Audit every node this many decisions below the root.
    #[arg(long, default_value_t = 0)]
    depth: usize,
    /// Extra subtree roots reached by random play.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Least-envy contiguous allocation on a uniform grid.
    EfSearch {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        resolution: usize,
        /// Defaults to uniform valuations.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Fail unless the max envy is at most this.
        #[arg(long, value_parser = rational)]
        bound: Option<Rational>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

/// Exit status 1 for domain failures, 2 for usage and IO problems.
enum Fail {
    Domain(String),
    Usage(String),
}

type Res<T> = Result<T, Fail>;

fn domain(e: impl std::fmt::Display) -> Fail {
    Fail::Domain(e.to_string())
}

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Res<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Fail::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_kind(e: &ParseError) -> &'static str {
    match e {
        ParseError::Syntax { .. } => "SyntaxError",
        ParseError::NumericLiteralInCondition { .. } => "NumericLiteralInCondition",
        ParseError::UnknownLabel { .. } => "UnknownLabel",
        ParseError::AgentOutOfRange { .. } => "AgentOutOfRange",
    }
}

fn load_program(path: &Path) -> Res<(String, ProtocolProgram, CompiledProgram)> {
    let text = read(path)?;
    let program =
        parse(&text).map_err(|e| Fail::Domain(format!("{}:{e} ({})", path.display(), parse_kind(&e))))?;
    let compiled = CompiledProgram::new(&program).map_err(|vs| {
        let lines: Vec<String> = vs.iter().map(|v| format!("{}:{v}", path.display())).collect();
        Fail::Domain(lines.join("\n"))
    })?;
    Ok((text, program, compiled))
}

fn load_profile(path: &Path) -> Res<ValuationProfile> {
    ValuationProfile::from_json(&read(path)?).map_err(|e| Fail::Domain(format!("{}: {e}", path.display())))
}

const HEADER: &str = "# generated by cutchoose:";

/// `(kind, n, eps)` from a generated file's header comment.
fn header(text: &str) -> Option<(ProtocolKind, usize, Option<Rational>)> {
    let line = text.lines().find_map(|l| l.strip_prefix(HEADER))?;
    let (mut kind, mut n, mut eps) = (None, None, None);
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("protocol", v)) => kind = ProtocolKind::from_code(v),
            Some(("n", v)) => n = v.parse().ok(),
            Some(("eps", v)) => eps = parse_rational(v).ok(),
            _ => {}
        }
    }
    Some((kind?, n?, eps))
}

/// Regenerates the protocol named in the header and checks the file still
/// holds exactly that program.
fn regenerate(text: &str, program: &ProtocolProgram) -> Res<GeneratedProtocol> {
    let (kind, n, eps) =
        header(text).ok_or_else(|| Fail::Usage("--honest needs a file written by `cutchoose generate`".into()))?;
    let g = generate(kind, n, eps).map_err(domain)?;
    if g.program.to_string() != program.to_string() {
        return Err(Fail::Domain("file was edited after generation; honest strategies do not apply".into()));
    }
    Ok(g)
}

fn load_table(path: &Path) -> Res<StrategyTable> {
    let v = read_json(path)?;
    let v = if v.get("entries").is_some() { v } else { v["strategy_table"].clone() };
    StrategyTable::from_json(&v).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

enum Played {
    Strategies(Vec<Box<dyn Strategy>>),
    Replay(FinishedRun),
}

fn play(
    play: &Play,
    text: &str,
    program: &ProtocolProgram,
    compiled: &CompiledProgram,
    profile: &ValuationProfile,
    report: &mut Report,
) -> Res<Played> {
    if play.honest {
        let g = regenerate(text, program)?;
        return Ok(Played::Strategies(g.honest(profile).map_err(domain)?));
    }
    if let Some(path) = &play.strategies {
        report.input("strategies", path)?;
        let table = load_table(path)?;
        return Ok(Played::Strategies((0..compiled.n_agents).map(|_| Box::new(table.clone()) as Box<dyn Strategy>).collect()));
    }
    if let Some(path) = &play.replay {
        report.input("trace", path)?;
        let trace = trace_from_json(&read_json(path)?).map_err(|e| Fail::Usage(e.to_string()))?;
        return Ok(Played::Replay(replay(compiled, profile, &trace).map_err(domain)?));
    }
    Err(Fail::Usage("choose one of --honest, --strategies or --replay".into()))
}

fn refs(s: &[Box<dyn Strategy>]) -> Vec<&dyn Strategy> {
    s.iter().map(|b| b.as_ref()).collect()
}

fn program_json(program: &ProtocolProgram, compiled: &CompiledProgram) -> Value {
    json!({
        "n_agents": compiled.n_agents,
        "max_ops": compiled.max_ops,
        "max_cuts": compiled.max_cuts,
        "oblivious": is_oblivious(program),
    })
}

fn cmd_validate(file: &Path) -> Res<()> {
    let text = read(file)?;
    let program =
        parse(&text).map_err(|e| Fail::Domain(format!("{}:{e} ({})", file.display(), parse_kind(&e))))?;
    let violations = validate(&program);
    for v in &violations {
        println!("{}:{v}", file.display());
    }
    if violations.is_empty() {
        println!("{}: ok", file.display());
        Ok(())
    } else {
        Err(Fail::Domain(format!("{} violation(s)", violations.len())))
    }
}

fn cmd_generate(a: &GenerateArgs) -> Res<()> {
    if a.random_profile {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
        let profile = ValuationProfile::random(a.n, &mut rng);
        return write_out(a.output.as_deref(), &(profile.to_json() + "\n"));
    }
    let code = a.protocol.as_deref().unwrap_or_default();
    let kind = ProtocolKind::from_code(code).ok_or_else(|| Fail::Usage(format!("unknown protocol {code}")))?;
    let g = generate(kind, a.n, a.eps.clone()).map_err(|e| Fail::Usage(e.to_string()))?;
    let mut head = format!("{HEADER} protocol={} n={}", kind.code(), g.n);
    if let Some(eps) = &g.eps {
        head.push_str(&format!(" eps={eps}"));
    }
    write_out(a.output.as_deref(), &format!("{head}\n{}", g.program))?;
    if let (Some(out), Some(p)) = (&a.strategies_out, &a.profile) {
        let profile = load_profile(p)?;
        let honest = g.honest(&profile).map_err(domain)?;
        let (table, _) = StrategyTable::record(&g.compiled, &profile, &refs(&honest)).map_err(domain)?;
        write_out(Some(out), &(serde_json::to_string_pretty(&table.to_json()).unwrap() + "\n"))?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Res<()> {
    let t = Instant::now();
    let mut report = Report::new("run");
    report.input("program", &a.file)?;
    report.input("profile", &a.profile)?;
    let (text, program, compiled) = load_program(&a.file)?;
    let profile = load_profile(&a.profile)?;
    let finished = match play(&a.play, &text, &program, &compiled, &profile, &mut report)? {
        Played::Strategies(s) => run(&compiled, &profile, &refs(&s)).map_err(domain)?,
        Played::Replay(r) => r,
    };
    let eps = a.eps.clone().or_else(|| header(&text).and_then(|h| h.2)).unwrap_or_default();
    let fairness = check_fairness(&finished.outcome.allocation, &profile, &eps);
    report.set("program", program_json(&program, &compiled));
    report.set("outcome", outcome_json(&finished.outcome));
    report.set("trace", trace_to_json(&finished.trace));
    report.set("fairness", fairness.to_json());
    write_out(a.output.as_deref(), &report.finish(t))
}

fn cmd_solve(a: &SolveArgs) -> Res<()> {
    let t = Instant::now();
    let mut report = Report::new("solve");
    report.input("program", &a.file)?;
    report.input("profile", &a.profile)?;
    let (_, program, compiled) = load_program(&a.file)?;
    let profile = load_profile(&a.profile)?;
    let opts = SolveOptions { budget: a.budget, threads: a.threads.max(1), ..Default::default() };
    let sol = solve(&compiled, &profile, &a.eps, &opts).map_err(|e| match e {
        SolverError::DegenerateEps(_) | SolverError::BadParameters(_) => Fail::Usage(e.to_string()),
        e => domain(e),
    })?;
    report.set("program", program_json(&program, &compiled));
    report.set("certificate", sol.certificate.to_json());
    let s = sol.profile.strategies();
    let s: Vec<&dyn Strategy> = s.iter().map(|x| x as &dyn Strategy).collect();
    // The solver memo skips decisions near the leaves; add the equilibrium
    // path so `run --strategies` can replay it from this file.
    let (on_path, _) = StrategyTable::record(&compiled, &profile, &s).map_err(domain)?;
    let mut table = sol.profile.to_json(a.table_limit);
    if let (Some(entries), Value::Object(path)) = (table["entries"].as_object_mut(), &on_path.to_json()["entries"]) {
        for (k, v) in path {
            entries.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    report.set("strategy_table", table);
    let mut failed = None;
    if a.audit {
        let regret = audit_regret(&compiled, &profile, &s, &DeviationGrids::refining(&sol.grids), &SubtreeAudit::default())
            .map_err(domain)?;
        if regret.max_gain() > a.eps {
            failed = Some(format!("audit found regret {} above eps {}", regret.max_gain(), a.eps));
        }
        report.set("regret", regret.to_json());
    }
    write_out(a.output.as_deref(), &report.finish(t))?;
    failed.map_or(Ok(()), |m| Err(Fail::Domain(m)))
}

fn cmd_audit(a: &AuditArgs) -> Res<()> {
    let t = Instant::now();
    let mut report = Report::new("audit");
    report.input("program", &a.file)?;
    report.input("profile", &a.profile)?;
    let (text, program, compiled) = load_program(&a.file)?;
    let profile = load_profile(&a.profile)?;
    let played = play(&a.play, &text, &program, &compiled, &profile, &mut report)?;
    let eps = a.eps.clone().or_else(|| header(&text).and_then(|h| h.2));
    let (finished, regret) = match &played {
        Played::Replay(r) => (r.clone(), None),
        Played::Strategies(s) => {
            let s = refs(s);
            let finished = run(&compiled, &profile, &s).map_err(domain)?;
            let opts = SubtreeAudit {
                depth: a.depth,
                root_grid: (0..=4).map(|k| cutchoose::rat(k, 4)).collect(),
                samples: a.samples,
                seed: a.seed,
            };
            let regret = audit_regret(&compiled, &profile, &s, &DeviationGrids::uniform(a.grid), &opts)
                .map_err(|e: AuditError| domain(e))?;
            (finished, Some(regret))
        }
    };
    let fairness = check_fairness(&finished.outcome.allocation, &profile, &eps.clone().unwrap_or_default());
    report.set("program", program_json(&program, &compiled));
    report.set("outcome", outcome_json(&finished.outcome));
    report.set("fairness", fairness.to_json());
    let mut failed = None;
    if let Some(r) = &regret {
        report.set("regret", r.to_json());
        if let Some(eps) = &eps {
            if &r.max_gain() > eps {
                failed = Some(format!("agent regret {} exceeds eps {eps}", r.max_gain()));
            }
        }
    }
    write_out(a.output.as_deref(), &report.finish(t))?;
    failed.map_or(Ok(()), |m| Err(Fail::Domain(m)))
}

fn cmd_oracle(c: &OracleCommand) -> Res<()> {
    let OracleCommand::EfSearch { n, resolution, profile, bound, output } = c;
    let t = Instant::now();
    let mut report = Report::new("oracle ef-search");
    let profile = match profile {
        Some(p) => {
            report.input("profile", p)?;
            load_profile(p)?
        }
        None => ValuationProfile::uniform(*n),
    };
    if profile.n() != *n {
        return Err(Fail::Usage(format!("profile has {} agents, --n is {n}", profile.n())));
    }
    let found = find_envy_free_contiguous(&profile, *resolution, bound.clone()).map_err(|e| match e {
        AuditError::Unsupported(_) => Fail::Usage(e.to_string()),
        e => domain(e),
    })?;
    report.set("search", found.to_json());
    write_out(output.as_deref(), &report.finish(t))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { file } => cmd_validate(file),
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Oracle(c) => cmd_oracle(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Domain(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
