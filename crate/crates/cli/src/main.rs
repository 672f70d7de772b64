use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use hardsat::adversary::{self, AdversaryCertificate, AdversaryError, AdversaryOptions};
use hardsat::cnf::{self, CnfError, InstanceParams};
use hardsat::dpll::{self, DpllLimits, DpllVerdict, HeuristicError};
use hardsat::expander::{self, ExpanderError, ExpanderParams, Ratio};
use hardsat::gf2::{Gf2Error, Gf2Vector};
use hardsat::offline2online::{self, CompileError, Compiled};
use hardsat::tm::{self, Limits, TmError, TmSpec, Variant, Verdict};

mod bench;

#[derive(Parser)]
#[command(name = "hardsat", version, about = "Adversarial CNF instances for DPLL with bounded-memory heuristics")]
struct Cli {
    /// Human-readable tables instead of JSON/CSV.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a weight-3 boundary expander and write it in matrix text format.
    GenExpander(GenExpander),
    /// Build the instance for a matrix and vectors q, w, d; write DIMACS.
    GenFormula(GenFormula),
    /// Run DPLL with a bounded heuristic.
    Dpll(DpllCmd),
    /// Simulate a machine spec on one input.
    TmRun(TmRun),
    /// Stream an input through the offline-to-online compilation of a machine.
    CompileOnline(CompileOnline),
    /// Build a certificate of two formulas the heuristic cannot tell apart.
    Adversary(AdversaryCmd),
    /// Re-check a certificate from scratch.
    VerifyCert(VerifyCert),
    /// Recursion counts on hard and easy instances across sizes.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenExpander {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value = "11/13")]
    c: Ratio,
    #[arg(long, default_value_t = 4)]
    r_verify: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_tries: usize,
    /// Matrix file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenFormula {
    #[arg(long)]
    matrix: PathBuf,
    /// Hex, coordinate 0 in the low bit of the first digit.
    #[arg(long)]
    q: String,
    #[arg(long)]
    w: String,
    #[arg(long)]
    d: String,
    #[arg(long)]
    a: usize,
    #[arg(long)]
    b: usize,
    /// Right-hand side of the pair constraint (`true` or `false`).
    #[arg(long, default_value_t = InstanceParams::DEFAULT_PSI_PARITY, action = ArgAction::Set)]
    psi_parity: bool,
    /// Leave the pair constraint out.
    #[arg(long)]
    no_psi: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DpllCmd {
    #[arg(long)]
    formula: PathBuf,
    /// Catalog name, `A+B`, `tm:<file>` or `compiled:<file>`.
    #[arg(long, default_value = "first-true")]
    heuristic: String,
    #[arg(long, default_value_t = dpll::DEFAULT_BUDGET)]
    budget: u64,
    /// JSON-lines trace of the call tree.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TmRun {
    /// Spec file or bundled machine name.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value = "")]
    input: String,
    /// Fail unless the spec declares this variant.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    space: Option<usize>,
    #[arg(long)]
    output_cap: Option<usize>,
}

#[derive(Args)]
struct CompileOnline {
    #[arg(long)]
    spec: String,
    /// Machine computing the work bound from `1^n`.
    #[arg(long, default_value = "const-1")]
    f_spec: String,
    #[arg(long, default_value = "")]
    input: String,
    /// JSON-lines resource log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct AdversaryCmd {
    /// Fixed matrix; otherwise expanders are sampled from --seed.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "first-true")]
    heuristic: String,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expanders to try before giving up on a degenerate size.
    #[arg(long, default_value_t = 20)]
    max_seeds: usize,
    #[arg(long, default_value_t = 3)]
    r_verify: usize,
    #[arg(long, default_value_t = adversary::DEFAULT_ENUM_CAP)]
    enum_cap: usize,
    #[arg(long, default_value_t = InstanceParams::DEFAULT_PSI_PARITY, action = ArgAction::Set)]
    psi_parity: bool,
    #[arg(long)]
    out_cert: Option<PathBuf>,
    /// Writes `<prefix>0.cnf` and `<prefix>1.cnf`.
    #[arg(long)]
    out_dimacs_prefix: Option<String>,
}

#[derive(Args)]
struct VerifyCert {
    #[arg(long)]
    cert: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Resource(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<Gf2Error> for CliError {
    fn from(e: Gf2Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ExpanderError> for CliError {
    fn from(e: ExpanderError) -> Self {
        match e {
            ExpanderError::EnumerationCap { .. } | ExpanderError::Exhausted(_) | ExpanderError::Infeasible { .. } => {
                CliError::Resource(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CnfError> for CliError {
    fn from(e: CnfError) -> Self {
        match e {
            CnfError::VarCap { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TmError> for CliError {
    fn from(e: TmError) -> Self {
        match e {
            TmError::SpaceExceeded { .. } | TmError::OutputExceeded { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CompileError> for CliError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::ConfigCap { .. } => CliError::Resource(e.to_string()),
            CompileError::Tm(t) => t.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<HeuristicError> for CliError {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::Unknown(_) | HeuristicError::Machine(_) | HeuristicError::Tm(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<AdversaryError> for CliError {
    fn from(e: AdversaryError) -> Self {
        match e {
            AdversaryError::EnumerationCap { .. } => CliError::Resource(e.to_string()),
            AdversaryError::Expander(x) => x.into(),
            AdversaryError::Malformed(_) | AdversaryError::NotInvertible => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// File when given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn print_json(v: &serde_json::Value, pretty: bool) {
    if pretty {
        println!("{}", serde_json::to_string_pretty(v).expect("json"));
    } else {
        println!("{v}");
    }
}

fn load_spec(arg: &str) -> Result<TmSpec> {
    if tm::bundled_source(arg).is_some() {
        return Ok(TmSpec::bundled(arg)?);
    }
    let p = Path::new(arg);
    let text = std::fs::read_to_string(p).map_err(io_err(p))?;
    Ok(TmSpec::parse(&text)?)
}

fn load_matrix(path: &Path) -> Result<hardsat::gf2::Gf2Matrix> {
    Ok(expander::read_matrix(open(path)?)?)
}

fn gen_expander(args: &GenExpander, pretty: bool) -> Result<()> {
    let params = ExpanderParams::new(args.r_verify, args.s, args.c)?;
    let e = expander::construct_expander(args.n, params, args.r_verify, args.seed, args.max_tries)?;
    let mut out = sink(args.out.as_deref())?;
    expander::write_matrix(&e.matrix, &mut out)?;
    out.flush().map_err(|source| CliError::Io { path: "output".into(), source })?;
    if args.out.is_some() {
        print_json(
            &json!({
                "n": e.n(),
                "s": params.s,
                "c": params.c.to_string(),
                "verified_up_to": e.verified_up_to,
                "seed": e.seed,
                "col_degree_max": e.col_degree_max,
                "stats": e.stats,
            }),
            pretty,
        );
    }
    Ok(())
}

fn gen_formula(args: &GenFormula) -> Result<()> {
    let a = load_matrix(&args.matrix)?;
    let m = a.n_rows();
    let p = InstanceParams {
        q: Gf2Vector::from_hex(&args.q, m)?,
        w: Gf2Vector::from_hex(&args.w, m)?,
        d: Gf2Vector::from_hex(&args.d, m)?,
        a: args.a,
        b: args.b,
        psi_parity: args.psi_parity,
    };
    let f = if args.no_psi { cnf::build_instance_without_psi(&a, &p)? } else { cnf::build_instance(&a, &p)? };
    let mut out = sink(args.out.as_deref())?;
    cnf::write_dimacs(&f, &mut out)?;
    Ok(())
}

fn run_dpll(args: &DpllCmd, pretty: bool) -> Result<()> {
    let f = cnf::parse_dimacs(open(&args.formula)?)?;
    let h = dpll::parse_heuristic(&args.heuristic)?;
    let limits = DpllLimits { budget: args.budget, record: args.trace.is_some() };
    let trace = dpll::dpll_h(&f, &h, limits)?;
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        w.write_all(trace.to_json_lines().as_bytes()).map_err(io_err(path))?;
    }
    let assignment = trace.assignment.as_ref().map(|a| {
        a.iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|b| if b { i as i64 + 1 } else { -(i as i64 + 1) }))
            .collect::<Vec<_>>()
    });
    if pretty {
        println!("verdict   {}", trace.verdict);
        println!("calls     {}", trace.calls);
        if let Some(a) = &assignment {
            println!("partial   {a:?}");
        }
    } else {
        print_json(&json!({"verdict": trace.verdict.to_string(), "calls": trace.calls, "assignment": assignment}), false);
    }
    match trace.verdict {
        DpllVerdict::LimitExceeded => Err(CliError::Resource(format!("budget of {} calls exhausted", args.budget))),
        _ => Ok(()),
    }
}

fn tm_run(args: &TmRun, pretty: bool) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    if let Some(v) = args.variant {
        if v != spec.variant {
            return Err(CliError::Usage(format!("spec is {}, not {v}", spec.variant)));
        }
    }
    let d = spec.default_limits();
    let limits = Limits {
        steps: args.steps.unwrap_or(d.steps),
        space: args.space.unwrap_or(d.space),
        output: args.output_cap.or(d.output),
    };
    let r = tm::run(&spec, &args.input, &limits)?;
    if pretty {
        println!("verdict {}  steps {}  work cells {}  output {:?}", r.verdict, r.steps, r.work_cells, r.output);
    } else {
        print_json(&serde_json::to_value(&r).expect("json"), false);
    }
    match r.verdict {
        Verdict::LimitExceeded(_) => Err(CliError::Resource(format!("run stopped: {}", r.verdict))),
        _ => Ok(()),
    }
}

fn compile_online(args: &CompileOnline, pretty: bool) -> Result<()> {
    let compiled = Compiled::new(load_spec(&args.spec)?, load_spec(&args.f_spec)?)?;
    let r = offline2online::stream(&compiled, &args.input)?;
    if let Some(path) = &args.log {
        let mut w = create(path)?;
        for rec in &r.log {
            writeln!(w, "{}", serde_json::to_string(rec).expect("json")).map_err(io_err(path))?;
        }
    }
    if pretty {
        println!("verdict {}  output {:?}", r.verdict, r.output);
        println!("{}", r.resources);
    } else {
        print_json(&json!({"verdict": r.verdict, "output": r.output, "resources": r.resources}), false);
    }
    Ok(())
}

fn run_adversary(args: &AdversaryCmd, pretty: bool) -> Result<()> {
    let h = dpll::parse_heuristic(&args.heuristic)?;
    let opts = AdversaryOptions { enum_cap: args.enum_cap, psi_parity: args.psi_parity, ..Default::default() };
    let run = match &args.matrix {
        Some(path) => adversary::build_certificate(&h, &args.heuristic, &load_matrix(path)?, &opts)?,
        None => adversary::certify_with_retries(&h, &args.heuristic, args.m, args.r_verify, args.seed, args.max_seeds, &opts)?.1,
    };
    let cert = &run.certificate;
    let report = adversary::verify_certificate_with(cert, &h)?;
    if let Some(path) = &args.out_cert {
        let w = create(path)?;
        serde_json::to_writer_pretty(w, cert).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    if let Some(prefix) = &args.out_dimacs_prefix {
        for (k, f) in cert.formulas()?.iter().enumerate() {
            let path = PathBuf::from(format!("{prefix}{k}.cnf"));
            cnf::write_dimacs(f, create(&path)?)?;
        }
    }
    let summary = json!({
        "m": cert.m,
        "heuristic": cert.heuristic,
        "state_bits": cert.state_bits,
        "expander_seed": cert.expander_seed,
        "class_sizes": cert.class_sizes,
        "pair": [cert.a, cert.b],
        "hard": cert.hard,
        "bad_pairs": run.bad.pairs.len(),
        "verified": report.passed(),
    });
    print_json(&summary, pretty);
    if !report.passed() {
        return Err(CliError::Failed(format!("certificate failed: {:?}", report.failed())));
    }
    Ok(())
}

fn verify_cert(args: &VerifyCert, pretty: bool) -> Result<()> {
    let cert: AdversaryCertificate =
        serde_json::from_reader(open(&args.cert)?).map_err(|e| CliError::Usage(format!("{}: {e}", args.cert.display())))?;
    let report = adversary::verify_certificate(&cert)?;
    if pretty {
        for r in &report.results {
            println!("{:<20} {}  {}", serde_json::to_value(r.condition).expect("json").as_str().unwrap_or("?"), if r.passed { "ok  " } else { "FAIL" }, r.detail);
        }
    } else {
        print_json(&serde_json::to_value(&report).expect("json"), false);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed conditions: {:?}", report.failed())))
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::GenExpander(a) => gen_expander(a, cli.pretty),
        Cmd::GenFormula(a) => gen_formula(a),
        Cmd::Dpll(a) => run_dpll(a, cli.pretty),
        Cmd::TmRun(a) => tm_run(a, cli.pretty),
        Cmd::CompileOnline(a) => compile_online(a, cli.pretty),
        Cmd::Adversary(a) => run_adversary(a, cli.pretty),
        Cmd::VerifyCert(a) => verify_cert(a, cli.pretty),
        Cmd::Bench(a) => bench::run(a, cli.pretty),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hardsat: {e}");
            ExitCode::from(e.code())
        }
    }
}
