use std::io::Write;
use std::path::PathBuf;
use std::thread;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use hardsat::adversary::{self, AdversaryOptions};
use hardsat::dpll::{self, Combined, DpllLimits, DpllVerdict};

use crate::{sink, CliError, Result};

#[derive(Args)]
pub struct BenchArgs {
    /// Matrix sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,10,12")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "parity-sketch:4")]
    pub heuristic: String,
    /// Base seeds, comma separated; one cell per (size, seed).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = dpll::DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value_t = 3)]
    pub r_verify: usize,
    #[arg(long, default_value_t = 20)]
    pub max_seeds: usize,
    /// Write 0 in the wall-time column so that reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRecord {
    pub m: usize,
    pub formula: usize,
    pub hard: bool,
    pub heuristic: String,
    pub recursion_count: u64,
    pub wall_time_us: u64,
    pub verdict: String,
    /// Seed of the expander actually used.
    pub seed: u64,
}

struct Cell {
    m: usize,
    base_seed: u64,
    rows: std::result::Result<Vec<BenchRecord>, String>,
}

fn run_cell(args: &BenchArgs, h: &Combined, m: usize, base_seed: u64) -> std::result::Result<Vec<BenchRecord>, String> {
    let opts = AdversaryOptions::default();
    let (e, run) = adversary::certify_with_retries(h, &args.heuristic, m, args.r_verify, base_seed, args.max_seeds, &opts)
        .map_err(|e| e.to_string())?;
    let cert = &run.certificate;
    let report = adversary::verify_certificate_with(cert, h).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(format!("certificate failed {:?}", report.failed()));
    }
    let formulas = cert.formulas().map_err(|e| e.to_string())?;
    let limits = DpllLimits { budget: args.budget, record: false };
    let mut rows = Vec::new();
    for (k, f) in formulas.iter().enumerate() {
        let t = Instant::now();
        let trace = dpll::dpll_h(f, h, limits).map_err(|e| e.to_string())?;
        let wall = if args.no_timing { 0 } else { t.elapsed().as_micros() as u64 };
        rows.push(BenchRecord {
            m,
            formula: k,
            hard: k == cert.hard,
            heuristic: args.heuristic.clone(),
            recursion_count: trace.calls,
            wall_time_us: wall,
            verdict: trace.verdict.to_string(),
            seed: e.seed,
        });
    }
    Ok(rows)
}

/// `count(m')/count(m)` on hard rows for consecutive sizes sharing a base seed.
/// A ratio involving a budget-capped count is a lower or upper bound, marked `censored`.
pub fn growth_lines(cells: &[(usize, u64, &BenchRecord)]) -> Vec<String> {
    let mut out = Vec::new();
    for w in cells.windows(2) {
        let ((m1, s1, r1), (m2, s2, r2)) = (w[0], w[1]);
        if s1 != s2 || m2 <= m1 {
            continue;
        }
        let ratio = r2.recursion_count as f64 / r1.recursion_count as f64;
        let censored = r1.verdict == DpllVerdict::LimitExceeded.to_string() || r2.verdict == DpllVerdict::LimitExceeded.to_string();
        out.push(format!(
            "# growth seed={s1} m={m1}->{m2} hard_count={}->{} ratio={ratio:.3}{}",
            r1.recursion_count,
            r2.recursion_count,
            if censored { " censored" } else { "" }
        ));
    }
    out
}

pub fn run(args: &BenchArgs, pretty: bool) -> Result<()> {
    if args.sizes.is_empty() || args.seeds.is_empty() {
        return Err(CliError::Usage("need at least one size and one seed".into()));
    }
    let h = dpll::parse_heuristic(&args.heuristic)?;
    let mut cells: Vec<Cell> = thread::scope(|scope| {
        let handles: Vec<_> = args
            .sizes
            .iter()
            .flat_map(|&m| args.seeds.iter().map(move |&s| (m, s)))
            .map(|(m, s)| {
                let h = &h;
                scope.spawn(move || Cell { m, base_seed: s, rows: run_cell(args, h, m, s) })
            })
            .collect();
        handles.into_iter().map(|t| t.join().expect("bench worker panicked")).collect()
    });
    cells.sort_by_key(|c| (c.base_seed, c.m));

    let mut out = sink(args.out.as_deref())?;
    let io = |e: std::io::Error| CliError::Io { path: "bench output".into(), source: e };
    let mut failed = Vec::new();
    let mut hard = Vec::new();
    let mut rows = Vec::new();
    for c in &cells {
        match &c.rows {
            Ok(rs) => {
                rows.extend(rs);
                if let Some(r) = rs.iter().find(|r| r.hard) {
                    hard.push((c.m, c.base_seed, r));
                }
            }
            Err(msg) => failed.push(format!("# partial: m={} seed={} failed: {msg}", c.m, c.base_seed)),
        }
    }
    let capped = rows.iter().any(|r| r.verdict == DpllVerdict::LimitExceeded.to_string());
    if pretty {
        let line = |r: [&dyn std::fmt::Display; 8]| {
            format!("{:>3} {:>2} {:>5} {:>24} {:>12} {:>12} {:>16} {:>8}", r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7])
        };
        writeln!(out, "{}", line([&"m", &"f", &"hard", &"heuristic", &"calls", &"wall_us", &"verdict", &"seed"])).map_err(io)?;
        for r in &rows {
            let l = line([&r.m, &r.formula, &r.hard, &r.heuristic, &r.recursion_count, &r.wall_time_us, &r.verdict, &r.seed]);
            writeln!(out, "{l}").map_err(io)?;
        }
    } else {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Failed(e.to_string()))?;
        }
        w.flush().map_err(io)?;
    }
    for line in growth_lines(&hard).into_iter().chain(failed.iter().cloned()) {
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    if !failed.is_empty() {
        return Err(CliError::Failed(format!("{} of {} cells failed", failed.len(), cells.len())));
    }
    if capped {
        return Err(CliError::Resource(format!("some runs hit the budget of {} calls", args.budget)));
    }
    Ok(())
}
