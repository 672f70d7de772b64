//! Acceptance run: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Criteria share one lock so that each measured runtime is its own.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hardsat::adversary::{self, AdversaryError, AdversaryOptions, AdversaryRun};
use hardsat::cnf::{self, Assignment, InstanceParams};
use hardsat::dpll::{self, DpllLimits, DpllTrace, DpllVerdict};
use hardsat::expander::{self, ExpanderParams};
use hardsat::gf2::{Gf2Error, Gf2Matrix, Gf2Vector};
use hardsat::offline2online::{self, Compiled, ConfigSpace, HopContext, HopEntry, HopTable};
use hardsat::tm::{self, Config, Limits, Tape, TmError, TmSpec, Verdict};

static LOCK: Mutex<()> = Mutex::new(());

/// DPLL budget for the recursion counts of criterion 7.
const DPLL_BUDGET: u64 = 1 << 22;

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }
}

fn criterion(id: u32, title: &str, limit: Duration, body: impl FnOnce(&mut Outcome)) {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut out = Outcome::new();
    let t = Instant::now();
    body(&mut out);
    let elapsed = t.elapsed();
    out.check(elapsed <= limit, || format!("runtime {elapsed:.1?} over the {limit:?} limit"));
    let verdict = if out.failures.is_empty() { "PASS" } else { "FAIL" };
    // straight to the stderr handle: libtest captures print! but not this
    let mut report = format!("criterion {id} [{title}]: {verdict} in {elapsed:.2?}\n");
    for n in &out.notes {
        report.push_str(&format!("    {n}\n"));
    }
    for f in &out.failures {
        report.push_str(&format!("    failed: {f}\n"));
    }
    let _ = std::io::stderr().write_all(report.as_bytes());
    assert!(out.failures.is_empty(), "criterion {id} failed: {:?}", out.failures);
}

// ---- brute-force linear algebra over row bitmasks ----

fn masks(a: &Gf2Matrix) -> Vec<u32> {
    a.rows().iter().map(|r| r.to_u64().unwrap() as u32).collect()
}

fn apply(rows: &[u32], x: u32) -> u32 {
    rows.iter().enumerate().fold(0, |acc, (i, &r)| acc | (((r & x).count_ones() & 1) << i))
}

/// Rank as log₂ of the size of the row span.
fn brute_rank(rows: &[u32]) -> usize {
    let mut span = BTreeSet::new();
    for sel in 0u32..1 << rows.len() {
        span.insert(rows.iter().enumerate().filter(|(i, _)| sel >> i & 1 == 1).fold(0, |acc, (_, &r)| acc ^ r));
    }
    span.len().trailing_zeros() as usize
}

fn brute_solutions(rows: &[u32], n_cols: usize, b: u32) -> Vec<u32> {
    (0u32..1 << n_cols).filter(|&x| apply(rows, x) == b).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Gf2Matrix {
    let rows = (0..r).map(|_| Gf2Vector::from_u64(rng.gen_range(0..1u64 << c), c)).collect();
    Gf2Matrix::from_rows(c, rows).unwrap()
}

fn all_ones(n: usize) -> Gf2Vector {
    Gf2Vector::ones(n)
}

#[test]
fn criterion_1_gf2_core() {
    criterion(1, "GF(2) core against brute force", Duration::from_secs(5), |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mismatches = 0;
        let (mut square, mut singular) = (0, 0);
        for _ in 0..500 {
            let r = rng.gen_range(1..=8);
            let c = rng.gen_range(1..=8);
            let a = random_matrix(&mut rng, r, c);
            let rows = masks(&a);
            if a.rank() != brute_rank(&rows) {
                mismatches += 1;
                out.check(false, || format!("rank of {a:?}"));
            }
            let b = rng.gen_range(0..1u32 << r);
            let sols = brute_solutions(&rows, c, b);
            match a.solve(&Gf2Vector::from_u64(b as u64, r)) {
                Ok(x) => out.check(sols.contains(&(x.to_u64().unwrap() as u32)), || format!("solve gave a non-solution on {a:?}")),
                Err(Gf2Error::NoSolution) => out.check(sols.is_empty(), || format!("solve missed a solution on {a:?}")),
                Err(e) => out.check(false, || format!("solve: {e}")),
            }
            // every matrix also gets a square sibling for the inverse
            let n = r;
            let sq = random_matrix(&mut rng, n, n);
            let sq_rows = masks(&sq);
            square += 1;
            match sq.inverse() {
                Ok(inv) => {
                    let inv_rows = masks(&inv);
                    for i in 0..n {
                        let col = brute_solutions(&sq_rows, n, 1 << i);
                        let got = (0..n).fold(0u32, |acc, k| acc | ((inv_rows[k] >> i & 1) << k));
                        out.check(col == [got], || format!("inverse column {i} of {sq:?}"));
                    }
                }
                Err(Gf2Error::Singular { .. }) => {
                    singular += 1;
                    out.check(brute_rank(&sq_rows) < n, || format!("inverse refused an invertible {sq:?}"));
                }
                Err(e) => out.check(false, || format!("inverse: {e}")),
            }
        }
        out.note(format!("500 random systems; {square} square matrices, {singular} singular; {mismatches} rank mismatches"));

        // complement commutes with odd-weight rows
        let mut done = 0;
        while done < 500 {
            let n = rng.gen_range(1..=8);
            let rows: Vec<Gf2Vector> = (0..n)
                .map(|_| loop {
                    let v = Gf2Vector::from_u64(rng.gen_range(0..1u64 << n), n);
                    if v.weight() % 2 == 1 {
                        break v;
                    }
                })
                .collect();
            let a = Gf2Matrix::from_rows(n, rows).unwrap();
            if brute_rank(&masks(&a)) < n {
                continue;
            }
            done += 1;
            let inv = a.inverse().unwrap();
            let ones = all_ones(n);
            for x in 0..1u64 << n {
                let x = Gf2Vector::from_u64(x, n);
                let lhs = a.mat_vec_mul(&x.xor(&ones).unwrap()).unwrap();
                let rhs = a.mat_vec_mul(&x).unwrap().xor(&ones).unwrap();
                out.check(lhs == rhs, || format!("A(x+1) != Ax+1 for {a:?}"));
                let lhs = inv.mat_vec_mul(&x.xor(&ones).unwrap()).unwrap();
                let rhs = inv.mat_vec_mul(&x).unwrap().xor(&ones).unwrap();
                out.check(lhs == rhs, || format!("A⁻¹(y+1) != A⁻¹y+1 for {a:?}"));
            }
        }
        out.note("complement property on 500 odd-row full-rank matrices");
    });
}

/// Boundary by brute force over the dense matrix, independent of both library versions.
fn dense_boundary(a: &Gf2Matrix, rows: &[usize]) -> Vec<usize> {
    (0..a.n_cols()).filter(|&j| rows.iter().filter(|&&i| a.get(i, j)).count() == 1).collect()
}

#[test]
fn criterion_2_expander() {
    criterion(2, "expander n=12 s=3 c=11/13 r=4", Duration::from_secs(60), |out| {
        let params = ExpanderParams::new(4, 3, ExpanderParams::DEFAULT_C).unwrap();
        let mut built = None;
        for seed in 0..10u64 {
            match expander::construct_expander(12, params, 4, seed * 10_000, 200) {
                Ok(e) => {
                    out.note(format!("seed {seed}: accepted after {} tries", e.stats.tries));
                    built = Some(e);
                    break;
                }
                Err(e) => out.note(format!("seed {seed}: {e}")),
            }
        }
        let Some(e) = built else {
            out.check(false, || "no seed produced a full-rank expander".into());
            return;
        };
        out.check(e.reverify().unwrap(), || "re-verification failed".into());
        let check = expander::verify_boundary_expansion(&e.matrix, 4, params.c).unwrap();
        out.check(check.holds, || format!("violator {:?}", check.violator));
        let mut sets = 0;
        for k in 1..=4 {
            expander::for_each_subset(12, k, |rows| {
                sets += 1;
                let x = expander::boundary(&e.matrix, rows).unwrap();
                let y = expander::boundary_by_folding(&e.matrix, rows).unwrap();
                let z = dense_boundary(&e.matrix, rows);
                if x != y || x != z {
                    out.failures.push(format!("boundaries disagree on {rows:?}"));
                }
                true
            });
        }
        out.note(format!("boundary implementations compared on {sets} row sets"));
    });
}

fn weight_three_full_rank(m: usize, seed: u64) -> Gf2Matrix {
    let cap = expander::default_col_degree_cap(m).max(3);
    (0..)
        .map(|t| expander::generate_candidate(m, 3, cap, seed * 1000 + t).unwrap())
        .find(|a| brute_rank(&masks(a)) == m)
        .unwrap()
}

#[test]
fn criterion_3_formula_semantics() {
    criterion(3, "two satisfying assignments without ψ", Duration::from_secs(30), |out| {
        for m in [6usize, 8] {
            for seed in 0..5u64 {
                let a = weight_three_full_rank(m, seed);
                let rows = masks(&a);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut vec = || Gf2Vector::from_u64(rng.gen_range(0..1u64 << m), m);
                let (q, w, d) = (vec(), vec(), vec());
                let p = InstanceParams { q: q.clone(), w: w.clone(), d: d.clone(), a: 0, b: 1, psi_parity: true };
                let f = cnf::build_instance_without_psi(&a, &p).unwrap();
                let layout = f.layout().unwrap().clone();
                let sols = cnf::brute_force_sat_over(&f, &layout.determining_vars(), 24).unwrap();
                let solve = |v: &Gf2Vector| {
                    let b = v.xor(&d).unwrap().to_u64().unwrap() as u32;
                    let xs = brute_solutions(&rows, m, b);
                    assert_eq!(xs.len(), 1);
                    Gf2Vector::from_u64(xs[0] as u64, m)
                };
                let expected: BTreeSet<(bool, Gf2Vector)> = [(false, solve(&q)), (true, solve(&w))].into();
                let got: BTreeSet<(bool, Gf2Vector)> =
                    sols.iter().map(|s: &Assignment| (s.value(layout.selector_var()), s.columns(&layout))).collect();
                out.check(sols.len() == 2 && got == expected, || format!("m={m} seed={seed}: {} models, {got:?} vs {expected:?}", sols.len()));
                for s in &sols {
                    out.check(f.satisfied_by(s), || format!("m={m} seed={seed}: oracle model does not satisfy"));
                }
            }
        }
        out.note("m in {6, 8}, 5 seeds each");
    });
}

fn binary_strings(lengths: std::ops::RangeInclusive<usize>) -> impl Iterator<Item = String> {
    lengths.flat_map(|n| (0..1u32 << n).map(move |m| (0..n).map(|i| if m >> i & 1 == 1 { '1' } else { '0' }).collect()))
}

/// Run from configuration `x` placed at position `k` until the head first reaches `k + 1`.
fn direct_hop(spec: &TmSpec, tape: &dyn Tape, space: ConfigSpace, cap: usize, x: u32, k: usize) -> HopEntry {
    let mem = space.to_memory(x);
    let mut cfg = Config::initial(spec, tape);
    cfg.state = mem.state;
    cfg.head = mem.head;
    cfg.work = mem.cells.clone();
    cfg.in_pos = k;
    let limits = Limits { steps: u64::MAX, space: space.f, output: Some(cap) };
    // more steps than configurations at positions ≤ k means a repeat
    let bound = space.count() * (k + 1) * (cap + 1) + 1;
    for _ in 0..bound {
        if spec.is_halting(cfg.state) {
            return HopEntry::Halt { config: space.from_memory(&cfg.memory()).unwrap(), output: cfg.output };
        }
        match tm::step(spec, tape, &mut cfg, &limits) {
            Ok(()) => {}
            Err(TmError::SpaceExceeded { .. }) => return HopEntry::Overflow { printed: cfg.output.chars().count() },
            Err(TmError::OutputExceeded { .. }) => return HopEntry::Loop,
            Err(TmError::MissingTransition { .. }) => return HopEntry::Stuck { printed: cfg.output.chars().count() },
            Err(e) => panic!("{e}"),
        }
        if cfg.in_pos == k + 1 {
            return HopEntry::Exit { config: space.from_memory(&cfg.memory()).unwrap(), output: cfg.output };
        }
    }
    HopEntry::Loop
}

fn random_offline_machine(rng: &mut ChaCha8Rng, n_states: usize) -> TmSpec {
    let names: Vec<String> = (0..n_states).map(|i| format!("q{i}")).collect();
    let mut text = format!(
        "variant offline\nstates {} acc rej\ninitial q0\naccept acc\nreject rej\ninput 0 1\noutput x\noutput-cap 2\n",
        names.join(" ")
    );
    let targets: Vec<String> = names.iter().cloned().chain(["acc".into(), "rej".into()]).collect();
    for q in &names {
        for sym in ["_", "$", "0", "1"] {
            for bit in ["0", "1"] {
                if rng.gen_bool(0.03) {
                    continue;
                }
                let to = if rng.gen_bool(0.85) { &names[rng.gen_range(0..names.len())] } else { &targets[rng.gen_range(0..targets.len())] };
                let write = ["0", "1", "*"][rng.gen_range(0..3)];
                let mi = ["L", "R", "S"][rng.gen_range(0..3)];
                let mw = ["L", "R", "S"][rng.gen_range(0..3)];
                let emit = if rng.gen_bool(0.1) { " x" } else { "" };
                text.push_str(&format!("{q} {sym} {bit} -> {to} {write} {mi} {mw}{emit}\n"));
            }
        }
    }
    TmSpec::parse(&text).unwrap()
}

/// Allowed drift of the memory constant between short inputs and a length-1000 input.
const MEMORY_DRIFT: f64 = 1.25;

#[test]
fn criterion_4_offline_to_online() {
    criterion(4, "offline to online compiler", Duration::from_secs(120), |out| {
        let f_of = TmSpec::bundled("const-1").unwrap();
        let mut worst_c: f64 = 0.0;
        let (mut short_tables, mut sweep_c) = (Vec::new(), 0.0f64);
        for name in ["right-sweep-parity", "first-equals-last", "emit-last-then-first"] {
            let c = Compiled::new(TmSpec::bundled(name).unwrap(), f_of.clone()).unwrap();
            let limits = Limits { steps: 100_000, space: 1, output: Some(c.output_cap) };
            let mut count = 0;
            for s in binary_strings(1..=10) {
                count += 1;
                let streamed = offline2online::stream(&c, &s).unwrap();
                let direct = tm::run_offline(&c.spec, &s, &limits).unwrap();
                out.check(
                    (streamed.verdict, &streamed.output) == (direct.verdict, &direct.output),
                    || format!("{name} on {s:?}: {} vs {}", streamed.verdict, direct.verdict),
                );
                let r = &streamed.resources;
                let bound = (r.f.max(1) as f64) * (1u64 << r.f) as f64 * r.output_cap as f64;
                worst_c = worst_c.max(r.total_bits as f64 / bound);
                if name == "right-sweep-parity" {
                    short_tables.push(r.table_bits);
                    sweep_c = sweep_c.max(r.constant);
                }
            }
            out.note(format!("{name}: {count} inputs"));
        }
        // C must not depend on n: a long input needs the same tables and near-equal scratch
        let long_input: String = (0..1000).map(|i| if i % 3 == 0 { '1' } else { '0' }).collect();
        let c = Compiled::new(TmSpec::bundled("right-sweep-parity").unwrap(), f_of.clone()).unwrap();
        let long = offline2online::stream(&c, &long_input).unwrap().resources;
        out.check(short_tables.iter().all(|&t| t == long.table_bits), || format!("table bits vary with n: {long}"));
        out.check(long.constant <= MEMORY_DRIFT * sweep_c, || format!("C at n=1000 is {:.2}, short inputs {sweep_c:.2}", long.constant));
        out.note(format!("memory ≤ C·f·2^f·outputCap with C = {worst_c:.2} over all three (n ≤ 10)"));
        out.note(format!("right-sweep-parity: C = {sweep_c:.2} (n ≤ 10), {:.2} (n = 1000)", long.constant));

        // hop tables, Loop entries included, against direct simulation
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut machines, mut entries, mut loops) = (0, 0u64, 0u64);
        for n_states in 1..=3 {
            for _ in 0..40 {
                let m = random_offline_machine(&mut rng, n_states);
                machines += 1;
                for f in 0..=3 {
                    let space = ConfigSpace::new(m.num_states(), f).unwrap();
                    let ctx = HopContext { spec: &m, space, output_cap: 2 };
                    for input in binary_strings(0..=4) {
                        let tape = m.tape(&input).unwrap();
                        let mut prev: Option<HopTable> = None;
                        for k in 0..=input.len() {
                            let table = ctx.advance(prev.as_ref(), tape.at(k), k).unwrap();
                            for x in 0..space.count() as u32 {
                                let want = direct_hop(&m, &tape, space, 2, x, k);
                                entries += 1;
                                loops += (want == HopEntry::Loop) as u64;
                                out.check(table.entries[x as usize] == want, || {
                                    format!("hop k={k} x={x} f={f} input={input:?}: {:?} vs {want:?}", table.entries[x as usize])
                                });
                            }
                            prev = Some(table);
                        }
                    }
                }
            }
        }
        out.note(format!("{machines} random machines, f ≤ 3, inputs ≤ 4: {entries} hop entries ({loops} loops) match"));
    });
}

#[test]
fn criterion_5_combiner() {
    criterion(5, "DPLL with (A,B) equals DPLL with combine(A,B)", Duration::from_secs(30), |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut corpus = Vec::new();
        while corpus.len() < 50 {
            let vars = rng.gen_range(3..=10u32);
            let n_clauses = rng.gen_range(1..=4 * vars as usize);
            let clauses: Vec<Vec<i32>> = (0..n_clauses)
                .map(|_| {
                    let len = rng.gen_range(1..=3);
                    (0..len).map(|_| rng.gen_range(1..=vars as i32) * if rng.gen_bool(0.5) { 1 } else { -1 }).collect()
                })
                .collect();
            if let Ok(f) = cnf::CnfFormula::from_dimacs_clauses(vars, &clauses) {
                corpus.push(f);
            }
        }
        let limits = DpllLimits { budget: 1 << 16, record: true };
        let mut compared = 0;
        for (name, a, b) in dpll::combiner_pairs() {
            let h = dpll::combine(a.clone(), b.clone());
            for (i, f) in corpus.iter().enumerate() {
                let left = dpll::dpll_ab(f, a.as_ref(), b.as_ref(), limits).unwrap();
                let right = dpll::dpll_h(f, &h, limits).unwrap();
                compared += 1;
                out.check(left.nodes == right.nodes && left.verdict == right.verdict, || format!("{name}: trees differ on formula {i}"));
            }
        }
        out.note(format!("{compared} tree comparisons over 3 pairs"));
    });
}

struct CertCell {
    name: &'static str,
    m: usize,
    result: Result<AdversaryRun, AdversaryError>,
}

const CATALOG: [(&str, u32); 3] = [("first-true", 0), ("parity-sketch:4", 4), ("parity-sketch:6", 6)];

fn certificates() -> &'static Vec<CertCell> {
    static CELLS: OnceLock<Vec<CertCell>> = OnceLock::new();
    CELLS.get_or_init(|| {
        let mut cells = Vec::new();
        for (name, _) in CATALOG {
            let h = dpll::parse_heuristic(name).unwrap();
            for m in [8usize, 10, 12] {
                let result = adversary::certify_with_retries(&h, name, m, 3, 0, 20, &AdversaryOptions::default()).map(|(_, run)| run);
                cells.push(CertCell { name, m, result });
            }
        }
        cells
    })
}

#[test]
fn criterion_6_adversary() {
    criterion(6, "adversary end to end", Duration::from_secs(600), |out| {
        for cell in certificates() {
            let (name, m) = (cell.name, cell.m);
            let run = match &cell.result {
                Ok(run) => run,
                Err(e) => {
                    out.failures.push(format!("{name} m={m}: no certificate: {e}"));
                    continue;
                }
            };
            let cert = &run.certificate;
            let bits = CATALOG.iter().find(|(n, _)| *n == name).unwrap().1;
            out.check(cert.state_bits == bits, || format!("{name}: {} state bits", cert.state_bits));
            let report = adversary::verify_certificate(cert).unwrap();
            out.check(report.passed(), || format!("{name} m={m}: failed {:?}", report.failed()));
            let q = &run.q_classes;
            let lhs = q.largest().len() * q.num_states();
            out.check(lhs >= 1 << m && q.total == 1 << m, || format!("{name} m={m}: pigeonhole {lhs} < 2^{m}"));
            out.note(format!(
                "{name} m={m}: certificate ok, |Q|={} over {} states, |W|={}, pair ({}, {})",
                q.largest().len(),
                q.num_states(),
                run.w_classes.largest().len(),
                cert.a,
                cert.b
            ));
        }
    });
}

fn count(t: &DpllTrace) -> String {
    match t.verdict {
        DpllVerdict::LimitExceeded => format!("≥{}", t.calls),
        _ => t.calls.to_string(),
    }
}

#[test]
fn criterion_7_blowup() {
    // the certificates are criterion 6's; only the DPLL runs are timed here
    let cells = certificates();
    criterion(7, "hard instance recursion counts", Duration::from_secs(600), |out| {
        let limits = DpllLimits { budget: DPLL_BUDGET, record: false };
        let mut sketch_hard = Vec::new();
        for cell in cells {
            let (name, m) = (cell.name, cell.m);
            let Ok(run) = &cell.result else {
                out.failures.push(format!("{name} m={m}: no certificate to measure"));
                continue;
            };
            let h = dpll::parse_heuristic(name).unwrap();
            let cert = &run.certificate;
            let fs = cert.formulas().unwrap();
            let hard = dpll::dpll_h(&fs[cert.hard], &h, limits).unwrap();
            let easy = dpll::dpll_h(&fs[1 - cert.hard], &h, limits).unwrap();
            let easy_done = easy.verdict != DpllVerdict::LimitExceeded;
            // a capped hard count is a lower bound, a capped easy count decides nothing
            out.check(easy_done && hard.calls > easy.calls, || format!("{name} m={m}: hard {} vs easy {}", count(&hard), count(&easy)));
            out.note(format!("{name} m={m}: hard {} easy {}", count(&hard), count(&easy)));
            if name == "parity-sketch:4" {
                sketch_hard.push((m, hard));
            }
        }
        for (m0, m1) in [(8, 10), (10, 12)] {
            let get = |m| sketch_hard.iter().find(|(k, _)| *k == m).map(|(_, t)| t);
            match (get(m0), get(m1)) {
                (Some(a), Some(b)) => {
                    let ratio = b.calls as f64 / a.calls as f64;
                    // only a capped numerator keeps the ratio a lower bound
                    let sound = a.verdict != DpllVerdict::LimitExceeded;
                    out.check(sound && ratio >= 1.5, || format!("count({m1})/count({m0}) = {ratio:.2}{}", if sound { "" } else { " (capped denominator)" }));
                    out.note(format!("parity-sketch:4 count({m1})/count({m0}) = {ratio:.2}"));
                }
                _ => out.failures.push(format!("parity-sketch:4 growth {m0}->{m1}: a certificate is missing")),
            }
        }
    });
}

#[test]
fn criterion_8_bad_pairs() {
    criterion(8, "bad pair fraction", Duration::from_secs(60), |out| {
        let mut fractions = Vec::new();
        for n in [8usize, 10, 12, 14, 16] {
            let params = ExpanderParams::new(3, 3, ExpanderParams::DEFAULT_C).unwrap();
            let (mut bad, mut total) = (0usize, 0usize);
            for seed in 0..5u64 {
                let e = expander::construct_expander(n, params, 3, seed * 1000, 2000).unwrap();
                let report = adversary::bad_pairs(&e.matrix);
                out.check(report.verify(&e.matrix).unwrap(), || format!("n={n} seed={seed}: a witness does not recheck"));
                for p in &report.pairs {
                    let mut rows = p.witness.clone();
                    rows.push(n);
                    let ext = e.matrix.with_row(Gf2Vector::from_bits((0..n).map(|j| j == p.i || j == p.j))).unwrap();
                    let b = dense_boundary(&ext, &rows).len();
                    out.check(b == p.boundary && !adversary::margin_holds(b, rows.len()), || format!("n={n}: witness for ({}, {})", p.i, p.j));
                }
                bad += report.pairs.len();
                total += n * (n - 1) / 2;
            }
            let frac = bad as f64 / total as f64;
            out.note(format!("n={n}: {bad}/{total} pairs flagged ({frac:.3})"));
            fractions.push((n, frac));
        }
        // strict decrease along the 8, 12, 16 grid; 10 and 14 are reported only
        let grid: Vec<_> = fractions.iter().filter(|(n, _)| n % 4 == 0).collect();
        out.check(grid.windows(2).all(|w| w[1].1 < w[0].1), || format!("fractions not decreasing: {fractions:?}"));
    });
}

fn in_length_prefix(s: &str) -> bool {
    !s.is_empty() && s.starts_with(&format!("{:b}", s.len()))
}

fn is_f_periodic(s: &[u8]) -> bool {
    let f = s.len() / 2;
    (0..s.len() - f).all(|i| s[i] == s[i + f])
}

#[test]
fn criterion_9_example_machines() {
    criterion(9, "example machines", Duration::from_secs(30), |out| {
        let lp = TmSpec::bundled("length-prefix").unwrap();
        let fp = TmSpec::bundled("f-periodic").unwrap();
        let mut n = 0;
        for s in binary_strings(0..=12) {
            n += 1;
            let got = tm::run(&lp, &s, &lp.default_limits()).unwrap().verdict == Verdict::Accept;
            out.check(got == in_length_prefix(&s), || format!("length-prefix on {s:?}"));
            let got = tm::run(&fp, &s, &fp.default_limits()).unwrap().verdict == Verdict::Accept;
            out.check(got == is_f_periodic(s.as_bytes()), || format!("f-periodic on {s:?}"));
        }
        out.note(format!("{n} strings each"));
    });
}
