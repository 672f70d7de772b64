//! Python bindings: expanders, instances, DPLL runs and certificates.

use std::io::BufReader;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hardsat::adversary::{self, AdversaryCertificate, AdversaryOptions};
use hardsat::cnf::{self, InstanceParams};
use hardsat::dpll::{self, DpllLimits};
use hardsat::expander::{self, ExpanderParams};
use hardsat::gf2::{Gf2Matrix, Gf2Vector};
use hardsat::tm::{self, TmSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rows of a weight-3 expander as column index lists.
#[pyfunction]
#[pyo3(signature = (n, r_verify=3, seed=0, max_tries=2000))]
fn gen_expander(n: usize, r_verify: usize, seed: u64, max_tries: usize) -> PyResult<Vec<Vec<usize>>> {
    let params = ExpanderParams::new(r_verify, 3, ExpanderParams::DEFAULT_C).map_err(value_err)?;
    let e = expander::construct_expander(n, params, r_verify, seed, max_tries).map_err(value_err)?;
    Ok(e.matrix.supports().to_vec())
}

/// DIMACS text of the instance over `rows`; vectors are hex strings.
#[pyfunction]
#[pyo3(signature = (rows, q, w, d, a, b, psi_parity=true))]
fn build_instance(rows: Vec<Vec<usize>>, q: &str, w: &str, d: &str, a: usize, b: usize, psi_parity: bool) -> PyResult<String> {
    let m = rows.len();
    let matrix = Gf2Matrix::from_supports(m, &rows).map_err(value_err)?;
    let vec = |s: &str| Gf2Vector::from_hex(s, m).map_err(value_err);
    let p = InstanceParams { q: vec(q)?, w: vec(w)?, d: vec(d)?, a, b, psi_parity };
    let f = cnf::build_instance(&matrix, &p).map_err(value_err)?;
    let mut out = Vec::new();
    cnf::write_dimacs(&f, &mut out).map_err(value_err)?;
    String::from_utf8(out).map_err(value_err)
}

/// `(verdict, calls)` of DPLL on DIMACS text.
#[pyfunction]
#[pyo3(signature = (dimacs, heuristic="first-true", budget=dpll::DEFAULT_BUDGET))]
fn solve(dimacs: &str, heuristic: &str, budget: u64) -> PyResult<(String, u64)> {
    let f = cnf::parse_dimacs(BufReader::new(dimacs.as_bytes())).map_err(value_err)?;
    let h = dpll::parse_heuristic(heuristic).map_err(value_err)?;
    let t = dpll::dpll_h(&f, &h, DpllLimits { budget, record: false }).map_err(value_err)?;
    Ok((t.verdict.to_string(), t.calls))
}

/// Certificate JSON for `heuristic` at size `m`.
#[pyfunction]
#[pyo3(signature = (m, heuristic="first-true", seed=0, max_seeds=20))]
fn certify(py: Python<'_>, m: usize, heuristic: &str, seed: u64, max_seeds: usize) -> PyResult<String> {
    let h = dpll::parse_heuristic(heuristic).map_err(value_err)?;
    let run = py
        .detach(|| adversary::certify_with_retries(&h, heuristic, m, 3, seed, max_seeds, &AdversaryOptions::default()))
        .map_err(value_err)?
        .1;
    serde_json::to_string(&run.certificate).map_err(value_err)
}

/// True when all five conditions of the certificate hold.
#[pyfunction]
fn verify_certificate(cert: &str) -> PyResult<bool> {
    let cert: AdversaryCertificate = serde_json::from_str(cert).map_err(value_err)?;
    Ok(adversary::verify_certificate(&cert).map_err(value_err)?.passed())
}

/// Verdict of a bundled machine (by name) or a spec text on `input`.
#[pyfunction]
fn run_machine(spec: &str, input: &str) -> PyResult<String> {
    let spec = if tm::bundled_source(spec).is_some() { TmSpec::bundled(spec) } else { TmSpec::parse(spec) }.map_err(value_err)?;
    let r = tm::run(&spec, input, &spec.default_limits()).map_err(value_err)?;
    Ok(r.verdict.to_string())
}

#[pyfunction]
fn heuristics() -> Vec<&'static str> {
    dpll::BUILTIN_NAMES.to_vec()
}

#[pymodule]
fn hardsat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gen_expander, m)?)?;
    m.add_function(wrap_pyfunction!(build_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(verify_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(run_machine, m)?)?;
    m.add_function(wrap_pyfunction!(heuristics, m)?)?;
    Ok(())
}
