use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use coldip::bands::{chern_numbers as lattice_chern, Lattice2D, LatticeSpec2D};
use coldip::cli::{config::RunConfig, execute, Table};
use coldip::dynamics::{eigenmodes as collective_modes, steady_state as solve_steady, DriveSpec};
use coldip::geometry::{make_chain_zones, AtomEnsemble, PolarizationSpec, Zone};
use coldip::kernel::{free_space_coupling, free_space_gamma_omega, ChiralSpec};
use coldip::transmission::mirror_scan as scan_mirror;
use coldip::waveguide::quench_zones;
use coldip::Error;

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn ensemble(positions: Vec<[f64; 3]>) -> PyResult<AtomEnsemble> {
    AtomEnsemble::new(positions, "python").map_err(to_py)
}

fn table_columns<'py>(py: Python<'py>, t: &Table) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    for (j, name) in t.header.iter().enumerate() {
        let cells: Vec<&str> = t.rows.iter().map(|r| r[j].as_str()).collect();
        let numbers: Option<Vec<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        match numbers {
            Some(v) => out.set_item(name, v)?,
            None => out.set_item(name, cells)?,
        }
    }
    Ok(out)
}

/// Runs a CLI subcommand on a TOML config string and returns its tables
/// (column name to values), JSON documents and warnings without writing files.
#[pyfunction]
fn run<'py>(py: Python<'py>, command: &str, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::parse(config).map_err(to_py)?;
    let art = execute(command, &cfg).map_err(to_py)?;
    let loads = py.import("json")?.getattr("loads")?;
    let tables = PyDict::new(py);
    for (name, t) in &art.tables {
        tables.set_item(name, table_columns(py, t)?)?;
    }
    let json = PyDict::new(py);
    for (name, v) in &art.json {
        json.set_item(name, loads.call1((v.to_string(),))?)?;
    }
    let out = PyDict::new(py);
    out.set_item("tables", tables)?;
    out.set_item("json", json)?;
    out.set_item("warnings", PyList::new(py, &art.warnings)?)?;
    Ok(out)
}

/// Pair decay rate and frequency shift `(γ, Ω)` at separation `xi` (units 1/k),
/// with `cos_p_r` the cosine between dipole and separation.
#[pyfunction]
fn pair_coupling(xi: f64, cos_p_r: f64) -> PyResult<(f64, f64)> {
    if !(xi > 0.0) {
        return Err(PyValueError::new_err("separation must be > 0"));
    }
    Ok(free_space_gamma_omega(xi, cos_p_r))
}

/// Collective eigenvalues, decay rates and shifts of linearly polarised
/// emitters in free space.
#[pyfunction]
fn eigenmodes(positions: Vec<[f64; 3]>, polarization: [f64; 3]) -> PyResult<(Vec<Complex64>, Vec<f64>, Vec<f64>)> {
    let e = ensemble(positions)?;
    let pol = PolarizationSpec::linear(polarization).map_err(to_py)?;
    let c = free_space_coupling(&e, &pol).map_err(to_py)?;
    let m = collective_modes(&c).map_err(to_py)?;
    Ok((m.eigenvalues, m.rates, m.shifts))
}

/// Weak-drive steady-state dipole amplitudes. Without `phases` the drive is a
/// plane wave along z, `e^{i z_μ}`.
#[pyfunction]
#[pyo3(signature = (positions, polarization, rabi, detuning = 0.0, phases = None))]
fn steady_state(
    positions: Vec<[f64; 3]>,
    polarization: [f64; 3],
    rabi: f64,
    detuning: f64,
    phases: Option<Vec<Complex64>>,
) -> PyResult<Vec<Complex64>> {
    let e = ensemble(positions)?;
    let pol = PolarizationSpec::linear(polarization).map_err(to_py)?;
    let c = free_space_coupling(&e, &pol).map_err(to_py)?;
    let phases = phases.unwrap_or_else(|| e.positions().iter().map(|r| Complex64::from_polar(1.0, r[2])).collect());
    let drive = DriveSpec::new(rabi, detuning, phases).map_err(to_py)?;
    Ok(solve_steady(&c, &drive).map_err(to_py)?.b.to_vec())
}

/// Resonant transmission `|T|²` of `side × side` arrays over spacings `a/λ`,
/// and the refined local minima.
#[pyfunction]
fn mirror_scan(side: usize, spacings_over_lambda: Vec<f64>, waist: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = scan_mirror(side, &spacings_over_lambda, waist).map_err(to_py)?;
    Ok((s.abs2, s.minima))
}

/// Single-excitation quench of a zoned waveguide chain. `zones` holds
/// `(count, xi)` pairs. Returns per-zone populations, total and retention.
#[pyfunction]
#[pyo3(signature = (zones, initial_site, times, gamma_1d = 1.0, d_factor = 0.0, gamma_ng = 0.0))]
fn chain_quench<'py>(
    py: Python<'py>,
    zones: Vec<(usize, f64)>,
    initial_site: usize,
    times: Vec<f64>,
    gamma_1d: f64,
    d_factor: f64,
    gamma_ng: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let zones: Vec<Zone> = zones.into_iter().map(|(count, xi)| Zone { count, xi }).collect();
    make_chain_zones(&zones).map_err(to_py)?;
    let spec = ChiralSpec::new(gamma_1d, d_factor, gamma_ng).map_err(to_py)?;
    let r = quench_zones(&zones, initial_site, &times, &spec).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("times", r.times)?;
    out.set_item("zone_populations", r.zone_populations)?;
    out.set_item("total", r.total)?;
    out.set_item("retention", r.retention)?;
    out.set_item("final_profile", r.final_profile)?;
    Ok(out)
}

/// Chern numbers of the V-type lattice bands. `lattice` is "honeycomb" or
/// "square"; `a` is the nearest-neighbour distance in units of 1/k.
#[pyfunction]
#[pyo3(signature = (lattice, a, zeeman, grid = 24, r_cut = None))]
fn chern_numbers(lattice: &str, a: f64, zeeman: f64, grid: usize, r_cut: Option<f64>) -> PyResult<Vec<i64>> {
    let kind = match lattice {
        "honeycomb" => Lattice2D::Honeycomb,
        "square" => Lattice2D::Square,
        other => return Err(PyValueError::new_err(format!("unknown lattice {other:?}"))),
    };
    let spec = LatticeSpec2D::new(kind, a, zeeman).map_err(to_py)?;
    let r = lattice_chern(&spec, grid, r_cut.unwrap_or(40.0 * a)).map_err(to_py)?;
    Ok(r.chern)
}

#[pymodule]
fn coldip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(pair_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(eigenmodes, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(mirror_scan, m)?)?;
    m.add_function(wrap_pyfunction!(chain_quench, m)?)?;
    m.add_function(wrap_pyfunction!(chern_numbers, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
