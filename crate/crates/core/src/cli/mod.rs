//! `coldip` command-line driver.
//!
//! Every subcommand reads a TOML config, computes its results in memory and
//! only then writes CSV/JSON files plus `manifest.json` into the output
//! directory. Exit status: 0 success, 1 invalid input, 2 numerical failure.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use num_complex::Complex64;
use serde_json::json;

use crate::bands::{band_structure, chern_numbers, high_symmetry_path, ribbon_spectrum};
use crate::dynamics::{
    eigenmodes, evolve, exact_lindblad, g2_zero, steady_state, DipoleState, DriveSpec, LindbladSystem,
};
use crate::error::{Error, Result};
use crate::geometry::{min_pair_distance, validity_warning, AtomEnsemble};
use crate::kernel::CouplingMatrix;
use crate::transmission::{mirror_scan, spectrum_scan};
use crate::waveguide::{phase_map, quench_zones_with, ChainPhase};
use config::{section, InitialState, RunConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "COLDIP_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "coldip", version, about = "Collective dipole-dipole interaction workflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate an atom ensemble and export its positions.
    Geometry(RunArgs),
    /// Collective eigenmodes of the coupling matrix.
    Eigenmodes(RunArgs),
    /// Time evolution of the dipole amplitudes.
    Evolve(RunArgs),
    /// Weak-drive steady state.
    Steady(RunArgs),
    /// Transmission spectrum with a Lorentzian fit.
    Spectrum(RunArgs),
    /// Resonant transmission of square arrays versus spacing.
    Mirror(RunArgs),
    /// Driven chiral-chain diagnostics over a (D, ξ) grid.
    #[command(name = "wg-phase")]
    WgPhase(RunArgs),
    /// Single-excitation quench in a zoned chiral chain.
    #[command(name = "wg-quench")]
    WgQuench(RunArgs),
    /// Lattice band structure along a high-symmetry path.
    Bands(RunArgs),
    /// Chern numbers of the lattice bands.
    Chern(RunArgs),
    /// Ribbon spectrum with localisation measures.
    Ribbon(RunArgs),
    /// Exact master-equation solution for a few atoms.
    Oracle(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Geometry(_) => "geometry",
            Command::Eigenmodes(_) => "eigenmodes",
            Command::Evolve(_) => "evolve",
            Command::Steady(_) => "steady",
            Command::Spectrum(_) => "spectrum",
            Command::Mirror(_) => "mirror",
            Command::WgPhase(_) => "wg-phase",
            Command::WgQuench(_) => "wg-quench",
            Command::Bands(_) => "bands",
            Command::Chern(_) => "chern",
            Command::Ribbon(_) => "ribbon",
            Command::Oracle(_) => "oracle",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Geometry(a)
            | Command::Eigenmodes(a)
            | Command::Evolve(a)
            | Command::Steady(a)
            | Command::Spectrum(a)
            | Command::Mirror(a)
            | Command::WgPhase(a)
            | Command::WgQuench(a)
            | Command::Bands(a)
            | Command::Chern(a)
            | Command::Ribbon(a)
            | Command::Oracle(a) => a,
        }
    }
}

/// A CSV file held in memory.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Full-precision, round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn complex_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = vec![prefix.to_string()];
    for k in 0..n {
        h.push(format!("re_{k}"));
        h.push(format!("im_{k}"));
    }
    h
}

fn complex_row(lead: String, v: &[Complex64]) -> Vec<String> {
    let mut r = vec![lead];
    for z in v {
        r.push(num(z.re));
        r.push(num(z.im));
    }
    r
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<(String, Table)>,
    pub json: Vec<(String, serde_json::Value)>,
    pub warnings: Vec<String>,
}

impl Artifacts {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.to_string(), t));
    }

    fn json(&mut self, name: &str, v: serde_json::Value) {
        self.json.push((name.to_string(), v));
    }

    fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        log::warn!("{w}");
        self.warnings.push(w);
    }

    pub fn get_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn ensemble_of(cfg: &RunConfig) -> Result<AtomEnsemble> {
    section(&cfg.geometry, "geometry")?.build(cfg.seed)
}

fn coupling_of(cfg: &RunConfig, e: &AtomEnsemble, art: &mut Artifacts) -> Result<CouplingMatrix> {
    let c = section(&cfg.coupling, "coupling")?.build(e)?;
    for w in c.warnings() {
        art.warn(w.clone());
    }
    Ok(c)
}

fn drive_of(cfg: &RunConfig, e: &AtomEnsemble) -> Result<DriveSpec> {
    match &cfg.drive {
        Some(d) => d.build(e),
        None => Ok(DriveSpec::none(e.n())),
    }
}

/// Runs one workflow in memory.
pub fn execute(command: &str, cfg: &RunConfig) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match command {
        "geometry" => {
            let e = ensemble_of(cfg)?;
            let mut t = Table::new(["idx", "x", "y", "z"]);
            for (i, p) in e.positions().iter().enumerate() {
                t.push(vec![i.to_string(), num(p[0]), num(p[1]), num(p[2])]);
            }
            art.table("positions.csv", t);
            if let Some(w) = validity_warning(&e) {
                art.warn(w);
            }
            let dmin = if e.n() >= 2 { Some(min_pair_distance(&e)?) } else { None };
            art.json(
                "geometry.json",
                json!({ "n": e.n(), "generator": e.info(), "min_pair_distance": dmin }),
            );
        }
        "eigenmodes" => {
            let e = ensemble_of(cfg)?;
            let c = coupling_of(cfg, &e, &mut art)?;
            let m = eigenmodes(&c)?;
            let mut t = Table::new(["mode", "rate", "shift", "re_lambda", "im_lambda"]);
            let mut v = Table::new(complex_header("mode", e.n()));
            for k in 0..m.len() {
                t.push(vec![
                    k.to_string(),
                    num(m.rates[k]),
                    num(m.shifts[k]),
                    num(m.eigenvalues[k].re),
                    num(m.eigenvalues[k].im),
                ]);
                v.push(complex_row(k.to_string(), &m.mode(k).to_vec()));
            }
            art.table("eigenmodes.csv", t);
            art.table("eigenvectors.csv", v);
            let total: f64 = m.rates.iter().sum();
            art.json("eigenmodes.json", json!({ "n": e.n(), "rate_sum": total }));
        }
        "evolve" => {
            let e = ensemble_of(cfg)?;
            let c = coupling_of(cfg, &e, &mut art)?;
            let d = drive_of(cfg, &e)?;
            let ev = section(&cfg.evolve, "evolve")?;
            let times = ev.times.values()?;
            let b0 = match ev.initial {
                InitialState::Ground => DipoleState::new(Array1::zeros(e.n()), 0.0),
                InitialState::Site { site } => DipoleState::single_excitation(e.n(), site)?,
                InitialState::Mode { index } => {
                    let m = eigenmodes(&c)?;
                    if index >= m.len() {
                        return Err(Error::invalid(format!("mode {index} out of range")));
                    }
                    let v = m.mode(index);
                    let norm = crate::linalg::vec_norm(&v);
                    DipoleState::new(v.mapv(|z| z / norm), 0.0)
                }
            };
            let traj = evolve(&c, &d, &b0, &times)?;
            let mut t = Table::new(complex_header("time", e.n()));
            for s in &traj {
                t.push(complex_row(num(s.time), &s.b.to_vec()));
            }
            art.table("trajectory.csv", t);
        }
        "steady" => {
            let e = ensemble_of(cfg)?;
            let c = coupling_of(cfg, &e, &mut art)?;
            let d = drive_of(cfg, &e)?;
            let s = steady_state(&c, &d)?;
            let mut t = Table::new(["atom", "re", "im", "population"]);
            for (k, z) in s.b.iter().enumerate() {
                t.push(vec![k.to_string(), num(z.re), num(z.im), num(z.norm_sqr())]);
            }
            art.table("steady.csv", t);
        }
        "spectrum" => {
            let e = ensemble_of(cfg)?;
            let c = coupling_of(cfg, &e, &mut art)?;
            let sc = section(&cfg.spectrum, "spectrum")?;
            let det = sc.detunings.values()?;
            let scan = spectrum_scan(&e, &c, &sc.probe, sc.rabi, &det)?;
            let mut t = Table::new(["detuning", "re_T", "im_T", "abs2_T", "od"]);
            for p in &scan.points {
                t.push(vec![num(p.detuning), num(p.t.re), num(p.t.im), num(p.abs2()), num(p.od)]);
            }
            art.table("spectrum.csv", t);
            if let Some(err) = &scan.fit_error {
                art.warn(format!("Lorentzian fit failed: {err}"));
            }
            art.json("fit.json", json!({ "fit": scan.fit, "fit_error": scan.fit_error }));
        }
        "mirror" => {
            let mc = section(&cfg.mirror, "mirror")?;
            let spacings = mc.spacing_over_lambda.values()?;
            let waist = mc.waist_over_lambda * 2.0 * std::f64::consts::PI;
            let scan = mirror_scan(mc.side, &spacings, waist)?;
            let mut t = Table::new(["spacing_over_lambda", "re_T", "im_T", "abs2_T", "od"]);
            for (a, p) in scan.spacings_over_lambda.iter().zip(&scan.points) {
                t.push(vec![num(*a), num(p.t.re), num(p.t.im), num(p.abs2()), num(p.od)]);
            }
            art.table("mirror.csv", t);
            art.json(
                "minima.json",
                json!({ "side": mc.side, "waist_over_lambda": mc.waist_over_lambda, "minima_over_lambda": scan.minima }),
            );
        }
        "wg-phase" => {
            let wc = section(&cfg.wg_phase, "wg_phase")?;
            let cells = phase_map(
                wc.n,
                &wc.d_values.values()?,
                &wc.xi_over_pi.values()?,
                wc.gamma_1d,
                wc.gamma_ng,
                wc.rabi,
                wc.input,
            )?;
            let mut t = Table::new(["D", "xi_over_pi", "fourier_peak", "contrast", "edge_fraction", "singular_flag"]);
            let mut p = Table::new(["D", "xi_over_pi", "site", "population"]);
            for cell in &cells {
                match &cell.phase {
                    ChainPhase::Regular(d) => {
                        t.push(vec![
                            num(cell.d_factor),
                            num(cell.xi_over_pi),
                            num(d.fourier_peak.frequency),
                            num(d.fourier_peak.contrast),
                            num(d.edge_fraction),
                            "0".into(),
                        ]);
                        for (s, v) in d.profile.iter().enumerate() {
                            p.push(vec![num(cell.d_factor), num(cell.xi_over_pi), s.to_string(), num(*v)]);
                        }
                    }
                    ChainPhase::Critical { eigenvalue, .. } => {
                        art.warn(format!(
                            "critical regime at D = {}, xi/pi = {}: undamped resonant mode {eigenvalue}",
                            cell.d_factor, cell.xi_over_pi
                        ));
                        t.push(vec![
                            num(cell.d_factor),
                            num(cell.xi_over_pi),
                            "NaN".into(),
                            "NaN".into(),
                            "NaN".into(),
                            "1".into(),
                        ]);
                    }
                }
            }
            art.table("phase_map.csv", t);
            art.table("profiles.csv", p);
        }
        "wg-quench" => {
            let qc = section(&cfg.wg_quench, "wg_quench")?;
            let times = qc.times.values()?;
            let r = quench_zones_with(&qc.zones, qc.boundary, qc.initial_site, &times, &qc.spec()?)?;
            let mut header = vec!["time".to_string()];
            header.extend((1..=qc.zones.len()).map(|k| format!("zone{k}")));
            header.push("total".into());
            let mut t = Table::new(header);
            let mut ret = Table::new(["time", "retention"]);
            for (k, time) in r.times.iter().enumerate() {
                let mut row = vec![num(*time)];
                row.extend(r.zone_populations[k].iter().map(|v| num(*v)));
                row.push(num(r.total[k]));
                t.push(row);
                ret.push(vec![num(*time), num(r.retention[k])]);
            }
            let mut prof = Table::new(["site", "population"]);
            for (s, v) in r.final_profile.iter().enumerate() {
                prof.push(vec![s.to_string(), num(*v)]);
            }
            art.table("quench.csv", t);
            art.table("retention.csv", ret);
            art.table("final_profile.csv", prof);
        }
        "bands" => {
            let bc = section(&cfg.bands, "bands")?;
            let spec = bc.lattice.spec()?;
            if bc.points_per_segment == 0 {
                return Err(Error::invalid("points_per_segment must be > 0"));
            }
            let path = high_symmetry_path(&spec, bc.points_per_segment);
            let bs = band_structure(&spec, &path, bc.lattice.r_cut()?)?;
            for w in &bs.warnings {
                art.warn(w.clone());
            }
            let mut t = Table::new(["kx", "ky", "band", "shift", "decay", "in_light_cone"]);
            for (i, k) in bs.k_path.iter().enumerate() {
                for b in 0..bs.eigenvalues[i].len() {
                    t.push(vec![
                        num(k[0]),
                        num(k[1]),
                        b.to_string(),
                        num(bs.shift(i, b)),
                        num(bs.decay(i, b)),
                        (bs.in_light_cone[i] as u8).to_string(),
                    ]);
                }
            }
            art.table("bands.csv", t);
            art.json(
                "bands.json",
                json!({ "spec": spec, "tail_bound": bs.tail_bound, "symmetry_points": spec.symmetry_points() }),
            );
        }
        "chern" => {
            let cc = section(&cfg.chern, "chern")?;
            let spec = cc.lattice.spec()?;
            let r = chern_numbers(&spec, cc.grid, cc.lattice.r_cut()?)?;
            art.json("chern.json", serde_json::to_value(&r)?);
        }
        "ribbon" => {
            let rc = section(&cfg.ribbon, "ribbon")?;
            let spec = rc.lattice.spec()?;
            let r_cut = rc.lattice.r_cut()?;
            let mut t = Table::new(["k_par", "mode", "re", "im", "com", "ipr"]);
            let mut summary = Vec::new();
            for kq in rc.k_par_over_pi_a.values()? {
                let k_par = kq * std::f64::consts::PI / spec.a;
                let s = ribbon_spectrum(&spec, rc.width, k_par, r_cut, rc.levels)?;
                for (m, mode) in s.modes.iter().enumerate() {
                    t.push(vec![
                        num(k_par),
                        m.to_string(),
                        num(mode.eigenvalue.re),
                        num(mode.eigenvalue.im),
                        num(mode.com),
                        num(mode.ipr),
                    ]);
                }
                summary.push(json!({ "k_par": k_par, "mean_com": s.mean_com() }));
            }
            art.table("ribbon.csv", t);
            art.json("ribbon.json", json!({ "width": rc.width, "spec": spec, "k_points": summary }));
        }
        "oracle" => {
            let e = ensemble_of(cfg)?;
            let c = coupling_of(cfg, &e, &mut art)?;
            let d = drive_of(cfg, &e)?;
            let oc = section(&cfg.oracle, "oracle")?;
            let times = oc.times.values()?;
            let obs = exact_lindblad(&e, &c, &d, &times)?;
            let mut header = vec!["time".to_string(), "trace".to_string()];
            for k in 0..e.n() {
                header.extend([format!("re_{k}"), format!("im_{k}"), format!("pop_{k}")]);
            }
            let mut t = Table::new(header);
            for o in &obs {
                let mut row = vec![num(o.time), num(o.trace)];
                for k in 0..e.n() {
                    row.extend([num(o.sigma[k].re), num(o.sigma[k].im), num(o.populations[k])]);
                }
                t.push(row);
            }
            art.table("oracle.csv", t);
            let mut summary = json!({ "n": e.n() });
            if oc.steady || oc.detection.is_some() {
                let sys = LindbladSystem::new(&c, &d)?;
                let rho = sys.steady_state()?;
                let exact = sys.observables(&rho, f64::INFINITY);
                let dipole = steady_state(&c, &d)?;
                let mut s = Table::new(["atom", "re_exact", "im_exact", "pop_exact", "re_dipole", "im_dipole"]);
                for k in 0..e.n() {
                    s.push(vec![
                        k.to_string(),
                        num(exact.sigma[k].re),
                        num(exact.sigma[k].im),
                        num(exact.populations[k]),
                        num(dipole.b[k].re),
                        num(dipole.b[k].im),
                    ]);
                }
                art.table("oracle_steady.csv", s);
                if let Some(cvec) = oc.detection() {
                    let g2 = g2_zero(&rho, &cvec)?;
                    summary["g2_zero"] = if g2.is_finite() { json!(g2) } else { json!("inf") };
                }
            }
            art.json("oracle.json", summary);
        }
        other => return Err(Error::invalid(format!("unknown subcommand `{other}`"))),
    }
    Ok(art)
}

fn resolve_output(args: &RunArgs, cfg: &RunConfig, command: &str) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("coldip-output").join(command))
}

fn write_artifacts(dir: &Path, art: &Artifacts) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (name, t) in &art.tables {
        std::fs::write(dir.join(name), t.to_bytes()?)?;
        names.push(name.clone());
    }
    for (name, v) in &art.json {
        std::fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
        names.push(name.clone());
    }
    Ok(names)
}

fn conventions() -> serde_json::Value {
    json!({
        "units": "rates in single-atom decay rate, lengths in 1/k (lambda = 2 pi)",
        "equation_of_motion": "db/dt = i Delta b - J b + (i Omega0/2) phase",
        "rate": "2 Re(lambda)",
        "shift": "Im(lambda), positive = blue",
        "band_shift": "Re(E), band_decay = -2 Im(E), E = i lambda",
    })
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

/// Runs a parsed command and returns the process exit status.
pub fn run(command: &Command) -> i32 {
    let started = Instant::now();
    let args = command.args();
    let name = command.name();
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let out = resolve_output(args, &cfg, name);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(name, &cfg)) {
        Ok(art) => {
            let mut resolved = cfg.clone();
            resolved.output_dir = Some(out.clone());
            let result = write_artifacts(&out, &art).and_then(|files| {
                let manifest = json!({
                    "tool": "coldip",
                    "version": env!("CARGO_PKG_VERSION"),
                    "subcommand": name,
                    "config": resolved,
                    "conventions": conventions(),
                    "wall_time_s": started.elapsed().as_secs_f64(),
                    "warnings": art.warnings,
                    "outputs": files,
                });
                std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
                Ok(())
            });
            match result {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: writing results: {e}");
                    1
                }
            }
        }
        Err(e) if e.is_numerical() => {
            eprintln!("numerical failure: {e}");
            let diag = json!({
                "subcommand": name,
                "error": e.to_string(),
                "config": cfg,
                "version": env!("CARGO_PKG_VERSION"),
            });
            let write = std::fs::create_dir_all(&out).and_then(|_| {
                std::fs::write(out.join("diagnostic.json"), serde_json::to_string_pretty(&diag).unwrap_or_default())
            });
            if let (Error::EigenFailure { matrix, .. }, Ok(())) = (&e, &write) {
                let mut t = Table::new(complex_header("row", matrix.ncols()));
                for (i, row) in matrix.rows().into_iter().enumerate() {
                    t.push(complex_row(i.to_string(), &row.to_vec()));
                }
                if let Ok(bytes) = t.to_bytes() {
                    let _ = std::fs::write(out.join("diagnostic_matrix.csv"), bytes);
                }
            }
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses `argv` and runs; usage errors exit with 1, `--help`/`--version` with 0.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn single_atom_eigenmodes_table() {
        let c = cfg(r#"
[geometry]
generator = "positions"
positions = [[0.0, 0.0, 0.0]]

[coupling]
model = "free_space"
polarization = { linear = [0.0, 0.0, 1.0] }
"#);
        let art = execute("eigenmodes", &c).unwrap();
        let t = art.get_table("eigenmodes.csv").unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][1], "1.0");
        assert_eq!(t.rows[0][2], "0.0");
    }

    #[test]
    fn missing_section_is_invalid() {
        let err = execute("steady", &RunConfig::default()).unwrap_err();
        assert!(!err.is_numerical());
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["coldip", "frobnicate", "x.toml"]), 1);
        assert_eq!(main_with_args(["coldip", "--help"]), 0);
    }
}
