//! Executes a parsed run configuration and writes machine-readable rows:
//! CSV (default) or JSON, one row per parameter point, all inputs echoed so
//! sweeps are joinable without side files. Floats are printed with 17
//! significant digits, so identical configs produce byte-identical output.

use std::io::Write;

use rayon::prelude::*;

use crate::bloch::{
    band_rows, band_structure, conductivity_bloch_leading, conductivity_bloch_parts, gap_check,
    GapCheck, PeriodicProblem,
};
use crate::config::{Command, PotentialConfig, RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::kubo::{conductivity_finite_difference, conductivity_sites_from_ops};
use crate::lattice::{
    build_hamiltonian, build_position, position_commutator, velocity_operator, Boundary,
    LatticeSpec, PotentialSpec,
};
use crate::ness::{site_current, CovarianceState};
use crate::oracles::{continuum_density, drude_current, solvable_conductivity, solvable_current};
use crate::spectral::{eig_hermitian, matrix_function, Beta, ThermoParams};

/// One output cell; floats are formatted with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

pub type Row = Vec<(String, Value)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => fmt_float(*f),
        Value::Text(t) => t.clone(),
    }
}

fn json_cell(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => {
            if f.is_finite() {
                fmt_float(*f)
            } else {
                format!("\"{f}\"")
            }
        }
        Value::Text(t) => format!("\"{}\"", t.replace('\\', "\\\\").replace('"', "\\\"")),
    }
}

/// Writes rows in the requested format; all rows must share one schema.
pub fn write_rows<W: Write>(rows: &[Row], format: OutputFormat, out: &mut W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            if let Some(first) = rows.first() {
                let header: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
                writeln!(out, "{}", header.join(","))?;
                for row in rows {
                    debug_assert!(row.iter().map(|(k, _)| k).eq(first.iter().map(|(k, _)| k)));
                    let cells: Vec<String> = row.iter().map(|(_, v)| csv_cell(v)).collect();
                    writeln!(out, "{}", cells.join(","))?;
                }
            }
        }
        OutputFormat::Json => {
            writeln!(out, "[")?;
            for (i, row) in rows.iter().enumerate() {
                let fields: Vec<String> = row
                    .iter()
                    .map(|(k, v)| format!("\"{}\": {}", k, json_cell(v)))
                    .collect();
                let comma = if i + 1 < rows.len() { "," } else { "" };
                writeln!(out, "  {{{}}}{comma}", fields.join(", "))?;
            }
            writeln!(out, "]")?;
        }
    }
    Ok(())
}

fn beta_text(beta: Beta) -> String {
    if beta.is_infinite() {
        "inf".into()
    } else {
        fmt_float(beta.value())
    }
}

fn potential_text(p: &PotentialConfig) -> String {
    match p {
        PotentialConfig::Zero => "zero".into(),
        PotentialConfig::TableFile(path) => format!("table:{}", path.display()),
        PotentialConfig::Periodic(cell) => format!(
            "periodic:p={};v={}",
            cell.periods()
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            cell.values()
                .iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

fn resolve_potential(cfg: &RunConfig, lattice: &LatticeSpec) -> Result<PotentialSpec> {
    Ok(match &cfg.potential {
        PotentialConfig::Zero => PotentialSpec::Zero,
        PotentialConfig::TableFile(path) => {
            PotentialSpec::load_table_file(path, lattice.dimension())?
        }
        PotentialConfig::Periodic(cell) => {
            if cell.dimension() != lattice.dimension() {
                return Err(Error::config(format!(
                    "periodic potential is {}-dimensional, lattice is {}-dimensional",
                    cell.dimension(),
                    lattice.dimension()
                )));
            }
            PotentialSpec::Periodic(cell.clone())
        }
    })
}

fn measure_site(cfg: &RunConfig, lattice: &LatticeSpec) -> Vec<i64> {
    cfg.measure
        .site
        .clone()
        .unwrap_or_else(|| lattice.center_site())
}

fn thermo_echo(row: &mut Row, t: &ThermoParams) {
    row.push(("beta".into(), Value::Text(beta_text(t.beta))));
    row.push(("mu".into(), Value::Float(t.mu)));
    row.push(("lambda".into(), Value::Float(t.lambda())));
    row.push(("field".into(), Value::Float(t.field)));
}

fn lattice_echo(cfg: &RunConfig, row: &mut Row, lattice: &LatticeSpec) {
    row.push(("dimension".into(), Value::Int(lattice.dimension() as i64)));
    row.push(("half_width".into(), Value::Int(lattice.half_width())));
    row.push((
        "boundary".into(),
        Value::Text(lattice.boundary().as_str().into()),
    ));
    row.push((
        "potential".into(),
        Value::Text(potential_text(&cfg.potential)),
    ));
}

fn site_echo(row: &mut Row, site: &[i64], direction: usize) {
    row.push((
        "site".into(),
        Value::Text(
            site.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ));
    row.push(("direction".into(), Value::Int(direction as i64)));
}

struct LatticeRun {
    lattice: LatticeSpec,
    potential: PotentialSpec,
    thermo: ThermoParams,
    site: Vec<i64>,
}

fn lattice_run(cfg: &RunConfig) -> Result<LatticeRun> {
    let lattice = cfg.lattice.clone().expect("validated");
    let potential = resolve_potential(cfg, &lattice)?;
    let thermo = cfg.thermo.expect("validated");
    let site = measure_site(cfg, &lattice);
    Ok(LatticeRun {
        lattice,
        potential,
        thermo,
        site,
    })
}

fn log_covariance(state: &CovarianceState) {
    let (lo, hi) = state.spectral_bounds();
    eprintln!("covariance spectrum in [{lo:.3e}, {hi:.10}] (required within [0, 1])");
}

/// NESS covariance with stderr diagnostics; shared by ness/current rows.
fn solve_ness(run: &LatticeRun) -> Result<CovarianceState> {
    let state = crate::ness::steady_state(&run.lattice, &run.potential, &run.thermo)?;
    log_covariance(&state);
    Ok(state)
}

fn row_ness(cfg: &RunConfig) -> Result<Row> {
    let run = lattice_run(cfg)?;
    let state = solve_ness(&run)?;
    let idx = run.lattice.site_index(&run.site)?;
    let j = site_current(&state, &run.lattice, &run.site, cfg.measure.direction)?;
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("ness".into())));
    lattice_echo(cfg, &mut row, &run.lattice);
    thermo_echo(&mut row, &run.thermo);
    site_echo(&mut row, &run.site, cfg.measure.direction);
    row.push(("density".into(), Value::Float(state.density(idx))));
    row.push(("j".into(), Value::Float(j)));
    Ok(row)
}

fn current_value(run: &LatticeRun, direction: usize) -> Result<f64> {
    let state = solve_ness(run)?;
    site_current(&state, &run.lattice, &run.site, direction)
}

fn row_current(cfg: &RunConfig) -> Result<Row> {
    let run = lattice_run(cfg)?;
    let j = current_value(&run, cfg.measure.direction)?;
    if cfg.measure.n_check {
        n_convergence_check(cfg, &run, j, "j")?;
    }
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("current".into())));
    lattice_echo(cfg, &mut row, &run.lattice);
    thermo_echo(&mut row, &run.thermo);
    site_echo(&mut row, &run.site, cfg.measure.direction);
    row.push(("j".into(), Value::Float(j)));
    Ok(row)
}

/// Resolvent-sum conductivity; on the torus the commutator with the
/// position is realized through minimal-image displacement weights.
fn conductivity_value(run: &LatticeRun, direction: usize) -> Result<f64> {
    let h = build_hamiltonian(&run.lattice, &run.potential)?;
    let h_decomp = eig_hermitian(&h)?;
    let f = matrix_function(&h_decomp, |e| run.thermo.occupation(e));
    let (a, v) = match run.lattice.boundary() {
        Boundary::Open => {
            let q = build_position(&run.lattice, direction)?;
            (
                crate::spectral::commutator_i(&q, &f)?,
                crate::lattice::build_velocity(&h, &q)?,
            )
        }
        Boundary::Torus => (
            position_commutator(&f, &run.lattice, direction)?,
            velocity_operator(&h, &run.lattice, direction)?,
        ),
    };
    let idx = run.lattice.site_index(&run.site)?;
    let sigma =
        conductivity_sites_from_ops(&h_decomp, &a, &v, run.thermo.lambda(), &[idx])?[0];
    if sigma < 0.0 {
        eprintln!("note: negative conductivity {sigma:.3e} at site {:?}", run.site);
    }
    Ok(sigma)
}

fn n_convergence_check(cfg: &RunConfig, run: &LatticeRun, value: f64, label: &str) -> Result<()> {
    let double = LatticeSpec::new(
        run.lattice.dimension(),
        2 * run.lattice.half_width(),
        run.lattice.boundary(),
    )?;
    if double.site_count() > 4000 {
        eprintln!(
            "n_check: skipped (doubled box has {} sites, beyond the dense-solver budget)",
            double.site_count()
        );
        return Ok(());
    }
    if matches!(cfg.potential, PotentialConfig::TableFile(_)) {
        eprintln!("n_check: skipped (table potentials do not extend beyond the box)");
        return Ok(());
    }
    let big = LatticeRun {
        lattice: double.clone(),
        potential: run.potential.clone(),
        thermo: run.thermo,
        site: run.site.clone(),
    };
    let value2 = match cfg.command {
        Command::Current => current_value(&big, cfg.measure.direction)?,
        _ => conductivity_value(&big, cfg.measure.direction)?,
    };
    let rel = (value2 - value).abs() / value.abs().max(1e-300);
    eprintln!(
        "n_check: {label}(N={}) = {value:.10e}, {label}(N={}) = {value2:.10e}, relative change {rel:.3e}",
        run.lattice.half_width(),
        double.half_width()
    );
    Ok(())
}

fn row_conductivity(cfg: &RunConfig) -> Result<Row> {
    let run = lattice_run(cfg)?;
    let sigma = conductivity_value(&run, cfg.measure.direction)?;
    if cfg.measure.n_check {
        n_convergence_check(cfg, &run, sigma, "sigma")?;
    }
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("conductivity".into())));
    lattice_echo(cfg, &mut row, &run.lattice);
    thermo_echo(&mut row, &run.thermo);
    site_echo(&mut row, &run.site, cfg.measure.direction);
    row.push(("sigma".into(), Value::Float(sigma)));
    if cfg.measure.fd_check {
        let fd = conductivity_finite_difference(
            &run.lattice,
            &run.potential,
            &run.thermo,
            &run.site,
            cfg.measure.direction,
            cfg.measure.fd_step,
        )?;
        eprintln!(
            "fd_check: resolvent {sigma:.10e} vs centered difference {fd:.10e} (step {:.1e})",
            cfg.measure.fd_step
        );
        row.push(("sigma_fd".into(), Value::Float(fd)));
        row.push(("fd_step".into(), Value::Float(cfg.measure.fd_step)));
    }
    Ok(row)
}

fn bloch_problem(cfg: &RunConfig) -> Result<PeriodicProblem> {
    let b = cfg.bloch.as_ref().expect("validated");
    PeriodicProblem::new(b.cell.clone(), b.k_points.clone())
}

fn bloch_echo(row: &mut Row, prob: &PeriodicProblem) {
    row.push((
        "periods".into(),
        Value::Text(
            prob.cell()
                .periods()
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ));
    row.push((
        "cell_values".into(),
        Value::Text(
            prob.cell()
                .values()
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ));
    row.push((
        "k_points".into(),
        Value::Text(
            prob.k_grid()
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ));
}

fn rows_bands(cfg: &RunConfig) -> Result<Vec<Row>> {
    let prob = bloch_problem(cfg)?;
    let bands = band_structure(&prob)?;
    eprintln!(
        "band structure: {} bands on {} k-points, nondegeneracy margin {:.6e}",
        bands.n_bands(),
        bands.len(),
        bands.nondegeneracy_margin()
    );
    let mut rows = Vec::new();
    for r in band_rows(&bands, &prob)? {
        let mut row = Row::new();
        for (axis, k) in r.k.iter().enumerate() {
            row.push((format!("k_{}", axis + 1), Value::Float(*k)));
        }
        row.push(("band".into(), Value::Int(r.band as i64)));
        row.push(("energy".into(), Value::Float(r.energy)));
        row.push(("denergy_dk1".into(), Value::Float(r.denergy_dk1)));
        row.push(("d2energy_dk1".into(), Value::Float(r.d2energy_dk1)));
        rows.push(row);
    }
    Ok(rows)
}

fn row_bloch_conductivity(cfg: &RunConfig) -> Result<Row> {
    let prob = bloch_problem(cfg)?;
    let thermo = cfg.thermo.expect("validated");
    let bands = band_structure(&prob)?;
    let parts = conductivity_bloch_parts(&bands, &prob, thermo.beta, thermo.mu, thermo.lambda())?;
    let leading =
        conductivity_bloch_leading(&bands, &prob, thermo.beta, thermo.mu, thermo.lambda())?;
    let gap = gap_check(&bands, thermo.mu);
    eprintln!(
        "bloch: margin {:.6e}, off-diagonal {:.3e} within bound {:.3e}",
        bands.nondegeneracy_margin(),
        parts.off_diagonal,
        parts.off_diagonal_bound
    );
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("bloch-conductivity".into())));
    bloch_echo(&mut row, &prob);
    thermo_echo(&mut row, &thermo);
    row.push(("sigma_exact".into(), Value::Float(parts.total)));
    row.push(("sigma_leading".into(), Value::Float(leading)));
    row.push(("sigma_diagonal".into(), Value::Float(parts.diagonal)));
    row.push(("sigma_offdiag".into(), Value::Float(parts.off_diagonal)));
    row.push((
        "offdiag_bound".into(),
        Value::Float(parts.off_diagonal_bound),
    ));
    row.push((
        "margin".into(),
        Value::Float(bands.nondegeneracy_margin()),
    ));
    match gap {
        GapCheck::Metal { band } => {
            row.push(("phase".into(), Value::Text("metal".into())));
            row.push(("metal_band".into(), Value::Int(band as i64 + 1)));
            row.push(("gap_width".into(), Value::Float(0.0)));
        }
        GapCheck::Insulator { gap_width } => {
            row.push(("phase".into(), Value::Text("insulator".into())));
            row.push(("metal_band".into(), Value::Int(0)));
            row.push(("gap_width".into(), Value::Float(gap_width)));
        }
    }
    Ok(row)
}

fn row_solvable(cfg: &RunConfig) -> Result<Row> {
    let thermo = cfg.thermo.expect("validated");
    let disp = cfg.solvable.dispersion;
    let j = solvable_current(&thermo, &disp)?;
    let sigma = solvable_conductivity(&thermo, &disp)?;
    eprintln!(
        "solvable: s-integrals truncated at e^(-2 lambda s) < 1e-14, band quadrature tol 1e-12"
    );
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("solvable".into())));
    row.push((
        "dispersion".into(),
        Value::Text(match disp {
            crate::oracles::Dispersion::Cosine { amplitude } => format!("cosine:{amplitude:?}"),
            crate::oracles::Dispersion::Quadratic => "quadratic".into(),
        }),
    ));
    thermo_echo(&mut row, &thermo);
    row.push(("j".into(), Value::Float(j)));
    row.push(("sigma".into(), Value::Float(sigma)));
    Ok(row)
}

fn row_drude(cfg: &RunConfig) -> Result<Row> {
    let thermo = cfg.thermo.expect("validated");
    let rho = continuum_density(thermo.beta, thermo.mu);
    let j = drude_current(&thermo);
    let mut row = Row::new();
    row.push(("command".into(), Value::Text("drude".into())));
    thermo_echo(&mut row, &thermo);
    row.push(("rho".into(), Value::Float(rho)));
    row.push(("j".into(), Value::Float(j)));
    Ok(row)
}

fn with_axis_value(cfg: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig> {
    let mut out = cfg.clone();
    match axis {
        SweepAxis::HalfWidth => {
            let lat = cfg.lattice.as_ref().expect("validated");
            out.lattice = Some(LatticeSpec::new(
                lat.dimension(),
                value as i64,
                lat.boundary(),
            )?);
        }
        SweepAxis::Field => {
            let t = cfg.thermo.expect("validated");
            out.thermo = Some(t.with_field(value)?);
        }
        SweepAxis::Lambda => {
            let t = cfg.thermo.expect("validated");
            out.thermo = Some(ThermoParams::new(t.beta, t.mu, value, t.field)?);
        }
        SweepAxis::Beta => {
            let t = cfg.thermo.expect("validated");
            out.thermo = Some(ThermoParams::new(Beta::new(value)?, t.mu, t.lambda(), t.field)?);
        }
        SweepAxis::Mu => {
            let t = cfg.thermo.expect("validated");
            out.thermo = Some(ThermoParams::new(t.beta, value, t.lambda(), t.field)?);
        }
    }
    Ok(out)
}

fn rows_sweep(cfg: &RunConfig) -> Result<Vec<Row>> {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let points: Result<Vec<RunConfig>> = sweep
        .values
        .iter()
        .map(|&v| {
            let mut point = with_axis_value(cfg, sweep.axis, v)?;
            point.command = sweep.observable;
            point.sweep = None;
            Ok(point)
        })
        .collect();
    let points = points?;
    // points are independent; output order follows input order
    let rows: Result<Vec<Row>> = points
        .par_iter()
        .map(|point| match sweep.observable {
            Command::Current => row_current(point),
            Command::Conductivity => row_conductivity(point),
            Command::BlochConductivity => row_bloch_conductivity(point),
            Command::Solvable => row_solvable(point),
            Command::Drude => row_drude(point),
            _ => unreachable!("validated"),
        })
        .collect();
    rows
}

/// Executes the configuration and returns the output rows.
pub fn execute(cfg: &RunConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    match cfg.command {
        Command::Ness => Ok(vec![row_ness(cfg)?]),
        Command::Current => Ok(vec![row_current(cfg)?]),
        Command::Conductivity => Ok(vec![row_conductivity(cfg)?]),
        Command::Bands => rows_bands(cfg),
        Command::BlochConductivity => Ok(vec![row_bloch_conductivity(cfg)?]),
        Command::Solvable => Ok(vec![row_solvable(cfg)?]),
        Command::Drude => Ok(vec![row_drude(cfg)?]),
        Command::Sweep => rows_sweep(cfg),
    }
}

/// Executes and writes to `out` in the requested format.
pub fn run<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<()> {
    let rows = execute(cfg)?;
    write_rows(&rows, format, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn conductivity_row_matches_direct_value() {
        let cfg = parse_config(
            "command = conductivity\n[lattice]\nhalf_width = 20\n[thermo]\nbeta = 5\nlambda = 0.5\n",
        )
        .unwrap();
        let rows = execute(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let sigma = rows[0]
            .iter()
            .find(|(k, _)| k == "sigma")
            .map(|(_, v)| match v {
                Value::Float(f) => *f,
                _ => panic!("sigma should be a float"),
            })
            .unwrap();
        assert!(sigma > 0.0);
    }

    #[test]
    fn sweep_rows_preserve_order() {
        let cfg = parse_config(
            "command = sweep\n[thermo]\nbeta = inf\nmu = 1.0\nlambda = 0.5\nfield = 0.01\n\
             [sweep]\naxis = lambda\nvalues = 0.4 0.2 0.1\nobservable = drude\n",
        )
        .unwrap();
        let rows = execute(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        let lambdas: Vec<f64> = rows
            .iter()
            .map(|r| match r.iter().find(|(k, _)| k == "lambda").unwrap().1 {
                Value::Float(f) => f,
                _ => panic!(),
            })
            .collect();
        assert_eq!(lambdas, vec![0.4, 0.2, 0.1]);
    }

    #[test]
    fn csv_output_is_deterministic() {
        let cfg = parse_config(
            "command = drude\n[thermo]\nbeta = inf\nmu = 1.0\nlambda = 0.5\nfield = 0.01\n",
        )
        .unwrap();
        let mut a = Vec::new();
        run(&cfg, OutputFormat::Csv, &mut a).unwrap();
        let mut b = Vec::new();
        run(&cfg, OutputFormat::Csv, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("command,beta,mu,lambda,field,rho,j\n"), "{text}");
    }

    #[test]
    fn json_output_parses_shape() {
        let cfg = parse_config(
            "command = solvable\n[thermo]\nbeta = 10\nlambda = 0.5\nfield = 0.1\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        run(&cfg, OutputFormat::Json, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.trim_start().starts_with('['));
        assert!(text.contains("\"sigma\""));
        assert!(text.trim_end().ends_with(']'));
    }
}
