//! Run configuration: plain-text "key = value" files with '#' comments and
//! one section per module. Unknown keys are errors, never silently ignored.

use std::collections::HashSet;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, CellPotential, LatticeSpec};
use crate::oracles::Dispersion;
use crate::spectral::{Beta, ThermoParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Ness,
    Current,
    Conductivity,
    Bands,
    BlochConductivity,
    Solvable,
    Drude,
    Sweep,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Ness => "ness",
            Command::Current => "current",
            Command::Conductivity => "conductivity",
            Command::Bands => "bands",
            Command::BlochConductivity => "bloch-conductivity",
            Command::Solvable => "solvable",
            Command::Drude => "drude",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Command> {
        Ok(match s {
            "ness" => Command::Ness,
            "current" => Command::Current,
            "conductivity" => Command::Conductivity,
            "bands" => Command::Bands,
            "bloch-conductivity" => Command::BlochConductivity,
            "solvable" => Command::Solvable,
            "drude" => Command::Drude,
            "sweep" => Command::Sweep,
            other => {
                return Err(Error::config(format!(
                    "unknown command '{other}' (expected ness|current|conductivity|bands|\
                     bloch-conductivity|solvable|drude|sweep)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialConfig {
    Zero,
    TableFile(PathBuf),
    Periodic(CellPotential),
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::Zero
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureConfig {
    /// Site coordinates; None means the center of the box.
    pub site: Option<Vec<i64>>,
    pub direction: usize,
    /// Add a finite-difference conductivity column.
    pub fd_check: bool,
    pub fd_step: f64,
    /// Recompute at double the box size and log the change to stderr.
    pub n_check: bool,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            site: None,
            direction: 1,
            fd_check: false,
            fd_step: crate::kubo::DEFAULT_FD_STEP,
            n_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlochConfig {
    pub cell: CellPotential,
    pub k_points: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolvableConfig {
    pub dispersion: Dispersion,
}

impl Default for SolvableConfig {
    fn default() -> Self {
        SolvableConfig {
            dispersion: Dispersion::Cosine { amplitude: 2.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    HalfWidth,
    Field,
    Lambda,
    Beta,
    Mu,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::HalfWidth => "N",
            SweepAxis::Field => "E",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Beta => "beta",
            SweepAxis::Mu => "mu",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "N" => SweepAxis::HalfWidth,
            "E" => SweepAxis::Field,
            "lambda" => SweepAxis::Lambda,
            "beta" => SweepAxis::Beta,
            "mu" => SweepAxis::Mu,
            other => {
                return Err(Error::config(format!(
                    "unknown sweep axis '{other}' (expected N|E|lambda|beta|mu)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub observable: Command,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub lattice: Option<LatticeSpec>,
    pub potential: PotentialConfig,
    pub thermo: Option<ThermoParams>,
    pub measure: MeasureConfig,
    pub bloch: Option<BlochConfig>,
    pub solvable: SolvableConfig,
    pub sweep: Option<SweepConfig>,
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = vec![Section {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config_at(line, "unterminated section header"))?
                .trim()
                .to_string();
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| {
            Error::config_at(line, format!("expected 'key = value', got '{stripped}'"))
        })?;
        sections.last_mut().unwrap().entries.push(Entry {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(sections)
}

/// Typed access to one section's entries with unknown/duplicate detection.
struct SectionReader<'a> {
    name: &'a str,
    entries: &'a [Entry],
    used: HashSet<&'a str>,
}

impl<'a> SectionReader<'a> {
    fn new(section: &'a Section) -> Self {
        SectionReader {
            name: &section.name,
            entries: &section.entries,
            used: HashSet::new(),
        }
    }

    fn get(&mut self, key: &'static str) -> Result<Option<&'a Entry>> {
        let hits: Vec<&Entry> = self.entries.iter().filter(|e| e.key == key).collect();
        if hits.len() > 1 {
            return Err(Error::config_at(
                hits[1].line,
                format!("duplicate key '{key}'"),
            ));
        }
        self.used.insert(key);
        Ok(hits.first().copied())
    }

    fn require(&mut self, key: &'static str) -> Result<&'a Entry> {
        let section = if self.name.is_empty() {
            String::new()
        } else {
            format!(" in section [{}]", self.name)
        };
        self.get(key)?
            .ok_or_else(|| Error::config(format!("missing required key '{key}'{section}")))
    }

    fn finish(self) -> Result<()> {
        for e in self.entries {
            if !self.used.contains(e.key.as_str()) {
                return Err(Error::config_at(
                    e.line,
                    format!("unknown key '{}' in section [{}]", e.key, self.name),
                ));
            }
        }
        Ok(())
    }
}

fn parse_f64(e: &Entry) -> Result<f64> {
    e.value
        .parse::<f64>()
        .map_err(|err| Error::config_at(e.line, format!("bad number '{}': {err}", e.value)))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::config_at(e.line, "value must be finite"))
            }
        })
}

fn parse_usize(e: &Entry) -> Result<usize> {
    e.value
        .parse::<usize>()
        .map_err(|err| Error::config_at(e.line, format!("bad integer '{}': {err}", e.value)))
}

fn parse_i64(e: &Entry) -> Result<i64> {
    e.value
        .parse::<i64>()
        .map_err(|err| Error::config_at(e.line, format!("bad integer '{}': {err}", e.value)))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::config_at(
            e.line,
            format!("bad boolean '{other}' (expected true|false)"),
        )),
    }
}

fn parse_beta(e: &Entry) -> Result<Beta> {
    if e.value == "inf" || e.value == "infinity" {
        return Ok(Beta::INFINITE);
    }
    let v = parse_f64(e)?;
    Beta::new(v).map_err(|err| Error::config_at(e.line, err))
}

fn parse_list<T, F: Fn(&str) -> std::result::Result<T, String>>(
    e: &Entry,
    convert: F,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for tok in e.value.split_whitespace() {
        out.push(convert(tok).map_err(|m| Error::config_at(e.line, m))?);
    }
    if out.is_empty() {
        return Err(Error::config_at(e.line, "expected a nonempty list"));
    }
    Ok(out)
}

/// Parses a run configuration from text. Unknown sections, unknown keys and
/// duplicates are errors with line diagnostics.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = split_sections(text)?;

    let mut command = None;
    let mut lattice = None;
    let mut potential = PotentialConfig::default();
    let mut thermo = None;
    let mut measure = MeasureConfig::default();
    let mut bloch = None;
    let mut solvable = SolvableConfig::default();
    let mut sweep = None;
    let mut seen: HashSet<String> = HashSet::new();

    for section in &sections {
        if !section.name.is_empty() && !seen.insert(section.name.clone()) {
            return Err(Error::config_at(
                section.line,
                format!("duplicate section [{}]", section.name),
            ));
        }
        let mut r = SectionReader::new(section);
        match section.name.as_str() {
            "" => {
                if let Some(e) = r.get("command")? {
                    command = Some(Command::parse(&e.value)?);
                }
            }
            "lattice" => {
                let dimension = r.get("dimension")?.map(parse_usize).transpose()?.unwrap_or(1);
                let half_width = parse_i64(r.require("half_width")?)?;
                let boundary = match r.get("boundary")? {
                    None => Boundary::Open,
                    Some(e) => match e.value.as_str() {
                        "open" => Boundary::Open,
                        "torus" => Boundary::Torus,
                        other => {
                            return Err(Error::config_at(
                                e.line,
                                format!("bad boundary '{other}' (expected open|torus)"),
                            ))
                        }
                    },
                };
                lattice = Some(
                    LatticeSpec::new(dimension, half_width, boundary)
                        .map_err(|e| Error::config(e.to_string()))?,
                );
            }
            "potential" => {
                let variant = r.require("variant")?;
                potential = match variant.value.as_str() {
                    "zero" => PotentialConfig::Zero,
                    "table" => {
                        let path = r.require("table_file")?;
                        PotentialConfig::TableFile(PathBuf::from(&path.value))
                    }
                    "periodic" => {
                        let periods = parse_list(r.require("periods")?, |t| {
                            t.parse::<usize>().map_err(|e| e.to_string())
                        })?;
                        let values = parse_list(r.require("cell_values")?, |t| {
                            t.parse::<f64>().map_err(|e| e.to_string())
                        })?;
                        PotentialConfig::Periodic(
                            CellPotential::new(periods, values)
                                .map_err(|e| Error::config(e.to_string()))?,
                        )
                    }
                    other => {
                        return Err(Error::config_at(
                            variant.line,
                            format!("bad variant '{other}' (expected zero|table|periodic)"),
                        ))
                    }
                };
            }
            "thermo" => {
                let beta = parse_beta(r.require("beta")?)?;
                let mu = r.get("mu")?.map(parse_f64).transpose()?.unwrap_or(0.0);
                let lambda_entry = r.require("lambda")?;
                let lambda = parse_f64(lambda_entry)?;
                let field = r.get("field")?.map(parse_f64).transpose()?.unwrap_or(0.0);
                thermo = Some(
                    ThermoParams::new(beta, mu, lambda, field)
                        .map_err(|e| Error::config_at(lambda_entry.line, e))?,
                );
            }
            "measure" => {
                if let Some(e) = r.get("site")? {
                    measure.site = Some(parse_list(e, |t| {
                        t.parse::<i64>().map_err(|e| e.to_string())
                    })?);
                }
                if let Some(e) = r.get("direction")? {
                    measure.direction = parse_usize(e)?;
                }
                if let Some(e) = r.get("fd_check")? {
                    measure.fd_check = parse_bool(e)?;
                }
                if let Some(e) = r.get("fd_step")? {
                    measure.fd_step = parse_f64(e)?;
                    if measure.fd_step == 0.0 {
                        return Err(Error::config_at(e.line, "fd_step must be nonzero"));
                    }
                }
                if let Some(e) = r.get("n_check")? {
                    measure.n_check = parse_bool(e)?;
                }
            }
            "bloch" => {
                let periods = parse_list(r.require("periods")?, |t| {
                    t.parse::<usize>().map_err(|e| e.to_string())
                })?;
                let values = parse_list(r.require("cell_values")?, |t| {
                    t.parse::<f64>().map_err(|e| e.to_string())
                })?;
                let cell = CellPotential::new(periods.clone(), values)
                    .map_err(|e| Error::config(e.to_string()))?;
                let k_points = match r.get("k_points")? {
                    Some(e) => {
                        let pts = parse_list(e, |t| t.parse::<usize>().map_err(|e| e.to_string()))?;
                        if pts.len() == 1 {
                            vec![pts[0]; periods.len()]
                        } else {
                            pts
                        }
                    }
                    None => vec![256; periods.len()],
                };
                bloch = Some(BlochConfig { cell, k_points });
            }
            "solvable" => {
                let kind = match r.get("dispersion")? {
                    None => "cosine".to_string(),
                    Some(e) => e.value.clone(),
                };
                let amplitude = r.get("amplitude")?.map(parse_f64).transpose()?.unwrap_or(2.0);
                solvable = SolvableConfig {
                    dispersion: match kind.as_str() {
                        "cosine" => Dispersion::Cosine { amplitude },
                        "quadratic" => Dispersion::Quadratic,
                        other => {
                            return Err(Error::config(format!(
                                "bad dispersion '{other}' (expected cosine|quadratic)"
                            )))
                        }
                    },
                };
            }
            "sweep" => {
                let axis = SweepAxis::parse(&r.require("axis")?.value)?;
                let values_entry = r.require("values")?;
                let values = parse_list(values_entry, |t| {
                    t.parse::<f64>().map_err(|e| e.to_string())
                })?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config_at(
                        values_entry.line,
                        "sweep values must be finite",
                    ));
                }
                let observable = Command::parse(&r.require("observable")?.value)?;
                sweep = Some(SweepConfig {
                    axis,
                    values,
                    observable,
                });
            }
            other => {
                return Err(Error::config_at(
                    section.line,
                    format!("unknown section [{other}]"),
                ));
            }
        }
        r.finish()?;
    }

    let command = command.ok_or_else(|| {
        Error::config(
            "missing required key 'command' (and per-command sections: [lattice]+[thermo] for \
             ness/current/conductivity, [bloch] for bands/bloch-conductivity, [thermo] for \
             solvable/drude, [sweep] for sweep)",
        )
    })?;

    let cfg = RunConfig {
        command,
        lattice,
        potential,
        thermo,
        measure,
        bloch,
        solvable,
        sweep,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Cross-field validation; called by `parse_config` and before `run`.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "command '{}' requires {what}",
                    self.command.as_str()
                )))
            }
        };
        let lattice_command = |cmd: Command| -> Result<()> {
            need(self.lattice.is_some(), "a [lattice] section")?;
            need(self.thermo.is_some(), "a [thermo] section")?;
            let lat = self.lattice.as_ref().unwrap();
            if let Some(site) = &self.measure.site {
                if site.len() != lat.dimension() {
                    return Err(Error::config(format!(
                        "site has {} coordinates, lattice is {}-dimensional",
                        site.len(),
                        lat.dimension()
                    )));
                }
            }
            if self.measure.direction < 1 || self.measure.direction > lat.dimension() {
                return Err(Error::config(format!(
                    "direction {} not in 1..={}",
                    self.measure.direction,
                    lat.dimension()
                )));
            }
            if lat.boundary() == Boundary::Torus {
                match cmd {
                    Command::Ness | Command::Current => {
                        return Err(Error::config(
                            "the uniform field needs the position operator; ness/current \
                             require the open boundary"
                        ));
                    }
                    Command::Conductivity if self.measure.fd_check => {
                        return Err(Error::config(
                            "fd_check drives the field and requires the open boundary",
                        ));
                    }
                    _ => {}
                }
            }
            Ok(())
        };
        match self.command {
            Command::Ness | Command::Current | Command::Conductivity => {
                lattice_command(self.command)?
            }
            Command::Bands => need(self.bloch.is_some(), "a [bloch] section")?,
            Command::BlochConductivity => {
                need(self.bloch.is_some(), "a [bloch] section")?;
                need(self.thermo.is_some(), "a [thermo] section")?;
            }
            Command::Solvable => {
                need(self.thermo.is_some(), "a [thermo] section")?;
                if !self.solvable.dispersion.is_lattice() {
                    return Err(Error::config(
                        "the solvable command needs a periodic (cosine) dispersion",
                    ));
                }
            }
            Command::Drude => need(self.thermo.is_some(), "a [thermo] section")?,
            Command::Sweep => {
                need(self.sweep.is_some(), "a [sweep] section")?;
                let sweep = self.sweep.as_ref().unwrap();
                let inner = RunConfig {
                    command: sweep.observable,
                    sweep: None,
                    ..self.clone()
                };
                match sweep.observable {
                    Command::Current
                    | Command::Conductivity
                    | Command::BlochConductivity
                    | Command::Solvable
                    | Command::Drude => inner.validate()?,
                    other => {
                        return Err(Error::config(format!(
                            "sweep observable must be current|conductivity|bloch-conductivity|\
                             solvable|drude, got '{}'",
                            other.as_str()
                        )))
                    }
                }
                match sweep.axis {
                    SweepAxis::HalfWidth => {
                        if !matches!(sweep.observable, Command::Current | Command::Conductivity) {
                            return Err(Error::config(
                                "axis N applies only to lattice observables",
                            ));
                        }
                        for v in &sweep.values {
                            if v.fract() != 0.0 || *v < 1.0 {
                                return Err(Error::config(format!(
                                    "axis N needs positive integer values, got {v}"
                                )));
                            }
                        }
                    }
                    SweepAxis::Field => {
                        if matches!(sweep.observable, Command::Conductivity | Command::BlochConductivity) {
                            return Err(Error::config(
                                "conductivities are zero-field derivatives; axis E does not apply",
                            ));
                        }
                    }
                    SweepAxis::Beta => {
                        for v in &sweep.values {
                            if *v <= 0.0 {
                                return Err(Error::config("axis beta needs positive values"));
                            }
                        }
                    }
                    SweepAxis::Lambda => {
                        for v in &sweep.values {
                            if *v <= 0.0 {
                                return Err(Error::config("axis lambda needs positive values"));
                            }
                        }
                    }
                    SweepAxis::Mu => {}
                }
            }
        }
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Emits the canonical text form; `parse_config(emit_config(cfg))` yields a
/// RunConfig equal to `cfg`.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("command = {}\n", cfg.command.as_str()));
    if let Some(lat) = &cfg.lattice {
        out.push_str("\n[lattice]\n");
        out.push_str(&format!("dimension = {}\n", lat.dimension()));
        out.push_str(&format!("half_width = {}\n", lat.half_width()));
        out.push_str(&format!("boundary = {}\n", lat.boundary().as_str()));
    }
    match &cfg.potential {
        PotentialConfig::Zero => {}
        PotentialConfig::TableFile(path) => {
            out.push_str("\n[potential]\nvariant = table\n");
            out.push_str(&format!("table_file = {}\n", path.display()));
        }
        PotentialConfig::Periodic(cell) => {
            out.push_str("\n[potential]\nvariant = periodic\n");
            out.push_str(&format!(
                "periods = {}\n",
                cell.periods()
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
            out.push_str(&format!(
                "cell_values = {}\n",
                cell.values()
                    .iter()
                    .map(|v| fmt_f64(*v))
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
    }
    if let Some(t) = &cfg.thermo {
        out.push_str("\n[thermo]\n");
        if t.beta.is_infinite() {
            out.push_str("beta = inf\n");
        } else {
            out.push_str(&format!("beta = {}\n", fmt_f64(t.beta.value())));
        }
        out.push_str(&format!("mu = {}\n", fmt_f64(t.mu)));
        out.push_str(&format!("lambda = {}\n", fmt_f64(t.lambda())));
        out.push_str(&format!("field = {}\n", fmt_f64(t.field)));
    }
    out.push_str("\n[measure]\n");
    if let Some(site) = &cfg.measure.site {
        out.push_str(&format!(
            "site = {}\n",
            site.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    out.push_str(&format!("direction = {}\n", cfg.measure.direction));
    out.push_str(&format!("fd_check = {}\n", cfg.measure.fd_check));
    out.push_str(&format!("fd_step = {}\n", fmt_f64(cfg.measure.fd_step)));
    out.push_str(&format!("n_check = {}\n", cfg.measure.n_check));
    if let Some(b) = &cfg.bloch {
        out.push_str("\n[bloch]\n");
        out.push_str(&format!(
            "periods = {}\n",
            b.cell
                .periods()
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!(
            "cell_values = {}\n",
            b.cell
                .values()
                .iter()
                .map(|v| fmt_f64(*v))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!(
            "k_points = {}\n",
            b.k_points
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    out.push_str("\n[solvable]\n");
    match cfg.solvable.dispersion {
        Dispersion::Cosine { amplitude } => {
            out.push_str("dispersion = cosine\n");
            out.push_str(&format!("amplitude = {}\n", fmt_f64(amplitude)));
        }
        Dispersion::Quadratic => out.push_str("dispersion = quadratic\n"),
    }
    if let Some(s) = &cfg.sweep {
        out.push_str("\n[sweep]\n");
        out.push_str(&format!("axis = {}\n", s.axis.as_str()));
        out.push_str(&format!(
            "values = {}\n",
            s.values
                .iter()
                .map(|v| fmt_f64(*v))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!("observable = {}\n", s.observable.as_str()));
    }
    out
}
