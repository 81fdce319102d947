//! INI-style run configuration.
//!
//! ```text
//! experiment = heat
//!
//! [grid]
//! dims = 1
//! cells = 256
//! lo = 0
//! hi = 1
//! boundary = periodic
//!
//! [model]
//! internal = linear
//! potential = zero
//! kernel = exponential amplitude=1 range=0.1
//! initial = gaussian center=0.5 width=0.1
//!
//! [time]
//! t_end = 0.05
//! dt = 1e-4
//! ```
//!
//! Systems replace the species keys of `[model]` by `[species.1]`,
//! `[species.2]`, ... and give kernels in `[coupling]` as `w12 = ...`
//! (the kernel through which species 2 acts on species 1).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::energetics::{
    InternalEnergySpec, KernelSpec, MobilitySpec, PotentialSpec, SpeciesSpec, SystemSpec,
};
use crate::mesh::{Boundary, Grid};
use crate::solver::{SolverConfig, TimeIntegrator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    General(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    Uniform,
    Gaussian { center: [f64; 2], width: f64 },
    /// Equal-mass `1 - (x-c)²/w²` caps (porous-medium shaped) at the given
    /// first-coordinate centres, on the second axis centred.
    Bumps { centers: Vec<f64>, width: f64 },
    /// Porous-medium self-similar profile at time `t0`, centred at 0.
    Barenblatt { t0: f64 },
    Disk { center: [f64; 2], radius: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesConfig {
    pub spec: SpeciesSpec,
    pub initial: InitialDatum,
    /// Relative amplitude of multiplicative uniform noise on the datum.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSettings {
    pub t_end: f64,
    /// `None` selects the adaptive step.
    pub dt: Option<f64>,
    pub solver: SolverConfig,
    /// Stop early once any density exceeds this value.
    pub stop_max_density: Option<f64>,
    /// Stop early once the free energy drops below this value.
    pub stop_energy_below: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Snapshot every this many steps; 0 writes only the first and last.
    pub snapshot_stride: usize,
    pub series_stride: usize,
    /// Relative free-energy change per unit time below which the run sits
    /// on a plateau.
    pub plateau_threshold: f64,
    /// Shortest time span counted as a plateau.
    pub plateau_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSettings {
    pub count: usize,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub cutoff: Option<f64>,
    /// Ensemble sizes for the mean-field comparison.
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JkoSettings {
    pub quantiles: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub grid: Grid,
    pub species: Vec<SpeciesConfig>,
    pub coupling: Vec<Vec<KernelSpec>>,
    pub epsilon: f64,
    pub time: TimeSettings,
    pub output: OutputSettings,
    pub particles: ParticleSettings,
    pub jko: JkoSettings,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: PathBuf::from("out"),
            snapshot_stride: 0,
            series_stride: 1,
            plateau_threshold: 1e-6,
            plateau_window: 1.0,
        }
    }
}

impl Default for ParticleSettings {
    fn default() -> Self {
        ParticleSettings {
            count: 1000,
            seed: 0,
            dt: 1e-2,
            steps: 100,
            cutoff: None,
            sizes: vec![1000, 10000],
        }
    }
}

impl Default for JkoSettings {
    fn default() -> Self {
        JkoSettings { quantiles: 256, dt: 1e-2 }
    }
}

impl RunConfig {
    pub fn system(&self) -> SystemSpec {
        SystemSpec {
            species: self.species.iter().map(|s| s.spec.clone()).collect(),
            coupling: self.coupling.clone(),
            epsilon: self.epsilon,
        }
    }

    /// Fixed time step `dt` for both the driver and the solver.
    pub fn set_dt(&mut self, dt: f64) {
        self.time.dt = Some(dt);
        self.time.solver.dt = dt;
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        parse(text, None)
    }

    /// Reads a file; relative `initial = file path=...` entries resolve
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse(&text, path.parent())
    }

    pub fn to_ini(&self) -> String {
        emit(self)
    }
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn finish(self, name: &str) -> Result<(), ConfigError> {
        if let Some((k, e)) = self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            let where_ = if name.is_empty() { "top level".to_string() } else { format!("[{name}]") };
            return Err(at(e.line, format!("unknown key '{k}' in {where_}")));
        }
        Ok(())
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.take(key).map(|e| parse_number(&e.value, e.line, key)).transpose()
    }

    fn integer(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.take(key)
            .map(|e| {
                e.value
                    .parse::<usize>()
                    .map_err(|_| at(e.line, format!("{key}: expected a non-negative integer, got '{}'", e.value)))
            })
            .transpose()
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.take(key)
            .map(|e| match e.value.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(at(e.line, format!("{key}: expected true or false, got '{other}'"))),
            })
            .transpose()
    }
}

fn parse_number(s: &str, line: usize, key: &str) -> Result<f64, ConfigError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(at(line, format!("{key}: expected a finite number, got '{s}'"))),
    }
}

fn sections(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut out: BTreeMap<String, Section> = BTreeMap::new();
    out.insert(String::new(), Section::default());
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, "section header must end with ']'"))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(at(line, "empty section name"));
            }
            if out.contains_key(&name) {
                return Err(at(line, format!("duplicate section [{name}]")));
            }
            out.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = name;
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{content}'")))?;
        let key = k.trim().to_string();
        if key.is_empty() || key.chars().any(|c| c.is_ascii_uppercase() || c.is_whitespace()) {
            return Err(at(line, format!("keys are lowercase words, got '{}'", k.trim())));
        }
        let section = out.get_mut(&current).expect("current section exists");
        if section.entries.contains_key(&key) {
            return Err(at(line, format!("duplicate key '{key}'")));
        }
        section.entries.insert(
            key,
            Entry {
                value: v.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

/// `name key=value key=value` with the parameters checked against `allowed`.
struct Call {
    name: String,
    args: BTreeMap<String, String>,
    line: usize,
}

impl Call {
    fn parse(e: &Entry) -> Result<Self, ConfigError> {
        let mut words = e.value.split_whitespace();
        let name = words
            .next()
            .ok_or_else(|| at(e.line, "missing value"))?
            .to_string();
        let mut args = BTreeMap::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| at(e.line, format!("expected 'key=value' after '{name}', got '{w}'")))?;
            if args.insert(k.to_string(), v.to_string()).is_some() {
                return Err(at(e.line, format!("parameter '{k}' given twice")));
            }
        }
        Ok(Call { name, args, line: e.line })
    }

    fn only(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        if let Some(k) = self.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(at(
                self.line,
                format!("'{}' takes no parameter '{k}' (allowed: {})", self.name, allowed.join(", ")),
            ));
        }
        Ok(())
    }

    fn num(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        match self.args.get(key) {
            Some(v) => parse_number(v, self.line, key),
            None => default.ok_or_else(|| at(self.line, format!("'{}' needs parameter '{key}'", self.name))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self
            .args
            .get(key)
            .ok_or_else(|| at(self.line, format!("'{}' needs parameter '{key}'", self.name)))?;
        v.split(',').map(|s| parse_number(s, self.line, key)).collect()
    }

    fn point(&self, key: &str) -> Result<[f64; 2], ConfigError> {
        if !self.args.contains_key(key) {
            return Ok([0.0; 2]);
        }
        let v = self.list(key)?;
        match v.len() {
            1 => Ok([v[0], 0.0]),
            2 => Ok([v[0], v[1]]),
            n => Err(at(self.line, format!("{key}: expected 1 or 2 coordinates, got {n}"))),
        }
    }
}

pub const KERNEL_NAMES: &[&str] = &["zero", "power", "log", "exponential", "gaussian", "characteristic"];

fn kernel(e: &Entry) -> Result<KernelSpec, ConfigError> {
    let c = Call::parse(e)?;
    let k = match c.name.as_str() {
        "zero" => {
            c.only(&[])?;
            KernelSpec::Zero
        }
        "power" => {
            c.only(&["k", "chi"])?;
            KernelSpec::Power {
                k: c.num("k", None)?,
                chi: c.num("chi", Some(1.0))?,
            }
        }
        "log" => {
            c.only(&["chi"])?;
            KernelSpec::Log { chi: c.num("chi", Some(1.0))? }
        }
        "exponential" => {
            c.only(&["amplitude", "range"])?;
            KernelSpec::Exponential {
                amplitude: c.num("amplitude", Some(1.0))?,
                range: c.num("range", None)?,
            }
        }
        "gaussian" => {
            c.only(&["amplitude", "width"])?;
            KernelSpec::Gaussian {
                amplitude: c.num("amplitude", Some(1.0))?,
                width: c.num("width", None)?,
            }
        }
        "characteristic" => {
            c.only(&["radius", "depth"])?;
            KernelSpec::Characteristic {
                radius: c.num("radius", None)?,
                depth: c.num("depth", Some(1.0))?,
            }
        }
        other => {
            return Err(at(
                e.line,
                format!("unknown kernel '{other}' (expected one of: {})", KERNEL_NAMES.join(", ")),
            ))
        }
    };
    k.validate().map_err(|err| at(e.line, err.to_string()))?;
    Ok(k)
}

fn potential(e: &Entry) -> Result<PotentialSpec, ConfigError> {
    let c = Call::parse(e)?;
    let v = match c.name.as_str() {
        "zero" => {
            c.only(&[])?;
            PotentialSpec::Zero
        }
        "harmonic" => {
            c.only(&[])?;
            PotentialSpec::harmonic()
        }
        "power" => {
            c.only(&["p", "coefficient"])?;
            PotentialSpec::Power {
                p: c.num("p", None)?,
                coefficient: c.num("coefficient", Some(1.0))?,
            }
        }
        "double_well" => {
            c.only(&["a", "b"])?;
            PotentialSpec::DoubleWell {
                a: c.num("a", None)?,
                b: c.num("b", None)?,
            }
        }
        other => {
            return Err(at(
                e.line,
                format!("unknown potential '{other}' (expected one of: zero, harmonic, power, double_well)"),
            ))
        }
    };
    v.validate().map_err(|err| at(e.line, err.to_string()))?;
    Ok(v)
}

fn internal(e: &Entry) -> Result<InternalEnergySpec, ConfigError> {
    let c = Call::parse(e)?;
    let u = match c.name.as_str() {
        "none" => {
            c.only(&[])?;
            InternalEnergySpec::None
        }
        "linear" => {
            c.only(&[])?;
            InternalEnergySpec::Linear
        }
        "power" => {
            c.only(&["m"])?;
            InternalEnergySpec::Power { m: c.num("m", None)? }
        }
        other => {
            return Err(at(
                e.line,
                format!("unknown internal energy '{other}' (expected one of: none, linear, power)"),
            ))
        }
    };
    u.validate().map_err(|err| at(e.line, err.to_string()))?;
    Ok(u)
}

fn mobility(e: &Entry) -> Result<MobilitySpec, ConfigError> {
    let c = Call::parse(e)?;
    let m = match c.name.as_str() {
        "linear" => {
            c.only(&[])?;
            MobilitySpec::Linear
        }
        "saturating" => {
            c.only(&["rho_max"])?;
            MobilitySpec::Saturating {
                rho_max: c.num("rho_max", None)?,
            }
        }
        other => {
            return Err(at(
                e.line,
                format!("unknown mobility '{other}' (expected one of: linear, saturating)"),
            ))
        }
    };
    m.validate().map_err(|err| at(e.line, err.to_string()))?;
    Ok(m)
}

fn initial(e: &Entry, base: Option<&Path>) -> Result<InitialDatum, ConfigError> {
    let c = Call::parse(e)?;
    let positive = |v: f64, what: &str| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(at(e.line, format!("{what} must be positive, got {v}")))
        }
    };
    Ok(match c.name.as_str() {
        "uniform" => {
            c.only(&[])?;
            InitialDatum::Uniform
        }
        "gaussian" => {
            c.only(&["center", "width"])?;
            InitialDatum::Gaussian {
                center: c.point("center")?,
                width: positive(c.num("width", None)?, "width")?,
            }
        }
        "bumps" => {
            c.only(&["centers", "width"])?;
            InitialDatum::Bumps {
                centers: c.list("centers")?,
                width: positive(c.num("width", None)?, "width")?,
            }
        }
        "barenblatt" => {
            c.only(&["t0"])?;
            InitialDatum::Barenblatt {
                t0: positive(c.num("t0", None)?, "t0")?,
            }
        }
        "disk" => {
            c.only(&["center", "radius"])?;
            InitialDatum::Disk {
                center: c.point("center")?,
                radius: positive(c.num("radius", None)?, "radius")?,
            }
        }
        "file" => {
            c.only(&["path"])?;
            let p = PathBuf::from(
                c.args
                    .get("path")
                    .ok_or_else(|| at(e.line, "'file' needs parameter 'path'"))?,
            );
            InitialDatum::File(match base {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            })
        }
        other => {
            return Err(at(
                e.line,
                format!("unknown initial datum '{other}' (expected one of: uniform, gaussian, bumps, barenblatt, disk, file)"),
            ))
        }
    })
}

fn species(s: &mut Section, base: Option<&Path>, name: &str) -> Result<SpeciesConfig, ConfigError> {
    let spec = SpeciesSpec {
        internal: s.take("internal").map(|e| internal(&e)).transpose()?.unwrap_or(InternalEnergySpec::None),
        potential: s.take("potential").map(|e| potential(&e)).transpose()?.unwrap_or(PotentialSpec::Zero),
        mobility: s.take("mobility").map(|e| mobility(&e)).transpose()?.unwrap_or(MobilitySpec::Linear),
        mass: match s.take("mass") {
            Some(e) => {
                let m = parse_number(&e.value, e.line, "mass")?;
                if !(m > 0.0) {
                    return Err(at(e.line, format!("mass must be positive, got {m}")));
                }
                m
            }
            None => 1.0,
        },
    };
    let init = s
        .take("initial")
        .ok_or_else(|| at(s.line, format!("[{name}] needs an 'initial' datum")))?;
    let noise = s.number("noise")?.unwrap_or(0.0);
    if !(0.0..1.0).contains(&noise) {
        return Err(at(s.line, format!("noise must lie in [0, 1), got {noise}")));
    }
    Ok(SpeciesConfig {
        spec,
        initial: initial(&init, base)?,
        noise,
        seed: s.integer("seed")?.unwrap_or(0) as u64,
    })
}

fn parse(text: &str, base: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut secs = sections(text)?;
    let known = |n: &str| {
        matches!(n, "" | "grid" | "model" | "coupling" | "time" | "output" | "particles" | "jko")
            || n.strip_prefix("species.").is_some_and(|i| i.parse::<usize>().is_ok())
    };
    if let Some((n, s)) = secs.iter().find(|(n, _)| !known(n)) {
        return Err(at(s.line, format!("unknown section [{n}]")));
    }

    let mut top = secs.remove("").unwrap_or_default();
    let experiment = top.take("experiment").map_or_else(|| "custom".to_string(), |e| e.value);
    top.finish("")?;

    // grid
    let mut g = secs
        .remove("grid")
        .ok_or_else(|| ConfigError::General("missing [grid] section".into()))?;
    let dims = g.integer("dims")?.unwrap_or(1);
    let cells = g.integer("cells")?.ok_or_else(|| at(g.line, "[grid] needs 'cells'"))?;
    let lo = g.number("lo")?.unwrap_or(0.0);
    let hi = g.number("hi")?.unwrap_or(1.0);
    let boundary = match g.take("boundary") {
        None => Boundary::NoFlux,
        Some(e) => match e.value.as_str() {
            "periodic" => Boundary::Periodic,
            "noflux" | "no_flux" => Boundary::NoFlux,
            other => return Err(at(e.line, format!("unknown boundary '{other}' (expected periodic or noflux)"))),
        },
    };
    let grid_line = g.line;
    g.finish("grid")?;
    let grid = Grid::new(&vec![cells; dims], &vec![(lo, hi); dims], boundary)
        .map_err(|e| at(grid_line, e.to_string()))?;

    // model / species
    let mut model = secs.remove("model").unwrap_or_default();
    let epsilon = model.number("epsilon")?.unwrap_or(0.0);
    if epsilon < 0.0 {
        return Err(at(model.line, "epsilon must be non-negative"));
    }
    let mut numbered: Vec<(usize, Section)> = Vec::new();
    let names: Vec<String> = secs.keys().filter(|n| n.starts_with("species.")).cloned().collect();
    for n in names {
        let idx: usize = n["species.".len()..].parse().expect("checked above");
        numbered.push((idx, secs.remove(&n).expect("listed")));
    }
    numbered.sort_by_key(|(i, _)| *i);
    let (species_list, coupling) = if numbered.is_empty() {
        let kernel_entry = model.take("kernel");
        let sp = species(&mut model, base, "model")?;
        let w = kernel_entry.map(|e| kernel(&e)).transpose()?.unwrap_or(KernelSpec::Zero);
        (vec![sp], vec![vec![w]])
    } else {
        for (expect, (idx, s)) in numbered.iter().enumerate() {
            if *idx != expect + 1 {
                return Err(at(s.line, format!("species sections must be numbered 1, 2, ... (found species.{idx})")));
            }
        }
        let n = numbered.len();
        if n > 9 {
            return Err(ConfigError::General("at most 9 species are supported".into()));
        }
        let mut list = Vec::with_capacity(n);
        for (idx, mut s) in numbered {
            let name = format!("species.{idx}");
            list.push(species(&mut s, base, &name)?);
            s.finish(&name)?;
        }
        let mut coupling = vec![vec![KernelSpec::Zero; n]; n];
        if let Some(mut c) = secs.remove("coupling") {
            for a in 0..n {
                for b in 0..n {
                    if let Some(e) = c.take(&format!("w{}{}", a + 1, b + 1)) {
                        coupling[a][b] = kernel(&e)?;
                    }
                }
            }
            c.finish("coupling")?;
        }
        (list, coupling)
    };
    model.finish("model")?;
    if let Some(c) = secs.get("coupling") {
        return Err(at(c.line, "[coupling] needs [species.N] sections; use 'kernel' in [model]"));
    }
    for row in &coupling {
        for k in row {
            k.validate_on(&grid).map_err(|e| ConfigError::General(e.to_string()))?;
        }
    }

    // time
    let mut t = secs.remove("time").unwrap_or_default();
    let mut solver = SolverConfig::default();
    let t_end = t.number("t_end")?.ok_or_else(|| at(t.line, "[time] needs 't_end'"))?;
    if !(t_end >= 0.0) {
        return Err(at(t.line, "t_end must be non-negative"));
    }
    let dt = match t.take("dt") {
        None => None,
        Some(e) if e.value == "adaptive" => None,
        Some(e) => {
            let v = parse_number(&e.value, e.line, "dt")?;
            if !(v > 0.0) {
                return Err(at(e.line, format!("dt must be positive, got {v}")));
            }
            solver.dt = v;
            Some(v)
        }
    };
    if let Some(e) = t.take("integrator") {
        solver.time_integrator = match e.value.as_str() {
            "implicit" => TimeIntegrator::Implicit,
            "euler" => TimeIntegrator::ExplicitEuler,
            "rk2" => TimeIntegrator::ExplicitRk2,
            other => return Err(at(e.line, format!("unknown integrator '{other}' (expected implicit, euler or rk2)"))),
        };
    }
    if let Some(v) = t.number("picard_tol")? {
        solver.picard_tol = v;
    }
    if let Some(v) = t.integer("picard_max_iter")? {
        solver.picard_max_iter = v;
    }
    if let Some(v) = t.boolean("newton")? {
        solver.newton = v;
    }
    if let Some(v) = t.number("cfl")? {
        solver.cfl = v;
    }
    if let Some(v) = t.number("dt_max")? {
        solver.dt_max = v;
    }
    if let Some(v) = t.integer("max_halvings")? {
        solver.max_halvings = v;
    }
    if let Some(v) = t.number("implicit_dt_factor")? {
        solver.implicit_dt_factor = v;
    }
    let stop_max_density = t.number("stop_max_density")?;
    let stop_energy_below = t.number("stop_energy_below")?;
    let max_steps = t.integer("max_steps")?;
    let time_line = t.line;
    t.finish("time")?;
    solver.validate().map_err(|e| at(time_line, e.to_string()))?;

    // output
    let mut o = secs.remove("output").unwrap_or_default();
    let mut output = OutputSettings::default();
    if let Some(e) = o.take("dir") {
        output.dir = PathBuf::from(e.value);
    }
    if let Some(v) = o.integer("snapshot_stride")? {
        output.snapshot_stride = v;
    }
    if let Some(v) = o.integer("series_stride")? {
        if v == 0 {
            return Err(at(o.line, "series_stride must be positive"));
        }
        output.series_stride = v;
    }
    if let Some(v) = o.number("plateau_threshold")? {
        output.plateau_threshold = v;
    }
    if let Some(v) = o.number("plateau_window")? {
        output.plateau_window = v;
    }
    o.finish("output")?;

    // particles
    let mut p = secs.remove("particles").unwrap_or_default();
    let mut particles = ParticleSettings::default();
    if let Some(v) = p.integer("count")? {
        particles.count = v;
    }
    if let Some(v) = p.integer("seed")? {
        particles.seed = v as u64;
    }
    if let Some(v) = p.number("dt")? {
        particles.dt = v;
    }
    if let Some(v) = p.integer("steps")? {
        particles.steps = v;
    }
    particles.cutoff = p.number("cutoff")?;
    if let Some(e) = p.take("sizes") {
        particles.sizes = e
            .value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| at(e.line, format!("sizes: expected integers, got '{s}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    p.finish("particles")?;

    let mut j = secs.remove("jko").unwrap_or_default();
    let mut jko = JkoSettings::default();
    if let Some(v) = j.integer("quantiles")? {
        jko.quantiles = v;
    }
    if let Some(v) = j.number("dt")? {
        jko.dt = v;
    }
    j.finish("jko")?;

    let cfg = RunConfig {
        experiment,
        grid,
        species: species_list,
        coupling,
        epsilon,
        time: TimeSettings {
            t_end,
            dt,
            solver,
            stop_max_density,
            stop_energy_below,
            max_steps,
        },
        output,
        particles,
        jko,
    };
    cfg.system().validate().map_err(|e| ConfigError::General(e.to_string()))?;
    Ok(cfg)
}

// ---------------------------------------------------------------- emitting

fn kernel_text(k: &KernelSpec) -> String {
    match *k {
        KernelSpec::Zero => "zero".into(),
        KernelSpec::Power { k, chi } => format!("power k={k} chi={chi}"),
        KernelSpec::Log { chi } => format!("log chi={chi}"),
        KernelSpec::Exponential { amplitude, range } => format!("exponential amplitude={amplitude} range={range}"),
        KernelSpec::Gaussian { amplitude, width } => format!("gaussian amplitude={amplitude} width={width}"),
        KernelSpec::Characteristic { radius, depth } => format!("characteristic radius={radius} depth={depth}"),
    }
}

fn point_text(p: [f64; 2], dims: usize) -> String {
    if dims == 2 {
        format!("{},{}", p[0], p[1])
    } else {
        format!("{}", p[0])
    }
}

fn initial_text(d: &InitialDatum, dims: usize) -> String {
    match d {
        InitialDatum::Uniform => "uniform".into(),
        InitialDatum::Gaussian { center, width } => format!("gaussian center={} width={width}", point_text(*center, dims)),
        InitialDatum::Bumps { centers, width } => format!(
            "bumps centers={} width={width}",
            centers.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        ),
        InitialDatum::Barenblatt { t0 } => format!("barenblatt t0={t0}"),
        InitialDatum::Disk { center, radius } => format!("disk center={} radius={radius}", point_text(*center, dims)),
        InitialDatum::File(p) => format!("file path={}", p.display()),
    }
}

fn species_text(out: &mut String, s: &SpeciesConfig, dims: usize) {
    let u = match s.spec.internal {
        InternalEnergySpec::None => "none".to_string(),
        InternalEnergySpec::Linear => "linear".to_string(),
        InternalEnergySpec::Power { m } => format!("power m={m}"),
    };
    let v = match &s.spec.potential {
        PotentialSpec::Zero => "zero".to_string(),
        PotentialSpec::Power { p, coefficient } => format!("power p={p} coefficient={coefficient}"),
        PotentialSpec::DoubleWell { a, b } => format!("double_well a={a} b={b}"),
        PotentialSpec::Table(_) => "zero # tabulated potentials cannot be written".to_string(),
    };
    let mob = match s.spec.mobility {
        MobilitySpec::Linear => "linear".to_string(),
        MobilitySpec::Saturating { rho_max } => format!("saturating rho_max={rho_max}"),
    };
    let _ = writeln!(out, "internal = {u}");
    let _ = writeln!(out, "potential = {v}");
    let _ = writeln!(out, "mobility = {mob}");
    let _ = writeln!(out, "mass = {}", s.spec.mass);
    let _ = writeln!(out, "initial = {}", initial_text(&s.initial, dims));
    if s.noise > 0.0 {
        let _ = writeln!(out, "noise = {}", s.noise);
        let _ = writeln!(out, "seed = {}", s.seed);
    }
}

fn emit(c: &RunConfig) -> String {
    let mut out = String::new();
    let dims = c.grid.dims();
    let ax = c.grid.axis(0);
    let _ = writeln!(out, "experiment = {}\n", c.experiment);
    let _ = writeln!(out, "[grid]");
    let _ = writeln!(out, "dims = {dims}");
    let _ = writeln!(out, "cells = {}", ax.cells);
    let _ = writeln!(out, "lo = {}", ax.lo);
    let _ = writeln!(out, "hi = {}", ax.hi);
    let _ = writeln!(
        out,
        "boundary = {}\n",
        if c.grid.is_periodic() { "periodic" } else { "noflux" }
    );
    let _ = writeln!(out, "[model]");
    if c.epsilon != 0.0 {
        let _ = writeln!(out, "epsilon = {}", c.epsilon);
    }
    if c.species.len() == 1 {
        species_text(&mut out, &c.species[0], dims);
        let _ = writeln!(out, "kernel = {}", kernel_text(&c.coupling[0][0]));
    } else {
        for (a, s) in c.species.iter().enumerate() {
            let _ = writeln!(out, "\n[species.{}]", a + 1);
            species_text(&mut out, s, dims);
        }
        let _ = writeln!(out, "\n[coupling]");
        for (a, row) in c.coupling.iter().enumerate() {
            for (b, k) in row.iter().enumerate() {
                let _ = writeln!(out, "w{}{} = {}", a + 1, b + 1, kernel_text(k));
            }
        }
    }
    let t = &c.time;
    let s = &t.solver;
    let _ = writeln!(out, "\n[time]");
    let _ = writeln!(out, "t_end = {}", t.t_end);
    match t.dt {
        Some(dt) => {
            let _ = writeln!(out, "dt = {dt}");
        }
        None => {
            let _ = writeln!(out, "dt = adaptive");
        }
    }
    let integrator = match s.time_integrator {
        TimeIntegrator::Implicit => "implicit",
        TimeIntegrator::ExplicitEuler => "euler",
        TimeIntegrator::ExplicitRk2 => "rk2",
    };
    let _ = writeln!(out, "integrator = {integrator}");
    let _ = writeln!(out, "picard_tol = {}", s.picard_tol);
    let _ = writeln!(out, "picard_max_iter = {}", s.picard_max_iter);
    let _ = writeln!(out, "newton = {}", s.newton);
    let _ = writeln!(out, "cfl = {}", s.cfl);
    let _ = writeln!(out, "dt_max = {}", s.dt_max);
    let _ = writeln!(out, "max_halvings = {}", s.max_halvings);
    let _ = writeln!(out, "implicit_dt_factor = {}", s.implicit_dt_factor);
    if let Some(v) = t.stop_max_density {
        let _ = writeln!(out, "stop_max_density = {v}");
    }
    if let Some(v) = t.stop_energy_below {
        let _ = writeln!(out, "stop_energy_below = {v}");
    }
    if let Some(v) = t.max_steps {
        let _ = writeln!(out, "max_steps = {v}");
    }
    let o = &c.output;
    let _ = writeln!(out, "\n[output]");
    let _ = writeln!(out, "dir = {}", o.dir.display());
    let _ = writeln!(out, "snapshot_stride = {}", o.snapshot_stride);
    let _ = writeln!(out, "series_stride = {}", o.series_stride);
    let _ = writeln!(out, "plateau_threshold = {}", o.plateau_threshold);
    let _ = writeln!(out, "plateau_window = {}", o.plateau_window);
    let p = &c.particles;
    let _ = writeln!(out, "\n[particles]");
    let _ = writeln!(out, "count = {}", p.count);
    let _ = writeln!(out, "seed = {}", p.seed);
    let _ = writeln!(out, "dt = {}", p.dt);
    let _ = writeln!(out, "steps = {}", p.steps);
    if let Some(r) = p.cutoff {
        let _ = writeln!(out, "cutoff = {r}");
    }
    let _ = writeln!(
        out,
        "sizes = {}",
        p.sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    );
    let _ = writeln!(out, "\n[jko]");
    let _ = writeln!(out, "quantiles = {}", c.jko.quantiles);
    let _ = writeln!(out, "dt = {}", c.jko.dt);
    out
}
