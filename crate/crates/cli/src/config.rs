//! Run configuration: line-oriented `key = value` text with `[section]`
//! headers and `#` comments.
//!
//! ```text
//! [experiment]
//! kind = pt-sweep
//! adiabaticities = 0.1, 0.441, 1, 2
//!
//! [hamiltonian]
//! delta = 1.0        # MHz
//! ```
//!
//! Frequencies are in MHz, times in µs, sweep rates in MHz/µs. Lists are
//! comma separated or written `linspace(a, b, n)`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use lzs_core::experiments::{velocity_for, DoublePassageDrive, ReadoutModel, DEFAULT_WINDOW};
use lzs_core::hamiltonian::{nv_reduce, NvParameters};
use lzs_core::noise::{EnsembleSpec, GaussianBath, DEFAULT_HERMITE_ORDER, MAX_HERMITE_ORDER};
use lzs_core::propagator::StepperConfig;
use lzs_core::qcore::{Frequency, Time, Waveform};

use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;
type Nodes = Vec<(f64, f64)>;

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &[
            "kind",
            "seed",
            "cycles",
            "samples_per_cycle",
            "adiabaticities",
            "window",
            "epsilon0_values",
            "mw_frequencies",
            "calibrate",
            "target_p_t",
            "taus",
            "points",
            "fringes",
            "t_start",
            "t_end",
            "times",
            "noise",
            "phase_points",
        ],
    ),
    ("hamiltonian", &["delta", "epsilon0"]),
    (
        "nv",
        &[
            "d",
            "b_z_field",
            "a_hyperfine",
            "gamma_e",
            "mw_frequency",
            "mw_rabi",
        ],
    ),
    (
        "waveform",
        &[
            "kind",
            "amplitude",
            "frequency",
            "frequencies",
            "phase",
            "velocity",
            "velocities",
            "t_origin",
            "tau",
            "nodes",
            "level",
        ],
    ),
    ("bath", &["beta"]),
    ("ensemble", &["method", "order", "n_samples"]),
    (
        "stepper",
        &["dt_max", "substep_refinement", "tolerance", "record_stride"],
    ),
    ("readout", &["n_cycles", "contrast", "baseline"]),
    ("output", &["path"]),
];

/// Bath width used when the config does not set one, MHz.
pub const DEFAULT_BETA: f64 = 0.056;
pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const DEFAULT_CYCLES: f64 = 3.0;
pub const DEFAULT_SAMPLES_PER_CYCLE: usize = 200;
pub const DEFAULT_FRINGE_POINTS: usize = 24;
pub const DEFAULT_FRINGES: f64 = 2.0;
pub const DEFAULT_PHASE_POINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    LzDynamics,
    PtSweep,
    Lzs,
    VisibilityDecay,
    Fid,
    StokesValidate,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::LzDynamics,
        Experiment::PtSweep,
        Experiment::Lzs,
        Experiment::VisibilityDecay,
        Experiment::Fid,
        Experiment::StokesValidate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LzDynamics => "lz-dynamics",
            Experiment::PtSweep => "pt-sweep",
            Experiment::Lzs => "lzs",
            Experiment::VisibilityDecay => "visibility-decay",
            Experiment::Fid => "fid",
            Experiment::StokesValidate => "stokes-validate",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Where Δ and ε₀ come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Physics {
    Direct {
        /// `None` only when the gap is calibrated.
        delta: Option<Frequency>,
        epsilon0: Frequency,
    },
    Nv(NvParameters),
    /// Allowed for experiments that never touch the Hamiltonian (fid).
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleMethod {
    GaussHermite { order: usize },
    MonteCarlo { n_samples: usize },
}

impl EnsembleMethod {
    pub fn spec(self, seed: u64) -> EnsembleSpec {
        match self {
            EnsembleMethod::GaussHermite { order } => EnsembleSpec::GaussHermite { order },
            EnsembleMethod::MonteCarlo { n_samples } => {
                EnsembleSpec::MonteCarlo { n_samples, seed }
            }
        }
    }
}

/// Experiment-specific parameters, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    LzDynamics {
        amplitude: Frequency,
        frequencies: Vec<f64>,
        cycles: f64,
        samples_per_cycle: usize,
    },
    PtSweep {
        velocities: Vec<f64>,
        window: f64,
    },
    Lzs {
        drive: DoublePassageDrive,
        epsilon0: Vec<f64>,
        window: f64,
        target_p_t: f64,
    },
    VisibilityDecay {
        velocity: f64,
        taus: Vec<f64>,
        points: usize,
        fringes: f64,
        window: f64,
        target_p_t: f64,
    },
    Fid {
        times: Vec<f64>,
        noise: f64,
    },
    StokesValidate {
        adiabaticities: Vec<f64>,
        window: f64,
        phase_points: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: &'static str,
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub physics: Physics,
    /// Gap after resolving `physics`; `None` means calibrate to `target_p_t`.
    pub delta: Option<Frequency>,
    pub epsilon0: Frequency,
    pub plan: Plan,
    pub bath: GaussianBath,
    pub ensemble: EnsembleMethod,
    pub stepper: StepperConfig,
    pub readout: Option<ReadoutModel>,
    pub output: PathBuf,
    pub seed: u64,
    entries: Vec<Entry>,
    sections: Vec<&'static str>,
}

impl RunConfig {
    pub fn ensemble_spec(&self) -> EnsembleSpec {
        self.ensemble.spec(self.seed)
    }

    /// Every explicitly given setting except the output location, with the
    /// effective seed, on one line: `section.key=value; ...`. A section
    /// given without keys appears as `[section]`.
    pub fn reproduction_line(&self) -> String {
        let mut parts = Vec::new();
        for (name, _) in SECTIONS {
            if *name == "output" {
                continue;
            }
            let mut entries = self
                .entries
                .iter()
                .filter(|e| e.section == *name)
                .peekable();
            if *name == "experiment" {
                // the seed always travels, whether or not the file set it
                parts.extend(
                    entries
                        .filter(|e| e.key != "seed")
                        .map(|e| format!("{}.{}={}", e.section, e.key, e.value)),
                );
                parts.push(format!("experiment.seed={}", self.seed));
            } else if entries.peek().is_some() {
                parts.extend(entries.map(|e| format!("{}.{}={}", e.section, e.key, e.value)));
            } else if self.sections.contains(name) {
                parts.push(format!("[{name}]"));
            }
        }
        parts.join("; ")
    }

    /// The reproduction block as config text.
    pub fn canonical_text(&self) -> String {
        config_text_from_reproduction_line(&self.reproduction_line())
            .expect("reproduction line is well formed by construction")
    }
}

/// Turn a `section.key=value; ...` line back into config text.
pub fn config_text_from_reproduction_line(line: &str) -> Result<String> {
    let mut grouped: Vec<(String, Vec<String>)> = Vec::new();
    for part in line.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some(section) = part.strip_prefix('[').and_then(|p| p.strip_suffix(']')) {
            grouped.push((section.to_string(), Vec::new()));
            continue;
        }
        let (path, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::parse(1, format!("malformed metadata entry `{part}`")))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| CliError::parse(1, format!("malformed metadata key `{path}`")))?;
        match grouped.last_mut() {
            Some((s, lines)) if s == section => lines.push(format!("{key} = {value}")),
            _ => grouped.push((section.to_string(), vec![format!("{key} = {value}")])),
        }
    }
    let mut text = String::new();
    for (section, lines) in grouped {
        text.push_str(&format!("[{section}]\n"));
        for l in lines {
            text.push_str(&l);
            text.push('\n');
        }
    }
    Ok(text)
}

// ---------------------------------------------------------------------------
// Lexing

struct Doc {
    entries: Vec<Entry>,
    sections: BTreeMap<&'static str, usize>,
    used: RefCell<BTreeSet<usize>>,
}

fn lex(text: &str) -> Result<Doc> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut sections = BTreeMap::new();
    let mut current: Option<(&'static str, &'static [&'static str])> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| {
                    CliError::parse(line, format!("unterminated section header `{content}`"))
                })?
                .trim();
            let (sec, keys) = SECTIONS
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| CliError::parse(line, format!("unknown section `[{name}]`")))?;
            sections.entry(*sec).or_insert(line);
            current = Some((sec, keys));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            CliError::parse(line, format!("expected `key = value`, got `{content}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let (section, keys) = current.ok_or_else(|| {
            CliError::parse(line, format!("key `{key}` appears before any [section]"))
        })?;
        if !keys.contains(&key) {
            return Err(CliError::parse(
                line,
                format!("unknown key `{key}` in [{section}]"),
            ));
        }
        if value.is_empty() {
            return Err(CliError::parse(line, format!("`{key}` has no value")));
        }
        if let Some(prev) = entries
            .iter()
            .find(|e| e.section == section && e.key == key)
        {
            return Err(CliError::parse(
                line,
                format!(
                    "duplicate key `{key}` in [{section}] (first set on line {})",
                    prev.line
                ),
            ));
        }
        entries.push(Entry {
            section,
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(Doc {
        entries,
        sections,
        used: RefCell::new(BTreeSet::new()),
    })
}

fn parse_f64(e: &Entry, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        CliError::parse(
            e.line,
            format!(
                "`{}.{}`: expected a number, got `{}`",
                e.section,
                e.key,
                s.trim()
            ),
        )
    })
}

fn finite(e: &Entry, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(
            Some(e.line),
            format!("`{}.{}` must be finite", e.section, e.key),
        ))
    }
}

impl Doc {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        let (i, e) = self
            .entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.section == section && e.key == key)?;
        self.used.borrow_mut().insert(i);
        Some(e)
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<(f64, usize)>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => Ok(Some((finite(e, parse_f64(e, &e.value)?)?, e.line))),
        }
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<(f64, Option<usize>)> {
        Ok(match self.f64(section, key)? {
            Some((v, l)) => (v, Some(l)),
            None => (default, None),
        })
    }

    fn require_f64(&self, section: &str, key: &str, what: &str) -> Result<(f64, usize)> {
        self.f64(section, key)?
            .ok_or_else(|| CliError::invalid(None, format!("{what} requires `{section}.{key}`")))
    }

    fn integer(&self, section: &str, key: &str) -> Result<Option<(u64, usize)>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<u64>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| {
                    CliError::parse(
                        e.line,
                        format!(
                            "`{section}.{key}`: expected a non-negative integer, got `{}`",
                            e.value
                        ),
                    )
                }),
        }
    }

    fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<(usize, Option<usize>)> {
        Ok(match self.integer(section, key)? {
            Some((v, l)) => (v as usize, Some(l)),
            None => (default, None),
        })
    }

    fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                other => Err(CliError::parse(
                    e.line,
                    format!("`{section}.{key}`: expected true or false, got `{other}`"),
                )),
            },
        }
    }

    fn word(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.get(section, key).map(|e| (e.value.as_str(), e.line))
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<(Vec<f64>, usize)>> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        let v = &e.value;
        let values = if let Some(args) = v
            .strip_prefix("linspace(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != 3 {
                return Err(CliError::parse(
                    e.line,
                    "linspace takes (start, stop, count)",
                ));
            }
            let a = parse_f64(e, parts[0])?;
            let b = parse_f64(e, parts[1])?;
            let n: usize = parts[2].trim().parse().map_err(|_| {
                CliError::parse(
                    e.line,
                    format!("linspace count `{}` is not an integer", parts[2].trim()),
                )
            })?;
            if n < 2 {
                return Err(CliError::invalid(Some(e.line), "linspace needs count >= 2"));
            }
            (0..n)
                .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
                .collect()
        } else {
            v.split(',')
                .map(|s| parse_f64(e, s))
                .collect::<Result<Vec<_>>>()?
        };
        for &x in &values {
            finite(e, x)?;
        }
        Ok(Some((values, e.line)))
    }

    fn nodes(&self, section: &str, key: &str) -> Result<Option<(Nodes, usize)>> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        let nodes = e
            .value
            .split(',')
            .map(|pair| {
                let (t, v) = pair.split_once(':').ok_or_else(|| {
                    CliError::parse(
                        e.line,
                        format!("node `{}` is not `time:value`", pair.trim()),
                    )
                })?;
                Ok((parse_f64(e, t)?, parse_f64(e, v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some((nodes, e.line)))
    }

    fn unused(&self) -> Vec<&Entry> {
        let used = self.used.borrow();
        self.entries
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(_, e)| e)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Validation helpers

fn positive(line: Option<usize>, name: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::invalid(
            line,
            format!("{name} > 0 violated (got {v})"),
        ))
    }
}

fn non_negative(line: Option<usize>, name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(CliError::invalid(
            line,
            format!("{name} >= 0 violated (got {v})"),
        ))
    }
}

fn all_positive(line: usize, name: &str, vs: &[f64]) -> Result<()> {
    for &v in vs {
        positive(Some(line), name, v)?;
    }
    Ok(())
}

fn increasing(line: usize, name: &str, vs: &[f64]) -> Result<()> {
    if vs.windows(2).all(|w| w[1] > w[0]) {
        Ok(())
    } else {
        Err(CliError::invalid(
            Some(line),
            format!("{name} must be strictly increasing"),
        ))
    }
}

fn core(line: Option<usize>, r: lzs_core::Result<()>) -> Result<()> {
    r.map_err(|e| CliError::invalid(line, e.to_string()))
}

// ---------------------------------------------------------------------------
// Assembly

/// Parse and fully validate a config.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc = lex(text)?;

    let (kind, kind_line) = doc
        .word("experiment", "kind")
        .ok_or_else(|| CliError::invalid(None, "`experiment.kind` is required"))?;
    let experiment = Experiment::from_name(kind).ok_or_else(|| {
        let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
        CliError::parse(
            kind_line,
            format!(
                "unknown experiment `{kind}` (expected one of {})",
                names.join(", ")
            ),
        )
    })?;
    let seed = doc.integer("experiment", "seed")?.map_or(0, |(s, _)| s);

    let calibrate = doc.bool_or("experiment", "calibrate", false)?;
    let physics = physics(&doc, experiment, calibrate)?;
    let (delta, epsilon0) = match &physics {
        Physics::Direct { delta, epsilon0 } => (*delta, *epsilon0),
        Physics::Nv(p) => {
            let h = nv_reduce(p)
                .map_err(|e| CliError::invalid(doc.sections.get("nv").copied(), e.to_string()))?;
            (Some(h.delta), h.epsilon0)
        }
        Physics::Unspecified => (None, Frequency::ZERO),
    };
    if calibrate && !matches!(experiment, Experiment::Lzs | Experiment::VisibilityDecay) {
        return Err(CliError::invalid(
            None,
            format!(
                "calibrate applies only to lzs and visibility-decay, not {}",
                experiment.name()
            ),
        ));
    }
    let needs_delta = !calibrate && experiment != Experiment::Fid;
    let delta = if needs_delta {
        Some(delta.ok_or_else(|| CliError::invalid(None, "`hamiltonian.delta` is required"))?)
    } else if calibrate {
        None
    } else {
        delta
    };

    let plan = plan(&doc, experiment, delta, &physics)?;
    let bath = bath(&doc)?;
    let ensemble = ensemble(&doc)?;
    let stepper = stepper(&doc)?;
    let readout = readout(&doc, experiment)?;
    let output = doc.word("output", "path").map_or_else(
        || PathBuf::from(format!("{}.csv", experiment.name())),
        |(p, _)| PathBuf::from(p),
    );

    for e in doc.unused() {
        log::warn!(
            "line {}: `{}.{}` is not used by {}",
            e.line,
            e.section,
            e.key,
            experiment.name()
        );
    }

    Ok(RunConfig {
        experiment,
        physics,
        delta,
        epsilon0,
        plan,
        bath,
        ensemble,
        stepper,
        readout,
        output,
        seed,
        sections: doc.sections.keys().copied().collect(),
        entries: doc.entries,
    })
}

fn physics(doc: &Doc, experiment: Experiment, calibrate: bool) -> Result<Physics> {
    match (doc.has_section("hamiltonian"), doc.has_section("nv")) {
        (true, true) => Err(CliError::invalid(
            doc.sections.get("nv").copied(),
            "give exactly one of [nv] and [hamiltonian]",
        )),
        (false, false) if experiment == Experiment::Fid => Ok(Physics::Unspecified),
        (false, false) => Err(CliError::invalid(
            None,
            "give exactly one of [nv] and [hamiltonian]",
        )),
        (true, false) => {
            let delta = match doc.f64("hamiltonian", "delta")? {
                Some((_, l)) if calibrate => {
                    return Err(CliError::invalid(
                        Some(l),
                        "`hamiltonian.delta` conflicts with `experiment.calibrate = true`",
                    ))
                }
                Some((d, l)) => Some(Frequency::mhz(positive(Some(l), "delta", d)?)),
                None => None,
            };
            let (e0, _) = doc.f64_or("hamiltonian", "epsilon0", 0.0)?;
            Ok(Physics::Direct {
                delta,
                epsilon0: Frequency::mhz(e0),
            })
        }
        (false, true) => {
            if calibrate {
                return Err(CliError::invalid(
                    doc.sections.get("nv").copied(),
                    "gap calibration needs [hamiltonian]; with [nv] the gap is mw_rabi",
                ));
            }
            let mut p = NvParameters::default();
            let f = |key: &str, default: f64| doc.f64_or("nv", key, default);
            let (d, dl) = f("d", p.d.value())?;
            p.d = Frequency::mhz(positive(dl, "d", d)?);
            p.b_z_field = f("b_z_field", p.b_z_field)?.0;
            let (a, al) = f("a_hyperfine", p.a_hyperfine.value())?;
            p.a_hyperfine = Frequency::mhz(positive(al, "a_hyperfine", a)?);
            p.gamma_e = f("gamma_e", p.gamma_e)?.0;
            p.mw_frequency = Frequency::mhz(f("mw_frequency", p.mw_frequency.value())?.0);
            let (r, rl) = f("mw_rabi", p.mw_rabi.value())?;
            p.mw_rabi = Frequency::mhz(positive(rl, "mw_rabi", r)?);
            core(doc.sections.get("nv").copied(), p.validate())?;
            Ok(Physics::Nv(p))
        }
    }
}

fn window(doc: &Doc) -> Result<f64> {
    let (w, l) = doc.f64_or("experiment", "window", DEFAULT_WINDOW)?;
    positive(l, "window", w)
}

fn target_p_t(doc: &Doc) -> Result<f64> {
    let (p, l) = doc.f64_or("experiment", "target_p_t", 0.5)?;
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(CliError::invalid(
            l,
            format!("0 < target_p_t < 1 violated (got {p})"),
        ))
    }
}

fn adiabaticities(doc: &Doc) -> Result<Option<(Vec<f64>, usize)>> {
    match doc.list("experiment", "adiabaticities")? {
        Some((ds, l)) => {
            all_positive(l, "adiabaticity", &ds)?;
            Ok(Some((ds, l)))
        }
        None => Ok(None),
    }
}

fn waveform_kind<'a>(doc: &'a Doc, default: &'a str) -> (&'a str, Option<usize>) {
    doc.word("waveform", "kind")
        .map_or((default, None), |(k, l)| (k, Some(l)))
}

fn plan(
    doc: &Doc,
    experiment: Experiment,
    delta: Option<Frequency>,
    physics: &Physics,
) -> Result<Plan> {
    match experiment {
        Experiment::LzDynamics => {
            let (kind, kl) = waveform_kind(doc, "sinusoid");
            if kind != "sinusoid" {
                return Err(CliError::invalid(
                    kl,
                    "lz-dynamics needs waveform.kind = sinusoid",
                ));
            }
            let (amp, al) = doc.require_f64("waveform", "amplitude", "lz-dynamics")?;
            let amplitude = positive(Some(al), "amplitude", amp)?;
            let sources = [
                doc.list("waveform", "frequencies")?,
                doc.f64("waveform", "frequency")?.map(|(w, l)| (vec![w], l)),
                adiabaticities(doc)?.map(|(ds, l)| {
                    // caption convention: δ = Δ²/(ε·w)
                    let d = delta.map_or(f64::NAN, |d| d.value());
                    (ds.iter().map(|x| d * d / (amplitude * x)).collect(), l)
                }),
            ];
            let mut given = sources.into_iter().flatten();
            let (frequencies, fl) = given.next().ok_or_else(|| {
                CliError::invalid(
                    None,
                    "lz-dynamics needs one of waveform.frequencies, waveform.frequency, experiment.adiabaticities",
                )
            })?;
            if let Some((_, l)) = given.next() {
                return Err(CliError::invalid(
                    Some(l),
                    "give only one of waveform.frequencies, waveform.frequency, experiment.adiabaticities",
                ));
            }
            all_positive(fl, "frequency", &frequencies)?;
            if let Some((ph, l)) = doc.f64("waveform", "phase")? {
                if ph != 0.0 {
                    return Err(CliError::invalid(
                        Some(l),
                        "lz-dynamics starts at the drive maximum; phase must be 0",
                    ));
                }
            }
            let (cycles, cl) = doc.f64_or("experiment", "cycles", DEFAULT_CYCLES)?;
            let (spc, sl) =
                doc.usize_or("experiment", "samples_per_cycle", DEFAULT_SAMPLES_PER_CYCLE)?;
            if spc < 1 {
                return Err(CliError::invalid(sl, "samples_per_cycle >= 1 violated"));
            }
            Ok(Plan::LzDynamics {
                amplitude: Frequency::mhz(amplitude),
                frequencies,
                cycles: positive(cl, "cycles", cycles)?,
                samples_per_cycle: spc,
            })
        }
        Experiment::PtSweep => {
            let (kind, kl) = waveform_kind(doc, "linear-ramp");
            if kind != "linear-ramp" {
                return Err(CliError::invalid(
                    kl,
                    "pt-sweep needs waveform.kind = linear-ramp",
                ));
            }
            let d = delta.expect("checked by caller");
            let velocities = match (doc.list("waveform", "velocities")?, adiabaticities(doc)?) {
                (Some((vs, l)), None) => {
                    all_positive(l, "velocity", &vs)?;
                    vs
                }
                (None, Some((ds, _))) => ds.iter().map(|&x| velocity_for(d, x)).collect(),
                (Some(_), Some((_, l))) => {
                    return Err(CliError::invalid(
                        Some(l),
                        "give only one of waveform.velocities and experiment.adiabaticities",
                    ))
                }
                (None, None) => {
                    return Err(CliError::invalid(
                        None,
                        "pt-sweep needs waveform.velocities or experiment.adiabaticities",
                    ))
                }
            };
            let mut sorted = velocities.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(CliError::invalid(
                    None,
                    "pt-sweep velocities must be distinct",
                ));
            }
            Ok(Plan::PtSweep {
                velocities,
                window: window(doc)?,
            })
        }
        Experiment::Lzs => {
            let drive = double_passage_drive(doc, delta)?;
            let epsilon0 = match (
                doc.list("experiment", "epsilon0_values")?,
                doc.list("experiment", "mw_frequencies")?,
            ) {
                (Some((es, l)), None) => {
                    increasing(l, "epsilon0_values", &es)?;
                    es
                }
                (None, Some((fs, l))) => {
                    let Physics::Nv(p) = physics else {
                        return Err(CliError::invalid(Some(l), "mw_frequencies needs [nv]"));
                    };
                    increasing(l, "mw_frequencies", &fs)?;
                    let f01 = p.transition_frequency().value();
                    fs.iter().map(|f| f - f01).collect()
                }
                (Some(_), Some((_, l))) => {
                    return Err(CliError::invalid(
                        Some(l),
                        "give only one of epsilon0_values and mw_frequencies",
                    ))
                }
                (None, None) => {
                    return Err(CliError::invalid(
                        None,
                        "lzs needs experiment.epsilon0_values or experiment.mw_frequencies",
                    ))
                }
            };
            Ok(Plan::Lzs {
                drive,
                epsilon0,
                window: window(doc)?,
                target_p_t: target_p_t(doc)?,
            })
        }
        Experiment::VisibilityDecay => {
            let (kind, kl) = waveform_kind(doc, "triangle");
            if kind != "triangle" {
                return Err(CliError::invalid(
                    kl,
                    "visibility-decay needs waveform.kind = triangle",
                ));
            }
            let (v, vl) = doc.require_f64("waveform", "velocity", "visibility-decay")?;
            let (taus, tl) = doc.list("experiment", "taus")?.ok_or_else(|| {
                CliError::invalid(None, "visibility-decay requires `experiment.taus`")
            })?;
            all_positive(tl, "tau", &taus)?;
            increasing(tl, "taus", &taus)?;
            let (points, pl) = doc.usize_or("experiment", "points", DEFAULT_FRINGE_POINTS)?;
            if points < 8 {
                return Err(CliError::invalid(
                    pl,
                    format!("points >= 8 violated (got {points})"),
                ));
            }
            let (fringes, fl) = doc.f64_or("experiment", "fringes", DEFAULT_FRINGES)?;
            Ok(Plan::VisibilityDecay {
                velocity: positive(Some(vl), "velocity", v)?,
                taus,
                points,
                fringes: positive(fl, "fringes", fringes)?,
                window: window(doc)?,
                target_p_t: target_p_t(doc)?,
            })
        }
        Experiment::Fid => {
            let (times, tl) = doc
                .list("experiment", "times")?
                .ok_or_else(|| CliError::invalid(None, "fid requires `experiment.times`"))?;
            for &t in &times {
                non_negative(Some(tl), "t", t)?;
            }
            increasing(tl, "times", &times)?;
            let (noise, nl) = doc.f64_or("experiment", "noise", 0.0)?;
            Ok(Plan::Fid {
                times,
                noise: non_negative(nl, "noise", noise)?,
            })
        }
        Experiment::StokesValidate => {
            let (ds, l) = adiabaticities(doc)?.ok_or_else(|| {
                CliError::invalid(None, "stokes-validate requires `experiment.adiabaticities`")
            })?;
            increasing(l, "adiabaticities", &ds)?;
            let (pp, pl) = doc.usize_or("experiment", "phase_points", DEFAULT_PHASE_POINTS)?;
            if pp < 4 {
                return Err(CliError::invalid(
                    pl,
                    format!("phase_points >= 4 violated (got {pp})"),
                ));
            }
            Ok(Plan::StokesValidate {
                adiabaticities: ds,
                window: window(doc)?,
                phase_points: pp,
            })
        }
    }
}

fn double_passage_drive(doc: &Doc, delta: Option<Frequency>) -> Result<DoublePassageDrive> {
    let (kind, kl) = waveform_kind(doc, "triangle");
    if kind == "triangle" {
        let (v, vl) = doc.require_f64("waveform", "velocity", "a triangle drive")?;
        let (tau, tl) = doc.require_f64("waveform", "tau", "a triangle drive")?;
        return Ok(DoublePassageDrive::Triangle {
            velocity: positive(Some(vl), "velocity", v)?,
            tau: positive(Some(tl), "tau", tau)?,
        });
    }
    if delta.is_none() {
        return Err(CliError::invalid(
            kl,
            "gap calibration needs a triangle drive",
        ));
    }
    let waveform = custom_waveform(doc, kind, kl)?;
    let (t0, _) = doc.require_f64("experiment", "t_start", "a custom double-passage drive")?;
    let (t1, l1) = doc.require_f64("experiment", "t_end", "a custom double-passage drive")?;
    if t1 <= t0 {
        return Err(CliError::invalid(Some(l1), "t_end > t_start violated"));
    }
    Ok(DoublePassageDrive::Custom { waveform, t0, t1 })
}

fn custom_waveform(doc: &Doc, kind: &str, kl: Option<usize>) -> Result<Waveform> {
    let w = match kind {
        "sinusoid" => {
            let (a, _) = doc.require_f64("waveform", "amplitude", "a sinusoid")?;
            let (f, _) = doc.require_f64("waveform", "frequency", "a sinusoid")?;
            let (ph, _) = doc.f64_or("waveform", "phase", 0.0)?;
            Waveform::sinusoid(a, f, ph)
        }
        "linear-ramp" => {
            let (v, _) = doc.require_f64("waveform", "velocity", "a linear ramp")?;
            let (t0, _) = doc.f64_or("waveform", "t_origin", 0.0)?;
            Waveform::linear_ramp(v, t0)
        }
        "piecewise" => {
            let (nodes, _) = doc
                .nodes("waveform", "nodes")?
                .ok_or_else(|| CliError::invalid(None, "a piecewise drive requires `waveform.nodes`"))?;
            Waveform::piecewise(&nodes)
        }
        "constant" => {
            let (level, _) = doc.f64_or("waveform", "level", 0.0)?;
            Waveform::constant(level)
        }
        other => {
            return Err(CliError::parse(
                kl.unwrap_or(0),
                format!("unknown waveform kind `{other}` (triangle, sinusoid, linear-ramp, piecewise, constant)"),
            ))
        }
    };
    w.map_err(|e| CliError::invalid(doc.sections.get("waveform").copied(), e.to_string()))
}

fn bath(doc: &Doc) -> Result<GaussianBath> {
    let (beta, l) = doc.f64_or("bath", "beta", DEFAULT_BETA)?;
    non_negative(l, "beta", beta)?;
    GaussianBath::new(Frequency::mhz(beta)).map_err(|e| CliError::invalid(l, e.to_string()))
}

fn ensemble(doc: &Doc) -> Result<EnsembleMethod> {
    let method = doc.word("ensemble", "method");
    let m = match method {
        None | Some(("gauss-hermite", _)) => {
            let (order, l) = doc.usize_or("ensemble", "order", DEFAULT_HERMITE_ORDER)?;
            if !(1..=MAX_HERMITE_ORDER).contains(&order) {
                return Err(CliError::invalid(
                    l,
                    format!("1 <= order <= {MAX_HERMITE_ORDER} violated (got {order})"),
                ));
            }
            EnsembleMethod::GaussHermite { order }
        }
        Some(("monte-carlo", _)) => {
            let (n, l) = doc.usize_or("ensemble", "n_samples", DEFAULT_MC_SAMPLES)?;
            if n < 2 {
                return Err(CliError::invalid(
                    l,
                    format!("n_samples >= 2 violated (got {n})"),
                ));
            }
            EnsembleMethod::MonteCarlo { n_samples: n }
        }
        Some((other, l)) => {
            return Err(CliError::parse(
                l,
                format!("unknown ensemble method `{other}` (gauss-hermite, monte-carlo)"),
            ))
        }
    };
    core(doc.sections.get("ensemble").copied(), m.spec(0).validate())?;
    Ok(m)
}

fn stepper(doc: &Doc) -> Result<StepperConfig> {
    let d = StepperConfig::default();
    let (dt, dl) = doc.f64_or("stepper", "dt_max", d.dt_max.value())?;
    let (sub, sl) = doc.usize_or("stepper", "substep_refinement", d.substep_refinement)?;
    let (tol, tl) = doc.f64_or("stepper", "tolerance", d.tolerance)?;
    let (stride, rl) = doc.usize_or("stepper", "record_stride", d.record_stride)?;
    if sub < 1 {
        return Err(CliError::invalid(sl, "substep_refinement >= 1 violated"));
    }
    if stride < 1 {
        return Err(CliError::invalid(rl, "record_stride >= 1 violated"));
    }
    let cfg = StepperConfig {
        dt_max: Time::us(positive(dl, "dt_max", dt)?),
        substep_refinement: sub,
        tolerance: positive(tl, "tolerance", tol)?,
        record_stride: stride,
    };
    core(doc.sections.get("stepper").copied(), cfg.validate())?;
    Ok(cfg)
}

fn readout(doc: &Doc, experiment: Experiment) -> Result<Option<ReadoutModel>> {
    if !doc.has_section("readout") {
        return Ok(None);
    }
    let line = doc.sections.get("readout").copied();
    if !matches!(
        experiment,
        Experiment::LzDynamics | Experiment::PtSweep | Experiment::Lzs
    ) {
        return Err(CliError::invalid(
            line,
            "readout applies to lz-dynamics, pt-sweep and lzs",
        ));
    }
    let d = ReadoutModel::default();
    let n = doc
        .integer("readout", "n_cycles")?
        .map_or(d.n_cycles, |(n, _)| n);
    let (contrast, _) = doc.f64_or("readout", "contrast", d.contrast)?;
    let (baseline, _) = doc.f64_or("readout", "baseline", d.baseline)?;
    let model = ReadoutModel {
        n_cycles: n,
        contrast,
        baseline,
    };
    core(line, model.validate())?;
    Ok(Some(model))
}
