//! Text configuration format.
//!
//! ```text
//! [mesh]
//! domain = -1 -1 1 1 mm
//! reference_length = 2 mm
//! refinements = 5
//! region.hinge = -1 -1 -0.92 1 mm
//!
//! [time]
//! tau = 3e-3 s
//! ```
//!
//! Every dimensional value carries a unit suffix. Parsing collects every
//! problem with its line number instead of stopping at the first.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mesh::{EdgeSelector, Point2, Rect, Region};
use crate::plate::{Obstacle, SolverKind, Vec3};
use crate::simulation::{
    effective_parameters, BoundaryConfig, HeatSource, Material, MeshRecipe, OutputConfig, PenaltyConfig,
    RawMaterial, ScenarioConfig, SourceShape, SupportConfig, TimeConfig,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to one line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Line 0 marks problems that belong to no single line.
        if self.line == 0 {
            write!(f, "{}: {}", self.key, self.message)
        } else {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Stress,
    Temperature,
    PerLengthTemperature,
    PerTemperature,
    Diffusivity,
    Velocity,
    HeatingRate,
    Penalty,
    Conductivity,
    HeatCapacity,
    HeatTransfer,
}

impl Dimension {
    /// Unit the serializer writes; parsed values are converted to it.
    pub fn canonical(self) -> &'static str {
        match self {
            Dimension::Length => "mm",
            Dimension::Time => "s",
            Dimension::Stress => "MPa",
            Dimension::Temperature => "C",
            Dimension::PerLengthTemperature => "per_mm_C",
            Dimension::PerTemperature => "per_C",
            Dimension::Diffusivity => "mm2_per_s",
            Dimension::Velocity => "mm_per_s",
            Dimension::HeatingRate => "C_per_s",
            Dimension::Penalty => "mm4_per_MPa",
            Dimension::Conductivity => "W_per_m_C",
            Dimension::HeatCapacity => "J_per_m3_C",
            Dimension::HeatTransfer => "W_per_mm2_C",
        }
    }
}

/// Recognized unit suffixes with their dimension and factor to the canonical unit.
const UNITS: &[(&str, Dimension, f64)] = &[
    ("mm", Dimension::Length, 1.0),
    ("um", Dimension::Length, 1e-3),
    ("m", Dimension::Length, 1e3),
    ("s", Dimension::Time, 1.0),
    ("ms", Dimension::Time, 1e-3),
    ("MPa", Dimension::Stress, 1.0),
    ("GPa", Dimension::Stress, 1e3),
    ("Pa", Dimension::Stress, 1e-6),
    ("C", Dimension::Temperature, 1.0),
    ("per_mm_C", Dimension::PerLengthTemperature, 1.0),
    ("per_C", Dimension::PerTemperature, 1.0),
    ("mm2_per_s", Dimension::Diffusivity, 1.0),
    ("m2_per_s", Dimension::Diffusivity, 1e6),
    ("mm_per_s", Dimension::Velocity, 1.0),
    ("m_per_s", Dimension::Velocity, 1e3),
    ("C_per_s", Dimension::HeatingRate, 1.0),
    ("mm4_per_MPa", Dimension::Penalty, 1.0),
    ("W_per_m_C", Dimension::Conductivity, 1.0),
    ("J_per_m3_C", Dimension::HeatCapacity, 1.0),
    ("W_per_mm2_C", Dimension::HeatTransfer, 1.0),
    ("W_per_m2_C", Dimension::HeatTransfer, 1e-6),
];

fn unit(name: &str) -> Option<(Dimension, f64)> {
    UNITS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, d, f)| (*d, *f))
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn lex(text: &str, errors: &mut Vec<ConfigError>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(ConfigError {
                    line,
                    key: content.to_string(),
                    message: "unterminated section header".into(),
                });
                continue;
            };
            let name = name.trim().to_string();
            if sections.iter().any(|s| s.name == name) {
                errors.push(ConfigError {
                    line,
                    key: format!("[{name}]"),
                    message: "duplicate section".into(),
                });
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError {
                line,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let Some(section) = sections.last_mut() else {
            errors.push(ConfigError {
                line,
                key: key.trim().to_string(),
                message: "key outside of any section".into(),
            });
            continue;
        };
        let key = key.trim().to_string();
        if section.entries.iter().any(|e| e.key == key) {
            errors.push(ConfigError {
                line,
                key: format!("[{}].{key}", section.name),
                message: "duplicate key".into(),
            });
            continue;
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
            used: false,
        });
    }
    sections
}

/// Typed access to one section; records errors and which keys were read.
struct Reader<'a> {
    section: &'a mut Section,
    errors: &'a mut Vec<ConfigError>,
    lines: &'a mut BTreeMap<String, usize>,
}

impl Reader<'_> {
    fn full_key(&self, key: &str) -> String {
        format!("[{}].{key}", self.section.name)
    }

    fn err(&mut self, line: usize, key: &str, message: impl Into<String>) {
        let key = self.full_key(key);
        self.errors.push(ConfigError {
            line,
            key,
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        let full = self.full_key(key);
        let e = self.section.entries.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        self.lines.insert(full, e.line);
        Some((e.value.clone(), e.line))
    }

    fn has(&self, key: &str) -> bool {
        self.section.entries.iter().any(|e| e.key == key)
    }

    fn missing(&mut self, key: &str) {
        let line = self.section.line;
        self.err(line, key, "missing required key");
    }

    /// Numbers followed by a unit of dimension `dim` (or no unit when `dim` is None).
    fn numbers(&mut self, key: &str, dim: Option<Dimension>) -> Option<Vec<f64>> {
        let (value, line) = self.raw(key)?;
        match parse_quantity(&value, dim) {
            Ok(v) => Some(v),
            Err(m) => {
                self.err(line, key, m);
                None
            }
        }
    }

    fn fixed<const N: usize>(
        &mut self,
        key: &str,
        dim: Option<Dimension>,
        required: bool,
    ) -> Option<[f64; N]> {
        if !self.has(key) {
            if required {
                self.missing(key);
            }
            return None;
        }
        let line = self
            .section
            .entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| e.line)
            .unwrap_or(0);
        let v = self.numbers(key, dim)?;
        match <[f64; N]>::try_from(v.as_slice()) {
            Ok(a) => Some(a),
            Err(_) => {
                self.err(line, key, format!("expected {N} number(s), got {}", v.len()));
                None
            }
        }
    }

    fn scalar(&mut self, key: &str, dim: Option<Dimension>) -> Option<f64> {
        self.fixed::<1>(key, dim, true).map(|[v]| v)
    }

    fn opt_scalar(&mut self, key: &str, dim: Option<Dimension>) -> Option<f64> {
        self.fixed::<1>(key, dim, false).map(|[v]| v)
    }

    fn parsed<T>(
        &mut self,
        key: &str,
        required: bool,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Option<T> {
        if !self.has(key) {
            if required {
                self.missing(key);
            }
            return None;
        }
        let (value, line) = self.raw(key)?;
        match f(&value) {
            Ok(v) => Some(v),
            Err(m) => {
                self.err(line, key, m);
                None
            }
        }
    }

    fn finish(self) {
        let name = self.section.name.clone();
        for e in &self.section.entries {
            if !e.used {
                self.errors.push(ConfigError {
                    line: e.line,
                    key: format!("[{name}].{}", e.key),
                    message: "unknown key".into(),
                });
            }
        }
    }
}

fn parse_quantity(value: &str, dim: Option<Dimension>) -> Result<Vec<f64>, String> {
    let mut words: Vec<&str> = value.split_whitespace().collect();
    if let Some(dim) = dim {
        let Some(last) = words.pop() else {
            return Err("missing value".into());
        };
        match unit(last) {
            Some((d, factor)) if d == dim => {
                let v = parse_numbers(&words)?;
                return Ok(v.into_iter().map(|x| x * factor).collect());
            }
            Some((d, _)) => {
                return Err(format!(
                    "unit `{last}` has dimension {d:?}, expected {dim:?} (e.g. `{}`)",
                    dim.canonical()
                ))
            }
            None if last.parse::<f64>().is_ok() => {
                return Err(format!(
                    "missing unit, expected {dim:?} (e.g. `{}`)",
                    dim.canonical()
                ))
            }
            None => return Err(format!("unknown unit `{last}`")),
        }
    }
    if let Some(w) = words.iter().find(|w| unit(w).is_some()) {
        return Err(format!("value is dimensionless but carries unit `{w}`"));
    }
    parse_numbers(&words)
}

fn parse_numbers(words: &[&str]) -> Result<Vec<f64>, String> {
    if words.is_empty() {
        return Err("missing value".into());
    }
    words
        .iter()
        .map(|w| w.parse::<f64>().map_err(|_| format!("`{w}` is not a number")))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{v}`")),
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("`{v}` is not a non-negative integer"))
}

/// `all`, or a selector whose coordinates are followed by a length unit.
fn parse_selector(v: &str) -> Result<EdgeSelector, String> {
    if v.trim() == "all" {
        return Ok(EdgeSelector::All);
    }
    let (body, u) = v.trim().rsplit_once(char::is_whitespace).ok_or("missing unit")?;
    let factor = match unit(u) {
        Some((Dimension::Length, f)) => f,
        Some((d, _)) => return Err(format!("unit `{u}` has dimension {d:?}, expected Length")),
        None => return Err(format!("missing length unit after selector (`{u}`)")),
    };
    let sel: EdgeSelector = body.parse()?;
    Ok(match sel {
        EdgeSelector::All => EdgeSelector::All,
        EdgeSelector::Lines(mut lines) => {
            for l in &mut lines {
                l.value *= factor;
                if let Some(r) = &mut l.range {
                    r[0] *= factor;
                    r[1] *= factor;
                }
            }
            EdgeSelector::Lines(lines)
        }
    })
}

fn parse_points(v: &str) -> Result<Vec<Vec3>, String> {
    let (body, u) = v.trim().rsplit_once(char::is_whitespace).ok_or("missing unit")?;
    let factor = match unit(u) {
        Some((Dimension::Length, f)) => f,
        _ => return Err(format!("expected a length unit, got `{u}`")),
    };
    body.split(';')
        .map(|p| {
            let words: Vec<&str> = p.split_whitespace().collect();
            let v = parse_numbers(&words)?;
            <[f64; 3]>::try_from(v.as_slice())
                .map(|a| a.map(|x| x * factor))
                .map_err(|_| format!("expected 3 coordinates per point, got {}", v.len()))
        })
        .collect()
}

fn rect_of(v: [f64; 4]) -> Rect {
    Rect::new([v[0], v[1]], [v[2], v[3]])
}

/// Parses a configuration document; on failure returns every problem found.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut sections = lex(text, &mut errors);
    let seen = |name: &str| sections.iter().position(|s| s.name == name);
    let required = ["mesh", "time", "penalty"];
    for r in required {
        if seen(r).is_none() {
            errors.push(ConfigError {
                line: 0,
                key: format!("[{r}]"),
                message: "missing section".into(),
            });
        }
    }
    if !sections.iter().any(|s| s.name.starts_with("material.")) {
        errors.push(ConfigError {
            line: 0,
            key: "[material.<region>]".into(),
            message: "missing section".into(),
        });
    }

    let mut name = "custom".to_string();
    let mut mesh = MeshRecipe {
        domain: Rect::new([0.0, 0.0], [1.0, 1.0]),
        reference_length: 1.0,
        refinements: 0,
        regions: vec![],
    };
    let mut materials = BTreeMap::new();
    let mut boundary = BoundaryConfig::default();
    let mut sources = Vec::new();
    let mut support = SupportConfig::default();
    let mut obstacle = Obstacle::None;
    let mut time = TimeConfig::default();
    let mut penalty = PenaltyConfig::default();
    let mut output = OutputConfig::default();
    let mut material_robin: Option<(f64, usize)> = None;

    for section in sections.iter_mut() {
        let header_line = section.line;
        let sname = section.name.clone();
        let mut r = Reader {
            section,
            errors: &mut errors,
            lines: &mut lines,
        };
        match sname.as_str() {
            "scenario" => {
                if let Some(n) = r.parsed("name", true, |v| Ok(v.to_string())) {
                    name = n;
                }
            }
            "mesh" => {
                if let Some(d) = r.fixed::<4>("domain", Some(Dimension::Length), true) {
                    mesh.domain = rect_of(d);
                }
                if let Some(v) = r.scalar("reference_length", Some(Dimension::Length)) {
                    mesh.reference_length = v;
                }
                if let Some(v) = r.parsed("refinements", true, |v| {
                    v.parse::<u32>()
                        .map_err(|_| format!("`{v}` is not a non-negative integer"))
                }) {
                    mesh.refinements = v;
                }
                let region_keys: Vec<String> = r
                    .section
                    .entries
                    .iter()
                    .filter_map(|e| e.key.strip_prefix("region.").map(str::to_string))
                    .collect();
                for rn in region_keys {
                    if let Some(v) = r.fixed::<4>(&format!("region.{rn}"), Some(Dimension::Length), true) {
                        mesh.regions.push(Region {
                            name: rn,
                            rect: rect_of(v),
                        });
                    }
                }
            }
            s if s.starts_with("material.") => {
                let region = s["material.".len()..].to_string();
                let effective = ["mu_bar", "alpha_bar", "diffusivity"];
                let raw_keys = [
                    "alpha",
                    "thickness",
                    "lambda",
                    "mu",
                    "conductivity",
                    "heat_capacity",
                ];
                let uses_raw = raw_keys.iter().any(|k| r.has(k));
                let uses_eff = effective.iter().any(|k| r.has(k));
                if uses_raw && uses_eff {
                    r.err(
                        header_line,
                        "",
                        "give either effective or layer parameters, not both",
                    );
                }
                if uses_raw {
                    let alpha = r.scalar("alpha", Some(Dimension::PerTemperature));
                    let thickness = r.scalar("thickness", Some(Dimension::Length));
                    let lambda = r.scalar("lambda", Some(Dimension::Stress));
                    let mu = r.scalar("mu", Some(Dimension::Stress));
                    let conductivity = r.scalar("conductivity", Some(Dimension::Conductivity));
                    let heat_capacity = r.scalar("heat_capacity", Some(Dimension::HeatCapacity));
                    let heat_transfer = r.opt_scalar("heat_transfer", Some(Dimension::HeatTransfer));
                    if let (
                        Some(alpha),
                        Some(thickness),
                        Some(lambda),
                        Some(mu),
                        Some(conductivity),
                        Some(heat_capacity),
                    ) = (alpha, thickness, lambda, mu, conductivity, heat_capacity)
                    {
                        let raw = RawMaterial {
                            alpha,
                            thickness,
                            lambda,
                            mu,
                            conductivity,
                            heat_capacity,
                            heat_transfer: heat_transfer.unwrap_or(0.0),
                        };
                        match effective_parameters(&raw) {
                            Ok(p) => {
                                materials.insert(region, p.material);
                                if heat_transfer.is_some() {
                                    material_robin = Some((p.robin_velocity, header_line));
                                }
                            }
                            Err(e) => r.err(header_line, "", e.to_string()),
                        }
                    }
                } else {
                    let mu_bar = r.scalar("mu_bar", Some(Dimension::Stress));
                    let alpha_bar = r.scalar("alpha_bar", Some(Dimension::PerLengthTemperature));
                    let diffusivity = r.scalar("diffusivity", Some(Dimension::Diffusivity));
                    if let (Some(mu_bar), Some(alpha_bar), Some(diffusivity)) =
                        (mu_bar, alpha_bar, diffusivity)
                    {
                        materials.insert(
                            region,
                            Material {
                                mu_bar,
                                alpha_bar,
                                diffusivity,
                            },
                        );
                    }
                }
            }
            "boundary" => {
                boundary.dirichlet = r.parsed("dirichlet", false, parse_selector);
                boundary.robin = r.parsed("robin", false, parse_selector);
                if let Some(v) = r.opt_scalar("theta_dirichlet", Some(Dimension::Temperature)) {
                    boundary.theta_dirichlet = v;
                }
                if let Some(v) = r.opt_scalar("ramp", Some(Dimension::Time)) {
                    boundary.ramp = v;
                }
                if let Some(v) = r.opt_scalar("theta_ext", Some(Dimension::Temperature)) {
                    boundary.theta_ext = v;
                }
                if let Some(v) = r.opt_scalar("robin_velocity", Some(Dimension::Velocity)) {
                    boundary.robin_velocity = v;
                }
            }
            s if s.starts_with("source.") => {
                let sname = s["source.".len()..].to_string();
                let shape = r.parsed("shape", true, |v| match v {
                    "disk" | "rect" => Ok(v.to_string()),
                    _ => Err(format!("unknown shape `{v}`, expected `disk` or `rect`")),
                });
                let shape = match shape.as_deref() {
                    Some("disk") => {
                        let c = r.fixed::<2>("center", Some(Dimension::Length), true);
                        let rad = r.scalar("radius", Some(Dimension::Length));
                        c.zip(rad)
                            .map(|(center, radius)| SourceShape::Disk { center, radius })
                    }
                    Some(_) => r
                        .fixed::<4>("rect", Some(Dimension::Length), true)
                        .map(|v| SourceShape::Rect { rect: rect_of(v) }),
                    None => None,
                };
                let rate = r.scalar("rate", Some(Dimension::HeatingRate));
                let until = r.opt_scalar("until", Some(Dimension::Time));
                if let (Some(shape), Some(rate)) = (shape, rate) {
                    sources.push(HeatSource {
                        name: sname,
                        shape,
                        rate,
                        until,
                    });
                }
            }
            "support" => {
                support.clamp = r.parsed("clamp", false, parse_selector);
                if let Some(v) = r.parsed("clamp_regions", false, |v| {
                    Ok(v.split_whitespace().map(str::to_string).collect::<Vec<_>>())
                }) {
                    support.clamp_regions = v;
                }
                support.fix_element_at = r.fixed::<2>("fix_element_at", Some(Dimension::Length), false);
            }
            "obstacle" => {
                let kind = r.parsed("kind", true, |v| Ok(v.to_string()));
                match kind.as_deref() {
                    Some("none") => obstacle = Obstacle::None,
                    Some("half_space") => {
                        if let Some(height) = r.scalar("height", Some(Dimension::Length)) {
                            obstacle = Obstacle::HalfSpace { height };
                        }
                    }
                    Some("spheres") => {
                        let centers = r.parsed("centers", true, parse_points);
                        let radius = r.scalar("radius", Some(Dimension::Length));
                        if let (Some(centers), Some(radius)) = (centers, radius) {
                            obstacle = Obstacle::SphereUnion { centers, radius };
                        }
                    }
                    Some(other) => {
                        let line = r.raw("kind").map(|(_, l)| l).unwrap_or(header_line);
                        r.err(
                            line,
                            "kind",
                            format!("unknown obstacle `{other}`, expected none, half_space or spheres"),
                        );
                    }
                    None => {}
                }
            }
            "time" => {
                if let Some(v) = r.scalar("tau", Some(Dimension::Time)) {
                    time.tau = v;
                }
                if let Some(v) = r.scalar("t_max", Some(Dimension::Time)) {
                    time.t_max = v;
                }
                if let Some(v) = r.opt_scalar("stationary_tol", None) {
                    time.stationary_tol = v;
                }
                if let Some(v) = r.opt_scalar("stationary_after", Some(Dimension::Time)) {
                    time.stationary_after = v;
                }
                if let Some(v) = r.parsed("stop_at_stationary", false, parse_bool) {
                    time.stop_at_stationary = v;
                }
                if let Some(v) = r.opt_scalar("characteristic_time", Some(Dimension::Time)) {
                    time.characteristic_time = v;
                }
                if let Some(v) = r.opt_scalar("characteristic_length", Some(Dimension::Length)) {
                    time.characteristic_length = v;
                }
            }
            "penalty" => {
                if let Some(v) = r.scalar("epsilon", Some(Dimension::Penalty)) {
                    penalty.epsilon = v;
                }
                if let Some(v) = r.parsed("subiterations", false, |v| {
                    v.parse::<u32>()
                        .map_err(|_| format!("`{v}` is not a non-negative integer"))
                }) {
                    penalty.subiterations = v;
                }
                if let Some(v) = r.parsed("solver", false, |v| {
                    v.parse::<SolverKind>().map_err(|e| e.to_string())
                }) {
                    penalty.solver = v;
                }
            }
            "output" => {
                output.snapshot_every = r.parsed("snapshot_every", false, parse_usize);
                if let Some(v) = r.parsed("snapshot_times", false, |v| {
                    if v.trim() == "none" {
                        Ok(vec![])
                    } else {
                        parse_quantity(v, Some(Dimension::Time))
                    }
                }) {
                    output.snapshot_times = v;
                }
            }
            other => {
                r.errors.push(ConfigError {
                    line: header_line,
                    key: format!("[{other}]"),
                    message: "unknown section".into(),
                });
                for e in r.section.entries.iter_mut() {
                    e.used = true;
                }
            }
        }
        r.finish();
    }
    if let Some((v, line)) = material_robin {
        if sections
            .iter()
            .any(|s| s.name == "boundary" && s.entries.iter().any(|e| e.key == "robin_velocity"))
        {
            errors.push(ConfigError {
                line,
                key: "heat_transfer".into(),
                message: "Robin velocity given both directly and through heat_transfer".into(),
            });
        } else {
            boundary.robin_velocity = v;
        }
    }

    let config = ScenarioConfig {
        name,
        mesh,
        materials,
        boundary,
        sources,
        support,
        obstacle,
        time,
        penalty,
        output,
    };
    if errors.is_empty() {
        for issue in config.issues() {
            let line = lines.get(&issue.key).copied().unwrap_or(0);
            errors.push(ConfigError {
                line,
                key: issue.key,
                message: issue.message,
            });
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text).map_err(Error::Config)
}

fn q(out: &mut String, key: &str, values: &[f64], unit: &str) {
    let _ = write!(out, "{key} =");
    for v in values {
        let _ = write!(out, " {v:?}");
    }
    if unit.is_empty() {
        out.push('\n');
    } else {
        let _ = writeln!(out, " {unit}");
    }
}

fn selector_text(sel: &EdgeSelector) -> String {
    match sel {
        EdgeSelector::All => "all".into(),
        lines => format!("{lines} mm"),
    }
}

fn point_text(p: Point2) -> [f64; 2] {
    p
}

/// Canonical text form; `parse_config_str(&serialize_config(c)) == Ok(c)`.
pub fn serialize_config(c: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[scenario]\nname = {}\n", c.name);

    s.push_str("[mesh]\n");
    let d = c.mesh.domain;
    q(
        &mut s,
        "domain",
        &[d.lower[0], d.lower[1], d.upper[0], d.upper[1]],
        "mm",
    );
    q(&mut s, "reference_length", &[c.mesh.reference_length], "mm");
    let _ = writeln!(s, "refinements = {}", c.mesh.refinements);
    for r in &c.mesh.regions {
        let x = r.rect;
        q(
            &mut s,
            &format!("region.{}", r.name),
            &[x.lower[0], x.lower[1], x.upper[0], x.upper[1]],
            "mm",
        );
    }

    for (name, m) in &c.materials {
        let _ = writeln!(s, "\n[material.{name}]");
        q(&mut s, "mu_bar", &[m.mu_bar], "MPa");
        q(&mut s, "alpha_bar", &[m.alpha_bar], "per_mm_C");
        q(&mut s, "diffusivity", &[m.diffusivity], "mm2_per_s");
    }

    s.push_str("\n[boundary]\n");
    let b = &c.boundary;
    if let Some(sel) = &b.dirichlet {
        let _ = writeln!(s, "dirichlet = {}", selector_text(sel));
    }
    q(&mut s, "theta_dirichlet", &[b.theta_dirichlet], "C");
    q(&mut s, "ramp", &[b.ramp], "s");
    if let Some(sel) = &b.robin {
        let _ = writeln!(s, "robin = {}", selector_text(sel));
    }
    q(&mut s, "theta_ext", &[b.theta_ext], "C");
    q(&mut s, "robin_velocity", &[b.robin_velocity], "mm_per_s");

    for src in &c.sources {
        let _ = writeln!(s, "\n[source.{}]", src.name);
        match &src.shape {
            SourceShape::Disk { center, radius } => {
                s.push_str("shape = disk\n");
                q(&mut s, "center", &point_text(*center), "mm");
                q(&mut s, "radius", &[*radius], "mm");
            }
            SourceShape::Rect { rect } => {
                s.push_str("shape = rect\n");
                q(
                    &mut s,
                    "rect",
                    &[rect.lower[0], rect.lower[1], rect.upper[0], rect.upper[1]],
                    "mm",
                );
            }
        }
        q(&mut s, "rate", &[src.rate], "C_per_s");
        if let Some(u) = src.until {
            q(&mut s, "until", &[u], "s");
        }
    }

    s.push_str("\n[support]\n");
    if let Some(sel) = &c.support.clamp {
        let _ = writeln!(s, "clamp = {}", selector_text(sel));
    }
    if !c.support.clamp_regions.is_empty() {
        let _ = writeln!(s, "clamp_regions = {}", c.support.clamp_regions.join(" "));
    }
    if let Some(p) = c.support.fix_element_at {
        q(&mut s, "fix_element_at", &p, "mm");
    }

    s.push_str("\n[obstacle]\n");
    match &c.obstacle {
        Obstacle::None => s.push_str("kind = none\n"),
        Obstacle::HalfSpace { height } => {
            s.push_str("kind = half_space\n");
            q(&mut s, "height", &[*height], "mm");
        }
        Obstacle::SphereUnion { centers, radius } => {
            s.push_str("kind = spheres\ncenters =");
            for (i, p) in centers.iter().enumerate() {
                if i > 0 {
                    s.push(';');
                }
                let _ = write!(s, " {:?} {:?} {:?}", p[0], p[1], p[2]);
            }
            s.push_str(" mm\n");
            q(&mut s, "radius", &[*radius], "mm");
        }
    }

    let t = &c.time;
    s.push_str("\n[time]\n");
    q(&mut s, "tau", &[t.tau], "s");
    q(&mut s, "t_max", &[t.t_max], "s");
    q(&mut s, "stationary_tol", &[t.stationary_tol], "");
    q(&mut s, "stationary_after", &[t.stationary_after], "s");
    let _ = writeln!(s, "stop_at_stationary = {}", t.stop_at_stationary);
    q(&mut s, "characteristic_time", &[t.characteristic_time], "s");
    q(&mut s, "characteristic_length", &[t.characteristic_length], "mm");

    s.push_str("\n[penalty]\n");
    q(&mut s, "epsilon", &[c.penalty.epsilon], "mm4_per_MPa");
    let _ = writeln!(s, "subiterations = {}", c.penalty.subiterations);
    let _ = writeln!(s, "solver = {}", c.penalty.solver.as_str());

    s.push_str("\n[output]\n");
    if let Some(n) = c.output.snapshot_every {
        let _ = writeln!(s, "snapshot_every = {n}");
    }
    if c.output.snapshot_times.is_empty() {
        s.push_str("snapshot_times = none\n");
    } else {
        q(&mut s, "snapshot_times", &c.output.snapshot_times, "s");
    }
    s
}
