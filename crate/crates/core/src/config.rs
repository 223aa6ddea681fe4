//! Run configuration in TOML.
//!
//! Keys are dotted (`noise.sd`); `[noise]` followed by `sd = ...` means the same thing.
//! Unknown keys are errors. Command-line overrides use the same dotted keys with raw
//! values (`--set noise.sd=4`).

use std::fmt::Write as _;
use std::path::PathBuf;

use toml::de::{DeTable, DeValue};

use crate::calibrate::StreamMode;
use crate::error::{Error, Result};
use crate::model::GridSpec;
use crate::noise::{NoiseFamily, NoiseModel};
use crate::synth::PresetName;
use crate::uncertainty::{ProbeSpec, QuadratureSpec, DEFAULT_EPSILON};

/// Column selector for CSV input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnSel {
    /// Zero-based field index; the input has no header.
    Index(usize),
    /// Header name; the first non-comment line is the header.
    Name(String),
}

impl ColumnSel {
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        match s.parse::<usize>() {
            Ok(i) => ColumnSel::Index(i),
            Err(_) => ColumnSel::Name(s.to_string()),
        }
    }
}

impl std::fmt::Display for ColumnSel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSel::Index(i) => write!(f, "{i}"),
            ColumnSel::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub alpha: f64,
    pub gamma: f64,
    pub noise_family: NoiseFamily,
    pub noise_sd: f64,
    /// `None` picks the window from the fitted state.
    pub y_window: (Option<f64>, Option<f64>),
    pub y_nodes: usize,
    pub z_nodes: usize,
    pub epsilon: f64,
    /// Miscoverage `beta`.
    pub level: f64,
    /// Band interval `I`; `None` uses the evaluation range.
    pub band_interval: (Option<f64>, Option<f64>),
    pub probes: ProbeSpec,
    pub eval_low: f64,
    pub eval_high: f64,
    pub eval_points: usize,
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub csv_col: Option<ColumnSel>,
    pub seed: u64,
    pub preset: PresetName,
    pub renormalize: bool,
    pub sim_n: usize,
    pub horizon: usize,
    pub gamma_start: f64,
    pub gamma_step: f64,
    pub calib_seeds: Vec<u64>,
    pub calib_streams: StreamMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::DESK,
            alpha: 1.0,
            gamma: 1.0,
            noise_family: NoiseFamily::Laplace,
            noise_sd: 0.5,
            y_window: (None, None),
            y_nodes: QuadratureSpec::DEFAULT_Y_NODES,
            z_nodes: QuadratureSpec::DEFAULT_Z_NODES,
            epsilon: DEFAULT_EPSILON,
            level: 0.05,
            band_interval: (None, None),
            probes: ProbeSpec::default(),
            eval_low: -8.0,
            eval_high: 10.0,
            eval_points: 181,
            input: None,
            checkpoint: None,
            csv_col: None,
            seed: 1,
            preset: PresetName::Unimodal,
            renormalize: true,
            sim_n: 1000,
            horizon: 1000,
            gamma_start: 0.501,
            gamma_step: 0.001,
            calib_seeds: vec![1],
            calib_streams: StreamMode::PerGamma,
        }
    }
}

/// Every accepted key, in output order.
pub const KEYS: &[&str] = &[
    "grid.paper",
    "grid.mean_min",
    "grid.mean_max",
    "grid.mean_step",
    "grid.var_min",
    "grid.var_max",
    "grid.var_step",
    "schedule.alpha",
    "schedule.gamma",
    "noise.family",
    "noise.sd",
    "quad.y_low",
    "quad.y_high",
    "quad.y_nodes",
    "quad.z_nodes",
    "band.epsilon",
    "band.level",
    "band.a",
    "band.b",
    "band.x_probes",
    "band.pair_probes",
    "eval.low",
    "eval.high",
    "eval.points",
    "io.input",
    "io.checkpoint",
    "io.csv_col",
    "seed",
    "sim.preset",
    "sim.renormalize",
    "sim.n",
    "calib.horizon",
    "calib.gamma_start",
    "calib.gamma_step",
    "calib.seeds",
    "calib.streams",
];

fn err(line: Option<usize>, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Scalar TOML value as the raw text the setters parse.
fn scalar_text(key: &str, v: &DeValue<'_>, line: Option<usize>) -> Result<String> {
    match v {
        DeValue::String(s) => Ok(s.to_string()),
        DeValue::Integer(i) => {
            let digits = i.as_str().replace('_', "");
            let digits = digits
                .trim_start_matches("0x")
                .trim_start_matches("0o")
                .trim_start_matches("0b");
            i64::from_str_radix(digits, i.radix())
                .map(|n| n.to_string())
                .map_err(|_| err(line, format!("{key}: integer out of range")))
        }
        DeValue::Float(f) => Ok(f.as_str().replace('_', "")),
        DeValue::Boolean(b) => Ok(b.to_string()),
        DeValue::Array(items) => items
            .iter()
            .map(|item| match item.get_ref() {
                DeValue::Array(_) | DeValue::Table(_) => {
                    Err(err(line, format!("{key}: nested values are not supported")))
                }
                other => scalar_text(key, other, line),
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(",")),
        DeValue::Datetime(_) => Err(err(line, format!("{key}: dates are not supported"))),
        DeValue::Table(_) => Err(err(line, format!("{key}: expected a value, found a table"))),
    }
}

fn num(key: &str, v: &str, line: Option<usize>) -> Result<f64> {
    let x: f64 = unquote(v)
        .parse()
        .map_err(|_| err(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn count(key: &str, v: &str, line: Option<usize>) -> Result<usize> {
    unquote(v)
        .parse()
        .map_err(|_| err(line, format!("{key}: '{v}' is not a nonnegative integer")))
}

fn boolean(key: &str, v: &str, line: Option<usize>) -> Result<bool> {
    match unquote(v).to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(err(line, format!("{key}: '{v}' is not a boolean"))),
    }
}

fn opt_num(key: &str, v: &str, line: Option<usize>) -> Result<Option<f64>> {
    match unquote(v).to_ascii_lowercase().as_str() {
        "" | "auto" | "none" => Ok(None),
        _ => num(key, v, line).map(Some),
    }
}

fn u64_list(key: &str, v: &str, line: Option<usize>) -> Result<Vec<u64>> {
    let v = v.trim();
    let v = v.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(v);
    let out = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            unquote(s)
                .parse::<u64>()
                .map_err(|_| err(line, format!("{key}: '{s}' is not an integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(err(line, format!("{key}: list is empty")));
    }
    Ok(out)
}

impl RunConfig {
    /// Parse configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge_text(text)?;
        Ok(c)
    }

    /// Apply configuration text on top of the current values.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let doc = DeTable::parse(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            err(line, e.message().trim().to_string())
        })?;
        self.merge_table(text, "", doc.get_ref())
    }

    fn merge_table(&mut self, text: &str, prefix: &str, table: &DeTable<'_>) -> Result<()> {
        // `grid.paper` replaces the whole grid, so it goes before the individual grid keys.
        let mut entries: Vec<_> = table.iter().collect();
        entries.sort_by_key(|(k, _)| !(prefix == "grid" && k.get_ref() == "paper"));
        for (k, v) in entries {
            let key = if prefix.is_empty() {
                k.get_ref().to_string()
            } else {
                format!("{prefix}.{}", k.get_ref())
            };
            let line = Some(line_of(text, k.span().start));
            match v.get_ref() {
                DeValue::Table(inner) => self.merge_table(text, &key, inner)?,
                other => {
                    let raw = scalar_text(&key, other, line)?;
                    self.set_at(&key, &raw, line)?;
                }
            }
        }
        Ok(())
    }

    /// Apply one `key=value` assignment, as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| err(None, format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_at(key, value, None)
    }

    fn set_at(&mut self, key: &str, v: &str, ln: Option<usize>) -> Result<()> {
        match key {
            "grid.paper" => {
                if boolean(key, v, ln)? {
                    self.grid = GridSpec::PAPER;
                } else {
                    self.grid = GridSpec::DESK;
                }
            }
            "grid.mean_min" => self.grid.mean_min = num(key, v, ln)?,
            "grid.mean_max" => self.grid.mean_max = num(key, v, ln)?,
            "grid.mean_step" => self.grid.mean_step = num(key, v, ln)?,
            "grid.var_min" => self.grid.var_min = num(key, v, ln)?,
            "grid.var_max" => self.grid.var_max = num(key, v, ln)?,
            "grid.var_step" => self.grid.var_step = num(key, v, ln)?,
            "schedule.alpha" => self.alpha = num(key, v, ln)?,
            "schedule.gamma" => self.gamma = num(key, v, ln)?,
            "noise.family" => {
                self.noise_family = unquote(v)
                    .parse()
                    .map_err(|e: Error| err(ln, format!("{key}: {e}")))?
            }
            "noise.sd" => self.noise_sd = num(key, v, ln)?,
            "quad.y_low" => self.y_window.0 = opt_num(key, v, ln)?,
            "quad.y_high" => self.y_window.1 = opt_num(key, v, ln)?,
            "quad.y_nodes" => self.y_nodes = count(key, v, ln)?,
            "quad.z_nodes" => self.z_nodes = count(key, v, ln)?,
            "band.epsilon" => self.epsilon = num(key, v, ln)?,
            "band.level" => self.level = num(key, v, ln)?,
            "band.a" => self.band_interval.0 = opt_num(key, v, ln)?,
            "band.b" => self.band_interval.1 = opt_num(key, v, ln)?,
            "band.x_probes" => self.probes.x_probes = count(key, v, ln)?,
            "band.pair_probes" => self.probes.pair_probes = count(key, v, ln)?,
            "eval.low" => self.eval_low = num(key, v, ln)?,
            "eval.high" => self.eval_high = num(key, v, ln)?,
            "eval.points" => self.eval_points = count(key, v, ln)?,
            "io.input" => self.input = Some(PathBuf::from(unquote(v))),
            "io.checkpoint" => self.checkpoint = Some(PathBuf::from(unquote(v))),
            "io.csv_col" => self.csv_col = Some(ColumnSel::parse(unquote(v))),
            "seed" | "sim.seed" => {
                self.seed = unquote(v)
                    .parse()
                    .map_err(|_| err(ln, format!("{key}: '{v}' is not an integer")))?
            }
            "sim.preset" => {
                self.preset = unquote(v)
                    .parse()
                    .map_err(|e: Error| err(ln, format!("{key}: {e}")))?
            }
            "sim.renormalize" => self.renormalize = boolean(key, v, ln)?,
            "sim.n" => self.sim_n = count(key, v, ln)?,
            "calib.horizon" => self.horizon = count(key, v, ln)?,
            "calib.gamma_start" => self.gamma_start = num(key, v, ln)?,
            "calib.gamma_step" => self.gamma_step = num(key, v, ln)?,
            "calib.seeds" => self.calib_seeds = u64_list(key, v, ln)?,
            "calib.streams" => {
                self.calib_streams = match unquote(v) {
                    "per-gamma" => StreamMode::PerGamma,
                    "common" => StreamMode::Common,
                    other => {
                        return Err(err(
                            ln,
                            format!("{key}: '{other}' (expected per-gamma or common)"),
                        ))
                    }
                }
            }
            _ => return Err(err(ln, format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise_family, self.noise_sd).map_err(|e| err(None, e.to_string()))
    }

    /// Band interval, defaulting to the evaluation range.
    pub fn interval(&self) -> (f64, f64) {
        (
            self.band_interval.0.unwrap_or(self.eval_low),
            self.band_interval.1.unwrap_or(self.eval_high),
        )
    }

    /// Canonical TOML listing of every setting; parses back to the same config.
    pub fn to_text(&self) -> String {
        let q = |v: &str| toml::Value::String(v.to_string()).to_string();
        let opt = |v: Option<f64>| v.map_or(q("auto"), |x| format!("{x:?}"));
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| q(&p.display().to_string()));
        let mut s = String::new();
        for key in KEYS {
            let v = match *key {
                "grid.paper" => Some((self.grid == GridSpec::PAPER).to_string()),
                "grid.mean_min" => Some(format!("{:?}", self.grid.mean_min)),
                "grid.mean_max" => Some(format!("{:?}", self.grid.mean_max)),
                "grid.mean_step" => Some(format!("{:?}", self.grid.mean_step)),
                "grid.var_min" => Some(format!("{:?}", self.grid.var_min)),
                "grid.var_max" => Some(format!("{:?}", self.grid.var_max)),
                "grid.var_step" => Some(format!("{:?}", self.grid.var_step)),
                "schedule.alpha" => Some(format!("{:?}", self.alpha)),
                "schedule.gamma" => Some(format!("{:?}", self.gamma)),
                "noise.family" => Some(q(self.noise_family.as_str())),
                "noise.sd" => Some(format!("{:?}", self.noise_sd)),
                "quad.y_low" => Some(opt(self.y_window.0)),
                "quad.y_high" => Some(opt(self.y_window.1)),
                "quad.y_nodes" => Some(self.y_nodes.to_string()),
                "quad.z_nodes" => Some(self.z_nodes.to_string()),
                "band.epsilon" => Some(format!("{:?}", self.epsilon)),
                "band.level" => Some(format!("{:?}", self.level)),
                "band.a" => Some(opt(self.band_interval.0)),
                "band.b" => Some(opt(self.band_interval.1)),
                "band.x_probes" => Some(self.probes.x_probes.to_string()),
                "band.pair_probes" => Some(self.probes.pair_probes.to_string()),
                "eval.low" => Some(format!("{:?}", self.eval_low)),
                "eval.high" => Some(format!("{:?}", self.eval_high)),
                "eval.points" => Some(self.eval_points.to_string()),
                "io.input" => path(&self.input),
                "io.checkpoint" => path(&self.checkpoint),
                "io.csv_col" => self.csv_col.as_ref().map(|c| q(&c.to_string())),
                "seed" => Some(self.seed.to_string()),
                "sim.preset" => Some(q(self.preset.as_str())),
                "sim.renormalize" => Some(self.renormalize.to_string()),
                "sim.n" => Some(self.sim_n.to_string()),
                "calib.horizon" => Some(self.horizon.to_string()),
                "calib.gamma_start" => Some(format!("{:?}", self.gamma_start)),
                "calib.gamma_step" => Some(format!("{:?}", self.gamma_step)),
                "calib.seeds" => Some(format!(
                    "[{}]",
                    self.calib_seeds
                        .iter()
                        .map(u64::to_string)
                        .collect::<Vec<_>>()
                        .join(", ")
                )),
                "calib.streams" => Some(q(self.calib_streams.as_str())),
                _ => unreachable!(),
            };
            if let Some(v) = v {
                let _ = writeln!(s, "{key} = {v}");
            }
        }
        s
    }
}
