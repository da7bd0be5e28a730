//! CSV/JSON formats and TOML scenario configuration.
//!
//! Matrices are plain comma-separated values, one matrix row per line, with
//! an optional header line. Values are written with 17 significant digits so
//! a write/read cycle reproduces every `f64` exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{GfaError, Result};
use crate::synthesis::{self, LineSpec, LoadingSpec, NoiseSpec, SpaceSpec};
use crate::types::{EigenProfile, GrowthReport, TimeProcess};

/// Formats with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a numeric matrix. Rows and columns in errors are 1-based and
/// count the header line when present.
pub fn read_matrix<R: Read>(reader: R, header: bool) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            GfaError::Parse { row, col: 0, message: e.to_string() }
        })?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(GfaError::Parse {
                    row,
                    col: rec.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| GfaError::Parse {
                row,
                col: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !x.is_finite() {
                return Err(GfaError::Parse { row, col: j + 1, message: format!("non-finite value {cell:?}") });
            }
            values.push(x);
        }
        rows += 1;
    }
    let width = width.ok_or(GfaError::Parse { row: 0, col: 0, message: "empty input".into() })?;
    Array2::from_shape_vec((rows, width), values).map_err(|e| GfaError::Parse { row: 0, col: 0, message: e.to_string() })
}

pub fn read_matrix_file(path: &Path, header: bool) -> Result<Array2<f64>> {
    read_matrix(std::fs::File::open(path)?, header)
}

/// Writes a matrix; `header` names the columns when given.
pub fn write_matrix<W: Write>(writer: W, m: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let csv_err = |e: csv::Error| GfaError::Io(std::io::Error::other(e));
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(GfaError::arg(format!("{} header names for {} columns", h.len(), m.ncols())));
        }
        w.write_record(h).map_err(csv_err)?;
    }
    for row in m.rows() {
        w.write_record(row.iter().map(|&x| format_f64(x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Default column names `c1, c2, ...`.
pub fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_matrix_file(path: &Path, m: &Array2<f64>, header: bool) -> Result<()> {
    let names = header.then(|| column_names("c", m.ncols()));
    write_matrix(std::io::BufWriter::new(std::fs::File::create(path)?), m, names.as_deref())
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Plot-ready eigenvalue curves: `n,k,lambda,ratio,class`.
///
/// `ratio` is the per-doubling growth from the previous grid size (empty on
/// the first); `class` is the detector's verdict for index `k`.
pub fn write_profile_curves<W: Write>(writer: W, profile: &EigenProfile, report: Option<&GrowthReport>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| GfaError::Io(std::io::Error::other(e));
    w.write_record(["n", "k", "lambda", "ratio", "class"]).map_err(csv_err)?;
    for (g, &n) in profile.grid.iter().enumerate() {
        for k in 0..profile.m {
            let ratio = match (g, report) {
                (0, _) | (_, None) => String::new(),
                (_, Some(r)) => format_f64(r.entries[k].ratios[g - 1]),
            };
            let class = report
                .map(|r| serde_json::to_value(r.entries[k].class).ok())
                .and_then(|v| v.and_then(|v| v.as_str().map(str::to_owned)))
                .unwrap_or_default();
            w.write_record([n.to_string(), (k + 1).to_string(), format_f64(profile.eigvals[g][k]), ratio, class])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Matrix as a list of rows, for JSON.
pub fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A synthetic scenario read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Default seed; a command-line seed takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Scenario {
    /// Variance `sigma2` on the diagonal, `rho` off it.
    Exchangeable { n: usize, m: usize, sigma2: f64, rho: f64 },
    /// Loadings `1` and `1 - 2^{-k}`.
    TwoPd {
        n: usize,
        m: usize,
        #[serde(default)]
        noise: Option<NoiseSpec>,
    },
    FactorModel {
        n: usize,
        m: usize,
        loadings: Vec<LoadingSpec>,
        #[serde(default)]
        noise: Option<NoiseSpec>,
    },
    /// Stationary sinusoids with random amplitudes, plus optional noise.
    PdLines {
        n: usize,
        m: usize,
        lines: Vec<LineSpec>,
        #[serde(default)]
        noise: Option<NoiseSpec>,
    },
    /// Separable space-time field `v(k) u(t)`.
    Field { n: usize, t: usize, space: SpaceSpec, time: TimeProcess },
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| GfaError::Config(locate_unknown_key(text, &e.to_string())))
}

/// Tagged tables are buffered before deserialization, so toml reports an
/// unknown key at the enclosing table. Point at the key's own line instead.
fn locate_unknown_key(text: &str, msg: &str) -> String {
    let Some(key) = msg.split("unknown field `").nth(1).and_then(|r| r.split('`').next()) else {
        return msg.to_owned();
    };
    let defines = |line: &str| {
        line.split(['{', ',']).any(|part| {
            part.trim_start().strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
    };
    match text.lines().position(defines) {
        Some(i) => format!("unknown field `{key}` at line {}\n{msg}", i + 1),
        None => msg.to_owned(),
    }
}

pub fn read_config_file(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// The 2-PD loading pair: `f_1 = 1`, `f_2(k) = 1 - 2^{-k}`.
pub fn two_pd_loadings() -> Vec<LoadingSpec> {
    // 2^{-k} vanishes in f64 arithmetic beyond k = 53, so 64 values hold the tail exactly
    vec![LoadingSpec::Constant(1.0), LoadingSpec::Custom((1..=64).map(|k| 1.0 - 0.5f64.powi(k)).collect())]
}

/// Generated data plus the ground truth as JSON.
#[derive(Debug, Clone)]
pub struct Synthesized {
    /// `N x M` ensemble, or `N x T` field.
    pub data: Array2<f64>,
    pub truth: Value,
}

fn factor_scenario(loadings: &[LoadingSpec], noise: Option<&NoiseSpec>, n: usize, m: usize, seed: u64) -> Result<Synthesized> {
    let s = match (loadings.is_empty(), noise) {
        (true, Some(noise)) => synthesis::AggregateSample {
            ensemble: synthesis::gen_idiosyncratic(noise, n, m, seed)?,
            factors: Array2::zeros((0, m)),
            loadings: Array2::zeros((n, 0)),
        },
        (true, None) => return Err(GfaError::Config("scenario needs loadings, noise or both".into())),
        (false, Some(noise)) => synthesis::gen_factor_model(loadings, noise, n, m, seed)?,
        (false, None) => synthesis::gen_aggregate(loadings, n, m, seed)?,
    };
    Ok(Synthesized {
        truth: json!({
            "seed": seed,
            "q": loadings.len(),
            "loading_specs": loadings,
            "noise": noise,
            "loadings": rows(&s.loadings),
            "factors": rows(&s.factors),
        }),
        data: s.ensemble.into_data(),
    })
}

/// Runs the generator described by `cfg`.
pub fn synthesize(cfg: &ScenarioConfig, seed: u64) -> Result<Synthesized> {
    match &cfg.scenario {
        Scenario::Exchangeable { n, m, sigma2, rho } => {
            let space = SpaceSpec::exchangeable(*sigma2, *rho)?;
            let mut s = factor_scenario(&space.loadings, space.noise.as_ref(), *n, *m, seed)?;
            s.truth["sigma2"] = json!(sigma2);
            s.truth["rho"] = json!(rho);
            Ok(s)
        }
        Scenario::TwoPd { n, m, noise } => factor_scenario(&two_pd_loadings(), noise.as_ref(), *n, *m, seed),
        Scenario::FactorModel { n, m, loadings, noise } => factor_scenario(loadings, noise.as_ref(), *n, *m, seed),
        Scenario::PdLines { n, m, lines, noise } => {
            let s = synthesis::gen_pd_stationary(lines, *n, *m, seed)?;
            let mut data = s.ensemble.into_data();
            if let Some(noise) = noise {
                data += synthesis::gen_idiosyncratic(noise, *n, *m, seed)?.data();
            }
            Ok(Synthesized {
                data,
                truth: json!({
                    "seed": seed,
                    "frequencies": s.truth.frequencies(),
                    "lines": s.truth.lines,
                    "noise": noise,
                }),
            })
        }
        Scenario::Field { n, t, space, time } => {
            let s = synthesis::gen_separable_field(space, time, *n, *t, seed)?;
            Ok(Synthesized {
                truth: json!({
                    "seed": seed,
                    "q": space.loadings.len(),
                    "space": space,
                    "time": time,
                    "z": s.z.to_vec(),
                    "v": s.v.to_vec(),
                    "u": s.u.to_vec(),
                    "loadings": rows(&s.loadings),
                }),
                data: s.field.data().clone(),
            })
        }
    }
}
