//! File formats: long-format panel CSV, graph/fit JSON, effect CSV and
//! trace JSON lines. Floats are written with 17 significant digits so every
//! value round-trips exactly. Writes go through a temporary file in the
//! target directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::datagen::GroundTruth;
use crate::effect::EffectPoint;
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, GraphSequence, PanelTensor};
use crate::solver::{FitResult, TraceRecord};

/// Scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses long-format panel CSV text: header `t,unit,<var_1>,...,<var_p>`,
/// one row per `(t, unit)`, `t` in `1..=T` and `unit` in `1..=m`, every
/// cell present exactly once. Rows may come in any order.
pub fn parse_panel_csv(text: &str, path: &Path) -> Result<PanelTensor> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "t" || cols[1] != "unit" {
        return Err(parse_err(
            path,
            hline,
            "header must be `t,unit,<var_1>,...,<var_p>` with at least one variable",
        ));
    }
    let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    if let Some(n) = names.iter().find(|n| n.is_empty()) {
        return Err(parse_err(path, hline, format!("empty variable name {n:?}")));
    }
    let p = names.len();
    let mut rows: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != p + 2 {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} fields, found {}", p + 2, cells.len()),
            ));
        }
        let idx = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| {
                parse_err(
                    path,
                    ln,
                    format!("{what} must be a positive integer, got {s:?}"),
                )
            })
        };
        let t = idx(cells[0], "t")?;
        let u = idx(cells[1], "unit")?;
        let mut vals = Vec::with_capacity(p);
        for (j, c) in cells[2..].iter().enumerate() {
            let v: f64 = c.parse().map_err(|_| {
                parse_err(
                    path,
                    ln,
                    format!("column {:?}: {c:?} is not a number", names[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    ln,
                    format!("column {:?}: non-finite value", names[j]),
                ));
            }
            vals.push(v);
        }
        rows.push((ln, t, u, vals));
    }
    if rows.is_empty() {
        return Err(parse_err(path, hline, "no data rows"));
    }
    let t_len = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let m = rows.iter().map(|r| r.2).max().unwrap_or(0);
    let mut seen = vec![false; t_len * m];
    let mut values = vec![0.0; t_len * m * p];
    for (ln, t, u, vals) in &rows {
        let cell = (t - 1) * m + (u - 1);
        if std::mem::replace(&mut seen[cell], true) {
            return Err(parse_err(
                path,
                *ln,
                format!("duplicate row for t = {t}, unit = {u}"),
            ));
        }
        values[cell * p..(cell + 1) * p].copy_from_slice(vals);
    }
    if let Some(cell) = seen.iter().position(|s| !s) {
        let last = rows.last().map_or(hline, |r| r.0);
        return Err(parse_err(
            path,
            last,
            format!(
                "missing row for t = {}, unit = {}; t must run over 1..={t_len} and unit over 1..={m}",
                cell / m + 1,
                cell % m + 1
            ),
        ));
    }
    PanelTensor::new(t_len, m, p, values)?.with_names(names)
}

pub fn read_panel_csv(path: &Path) -> Result<PanelTensor> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_panel_csv(&text, path)
}

/// Variable names, or `x1..xp` when the panel has none.
pub fn variable_names(data: &PanelTensor) -> Vec<String> {
    data.names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=data.p()).map(|i| format!("x{i}")).collect())
}

pub fn panel_to_csv(data: &PanelTensor) -> String {
    let mut out = String::from("t,unit");
    for n in variable_names(data) {
        out.push(',');
        out.push_str(&n);
    }
    out.push('\n');
    for t in 1..=data.t_len() {
        for u in 0..data.m() {
            out.push_str(&format!("{t},{}", u + 1));
            for v in 0..data.p() {
                out.push(',');
                out.push_str(&format_f64(data.get(t, u, v)));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_panel_csv(path: &Path, data: &PanelTensor) -> Result<()> {
    write_atomic(path, panel_to_csv(data).as_bytes())
}

struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }
}

/// Compact JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_string(value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDoc {
    pub order: usize,
    pub knots: Vec<f64>,
    pub domain_end_extension: f64,
}

/// Shared document for fitted and true graph sequences. Matrices are lists
/// of rows. Coefficient and optimizer fields are `null` for ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub p: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub d: usize,
    pub threshold: f64,
    pub names: Option<Vec<String>>,
    pub basis: Option<BasisDoc>,
    pub gamma: Option<Vec<Vec<f64>>>,
    pub tau: Option<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "W")]
    pub w: Option<Vec<Vec<Vec<f64>>>>,
    pub predicted: Vec<bool>,
    pub final_score: Option<f64>,
    pub final_h1: Option<f64>,
    pub converged: Option<bool>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |r, c| rows[r][c]))
}

impl GraphDocument {
    pub fn from_fit(fit: &FitResult, names: Option<Vec<String>>) -> Self {
        let g = fit.graphs_with_prediction();
        let basis = &fit.coef.basis;
        Self {
            p: fit.coef.p(),
            t_len: fit.t_len,
            k: Some(basis.n_basis()),
            d: fit.coef.d,
            threshold: g.threshold,
            names,
            basis: Some(BasisDoc {
                order: basis.order(),
                knots: basis.knots().to_vec(),
                domain_end_extension: basis.domain_end_extension(),
            }),
            gamma: Some(matrix_to_rows(&fit.coef.gamma)),
            tau: fit.coef.tau.as_ref().map(matrix_to_rows),
            times: g.times.clone(),
            b: g.b.iter().map(matrix_to_rows).collect(),
            w: g.w.as_ref().map(|w| w.iter().map(matrix_to_rows).collect()),
            predicted: g.predicted.clone(),
            final_score: Some(fit.final_score),
            final_h1: Some(fit.final_h1),
            converged: Some(fit.converged),
        }
    }

    pub fn from_truth(truth: &GroundTruth, names: Option<Vec<String>>) -> Self {
        let g = &truth.graphs;
        Self {
            p: truth.p(),
            t_len: truth.t_len(),
            k: None,
            d: truth.d,
            threshold: g.threshold,
            names,
            basis: None,
            gamma: None,
            tau: None,
            times: g.times.clone(),
            b: g.b.iter().map(matrix_to_rows).collect(),
            w: g.w.as_ref().map(|w| w.iter().map(matrix_to_rows).collect()),
            predicted: g.predicted.clone(),
            final_score: None,
            final_h1: None,
            converged: None,
        }
    }

    pub fn graphs(&self) -> Result<GraphSequence> {
        let b = self
            .b
            .iter()
            .map(|m| rows_to_matrix(m))
            .collect::<Result<Vec<_>>>()?;
        let w = match &self.w {
            None => None,
            Some(ws) => Some(
                ws.iter()
                    .map(|m| rows_to_matrix(m))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let mut g = GraphSequence::new(self.times.clone(), b, w, self.threshold)?;
        if self.predicted.len() != g.len() {
            return Err(Error::DimensionMismatch(
                "predicted flags do not match times".into(),
            ));
        }
        g.predicted = self.predicted.clone();
        if g.p() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "p = {} but matrices are {}x{}",
                self.p,
                g.p(),
                g.p()
            )));
        }
        Ok(g)
    }

    pub fn coefficients(&self) -> Result<Option<CoefficientSet>> {
        let (Some(bd), Some(gamma)) = (&self.basis, &self.gamma) else {
            return Ok(None);
        };
        let basis = BasisConfig::from_knots(bd.order, bd.knots.clone())?
            .with_domain_end_extension(bd.domain_end_extension);
        let tau = self.tau.as_ref().map(|t| rows_to_matrix(t)).transpose()?;
        Ok(Some(CoefficientSet::new(
            rows_to_matrix(gamma)?,
            tau,
            basis,
            self.d,
        )?))
    }
}

pub fn effect_csv(points: &[EffectPoint]) -> String {
    let mut out = String::from("t,effect,is_predicted\n");
    for pt in points {
        out.push_str(&format!(
            "{},{},{}\n",
            format_f64(pt.t),
            format_f64(pt.effect),
            pt.is_predicted
        ));
    }
    out
}

pub fn write_effect_csv(path: &Path, points: &[EffectPoint]) -> Result<()> {
    write_atomic(path, effect_csv(points).as_bytes())
}

/// One JSON object per line.
pub fn trace_jsonl(trace: &[TraceRecord]) -> String {
    trace.iter().map(to_json_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_panel() {
        let text = "t,unit,a,y\n1,1,0.5,1\n2,1,-2,3e-3\n";
        let x = parse_panel_csv(text, Path::new("mem.csv")).unwrap();
        assert_eq!((x.t_len(), x.m(), x.p()), (2, 1, 2));
        assert_eq!(x.get(2, 0, 1), 3e-3);
        assert_eq!(x.names().unwrap(), &["a".to_string(), "y".to_string()]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("t,unit\n", 1),
            ("t,unit,a\n1,1,x\n", 2),
            ("t,unit,a\n1,1,1\n1,1,2\n", 3),
            ("t,unit,a,b\n1,1,1\n", 2),
            ("t,unit,a\n1,1,1\n3,1,1\n", 3),
            ("t,unit,a\n0,1,1\n", 2),
        ];
        for (text, line) in cases {
            match parse_panel_csv(text, Path::new("f.csv")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn float_text_round_trips() {
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            1e308,
            f64::MIN_POSITIVE,
            123456789.12345679,
        ] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_floats_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, -7.0e-12];
        let s = to_json_string(&v);
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
