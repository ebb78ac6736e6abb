use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// What the `control` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlKind {
    /// λ_FP − λ_t, nm.
    Detuning,
    /// CW power on the FP cavity, mW.
    Power,
}

impl ControlKind {
    pub fn unit(self) -> &'static str {
        match self {
            ControlKind::Detuning => "nm",
            ControlKind::Power => "mW",
        }
    }
}

/// One measured row. `lambda1 <= lambda2`; the Q and error columns follow
/// their wavelengths when a row is reordered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub control: f64,
    /// nm
    pub lambda1: f64,
    pub lambda2: f64,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    /// Emitter decay time, ns.
    pub tau: Option<f64>,
    pub lambda1_err: Option<f64>,
    pub lambda2_err: Option<f64>,
    pub q1_err: Option<f64>,
    pub q2_err: Option<f64>,
    pub tau_err: Option<f64>,
}

impl DataRow {
    pub fn new(control: f64, lambda1: f64, lambda2: f64) -> Self {
        DataRow {
            control,
            lambda1,
            lambda2,
            q1: None,
            q2: None,
            tau: None,
            lambda1_err: None,
            lambda2_err: None,
            q1_err: None,
            q2_err: None,
            tau_err: None,
        }
    }

    fn sorted(mut self) -> Self {
        if self.lambda1 > self.lambda2 {
            std::mem::swap(&mut self.lambda1, &mut self.lambda2);
            std::mem::swap(&mut self.q1, &mut self.q2);
            std::mem::swap(&mut self.lambda1_err, &mut self.lambda2_err);
            std::mem::swap(&mut self.q1_err, &mut self.q2_err);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticrossingData {
    pub control: ControlKind,
    pub rows: Vec<DataRow>,
}

pub const MIN_ROWS: usize = 4;

const COLUMNS: [&str; 11] = [
    "control",
    "lambda1",
    "lambda2",
    "q1",
    "q2",
    "tau",
    "lambda1_err",
    "lambda2_err",
    "q1_err",
    "q2_err",
    "tau_err",
];

fn parse_header(raw: &str) -> (String, Option<String>) {
    let raw = raw.trim();
    match raw.find('[') {
        Some(i) if raw.ends_with(']') => (raw[..i].trim().to_string(), Some(raw[i + 1..raw.len() - 1].trim().to_string())),
        _ => (raw.to_string(), None),
    }
}

impl AnticrossingData {
    pub fn new(control: ControlKind, rows: Vec<DataRow>) -> Result<Self> {
        let data = AnticrossingData { control, rows: rows.into_iter().map(DataRow::sorted).collect() };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < MIN_ROWS {
            return invalid(format!("anticrossing data needs at least {MIN_ROWS} rows, got {}", self.rows.len()));
        }
        let first = &self.rows[0];
        for (i, r) in self.rows.iter().enumerate() {
            let line = i + 2;
            if r.q1.is_some() != first.q1.is_some()
                || r.q2.is_some() != first.q2.is_some()
                || r.tau.is_some() != first.tau.is_some()
            {
                return invalid(format!("row {line}: optional columns must be present in every row"));
            }
            if r.q1.is_some() != r.q2.is_some() {
                return invalid(format!("row {line}: q1 and q2 must be given together"));
            }
            let finite = [r.control, r.lambda1, r.lambda2].iter().all(|v| v.is_finite());
            if !finite || r.lambda1 <= 0.0 {
                return invalid(format!("row {line}: control and wavelengths must be finite and positive"));
            }
            if r.lambda1 > r.lambda2 {
                return invalid(format!("row {line}: lambda1 must not exceed lambda2"));
            }
            if self.control == ControlKind::Power && r.control < 0.0 {
                return invalid(format!("row {line}: power must be >= 0"));
            }
            for (name, v) in [("q1", r.q1), ("q2", r.q2), ("tau", r.tau)] {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return invalid(format!("row {line}: {name} must be > 0"));
                    }
                }
            }
            for (name, v) in [
                ("lambda1_err", r.lambda1_err),
                ("lambda2_err", r.lambda2_err),
                ("q1_err", r.q1_err),
                ("q2_err", r.q2_err),
                ("tau_err", r.tau_err),
            ] {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return invalid(format!("row {line}: {name} must be > 0"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn has_q(&self) -> bool {
        self.rows[0].q1.is_some()
    }

    pub fn has_tau(&self) -> bool {
        self.rows[0].tau.is_some()
    }

    pub fn wavelength_span(&self) -> (f64, f64) {
        self.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.lambda1), hi.max(r.lambda2))
        })
    }

    /// Reads CSV with a header row. Column names are `control`, `lambda1`,
    /// `lambda2`, `q1`, `q2`, `tau` and `*_err` variants, each optionally
    /// followed by a bracketed unit. The unit of `control` (`nm` or `mW`)
    /// selects detuning or power control.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::InvalidInput(format!("line 1: {e}")))?.clone();
        let mut slots: [Option<usize>; 11] = [None; 11];
        let mut control = None;
        for (col, raw) in headers.iter().enumerate() {
            let (name, unit) = parse_header(raw);
            let Some(k) = COLUMNS.iter().position(|c| *c == name) else {
                return invalid(format!("line 1, column {}: unknown column '{raw}'", col + 1));
            };
            if slots[k].is_some() {
                return invalid(format!("line 1, column {}: duplicate column '{name}'", col + 1));
            }
            slots[k] = Some(col);
            let expect = match name.as_str() {
                "control" => {
                    control = Some(match unit.as_deref() {
                        Some("nm") | None => ControlKind::Detuning,
                        Some("mW") => ControlKind::Power,
                        Some(u) => return invalid(format!("line 1, column {}: control unit must be nm or mW, got '{u}'", col + 1)),
                    });
                    None
                }
                "lambda1" | "lambda2" | "lambda1_err" | "lambda2_err" => Some("nm"),
                "tau" | "tau_err" => Some("ns"),
                _ => None,
            };
            if let (Some(e), Some(u)) = (expect, unit.as_deref()) {
                if e != u {
                    return invalid(format!("line 1, column {}: '{name}' must be in {e}, got '{u}'", col + 1));
                }
            }
        }
        for required in 0..3 {
            if slots[required].is_none() {
                return invalid(format!("missing required column '{}'", COLUMNS[required]));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::InvalidInput(format!("line {line}: {e}")))?;
            let get = |k: usize| -> Result<Option<f64>> {
                let Some(col) = slots[k] else { return Ok(None) };
                let cell = rec.get(col).unwrap_or("");
                if cell.is_empty() {
                    return invalid(format!("line {line}, column {}: empty '{}'", col + 1, COLUMNS[k]));
                }
                cell.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::InvalidInput(format!("line {line}, column {}: '{cell}' is not a number", col + 1)))
            };
            rows.push(DataRow {
                control: get(0)?.unwrap(),
                lambda1: get(1)?.unwrap(),
                lambda2: get(2)?.unwrap(),
                q1: get(3)?,
                q2: get(4)?,
                tau: get(5)?,
                lambda1_err: get(6)?,
                lambda2_err: get(7)?,
                q1_err: get(8)?,
                q2_err: get(9)?,
                tau_err: get(10)?,
            });
        }
        Self::new(control.unwrap_or(ControlKind::Detuning), rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    /// Writes the data back as CSV with full round-trip precision.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInput(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        let first = self.rows[0];
        let present: Vec<usize> = (0..COLUMNS.len())
            .filter(|&k| k < 3 || row_values(&first)[k].is_some())
            .collect();
        let header: Vec<String> = present
            .iter()
            .map(|&k| match COLUMNS[k] {
                "control" => format!("control [{}]", self.control.unit()),
                c if c.starts_with("lambda") => format!("{c} [nm]"),
                c if c.starts_with("tau") => format!("{c} [ns]"),
                c => format!("{c} [-]"),
            })
            .collect();
        w.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let vals = row_values(r);
            let rec: Vec<String> = present.iter().map(|&k| format!("{:.16e}", vals[k].unwrap_or(f64::NAN))).collect();
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("writing CSV: {e}")))?;
        Ok(())
    }
}

fn row_values(r: &DataRow) -> [Option<f64>; 11] {
    [
        Some(r.control),
        Some(r.lambda1),
        Some(r.lambda2),
        r.q1,
        r.q2,
        r.tau,
        r.lambda1_err,
        r.lambda2_err,
        r.q1_err,
        r.q2_err,
        r.tau_err,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "control [nm],lambda1 [nm],lambda2 [nm],q1 [-],q2 [-]\n\
        -1.0,1551.0,1552.0,3000,3800\n\
        -0.5,1551.5,1552.1,2500,3000\n\
        0.5,1552.6,1551.9,2000,2100\n\
        1.0,1552.1,1553.0,3700,1300\n";

    #[test]
    fn parses_and_sorts() {
        let d = AnticrossingData::from_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(d.control, ControlKind::Detuning);
        assert!(d.has_q() && !d.has_tau());
        assert_eq!(d.rows[2].lambda1, 1551.9);
        assert_eq!(d.rows[2].q1, Some(2100.0));
    }

    #[test]
    fn minimum_rows() {
        let three: String = SAMPLE.lines().take(4).collect::<Vec<_>>().join("\n");
        let err = AnticrossingData::from_csv(three.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("at least 4 rows"), "{err}");
    }

    #[test]
    fn reports_line_and_column() {
        let bad = SAMPLE.replace("2500", "x");
        let err = AnticrossingData::from_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3, column 4"), "{err}");
        let unknown = SAMPLE.replace("q2 [-]", "qq");
        assert!(AnticrossingData::from_csv(unknown.as_bytes()).is_err());
    }

    #[test]
    fn power_control_and_roundtrip() {
        let csv = SAMPLE.replace("control [nm]", "control [mW]").replace("-1.0,", "0.0,").replace("-0.5,", "2.0,");
        let d = AnticrossingData::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.control, ControlKind::Power);
        let mut out = Vec::new();
        d.to_csv(&mut out).unwrap();
        let back = AnticrossingData::from_csv(out.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
