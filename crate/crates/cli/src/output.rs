//! Artifact writers. Every number is printed with 17 significant digits and
//! every column header carries its unit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cavmold::lindblad::Trajectory;
use cavmold::modespace::ModeIndex;
use cavmold::spectra::{DecayCurve, PLMap};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// First header cell of a map CSV.
pub const MAP_CORNER: &str = "time [ps] / wavelength [nm]";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects the files of one run and writes the manifest last.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn finish(mut self, cfg_text: &str, scenario: &str, wall_clock: Duration) -> Result<PathBuf> {
        let manifest = Manifest {
            config_sha256: config_hash(cfg_text),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.to_string(),
            wall_clock_s: wall_clock.as_secs_f64(),
            outputs: self.files.clone(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub tool_version: String,
    pub scenario: String,
    pub wall_clock_s: f64,
    pub outputs: Vec<String>,
}

/// SHA-256 of the canonical config text with line endings normalized, so
/// the hash does not depend on the platform that wrote the file.
pub fn config_hash(text: &str) -> String {
    let canonical = text.replace("\r\n", "\n");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Canonical config text: the validated config serialized back.
pub fn canonical_config(cfg: &RunConfig) -> String {
    let mut s = cfg.to_json();
    s.push('\n');
    s
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

pub fn map_csv(map: &PLMap) -> String {
    let mut out = String::new();
    push_row(&mut out, std::iter::once(MAP_CORNER.to_string()).chain(map.lambda_grid.iter().map(|v| num(*v))));
    for (t, row) in map.t_grid.iter().zip(&map.intensity) {
        push_row(&mut out, std::iter::once(num(*t)).chain(row.iter().map(|v| num(*v))));
    }
    out
}

/// Curves sharing one time grid, one column each.
pub fn curves_csv(columns: &[(String, &DecayCurve)]) -> Result<String> {
    let Some((_, first)) = columns.first() else {
        return Err(CliError::Usage("no curves to write".into()));
    };
    if columns.iter().any(|(_, c)| c.t_grid != first.t_grid) {
        return Err(CliError::Usage("curves do not share a time grid".into()));
    }
    let mut out = String::new();
    push_row(&mut out, std::iter::once("time [ps]".to_string()).chain(columns.iter().map(|(n, _)| n.clone())));
    for (i, t) in first.t_grid.iter().enumerate() {
        push_row(&mut out, std::iter::once(num(*t)).chain(columns.iter().map(|(_, c)| num(c.intensity[i]))));
    }
    Ok(out)
}

pub fn curve_label(c: &DecayCurve, unit: &str) -> String {
    format!("filter {} nm / {} nm [{unit}]", c.center, c.fwhm)
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let mut out = String::new();
    push_row(
        &mut out,
        [
            "time [ps]",
            "emitter population [-]",
            "target photons [-]",
            "fp photons [-]",
            "mode1 photons [-]",
            "mode2 photons [-]",
            "lambda1 [nm]",
            "lambda2 [nm]",
            "q1 [-]",
            "q2 [-]",
            "trace error [-]",
        ]
        .map(String::from),
    );
    for i in 0..traj.len() {
        let m = &traj.modes[i];
        push_row(
            &mut out,
            [
                traj.t[i],
                traj.emitter[i],
                traj.n_t[i],
                traj.n_fp[i],
                traj.n1[i],
                traj.n2[i],
                m.wavelength_nm(ModeIndex::One)?,
                m.wavelength_nm(ModeIndex::Two)?,
                m.q_factor(ModeIndex::One),
                m.q_factor(ModeIndex::Two),
                traj.trace_error[i],
            ]
            .map(num),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_line_endings() {
        assert_eq!(config_hash("{\n}\n"), config_hash("{\r\n}\r\n"));
        assert_eq!(config_hash("").len(), 64);
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1.2136930e15, -2.5e-300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn curves_need_shared_grid() {
        let a = DecayCurve { t_grid: vec![0.0, 1.0], intensity: vec![1.0, 2.0], center: 1552.0, fwhm: 0.5 };
        let b = DecayCurve { t_grid: vec![0.0, 2.0], ..a.clone() };
        assert!(curves_csv(&[("a".into(), &a), ("b".into(), &b)]).is_err());
        let text = curves_csv(&[("a [arb.]".into(), &a)]).unwrap();
        assert!(text.starts_with("time [ps],a [arb.]\n"));
    }
}
