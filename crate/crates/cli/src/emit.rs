//! Deterministic artifact writing: CSV with 17 significant digits and LF line
//! endings, pretty JSON summaries, pdfs re-validated before they are written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qawv::pointer::fmt_sig17;

use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::Config(format!(
                "output directory {} is not writable: {e}",
                root.display()
            ))
        })?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn write_with<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut out = BufWriter::new(file);
        body(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| io_error(&path, e))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    /// Columns of equal length under a header line.
    pub fn write_columns(
        &mut self,
        name: &str,
        header: &[&str],
        columns: &[&[f64]],
    ) -> Result<(), CliError> {
        let rows = columns.first().map_or(0, |c| c.len());
        debug_assert!(columns.iter().all(|c| c.len() == rows));
        self.write_with(name, |out| {
            writeln!(out, "{}", header.join(","))?;
            for k in 0..rows {
                let line: Vec<String> = columns.iter().map(|c| fmt_sig17(c[k])).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            Ok(())
        })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numerical(qawv::Error::InvalidArgument(e.to_string())))?;
        text.push('\n');
        self.write_with(name, |out| out.write_all(text.as_bytes()))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

/// Rejects a pdf column that is negative, non-finite or not normalized.
pub fn validate_pdf(name: &str, pdf: &[f64], spacing: f64, tol: f64) -> Result<(), CliError> {
    if let Some(bad) = pdf.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CliError::Numerical(qawv::Error::InvalidArgument(format!(
            "pdf column {name} has an invalid value {bad}"
        ))));
    }
    let mass = pdf.iter().sum::<f64>() * spacing;
    if (mass - 1.0).abs() > tol {
        return Err(CliError::Numerical(qawv::Error::InvalidArgument(format!(
            "pdf column {name} integrates to {mass}, not 1 within {tol:e}"
        ))));
    }
    Ok(())
}
