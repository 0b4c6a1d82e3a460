use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{ClosedFormReport, ExperimentResult, Fig1Row, Fig2Row, SelfTestCheck};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown output format '{other}' (expected csv or json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// Something with a flat tabular view.
pub trait CsvTable {
    type Row: Serialize;
    const HEADER: &'static [&'static str];
    fn rows(&self) -> Vec<Self::Row>;
}

#[derive(Serialize)]
pub struct UeRow {
    drop: usize,
    cell: usize,
    ue: usize,
    mean_sinr_mc: Option<f64>,
    sinr_std_err_mc: Option<f64>,
    gamma_bar: Option<f64>,
    se_mc: Option<f64>,
    se_mc_first_term_only: Option<f64>,
    se_detequiv: Option<f64>,
    term1_mc: Option<f64>,
    term2_mc: Option<f64>,
    term1_detequiv: Option<f64>,
    term2_detequiv: Option<f64>,
}

impl CsvTable for ExperimentResult {
    type Row = UeRow;
    const HEADER: &'static [&'static str] = &[
        "drop",
        "cell",
        "ue",
        "mean_sinr_mc",
        "sinr_std_err_mc",
        "gamma_bar",
        "se_mc",
        "se_mc_first_term_only",
        "se_detequiv",
        "term1_mc",
        "term2_mc",
        "term1_detequiv",
        "term2_detequiv",
    ];

    fn rows(&self) -> Vec<UeRow> {
        self.ues
            .iter()
            .map(|u| {
                let mc = u.mc.as_ref();
                let de = u.de.as_ref();
                UeRow {
                    drop: u.drop,
                    cell: u.cell,
                    ue: u.ue,
                    mean_sinr_mc: mc.map(|m| m.mean_sinr),
                    sinr_std_err_mc: mc.map(|m| m.sinr_std_err),
                    gamma_bar: de.map(|d| d.gamma_bar),
                    se_mc: mc.map(|m| m.se),
                    se_mc_first_term_only: mc.map(|m| m.se_first_term_only),
                    se_detequiv: de.map(|d| d.se),
                    term1_mc: mc.map(|m| m.mean_first_term),
                    term2_mc: mc.map(|m| m.mean_loss_term),
                    term1_detequiv: de.map(|d| d.first_term),
                    term2_detequiv: de.map(|d| d.loss_term),
                }
            })
            .collect()
    }
}

impl CsvTable for Vec<Fig1Row> {
    type Row = Fig1Row;
    const HEADER: &'static [&'static str] = &["ratio", "K", "M", "sumSE_mc", "sumSE_detequiv", "sumSE_mc_firstterm_only"];

    fn rows(&self) -> Vec<Fig1Row> {
        self.clone()
    }
}

impl CsvTable for Vec<Fig2Row> {
    type Row = Fig2Row;
    const HEADER: &'static [&'static str] = &["ratio", "K", "term1_db_mc", "term2_db_mc", "term1_db_detequiv", "term2_db_detequiv"];

    fn rows(&self) -> Vec<Fig2Row> {
        self.clone()
    }
}

impl CsvTable for ClosedFormReport {
    type Row = ClosedFormReport;
    const HEADER: &'static [&'static str] = &[
        "M",
        "K",
        "L",
        "alpha",
        "rho",
        "rho_tr",
        "nu",
        "mu_star",
        "noise",
        "non_coherent",
        "coherent",
        "gamma_bar_closed_form",
        "gamma_bar_general",
        "rel_diff",
    ];

    fn rows(&self) -> Vec<ClosedFormReport> {
        vec![self.clone()]
    }
}

impl CsvTable for Vec<SelfTestCheck> {
    type Row = SelfTestCheck;
    const HEADER: &'static [&'static str] = &["name", "passed", "detail"];

    fn rows(&self) -> Vec<SelfTestCheck> {
        self.clone()
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Serialization(format!("{other:?}")),
    }
}

/// Writes `value` as CSV (header row first) or pretty JSON.
pub fn emit<T: CsvTable + Serialize, W: Write>(value: &T, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(T::HEADER).map_err(csv_error)?;
            for row in value.rows() {
                w.serialize(row).map_err(csv_error)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, value)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}

/// [`emit`] to a file, or to stdout when `path` is `None`.
pub fn write_output<T: CsvTable + Serialize>(value: &T, path: Option<&Path>, format: Format) -> Result<()> {
    match path {
        Some(p) => emit(value, format, BufWriter::new(File::create(p)?)),
        None => emit(value, format, io::stdout().lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        emit(&Vec::<Fig1Row>::new(), Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ratio,K,M,sumSE_mc,sumSE_detequiv,sumSE_mc_firstterm_only\n");
    }

    #[test]
    fn row_width_matches_header() {
        let rows = vec![Fig2Row {
            ratio: 2,
            k: 4,
            term1_db_mc: 12.5,
            term2_db_mc: -3.25,
            term1_db_detequiv: 12.4,
            term2_db_detequiv: -3.0,
        }];
        let mut buf = Vec::new();
        emit(&rows, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for line in text.lines() {
            assert_eq!(line.split(',').count(), <Vec<Fig2Row>>::HEADER.len());
        }
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("JSON".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
    }
}
