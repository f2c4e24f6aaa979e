//! CSV result files.
//!
//! Columns, in order: `snr_db, sjr_db, rank, receiver, k, m, n, trials,
//! ber_mean, ber_stderr, runtime_mean_s, rpca_iter_mean`. Reals are written
//! in shortest round-trip scientific notation (`1e-2`, `-2e1`, `inf`).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::receiver::ReceiverKind;

pub const CSV_HEADER: [&str; 12] = [
    "snr_db",
    "sjr_db",
    "rank",
    "receiver",
    "k",
    "m",
    "n",
    "trials",
    "ber_mean",
    "ber_stderr",
    "runtime_mean_s",
    "rpca_iter_mean",
];

/// Summary of one (snr, sjr, rank, receiver) sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub sjr_db: f64,
    pub rank: usize,
    pub receiver: ReceiverKind,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Completed trials; fewer than configured means some were aborted.
    pub trials: usize,
    /// Bit errors pooled over all completed trials.
    pub ber_mean: f64,
    /// Sample standard deviation of per-trial BER over `sqrt(trials)`.
    pub ber_stderr: f64,
    pub runtime_mean_s: f64,
    /// Zero for the ICA-only receiver.
    pub rpca_iter_mean: f64,
}

impl ResultRow {
    fn fields(&self) -> [String; 12] {
        [
            format!("{:e}", self.snr_db),
            format!("{:e}", self.sjr_db),
            self.rank.to_string(),
            self.receiver.to_string(),
            self.k.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.trials.to_string(),
            format!("{:e}", self.ber_mean),
            format!("{:e}", self.ber_stderr),
            format!("{:e}", self.runtime_mean_s),
            format!("{:e}", self.rpca_iter_mean),
        ]
    }

    fn parse(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        if record.len() != CSV_HEADER.len() {
            return Err(format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()));
        }
        let real = |i: usize| record[i].parse::<f64>().map_err(|e| format!("{}: {e}", CSV_HEADER[i]));
        let count = |i: usize| record[i].parse::<usize>().map_err(|e| format!("{}: {e}", CSV_HEADER[i]));
        Ok(Self {
            snr_db: real(0)?,
            sjr_db: real(1)?,
            rank: count(2)?,
            receiver: record[3].parse().map_err(|e: Error| e.to_string())?,
            k: count(4)?,
            m: count(5)?,
            n: count(6)?,
            trials: count(7)?,
            ber_mean: real(8)?,
            ber_stderr: real(9)?,
            runtime_mean_s: real(10)?,
            rpca_iter_mean: real(11)?,
        })
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes header and rows to any sink; `path` only labels errors.
pub fn write_csv<W: Write>(rows: &[ResultRow], sink: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the result file, creating parent directories as needed.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(rows, std::io::BufWriter::new(file), path)
}

pub fn parse_csv<R: Read>(source: R, path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err(path))?;
            ResultRow::parse(&rec).map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(std::io::BufReader::new(file), path)
}
