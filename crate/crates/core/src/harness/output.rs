use super::run::ResultRecord;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// One row per trial: `trial, seed, <columns>`. Missing values are empty cells.
pub fn write_csv<W: Write>(record: &ResultRecord, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string(), "seed".to_string()];
    header.extend(record.columns.iter().cloned());
    w.write_record(&header)?;
    for t in &record.trials {
        let mut row = vec![t.trial.to_string(), t.seed.to_string()];
        row.extend(t.values.iter().map(|v| v.map(|x| format!("{x:.16e}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_json<W: Write>(record: &ResultRecord, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, record)?;
    writeln!(out)?;
    out.flush()
}

pub fn read_json(path: &Path) -> io::Result<ResultRecord> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(io::BufReader::new(file))?)
}

/// Writes `<prefix>.csv` and/or `<prefix>.json` and returns the paths written.
pub fn emit(record: &ResultRecord, prefix: &Path, format: Format) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let path = with_extension(prefix, "csv");
        write_csv(record, File::create(&path)?)?;
        written.push(path);
    }
    if matches!(format, Format::Json | Format::Both) {
        let path = with_extension(prefix, "json");
        write_json(record, File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}
