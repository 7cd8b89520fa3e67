use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;

use crate::commands::{Failure, FailureKind};

/// Prints the error object on stderr and picks the exit code.
pub fn fail(f: &Failure) -> ExitCode {
    let kind = match f.kind {
        FailureKind::Config => "config",
        FailureKind::Run => "run",
    };
    eprintln!("{}", serde_json::json!({ "error": kind, "message": f.message }));
    ExitCode::from(match f.kind {
        FailureKind::Config => 2,
        FailureKind::Run => 1,
    })
}

/// One-line JSON summary on stdout.
pub fn summary<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string(value).map_err(Failure::run)?);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(Failure::run)?;
        w.write_all(b"\n").map_err(Failure::run)?;
    }
    w.flush().map_err(Failure::run)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(Failure::run)?;
    }
    w.flush().map_err(Failure::run)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Failure::run)?;
    w.write_all(b"\n").map_err(Failure::run)?;
    w.flush().map_err(Failure::run)
}
