use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde::Serialize;

use crate::config::{CliError, Config};
use crate::{CommonOutput, Format};

fn sink(out: Option<&std::path::Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_rows<T: Serialize>(
    rows: &[T],
    metadata: serde_json::Value,
    out: Option<&std::path::Path>,
    format: Format,
) -> Result<(), CliError> {
    let mut w = sink(out)?;
    match format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for row in rows {
                csv.serialize(row)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            let doc = serde_json::json!({ "metadata": metadata, "rows": rows });
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report<T: Serialize>(cfg: &Config, command: &str, rows: &[T]) -> Result<(), CliError> {
    write_rows(rows, cfg.metadata(command), cfg.out.as_deref(), cfg.format)
}

pub fn write_plain<T: Serialize>(
    output: &CommonOutput,
    command: &str,
    rows: &[T],
) -> Result<(), CliError> {
    let metadata = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
    });
    write_rows(rows, metadata, output.out.as_deref(), output.format)
}
