//! Trajectory CSV: one row per communication round.
//!
//! Schema (bit-exact): header
//! `round,train_loss,test_metric,grad_norm,noise_scale,step_size,spike,event`
//! with floats serialized to 17 significant digits so a round-trip read
//! reproduces the records exactly. Run artifacts carry the resolved-config
//! digest in a leading `# config <hex>` comment line; `read_trajectory`
//! accepts files with or without it.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fl::RoundRecord;

pub const TRAJECTORY_HEADER: &str =
    "round,train_loss,test_metric,grad_norm,noise_scale,step_size,spike,event";

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: enough to reproduce any f64 exactly.
    format!("{v:.16e}")
}

fn record_line(r: &RoundRecord) -> String {
    debug_assert!(
        !r.event.contains(',') && !r.event.contains('\n'),
        "event tags must not contain CSV separators"
    );
    let mut line = String::new();
    let _ = write!(
        line,
        "{},{},{},{},{},{},{},{}",
        r.round,
        fmt_f64(r.train_loss),
        fmt_f64(r.test_metric),
        fmt_f64(r.grad_norm),
        fmt_f64(r.noise_scale),
        fmt_f64(r.step_size),
        if r.spike { 1 } else { 0 },
        r.event
    );
    line
}

/// Render records (plus an optional digest line) to CSV text.
pub fn trajectory_to_string(records: &[RoundRecord], digest: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(d) = digest {
        out.push_str("# config ");
        out.push_str(d);
        out.push('\n');
    }
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(records: &[RoundRecord], path: &Path) -> Result<()> {
    std::fs::write(path, trajectory_to_string(records, None)).map_err(|e| Error::io(path, e))
}

/// Write a run artifact: digest comment line, then the standard CSV.
pub fn write_trajectory_with_digest(
    records: &[RoundRecord],
    digest: &str,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, trajectory_to_string(records, Some(digest)))
        .map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line_no: usize) -> Result<T> {
    field.parse().map_err(|_| {
        Error::Format(format!(
            "trajectory line {line_no}: cannot parse {name} from `{field}`"
        ))
    })
}

/// Parse a trajectory file; returns the records and the embedded config
/// digest when present.
pub fn read_trajectory(path: &Path) -> Result<(Vec<RoundRecord>, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text)
}

pub fn parse_trajectory(text: &str) -> Result<(Vec<RoundRecord>, Option<String>)> {
    let mut digest = None;
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, line)) = lines.peek() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(d) = rest.trim().strip_prefix("config ") {
                digest = Some(d.trim().to_string());
            }
            lines.next();
        } else {
            break;
        }
    }
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        Some((n, header)) => {
            return Err(Error::Format(format!(
                "trajectory line {}: unexpected header `{header}`",
                n + 1
            )))
        }
        None => return Err(Error::Format("trajectory file has no header".into())),
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Format(format!(
                "trajectory line {}: expected 8 fields, got {}",
                n + 1,
                fields.len()
            )));
        }
        let spike = match fields[6] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Format(format!(
                    "trajectory line {}: spike must be 0 or 1, got `{other}`",
                    n + 1
                )))
            }
        };
        records.push(RoundRecord {
            round: parse_field(fields[0], "round", n + 1)?,
            train_loss: parse_field(fields[1], "train_loss", n + 1)?,
            test_metric: parse_field(fields[2], "test_metric", n + 1)?,
            grad_norm: parse_field(fields[3], "grad_norm", n + 1)?,
            noise_scale: parse_field(fields[4], "noise_scale", n + 1)?,
            step_size: parse_field(fields[5], "step_size", n + 1)?,
            spike,
            event: fields[7].to_string(),
        });
    }
    Ok((records, digest))
}
