use std::io::{BufRead, Write};

use super::IoError;
use crate::runtime::TracePoint;

const HEADER: &str = "barrier_index,wall_clock_ms,training_loss";

/// Writes the loss trace as CSV with a header row.
pub fn write_trace<W: Write>(trace: &[TracePoint], mut out: W) -> Result<(), IoError> {
    writeln!(out, "{HEADER}")?;
    for p in trace {
        writeln!(out, "{},{:?},{:?}", p.barrier, p.wall_clock_ms, p.loss)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TracePoint>, IoError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line_no == 1 {
            if line.trim() != HEADER {
                return Err(IoError::Malformed {
                    line: 1,
                    reason: format!("expected header {HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| IoError::Malformed {
            line: line_no,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("expected 3 comma-separated fields"));
        }
        out.push(TracePoint {
            barrier: fields[0].parse().map_err(|_| bad("bad barrier index"))?,
            wall_clock_ms: fields[1].parse().map_err(|_| bad("bad wall clock"))?,
            loss: fields[2].parse().map_err(|_| bad("bad loss"))?,
        });
    }
    Ok(out)
}
