//! Plain-text target trajectories: one `k x y` line per frame, `k` one-based.

use super::Point;
use crate::error::{Error, Result};

/// Parses `k x y` lines. Blank lines and `#` comments are skipped.
/// Returns `(k, point)` pairs in file order without checking coverage.
pub fn parse_targets(text: &str) -> Result<Vec<(usize, Point)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Line {
                line: line_no,
                message: format!("expected `k x y`, found {} fields", fields.len()),
            });
        }
        let bad = |what: &str, v: &str| Error::Line { line: line_no, message: format!("invalid {what} `{v}`") };
        let k: usize = fields[0].parse().map_err(|_| bad("frame index", fields[0]))?;
        if k == 0 {
            return Err(Error::Line { line: line_no, message: "frame index is one-based".into() });
        }
        let x: i64 = fields[1].parse().map_err(|_| bad("x", fields[1]))?;
        let y: i64 = fields[2].parse().map_err(|_| bad("y", fields[2]))?;
        out.push((k, Point::new(x, y)));
    }
    Ok(out)
}

/// Orders parsed entries by frame, requiring each of `1..=frames` exactly once.
pub(crate) fn assemble(entries: &[(usize, Point)], frames: usize) -> Result<Vec<Point>> {
    let mut slots: Vec<Option<Point>> = vec![None; frames];
    for &(k, p) in entries {
        let slot = slots
            .get_mut(k - 1)
            .ok_or_else(|| Error::invalid(format!("target for frame {k} but only {frames} frames")))?;
        if slot.replace(p).is_some() {
            return Err(Error::invalid(format!("duplicate target for frame {k}")));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::invalid(format!("missing target for frame {}", i + 1))))
        .collect()
}

pub fn format_targets(targets: &[Point]) -> String {
    targets
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{} {} {}\n", i + 1, p.x, p.y))
        .collect()
}
