//! Plain-text covering export.
//!
//! ```text
//! #boxcov v1 k=2 Q=0e0,0e0;1e0,1e0
//! <level> <center_1..k> <radius_1..k> <flags> <hitCount>
//! ```
//!
//! Reals are written with 17 significant digits. Records are in key order.

use std::io::{BufRead, Write};

use super::{BoxFlags, BoxTree, Rect};
use crate::error::{Error, Result};

const MAGIC: &str = "#boxcov v1";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| real(*v)).collect::<Vec<_>>().join(",")
}

pub fn write_covering<W: Write>(tree: &BoxTree, mut out: W) -> Result<()> {
    let root = tree.root();
    writeln!(
        out,
        "{MAGIC} k={} Q={};{}",
        tree.dim(),
        join(&root.center),
        join(&root.radii)
    )?;
    let mut line = String::new();
    for (key, payload) in tree.iter() {
        let rect = tree.rect(key);
        line.clear();
        line.push_str(&key.level().to_string());
        for v in rect.center.iter().chain(&rect.radii) {
            line.push(' ');
            line.push_str(&real(*v));
        }
        line.push_str(&format!(" {} {}", payload.flags.bits(), payload.hit_count));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_reals(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad real {t:?}: {e}")))
        })
        .collect()
}

/// Reads a covering written by [`write_covering`]. Stored samples are not
/// part of the format, so payloads come back with flags and hit counts only.
pub fn read_covering<R: BufRead>(input: R) -> Result<BoxTree> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))??;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("bad header {header:?}")))?;
    let mut k = None;
    let mut domain = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("k=") {
            k = Some(v.parse::<usize>().map_err(|e| Error::Format(format!("bad k: {e}")))?);
        } else if let Some(v) = field.strip_prefix("Q=") {
            let (c, r) = v
                .split_once(';')
                .ok_or_else(|| Error::Format("Q must be <center>;<radii>".into()))?;
            domain = Some(Rect::new(parse_reals(c)?, parse_reals(r)?)?);
        }
    }
    let k = k.ok_or_else(|| Error::Format("header lacks k".into()))?;
    let domain = domain.ok_or_else(|| Error::Format("header lacks Q".into()))?;
    if domain.dim() != k {
        return Err(Error::Format(format!("k={k} but Q has dimension {}", domain.dim())));
    }
    let mut tree = BoxTree::new(domain);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 * k + 3 {
            return Err(Error::Format(format!(
                "record {}: expected {} fields, found {}",
                lineno + 2,
                2 * k + 3,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Format(format!("record {}: bad {what}", lineno + 2));
        let level: u32 = fields[0].parse().map_err(|_| bad("level"))?;
        let center = fields[1..=k]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("center"))?;
        let flags: u8 = fields[2 * k + 1].parse().map_err(|_| bad("flags"))?;
        let hits: u64 = fields[2 * k + 2].parse().map_err(|_| bad("hit count"))?;
        let key = tree.key_at(&center, level)?.ok_or_else(|| bad("center (outside Q)"))?;
        let payload = tree.insert_key(key);
        payload.flags = BoxFlags::from_bits_truncate(flags);
        payload.hit_count = hits;
    }
    Ok(tree)
}
