//! File formats: seed lists and tessellations as JSON, result tables as CSV,
//! renders as SVG. Every writer is deterministic: the same value always
//! produces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{ray_exit, CollisionEvent, MarkedConfig, Tessellation};
use crate::error::{Error, Result};
use crate::geom::{BranchId, ExtLength, MarkedPoint, Point, SeedId, Sign};
use crate::pointproc::Window;
use crate::stats::TableRow;

/// One entry of a seed file: position and mark angle in radians, `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

/// Parses a JSON list of `{x, y, alpha}`; seeds get ids `0, 1, ...` in order.
pub fn parse_seeds(json: &str) -> Result<MarkedConfig> {
    let records: Vec<SeedRecord> = serde_json::from_str(json)?;
    let points = records
        .iter()
        .enumerate()
        .map(|(i, r)| MarkedPoint::new(SeedId(i as u64), Point::new(r.x, r.y), r.alpha))
        .collect::<Result<Vec<_>>>()?;
    MarkedConfig::new(points)
}

pub fn read_seeds(path: &Path) -> Result<MarkedConfig> {
    parse_seeds(&fs::read_to_string(path)?)
}

pub fn seeds_json(config: &MarkedConfig) -> Result<String> {
    let records: Vec<SeedRecord> =
        config.points().iter().map(|p| SeedRecord { x: p.position.x, y: p.position.y, alpha: p.mark }).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub seed: SeedId,
    pub sign: Sign,
    pub length: ExtLength,
    pub blocker: Option<BranchId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub id: SeedId,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub xi_plus: ExtLength,
    pub xi_minus: ExtLength,
}

/// Serializable view of a built tessellation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TessellationRecord {
    pub window: Option<Window>,
    pub seeds: Vec<SeedSummary>,
    pub branches: Vec<BranchRecord>,
    pub events: Vec<CollisionEvent>,
}

impl TessellationRecord {
    pub fn from_tessellation(tess: &Tessellation) -> Result<Self> {
        let config = tess.config();
        let mut seeds = Vec::with_capacity(config.len());
        let mut branches = Vec::with_capacity(2 * config.len());
        for p in config.points() {
            let (xi_plus, xi_minus) = tess.lengths_of(p.id)?;
            seeds.push(SeedSummary { id: p.id, x: p.position.x, y: p.position.y, alpha: p.mark, xi_plus, xi_minus });
            for sign in Sign::BOTH {
                branches.push(BranchRecord {
                    seed: p.id,
                    sign,
                    length: tess.branch_length(p.id, sign)?,
                    blocker: tess.blocker_of(p.id, sign)?,
                });
            }
        }
        Ok(TessellationRecord { window: config.window(), seeds, branches, events: tess.events().to_vec() })
    }
}

pub fn tessellation_json(tess: &Tessellation) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TessellationRecord::from_tessellation(tess)?)?)
}

fn num(v: f64) -> String {
    // Adding zero turns -0 into +0.
    format!("{:.6}", v + 0.0)
}

/// SVG render: the window frame, one path per branch cut at the window, and
/// a dot per seed. Coordinates are written in model units with the y axis
/// flipped by a group transform.
pub fn svg_string(tess: &Tessellation, window: &Window) -> String {
    let (x0, y0, x1, y1) = window.bounds();
    let (w, h) = (x1 - x0, y1 - y0);
    let size = w.max(h).max(1e-9);
    let stroke = num(size * 0.003);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="800" height="{}">"#,
        num(x0),
        num(y0),
        num(w),
        num(h),
        (800.0 * h / w.max(1e-9)).round().max(1.0) as i64
    );
    let _ = writeln!(s, r#"<g transform="matrix(1 0 0 -1 0 {})">"#, num(y0 + y1));
    let _ = writeln!(
        s,
        r##"<rect class="frame" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888" stroke-width="{stroke}"/>"##,
        num(x0),
        num(y0),
        num(w),
        num(h)
    );
    for (branch, length) in tess.branch_lengths() {
        let seed = tess.config().get(branch.seed).expect("branch of a known seed");
        let ray = seed.branch(branch.sign);
        let exit = ray_exit(ray.origin, ray.direction, *window);
        let end = ray.at(length.to_f64().min(exit));
        let start = if window.contains(ray.origin) { ray.origin } else { end };
        let _ = writeln!(
            s,
            r##"<path class="branch" data-branch="{branch}" d="M {} {} L {} {}" stroke="#1f3a93" stroke-width="{stroke}" fill="none"/>"##,
            num(start.x),
            num(start.y),
            num(end.x),
            num(end.y)
        );
    }
    let r = num(size * 0.006);
    for p in tess.config().points() {
        let _ = writeln!(
            s,
            r##"<circle class="seed" cx="{}" cy="{}" r="{r}" fill="#c0392b"/>"##,
            num(p.position.x),
            num(p.position.y)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn render_svg(tess: &Tessellation, window: &Window, path: &Path) -> Result<()> {
    fs::write(path, svg_string(tess, window))?;
    Ok(())
}

/// Fixed float format for data files: 17 significant digits, which is exact
/// for every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{:.16e}", v + 0.0)
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|e| Error::domain(format!("bad number {s:?}: {e}"))),
    }
}

/// Column names of λ tables, in order.
pub const TABLE_COLUMNS: [&str; 8] =
    ["lambda", "estimate", "std_error", "target", "n_rep", "certified_fraction", "master_seed", "excluded"];

/// Writes CSV with a fixed header and fixed float formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_rows_csv(rows: &[TableRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_f64(r.lambda),
                fmt_f64(r.estimate),
                fmt_f64(r.std_error),
                r.target.map(fmt_f64).unwrap_or_default(),
                r.n_rep.to_string(),
                fmt_f64(r.certified_fraction),
                r.master_seed.to_string(),
                r.excluded.to_string(),
            ]
        })
        .collect()
}

pub fn export_table(rows: &[TableRow], path: &Path) -> Result<()> {
    write_csv(path, &TABLE_COLUMNS, &table_rows_csv(rows))
}

/// Reads a table written by [`export_table`].
pub fn import_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TABLE_COLUMNS {
        return Err(Error::domain(format!("unexpected table header {header:?}")));
    }
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::domain(format!("bad integer {s:?}: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TableRow {
                lambda: parse_f64(&rec[0])?,
                estimate: parse_f64(&rec[1])?,
                std_error: parse_f64(&rec[2])?,
                target: if rec[3].is_empty() { None } else { Some(parse_f64(&rec[3])?) },
                n_rep: int(&rec[4])? as usize,
                certified_fraction: parse_f64(&rec[5])?,
                master_seed: int(&rec[6])?,
                excluded: int(&rec[7])? as usize,
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
