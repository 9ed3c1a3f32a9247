//! Reference constructions of branch lengths, used only to cross-check the
//! event-driven builder. Both enumerate all `m(m-1)/2` line crossings and are
//! meant for small inputs.

use std::collections::BTreeMap;

use crate::engine::MarkedConfig;
use crate::error::{Error, Result};
use crate::geom::{line_crossing, BranchId, ExtLength, Sign, EPS_GEOM};

/// Largest configuration the oracles accept.
pub const MAX_ORACLE_SEEDS: usize = 200;

pub type BranchLengths = BTreeMap<BranchId, ExtLength>;

/// A crossing seen from the branch that reaches it at `s_self`.
#[derive(Clone, Copy, Debug)]
struct Hit {
    s_self: f64,
    other: usize,
    s_other: f64,
}

struct Crossings {
    ids: Vec<BranchId>,
    /// Per branch, every crossing of its ray with another branch, by arrival.
    hits: Vec<Vec<Hit>>,
}

fn slot(i: usize, t: f64) -> usize {
    2 * i + usize::from(t < 0.0)
}

fn enumerate(config: &MarkedConfig) -> Result<Crossings> {
    let m = config.len();
    if m > MAX_ORACLE_SEEDS {
        return Err(Error::domain(format!("oracles are limited to {MAX_ORACLE_SEEDS} seeds, got {m}")));
    }
    let pts = config.points();
    let ids = pts.iter().flat_map(|p| Sign::BOTH.map(|s| BranchId::new(p.id, s))).collect();
    let mut hits = vec![Vec::new(); 2 * m];
    for i in 0..m {
        let (oi, di) = (pts[i].position, pts[i].direction());
        for j in i + 1..m {
            let (oj, dj) = (pts[j].position, pts[j].direction());
            let Some(c) = line_crossing(oi, di, oj, dj)? else {
                continue;
            };
            let (si, sj) = (c.t_a.abs(), c.t_b.abs());
            if si <= EPS_GEOM * (1.0 + oi.norm()) || sj <= EPS_GEOM * (1.0 + oj.norm()) {
                return Err(Error::degenerate(format!("seed {} or {} lies on the other's line", pts[i].id, pts[j].id)));
            }
            if (si - sj).abs() <= EPS_GEOM * (1.0 + si.max(sj)) {
                return Err(Error::degenerate(format!("{} and {} arrive simultaneously", pts[i].id, pts[j].id)));
            }
            let (bi, bj) = (slot(i, c.t_a), slot(j, c.t_b));
            hits[bi].push(Hit { s_self: si, other: bj, s_other: sj });
            hits[bj].push(Hit { s_self: sj, other: bi, s_other: si });
        }
    }
    for h in &mut hits {
        h.sort_by(|a, b| a.s_self.total_cmp(&b.s_self));
    }
    Ok(Crossings { ids, hits })
}

fn collect(ids: &[BranchId], lengths: &[f64]) -> BranchLengths {
    ids.iter()
        .zip(lengths)
        .map(|(&id, &l)| (id, if l.is_finite() { ExtLength::Finite(l) } else { ExtLength::Infinite }))
        .collect()
}

/// Earliest crossing on each branch whose other branch, under the current
/// length estimates, got there first and was still present.
fn best_response(cr: &Crossings, lengths: &[f64]) -> Vec<f64> {
    cr.hits
        .iter()
        .map(|hits| {
            hits.iter()
                .find(|h| h.s_other < h.s_self && lengths[h.other] >= h.s_other)
                .map_or(f64::INFINITY, |h| h.s_self)
        })
        .collect()
}

/// Branch lengths as the fixed point of the best-response map, iterated from
/// all-infinite. Each sweep settles at least one more blocking in time order,
/// so at most `m(m-1)/2 + 1` sweeps are needed.
pub fn build_fixedpoint(config: &MarkedConfig) -> Result<BranchLengths> {
    let cr = enumerate(config)?;
    let m = config.len();
    let sweeps = m * m.saturating_sub(1) / 2 + 2;
    let mut lengths = vec![f64::INFINITY; 2 * m];
    for _ in 0..sweeps {
        let next = best_response(&cr, &lengths);
        if next == lengths {
            return Ok(collect(&cr.ids, &lengths));
        }
        lengths = next;
    }
    Err(Error::Internal(format!("fixed point not reached after {sweeps} sweeps")))
}

/// Whether `lengths` reproduces itself under the best-response map.
pub fn is_fixed_point(config: &MarkedConfig, lengths: &BranchLengths) -> Result<bool> {
    let cr = enumerate(config)?;
    let flat: Vec<f64> = cr.ids.iter().map(|id| lengths.get(id).map_or(f64::NAN, |l| l.to_f64())).collect();
    Ok(best_response(&cr, &flat) == flat)
}

/// Branch lengths by advancing a global clock in steps of `dt`.
///
/// In each step every live tip sweeps forward by `dt`. A tip freezes at the
/// first crossing in its swept piece that lies on the grown part of another
/// branch; contacts inside one step are resolved in order of arrival within the
/// step. Steps in which no tip sweeps over a crossing are skipped. A branch
/// still growing after its last crossing is unbounded.
pub fn build_timestep(config: &MarkedConfig, dt: f64) -> Result<BranchLengths> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step must be positive, got {dt}")));
    }
    let cr = enumerate(config)?;
    let nb = cr.ids.len();
    let mut frozen = vec![f64::INFINITY; nb];
    let mut next = vec![0usize; nb];
    let mut step: u64 = 0;
    loop {
        let upcoming = (0..nb)
            .filter(|&b| frozen[b].is_infinite())
            .filter_map(|b| cr.hits[b].get(next[b]).map(|h| h.s_self))
            .fold(f64::INFINITY, f64::min);
        if upcoming.is_infinite() {
            break;
        }
        step = step.max((upcoming / dt).floor() as u64);
        let step_end = (step + 1) as f64 * dt;
        let mut swept = Vec::new();
        for b in 0..nb {
            if frozen[b].is_finite() {
                continue;
            }
            while let Some(h) = cr.hits[b].get(next[b]).filter(|h| h.s_self <= step_end) {
                swept.push((b, *h));
                next[b] += 1;
            }
        }
        swept.sort_by(|x, y| x.1.s_self.total_cmp(&y.1.s_self));
        for (b, h) in swept {
            let grown = h.s_self.min(frozen[h.other]);
            if frozen[b].is_infinite() && h.s_other <= grown {
                frozen[b] = h.s_self;
            }
        }
        step += 1;
    }
    Ok(collect(&cr.ids, &frozen))
}
