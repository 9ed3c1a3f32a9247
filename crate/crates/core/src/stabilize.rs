//! Whole-plane branch lengths through stabilization.
//!
//! For a point `x` of a marked configuration, the lengths `ξ±` only depend on
//! the seeds within distance `2ξ±` of `x`, and seeds outside that disc can be
//! added without changing them. So if the lengths computed from the seeds in
//! `B(x, m)` satisfy `2·max(ξ⁺, ξ⁻) <= m`, no seed outside the disc can ever
//! alter them: they are the whole-plane values. [`certified_lengths`] grows
//! `m = 1, 2, 3, ...` over one fixed realization until this happens.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{build, MarkedConfig, Tessellation};
use crate::error::{Error, Result};
use crate::geom::{ExtLength, MarkedPoint, Point, SeedId};
use crate::pointproc::{fresh_mark, PointSource, PoissonField, ProcessParams, Window};

/// Seed id used for the point inserted at the query location.
pub const CENTER_ID: SeedId = SeedId(u64::MAX);

/// How many fresh substreams to try when a sampled configuration is degenerate.
const MAX_RESAMPLES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationResult {
    pub xi_plus: ExtLength,
    pub xi_minus: ExtLength,
    /// Radius of the last disc built; the certifying radius when `certified`.
    pub rho_hat: u32,
    /// Stabilization radius `2·max(ξ⁺, ξ⁻)`.
    pub radius: ExtLength,
    pub certified: bool,
    pub windows_tried: u32,
    /// Degenerate realizations discarded before this one.
    pub resamples: u32,
}

impl StabilizationResult {
    pub fn lengths(&self) -> (ExtLength, ExtLength) {
        (self.xi_plus, self.xi_minus)
    }
}

fn stabilization_radius(plus: ExtLength, minus: ExtLength) -> ExtLength {
    match plus.max(minus) {
        ExtLength::Finite(v) => ExtLength::Finite(2.0 * v),
        ExtLength::Infinite => ExtLength::Infinite,
    }
}

/// Certified lengths of `extras[target]` in the configuration formed by the
/// realization `source` together with the inserted points `extras`.
///
/// Builds on `B(x, m)` for `m = 1..=m_max` and stops at the first `m` with
/// `2·max(ξ⁺_m, ξ⁻_m) <= m`. Without certification the last values are
/// returned with `certified = false`.
pub fn certified_lengths(
    source: &dyn PointSource,
    extras: &[MarkedPoint],
    target: usize,
    m_max: u32,
) -> Result<StabilizationResult> {
    if m_max < 1 {
        return Err(Error::domain("m_max must be at least 1"));
    }
    let center = extras
        .get(target)
        .ok_or_else(|| Error::domain(format!("target index {target} out of range")))?;
    let mut last = None;
    for m in 1..=m_max {
        let r = m as f64;
        let mut points = source.points_in_ball(center.position, r);
        points.extend(extras.iter().filter(|p| p.position.dist(center.position) <= r));
        let tess = build(&MarkedConfig::new(points)?)?;
        let (plus, minus) = tess.lengths_of(center.id)?;
        let radius = stabilization_radius(plus, minus);
        let certified = radius.value().is_some_and(|v| v <= r);
        let result = StabilizationResult {
            xi_plus: plus,
            xi_minus: minus,
            rho_hat: m,
            radius,
            certified,
            windows_tried: m,
            resamples: 0,
        };
        if certified {
            return Ok(result);
        }
        last = Some(result);
    }
    Ok(last.expect("m_max >= 1"))
}

/// Runs `f` on the realization for `params`, moving to a fresh substream
/// whenever the sampled configuration turns out degenerate.
pub(crate) fn with_resampling<T>(
    params: &ProcessParams,
    mut f: impl FnMut(&ProcessParams) -> Result<T>,
) -> Result<(T, u32)> {
    let mut current = *params;
    for attempt in 0..=MAX_RESAMPLES {
        match f(&current) {
            Err(e) if e.is_degenerate() && attempt < MAX_RESAMPLES => {
                current = params.substream(attempt + 1);
            }
            Err(e) => return Err(e),
            Ok(v) => return Ok((v, attempt as u32)),
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Whole-plane `(ξ⁺, ξ⁻)` at `center`, inserted with a fresh mark into the
/// marked Poisson process described by `params`.
pub fn whole_plane_xi(center: Point, params: &ProcessParams, m_max: u32) -> Result<StabilizationResult> {
    let (mut result, resamples) = with_resampling(params, |p| {
        let field = PoissonField::new(*p)?;
        let x = MarkedPoint::new(CENTER_ID, center, fresh_mark(p, &[0]))?;
        certified_lengths(&field, &[x], 0, m_max)
    })?;
    result.resamples = resamples;
    Ok(result)
}

/// Whether the window values of `seed` are provably its values for every
/// extension of the configuration outside `window`.
pub fn certify_point(tess: &Tessellation, window: &Window, seed: SeedId) -> Result<bool> {
    let (plus, minus) = tess.lengths_of(seed)?;
    let position = tess.config().get(seed).ok_or(Error::UnknownSeed(seed))?.position;
    Ok(match stabilization_radius(plus, minus) {
        ExtLength::Finite(r) => window.contains_ball(position, r),
        ExtLength::Infinite => false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub r: f64,
    pub survival: f64,
    pub std_error: f64,
}

/// Least-squares line through `(r, ln P̂(R > r))` and the exponential bound
/// `M̂·exp(-Ĉ r)` it suggests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
    /// Rate `Ĉ = -slope`.
    pub rate: f64,
    /// Smallest `M̂` with `P̂(R > r) <= M̂ e^{-Ĉ r}` at every grid radius.
    pub prefactor: f64,
}

impl TailFit {
    /// Radius at which the fitted bound drops to `level`.
    pub fn radius_at(&self, level: f64) -> f64 {
        ((self.prefactor / level).ln() / self.rate).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub intensity: f64,
    pub rows: Vec<TailRow>,
    pub n_rep: usize,
    pub certified: usize,
    pub fit: Option<TailFit>,
}

impl TailReport {
    pub fn certified_fraction(&self) -> f64 {
        self.certified as f64 / self.n_rep as f64
    }
}

/// Empirical survival function of the stabilization radius `R` at the origin,
/// from `n_rep` independent realizations. Uncertified runs count as `R = inf`.
pub fn stab_tail(r_grid: &[f64], n_rep: usize, params: &ProcessParams, m_max: u32) -> Result<TailReport> {
    params.validate()?;
    if n_rep < 100 {
        return Err(Error::domain(format!("stab_tail needs at least 100 replicates, got {n_rep}")));
    }
    let radii = (0..n_rep as u64)
        .into_par_iter()
        .map(|k| whole_plane_xi(Point::ORIGIN, &params.substream(k), m_max))
        .collect::<Result<Vec<_>>>()?;
    let certified = radii.iter().filter(|r| r.certified).count();
    if 2 * certified < n_rep {
        return Err(Error::Harness(format!(
            "only {certified} of {n_rep} runs certified; raise m_max above {m_max}"
        )));
    }
    let values: Vec<f64> =
        radii.iter().map(|r| if r.certified { r.radius.to_f64() } else { f64::INFINITY }).collect();
    let n = n_rep as f64;
    let rows: Vec<TailRow> = r_grid
        .iter()
        .map(|&r| {
            let p = values.iter().filter(|&&v| v > r).count() as f64 / n;
            TailRow { r, survival: p, std_error: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    let fit = fit_exponential_tail(&rows, 0.01);
    Ok(TailReport { intensity: params.intensity, rows, n_rep, certified, fit })
}

/// Fits `ln P̂ = a + b r` over rows with `P̂ >= floor`.
pub fn fit_exponential_tail(rows: &[TailRow], floor: f64) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|row| row.survival >= floor && row.survival > 0.0).map(|row| (row.r, row.survival.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let rate = -slope;
    let prefactor = rows
        .iter()
        .filter(|row| row.survival > 0.0)
        .map(|row| row.survival * (rate * row.r).exp())
        .fold(0.0, f64::max);
    Some(TailFit { slope, intercept, r_squared, points_used: pts.len(), rate, prefactor })
}
