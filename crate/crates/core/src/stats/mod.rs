//! Monte Carlo estimators for the per-point constants `E(τ)`, `c_φ` and
//! `V(τ)`, and the experiment drivers built on them.
//!
//! Replicate `i` of any estimator runs on `params.substream(i)`. Replicates are
//! evaluated in parallel and collected in index order, so a report depends only
//! on its inputs.

mod experiments;
mod ks;

pub use experiments::{
    clt_experiment, lln_experiment, scaling_check, var_experiment, CltReport, ExperimentOptions, LlnReport,
    ScalingReport, ScalingRow, TableRow, VarReport,
};
pub use ks::{kolmogorov_survival, ks_against, ks_statistic};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Phi;
use crate::geom::{ExtLength, MarkedPoint, Point, SeedId};
use crate::pointproc::{fresh_mark, PointSource, PoissonField, ProcessParams, SplitSource};
use crate::stabilize::{certified_lengths, stab_tail, with_resampling, TailFit, CENTER_ID};

/// Default ceiling on the certification radius.
pub const DEFAULT_M_MAX: u32 = 64;

/// Largest tolerated share of replicates that fail certification.
const MAX_UNCERTIFIED: f64 = 0.10;

/// Seed id of the second inserted point in two-point functionals.
const SECOND_ID: SeedId = SeedId(u64::MAX - 1);

/// Auxiliary streams, kept apart from replicate indices.
pub(crate) fn aux_stream(params: &ProcessParams, k: u64) -> ProcessParams {
    params.substream((1 << 48) | k)
}

const AUX_E: u64 = 1;
const AUX_C0: u64 = 2;
const AUX_TAIL: u64 = 3;
const AUX_PILOT: u64 = 4;

/// Replicates behind the control-variate coefficient of coupled estimators.
const PILOT_REPS: usize = 2000;

/// `ĉ₀` replicates per grid replicate in [`estimate_v`].
const C0_FACTOR: usize = 10;

/// `Ê(τ)` on its own stream, used only to scale zero-mean control terms.
fn pilot_e(phi: Phi, params: &ProcessParams, m_max: u32) -> Result<f64> {
    Ok(estimate_e(phi, PILOT_REPS, &aux_stream(params, AUX_PILOT), m_max)?.estimate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub intensity: f64,
    pub phi: Phi,
    pub master_seed: u64,
    pub stream: u64,
    pub m_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Point>,
}

impl ReportMeta {
    fn new(phi: Phi, params: &ProcessParams, m_max: u32) -> Self {
        ReportMeta {
            intensity: params.intensity,
            phi,
            master_seed: params.master_seed,
            stream: params.stream,
            m_max,
            location: None,
            displacement: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub std_error: f64,
    /// Replicates that entered the estimate.
    pub n_rep: usize,
    pub certified_fraction: f64,
    /// Replicates dropped because they could not be certified.
    pub excluded: usize,
    pub meta: ReportMeta,
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-replicate results in index order; `None` marks an uncertified run.
pub(crate) struct Tally<T> {
    pub values: Vec<T>,
    pub excluded: usize,
}

impl<T> Tally<T> {
    fn certified_fraction(&self) -> f64 {
        self.values.len() as f64 / (self.values.len() + self.excluded) as f64
    }
}

pub(crate) fn replicate<T: Send>(n_rep: usize, f: impl Fn(u64) -> Result<Option<T>> + Sync + Send) -> Result<Tally<T>> {
    let out = (0..n_rep as u64).into_par_iter().map(f).collect::<Result<Vec<_>>>()?;
    let total = out.len();
    let values: Vec<T> = out.into_iter().flatten().collect();
    let excluded = total - values.len();
    if excluded as f64 > MAX_UNCERTIFIED * total as f64 {
        return Err(Error::Harness(format!(
            "{excluded} of {total} replicates could not be certified even after doubling m_max"
        )));
    }
    Ok(Tally { values, excluded })
}

/// Certified lengths of `extras[target]`, doubling `m_max` once on failure.
fn certified_pair(
    source: &dyn PointSource,
    extras: &[MarkedPoint],
    target: usize,
    m_max: u32,
) -> Result<Option<(ExtLength, ExtLength, f64)>> {
    for m in [m_max, m_max.saturating_mul(2)] {
        let r = certified_lengths(source, extras, target, m)?;
        if r.certified {
            return Ok(Some((r.xi_plus, r.xi_minus, r.radius.to_f64())));
        }
    }
    Ok(None)
}

fn check_reps(n_rep: usize, min: usize) -> Result<()> {
    if n_rep < min {
        return Err(Error::domain(format!("need at least {min} replicates, got {n_rep}")));
    }
    Ok(())
}

fn one_point_moment(
    phi: Phi,
    power: i32,
    x: Point,
    n_rep: usize,
    params: &ProcessParams,
    m_max: u32,
) -> Result<EstimatorReport> {
    params.validate()?;
    check_reps(n_rep, 30)?;
    let tally = replicate(n_rep, |i| {
        let (v, _) = with_resampling(&params.substream(i), |p| {
            let field = PoissonField::new(*p)?;
            let center = MarkedPoint::new(CENTER_ID, x, fresh_mark(p, &[0]))?;
            match certified_pair(&field, &[center], 0, m_max)? {
                Some((a, b, _)) => Ok(Some(phi.eval(a, b)?.powi(power))),
                None => Ok(None),
            }
        })?;
        Ok(v)
    })?;
    let (estimate, std_error) = mean_se(&tally.values);
    let mut meta = ReportMeta::new(phi, params, m_max);
    if x != Point::ORIGIN {
        meta.location = Some(x);
    }
    Ok(EstimatorReport {
        estimate,
        std_error,
        n_rep: tally.values.len(),
        certified_fraction: tally.certified_fraction(),
        excluded: tally.excluded,
        meta,
    })
}

/// `Ê(τ)`: mean of `φ(ξ⁺, ξ⁻)` at the origin inserted into the process.
pub fn estimate_e(phi: Phi, n_rep: usize, params: &ProcessParams, m_max: u32) -> Result<EstimatorReport> {
    one_point_moment(phi, 1, Point::ORIGIN, n_rep, params, m_max)
}

/// `ĉ_φ[0]`: mean of `φ²` at the origin. Shares replicates with [`estimate_e`].
pub fn estimate_c0(phi: Phi, n_rep: usize, params: &ProcessParams, m_max: u32) -> Result<EstimatorReport> {
    one_point_moment(phi, 2, Point::ORIGIN, n_rep, params, m_max)
}

/// `ĉ_φ[x]` with the inserted point at `x`.
pub fn estimate_c0_at(phi: Phi, x: Point, n_rep: usize, params: &ProcessParams, m_max: u32) -> Result<EstimatorReport> {
    if !x.is_finite() {
        return Err(Error::domain("location must be finite"));
    }
    one_point_moment(phi, 2, x, n_rep, params, m_max)
}

/// How the `E(τ)²` term of the two-point function is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Centering {
    /// A known value of `E(τ)`.
    Supplied { e: f64 },
    /// `Ê(τ)` co-estimated on an independent stream with as many replicates.
    Independent,
    /// Per replicate, subtract the product computed on two configurations
    /// that agree with the sample near one point each and are independent of
    /// each other. Unbiased for `E(τ)²` and exactly zero at long range.
    Coupled,
}

/// The three fields of one two-point replicate.
struct PairFields {
    p: PoissonField,
    q: PoissonField,
    q2: PoissonField,
    mark_x: f64,
    mark_y: f64,
}

impl PairFields {
    fn new(p: &ProcessParams) -> Result<Self> {
        Ok(PairFields {
            p: PoissonField::tagged(*p, 0)?,
            q: PoissonField::tagged(p.substream(1), 1)?,
            q2: PoissonField::tagged(p.substream(2), 2)?,
            mark_x: fresh_mark(p, &[1]),
            mark_y: fresh_mark(p, &[2]),
        })
    }

    fn x(&self) -> Result<MarkedPoint> {
        MarkedPoint::new(CENTER_ID, Point::ORIGIN, self.mark_x)
    }

    fn y(&self, d: Point) -> Result<MarkedPoint> {
        MarkedPoint::new(SECOND_ID, d, self.mark_y)
    }
}

/// One-point data at the origin, reused across displacements.
struct Anchor {
    value: f64,
    radius: f64,
}

fn anchor(phi: Phi, fields: &PairFields, m_max: u32) -> Result<Option<Anchor>> {
    certified_pair(&fields.p, &[fields.x()?], 0, m_max)?
        .map(|(a, b, radius)| phi.eval(a, b).map(|value| Anchor { value, radius }))
        .transpose()
}

/// Product term `φ(0; P ∪ {x̄, ȳ}) φ(d; P ∪ {x̄, ȳ})`. With `coupled = Some(β)`
/// it returns the difference to `φ(0; P_A ∪ {x̄}) φ(d; P_B ∪ {ȳ})`, where `P_A`
/// and `P_B` replace the far half plane by independent copies, minus a
/// zero-mean control term scaled by `β`.
fn pair_term(
    phi: Phi,
    fields: &PairFields,
    origin: &Anchor,
    d: Point,
    coupled: Option<f64>,
    m_max: u32,
) -> Result<Option<f64>> {
    let (x, y) = (fields.x()?, fields.y(d)?);
    let (dist, half) = (d.norm(), d.norm() / 2.0);
    let Some((a, b, r_y)) = certified_pair(&fields.p, &[y], 0, m_max)? else {
        return Ok(None);
    };
    let alone_y = phi.eval(a, b)?;
    let eval = |src: &dyn PointSource, pts: &[MarkedPoint], t: usize| -> Result<Option<f64>> {
        certified_pair(src, pts, t, m_max)?.map(|(a, b, _)| phi.eval(a, b)).transpose()
    };
    // A value is unchanged by a seed inserted outside its stabilization disc,
    // and by swapping the far half plane when the disc stays on its own side.
    let both = [x, y];
    let f0 = if origin.radius < dist { Some(origin.value) } else { eval(&fields.p, &both, 0)? };
    let fd = if r_y < dist { Some(alone_y) } else { eval(&fields.p, &both, 1)? };
    let (Some(f0), Some(fd)) = (f0, fd) else {
        return Ok(None);
    };
    let Some(beta) = coupled else {
        return Ok(Some(f0 * fd));
    };
    let ga = if origin.radius < half {
        Some(origin.value)
    } else {
        eval(&SplitSource { a: Point::ORIGIN, b: d, near_a: &fields.p, near_b: &fields.q }, &[x], 0)?
    };
    let gb = if r_y < half {
        Some(alone_y)
    } else {
        eval(&SplitSource { a: d, b: Point::ORIGIN, near_a: &fields.p, near_b: &fields.q2 }, &[y], 0)?
    };
    let (Some(ga), Some(gb)) = (ga, gb) else {
        return Ok(None);
    };
    // Both bracketed differences have mean zero, which removes the first-order
    // noise of the swapped halves.
    Ok(Some(f0 * fd - ga * gb - beta * ((origin.value - ga) + (alone_y - gb))))
}

/// `ĉ_φ[0, d]`, the two-point correlation of `φ` with points inserted at the
/// origin and at `displacement`.
pub fn estimate_cxy(
    phi: Phi,
    displacement: Point,
    n_rep: usize,
    params: &ProcessParams,
    m_max: u32,
    centering: Centering,
) -> Result<EstimatorReport> {
    params.validate()?;
    check_reps(n_rep, 30)?;
    if displacement == Point::ORIGIN || !displacement.is_finite() {
        return Err(Error::domain("displacement must be finite and nonzero"));
    }
    let coupled = match centering {
        Centering::Coupled => Some(pilot_e(phi, params, m_max)?),
        _ => None,
    };
    let tally = replicate(n_rep, |i| {
        let (v, _) = with_resampling(&params.substream(i), |p| {
            let fields = PairFields::new(p)?;
            let Some(origin) = anchor(phi, &fields, m_max)? else {
                return Ok(None);
            };
            pair_term(phi, &fields, &origin, displacement, coupled, m_max)
        })?;
        Ok(v)
    })?;
    let (mean, se) = mean_se(&tally.values);
    let (estimate, std_error) = match centering {
        Centering::Coupled => (mean, se),
        Centering::Supplied { e } => (mean - e * e, se),
        Centering::Independent => {
            let e = estimate_e(phi, n_rep, &aux_stream(params, AUX_E), m_max)?;
            (mean - e.estimate.powi(2), (se * se + (2.0 * e.estimate * e.std_error).powi(2)).sqrt())
        }
    };
    let mut meta = ReportMeta::new(phi, params, m_max);
    meta.displacement = Some(displacement);
    Ok(EstimatorReport {
        estimate,
        std_error,
        n_rep: tally.values.len(),
        certified_fraction: tally.certified_fraction(),
        excluded: tally.excluded,
        meta,
    })
}

/// Polar quadrature grid over `B(0, r_max)`: radii `r_max·j/n_radii` for
/// `j = 1..=n_radii` with trapezoid weights, angles `2π(k + ½)/n_angles`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub r_max: f64,
    pub n_angles: usize,
    pub n_radii: usize,
}

impl PolarGrid {
    fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::domain(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.n_angles < 1 || self.n_radii < 2 || !self.n_radii.is_multiple_of(2) {
            return Err(Error::domain("need n_angles >= 1 and an even n_radii >= 2"));
        }
        Ok(())
    }

    /// Nodes with weights `r·w_r·w_θ`; `coarse` keeps every other radius.
    fn nodes(&self, coarse: bool) -> Vec<(Point, f64)> {
        let step = if coarse { 2 } else { 1 };
        let h = self.r_max / self.n_radii as f64 * step as f64;
        let wt = std::f64::consts::TAU / self.n_angles as f64;
        let mut out = Vec::new();
        for j in (step..=self.n_radii).step_by(step) {
            let r = self.r_max * j as f64 / self.n_radii as f64;
            let wr = if j == self.n_radii { h / 2.0 } else { h };
            for k in 0..self.n_angles {
                let th = wt * (k as f64 + 0.5);
                out.push((Point::new(r * th.cos(), r * th.sin()), r * wr * wt));
            }
        }
        out
    }
}

/// Radius where the fitted stabilization tail drops below `1e-3`.
pub fn default_r_max(fit: &TailFit) -> f64 {
    fit.radius_at(1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VReport {
    /// `V̂ = ĉ₀ + τ·Î`.
    pub report: EstimatorReport,
    pub c0: EstimatorReport,
    /// `Î`, the quadrature of `ĉ[0, x]` over `B(0, r_max)`.
    pub integral: f64,
    pub integral_se: f64,
    /// Same quadrature on every other radius.
    pub coarse_integral: f64,
    /// Halving the radial resolution moved `V̂` by more than one se.
    pub refinement_warning: bool,
    /// Heuristic bound on `τ·∫_{|x| > r_max} |c[0, x]| dx` from the fitted
    /// stabilization tail; `None` without a usable fit.
    pub tail_bound: Option<f64>,
    pub grid: PolarGrid,
}

/// `V̂(τ) = ĉ₀ + τ ∫ ĉ[0, x] dx` by polar quadrature of the coupled two-point
/// estimator. All nodes of one replicate share its fields and marks.
pub fn estimate_v(phi: Phi, grid: PolarGrid, n_rep: usize, params: &ProcessParams, m_max: u32) -> Result<VReport> {
    params.validate()?;
    grid.validate()?;
    check_reps(n_rep, 30)?;
    let fine = grid.nodes(false);
    let coarse = grid.nodes(true);
    let beta = pilot_e(phi, params, m_max)?;
    let tally = replicate(n_rep, |i| {
        let (v, _) = with_resampling(&params.substream(i), |p| {
            let fields = PairFields::new(p)?;
            let Some(origin) = anchor(phi, &fields, m_max)? else {
                return Ok(None);
            };
            let mut values = Vec::with_capacity(fine.len());
            for &(d, _) in &fine {
                match pair_term(phi, &fields, &origin, d, Some(beta), m_max)? {
                    Some(v) => values.push(v),
                    None => return Ok(None),
                }
            }
            let fine_sum: f64 = fine.iter().zip(&values).map(|((_, w), v)| w * v).sum();
            let coarse_sum: f64 = coarse
                .iter()
                .map(|(d, w)| {
                    let idx = fine.iter().position(|(q, _)| q == d).expect("coarse nodes are fine nodes");
                    w * values[idx]
                })
                .sum();
            Ok(Some((fine_sum, coarse_sum)))
        })?;
        Ok(v)
    })?;
    let fine_vals: Vec<f64> = tally.values.iter().map(|v| v.0).collect();
    let coarse_vals: Vec<f64> = tally.values.iter().map(|v| v.1).collect();
    let (integral, integral_se) = mean_se(&fine_vals);
    let (coarse_integral, _) = mean_se(&coarse_vals);

    // One-point replicates are cheap next to a full grid, so take more.
    let c0 = estimate_c0(phi, C0_FACTOR * n_rep, &aux_stream(params, AUX_C0), m_max)?;
    let tau = params.intensity;
    let estimate = c0.estimate + tau * integral;
    let std_error = (c0.std_error.powi(2) + (tau * integral_se).powi(2)).sqrt();
    let refinement_warning = tau * (integral - coarse_integral).abs() > std_error;

    let e = estimate_e(phi, C0_FACTOR * n_rep, &aux_stream(params, AUX_C0), m_max)?;
    let tail_bound = tail_bound(&grid, c0.estimate, e.estimate, params, m_max)?;
    let meta = ReportMeta::new(phi, params, m_max);
    let report = EstimatorReport {
        estimate,
        std_error,
        n_rep: tally.values.len(),
        certified_fraction: tally.certified_fraction(),
        excluded: tally.excluded,
        meta,
    };
    Ok(VReport { report, c0, integral, integral_se, coarse_integral, refinement_warning, tail_bound, grid })
}

/// `c[0, x]` vanishes unless one of the two stabilization radii exceeds
/// `|x|/2`. Treating the product of the two values on that event as no
/// larger than `ĉ₀ + Ê²` on average gives `|c[0, x]| <= 2(ĉ₀ + Ê²)·P(R > |x|/2)`;
/// integrating the fitted tail `A e^{-b r}` beyond `r_max` gives the reported
/// value. It is a heuristic, not a proof.
fn tail_bound(grid: &PolarGrid, c0: f64, e: f64, params: &ProcessParams, m_max: u32) -> Result<Option<f64>> {
    let r_grid: Vec<f64> = (1..=60).map(|k| k as f64 * 0.25 / params.intensity.sqrt()).collect();
    let tail = stab_tail(&r_grid, 1000, &aux_stream(params, AUX_TAIL), m_max)?;
    let Some(fit) = tail.fit.filter(|f| f.rate > 0.0) else {
        return Ok(None);
    };
    let a = fit.rate / 2.0;
    let amp = 2.0 * (c0 + e * e) * 2.0 * fit.prefactor;
    let r = grid.r_max;
    let radial = (-a * r).exp() * (r / a + 1.0 / (a * a));
    Ok(Some(params.intensity * std::f64::consts::TAU * amp * radial))
}
