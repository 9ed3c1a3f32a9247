use serde::{Deserialize, Serialize};

use super::{aux_stream, estimate_e, mean_se, replicate, EstimatorReport, DEFAULT_M_MAX};
use crate::error::{Error, Result};
use crate::functionals::{default_padding, empirical_measure, integrate, Phi, TestFunction};
use crate::pointproc::ProcessParams;
use crate::stats::ks_statistic;

const AUX_LLN: u64 = 1000;
const AUX_VAR: u64 = 2000;
const AUX_CLT: u64 = 3000;
const AUX_SCALING: u64 = 4000;
const AUX_SCALING_V: u64 = 5000;

/// Knobs shared by the window-based experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Padding around `Q_λ`; `None` picks [`default_padding`] at the intensity.
    pub padding: Option<f64>,
    pub m_max: u32,
    /// Replicates behind the `Ê(τ)` used as the LLN target.
    pub e_reps: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions { padding: None, m_max: DEFAULT_M_MAX, e_reps: 20_000 }
    }
}

impl ExperimentOptions {
    fn padding_at(&self, intensity: f64) -> f64 {
        self.padding.unwrap_or_else(|| default_padding(intensity))
    }
}

/// One line of a λ-indexed result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub target: Option<f64>,
    pub n_rep: usize,
    /// Mean over replicates of the certified share of atoms.
    pub certified_fraction: f64,
    pub master_seed: u64,
    /// Atoms with infinite weight, summed over replicates.
    pub excluded: usize,
}

/// `∫ f dμ` for each replicate of one λ, plus certification bookkeeping.
struct Level {
    values: Vec<f64>,
    certified_fraction: f64,
    excluded: usize,
}

fn run_level(
    phi: Phi,
    f: &TestFunction,
    lambda: f64,
    n_rep: usize,
    params: &ProcessParams,
    padding: f64,
) -> Result<Level> {
    let tally = replicate(n_rep, |i| {
        let m = empirical_measure(lambda, &params.substream(i), phi, padding)?;
        let integral = integrate(&m, f);
        Ok(Some((integral.value, m.certified_fraction, integral.excluded)))
    })?;
    let n = tally.values.len() as f64;
    Ok(Level {
        values: tally.values.iter().map(|v| v.0).collect(),
        certified_fraction: tally.values.iter().map(|v| v.1).sum::<f64>() / n,
        excluded: tally.values.iter().map(|v| v.2).sum(),
    })
}

fn check_ladder(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::domain("empty λ list"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::domain("λ values must be positive"));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("λ list must be strictly increasing"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub rows: Vec<TableRow>,
    pub e_hat: EstimatorReport,
    pub f: TestFunction,
}

/// Mean of `λ⁻¹ ∫ f dμ_λ` along a λ ladder, against `τ Ê(τ) ∫ f`.
pub fn lln_experiment(
    phi: Phi,
    f: &TestFunction,
    lambdas: &[f64],
    n_rep: usize,
    params: &ProcessParams,
    opts: &ExperimentOptions,
) -> Result<LlnReport> {
    params.validate()?;
    check_ladder(lambdas)?;
    if n_rep < 2 {
        return Err(Error::domain("need at least 2 replicates"));
    }
    let e_hat = estimate_e(phi, opts.e_reps, &aux_stream(params, AUX_LLN), opts.m_max)?;
    let target = params.intensity * e_hat.estimate * f.integral();
    let padding = opts.padding_at(params.intensity);
    let rows = lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let level = run_level(phi, f, lambda, n_rep, &aux_stream(params, AUX_LLN + 1 + j as u64), padding)?;
            let scaled: Vec<f64> = level.values.iter().map(|v| v / lambda).collect();
            let (estimate, std_error) = mean_se(&scaled);
            Ok(TableRow {
                lambda,
                estimate,
                std_error,
                target: Some(target),
                n_rep,
                certified_fraction: level.certified_fraction,
                master_seed: params.master_seed,
                excluded: level.excluded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LlnReport { rows, e_hat, f: f.clone() })
}

/// Unbiased sample variance and its jackknife standard error.
pub(crate) fn variance_jackknife(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let s1: f64 = dev.iter().sum();
    let s2: f64 = dev.iter().map(|d| d * d).sum();
    let var = (s2 - s1 * s1 / n) / (n - 1.0);
    // Leave-one-out variances from the running sums.
    let m = n - 1.0;
    let loo: Vec<f64> = dev
        .iter()
        .map(|d| {
            let (a, b) = (s1 - d, s2 - d * d);
            (b - a * a / m) / (m - 1.0)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let se = ((n - 1.0) / n * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    (var, se)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarReport {
    pub rows: Vec<TableRow>,
    pub f: TestFunction,
    /// `V̂(τ)` behind the target column, when one was supplied.
    pub v_hat: Option<f64>,
}

/// `λ⁻¹ Var̂[∫ f dμ_λ]` along a λ ladder. The target `τ V̂ ∫ f²` is filled in
/// when `v_hat` is given.
pub fn var_experiment(
    phi: Phi,
    f: &TestFunction,
    lambdas: &[f64],
    n_rep: usize,
    params: &ProcessParams,
    opts: &ExperimentOptions,
    v_hat: Option<f64>,
) -> Result<VarReport> {
    params.validate()?;
    check_ladder(lambdas)?;
    if n_rep < 50 {
        return Err(Error::domain(format!("variance experiments need at least 50 replicates, got {n_rep}")));
    }
    let target = v_hat.map(|v| params.intensity * v * f.integral_of_square());
    let padding = opts.padding_at(params.intensity);
    let rows = lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let level = run_level(phi, f, lambda, n_rep, &aux_stream(params, AUX_VAR + j as u64), padding)?;
            let (var, se) = variance_jackknife(&level.values);
            Ok(TableRow {
                lambda,
                estimate: var / lambda,
                std_error: se / lambda,
                target,
                n_rep,
                certified_fraction: level.certified_fraction,
                master_seed: params.master_seed,
                excluded: level.excluded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarReport { rows, f: f.clone(), v_hat })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub lambda: f64,
    pub n_rep: usize,
    /// `(∫ f dμ − mean) / sd` per replicate, in replicate order.
    pub samples: Vec<f64>,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub mean: f64,
    pub variance: f64,
    pub certified_fraction: f64,
    pub excluded: usize,
    pub master_seed: u64,
}

/// Standardized `∫ f dμ_λ` across replicates, tested against `N(0, 1)`.
pub fn clt_experiment(
    phi: Phi,
    f: &TestFunction,
    lambda: f64,
    n_rep: usize,
    params: &ProcessParams,
    opts: &ExperimentOptions,
) -> Result<CltReport> {
    params.validate()?;
    check_ladder(&[lambda])?;
    if n_rep < 200 {
        return Err(Error::domain(format!("CLT experiments need at least 200 replicates, got {n_rep}")));
    }
    let padding = opts.padding_at(params.intensity);
    let level = run_level(phi, f, lambda, n_rep, &aux_stream(params, AUX_CLT), padding)?;
    let n = level.values.len() as f64;
    let mean = level.values.iter().sum::<f64>() / n;
    let variance = level.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = variance.sqrt();
    if !(sd >= 1e-12) {
        return Err(Error::Harness(format!("replicate spread {sd:e} is too small to standardize")));
    }
    let samples: Vec<f64> = level.values.iter().map(|v| (v - mean) / sd).collect();
    let (ks, p_value) = ks_statistic(&samples)?;
    Ok(CltReport {
        lambda,
        n_rep,
        samples,
        ks_statistic: ks,
        p_value,
        mean,
        variance,
        certified_fraction: level.certified_fraction,
        excluded: level.excluded,
        master_seed: params.master_seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub tau: f64,
    /// `τ^{k/2} Ê(τ)` and its standard error.
    pub e_scaled: f64,
    pub e_se: f64,
    /// `τ^k V̂(τ)` from replicate variances, when computed.
    pub v_scaled: Option<f64>,
    pub v_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub phi: Phi,
    pub degree: f64,
    pub rows: Vec<ScalingRow>,
    /// Pairs `(τ_a, τ_b)` whose scaled `Ê` differ by more than 3 combined se.
    pub e_flags: Vec<(f64, f64)>,
    /// Pairs whose scaled `V̂` differ by more than 4 combined se.
    pub v_flags: Vec<(f64, f64)>,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        self.e_flags.is_empty() && self.v_flags.is_empty()
    }
}

fn flag_pairs(rows: &[(f64, f64, f64)], z: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            if (a.1 - b.1).abs() > z * (a.2 * a.2 + b.2 * b.2).sqrt() {
                out.push((a.0, b.0));
            }
        }
    }
    out
}

/// Checks that `τ^{k/2} E(τ)` and `τ^k V(τ)` do not depend on `τ` for a
/// homogeneous `φ` of degree `k`. Every intensity uses its own streams.
///
/// `V̂(τ)` is `(λ τ)⁻¹ Var̂[μ_λ(Q)]` with `λ = lambda_ref / τ`, so every
/// intensity looks at the same expected number of points. Set `n_rep_v = 0`
/// to skip it.
pub fn scaling_check(
    phi: Phi,
    taus: &[f64],
    n_rep_e: usize,
    n_rep_v: usize,
    lambda_ref: f64,
    params: &ProcessParams,
    opts: &ExperimentOptions,
) -> Result<ScalingReport> {
    let k = phi
        .homogeneity_degree()
        .ok_or_else(|| Error::domain(format!("{phi} is not homogeneous, so no scaling law applies")))?;
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::domain("intensities must be positive"));
    }
    if n_rep_v != 0 && n_rep_v < 50 {
        return Err(Error::domain("variance scaling needs at least 50 replicates"));
    }
    let one = TestFunction::constant(1.0);
    let rows = taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| {
            let p = aux_stream(params, AUX_SCALING + j as u64).with_intensity(tau)?;
            let e = estimate_e(phi, n_rep_e, &p, opts.m_max)?;
            let e_factor = tau.powf(k / 2.0);
            let (v_scaled, v_se) = if n_rep_v > 0 {
                let pv = aux_stream(params, AUX_SCALING_V + j as u64).with_intensity(tau)?;
                let lambda = lambda_ref / tau;
                let level = run_level(phi, &one, lambda, n_rep_v, &pv, opts.padding_at(tau))?;
                let (var, se) = variance_jackknife(&level.values);
                let factor = tau.powf(k) / (lambda * tau);
                (Some(var * factor), Some(se * factor))
            } else {
                (None, None)
            };
            Ok(ScalingRow { tau, e_scaled: e.estimate * e_factor, e_se: e.std_error * e_factor, v_scaled, v_se })
        })
        .collect::<Result<Vec<_>>>()?;
    let e_rows: Vec<_> = rows.iter().map(|r| (r.tau, r.e_scaled, r.e_se)).collect();
    let v_rows: Vec<_> = rows.iter().filter_map(|r| Some((r.tau, r.v_scaled?, r.v_se?))).collect();
    Ok(ScalingReport { phi, degree: k, e_flags: flag_pairs(&e_rows, 3.0), v_flags: flag_pairs(&v_rows, 4.0), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> ProcessParams {
        ProcessParams::new(1.0, seed, 0).unwrap()
    }

    fn quick() -> ExperimentOptions {
        ExperimentOptions { e_reps: 40, ..Default::default() }
    }

    #[test]
    fn jackknife_matches_direct_leave_one_out() {
        let xs = [1.0, 4.0, 2.5, 7.0, 3.0, 3.5];
        let (var, se) = variance_jackknife(&xs);
        let direct = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        assert!((var - direct(&xs)).abs() < 1e-12);
        let loo: Vec<f64> = (0..xs.len())
            .map(|i| direct(&xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect::<Vec<_>>()))
            .collect();
        let lm = loo.iter().sum::<f64>() / 6.0;
        let expect = (5.0 / 6.0 * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
        assert!((se - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_function_gives_zero_rows() {
        let zero = TestFunction::constant(0.0);
        let lln = lln_experiment(Phi::TotalLength, &zero, &[25.0, 100.0], 5, &params(1), &quick()).unwrap();
        for row in &lln.rows {
            assert_eq!((row.estimate, row.std_error, row.target), (0.0, 0.0, Some(0.0)));
        }
        let var = var_experiment(Phi::TotalLength, &zero, &[25.0], 50, &params(1), &quick(), Some(1.0)).unwrap();
        assert_eq!((var.rows[0].estimate, var.rows[0].std_error, var.rows[0].target), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn argument_checks() {
        let one = TestFunction::constant(1.0);
        assert!(lln_experiment(Phi::TotalLength, &one, &[100.0, 50.0], 5, &params(1), &quick()).is_err());
        assert!(var_experiment(Phi::TotalLength, &one, &[100.0], 49, &params(1), &quick(), None).is_err());
        assert!(clt_experiment(Phi::TotalLength, &one, 100.0, 199, &params(1), &quick()).is_err());
        let err = scaling_check(Phi::threshold(1.0).unwrap(), &[1.0, 4.0], 40, 0, 100.0, &params(1), &quick());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn clt_rejects_degenerate_spread() {
        let zero = TestFunction::constant(0.0);
        let r = clt_experiment(Phi::TotalLength, &zero, 4.0, 200, &params(1), &quick());
        assert!(matches!(r, Err(Error::Harness(_))));
    }

    #[test]
    fn flags_only_distant_pairs() {
        let rows = [(1.0, 10.0, 1.0), (2.0, 12.0, 1.0), (4.0, 15.0, 1.0)];
        assert_eq!(flag_pairs(&rows, 3.0), vec![(1.0, 4.0)]);
    }
}
