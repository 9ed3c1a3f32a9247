//! Branch-length functionals `φ(ξ⁺, ξ⁻)`, the empirical measure they induce on
//! the unit square, and test functions to integrate against it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::build;
use crate::error::{Error, Result};
use crate::geom::{ExtLength, Point};
use crate::pointproc::{sample_poisson, ProcessParams, Window};
use crate::stabilize::{certify_point, with_resampling};

/// Mean stabilization radius at unit intensity (measured, about 3.2). Length
/// scales like `τ^{-1/2}`.
pub const STABILIZATION_SCALE: f64 = 3.2;

/// Default padding around `Q_λ`: three stabilization scales.
pub fn default_padding(intensity: f64) -> f64 {
    3.0 * STABILIZATION_SCALE / intensity.sqrt()
}

/// The functional family applied to the two branch lengths of a seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Phi {
    /// `l₁ + l₂`
    TotalLength,
    /// `(l₁ + l₂)^α`, `α >= 0`
    PowerSum { alpha: f64 },
    /// `1{l₁ + l₂ >= θ}`, `θ > 0`
    Threshold { theta: f64 },
}

impl Phi {
    pub fn power_sum(alpha: f64) -> Result<Self> {
        if alpha >= 0.0 && alpha.is_finite() {
            Ok(Phi::PowerSum { alpha })
        } else {
            Err(Error::domain(format!("power-sum exponent must be >= 0, got {alpha}")))
        }
    }

    pub fn threshold(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta.is_finite() {
            Ok(Phi::Threshold { theta })
        } else {
            Err(Error::domain(format!("threshold must be > 0, got {theta}")))
        }
    }

    /// Threshold in the limit `θ → 0⁺`: every seed counts once.
    pub fn counting() -> Self {
        Phi::Threshold { theta: f64::MIN_POSITIVE }
    }

    /// Exponent `q` of the polynomial growth bound `φ = O((r₁+r₂)^q)`.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            Phi::TotalLength => 1.0,
            Phi::PowerSum { alpha } => alpha,
            Phi::Threshold { .. } => 0.0,
        }
    }

    /// Degree `k` with `φ(c r₁, c r₂) = c^k φ(r₁, r₂)`, if homogeneous.
    pub fn homogeneity_degree(&self) -> Option<f64> {
        match *self {
            Phi::TotalLength => Some(1.0),
            Phi::PowerSum { alpha } => Some(alpha),
            Phi::Threshold { .. } => None,
        }
    }

    /// `φ(l₁, l₂)` in extended arithmetic: infinite lengths give `+inf`
    /// (or 1 for thresholds).
    pub fn eval(&self, l1: ExtLength, l2: ExtLength) -> Result<f64> {
        let sum = l1.to_f64() + l2.to_f64();
        if sum.is_nan() || sum < 0.0 {
            return Err(Error::domain(format!("invalid lengths {l1}, {l2}")));
        }
        match *self {
            Phi::TotalLength => Ok(sum),
            Phi::PowerSum { alpha } => {
                if !(alpha >= 0.0) {
                    return Err(Error::domain(format!("power-sum exponent must be >= 0, got {alpha}")));
                }
                Ok(sum.powf(alpha))
            }
            Phi::Threshold { theta } => Ok(if sum >= theta { 1.0 } else { 0.0 }),
        }
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Phi::TotalLength => f.write_str("total-length"),
            Phi::PowerSum { alpha } => write!(f, "power-sum:{alpha}"),
            Phi::Threshold { theta } if theta == f64::MIN_POSITIVE => f.write_str("count"),
            Phi::Threshold { theta } => write!(f, "threshold:{theta}"),
        }
    }
}

impl FromStr for Phi {
    type Err = Error;

    /// `total-length`, `power-sum:<alpha>`, `threshold:<theta>` or `count`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::domain(format!("{name} needs a parameter, e.g. {name}:2")))?
                .parse::<f64>()
                .map_err(|e| Error::domain(format!("bad parameter in {s:?}: {e}")))
        };
        match name {
            "total-length" if arg.is_none() => Ok(Phi::TotalLength),
            "power-sum" => Phi::power_sum(num(arg)?),
            "threshold" => Phi::threshold(num(arg)?),
            "count" if arg.is_none() => Ok(Phi::counting()),
            _ => Err(Error::domain(format!("unknown functional {s:?}"))),
        }
    }
}

/// Continuous test functions on `[0,1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    Const { value: f64 },
    X,
    Y,
    Product { left: Box<TestFunction>, right: Box<TestFunction> },
    /// `cos(kx π x) cos(ky π y)`
    Cos { kx: u32, ky: u32 },
    /// `sin(kx π x) sin(ky π y)`
    Sin { kx: u32, ky: u32 },
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Const { value }
    }

    pub fn product(left: TestFunction, right: TestFunction) -> Self {
        TestFunction::Product { left: Box::new(left), right: Box::new(right) }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            TestFunction::Const { value } => *value,
            TestFunction::X => x,
            TestFunction::Y => y,
            TestFunction::Product { left, right } => left.eval(x, y) * right.eval(x, y),
            TestFunction::Cos { kx, ky } => (*kx as f64 * PI * x).cos() * (*ky as f64 * PI * y).cos(),
            TestFunction::Sin { kx, ky } => (*kx as f64 * PI * x).sin() * (*ky as f64 * PI * y).sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TestFunction::Const { value } if *value == 0.0)
    }

    /// `∫_{[0,1]²} f` by tensor Gauss–Legendre quadrature.
    pub fn integral(&self) -> f64 {
        quadrature(|x, y| self.eval(x, y))
    }

    /// `∫_{[0,1]²} f²`.
    pub fn integral_of_square(&self) -> f64 {
        quadrature(|x, y| self.eval(x, y).powi(2))
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Const { value } if *value == 0.0 => f.write_str("zero"),
            TestFunction::Const { value } if *value == 1.0 => f.write_str("const1"),
            TestFunction::Const { value } => write!(f, "const:{value}"),
            TestFunction::X => f.write_str("x"),
            TestFunction::Y => f.write_str("y"),
            TestFunction::Product { left, right } => write!(f, "{left}*{right}"),
            TestFunction::Cos { kx: 1, ky: 1 } => f.write_str("cos-pi"),
            TestFunction::Cos { kx, ky } => write!(f, "cos:{kx}:{ky}"),
            TestFunction::Sin { kx, ky } => write!(f, "sin:{kx}:{ky}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Names: `zero`, `const1`, `const:<c>`, `x`, `y`, `xy`, `cos-pi`,
    /// `cos:<kx>:<ky>`, `sin:<kx>:<ky>`, and products joined by `*`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some((l, r)) = s.split_once('*') {
            return Ok(TestFunction::product(l.parse()?, r.parse()?));
        }
        let bad = |e: String| Error::domain(format!("bad test function {s:?}: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["zero"] => Ok(TestFunction::constant(0.0)),
            ["const1"] => Ok(TestFunction::constant(1.0)),
            ["const", c] => Ok(TestFunction::constant(c.parse().map_err(|e| bad(format!("{e}")))?)),
            ["x"] => Ok(TestFunction::X),
            ["y"] => Ok(TestFunction::Y),
            ["xy"] => Ok(TestFunction::product(TestFunction::X, TestFunction::Y)),
            ["cos-pi"] => Ok(TestFunction::Cos { kx: 1, ky: 1 }),
            [kind @ ("cos" | "sin"), kx, ky] => {
                let kx = kx.parse().map_err(|e| bad(format!("{e}")))?;
                let ky = ky.parse().map_err(|e| bad(format!("{e}")))?;
                Ok(if *kind == "cos" { TestFunction::Cos { kx, ky } } else { TestFunction::Sin { kx, ky } })
            }
            _ => Err(bad("unknown name".into())),
        }
    }
}

const GL_ORDER: usize = 48;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.push((0.5 * (1.0 - z), 0.5 * w));
    }
    out
}

fn quadrature(f: impl Fn(f64, f64) -> f64) -> f64 {
    let rule = gauss_legendre(GL_ORDER);
    rule.iter().map(|&(x, wx)| rule.iter().map(|&(y, wy)| wx * wy * f(x, y)).sum::<f64>()).sum()
}

/// A point mass `weight · δ_location` of the empirical measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub weight: f64,
    /// The weight is provably the whole-plane value.
    pub certified: bool,
}

impl Atom {
    /// Infinite weights cannot enter integrals.
    pub fn is_flagged(&self) -> bool {
        !self.weight.is_finite()
    }
}

/// `Σ_{x ∈ P ∩ Q_λ} φ(ξ⁺(x), ξ⁻(x)) δ_{x/√λ}` for one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
    pub lambda: f64,
    pub phi: Phi,
    pub certified_fraction: f64,
}

impl EmpiricalMeasure {
    pub fn flagged(&self) -> usize {
        self.atoms.iter().filter(|a| a.is_flagged()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    /// Sum over all atoms with finite weight.
    pub value: f64,
    /// Sum over certified atoms only.
    pub certified_only: f64,
    /// Atoms left out because their weight is infinite.
    pub excluded: usize,
}

/// Samples the process on `Q_λ` grown by `padding`, builds the tessellation
/// once and weighs every seed inside `Q_λ`.
pub fn empirical_measure(lambda: f64, params: &ProcessParams, phi: Phi, padding: f64) -> Result<EmpiricalMeasure> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::domain(format!("padding must be >= 0, got {padding}")));
    }
    let square = Window::square(lambda)?;
    let padded = square.padded(padding)?;
    let (tess, _) = with_resampling(params, |p| build(&sample_poisson(&padded, p)?))?;
    let scale = lambda.sqrt();
    let mut atoms = Vec::new();
    for seed in tess.config().points().iter().filter(|p| square.contains(p.position)) {
        let (plus, minus) = tess.lengths_of(seed.id)?;
        atoms.push(Atom {
            location: seed.position * (1.0 / scale),
            weight: phi.eval(plus, minus)?,
            certified: certify_point(&tess, &padded, seed.id)?,
        });
    }
    let certified_fraction =
        if atoms.is_empty() { 1.0 } else { atoms.iter().filter(|a| a.certified).count() as f64 / atoms.len() as f64 };
    Ok(EmpiricalMeasure { atoms, lambda, phi, certified_fraction })
}

/// `∫ f dμ`, skipping flagged atoms.
pub fn integrate(measure: &EmpiricalMeasure, f: &TestFunction) -> Integral {
    let mut out = Integral { value: 0.0, certified_only: 0.0, excluded: 0 };
    for atom in &measure.atoms {
        if atom.is_flagged() {
            out.excluded += 1;
            continue;
        }
        let v = atom.weight * f.eval(atom.location.x, atom.location.y);
        out.value += v;
        if atom.certified {
            out.certified_only += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(v: f64) -> ExtLength {
        ExtLength::Finite(v)
    }

    #[test]
    fn phi_examples() {
        assert_eq!(Phi::TotalLength.eval(l(3.0), l(4.0)).unwrap(), 7.0);
        assert_eq!(Phi::power_sum(2.0).unwrap().eval(l(1.0), l(2.0)).unwrap(), 9.0);
        let th = Phi::threshold(5.0).unwrap();
        assert_eq!(th.eval(l(2.0), l(2.0)).unwrap(), 0.0);
        assert_eq!(th.eval(l(3.0), l(3.0)).unwrap(), 1.0);
        assert_eq!(th.eval(ExtLength::Infinite, l(0.0)).unwrap(), 1.0);
        assert_eq!(Phi::TotalLength.eval(ExtLength::Infinite, l(1.0)).unwrap(), f64::INFINITY);
        assert_eq!(Phi::power_sum(0.5).unwrap().eval(ExtLength::Infinite, l(1.0)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn negative_power_rejected() {
        assert!(Phi::power_sum(-1.0).is_err());
        assert!(Phi::PowerSum { alpha: -1.0 }.eval(l(1.0), l(1.0)).is_err());
        assert!(Phi::threshold(0.0).is_err());
    }

    #[test]
    fn phi_metadata_and_names() {
        assert_eq!(Phi::TotalLength.homogeneity_degree(), Some(1.0));
        assert_eq!(Phi::power_sum(2.5).unwrap().homogeneity_degree(), Some(2.5));
        assert_eq!(Phi::counting().homogeneity_degree(), None);
        assert_eq!(Phi::counting().growth_exponent(), 0.0);
        for s in ["total-length", "power-sum:2", "threshold:0.5", "count"] {
            assert_eq!(s.parse::<Phi>().unwrap().to_string(), s);
        }
        assert!("power-sum".parse::<Phi>().is_err());
        assert!("banana".parse::<Phi>().is_err());
    }

    #[test]
    fn test_function_names_and_integrals() {
        for s in ["zero", "const1", "x", "y", "cos-pi", "cos:2:3", "sin:1:1", "x*y"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        let xy: TestFunction = "xy".parse().unwrap();
        assert!((xy.integral() - 0.25).abs() < 1e-14);
        assert!((TestFunction::constant(1.0).integral() - 1.0).abs() < 1e-14);
        let c = TestFunction::Cos { kx: 1, ky: 1 };
        assert!(c.integral().abs() < 1e-14);
        assert!((c.integral_of_square() - 0.25).abs() < 1e-14);
        let s = TestFunction::Sin { kx: 1, ky: 1 };
        assert!((s.integral() - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-13);
    }

    #[test]
    fn integrate_hand_built_measure() {
        let m = EmpiricalMeasure {
            atoms: vec![
                Atom { location: Point::new(0.25, 0.5), weight: 2.0, certified: true },
                Atom { location: Point::new(0.75, 0.5), weight: 4.0, certified: false },
                Atom { location: Point::new(0.5, 0.5), weight: f64::INFINITY, certified: false },
            ],
            lambda: 1.0,
            phi: Phi::TotalLength,
            certified_fraction: 1.0 / 3.0,
        };
        let i = integrate(&m, &TestFunction::X);
        assert_eq!(i.value, 3.5);
        assert_eq!(i.certified_only, 0.5);
        assert_eq!(i.excluded, 1);
        assert_eq!(integrate(&m, &TestFunction::constant(1.0)).value, 6.0);
        let empty = EmpiricalMeasure { atoms: vec![], ..m };
        assert_eq!(integrate(&empty, &TestFunction::Y).value, 0.0);
    }

    #[test]
    fn empty_realization_gives_empty_measure() {
        // At this tiny area almost every stream is empty; find one that is.
        let found = (0..50).any(|s| {
            let p = ProcessParams::new(1.0, 3, s).unwrap();
            empirical_measure(1e-4, &p, Phi::TotalLength, 0.0).unwrap().atoms.is_empty()
        });
        assert!(found);
    }

    #[test]
    fn measure_atoms_are_rescaled_seeds() {
        let p = ProcessParams::new(1.0, 5, 0).unwrap();
        let m = empirical_measure(100.0, &p, Phi::TotalLength, 10.0).unwrap();
        assert!(!m.atoms.is_empty());
        assert!(m.atoms.iter().all(|a| (0.0..=1.0).contains(&a.location.x) && (0.0..=1.0).contains(&a.location.y)));
        assert!(m.certified_fraction > 0.9);
        let cfg = sample_poisson(&Window::square(100.0).unwrap().padded(10.0).unwrap(), &p).unwrap();
        let inside = cfg.points().iter().filter(|q| q.position.x >= 0.0 && q.position.x <= 10.0 && q.position.y >= 0.0 && q.position.y <= 10.0);
        let locs: Vec<Point> = inside.map(|q| q.position * 0.1).collect();
        assert_eq!(locs, m.atoms.iter().map(|a| a.location).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn power_sum_is_homogeneous(alpha in 0.0..4.0f64, a in 0.0..50.0f64, b in 0.0..50.0f64, ci in 0usize..3) {
            let c = [0.5, 2.0, 10.0][ci];
            let phi = Phi::power_sum(alpha).unwrap();
            let lhs = phi.eval(l(c * a), l(c * b)).unwrap();
            let rhs = c.powf(alpha) * phi.eval(l(a), l(b)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }

        #[test]
        fn integrate_is_linear(ws in proptest::collection::vec(0.0..10.0f64, 0..20), k in -3.0..3.0f64) {
            let atoms: Vec<Atom> = ws.iter().enumerate()
                .map(|(i, &w)| Atom { location: Point::new(i as f64 / 20.0, 0.5), weight: w, certified: true })
                .collect();
            let m = EmpiricalMeasure { atoms, lambda: 1.0, phi: Phi::TotalLength, certified_fraction: 1.0 };
            let f = TestFunction::X;
            let g = TestFunction::constant(k);
            let sum = TestFunction::product(TestFunction::constant(1.0), TestFunction::X);
            let lhs = integrate(&m, &sum).value + integrate(&m, &g).value;
            let rhs = integrate(&m, &f).value + k * integrate(&m, &TestFunction::constant(1.0)).value;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
