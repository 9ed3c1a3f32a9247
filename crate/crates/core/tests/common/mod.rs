#![allow(dead_code)]

use std::f64::consts::PI;

use gilbert::engine::{build, MarkedConfig, Segment};
use gilbert::geom::{ExtLength, MarkedPoint, Point, SeedId, Sign};
use gilbert::oracle::{build_fixedpoint, build_timestep};
use gilbert::pointproc::{fresh_mark, PoissonField, PointSource, ProcessParams, Window};
use gilbert::stabilize::{whole_plane_xi, CENTER_ID};
use gilbert::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: f64 = 10.0;
pub const MAX_SEEDS: usize = 12;
/// Ids for test-inserted points, far above any sampled id.
pub const EXTRA_BASE: u64 = u64::MAX - 100_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, id: u64, x0: f64, y0: f64, side: f64) -> MarkedPoint {
    let p = Point::new(x0 + side * rng.random::<f64>(), y0 + side * rng.random::<f64>());
    MarkedPoint::new(SeedId(id), p, PI * rng.random::<f64>()).unwrap()
}

/// Between 1 and `MAX_SEEDS` uniform seeds in `[0, SIDE]²` with uniform marks.
pub fn random_config(rng: &mut ChaCha8Rng) -> MarkedConfig {
    let m = rng.random_range(1..=MAX_SEEDS);
    let points = (0..m).map(|i| random_point(rng, i as u64, 0.0, 0.0, SIDE)).collect();
    MarkedConfig::with_window(points, Window::rect(0.0, 0.0, SIDE, SIDE).unwrap()).unwrap()
}

/// A point uniform on the annulus `r_in <= |p - c| <= r_out`.
pub fn annulus_point(rng: &mut ChaCha8Rng, id: u64, c: Point, r_in: f64, r_out: f64) -> MarkedPoint {
    let r = (r_in * r_in + (r_out * r_out - r_in * r_in) * rng.random::<f64>()).sqrt();
    let a = 2.0 * PI * rng.random::<f64>();
    let p = Point::new(c.x + r * a.cos(), c.y + r * a.sin());
    MarkedPoint::new(SeedId(id), p, PI * rng.random::<f64>()).unwrap()
}

#[derive(Debug, Default)]
pub struct OracleTally {
    pub configs: usize,
    pub skipped: usize,
    pub fixedpoint_mismatches: usize,
    pub timestep_mismatches: usize,
    pub class_mismatches: usize,
    pub max_timestep_error: f64,
}

/// Engine against both oracles on `n` random configurations.
pub fn oracle_agreement(n: usize, seed: u64, dt: f64) -> OracleTally {
    let mut rng = rng(seed);
    let mut t = OracleTally::default();
    while t.configs < n {
        let cfg = random_config(&mut rng);
        let (Ok(tess), Ok(fp), Ok(ts)) = (build(&cfg), build_fixedpoint(&cfg), build_timestep(&cfg, dt)) else {
            t.skipped += 1;
            continue;
        };
        t.configs += 1;
        for (id, engine) in tess.branch_lengths() {
            let (f, s) = (fp[&id], ts[&id]);
            if engine.is_finite() != f.is_finite() || engine.is_finite() != s.is_finite() {
                t.class_mismatches += 1;
                continue;
            }
            if let (Some(e), Some(f), Some(s)) = (engine.value(), f.value(), s.value()) {
                if (e - f).abs() > 1e-9 * e.abs().max(f.abs()) {
                    t.fixedpoint_mismatches += 1;
                }
                t.max_timestep_error = t.max_timestep_error.max((e - s).abs());
                if (e - s).abs() > 5e-4 {
                    t.timestep_mismatches += 1;
                }
            }
        }
    }
    t
}

fn covered(p: Point, segments: &[Segment]) -> bool {
    segments.iter().any(|s| s.distance_to(p) <= 1e-9)
}

/// Sampled points of `G(X ∪ {y})(t) △ G(X)(t)` outside `B(y, t + tol)`.
pub fn insertion_violations(cfg: &MarkedConfig, y: MarkedPoint, times: &[f64], samples: usize) -> Result<usize> {
    let base = build(cfg)?;
    let with = build(&cfg.extended(&[y])?)?;
    let mut bad = 0;
    for &t in times {
        let a = base.partial_tessellation(t)?;
        let b = with.partial_tessellation(t)?;
        for (from, other) in [(&a, &b), (&b, &a)] {
            for seg in from.iter() {
                for k in 0..=samples {
                    let u = k as f64 / samples as f64;
                    let p = seg.start + (seg.end - seg.start) * u;
                    if !covered(p, other) && p.dist(y.position) > t + 1e-6 {
                        bad += 1;
                    }
                }
            }
        }
    }
    Ok(bad)
}

#[derive(Debug, Default)]
pub struct LocalityTally {
    pub trials: usize,
    pub restriction_violations: usize,
    pub insertion_violations: usize,
    pub combined_violations: usize,
    pub skipped: usize,
}

/// Finite branches of random configurations: restriction to `B(x, 2ξ)`,
/// insertions outside that ball, and both together leave `ξ` bit-identical.
pub fn locality_trials(n: usize, seed: u64) -> LocalityTally {
    let mut rng = rng(seed);
    let mut t = LocalityTally::default();
    while t.trials < n {
        let cfg = random_config(&mut rng);
        let Ok(tess) = build(&cfg) else {
            t.skipped += 1;
            continue;
        };
        for x in cfg.points() {
            for sign in Sign::BOTH {
                if t.trials >= n {
                    break;
                }
                let ExtLength::Finite(xi) = tess.branch_length(x.id, sign).unwrap() else {
                    continue;
                };
                let r = 2.0 * xi;
                let k = rng.random_range(1..=20);
                let outside: Vec<MarkedPoint> = (0..k)
                    .map(|j| annulus_point(&mut rng, EXTRA_BASE + j, x.position, r * (1.0 + 1e-9), r + 15.0))
                    .collect();
                let restricted = cfg.restrict_to_ball(x.position, r);
                let rebuilt = |c: &MarkedConfig| build(c).map(|ts| ts.branch_length(x.id, sign).unwrap());
                let (Ok(a), Ok(b), Ok(c)) = (
                    rebuilt(&restricted),
                    rebuilt(&cfg.extended(&outside).unwrap()),
                    rebuilt(&restricted.extended(&outside).unwrap()),
                ) else {
                    t.skipped += 1;
                    continue;
                };
                t.trials += 1;
                let same = |v: ExtLength| v == ExtLength::Finite(xi) && v.to_f64().to_bits() == xi.to_bits();
                t.restriction_violations += usize::from(!same(a));
                t.insertion_violations += usize::from(!same(b));
                t.combined_violations += usize::from(!same(c));
            }
        }
    }
    t
}

#[derive(Debug, Default)]
pub struct CertificationTally {
    pub certified: usize,
    pub uncertified: usize,
    pub violations: usize,
    pub skipped: usize,
}

/// Certified whole-plane results rebuilt from a larger disc of the same
/// realization plus `extra` random points outside `B(x, R)`.
pub fn certification_recheck(n: usize, extra: usize, seed: u64) -> Result<CertificationTally> {
    let params = ProcessParams::new(1.0, seed, 0)?;
    let mut rng = rng(seed ^ 0xabcd);
    let mut t = CertificationTally::default();
    let mut i = 0;
    while t.certified < n {
        let p = params.substream(i);
        i += 1;
        let res = whole_plane_xi(Point::new(0.0, 0.0), &p, 64)?;
        if !res.certified {
            t.uncertified += 1;
            continue;
        }
        let p = if res.resamples == 0 { p } else { p.substream(u64::from(res.resamples)) };
        let radius = res.radius.to_f64();
        let disc = f64::from(res.rho_hat) + 4.0;
        let field = PoissonField::new(p)?;
        let center = MarkedPoint::new(CENTER_ID, Point::new(0.0, 0.0), fresh_mark(&p, &[0]))?;
        let mut points = field.points_in_ball(center.position, disc);
        points.push(center);
        points.extend(
            (0..extra as u64).map(|j| annulus_point(&mut rng, EXTRA_BASE + j, center.position, radius * (1.0 + 1e-9), disc + 4.0)),
        );
        let Ok(tess) = build(&MarkedConfig::new(points)?) else {
            t.skipped += 1;
            continue;
        };
        t.certified += 1;
        let (plus, minus) = tess.lengths_of(CENTER_ID)?;
        let bits = |a: ExtLength, b: ExtLength| a.to_f64().to_bits() == b.to_f64().to_bits();
        if !(bits(plus, res.xi_plus) && bits(minus, res.xi_minus)) {
            t.violations += 1;
        }
    }
    Ok(t)
}
