//! Event-driven construction of the Gilbert tessellation of a finite marked
//! configuration.
//!
//! Every pair of seed lines crosses at most once, and a crossing can block at
//! most one of the two branches involved: the one that arrives later, provided
//! the earlier one is still present at the crossing when it gets there. The
//! builder processes such candidate blockings from a min-queue keyed by the
//! arrival time of the branch that would be blocked. When a candidate with key
//! `s` is popped, every blocking that happened before `s` has already been
//! committed, so checking that both branches are still alive decides it.
//!
//! Candidates are generated lazily in time windows `(lo, hi]` with doubling
//! `hi`. A branch alive at `lo` can only be blocked in the window by a seed
//! within distance `hi` of its swept piece, which a uniform grid over the
//! seeds finds cheaply. Branches still alive once `hi` exceeds the diameter of
//! the configuration are checked against every seed in one last unbounded
//! window.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{line_crossing, BranchId, ExtLength, MarkedPoint, Point, SeedId, Sign, EPS_GEOM};
use crate::pointproc::Window;

/// A finite marked configuration with an optional window for rendering and
/// certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedConfig {
    points: Vec<MarkedPoint>,
    window: Option<Window>,
}

impl MarkedConfig {
    pub fn new(points: Vec<MarkedPoint>) -> Result<Self> {
        validate_points(&points)?;
        Ok(MarkedConfig { points, window: None })
    }

    pub fn with_window(points: Vec<MarkedPoint>, window: Window) -> Result<Self> {
        validate_points(&points)?;
        Ok(MarkedConfig { points, window: Some(window) })
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn window(&self) -> Option<Window> {
        self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, id: SeedId) -> Option<&MarkedPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    /// The sub-configuration of seeds inside the closed disc `B(center, r)`.
    pub fn restrict_to_ball(&self, center: Point, r: f64) -> MarkedConfig {
        MarkedConfig {
            points: self.points.iter().copied().filter(|p| p.position.dist(center) <= r).collect(),
            window: self.window,
        }
    }

    /// The configuration extended by `extra`, re-validated.
    pub fn extended(&self, extra: &[MarkedPoint]) -> Result<MarkedConfig> {
        let mut points = self.points.clone();
        points.extend_from_slice(extra);
        validate_points(&points)?;
        Ok(MarkedConfig { points, window: self.window })
    }

    /// Bounding box `(x_min, y_min, x_max, y_max)` of the seeds.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.points.first()?.position;
        Some(self.points.iter().fold((first.x, first.y, first.x, first.y), |(a, b, c, d), p| {
            (a.min(p.position.x), b.min(p.position.y), c.max(p.position.x), d.max(p.position.y))
        }))
    }
}

fn validate_points(points: &[MarkedPoint]) -> Result<()> {
    let mut ids = HashSet::with_capacity(points.len());
    for p in points {
        // Re-run the constructor checks for points built as struct literals.
        MarkedPoint::new(p.id, p.position, p.mark)?;
        if !ids.insert(p.id) {
            return Err(Error::domain(format!("duplicate seed id {}", p.id)));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].position.x.total_cmp(&points[b].position.x));
    for (k, &i) in order.iter().enumerate() {
        let p = points[i].position;
        let tol = EPS_GEOM * (1.0 + p.norm());
        for &j in &order[k + 1..] {
            let q = points[j].position;
            if q.x - p.x > tol {
                break;
            }
            if p.dist(q) <= tol {
                return Err(Error::degenerate(format!(
                    "seeds {} and {} coincide at {p}",
                    points[i].id, points[j].id
                )));
            }
        }
    }
    Ok(())
}

/// One committed blocking.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Arrival length of the blocked branch, which is also its final length.
    pub time: f64,
    pub blocked: BranchId,
    pub blocker: BranchId,
    /// Arrival length of the blocker at the contact point (never above `time`).
    pub blocker_arrival: f64,
    pub point: Point,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Resolve exactly simultaneous head-on arrivals in favour of the
    /// lexicographically smaller branch instead of failing.
    pub tie_break: bool,
}

/// A straight piece of a branch, from its seed to `end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub branch: BranchId,
    pub start: Point,
    pub end: Point,
    /// `true` when the branch is unbounded and `end` is where it leaves the
    /// clipping window.
    pub clipped: bool,
}

impl Segment {
    /// Distance from `p` to the closed segment.
    pub fn distance_to(&self, p: Point) -> f64 {
        let d = self.end - self.start;
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return p.dist(self.start);
        }
        let t = ((p - self.start).dot(d) / len2).clamp(0.0, 1.0);
        p.dist(self.start + d * t)
    }
}

/// The Gilbert tessellation of a finite configuration.
#[derive(Clone, Debug)]
pub struct Tessellation {
    config: MarkedConfig,
    index: HashMap<SeedId, usize>,
    /// Indexed by `2 * seed index + sign index`.
    lengths: Vec<ExtLength>,
    blockers: Vec<Option<BranchId>>,
    events: Vec<CollisionEvent>,
}

impl Tessellation {
    pub fn config(&self) -> &MarkedConfig {
        &self.config
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    fn slot(&self, seed: SeedId, sign: Sign) -> Result<usize> {
        self.index.get(&seed).map(|&i| 2 * i + sign.index()).ok_or(Error::UnknownSeed(seed))
    }

    pub fn branch_length(&self, seed: SeedId, sign: Sign) -> Result<ExtLength> {
        Ok(self.lengths[self.slot(seed, sign)?])
    }

    /// `(ξ⁺, ξ⁻)` for a seed.
    pub fn lengths_of(&self, seed: SeedId) -> Result<(ExtLength, ExtLength)> {
        Ok((self.branch_length(seed, Sign::Plus)?, self.branch_length(seed, Sign::Minus)?))
    }

    pub fn blocker_of(&self, seed: SeedId, sign: Sign) -> Result<Option<BranchId>> {
        Ok(self.blockers[self.slot(seed, sign)?])
    }

    /// All branch lengths keyed by branch.
    pub fn branch_lengths(&self) -> impl Iterator<Item = (BranchId, ExtLength)> + '_ {
        self.config.points.iter().enumerate().flat_map(move |(i, p)| {
            Sign::BOTH.into_iter().map(move |s| (BranchId::new(p.id, s), self.lengths[2 * i + s.index()]))
        })
    }

    /// Growth tip of a branch at time `t`; immobile once the branch is blocked.
    pub fn branch_history(&self, seed: SeedId, sign: Sign, t: f64) -> Result<Point> {
        if !(t >= 0.0) || t.is_infinite() {
            return Err(Error::domain(format!("branch history needs a finite time >= 0, got {t}")));
        }
        let slot = self.slot(seed, sign)?;
        let p = &self.config.points[slot / 2];
        let s = t.min(self.lengths[slot].to_f64());
        Ok(p.branch(sign).at(s))
    }

    /// The partial tessellation at time `t`: one segment per branch, from the
    /// seed to its growth tip. For `t = +inf`, unbounded branches are clipped
    /// to the configuration window (or to the padded seed bounding box).
    pub fn partial_tessellation(&self, t: f64) -> Result<Vec<Segment>> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        let clip = self.clip_window();
        let mut out = Vec::with_capacity(self.lengths.len());
        for (i, p) in self.config.points.iter().enumerate() {
            for sign in Sign::BOTH {
                let ray = p.branch(sign);
                let len = self.lengths[2 * i + sign.index()].to_f64();
                let s = t.min(len);
                let (end, clipped) = if s.is_finite() {
                    (ray.at(s), false)
                } else {
                    (ray.at(ray_exit(ray.origin, ray.direction, clip)), true)
                };
                out.push(Segment { branch: ray.owner, start: p.position, end, clipped });
            }
        }
        Ok(out)
    }

    /// Window used when unbounded branches have to be drawn.
    pub fn clip_window(&self) -> Window {
        if let Some(w) = self.config.window {
            return w;
        }
        match self.config.bounding_box() {
            Some((a, b, c, d)) => Window::Rect { x0: a - 1.0, y0: b - 1.0, w: c - a + 2.0, h: d - b + 2.0 },
            None => Window::Rect { x0: -1.0, y0: -1.0, w: 2.0, h: 2.0 },
        }
    }
}

/// Largest `s >= 0` with `origin + s·dir` inside the bounding rectangle of
/// `window`; zero when the origin lies outside.
pub(crate) fn ray_exit(origin: Point, dir: Point, window: Window) -> f64 {
    let (x0, y0, x1, y1) = window.bounds();
    if origin.x < x0 || origin.x > x1 || origin.y < y0 || origin.y > y1 {
        return 0.0;
    }
    let mut s = f64::INFINITY;
    for (o, d, lo, hi) in [(origin.x, dir.x, x0, x1), (origin.y, dir.y, y0, y1)] {
        if d > 0.0 {
            s = s.min((hi - o) / d);
        } else if d < 0.0 {
            s = s.min((lo - o) / d);
        }
    }
    s.max(0.0)
}

/// Builds the tessellation, failing on measure-zero coincidences.
pub fn build(config: &MarkedConfig) -> Result<Tessellation> {
    build_with(config, BuildOptions::default())
}

pub fn build_with(config: &MarkedConfig, options: BuildOptions) -> Result<Tessellation> {
    let mut builder = Builder::new(config, options);
    builder.run()?;
    let index = config.points.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let lengths = builder.len.iter().map(|&l| ExtLength::from_f64(l)).collect();
    Ok(Tessellation {
        config: config.clone(),
        index,
        lengths,
        blockers: builder.blocker,
        events: builder.events,
    })
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    s_blocked: f64,
    s_blocker: f64,
    blocked: usize,
    blocker: usize,
    blocked_id: BranchId,
    blocker_id: BranchId,
    point: Point,
}

impl Candidate {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.s_blocked
            .total_cmp(&other.s_blocked)
            .then(self.s_blocker.total_cmp(&other.s_blocker))
            .then(self.blocked_id.cmp(&other.blocked_id))
            .then(self.blocker_id.cmp(&other.blocker_id))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that BinaryHeap pops the earliest candidate first.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Uniform bucket grid over seed positions.
struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl Grid {
    fn new(pos: &[Point], bbox: (f64, f64, f64, f64)) -> Self {
        let (x0, y0, x1, y1) = bbox;
        let (w, h) = (x1 - x0, y1 - y0);
        let m = pos.len().max(1) as f64;
        let cell = (w * h / m).sqrt().max(w.max(h) / m).max(1e-9);
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, p) in pos.iter().enumerate() {
            let cx = (((p.x - x0) / cell) as usize).min(nx - 1);
            let cy = (((p.y - y0) / cell) as usize).min(ny - 1);
            buckets[cy * nx + cx].push(i as u32);
        }
        Grid { x0, y0, cell, nx, ny, buckets }
    }

    fn range(v: f64, origin: f64, cell: f64, n: usize) -> usize {
        let c = ((v - origin) / cell).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(n - 1)
        }
    }

    fn visit(&self, x_min: f64, y_min: f64, x_max: f64, y_max: f64, mut f: impl FnMut(usize) -> Result<()>) -> Result<()> {
        let (cx0, cx1) = (Self::range(x_min, self.x0, self.cell, self.nx), Self::range(x_max, self.x0, self.cell, self.nx));
        let (cy0, cy1) = (Self::range(y_min, self.y0, self.cell, self.ny), Self::range(y_max, self.y0, self.cell, self.ny));
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                for &i in &self.buckets[cy * self.nx + cx] {
                    f(i as usize)?;
                }
            }
        }
        Ok(())
    }
}

struct Builder<'a> {
    config: &'a MarkedConfig,
    options: BuildOptions,
    pos: Vec<Point>,
    dir: Vec<Point>,
    ids: Vec<SeedId>,
    len: Vec<f64>,
    blocker: Vec<Option<BranchId>>,
    events: Vec<CollisionEvent>,
    heap: BinaryHeap<Candidate>,
}

fn tie_tolerance(s: f64) -> f64 {
    EPS_GEOM * (1.0 + s)
}

impl<'a> Builder<'a> {
    fn new(config: &'a MarkedConfig, options: BuildOptions) -> Self {
        let m = config.points.len();
        Builder {
            config,
            options,
            pos: config.points.iter().map(|p| p.position).collect(),
            dir: config.points.iter().map(|p| p.direction()).collect(),
            ids: config.points.iter().map(|p| p.id).collect(),
            len: vec![f64::INFINITY; 2 * m],
            blocker: vec![None; 2 * m],
            events: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn branch_id(&self, b: usize) -> BranchId {
        BranchId::new(self.ids[b / 2], if b.is_multiple_of(2) { Sign::Plus } else { Sign::Minus })
    }

    fn run(&mut self) -> Result<()> {
        let Some(bbox) = self.config.bounding_box() else {
            return Ok(());
        };
        let diam = (bbox.2 - bbox.0).hypot(bbox.3 - bbox.1);
        let grid = Grid::new(&self.pos, bbox);
        let mut lo = 0.0;
        let mut hi = grid.cell;
        loop {
            let last = hi >= diam;
            if last {
                hi = f64::INFINITY;
            }
            for b in 0..self.len.len() {
                if self.len[b].is_finite() {
                    continue;
                }
                self.generate(b, lo, hi, &grid)?;
            }
            self.drain()?;
            if last || self.len.iter().all(|l| l.is_finite()) {
                return Ok(());
            }
            lo = hi;
            hi *= 2.0;
        }
    }

    /// Queues every crossing on branch `b` with arrival in `(lo, hi]` where
    /// the other branch gets there no later than `b` does.
    fn generate(&mut self, b: usize, lo: f64, hi: f64, grid: &Grid) -> Result<()> {
        let i = b / 2;
        let sign = if b.is_multiple_of(2) { 1.0 } else { -1.0 };
        let (o, d) = (self.pos[i], self.dir[i]);
        let mut found = Vec::new();
        let mut consider = |j: usize| -> Result<()> {
            if j == i {
                return Ok(());
            }
            let Some(c) = line_crossing(o, d, self.pos[j], self.dir[j])? else {
                return Ok(());
            };
            let s_b = sign * c.t_a;
            if !(s_b > lo && s_b <= hi) {
                return Ok(());
            }
            let s_c = c.t_b.abs();
            if s_c > s_b + tie_tolerance(s_b) {
                return Ok(());
            }
            if s_c <= tie_tolerance(self.pos[j].norm()) || s_b <= tie_tolerance(o.norm()) {
                return Err(Error::degenerate(format!(
                    "branch line of {} passes through seed {}",
                    self.ids[if s_c <= s_b { i } else { j }],
                    self.ids[if s_c <= s_b { j } else { i }]
                )));
            }
            let cb = 2 * j + usize::from(c.t_b < 0.0);
            if self.len[cb] < s_c {
                return Ok(());
            }
            found.push((s_b, s_c, cb, c.point));
            Ok(())
        };
        if hi.is_finite() {
            let (a, z) = (o + d * (sign * lo), o + d * (sign * hi));
            grid.visit(a.x.min(z.x) - hi, a.y.min(z.y) - hi, a.x.max(z.x) + hi, a.y.max(z.y) + hi, &mut consider)?;
        } else {
            for j in 0..self.pos.len() {
                consider(j)?;
            }
        }
        let blocked_id = self.branch_id(b);
        for (s_b, s_c, cb, point) in found {
            self.heap.push(Candidate {
                s_blocked: s_b,
                s_blocker: s_c,
                blocked: b,
                blocker: cb,
                blocked_id,
                blocker_id: self.branch_id(cb),
                point,
            });
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<()> {
        while let Some(c) = self.heap.pop() {
            if self.len[c.blocked].is_finite() || self.len[c.blocker] < c.s_blocker {
                continue;
            }
            if (c.s_blocked - c.s_blocker).abs() <= tie_tolerance(c.s_blocked) {
                if !self.options.tie_break {
                    return Err(Error::degenerate(format!(
                        "branches {} and {} reach {} simultaneously",
                        c.blocked_id, c.blocker_id, c.point
                    )));
                }
                if c.blocker_id > c.blocked_id {
                    continue;
                }
            }
            self.len[c.blocked] = c.s_blocked;
            self.blocker[c.blocked] = Some(c.blocker_id);
            self.events.push(CollisionEvent {
                time: c.s_blocked,
                blocked: c.blocked_id,
                blocker: c.blocker_id,
                blocker_arrival: c.s_blocker,
                point: c.point,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn seed(id: u64, x: f64, y: f64, mark: f64) -> MarkedPoint {
        MarkedPoint::new(SeedId(id), Point::new(x, y), mark).unwrap()
    }

    fn two_seeds() -> MarkedConfig {
        MarkedConfig::new(vec![seed(0, 0.0, 0.0, 0.0), seed(1, 1.0, 2.0, FRAC_PI_2)]).unwrap()
    }

    fn three_seeds() -> MarkedConfig {
        MarkedConfig::new(vec![seed(0, 0.0, 0.0, 0.0), seed(1, 1.0, 2.0, FRAC_PI_2), seed(2, -1.0, 5.0, FRAC_PI_2)])
            .unwrap()
    }

    fn close(a: ExtLength, b: f64) -> bool {
        a.value().is_some_and(|v| (v - b).abs() <= 1e-12 * (1.0 + b))
    }

    #[test]
    fn single_seed_grows_forever() {
        let t = build(&MarkedConfig::new(vec![seed(4, 1.0, 1.0, 1.0)]).unwrap()).unwrap();
        assert_eq!(t.lengths_of(SeedId(4)).unwrap(), (ExtLength::Infinite, ExtLength::Infinite));
        assert!(t.events().is_empty());
    }

    #[test]
    fn empty_config_builds() {
        let t = build(&MarkedConfig::new(vec![]).unwrap()).unwrap();
        assert!(t.events().is_empty());
        assert!(t.partial_tessellation(1.0).unwrap().is_empty());
    }

    #[test]
    fn two_seed_example() {
        let t = build(&two_seeds()).unwrap();
        assert_eq!(t.branch_length(SeedId(0), Sign::Plus).unwrap(), ExtLength::Infinite);
        assert_eq!(t.branch_length(SeedId(0), Sign::Minus).unwrap(), ExtLength::Infinite);
        assert_eq!(t.branch_length(SeedId(1), Sign::Plus).unwrap(), ExtLength::Infinite);
        assert!(close(t.branch_length(SeedId(1), Sign::Minus).unwrap(), 2.0));
        assert_eq!(t.events().len(), 1);
        let ev = t.events()[0];
        assert_eq!(ev.blocked, BranchId::new(SeedId(1), Sign::Minus));
        assert_eq!(ev.blocker, BranchId::new(SeedId(0), Sign::Plus));
        assert!(ev.point.dist(Point::new(1.0, 0.0)) < 1e-12);
        assert_eq!(t.blocker_of(SeedId(1), Sign::Minus).unwrap(), Some(ev.blocker));
    }

    #[test]
    fn three_seed_example() {
        let t = build(&three_seeds()).unwrap();
        assert!(close(t.branch_length(SeedId(1), Sign::Minus).unwrap(), 2.0));
        assert!(close(t.branch_length(SeedId(2), Sign::Minus).unwrap(), 5.0));
        assert_eq!(t.branch_length(SeedId(2), Sign::Plus).unwrap(), ExtLength::Infinite);
        assert_eq!(t.blocker_of(SeedId(2), Sign::Minus).unwrap(), Some(BranchId::new(SeedId(0), Sign::Minus)));
        let times: Vec<f64> = t.events().iter().map(|e| e.time).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn blocked_blocker_does_not_block() {
        let a = seed(0, 0.0, 0.0, 0.0);
        let b = seed(1, 3.0, -4.0, FRAC_PI_2);
        let alone = build(&MarkedConfig::new(vec![a, b]).unwrap()).unwrap();
        // a+ passes x = 3 at time 3, b+ gets there at time 4.
        assert!(close(alone.branch_length(SeedId(1), Sign::Plus).unwrap(), 4.0));

        // c- cuts a+ off at time 1, so a+ never reaches x = 3.
        let c = seed(2, 1.0, 0.5, FRAC_PI_2);
        let t = build(&MarkedConfig::new(vec![a, b, c]).unwrap()).unwrap();
        assert!(close(t.branch_length(SeedId(0), Sign::Plus).unwrap(), 1.0));
        assert_eq!(t.branch_length(SeedId(1), Sign::Plus).unwrap(), ExtLength::Infinite);
        assert_eq!(t.branch_length(SeedId(2), Sign::Minus).unwrap(), ExtLength::Infinite);
    }

    #[test]
    fn unknown_seed_lookup_fails() {
        let t = build(&two_seeds()).unwrap();
        assert!(matches!(t.branch_length(SeedId(9), Sign::Plus), Err(Error::UnknownSeed(_))));
    }

    #[test]
    fn history_and_partial_tessellation() {
        let t = build(&two_seeds()).unwrap();
        assert_eq!(t.branch_history(SeedId(1), Sign::Minus, 0.0).unwrap(), Point::new(1.0, 2.0));
        assert!(t.branch_history(SeedId(1), Sign::Minus, 5.0).unwrap().dist(Point::new(1.0, 0.0)) < 1e-12);
        assert_eq!(t.branch_history(SeedId(0), Sign::Plus, 3.0).unwrap(), Point::new(3.0, 0.0));
        assert!(t.branch_history(SeedId(0), Sign::Plus, -1.0).is_err());

        let segs = t.partial_tessellation(0.0).unwrap();
        assert!(segs.iter().all(|s| s.start == s.end));
        let segs = t.partial_tessellation(1.0).unwrap();
        let ends: Vec<Point> = segs.iter().map(|s| s.end).collect();
        assert!(ends[0].dist(Point::new(1.0, 0.0)) < 1e-12);
        assert!(ends[1].dist(Point::new(-1.0, 0.0)) < 1e-12);
        assert!(ends[2].dist(Point::new(1.0, 3.0)) < 1e-12);
        assert!(ends[3].dist(Point::new(1.0, 1.0)) < 1e-12);
        assert!(t.partial_tessellation(-0.5).is_err());

        let full = t.partial_tessellation(f64::INFINITY).unwrap();
        assert_eq!(full.iter().filter(|s| s.clipped).count(), 3);
        let w = t.clip_window();
        assert!(full.iter().all(|s| w.contains(s.end)));
    }

    #[test]
    fn coincident_seeds_rejected() {
        let err = MarkedConfig::new(vec![seed(0, 1.0, 1.0, 0.1), seed(1, 1.0, 1.0, 0.7)]).unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn collinear_seeds_rejected() {
        let cfg = MarkedConfig::new(vec![seed(0, 0.0, 0.0, 0.0), seed(1, 3.0, 0.0, 0.0)]).unwrap();
        assert!(build(&cfg).unwrap_err().is_degenerate());
    }

    #[test]
    fn head_on_tie_needs_flag() {
        // Symmetric pair whose branches cross at (0, 1) at equal times.
        let a = std::f64::consts::FRAC_PI_4;
        let cfg = MarkedConfig::new(vec![seed(0, -1.0, 0.0, a), seed(1, 1.0, 0.0, 3.0 * a)]).unwrap();
        assert!(build(&cfg).unwrap_err().is_degenerate());
        let t = build_with(&cfg, BuildOptions { tie_break: true }).unwrap();
        assert_eq!(t.events().len(), 1);
        assert_eq!(t.events()[0].blocker, BranchId::new(SeedId(0), Sign::Plus));
        assert_eq!(t.branch_length(SeedId(0), Sign::Plus).unwrap(), ExtLength::Infinite);
    }

    #[test]
    fn seed_on_existing_line_is_degenerate() {
        let cfg = MarkedConfig::new(vec![seed(0, 0.0, 0.0, 0.0), seed(1, 2.0, 0.0, FRAC_PI_2)]).unwrap();
        assert!(build(&cfg).unwrap_err().is_degenerate());
    }

    #[test]
    fn ray_exit_hits_the_frame() {
        let w = Window::Rect { x0: -2.0, y0: -2.0, w: 4.0, h: 4.0 };
        assert_eq!(ray_exit(Point::ORIGIN, Point::new(1.0, 0.0), w), 2.0);
        assert_eq!(ray_exit(Point::new(5.0, 0.0), Point::new(1.0, 0.0), w), 0.0);
    }
}
