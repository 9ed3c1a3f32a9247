//! Homogeneous Poisson point processes with the usual (i.i.d. uniform) marking.
//!
//! Randomness is counter based: every draw is keyed by the master seed, a
//! stream index and a purpose tag, so replicates can be sampled in any order or
//! in parallel without changing results. [`PoissonField`] extends this to a lazily
//! sampled whole-plane realization, built cell by cell, so that nested or
//! overlapping regions always see the same points.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::MarkedConfig;
use crate::error::{Error, Result};
use crate::geom::{MarkedPoint, Point, SeedId};

/// Sampling region: an axis-aligned rectangle or a closed disc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Window {
    Rect { x0: f64, y0: f64, w: f64, h: f64 },
    Ball { center: Point, r: f64 },
}

impl Window {
    pub fn rect(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        let ok = [x0, y0, w, h].iter().all(|v| v.is_finite()) && w >= 0.0 && h >= 0.0;
        if !ok {
            return Err(Error::domain(format!("bad rectangle {x0},{y0},{w},{h}")));
        }
        Ok(Window::Rect { x0, y0, w, h })
    }

    pub fn ball(center: Point, r: f64) -> Result<Self> {
        if !center.is_finite() || !r.is_finite() || r < 0.0 {
            return Err(Error::domain(format!("bad ball radius {r}")));
        }
        Ok(Window::Ball { center, r })
    }

    /// The square `[0, √λ]²` of area `λ`.
    pub fn square(area: f64) -> Result<Self> {
        if !(area >= 0.0) {
            return Err(Error::domain(format!("bad area {area}")));
        }
        let side = area.sqrt();
        Window::rect(0.0, 0.0, side, side)
    }

    pub fn area(&self) -> f64 {
        match *self {
            Window::Rect { w, h, .. } => w * h,
            Window::Ball { r, .. } => PI * r * r,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Window::Rect { x0, y0, w, h } => p.x >= x0 && p.x <= x0 + w && p.y >= y0 && p.y <= y0 + h,
            Window::Ball { center, r } => p.dist(center) <= r,
        }
    }

    /// Whether the closed disc `B(c, radius)` lies inside the window.
    pub fn contains_ball(&self, c: Point, radius: f64) -> bool {
        if !radius.is_finite() {
            return false;
        }
        match *self {
            Window::Rect { x0, y0, w, h } => {
                c.x - radius >= x0 && c.x + radius <= x0 + w && c.y - radius >= y0 && c.y + radius <= y0 + h
            }
            Window::Ball { center, r } => c.dist(center) + radius <= r,
        }
    }

    /// Bounding rectangle as `(x_min, y_min, x_max, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Window::Rect { x0, y0, w, h } => (x0, y0, x0 + w, y0 + h),
            Window::Ball { center, r } => (center.x - r, center.y - r, center.x + r, center.y + r),
        }
    }

    /// The same window grown by `pad` on every side.
    pub fn padded(&self, pad: f64) -> Result<Self> {
        match *self {
            Window::Rect { x0, y0, w, h } => Window::rect(x0 - pad, y0 - pad, w + 2.0 * pad, h + 2.0 * pad),
            Window::Ball { center, r } => Window::ball(center, r + pad),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// Expected number of points per unit area.
    pub intensity: f64,
    pub master_seed: u64,
    pub stream: u64,
}

impl ProcessParams {
    pub fn new(intensity: f64, master_seed: u64, stream: u64) -> Result<Self> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::domain(format!("intensity must be positive, got {intensity}")));
        }
        Ok(ProcessParams { intensity, master_seed, stream })
    }

    /// Parameters for the `index`-th child stream; children of distinct
    /// parents or indices never collide in practice.
    pub fn substream(&self, index: u64) -> Self {
        ProcessParams { stream: mix(&[self.stream, 0x5eed_5eed, index]), ..*self }
    }

    pub fn with_intensity(&self, intensity: f64) -> Result<Self> {
        ProcessParams::new(intensity, self.master_seed, self.stream)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        ProcessParams::new(self.intensity, self.master_seed, self.stream).map(|_| ())
    }
}

/// What a random stream is used for; keeps unrelated draws independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Purpose {
    Window = 1,
    AddPoint = 2,
    FieldCell = 3,
    Mark = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0x243f_6a88_85a3_08d3, |acc, &w| splitmix(acc ^ splitmix(w)))
}

/// Deterministic generator for `(master seed, purpose, keys)`, on the ChaCha
/// stream selected by the stream index.
pub(crate) fn stream_rng(params: &ProcessParams, purpose: Purpose, keys: &[u64]) -> ChaCha8Rng {
    let mut words = vec![params.master_seed, purpose as u64];
    words.extend_from_slice(keys);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&words));
    rng.set_stream(params.stream);
    rng
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::domain(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

fn uniform_mark<R: Rng>(rng: &mut R) -> f64 {
    // random::<f64>() is in [0, 1), so the product stays below pi.
    let m = rng.random::<f64>() * PI;
    if m < PI {
        m
    } else {
        0.0
    }
}

fn uniform_in<R: Rng>(rng: &mut R, window: &Window) -> Point {
    match *window {
        Window::Rect { x0, y0, w, h } => Point::new(x0 + w * rng.random::<f64>(), y0 + h * rng.random::<f64>()),
        Window::Ball { center, r } => loop {
            let p = Point::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0);
            if p.dot(p) <= 1.0 {
                break center + p * r;
            }
        },
    }
}

/// One realization of the marked Poisson process restricted to `window`.
pub fn sample_poisson(window: &Window, params: &ProcessParams) -> Result<MarkedConfig> {
    params.validate()?;
    let mut rng = stream_rng(params, Purpose::Window, &[]);
    let n = poisson_count(&mut rng, params.intensity * window.area())?;
    let points = (0..n)
        .map(|i| {
            let position = uniform_in(&mut rng, window);
            let mark = uniform_mark(&mut rng);
            MarkedPoint { id: SeedId(i as u64), position, mark }
        })
        .collect();
    MarkedConfig::with_window(points, *window)
}

/// A fresh mark drawn under the usual rules from the stream `(params, keys)`.
pub fn fresh_mark(params: &ProcessParams, keys: &[u64]) -> f64 {
    uniform_mark(&mut stream_rng(params, Purpose::Mark, keys))
}

/// Adds a seed at `position` carrying a fresh uniform mark.
pub fn add_point(config: &MarkedConfig, position: Point, params: &ProcessParams) -> Result<MarkedConfig> {
    if config.points().iter().any(|p| p.position == position) {
        return Err(Error::degenerate(format!("a seed already sits at {position}")));
    }
    let mark = uniform_mark(&mut stream_rng(params, Purpose::AddPoint, &[]));
    let id = config.points().iter().map(|p| p.id.0 + 1).max().unwrap_or(0);
    let mut points = config.points().to_vec();
    points.push(MarkedPoint::new(SeedId(id), position, mark)?);
    match config.window() {
        Some(w) => MarkedConfig::with_window(points, w),
        None => MarkedConfig::new(points),
    }
}

/// Source of marked points of a whole-plane realization, queried by disc.
pub trait PointSource: Sync {
    /// All points of the realization inside the closed disc `B(center, r)`.
    fn points_in_ball(&self, center: Point, r: f64) -> Vec<MarkedPoint>;
}

// Seed ids of field points pack (tag, cell x, cell y, index in cell).
const CELL_BITS: u32 = 22;
const CELL_OFFSET: i64 = 1 << (CELL_BITS - 1);
const INDEX_BITS: u32 = 16;

/// Lazily sampled whole-plane Poisson realization.
///
/// The plane is tiled into square cells; each cell draws its own Poisson count,
/// positions and marks from a substream keyed by the cell coordinates. Any
/// query therefore sees one fixed realization regardless of query order.
pub struct PoissonField {
    params: ProcessParams,
    tag: u8,
    cell: f64,
    cache: Mutex<HashMap<(i64, i64), Vec<MarkedPoint>>>,
}

impl PoissonField {
    pub fn new(params: ProcessParams) -> Result<Self> {
        Self::tagged(params, 0)
    }

    /// A field whose seed ids carry `tag`, so points of independent fields
    /// can be mixed in one configuration without id clashes.
    pub fn tagged(params: ProcessParams, tag: u8) -> Result<Self> {
        params.validate()?;
        if tag >= 8 {
            return Err(Error::domain("field tag must be below 8"));
        }
        // About four points per cell.
        let cell = 2.0 / params.intensity.sqrt();
        Ok(PoissonField { params, tag, cell, cache: Mutex::new(HashMap::new()) })
    }

    pub fn params(&self) -> &ProcessParams {
        &self.params
    }

    fn cell_points(&self, cx: i64, cy: i64) -> Vec<MarkedPoint> {
        if let Some(pts) = self.cache.lock().expect("field cache poisoned").get(&(cx, cy)) {
            return pts.clone();
        }
        let mut rng = stream_rng(&self.params, Purpose::FieldCell, &[cx as u64, cy as u64]);
        let n = poisson_count(&mut rng, self.params.intensity * self.cell * self.cell)
            .expect("cell mean is positive and finite");
        assert!(n < (1 << INDEX_BITS), "cell overflow");
        let ux = ((cx + CELL_OFFSET) as u64) & ((1 << CELL_BITS) - 1);
        let uy = ((cy + CELL_OFFSET) as u64) & ((1 << CELL_BITS) - 1);
        let base = ((self.tag as u64) << (2 * CELL_BITS + INDEX_BITS))
            | (ux << (CELL_BITS + INDEX_BITS))
            | (uy << INDEX_BITS);
        let window = Window::Rect { x0: cx as f64 * self.cell, y0: cy as f64 * self.cell, w: self.cell, h: self.cell };
        let pts: Vec<MarkedPoint> = (0..n)
            .map(|k| {
                let position = uniform_in(&mut rng, &window);
                let mark = uniform_mark(&mut rng);
                MarkedPoint { id: SeedId(base | k as u64), position, mark }
            })
            .collect();
        self.cache.lock().expect("field cache poisoned").insert((cx, cy), pts.clone());
        pts
    }

    /// Points inside an arbitrary rectangle `[x_min, x_max] × [y_min, y_max]`.
    pub fn points_in_rect(&self, x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Vec<MarkedPoint> {
        let mut out = Vec::new();
        for cx in (x_min / self.cell).floor() as i64..=(x_max / self.cell).floor() as i64 {
            for cy in (y_min / self.cell).floor() as i64..=(y_max / self.cell).floor() as i64 {
                out.extend(self.cell_points(cx, cy).into_iter().filter(|p| {
                    p.position.x >= x_min && p.position.x <= x_max && p.position.y >= y_min && p.position.y <= y_max
                }));
            }
        }
        out
    }
}

impl PointSource for PoissonField {
    fn points_in_ball(&self, center: Point, r: f64) -> Vec<MarkedPoint> {
        let mut pts = self.points_in_rect(center.x - r, center.y - r, center.x + r, center.y + r);
        pts.retain(|p| p.position.dist(center) <= r);
        pts
    }
}

/// Two sources glued along the perpendicular bisector of `a` and `b`: points
/// strictly closer to `a` come from `near_a`, the rest from `near_b`.
pub struct SplitSource<'a> {
    pub a: Point,
    pub b: Point,
    pub near_a: &'a dyn PointSource,
    pub near_b: &'a dyn PointSource,
}

impl PointSource for SplitSource<'_> {
    fn points_in_ball(&self, center: Point, r: f64) -> Vec<MarkedPoint> {
        let closer_to_a = |p: &MarkedPoint| p.position.dist(self.a) < p.position.dist(self.b);
        let mut pts: Vec<MarkedPoint> =
            self.near_a.points_in_ball(center, r).into_iter().filter(|p| closer_to_a(p)).collect();
        pts.extend(self.near_b.points_in_ball(center, r).into_iter().filter(|p| !closer_to_a(p)));
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> ProcessParams {
        ProcessParams::new(1.0, seed, 0).unwrap()
    }

    #[test]
    fn zero_area_window_is_empty() {
        let w = Window::rect(0.0, 0.0, 0.0, 5.0).unwrap();
        assert!(sample_poisson(&w, &params(1)).unwrap().is_empty());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(ProcessParams::new(0.0, 1, 0).is_err());
        assert!(ProcessParams::new(-1.0, 1, 0).is_err());
        assert!(Window::rect(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(Window::ball(Point::ORIGIN, f64::NAN).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let w = Window::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        let a = sample_poisson(&w, &params(7)).unwrap();
        let b = sample_poisson(&w, &params(7)).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_poisson(&w, &params(8)).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn ball_samples_stay_inside() {
        let w = Window::ball(Point::new(3.0, -2.0), 4.0).unwrap();
        let cfg = sample_poisson(&w, &params(3)).unwrap();
        assert!(!cfg.is_empty());
        assert!(cfg.points().iter().all(|p| w.contains(p.position)));
        assert!(cfg.points().iter().all(|p| (0.0..PI).contains(&p.mark)));
    }

    #[test]
    fn add_point_behaviour() {
        let empty = MarkedConfig::new(vec![]).unwrap();
        let one = add_point(&empty, Point::ORIGIN, &params(1)).unwrap();
        assert_eq!(one.len(), 1);
        assert!((0.0..PI).contains(&one.points()[0].mark));
        let err = add_point(&one, Point::ORIGIN, &params(1)).unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn field_queries_are_consistent() {
        let f = PoissonField::new(params(11)).unwrap();
        let big = f.points_in_ball(Point::new(0.5, 0.5), 6.0);
        let small = f.points_in_ball(Point::new(0.5, 0.5), 3.0);
        assert!(small.iter().all(|p| big.contains(p)));
        let fresh = PoissonField::new(params(11)).unwrap();
        assert_eq!(fresh.points_in_ball(Point::new(0.5, 0.5), 3.0), small);
        let mut ids: Vec<_> = big.iter().map(|p| p.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), big.len());
    }

    #[test]
    fn split_source_takes_each_side_from_its_field() {
        let p = PoissonField::tagged(params(1), 0).unwrap();
        let q = PoissonField::tagged(params(2), 1).unwrap();
        let a = Point::ORIGIN;
        let b = Point::new(4.0, 0.0);
        let split = SplitSource { a, b, near_a: &p, near_b: &q };
        for pt in split.points_in_ball(Point::new(2.0, 0.0), 5.0) {
            let from_p = p.points_in_ball(Point::new(2.0, 0.0), 5.0).contains(&pt);
            assert_eq!(from_p, pt.position.x < 2.0);
        }
    }
}
