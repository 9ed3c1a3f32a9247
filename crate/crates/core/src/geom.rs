//! Planar primitives: points, marked seeds, branch rays and their crossings.
//!
//! All floating-point decisions (parallelism, coincidence) go through the single
//! relative tolerance [`EPS_GEOM`].

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance for parallelism tests and point coincidence.
pub const EPS_GEOM: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-d cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedId(pub u64);

impl fmt::Display for SeedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Which of the two branches of a seed: `Plus` grows along the mark direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// A branch is named by its seed and its sign; ordering is lexicographic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchId {
    pub seed: SeedId,
    pub sign: Sign,
}

impl BranchId {
    pub fn new(seed: SeedId, sign: Sign) -> Self {
        BranchId { seed, sign }
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.seed, self.sign)
    }
}

/// A seed location with its angular mark in `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub id: SeedId,
    pub position: Point,
    pub mark: f64,
}

impl MarkedPoint {
    pub fn new(id: SeedId, position: Point, mark: f64) -> Result<Self> {
        check_mark(mark)?;
        if !position.is_finite() {
            return Err(Error::domain(format!("non-finite seed position {position}")));
        }
        Ok(MarkedPoint { id, position, mark })
    }

    pub fn direction(&self) -> Point {
        // Marks are validated on construction.
        Point::new(self.mark.cos(), self.mark.sin())
    }

    pub fn branch(&self, sign: Sign) -> Ray {
        Ray {
            origin: self.position,
            direction: self.direction() * sign.factor(),
            owner: BranchId::new(self.id, sign),
        }
    }
}

fn check_mark(mark: f64) -> Result<()> {
    if (0.0..PI).contains(&mark) {
        Ok(())
    } else {
        Err(Error::domain(format!("mark {mark} outside [0, pi)")))
    }
}

/// Unit vector `(cos α, sin α)` for a mark `α ∈ [0, π)`.
pub fn mark_to_direction(mark: f64) -> Result<Point> {
    check_mark(mark)?;
    Ok(Point::new(mark.cos(), mark.sin()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Point,
    pub direction: Point,
    pub owner: BranchId,
}

impl Ray {
    pub fn at(&self, s: f64) -> Point {
        self.origin + self.direction * s
    }
}

/// A length that may be infinite (an unblocked branch of a finite input).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtLength {
    Finite(f64),
    Infinite,
}

impl ExtLength {
    pub fn finite(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(ExtLength::Finite(value))
        } else {
            Err(Error::domain(format!("invalid length {value}")))
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtLength::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ExtLength::Finite(v) => Some(v),
            ExtLength::Infinite => None,
        }
    }

    /// The length as an extended real (`+inf` for infinite branches).
    pub fn to_f64(self) -> f64 {
        match self {
            ExtLength::Finite(v) => v,
            ExtLength::Infinite => f64::INFINITY,
        }
    }

    pub(crate) fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            ExtLength::Finite(v)
        } else {
            ExtLength::Infinite
        }
    }

    pub fn max(self, other: ExtLength) -> ExtLength {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Eq for ExtLength {}

impl PartialOrd for ExtLength {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtLength {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_f64().total_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtLength::Finite(v) => write!(f, "{v}"),
            ExtLength::Infinite => f.write_str("inf"),
        }
    }
}

// Infinite lengths serialize as the string "inf" so documents stay valid JSON.
impl Serialize for ExtLength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtLength::Finite(v) => s.serialize_f64(*v),
            ExtLength::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtLength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => ExtLength::finite(v).map_err(serde::de::Error::custom),
            Raw::Str(s) if s == "inf" => Ok(ExtLength::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad length {s:?}"))),
        }
    }
}

/// Intersection of two supporting lines, parametrized along each direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub point: Point,
    /// Signed parameter along the first direction.
    pub t_a: f64,
    /// Signed parameter along the second direction.
    pub t_b: f64,
}

/// Crossing of the lines `o_a + t d_a` and `o_b + t d_b` for unit directions.
///
/// Returns `Ok(None)` for distinct parallel lines and an error for coincident
/// ones. The arithmetic is symmetric: swapping the two lines swaps `t_a` and
/// `t_b` bit for bit and leaves the point unchanged.
pub fn line_crossing(o_a: Point, d_a: Point, o_b: Point, d_b: Point) -> Result<Option<Crossing>> {
    let denom = d_a.cross(d_b);
    let w = o_b - o_a;
    if denom.abs() <= EPS_GEOM {
        let offset = w.cross(d_a);
        if offset.abs() <= EPS_GEOM * (1.0 + w.norm()) {
            return Err(Error::degenerate(format!(
                "collinear supporting lines through {o_a} and {o_b}"
            )));
        }
        return Ok(None);
    }
    let t_a = w.cross(d_b) / denom;
    let t_b = w.cross(d_a) / denom;
    let point = (o_a + d_a * t_a + (o_b + d_b * t_b)) * 0.5;
    Ok(Some(Crossing { point, t_a, t_b }))
}

/// Forward intersection of two rays, with the arrival parameters on each.
///
/// Collinear rays whose forward parts overlap are degenerate; collinear rays
/// that point away from each other simply do not meet.
pub fn ray_intersection(a: &Ray, b: &Ray) -> Result<Option<Crossing>> {
    match line_crossing(a.origin, a.direction, b.origin, b.direction) {
        Ok(Some(c)) if c.t_a >= 0.0 && c.t_b >= 0.0 => Ok(Some(c)),
        Ok(_) => Ok(None),
        Err(e) => {
            let w = b.origin - a.origin;
            let b_ahead_of_a = w.dot(a.direction) >= 0.0;
            let a_ahead_of_b = (-w).dot(b.direction) >= 0.0;
            if b_ahead_of_a || a_ahead_of_b {
                Err(e)
            } else {
                Ok(None)
            }
        }
    }
}
