//! Signed distances between spheres, capsules and half-spaces, and the
//! smooth collision penalty built on them.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroups::Transform3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("signed distance between two half-spaces is not supported")]
    UnsupportedPair,
    #[error("{0}")]
    Argument(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Points within `radius` of the segment `a`–`b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// The solid `{x : normal · x ≤ offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Sphere(Sphere),
    Capsule(Capsule),
    HalfSpace(HalfSpace),
}

impl Sphere {
    pub fn new(center: Vector3<f64>, radius: f64) -> Self {
        Sphere { center, radius }
    }
}

impl Capsule {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, radius: f64) -> Self {
        Capsule { a, b, radius }
    }
}

impl HalfSpace {
    /// Normalizes `normal`; fails on a zero normal.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, CollisionError> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(CollisionError::Argument("half-space normal must be non-zero".into()));
        }
        Ok(HalfSpace {
            normal: normal / n,
            offset,
        })
    }
}

impl Primitive {
    pub fn validate(&self) -> Result<(), CollisionError> {
        let radius = match self {
            Primitive::Sphere(s) => s.radius,
            Primitive::Capsule(c) => c.radius,
            Primitive::HalfSpace(h) => {
                if ((h.normal.norm()) - 1.0).abs() > 1e-9 {
                    return Err(CollisionError::Argument("half-space normal must be unit length".into()));
                }
                return Ok(());
            }
        };
        if !(radius > 0.0) {
            return Err(CollisionError::Argument(format!("radius must be positive, got {radius}")));
        }
        Ok(())
    }

    /// Rigidly moves the primitive by `t`.
    pub fn transformed(&self, t: &Transform3) -> Primitive {
        match self {
            Primitive::Sphere(s) => Primitive::Sphere(Sphere::new(t.apply(&s.center), s.radius)),
            Primitive::Capsule(c) => {
                Primitive::Capsule(Capsule::new(t.apply(&c.a), t.apply(&c.b), c.radius))
            }
            Primitive::HalfSpace(h) => {
                let normal = t.rotation.rotate(&h.normal);
                Primitive::HalfSpace(HalfSpace {
                    normal,
                    offset: h.offset + normal.dot(&t.translation),
                })
            }
        }
    }
}

/// Closest point parameters `(s, t)` on segments `p1 + s(q1 − p1)` and
/// `p2 + t(q2 − p2)`, both clamped to `[0, 1]`.
pub fn closest_segment_params(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (f64, f64) {
    const EPS: f64 = 1e-14;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > EPS * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

/// Closest-point parameter on segment `a`–`b` to point `p`.
pub fn closest_point_param(a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len2 = d.dot(&d);
    if len2 <= 1e-28 {
        return 0.0;
    }
    ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
}

/// Witness of a signed-distance query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Separation {
    pub distance: f64,
    /// Unit direction in which moving the first primitive increases the
    /// distance; zero when the core features coincide.
    pub normal: Vector3<f64>,
    /// Segment parameter on the first primitive when it is a capsule (0 for spheres).
    pub param: f64,
}

fn unit_or_zero(v: Vector3<f64>) -> (f64, Vector3<f64>) {
    let n = v.norm();
    if n > 1e-12 { (n, v / n) } else { (n, Vector3::zeros()) }
}

/// Sphere/capsule core of a primitive, as a segment.
fn core(p: &Primitive) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
    match p {
        Primitive::Sphere(s) => Some((s.center, s.center, s.radius)),
        Primitive::Capsule(c) => Some((c.a, c.b, c.radius)),
        Primitive::HalfSpace(_) => None,
    }
}

fn core_vs_halfspace(a: &Vector3<f64>, b: &Vector3<f64>, r: f64, h: &HalfSpace) -> Separation {
    let da = h.normal.dot(a) - h.offset;
    let db = h.normal.dot(b) - h.offset;
    let (d, param) = if db < da { (db, 1.0) } else { (da, 0.0) };
    Separation {
        distance: d - r,
        normal: h.normal,
        param,
    }
}

/// Lexicographic bit order, used to make mixed-order evaluation bitwise symmetric.
fn segment_key(a: &Vector3<f64>, b: &Vector3<f64>, r: f64) -> [u64; 7] {
    [
        a.x.to_bits(),
        a.y.to_bits(),
        a.z.to_bits(),
        b.x.to_bits(),
        b.y.to_bits(),
        b.z.to_bits(),
        r.to_bits(),
    ]
}

/// Signed distance from the first primitive to the second, with the
/// direction and segment parameter on the first primitive.
pub fn separation(first: &Primitive, second: &Primitive) -> Result<Separation, CollisionError> {
    match (core(first), core(second)) {
        (None, None) => Err(CollisionError::UnsupportedPair),
        (Some((a, b, r)), None) => {
            let Primitive::HalfSpace(h) = second else { unreachable!() };
            Ok(core_vs_halfspace(&a, &b, r, h))
        }
        (None, Some((a, b, r))) => {
            let Primitive::HalfSpace(h) = first else { unreachable!() };
            let s = core_vs_halfspace(&a, &b, r, h);
            Ok(Separation {
                distance: s.distance,
                normal: -h.normal,
                param: 0.0,
            })
        }
        (Some((a1, b1, r1)), Some((a2, b2, r2))) => {
            let swap = segment_key(&a1, &b1, r1) > segment_key(&a2, &b2, r2);
            let (s, t) = if swap {
                let (t, s) = closest_segment_params(&a2, &b2, &a1, &b1);
                (s, t)
            } else {
                closest_segment_params(&a1, &b1, &a2, &b2)
            };
            let p1 = a1 + (b1 - a1) * s;
            let p2 = a2 + (b2 - a2) * t;
            let (gap, normal) = if swap {
                let (g, n) = unit_or_zero(p2 - p1);
                (g, -n)
            } else {
                unit_or_zero(p1 - p2)
            };
            let radii = if swap { r2 + r1 } else { r1 + r2 };
            Ok(Separation {
                distance: gap - radii,
                normal,
                param: s,
            })
        }
    }
}

/// Euclidean separation minus radii; negative when overlapping.
pub fn signed_distance(a: &Primitive, b: &Primitive) -> Result<f64, CollisionError> {
    separation(a, b).map(|s| s.distance)
}

/// Smooth penalty on a signed distance with buffer `eta`:
/// linear inside contact, quadratic in the buffer, zero beyond it.
pub fn activation(d: f64, eta: f64) -> Result<f64, CollisionError> {
    check_eta(eta)?;
    Ok(activation_unchecked(d, eta))
}

/// Derivative of [`activation`] with respect to `d`.
pub fn activation_derivative(d: f64, eta: f64) -> Result<f64, CollisionError> {
    check_eta(eta)?;
    Ok(activation_derivative_unchecked(d, eta))
}

fn check_eta(eta: f64) -> Result<(), CollisionError> {
    if !(eta > 0.0) {
        return Err(CollisionError::Argument(format!("buffer distance must be positive, got {eta}")));
    }
    Ok(())
}

pub(crate) fn activation_unchecked(d: f64, eta: f64) -> f64 {
    if d < 0.0 {
        -d + 0.5 * eta
    } else if d < eta {
        let gap = eta - d;
        0.5 / eta * gap * gap
    } else {
        0.0
    }
}

pub(crate) fn activation_derivative_unchecked(d: f64, eta: f64) -> f64 {
    if d < 0.0 {
        -1.0
    } else if d < eta {
        -(eta - d) / eta
    } else {
        0.0
    }
}

/// Capsules swept by corresponding spheres between two timesteps.
pub fn swept_capsules(from: &[Sphere], to: &[Sphere]) -> Result<Vec<Capsule>, CollisionError> {
    if from.len() != to.len() {
        return Err(CollisionError::Argument(format!(
            "sphere lists differ in length: {} vs {}",
            from.len(),
            to.len()
        )));
    }
    from.iter()
        .zip(to)
        .enumerate()
        .map(|(k, (a, b))| {
            if a.radius != b.radius {
                return Err(CollisionError::Argument(format!(
                    "sphere {k} changes radius from {} to {}",
                    a.radius, b.radius
                )));
            }
            Ok(Capsule::new(a.center, b.center, a.radius))
        })
        .collect()
}

/// Obstacles in the world frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub obstacles: Vec<Primitive>,
}

impl WorldModel {
    pub fn new(obstacles: Vec<Primitive>) -> Self {
        WorldModel { obstacles }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum PrimitiveJson {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        endpoint_a: [f64; 3],
        endpoint_b: [f64; 3],
        radius: f64,
    },
    Halfspace {
        normal: [f64; 3],
        offset: f64,
    },
}

impl Serialize for Primitive {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let arr = |v: &Vector3<f64>| [v.x, v.y, v.z];
        match self {
            Primitive::Sphere(p) => PrimitiveJson::Sphere {
                center: arr(&p.center),
                radius: p.radius,
            },
            Primitive::Capsule(c) => PrimitiveJson::Capsule {
                endpoint_a: arr(&c.a),
                endpoint_b: arr(&c.b),
                radius: c.radius,
            },
            Primitive::HalfSpace(h) => PrimitiveJson::Halfspace {
                normal: arr(&h.normal),
                offset: h.offset,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Primitive {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let p = match PrimitiveJson::deserialize(d)? {
            PrimitiveJson::Sphere { center, radius } => {
                Primitive::Sphere(Sphere::new(Vector3::from(center), radius))
            }
            PrimitiveJson::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => Primitive::Capsule(Capsule::new(
                Vector3::from(endpoint_a),
                Vector3::from(endpoint_b),
                radius,
            )),
            PrimitiveJson::Halfspace { normal, offset } => Primitive::HalfSpace(
                HalfSpace::new(Vector3::from(normal), offset).map_err(D::Error::custom)?,
            ),
        };
        p.validate().map_err(D::Error::custom)?;
        Ok(p)
    }
}
