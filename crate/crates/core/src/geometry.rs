//! Planar positions and the fixed anchor constellation.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                x: self.x,
                y: self.y,
            })
        }
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<[f64; 2]> for Position2D {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

impl From<Position2D> for [f64; 2] {
    fn from(p: Position2D) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle, used for deployment regions and particle priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: Position2D,
    pub max: Position2D,
}

impl Region {
    pub fn new(min: Position2D, max: Position2D) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Position2D {
        Position2D::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Grows every side by `fraction` of the corresponding extent.
    pub fn inflate(&self, fraction: f64) -> Region {
        let dx = fraction * self.width();
        let dy = fraction * self.height();
        Region::new(
            Position2D::new(self.min.x - dx, self.min.y - dy),
            Position2D::new(self.max.x + dx, self.max.y + dy),
        )
    }
}

/// Fixed anchor positions plus the index of the TDOA reference anchor.
///
/// Immutable once built: anchors cannot move during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Position2D>,
    reference_index: usize,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Position2D>, reference_index: usize) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::TooFewAnchors {
                required: 2,
                actual: anchors.len(),
            });
        }
        for a in &anchors {
            a.check_finite()?;
        }
        for i in 0..anchors.len() {
            for j in (i + 1)..anchors.len() {
                if anchors[i].distance(&anchors[j]) <= 0.0 {
                    return Err(Error::CoincidentAnchors {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        if reference_index >= anchors.len() {
            return Err(Error::ReferenceOutOfRange {
                index: reference_index,
                count: anchors.len(),
            });
        }
        Ok(Self {
            anchors,
            reference_index,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn positions(&self) -> &[Position2D] {
        &self.anchors
    }

    pub fn get(&self, index: usize) -> Position2D {
        self.anchors[index]
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn reference(&self) -> Position2D {
        self.anchors[self.reference_index]
    }

    /// Indices of the non-reference anchors, in order.
    pub fn non_reference(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.anchors.len()).filter(move |&i| i != self.reference_index)
    }

    /// Distance from anchor `i` to the reference anchor.
    pub fn baseline(&self, i: usize) -> f64 {
        self.anchors[i].distance(&self.reference())
    }

    pub fn centroid(&self) -> Position2D {
        let n = self.anchors.len() as f64;
        let (sx, sy) = self
            .anchors
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Position2D::new(sx / n, sy / n)
    }

    pub fn bounding_box(&self) -> Region {
        let mut min = self.anchors[0];
        let mut max = self.anchors[0];
        for p in &self.anchors[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Region::new(min, max)
    }

    pub(crate) fn require(&self, minimum: usize) -> Result<()> {
        if self.anchors.len() < minimum {
            Err(Error::TooFewAnchors {
                required: minimum,
                actual: self.anchors.len(),
            })
        } else {
            Ok(())
        }
    }

    /// True when all anchors lie on one line (TDOA mirror ambiguity).
    pub fn is_collinear(&self, tolerance: f64) -> bool {
        let a = self.anchors[0];
        let Some(b) = self
            .anchors
            .iter()
            .copied()
            .max_by(|p, q| a.distance(p).total_cmp(&a.distance(q)))
        else {
            return true;
        };
        let len = a.distance(&b);
        if len == 0.0 {
            return true;
        }
        self.anchors.iter().all(|p| {
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            (cross / len).abs() <= tolerance
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coincident_anchors() {
        let err = AnchorSet::new(
            vec![
                Position2D::new(0.0, 0.0),
                Position2D::new(1.0, 0.0),
                Position2D::new(0.0, 0.0),
            ],
            0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::CoincidentAnchors {
                first: 0,
                second: 2
            }
        );
    }

    #[test]
    fn rejects_bad_reference() {
        let err = AnchorSet::new(
            vec![Position2D::new(0.0, 0.0), Position2D::new(1.0, 0.0)],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ReferenceOutOfRange { .. }));
    }

    #[test]
    fn rejects_nan() {
        let err = AnchorSet::new(
            vec![Position2D::new(f64::NAN, 0.0), Position2D::new(1.0, 0.0)],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn collinear_detection() {
        let line = AnchorSet::new(
            (0..4)
                .map(|i| Position2D::new(i as f64, 2.0 * i as f64))
                .collect(),
            0,
        )
        .unwrap();
        assert!(line.is_collinear(1e-9));
        let tri = AnchorSet::new(
            vec![
                Position2D::new(0.0, 0.0),
                Position2D::new(1.0, 0.0),
                Position2D::new(0.0, 1.0),
            ],
            0,
        )
        .unwrap();
        assert!(!tri.is_collinear(1e-9));
    }

    #[test]
    fn bounding_box_and_inflation() {
        let set = AnchorSet::new(
            vec![
                Position2D::new(0.0, 0.0),
                Position2D::new(10.0, 0.0),
                Position2D::new(0.0, 20.0),
            ],
            0,
        )
        .unwrap();
        let bb = set.bounding_box();
        assert_eq!(bb.max, Position2D::new(10.0, 20.0));
        let big = bb.inflate(0.2);
        assert_eq!(big.min, Position2D::new(-2.0, -4.0));
        assert_eq!(big.max, Position2D::new(12.0, 24.0));
    }
}
