//! Oriented 3D boxes, rigid poses and the box metrics used by training and
//! evaluation.
//!
//! Boxes are yaw-only cuboids. The size triple `(w, l, h)` is measured along
//! the box's own x, y and z axes before the yaw rotation is applied, so a box
//! with `theta = 0` spans `w` along world x and `l` along world y.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of corners produced for every box.
pub const NUM_CORNERS: usize = 8;

/// Tolerance used when checking that a corner set describes a cuboid.
pub const CORNER_TOLERANCE: f64 = 1e-6;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut wrapped = angle.rem_euclid(two_pi);
    if wrapped > PI {
        wrapped -= two_pi;
    }
    wrapped
}

/// Oriented 3D bounding box `(x, y, z, w, l, h, theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct Box7 {
    center: [f64; 3],
    size: [f64; 3],
    theta: f64,
}

impl Box7 {
    pub fn new(x: f64, y: f64, z: f64, w: f64, l: f64, h: f64, theta: f64) -> Result<Self> {
        Self::from_parts([x, y, z], [w, l, h], theta)
    }

    pub fn from_parts(center: [f64; 3], size: [f64; 3], theta: f64) -> Result<Self> {
        if center.iter().chain(size.iter()).any(|v| !v.is_finite()) || !theta.is_finite() {
            return Err(Error::InvalidBox(format!(
                "non-finite parameters: center {center:?} size {size:?} theta {theta}"
            )));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidBox(format!("nonpositive size {size:?}")));
        }
        Ok(Box7 {
            center,
            size,
            theta: wrap_angle(theta),
        })
    }

    /// Builds a box from a predicted pose `(x, y, z, theta)` and a known size.
    pub fn from_pose(pose: [f64; 4], size: [f64; 3]) -> Result<Self> {
        Self::from_parts([pose[0], pose[1], pose[2]], size, pose[3])
    }

    pub fn x(&self) -> f64 {
        self.center[0]
    }
    pub fn y(&self) -> f64 {
        self.center[1]
    }
    pub fn z(&self) -> f64 {
        self.center[2]
    }
    pub fn w(&self) -> f64 {
        self.size[0]
    }
    pub fn l(&self) -> f64 {
        self.size[1]
    }
    pub fn h(&self) -> f64 {
        self.size[2]
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn center(&self) -> [f64; 3] {
        self.center
    }
    pub fn size(&self) -> [f64; 3] {
        self.size
    }

    /// The four regressed values `(x, y, z, theta)`.
    pub fn pose_params(&self) -> [f64; 4] {
        [self.center[0], self.center[1], self.center[2], self.theta]
    }

    pub fn to_array(&self) -> [f64; 7] {
        let [x, y, z] = self.center;
        let [w, l, h] = self.size;
        [x, y, z, w, l, h, self.theta]
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Pose mapping box-frame coordinates to the frame the box is expressed in.
    pub fn frame(&self) -> Pose {
        Pose::from_yaw(self.theta, self.center)
    }

    /// Whether `point` lies inside the box (boundary inclusive).
    pub fn contains(&self, point: [f64; 3]) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = point[0] - self.center[0];
        let dy = point[1] - self.center[1];
        let dz = point[2] - self.center[2];
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= 0.5 * self.size[0]
            && ly.abs() <= 0.5 * self.size[1]
            && dz.abs() <= 0.5 * self.size[2]
    }

    /// Bird's-eye-view footprint, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let hw = 0.5 * self.size[0];
        let hl = 0.5 * self.size[1];
        [[-hw, -hl], [hw, -hl], [hw, hl], [-hw, hl]].map(|[u, v]| {
            [
                self.center[0] + c * u - s * v,
                self.center[1] + s * u + c * v,
            ]
        })
    }
}

impl TryFrom<[f64; 7]> for Box7 {
    type Error = Error;

    fn try_from(v: [f64; 7]) -> Result<Self> {
        Box7::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }
}

impl From<Box7> for [f64; 7] {
    fn from(b: Box7) -> Self {
        b.to_array()
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Checks that `rotation` is orthonormal with determinant +1 to 1e-9.
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        if rotation.iter().flatten().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("pose has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "pose rotation is not orthonormal (column dot {i},{j} = {dot})"
                    )));
                }
            }
        }
        let det = det3(&rotation);
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("pose rotation has determinant {det}")));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_yaw(yaw: f64, translation: [f64; 3]) -> Self {
        let (s, c) = yaw.sin_cos();
        Pose {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation,
        }
    }

    pub fn translation_only(translation: [f64; 3]) -> Self {
        Pose {
            translation,
            ..Pose::identity()
        }
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    /// Heading of the rotated x axis in the xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    pub fn inverse(&self) -> Pose {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let ti = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Pose {
            rotation: rt,
            translation: ti,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Pose {
            rotation,
            translation: self.apply(other.translation),
        }
    }

    /// Row-major 3×4 `[R | t]`.
    pub fn to_matrix(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2],
        ]
    }

    pub fn from_matrix(m: [f64; 12]) -> Result<Self> {
        Pose::new(
            [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            [m[3], m[7], m[11]],
        )
    }
}

fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// The eight timestamped corners of a box, rows `(x, y, z, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerSet {
    pub corners: [[f64; 4]; NUM_CORNERS],
}

/// Half-extent sign pattern of corner `index` over `(w, l, h)`.
///
/// The order is `---, --+, -+-, -++, +--, +-+, ++-, +++`.
pub fn corner_signs(index: usize) -> [f64; 3] {
    let sign = |bit: usize| if (index >> bit) & 1 == 1 { 1.0 } else { -1.0 };
    [sign(2), sign(1), sign(0)]
}

/// Corner offsets in the box frame (before rotation).
pub fn corner_offsets(size: [f64; 3]) -> [[f64; 3]; NUM_CORNERS] {
    std::array::from_fn(|j| {
        let s = corner_signs(j);
        [0.5 * size[0] * s[0], 0.5 * size[1] * s[1], 0.5 * size[2] * s[2]]
    })
}

/// Corner positions for pose parameters `(x, y, z, theta)` and a size triple.
///
/// This is the same map as [`box_to_corners`] without box validation; the
/// differentiable graph op uses it together with [`corners_jacobian`].
pub fn pose_corners(pose: [f64; 4], size: [f64; 3]) -> [[f64; 3]; NUM_CORNERS] {
    let (s, c) = pose[3].sin_cos();
    corner_offsets(size).map(|[ox, oy, oz]| {
        [
            pose[0] + c * ox - s * oy,
            pose[1] + s * ox + c * oy,
            pose[2] + oz,
        ]
    })
}

/// Jacobian of every corner coordinate with respect to `(x, y, z, theta)`.
///
/// Entry `[j][k][p]` is `d corner_j[k] / d pose[p]`.
pub fn corners_jacobian(pose: [f64; 4], size: [f64; 3]) -> [[[f64; 4]; 3]; NUM_CORNERS] {
    let (s, c) = pose[3].sin_cos();
    corner_offsets(size).map(|[ox, oy, _]| {
        [
            [1.0, 0.0, 0.0, -s * ox - c * oy],
            [0.0, 1.0, 0.0, c * ox - s * oy],
            [0.0, 0.0, 1.0, 0.0],
        ]
    })
}

pub fn box_to_corners(b: &Box7, timestamp: f64) -> CornerSet {
    let xyz = pose_corners(b.pose_params(), b.size());
    CornerSet {
        corners: xyz.map(|[x, y, z]| [x, y, z, timestamp]),
    }
}

/// Inverse of [`box_to_corners`]; rejects corner sets that are not a
/// canonically ordered yaw-only cuboid within [`CORNER_TOLERANCE`].
pub fn corners_to_box(set: &CornerSet) -> Result<Box7> {
    let c = &set.corners;
    let mut center = [0.0; 3];
    for row in c {
        for k in 0..3 {
            center[k] += row[k] / NUM_CORNERS as f64;
        }
    }
    // Mean of the positive-sign corners minus mean of the negative ones, per axis.
    let mut axes = [[0.0; 3]; 3];
    for (j, row) in c.iter().enumerate() {
        let signs = corner_signs(j);
        for (axis, sign) in axes.iter_mut().zip(signs) {
            for k in 0..3 {
                axis[k] += sign * row[k] / 4.0;
            }
        }
    }
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let size = [norm(axes[0]), norm(axes[1]), norm(axes[2])];
    let theta = axes[0][1].atan2(axes[0][0]);
    let recovered = Box7::from_parts(center, size, theta)
        .map_err(|e| Error::DegenerateCorners(e.to_string()))?;
    let rebuilt = pose_corners(recovered.pose_params(), recovered.size());
    for (j, (got, want)) in c.iter().zip(rebuilt.iter()).enumerate() {
        let dev = (0..3).map(|k| (got[k] - want[k]).abs()).fold(0.0, f64::max);
        if dev > CORNER_TOLERANCE {
            return Err(Error::DegenerateCorners(format!(
                "corner {j} deviates by {dev:.3e} m from the fitted cuboid"
            )));
        }
    }
    Ok(recovered)
}

pub fn transform_box(b: &Box7, pose: &Pose) -> Box7 {
    Box7 {
        center: pose.apply(b.center),
        size: b.size,
        theta: wrap_angle(b.theta + pose.yaw()),
    }
}

pub fn transform_points(points: &[[f64; 3]], pose: &Pose) -> Vec<[f64; 3]> {
    points.iter().map(|&p| pose.apply(p)).collect()
}

pub fn center_distance(a: &Box7, b: &Box7) -> f64 {
    let d: f64 = (0..3).map(|k| (a.center[k] - b.center[k]).powi(2)).sum();
    d.sqrt()
}

/// Shifts the center by `(dx, dy, dz)` and rotates the yaw by `dtheta`.
pub fn apply_box_offset(b: &Box7, offset: [f64; 4]) -> Box7 {
    Box7 {
        center: [
            b.center[0] + offset[0],
            b.center[1] + offset[1],
            b.center[2] + offset[2],
        ],
        size: b.size,
        theta: wrap_angle(b.theta + offset[3]),
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let denom = d1 - d2;
    if denom.abs() < 1e-300 {
        return p;
    }
    let t = d1 / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman clipping of `subject` by the counter-clockwise convex
/// polygon `clip`.
pub fn clip_convex_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    let mut input = Vec::with_capacity(8);
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        std::mem::swap(&mut input, &mut output);
        output.clear();
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice
}

/// Volume IoU of two yaw-oriented boxes.
pub fn iou3d(a: &Box7, b: &Box7) -> f64 {
    let bottom = (a.z() - 0.5 * a.h()).max(b.z() - 0.5 * b.h());
    let top = (a.z() + 0.5 * a.h()).min(b.z() + 0.5 * b.h());
    let height = top - bottom;
    if height <= 0.0 {
        return 0.0;
    }
    let clipped = clip_convex_polygon(&a.footprint(), &b.footprint());
    let area = polygon_area(&clipped).max(0.0);
    let inter = area * height;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(v: [f64; 7]) -> Box7 {
        Box7::try_from(v).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!(close(wrap_angle(-PI), PI, 1e-12));
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-12));
        assert!(close(wrap_angle(0.3 + 4.0 * PI), 0.3, 1e-12));
    }

    #[test]
    fn rejects_nonpositive_size() {
        assert!(matches!(
            Box7::new(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0),
            Err(Error::InvalidBox(_))
        ));
        assert!(Box7::new(0.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(Box7::new(f64::NAN, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn unit_cube_corners_in_canonical_order() {
        let set = box_to_corners(&bx([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]), 0.0);
        let expected = [
            [-0.5, -0.5, -0.5],
            [-0.5, -0.5, 0.5],
            [-0.5, 0.5, -0.5],
            [-0.5, 0.5, 0.5],
            [0.5, -0.5, -0.5],
            [0.5, -0.5, 0.5],
            [0.5, 0.5, -0.5],
            [0.5, 0.5, 0.5],
        ];
        for (row, want) in set.corners.iter().zip(expected) {
            assert_eq!(&row[..3], &want[..]);
            assert_eq!(row[3], 0.0);
        }
    }

    #[test]
    fn translated_cube_corners_carry_timestamp() {
        let set = box_to_corners(&bx([2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]), 0.5);
        for (j, row) in set.corners.iter().enumerate() {
            let s = corner_signs(j);
            assert_eq!(row[0], 2.0 + 0.5 * s[0]);
            assert_eq!(row[1], 0.5 * s[1]);
            assert_eq!(row[2], 0.5 * s[2]);
            assert_eq!(row[3], 0.5);
        }
    }

    #[test]
    fn quarter_turn_swaps_extents() {
        let set = box_to_corners(&bx([0.0, 0.0, 0.0, 2.0, 1.0, 1.0, PI / 2.0]), 0.0);
        // R(pi/2) (ox, oy) = (-oy, ox)
        for (j, row) in set.corners.iter().enumerate() {
            let s = corner_signs(j);
            let (ox, oy, oz) = (1.0 * s[0], 0.5 * s[1], 0.5 * s[2]);
            assert!(close(row[0], -oy, 1e-12));
            assert!(close(row[1], ox, 1e-12));
            assert!(close(row[2], oz, 1e-12));
        }
        let xs: Vec<f64> = set.corners.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = set.corners.iter().map(|r| r[1]).collect();
        let extent = |v: &[f64]| {
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(close(extent(&xs), 1.0, 1e-12));
        assert!(close(extent(&ys), 2.0, 1e-12));
    }

    #[test]
    fn corners_to_box_inverts_unit_cube() {
        let set = box_to_corners(&bx([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]), 0.0);
        let b = corners_to_box(&set).unwrap();
        assert_eq!(b.to_array(), [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn perturbed_corner_is_degenerate() {
        let mut set = box_to_corners(&bx([1.0, 2.0, 0.5, 4.0, 2.0, 1.5, 0.3]), 0.0);
        set.corners[5][1] += 1.0;
        assert!(matches!(
            corners_to_box(&set),
            Err(Error::DegenerateCorners(_))
        ));
    }

    #[test]
    fn transform_examples() {
        let b = bx([0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.4]);
        assert_eq!(transform_box(&b, &Pose::identity()), b);
        let t = transform_box(&b, &Pose::translation_only([1.0, 2.0, 3.0]));
        assert_eq!(t.center(), [1.0, 2.0, 3.0]);
        assert_eq!(t.theta(), 0.4);

        let b = bx([1.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.0]);
        let r = transform_box(&b, &Pose::from_yaw(PI / 2.0, [0.0; 3]));
        assert!(close(r.x(), 0.0, 1e-12));
        assert!(close(r.y(), 1.0, 1e-12));
        assert!(close(r.theta(), PI / 2.0, 1e-12));
    }

    #[test]
    fn pose_validation() {
        assert!(Pose::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]], [0.0; 3]).is_err());
        assert!(Pose::new([[1.1, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3]).is_err());
        let p = Pose::from_yaw(0.7, [1.0, 2.0, 3.0]);
        assert_eq!(Pose::from_matrix(p.to_matrix()).unwrap(), p);
    }

    #[test]
    fn iou_examples() {
        let a = bx([0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        let b = bx([1.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        assert!(close(iou3d(&a, &a), 1.0, 1e-12));
        assert!(close(iou3d(&a, &b), 4.0 / 12.0, 1e-12));
        let far = bx([10.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        assert_eq!(iou3d(&a, &far), 0.0);
        let above = bx([0.0, 0.0, 5.0, 2.0, 2.0, 2.0, 0.0]);
        assert_eq!(iou3d(&a, &above), 0.0);
    }

    #[test]
    fn iou_rotated_square_in_square() {
        // A unit square rotated 45 degrees inside a 2x2 square: intersection is the
        // full rotated square (area 1), union 4.
        let a = bx([0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0]);
        let b = bx([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, PI / 4.0]);
        assert!(close(iou3d(&a, &b), 0.25, 1e-12));
        // Two squares rotated 45 degrees relative to each other: octagon area.
        let c = bx([0.0, 0.0, 0.0, 2.0, 2.0, 1.0, PI / 4.0]);
        let octagon = 8.0 * (2.0_f64.sqrt() - 1.0);
        assert!(close(iou3d(&a, &c), octagon / (8.0 - octagon), 1e-12));
    }

    #[test]
    fn center_distance_examples() {
        let a = bx([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let b = bx([3.0, 4.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(center_distance(&a, &a), 0.0);
        assert_eq!(center_distance(&a, &b), 5.0);
        let c = bx([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let d = bx([2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(close(center_distance(&c, &d), 3.0_f64.sqrt(), 1e-15));
    }

    #[test]
    fn offset_examples() {
        let b = bx([0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.0]);
        assert_eq!(apply_box_offset(&b, [0.0; 4]), b);
        let spun = apply_box_offset(&bx([0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.3]), [0.0, 0.0, 0.0, 2.0 * PI]);
        assert!(close(spun.theta(), 0.3, 1e-12));
        let o = apply_box_offset(&b, [0.1, -0.2, 0.0, 0.05]);
        assert_eq!(o.center(), [0.1, -0.2, 0.0]);
        assert!(close(o.theta(), 0.05, 1e-15));
        assert_eq!(o.size(), b.size());
    }

    #[test]
    fn containment_is_inclusive() {
        let b = bx([0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        assert!(b.contains([1.0, 1.0, 1.0]));
        assert!(!b.contains([1.0 + 1e-9, 0.0, 0.0]));
    }
}
