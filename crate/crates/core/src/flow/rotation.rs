//! Rigid rotation of 3-D point batches, axis-angle parameterized. Rotations
//! are volume-preserving, so as a flow layer the log-determinant is zero.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorId};

/// Rodrigues formula. The direction of `axis_angle` is the rotation axis and
/// its norm the angle in radians; near-zero angles return the identity.
pub fn rotation_matrix(axis_angle: [f64; 3]) -> [[f64; 3]; 3] {
    let [x, y, z] = axis_angle;
    let theta = (x * x + y * y + z * z).sqrt();
    if theta < 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let (ux, uy, uz) = (x / theta, y / theta, z / theta);
    let (c, s) = (theta.cos(), theta.sin());
    let t = 1.0 - c;
    [
        [c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s],
        [uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s],
        [uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t],
    ]
}

/// Rotates row-major xyz triples: out_i = R * p_i.
pub fn rotate_points<S: Scalar>(points: &[S], axis_angle: [f64; 3]) -> Result<Vec<S>> {
    if points.len() % 3 != 0 {
        return Err(Error::InvalidArgument(format!(
            "rotate_points: length {} is not a multiple of 3",
            points.len()
        )));
    }
    let r = rotation_matrix(axis_angle);
    let mut out = Vec::with_capacity(points.len());
    for p in points.chunks_exact(3) {
        let (px, py, pz) = (p[0].to_f64(), p[1].to_f64(), p[2].to_f64());
        for row in &r {
            out.push(S::from_f64(row[0] * px + row[1] * py + row[2] * pz));
        }
    }
    Ok(out)
}

/// Geodesic distance on the rotation group between two axis-angle poses,
/// in radians.
pub fn rotation_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let ra = rotation_matrix(a);
    let rb = rotation_matrix(b);
    // trace of ra^T * rb
    let mut tr = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            tr += ra[k][i] * rb[k][i];
        }
    }
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone)]
pub struct RotationLayer {
    pub axis_angle: [f64; 3],
}

impl RotationLayer {
    pub fn new(axis_angle: [f64; 3]) -> Self {
        RotationLayer { axis_angle }
    }

    /// Applied on the tape as multiplication by a constant matrix, so point
    /// gradients still flow through.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: TensorId) -> Result<TensorId> {
        self.apply(tape, x, self.axis_angle)
    }

    pub fn inverse<S: Scalar>(&self, tape: &mut Tape<S>, z: TensorId) -> Result<TensorId> {
        let [x, y, zz] = self.axis_angle;
        self.apply(tape, z, [-x, -y, -zz])
    }

    fn apply<S: Scalar>(&self, tape: &mut Tape<S>, x: TensorId, aa: [f64; 3]) -> Result<TensorId> {
        let s = tape.shape(x);
        if s.len() != 2 || s[1] != 3 {
            return Err(Error::ShapeMismatch {
                op: "rotation",
                lhs: s.to_vec(),
                rhs: vec![s.first().copied().unwrap_or(0), 3],
            });
        }
        let r = rotation_matrix(aa);
        // row-vector convention: out = x * R^T
        let mut rt = Vec::with_capacity(9);
        for j in 0..3 {
            for row in &r {
                rt.push(S::from_f64(row[j]));
            }
        }
        let m = tape.constant(rt, vec![3, 3])?;
        tape.matmul(x, m)
    }
}
