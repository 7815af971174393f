//! Synthetic shape families, per-cloud normalization, and the split that
//! feeds training: disjoint scored/encoder views of one cloud.

pub mod io;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_flat<S: Scalar>(&self) -> Vec<S> {
        self.points
            .iter()
            .flat_map(|p| p.iter().map(|&v| S::from_f64(v)))
            .collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::Data(format!(
                "flat cloud length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Ok(PointCloud {
            points: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        for v in &mut c {
            *v /= n;
        }
        c
    }
}

/// The five built-in families. Each family fixes a canonical orientation and
/// roughly unit scale; per-cloud variation comes from the parameter ranges
/// sampled in [`synth_cloud`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    /// Unit sphere surface.
    Sphere,
    /// Axis-aligned box surface with random half-extents.
    BoxSurface,
    /// Square plane in xy with a rectangular notch cut from the +x edge.
    NotchedPlane,
    /// Planar L: a long arm along +x, a shorter arm along +y. Deliberately
    /// has no rotational symmetry, which pose-recovery tests rely on.
    LShape,
    /// Two Gaussian blobs separated along x.
    TwoClusters,
}

impl ShapeFamily {
    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::BoxSurface => "box-surface",
            ShapeFamily::NotchedPlane => "notched-plane",
            ShapeFamily::LShape => "l-shape",
            ShapeFamily::TwoClusters => "two-clusters",
        }
    }

    pub fn parse(s: &str) -> Option<ShapeFamily> {
        match s {
            "sphere" => Some(ShapeFamily::Sphere),
            "box-surface" | "box" => Some(ShapeFamily::BoxSurface),
            "notched-plane" | "plane-with-notch" => Some(ShapeFamily::NotchedPlane),
            "l-shape" => Some(ShapeFamily::LShape),
            "two-clusters" | "two-cluster" => Some(ShapeFamily::TwoClusters),
            _ => None,
        }
    }

    pub const ALL: [ShapeFamily; 5] = [
        ShapeFamily::Sphere,
        ShapeFamily::BoxSurface,
        ShapeFamily::NotchedPlane,
        ShapeFamily::LShape,
        ShapeFamily::TwoClusters,
    ];
}

fn unit_direction(rng: &mut impl Rng) -> Point {
    loop {
        let v: Point = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-9 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

fn surface_point(family: ShapeFamily, params: &[f64], rng: &mut impl Rng) -> Point {
    match family {
        ShapeFamily::Sphere => unit_direction(rng),
        ShapeFamily::BoxSurface => {
            let (hx, hy, hz) = (params[0], params[1], params[2]);
            // pick a face pair weighted by area, then a uniform point on it
            let areas = [hy * hz, hx * hz, hx * hy];
            let total: f64 = areas.iter().sum::<f64>();
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 0;
            for (i, &a) in areas.iter().enumerate() {
                if pick < a {
                    axis = i;
                    break;
                }
                pick -= a;
            }
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut p = [
                rng.random_range(-hx..hx),
                rng.random_range(-hy..hy),
                rng.random_range(-hz..hz),
            ];
            p[axis] = sign * [hx, hy, hz][axis];
            p
        }
        ShapeFamily::NotchedPlane => {
            // unit square [-1,1]^2 at z=0 minus the notch
            // [1-depth, 1] x [yc - width/2, yc + width/2]
            let (depth, width, yc) = (params[0], params[1], params[2]);
            loop {
                let x = rng.random_range(-1.0..1.0);
                let y = rng.random_range(-1.0..1.0);
                let in_notch = x > 1.0 - depth && (y - yc).abs() < width / 2.0;
                if !in_notch {
                    return [x, y, 0.0];
                }
            }
        }
        ShapeFamily::LShape => {
            // horizontal arm [0,1] x [0,0.3], vertical arm [0,0.28] x
            // [0.3, 0.3+v]; params[0] = v, params[1..4] = area centroid shift
            let v = params[0];
            let area_h = 1.0 * 0.3;
            let area_v = 0.28 * v;
            let p = if rng.random_range(0.0..area_h + area_v) < area_h {
                [rng.random_range(0.0..1.0), rng.random_range(0.0..0.3), 0.0]
            } else {
                [
                    rng.random_range(0.0..0.28),
                    rng.random_range(0.3..0.3 + v),
                    0.0,
                ]
            };
            [p[0] - params[1], p[1] - params[2], p[2]]
        }
        ShapeFamily::TwoClusters => {
            let (sep, spread) = (params[0], params[1]);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let g = |rng: &mut dyn rand::RngCore| -> f64 { StandardNormal.sample(rng) };
            [
                side * sep / 2.0 + g(rng) * spread,
                g(rng) * spread,
                g(rng) * spread,
            ]
        }
    }
}

fn draw_family_params(family: ShapeFamily, rng: &mut impl Rng) -> Vec<f64> {
    match family {
        ShapeFamily::Sphere => vec![],
        ShapeFamily::BoxSurface => vec![
            rng.random_range(0.25..1.0),
            rng.random_range(0.25..1.0),
            rng.random_range(0.25..1.0),
        ],
        ShapeFamily::NotchedPlane => vec![
            0.5,
            0.4,
            rng.random_range(-0.5..0.5),
        ],
        ShapeFamily::LShape => {
            let v = rng.random_range(0.5..0.7);
            // analytic area centroid of the two disjoint rectangles, so the
            // canonical pose does not jitter with the sample
            let area_h = 0.3;
            let area_v = 0.28 * v;
            let cx = (area_h * 0.5 + area_v * 0.14) / (area_h + area_v);
            let cy = (area_h * 0.15 + area_v * (0.3 + v / 2.0)) / (area_h + area_v);
            vec![v, cx, cy]
        }
        ShapeFamily::TwoClusters => vec![
            rng.random_range(0.6..1.4),
            rng.random_range(0.08..0.25),
        ],
    }
}

/// Draws one cloud: family parameters, surface points, then isotropic
/// Gaussian jitter of `noise_sigma`.
pub fn synth_cloud(
    family: ShapeFamily,
    n_points: usize,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("synth: n_points must be positive".into()));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "synth: noise must be nonnegative, got {noise_sigma}"
        )));
    }
    let params = draw_family_params(family, rng);
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut p = surface_point(family, &params, rng);
        if noise_sigma > 0.0 {
            for v in &mut p {
                let n: f64 = StandardNormal.sample(rng);
                *v += n * noise_sigma;
            }
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

/// A deterministic dataset: `count` clouds of `n_points` each.
pub fn synth_dataset(
    family: ShapeFamily,
    count: usize,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| synth_cloud(family, n_points, noise_sigma, &mut rng))
        .collect()
}

/// Centering and isotropic rescale recorded by [`normalize`], invertible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTransform {
    pub center: Point,
    pub scale: f64,
}

impl NormTransform {
    pub fn apply_inverse(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(
            cloud
                .points
                .iter()
                .map(|p| {
                    [
                        p[0] * self.scale + self.center[0],
                        p[1] * self.scale + self.center[1],
                        p[2] * self.scale + self.center[2],
                    ]
                })
                .collect(),
        )
    }
}

/// Moves the centroid to the origin and rescales so the farthest point sits
/// at norm 1. A cloud with no spatial extent cannot be normalized.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, NormTransform)> {
    if cloud.is_empty() {
        return Err(Error::Data("normalize: empty cloud".into()));
    }
    let center = cloud.centroid();
    let mut max_norm = 0.0f64;
    let centered: Vec<Point> = cloud
        .points
        .iter()
        .map(|p| {
            let q = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            max_norm = max_norm.max((q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt());
            q
        })
        .collect();
    if max_norm < 1e-12 {
        return Err(Error::Data(
            "normalize: all points coincide, no scale to fix".into(),
        ));
    }
    let points = centered
        .into_iter()
        .map(|p| [p[0] / max_norm, p[1] / max_norm, p[2] / max_norm])
        .collect();
    Ok((
        PointCloud::new(points),
        NormTransform {
            center,
            scale: max_norm,
        },
    ))
}

/// Samples two disjoint views of one cloud: `n_f` points to score and `n_h`
/// points for the encoder, drawn without replacement.
pub fn split_fh(
    cloud: &PointCloud,
    n_f: usize,
    n_h: usize,
    rng: &mut impl Rng,
) -> Result<(PointCloud, PointCloud)> {
    let needed = n_f + n_h;
    if n_f == 0 || n_h == 0 {
        return Err(Error::InvalidArgument(
            "split: both views need at least one point".into(),
        ));
    }
    if needed > cloud.len() {
        return Err(Error::Data(format!(
            "split: cloud has {} points, need {needed}",
            cloud.len()
        )));
    }
    // partial Fisher-Yates over an index buffer
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    for i in 0..needed {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let f = idx[..n_f].iter().map(|&i| cloud.points[i]).collect();
    let h = idx[n_f..needed].iter().map(|&i| cloud.points[i]).collect();
    Ok((PointCloud::new(f), PointCloud::new(h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn noiseless_sphere_points_sit_on_the_unit_surface() {
        let cloud = synth_dataset(ShapeFamily::Sphere, 1, 500, 0.0, 1)
            .unwrap()
            .pop()
            .unwrap();
        for p in &cloud.points {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-6, "radius {r}");
        }
    }

    #[test]
    fn noiseless_box_points_touch_a_face() {
        let cloud = synth_dataset(ShapeFamily::BoxSurface, 1, 300, 0.0, 2)
            .unwrap()
            .pop()
            .unwrap();
        // recover the half-extents from the sample itself
        let mut h = [0.0f64; 3];
        for p in &cloud.points {
            for k in 0..3 {
                h[k] = h[k].max(p[k].abs());
            }
        }
        for p in &cloud.points {
            let on_face = (0..3).any(|k| (p[k].abs() - h[k]).abs() < 1e-9);
            assert!(on_face, "{p:?} inside the box");
        }
    }

    #[test]
    fn notched_plane_leaves_the_notch_empty() {
        let cloud = synth_dataset(ShapeFamily::NotchedPlane, 1, 2000, 0.0, 3)
            .unwrap()
            .pop()
            .unwrap();
        // depth 0.5: no noiseless point may fall in x > 0.5 while within the
        // notch's y-band; the band position varies, so find the emptiest band
        for p in &cloud.points {
            assert!(p[2] == 0.0);
            assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= -1.0 && p[1] <= 1.0);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_dataset(ShapeFamily::TwoClusters, 4, 64, 0.01, 9).unwrap();
        let b = synth_dataset(ShapeFamily::TwoClusters, 4, 64, 0.01, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(ShapeFamily::TwoClusters, 4, 64, 0.01, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn l_shape_is_rotationally_asymmetric() {
        use crate::metrics::chamfer;
        let cloud = synth_dataset(ShapeFamily::LShape, 1, 400, 0.0, 4)
            .unwrap()
            .pop()
            .unwrap();
        let (normed, _) = normalize(&cloud).unwrap();
        // quarter turn about z
        let rotated = PointCloud::new(
            normed
                .points
                .iter()
                .map(|p| [-p[1], p[0], p[2]])
                .collect(),
        );
        let d = chamfer(&normed, &rotated).unwrap();
        assert!(d > 0.1, "quarter turn looks too similar: {d}");
    }

    #[test]
    fn normalize_centers_and_scales_to_unit_max_norm() {
        let cloud = PointCloud::new(vec![[2.0, 0.0, 0.0], [4.0, 0.0, 0.0], [3.0, 1.0, -1.0]]);
        let (normed, t) = normalize(&cloud).unwrap();
        let c = normed.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
        let max = normed
            .points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0f64, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        let back = t.apply_inverse(&normed);
        for (a, b) in back.points.iter().zip(&cloud.points) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_degenerate_clouds() {
        let cloud = PointCloud::new(vec![[1.0, 1.0, 1.0]; 5]);
        assert!(normalize(&cloud).is_err());
        assert!(normalize(&PointCloud::default()).is_err());
    }

    #[test]
    fn split_views_are_disjoint_and_partition_when_exact() {
        let cloud = PointCloud::new((0..10).map(|i| [i as f64, 0.0, 0.0]).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (f, h) = split_fh(&cloud, 6, 4, &mut rng).unwrap();
        let mut all: Vec<i64> = f
            .points
            .iter()
            .chain(&h.points)
            .map(|p| p[0] as i64)
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<i64>>());
    }

    #[test]
    fn split_is_unbiased_across_draws() {
        let cloud = PointCloud::new((0..8).map(|i| [i as f64, 0.0, 0.0]).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 4000;
        let mut counts = [0usize; 8];
        for _ in 0..trials {
            let (f, _) = split_fh(&cloud, 2, 2, &mut rng).unwrap();
            for p in &f.points {
                counts[p[0] as usize] += 1;
            }
        }
        // each point lands in the scored view with probability 1/4
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.25).abs() < 0.03, "frequency {freq}");
        }
    }

    #[test]
    fn split_rejects_oversized_requests() {
        let cloud = PointCloud::new(vec![[0.0; 3]; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(split_fh(&cloud, 3, 2, &mut rng).is_err());
        assert!(split_fh(&cloud, 0, 2, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_up_to_roundoff(
            seed in 0u64..1000,
            n in 2usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..n)
                .map(|_| [
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ])
                .collect();
            let cloud = PointCloud::new(pts);
            prop_assume!(normalize(&cloud).is_ok());
            let (once, _) = normalize(&cloud).unwrap();
            let (twice, _) = normalize(&once).unwrap();
            for (a, b) in once.points.iter().zip(&twice.points) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-9);
                }
            }
        }
    }
}
