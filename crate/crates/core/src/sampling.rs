//! Training points on and around a ground-truth surface, occupancy labels and
//! the sinusoidal distance encoding.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{MeshIndex, TriangleMesh};
use crate::math::{normalize_or_zero, Aabb, Vec3};
use crate::Error;

/// Number of octaves above the base frequency; the code has `2L + 3`
/// components.
pub const DEFAULT_L: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub x: Vec3,
    pub n_gt: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancySample {
    pub x: Vec3,
    pub o_gt: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    pub surface: Vec<SurfaceSample>,
    pub occupancy: Vec<OccupancySample>,
}

/// Area-weighted face choice, uniform barycentric position, interpolated
/// vertex normal.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriangleMesh, count: usize, rng: &mut R) -> Result<Vec<SurfaceSample>, Error> {
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("cannot sample a mesh with zero area".into()));
    }
    let normals = mesh.vertex_normals();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        let face = mesh.faces()[f];
        let [a, b, c] = mesh.triangle(f);
        let x = a * wa + b * wb + c * wc;
        let n = normals[face[0] as usize] * wa + normals[face[1] as usize] * wb + normals[face[2] as usize] * wc;
        let n = normalize_or_zero(&n);
        let n_gt = if n == Vec3::zeros() { mesh.face_normal(f) } else { n };
        out.push(SurfaceSample { x, n_gt });
    }
    Ok(out)
}

/// 1 iff the signed distance is <= 0; the surface itself counts as inside.
pub fn occupancy_gt(index: &MeshIndex, x: &Vec3) -> bool {
    index.signed_distance(x).distance <= 0.0
}

/// `count - count / 16` points perturbed off the surface along the normal
/// by `N(0, sigma^2)`, the rest uniform in `bounds`; labels by
/// [`occupancy_gt`].
pub fn sample_occupancy<R: Rng + ?Sized>(
    index: &MeshIndex,
    count: usize,
    sigma: f64,
    bounds: &Aabb,
    rng: &mut R,
) -> Result<Vec<OccupancySample>, Error> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let e = bounds.extent();
    if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
        return Err(Error::InvalidArgument("degenerate sampling bounds".into()));
    }
    let uniform = count / 16;
    let near = count - uniform;
    let mut out = Vec::with_capacity(count);
    for s in sample_surface(index.mesh(), near, rng)? {
        let t: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let x = s.x + s.n_gt * t;
        out.push(OccupancySample { x, o_gt: occupancy_gt(index, &x) });
    }
    for _ in 0..uniform {
        let u = Vec3::new(rng.random(), rng.random(), rng.random());
        let x = bounds.min + e.component_mul(&u);
        out.push(OccupancySample { x, o_gt: occupancy_gt(index, &x) });
    }
    Ok(out)
}

/// `sin(pi x)`, exact at multiples of 1/2 and exactly odd.
pub fn sin_pi(x: f64) -> f64 {
    let n = (2.0 * x).round();
    let f = x - 0.5 * n;
    let (s, c) = ((core::f64::consts::PI * f).sin(), (core::f64::consts::PI * f).cos());
    match (n as i64).rem_euclid(4) {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    }
}

/// `cos(pi x)`, exact at multiples of 1/2 and exactly even.
pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x.abs() + 0.5)
}

/// `(d, sin(2^0 pi d), cos(2^0 pi d), ..., sin(2^L pi d), cos(2^L pi d))`.
pub fn distance_encode(d: f64, l: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * l + 3);
    out.push(d);
    let mut scale = 1.0;
    for _ in 0..=l {
        out.push(sin_pi(scale * d));
        out.push(cos_pi(scale * d));
        scale *= 2.0;
    }
    out
}

/// Derivative of [`distance_encode`] with respect to `d`.
pub fn distance_encode_derivative(d: f64, l: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * l + 3);
    out.push(1.0);
    let mut scale = 1.0;
    for _ in 0..=l {
        let w = scale * core::f64::consts::PI;
        out.push(w * cos_pi(scale * d));
        out.push(-w * sin_pi(scale * d));
        scale *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::unit_cube;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encode_zero_and_half() {
        assert_eq!(distance_encode(0.0, 5), [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(distance_encode(0.5, 5), [0.5, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let neg = distance_encode(-0.5, 5);
        assert_eq!(neg[1], -1.0);
        assert_eq!(neg[4], -1.0);
    }

    #[test]
    fn trig_helpers_match_libm() {
        for i in -200..200 {
            let x = i as f64 * 0.0137;
            assert!((sin_pi(x) - (core::f64::consts::PI * x).sin()).abs() < 1e-14);
            assert!((cos_pi(x) - (core::f64::consts::PI * x).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn encode_derivative_by_differences() {
        let h = 1e-6;
        for &d in &[-0.31, 0.0, 0.07, 0.5] {
            let a = distance_encode(d + h, 5);
            let b = distance_encode(d - h, 5);
            for (k, g) in distance_encode_derivative(d, 5).iter().enumerate() {
                let fd = (a[k] - b[k]) / (2.0 * h);
                assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "component {k}");
            }
        }
    }

    #[test]
    fn occupancy_split_and_labels() {
        let idx = MeshIndex::new(unit_cube()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = Aabb { min: Vec3::repeat(-2.0), max: Vec3::repeat(2.0) };
        let s = sample_occupancy(&idx, 16, 0.05, &b, &mut rng).unwrap();
        assert_eq!(s.len(), 16);
        for p in &s[..15] {
            assert!(p.x.abs().max() > 0.7);
        }
        assert!(occupancy_gt(&idx, &Vec3::zeros()));
        assert!(!occupancy_gt(&idx, &Vec3::new(2.0, 0.0, 0.0)));
        assert!(occupancy_gt(&idx, &Vec3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn single_triangle_samples_stay_inside() {
        let m = TriangleMesh::new(alloc::vec![Vec3::zeros(), Vec3::x(), Vec3::y()], alloc::vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in sample_surface(&m, 500, &mut rng).unwrap() {
            assert!(s.x.x >= 0.0 && s.x.y >= 0.0 && s.x.x + s.x.y <= 1.0 + 1e-15 && s.x.z == 0.0);
            assert_eq!(s.n_gt, Vec3::z());
        }
    }
}
