//! Training losses with their gradients. Each returns the batch mean and
//! the adjoint of that mean with respect to the predictions.

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use super::tensor::Matrix;
use crate::math::Vec3;

pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub surface: f64,
    pub occupancy: f64,
    pub eikonal: f64,
    pub distance: f64,
    pub normal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { surface: 1.0, occupancy: 1.0, eikonal: 0.1, distance: 1.0, normal: 1.0 }
    }
}

/// Mean of `λ_d |d| + λ_n ||n - n_gt||` over rows; row `r` compares against
/// `n_gt[r / group]`.
pub fn loss_surface(d: &Matrix, n: &Matrix, n_gt: &[Vec3], group: usize, lambda_d: f64, lambda_n: f64) -> (f64, Matrix, Matrix) {
    let rows = d.rows;
    let mut gd = Matrix::zeros(rows, 1);
    let mut gn = Matrix::zeros(rows, 3);
    if rows == 0 {
        return (0.0, gd, gn);
    }
    let scale = 1.0 / rows as f64;
    let mut total = 0.0;
    for r in 0..rows {
        let dv = d.data[r];
        let e = Vec3::new(n.get(r, 0), n.get(r, 1), n.get(r, 2)) - n_gt[r / group];
        let en = e.norm();
        total += lambda_d * dv.abs() + lambda_n * en;
        gd.data[r] = if dv > 0.0 {
            lambda_d * scale
        } else if dv < 0.0 {
            -lambda_d * scale
        } else {
            0.0
        };
        if en > 0.0 {
            for k in 0..3 {
                gn.set(r, k, lambda_n * scale * e[k] / en);
            }
        }
    }
    (total * scale, gd, gn)
}

/// Mean binary cross entropy with predictions clamped to
/// `[1e-7, 1 - 1e-7]`; the clamp passes no gradient.
pub fn loss_occupancy(p: &Matrix, labels: &[bool]) -> (f64, Matrix) {
    let n = p.data.len();
    let mut g = Matrix::zeros(p.rows, p.cols);
    if n == 0 {
        return (0.0, g);
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, (&x, &y)) in p.data.iter().zip(labels).enumerate() {
        let c = x.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let inside = c == x;
        if y {
            total -= c.ln();
            if inside {
                g.data[i] = -scale / c;
            }
        } else {
            total -= (1.0 - c).ln();
            if inside {
                g.data[i] = scale / (1.0 - c);
            }
        }
    }
    (total * scale, g)
}

/// Mean of `(||n|| - 1)^2` over rows.
pub fn loss_eikonal(n: &Matrix) -> (f64, Matrix) {
    let rows = n.rows;
    let mut g = Matrix::zeros(rows, 3);
    if rows == 0 {
        return (0.0, g);
    }
    let scale = 1.0 / rows as f64;
    let mut total = 0.0;
    for r in 0..rows {
        let v = Vec3::new(n.get(r, 0), n.get(r, 1), n.get(r, 2));
        let len = v.norm();
        total += (len - 1.0) * (len - 1.0);
        if len > 0.0 {
            for k in 0..3 {
                g.set(r, k, scale * 2.0 * (len - 1.0) * v[k] / len);
            }
        }
    }
    (total * scale, g)
}

/// `λ_s L_s + λ_o L_o + λ_r L_r`.
pub fn total_loss(l_s: f64, l_o: f64, l_r: f64, w: &LossWeights) -> f64 {
    w.surface * l_s + w.occupancy * l_o + w.eikonal * l_r
}

/// Scales every entry of `m` in place.
pub(crate) fn scaled(mut m: Matrix, s: f64) -> Matrix {
    m.data.iter_mut().for_each(|x| *x *= s);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec())
    }

    #[test]
    fn surface_examples() {
        let n = Matrix::from_vec(1, 3, alloc::vec![0.0, 0.0, 1.0]);
        assert_eq!(loss_surface(&col(&[0.0]), &n, &[Vec3::z()], 1, 1.0, 1.0).0, 0.0);
        let n = Matrix::from_vec(1, 3, alloc::vec![0.1, 0.0, 1.0]);
        assert!((loss_surface(&col(&[0.2]), &n, &[Vec3::z()], 1, 1.0, 1.0).0 - 0.3).abs() < 1e-15);
        let n = Matrix::from_vec(2, 3, alloc::vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!((loss_surface(&col(&[0.3, -0.1]), &n, &[Vec3::z(), Vec3::z()], 1, 1.0, 1.0).0 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn occupancy_examples() {
        assert!((loss_occupancy(&col(&[0.5]), &[true]).0 - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_occupancy(&col(&[0.5]), &[false]).0 - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_occupancy(&col(&[1.0]), &[true]).0 - 1e-7).abs() < 1e-12);
        assert!((loss_occupancy(&col(&[0.9]), &[false]).0 - 2.302_585_092_994_046).abs() < 1e-12);
        assert!(loss_occupancy(&col(&[0.0, 1.0]), &[true, false]).0.is_finite());
    }

    #[test]
    fn eikonal_examples() {
        let m = |v: [f64; 3]| Matrix::from_vec(1, 3, v.to_vec());
        assert_eq!(loss_eikonal(&m([0.0, 1.0, 0.0])).0, 0.0);
        assert_eq!(loss_eikonal(&m([0.0, 0.0, 0.0])).0, 1.0);
        assert_eq!(loss_eikonal(&m([0.0, 0.0, 2.0])).0, 1.0);
    }

    #[test]
    fn total_examples() {
        let w = LossWeights { surface: 1.0, occupancy: 1.0, eikonal: 1.0, ..Default::default() };
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
        assert!((total_loss(0.3, 0.7, 0.1, &w) - 1.1).abs() < 1e-15);
        let w2 = LossWeights { occupancy: 2.0, ..w };
        assert!((total_loss(0.3, 0.7, 0.1, &w2) - total_loss(0.3, 0.7, 0.1, &w) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn losses_non_negative() {
        let p: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        assert!(loss_occupancy(&col(&p), &labels).0 >= 0.0);
    }
}
