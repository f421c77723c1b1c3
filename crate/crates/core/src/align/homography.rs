//! Normalized DLT and RANSAC homography estimation.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::domain::Point2;

/// Projective map with `h[2][2] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
    pub inlier_count: usize,
    pub mean_residual: f64,
}

impl Homography {
    pub fn identity() -> Self {
        Self { h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], inlier_count: 0, mean_residual: 0.0 }
    }

    /// Wraps a matrix, rescaling so the bottom-right entry is one.
    pub fn from_matrix(m: &Matrix3<f64>) -> Option<Self> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-15 {
            return None;
        }
        let n = m / s;
        if !(n.determinant().abs() > 1e-12) || n.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut h = [[0.0; 3]; 3];
        for (r, row) in h.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = n[(r, c)];
            }
        }
        h[2][2] = 1.0;
        Some(Self { h, inlier_count: 0, mean_residual: 0.0 })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let h = &self.h;
        Matrix3::new(h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1], h[2][2])
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let h = &self.h;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        Point2::new(
            (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
            (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
        )
    }

    /// `diag(a) · H · diag(b)⁻¹` style change of coordinates:
    /// returns the map `p ↦ post(H(pre(p)))` for axis scalings `pre`, `post`.
    pub fn rescaled(&self, pre: (f64, f64), post: (f64, f64)) -> Option<Homography> {
        let a = Matrix3::new(pre.0, 0.0, 0.0, 0.0, pre.1, 0.0, 0.0, 0.0, 1.0);
        let b = Matrix3::new(post.0, 0.0, 0.0, 0.0, post.1, 0.0, 0.0, 0.0, 1.0);
        let mut out = Homography::from_matrix(&(b * self.matrix() * a))?;
        out.inlier_count = self.inlier_count;
        out.mean_residual = self.mean_residual;
        Some(out)
    }

    pub fn residual(&self, src: Point2, dst: Point2) -> f64 {
        self.apply(src).distance(&dst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Inlier threshold on forward reprojection error, pixels.
    pub threshold: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { max_iterations: 1000, threshold: 3.0, confidence: 0.99, seed: 0 }
    }
}

/// Similarity transform moving the centroid to the origin with mean
/// distance √2.
fn normalizer(pts: &[Point2]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform(m: &Matrix3<f64>, p: Point2) -> (f64, f64) {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    (v.x / v.z, v.y / v.z)
}

/// Direct linear transform with Hartley normalization; needs ≥ 4 pairs.
pub fn dlt(src: &[Point2], dst: &[Point2]) -> Option<Homography> {
    if src.len() != dst.len() || src.len() < 4 {
        return None;
    }
    let ts = normalizer(src);
    let td = normalizer(dst);
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y) = transform(&ts, *s);
        let (u, v) = transform(&td, *d);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let hv = vt.row(k);
    let hn = Matrix3::new(hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8]);
    let h = td.try_inverse()? * hn * ts;
    Homography::from_matrix(&h)
}

fn collinear(a: Point2, b: Point2, c: Point2) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = a.distance(&b).max(a.distance(&c)).max(b.distance(&c)).max(1e-12);
    cross.abs() <= 1e-6 * scale * scale
}

fn degenerate(pts: &[Point2; 4]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<Point2> = (0..4).filter(|&k| k != skip).map(|k| pts[k]).collect();
        collinear(t[0], t[1], t[2])
    })
}

/// Least-squares fit of `p ↦ a·p + t` (uniform scale plus translation),
/// returned as a homography with no shear or perspective. A `fixed_scale`
/// pins `a` and fits only the translation.
pub fn fit_scale_translation(src: &[Point2], dst: &[Point2], fixed_scale: Option<f64>) -> Option<Homography> {
    let n = src.len();
    if n == 0 || n != dst.len() || (n < 2 && fixed_scale.is_none()) {
        return None;
    }
    let nf = n as f64;
    let (msx, msy) = src.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x / nf, y + p.y / nf));
    let (mdx, mdy) = dst.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x / nf, y + p.y / nf));
    let (mut num, mut den) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - msx, s.y - msy);
        num += sx * (d.x - mdx) + sy * (d.y - mdy);
        den += sx * sx + sy * sy;
    }
    let a = match fixed_scale {
        Some(a) => a,
        None if den > 1e-12 => num / den,
        None => return None,
    };
    let m = Matrix3::new(a, 0.0, mdx - a * msx, 0.0, a, mdy - a * msy, 0.0, 0.0, 1.0);
    Homography::from_matrix(&m)
}

/// Indices with residual ≤ `thr` under `h`, and their mean residual.
pub fn consensus(h: &Homography, src: &[Point2], dst: &[Point2], thr: f64) -> (Vec<usize>, f64) {
    let (idx, sum) = inliers_of(h, src, dst, thr);
    let mean = if idx.is_empty() { 0.0 } else { sum / idx.len() as f64 };
    (idx, mean)
}

fn inliers_of(h: &Homography, src: &[Point2], dst: &[Point2], thr: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut sum = 0.0;
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let r = h.residual(*s, *d);
        if r.is_finite() && r <= thr {
            idx.push(i);
            sum += r;
        }
    }
    (idx, sum)
}

/// RANSAC over 4-point DLT hypotheses, then least-squares refits on the
/// consensus set. Every returned inlier has residual ≤ `threshold`.
pub fn estimate_homography(
    src: &[Point2],
    dst: &[Point2],
    params: &RansacParams,
) -> Result<(Homography, Vec<usize>), AlignError> {
    let n = src.len();
    if n != dst.len() {
        return Err(AlignError::DimensionMismatch);
    }
    if n < 4 {
        return Err(AlignError::InsufficientCorrespondences(n));
    }
    let thr = params.threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut needed = params.max_iterations;
    let mut iter = 0;
    let mut attempts = 0;
    while iter < needed.min(params.max_iterations) && attempts < 10 * params.max_iterations.max(1) {
        attempts += 1;
        let mut pick = [0usize; 4];
        for k in 0..4 {
            loop {
                let c = rng.random_range(0..n);
                if !pick[..k].contains(&c) {
                    pick[k] = c;
                    break;
                }
            }
        }
        let s4 = pick.map(|i| src[i]);
        let d4 = pick.map(|i| dst[i]);
        if degenerate(&s4) || degenerate(&d4) {
            continue;
        }
        iter += 1;
        let Some(h) = dlt(&s4, &d4) else { continue };
        let (idx, sum) = inliers_of(&h, src, dst, thr);
        let better = match &best {
            None => true,
            Some((bi, bs)) => idx.len() > bi.len() || (idx.len() == bi.len() && sum < *bs),
        };
        if better {
            let w = idx.len() as f64 / n as f64;
            best = Some((idx, sum));
            let p_fail = 1.0 - w.powi(4);
            needed = if p_fail <= 1e-12 {
                0
            } else {
                let k = (1.0 - params.confidence).ln() / p_fail.ln();
                if k.is_finite() { k.ceil().max(1.0) as usize } else { params.max_iterations }
            };
        }
    }
    let (mut inliers, _) = best.ok_or(AlignError::DegenerateSample)?;
    if inliers.len() < 4 {
        return Err(AlignError::InsufficientInliers(inliers.len()));
    }

    let mut h = None;
    for _ in 0..5 {
        let s: Vec<Point2> = inliers.iter().map(|&i| src[i]).collect();
        let d: Vec<Point2> = inliers.iter().map(|&i| dst[i]).collect();
        let Some(fit) = dlt(&s, &d) else { break };
        let (next, _) = inliers_of(&fit, src, dst, thr);
        let stable = next == inliers;
        if next.len() < 4 {
            break;
        }
        h = Some(fit);
        inliers = next;
        if stable {
            break;
        }
    }
    let mut h = h.ok_or(AlignError::DegenerateSample)?;
    // The loop may stop before the set is a fixed point; keep only members
    // that satisfy the final model.
    let (final_idx, sum) = inliers_of(&h, src, dst, thr);
    if final_idx.len() < 4 {
        return Err(AlignError::InsufficientInliers(final_idx.len()));
    }
    h.inlier_count = final_idx.len();
    h.mean_residual = sum / final_idx.len() as f64;
    Ok((h, final_idx))
}
