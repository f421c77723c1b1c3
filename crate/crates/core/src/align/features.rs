//! FAST-9 corners with intensity-centroid orientation and rotated 256-bit
//! BRIEF descriptors.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::background::Mask;
use super::AlignError;
use crate::domain::Point2;
use crate::image::GrayImage;

const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];
const ARC: usize = 9;
const PATCH_HALF: i32 = 13;
const PATTERN_SEED: u64 = 0x0b71_ef5e_ed00_0256;

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub const BITS: u32 = 256;

    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn complement(&self) -> Descriptor {
        Descriptor(self.0.map(|w| !w))
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub location: Point2,
    /// Radians, from the intensity centroid.
    pub orientation: f64,
    pub descriptor: Descriptor,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub fast_threshold: u8,
    pub max_features: usize,
    pub orientation_radius: i32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { fast_threshold: 20, max_features: 500, orientation_radius: 15 }
    }
}

fn pattern() -> &'static [((i32, i32), (i32, i32)); 256] {
    static P: OnceLock<[((i32, i32), (i32, i32)); 256]> = OnceLock::new();
    P.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let g = Normal::new(0.0, (2 * PATCH_HALF + 5) as f64 / 5.0).expect("positive sd");
        let mut draw = || (g.sample(&mut rng) as f64).round().clamp(-PATCH_HALF as f64, PATCH_HALF as f64) as i32;
        let mut out = [((0, 0), (0, 0)); 256];
        for pair in out.iter_mut() {
            loop {
                let a = (draw(), draw());
                let b = (draw(), draw());
                if a != b {
                    *pair = (a, b);
                    break;
                }
            }
        }
        out
    })
}

/// FAST-9 score at (x, y), or `None` when the pixel is not a corner.
fn fast_score(img: &GrayImage, x: usize, y: usize, t: i32) -> Option<f32> {
    let w = img.width as isize;
    let base = (y * img.width + x) as isize;
    let p = img.data[base as usize] as i32;
    let mut state = [0i8; 16];
    let mut vals = [0i32; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.data[(base + dy as isize * w + dx as isize) as usize] as i32;
        vals[k] = v;
        state[k] = if v > p + t {
            1
        } else if v < p - t {
            -1
        } else {
            0
        };
    }
    // Quick reject: at least two of the four compass points must agree.
    let compass = [state[0], state[4], state[8], state[12]];
    let bright = compass.iter().filter(|&&s| s == 1).count();
    let dark = compass.iter().filter(|&&s| s == -1).count();
    if bright < 2 && dark < 2 {
        return None;
    }
    let has_run = |want: i8| {
        let mut run = 0;
        for k in 0..32 {
            if state[k % 16] == want {
                run += 1;
                if run >= ARC {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    };
    if !has_run(1) && !has_run(-1) {
        return None;
    }
    let mut sb = 0;
    let mut sd = 0;
    for k in 0..16 {
        match state[k] {
            1 => sb += vals[k] - p - t,
            -1 => sd += p - vals[k] - t,
            _ => {}
        }
    }
    Some(sb.max(sd) as f32)
}

/// Sum over a 5×5 window; pixels outside the image count as zero.
fn box5(img: &GrayImage) -> Vec<u16> {
    let (w, h) = (img.width, img.height);
    let mut rows = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0u16;
            for xx in x.saturating_sub(2)..(x + 3).min(w) {
                s += img.data[y * w + xx] as u16;
            }
            rows[y * w + x] = s;
        }
    }
    let mut out = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0u16;
            for yy in y.saturating_sub(2)..(y + 3).min(h) {
                s += rows[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

fn orientation(img: &GrayImage, x: i64, y: i64, r: i32) -> f64 {
    let (mut m10, mut m01) = (0f64, 0f64);
    let r2 = r * r;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let v = img.get_or_zero(x + dx as i64, y + dy as i64) as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

fn describe(smooth: &[u16], w: usize, h: usize, x: i64, y: i64, angle: f64) -> Descriptor {
    let (s, c) = angle.sin_cos();
    let sample = |(px, py): (i32, i32)| -> u16 {
        let rx = (c * px as f64 - s * py as f64).round() as i64 + x;
        let ry = (s * px as f64 + c * py as f64).round() as i64 + y;
        if rx < 0 || ry < 0 || rx >= w as i64 || ry >= h as i64 {
            0
        } else {
            smooth[ry as usize * w + rx as usize]
        }
    };
    let mut bits = [0u64; 4];
    for (i, &(a, b)) in pattern().iter().enumerate() {
        if sample(a) < sample(b) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Descriptor(bits)
}

/// Detects up to `max_features` corners inside `mask`, strongest first
/// (ties in raster order).
pub fn detect_features(
    image: &GrayImage,
    mask: Option<&Mask>,
    cfg: &FeatureConfig,
) -> Result<Vec<Feature>, AlignError> {
    let (w, h) = (image.width, image.height);
    if mask.is_some_and(|m| (m.width, m.height) != (w, h)) {
        return Err(AlignError::DimensionMismatch);
    }
    if w < 7 || h < 7 {
        return Ok(Vec::new());
    }
    let t = cfg.fast_threshold as i32;
    let mut scores = vec![0f32; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if mask.is_some_and(|m| !m.get(x, y)) {
                continue;
            }
            if let Some(s) = fast_score(image, x, y, t) {
                scores[y * w + x] = s.max(f32::MIN_POSITIVE);
            }
        }
    }

    let mut corners: Vec<(f32, usize)> = Vec::new();
    for y in 3..h - 3 {
        'px: for x in 3..w - 3 {
            let i = y * w + x;
            let s = scores[i];
            if s <= 0.0 {
                continue;
            }
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    let j = yy * w + xx;
                    if j == i {
                        continue;
                    }
                    // Equal neighbours: the earliest in raster order survives.
                    if scores[j] > s || (scores[j] == s && j < i) {
                        continue 'px;
                    }
                }
            }
            corners.push((s, i));
        }
    }
    corners.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    corners.truncate(cfg.max_features);

    let smooth = box5(image);
    Ok(corners
        .into_iter()
        .map(|(score, i)| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let angle = orientation(image, x, y, cfg.orientation_radius);
            Feature {
                location: Point2::new(x as f64 + 0.5, y as f64 + 0.5),
                orientation: angle,
                descriptor: describe(&smooth, w, h, x, y, angle),
                score,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_has_no_features() {
        let img = GrayImage::filled(40, 40, 128);
        assert!(detect_features(&img, None, &FeatureConfig::default()).unwrap().is_empty());
    }

    /// Brute-force FAST-9 definition, independent of the optimized path.
    fn is_fast_corner(img: &GrayImage, x: usize, y: usize, t: i32) -> bool {
        let p = img.get(x, y) as i32;
        let ring: Vec<i32> = CIRCLE
            .iter()
            .map(|&(dx, dy)| img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i32)
            .collect();
        (0..16).any(|start| {
            (0..9).all(|k| ring[(start + k) % 16] > p + t) || (0..9).all(|k| ring[(start + k) % 16] < p - t)
        })
    }

    #[test]
    fn square_corner_is_found() {
        let mut img = GrayImage::filled(60, 60, 30);
        for y in 20..60 {
            for x in 25..60 {
                img.set(x, y, 220);
            }
        }
        let feats = detect_features(&img, None, &FeatureConfig::default()).unwrap();
        assert!(!feats.is_empty());
        assert!(feats
            .iter()
            .any(|f| (f.location.x - 0.5 - 25.0).abs() <= 2.0 && (f.location.y - 0.5 - 20.0).abs() <= 2.0));
        for f in &feats {
            let (x, y) = (f.location.x as usize, f.location.y as usize);
            assert!(is_fast_corner(&img, x, y, 20));
        }
    }

    #[test]
    fn mask_restricts_features() {
        let mut img = GrayImage::filled(60, 60, 30);
        for y in 20..40 {
            for x in 20..40 {
                img.set(x, y, 220);
            }
        }
        let mut mask = Mask::empty(60, 60);
        for y in 15..30 {
            for x in 15..30 {
                mask.data[y * 60 + x] = true;
            }
        }
        let feats = detect_features(&img, Some(&mask), &FeatureConfig::default()).unwrap();
        assert!(!feats.is_empty());
        assert!(feats.iter().all(|f| f.location.x < 30.0 && f.location.y < 30.0));
    }

    #[test]
    fn deterministic_descriptors_and_cap() {
        let mut img = GrayImage::new(80, 80);
        for y in 0..80 {
            for x in 0..80 {
                img.set(x, y, if (x / 7 + y / 5) % 2 == 0 { 40 } else { 210 });
            }
        }
        let cfg = FeatureConfig { max_features: 10, ..Default::default() };
        let a = detect_features(&img, None, &cfg).unwrap();
        let b = detect_features(&img, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|p| p[0].score >= p[1].score));
    }

    #[test]
    fn descriptor_bits_and_complement() {
        let d = Descriptor([0xFFFF_0000_FFFF_0000, 0, u64::MAX, 1]);
        assert_eq!(d.hamming(&d), 0);
        assert_eq!(d.hamming(&d.complement()), 256);
        assert!(d.bit(16) && !d.bit(0) && d.bit(192) && !d.bit(64));
    }

    #[test]
    fn rotated_patch_keeps_descriptor_close() {
        // An L-shaped blob and its 90° rotation about the corner.
        let mut a = GrayImage::filled(64, 64, 0);
        for y in 32..50 {
            for x in 32..50 {
                if x < 38 || y < 38 {
                    a.set(x, y, 255);
                }
            }
        }
        let mut b = GrayImage::filled(64, 64, 0);
        for y in 0..64 {
            for x in 0..64 {
                // (x, y) -> (64 - 1 - y, x)
                b.set(63 - y, x, a.get(x, y));
            }
        }
        let cfg = FeatureConfig::default();
        let fa = detect_features(&a, None, &cfg).unwrap();
        let fb = detect_features(&b, None, &cfg).unwrap();
        let best = fa
            .iter()
            .flat_map(|x| fb.iter().map(move |y| x.descriptor.hamming(&y.descriptor)))
            .min()
            .unwrap();
        assert!(best <= 64, "closest pair {best}");
    }
}
