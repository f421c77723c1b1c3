//! Per-pixel running-median background model and foreground masks.

use super::AlignError;
use crate::image::GrayImage;

/// Single-channel f32 raster used for every internal alignment image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self { width, height, data: vec![v; width * height] }
    }

    pub fn from_gray(g: &GrayImage) -> Self {
        Self { width: g.width, height: g.height, data: g.data.iter().map(|&v| v as f32).collect() }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 3×3 binary dilation.
    pub fn dilated(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let mut out = Mask::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                if !self.data[y * w + x] {
                    continue;
                }
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        out.data[yy * w + xx] = true;
                    }
                }
            }
        }
        out
    }

    /// Mask as an 8-bit image (0 / 255), smoothed by a 3×3 box filter.
    pub fn soft_image(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut out = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut n = 0u32;
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        n += self.data[yy * w + xx] as u32;
                    }
                }
                out.data[y * w + x] = ((n * 255 + 4) / 9) as u8;
            }
        }
        out
    }
}

fn lower_median(values: &mut [f32]) -> f32 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, f32::total_cmp).1
}

/// Median of each pixel across `frames`, using at most the last `window`.
pub fn estimate_background(frames: &[GrayImage], window: usize) -> Result<GrayImage, AlignError> {
    let first = frames.first().ok_or(AlignError::NotEnoughFrames { have: 0, need: 1 })?;
    if frames.iter().any(|f| (f.width, f.height) != (first.width, first.height)) {
        return Err(AlignError::DimensionMismatch);
    }
    let used = &frames[frames.len().saturating_sub(window.max(1))..];
    let mut buf = vec![0f32; used.len()];
    let mut out = GrayImage::new(first.width, first.height);
    for i in 0..out.data.len() {
        for (b, f) in buf.iter_mut().zip(used) {
            *b = f.data[i] as f32;
        }
        out.data[i] = lower_median(&mut buf) as u8;
    }
    Ok(out)
}

/// `|frame − background| > tau`, followed by `dilations` 3×3 dilation passes.
pub fn foreground_mask(
    frame: &GrayImage,
    background: &GrayImage,
    tau: f32,
    dilations: usize,
) -> Result<Mask, AlignError> {
    if (frame.width, frame.height) != (background.width, background.height) {
        return Err(AlignError::DimensionMismatch);
    }
    let mut m = Mask {
        width: frame.width,
        height: frame.height,
        data: frame
            .data
            .iter()
            .zip(&background.data)
            .map(|(&a, &b)| (a as f32 - b as f32).abs() > tau)
            .collect(),
    };
    for _ in 0..dilations {
        m = m.dilated();
    }
    Ok(m)
}

/// Running median with a per-pixel ring of the last `window` samples.
///
/// Once warmed up, callers push only pixels they consider background so
/// that people standing still are not absorbed.
#[derive(Debug, Clone)]
pub struct RunningMedian {
    width: usize,
    height: usize,
    window: usize,
    min_frames: usize,
    frames_seen: usize,
    ring: Vec<f32>,
    len: Vec<u8>,
    head: Vec<u8>,
    median: Vec<f32>,
}

impl RunningMedian {
    pub fn new(width: usize, height: usize, window: usize, min_frames: usize) -> Self {
        let window = window.clamp(1, 255);
        let n = width * height;
        Self {
            width,
            height,
            window,
            min_frames: min_frames.clamp(1, window),
            frames_seen: 0,
            ring: vec![0.0; n * window],
            len: vec![0; n],
            head: vec![0; n],
            median: vec![0.0; n],
        }
    }

    pub fn is_warm(&self) -> bool {
        self.frames_seen >= self.min_frames
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn background(&self) -> Plane {
        Plane { width: self.width, height: self.height, data: self.median.clone() }
    }

    pub fn background_data(&self) -> &[f32] {
        &self.median
    }

    /// Adds `frame`, skipping pixels where `skip` is set.
    pub fn push(&mut self, frame: &[f32], skip: Option<&Mask>) -> Result<(), AlignError> {
        if frame.len() != self.width * self.height
            || skip.is_some_and(|m| m.data.len() != frame.len())
        {
            return Err(AlignError::DimensionMismatch);
        }
        let w = self.window;
        let mut scratch = vec![0f32; w];
        for (i, &v) in frame.iter().enumerate() {
            if skip.is_some_and(|m| m.data[i]) {
                continue;
            }
            let slot = &mut self.ring[i * w..(i + 1) * w];
            let head = self.head[i] as usize;
            slot[head] = v;
            self.head[i] = ((head + 1) % w) as u8;
            let len = (self.len[i] as usize + 1).min(w);
            self.len[i] = len as u8;
            scratch[..len].copy_from_slice(&slot[..len]);
            self.median[i] = lower_median(&mut scratch[..len]);
        }
        self.frames_seen += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_frames_give_that_frame() {
        let mut f = GrayImage::new(7, 5);
        for (i, p) in f.data.iter_mut().enumerate() {
            *p = (i * 13 % 251) as u8;
        }
        let bg = estimate_background(&vec![f.clone(); 9], 16).unwrap();
        assert_eq!(bg, f);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert!(estimate_background(&[], 16).is_err());
    }

    #[test]
    fn moving_blob_is_removed_from_background() {
        let (w, h) = (40, 20);
        let mut stat = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                stat.set(x, y, (100 + (x * 7 + y * 3) % 40) as u8);
            }
        }
        let frames: Vec<GrayImage> = (0..16)
            .map(|k| {
                let mut f = stat.clone();
                for y in 5..15 {
                    for x in (2 * k)..(2 * k + 6).min(w) {
                        f.set(x, y, 250);
                    }
                }
                f
            })
            .collect();
        let bg = estimate_background(&frames, 16).unwrap();
        for (a, b) in bg.data.iter().zip(&stat.data) {
            assert!((*a as i32 - *b as i32).abs() <= 2);
        }
    }

    #[test]
    fn mask_cases() {
        let bg = GrayImage::filled(12, 12, 100);
        assert_eq!(foreground_mask(&bg, &bg, 12.0, 1).unwrap().count(), 0);

        let mut f = bg.clone();
        for y in 4..7 {
            for x in 3..8 {
                f.set(x, y, 150);
            }
        }
        let m = foreground_mask(&f, &bg, 12.0, 1).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                let expect = (3..=7).contains(&y) && (2..=8).contains(&x);
                assert_eq!(m.get(x, y), expect, "({x},{y})");
            }
        }

        f.set(0, 0, 101);
        let raw = foreground_mask(&f, &bg, 0.0, 0).unwrap();
        for (i, &b) in raw.data.iter().enumerate() {
            assert_eq!(b, f.data[i] != bg.data[i]);
        }
        assert!(foreground_mask(&f, &GrayImage::new(3, 3), 1.0, 0).is_err());
    }

    #[test]
    fn running_median_matches_batch_estimate() {
        let frames: Vec<GrayImage> = (0..20u8)
            .map(|k| GrayImage { width: 3, height: 2, data: (0..6u32).map(|i| ((i * 31 + k as u32 * 17) % 200) as u8).collect() })
            .collect();
        let mut rm = RunningMedian::new(3, 2, 16, 8);
        for f in &frames {
            rm.push(&Plane::from_gray(f).data, None).unwrap();
        }
        assert!(rm.is_warm());
        let batch = estimate_background(&frames, 16).unwrap();
        assert_eq!(rm.background().to_gray(), batch);
    }

    #[test]
    fn skipped_pixels_keep_their_history() {
        let mut rm = RunningMedian::new(2, 1, 4, 1);
        rm.push(&[10.0, 10.0], None).unwrap();
        let mut skip = Mask::empty(2, 1);
        skip.data[1] = true;
        for _ in 0..5 {
            rm.push(&[90.0, 90.0], Some(&skip)).unwrap();
        }
        assert_eq!(rm.background_data(), &[90.0, 10.0]);
    }
}
