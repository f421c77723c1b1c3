//! Operator overlay: person boxes and temperature labels drawn onto the
//! visual frame.

use super::Annotation;
use crate::domain::BBox;
use crate::image::{GrayImage, RgbImage};

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

const NORMAL: [u8; 3] = [0, 220, 0];
const OUT_OF_ZONE: [u8; 3] = [160, 160, 160];
const FEVER: [u8; 3] = [255, 0, 0];

/// Rows of a 5×7 glyph, most significant of the low five bits leftmost.
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '#' => [0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A],
        _ => [0; GLYPH_H],
    }
}

/// Pixel width of `text` with one column of spacing between glyphs.
pub fn text_width(text: &str) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        n * (GLYPH_W + 1) - 1
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    for (k, c) in text.chars().enumerate() {
        let gx = x + (k * (GLYPH_W + 1)) as i64;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                    img.put(gx + col as i64, y + row as i64, color);
                }
            }
        }
    }
}

fn draw_rect(img: &mut RgbImage, b: &BBox, thickness: i64, color: [u8; 3]) {
    let x0 = b.x().round() as i64;
    let y0 = b.y().round() as i64;
    let x1 = b.right().round() as i64 - 1;
    let y1 = b.bottom().round() as i64 - 1;
    for t in 0..thickness {
        for x in x0..=x1 {
            img.put(x, y0 + t, color);
            img.put(x, y1 - t, color);
        }
        for y in y0..=y1 {
            img.put(x0 + t, y, color);
            img.put(x1 - t, y, color);
        }
    }
}

/// Draws each annotation: a 1 px box (grey outside the capture zone), or a
/// 2 px red box when the reported temperature is at or above threshold.
/// The label sits above the box, or inside it when there is no room.
pub fn render_annotations(visual: &GrayImage, annotations: &[Annotation]) -> RgbImage {
    let mut img = RgbImage::from_gray(visual);
    for a in annotations {
        let (color, thickness) = match (a.fever, a.in_zone) {
            (true, _) => (FEVER, 2),
            (false, true) => (NORMAL, 1),
            (false, false) => (OUT_OF_ZONE, 1),
        };
        draw_rect(&mut img, &a.bbox, thickness, color);
        let label = match a.temp {
            Some(t) => format!("#{} {:.1}C", a.person_id, t),
            None => format!("#{}", a.person_id),
        };
        let x = a.bbox.x().round() as i64;
        let above = a.bbox.y().round() as i64 - GLYPH_H as i64 - 2;
        let y = if above >= 0 { above } else { a.bbox.y().round() as i64 + thickness + 1 };
        draw_text(&mut img, x, y, &label, color);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(fever: bool) -> Annotation {
        Annotation {
            person_id: 3,
            bbox: BBox::new(20.0, 30.0, 40.0, 50.0).unwrap(),
            temp: Some(38.4),
            fever,
            in_zone: true,
        }
    }

    #[test]
    fn no_annotations_is_plain_gray() {
        let g = GrayImage::filled(64, 48, 77);
        assert_eq!(render_annotations(&g, &[]), RgbImage::from_gray(&g));
    }

    #[test]
    fn fever_box_is_red_and_thick() {
        let g = GrayImage::filled(100, 100, 0);
        let img = render_annotations(&g, &[ann(true)]);
        assert_eq!(img.get(20, 50), FEVER);
        assert_eq!(img.get(21, 50), FEVER);
        assert_eq!(img.get(22, 50), [0, 0, 0]);
        assert_eq!(img.get(59, 79), FEVER);
        let thin = render_annotations(&g, &[ann(false)]);
        assert_eq!(thin.get(20, 50), NORMAL);
        assert_eq!(thin.get(21, 50), [0, 0, 0]);
    }

    #[test]
    fn label_is_drawn_above_box() {
        let g = GrayImage::filled(100, 100, 0);
        let img = render_annotations(&g, &[ann(false)]);
        let lit = (21..30).flat_map(|y| (20..20 + text_width("#3 38.4C")).map(move |x| (x, y))).filter(|&(x, y)| img.get(x, y) == NORMAL).count();
        assert!(lit > 20, "{lit}");
    }

    #[test]
    fn boxes_off_the_edge_are_clipped() {
        let g = GrayImage::filled(10, 10, 0);
        let a = Annotation { bbox: BBox::new(-5.0, -5.0, 30.0, 30.0).unwrap(), ..ann(true) };
        let img = render_annotations(&g, &[a]);
        assert_eq!((img.width, img.height), (10, 10));
    }

    #[test]
    fn glyph_widths() {
        assert_eq!(text_width(""), 0);
        assert_eq!(text_width("36.9C"), 29);
    }
}
