use serde::{Deserialize, Serialize};

use crate::cloud_io::ColourRgb;

/// HSV with every component scaled to `[0, 1]` (hue is degrees / 360).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ColourHsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone RGB to HSV. Greys (including black) get `h = 0, s = 0`.
pub fn rgb_to_hsv(colour: ColourRgb) -> ColourHsv {
    let r = f64::from(colour.r) / 255.0;
    let g = f64::from(colour.g) / 255.0;
    let b = f64::from(colour.b) / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return ColourHsv { h: 0.0, s: 0.0, v: max };
    }
    let sector = if max == r {
        let x = (g - b) / delta;
        if x < 0.0 {
            x + 6.0
        } else {
            x
        }
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ColourHsv {
        h: sector / 6.0,
        s: delta / max,
        v: max,
    }
}

/// Inverse of [`rgb_to_hsv`] with channels rounded to the nearest integer.
/// Hue wraps, saturation and value are clamped to `[0, 1]`.
pub fn hsv_to_rgb(hsv: ColourHsv) -> ColourRgb {
    let h = hsv.h.rem_euclid(1.0) * 6.0;
    let s = hsv.s.clamp(0.0, 1.0);
    let v = hsv.v.clamp(0.0, 1.0);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_u8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    ColourRgb::new(to_u8(r), to_u8(g), to_u8(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference built from the chroma/offset formulation rather than the
    /// sector test used above.
    fn reference(c: ColourRgb) -> (f64, f64, f64) {
        let (r, g, b) = (c.r as f64 / 255.0, c.g as f64 / 255.0, c.b as f64 / 255.0);
        let maxc = r.max(g).max(b);
        let minc = r.min(g).min(b);
        let v = maxc;
        if minc == maxc {
            return (0.0, 0.0, v);
        }
        let s = (maxc - minc) / maxc;
        let rc = (maxc - r) / (maxc - minc);
        let gc = (maxc - g) / (maxc - minc);
        let bc = (maxc - b) / (maxc - minc);
        let h = if r == maxc {
            bc - gc
        } else if g == maxc {
            2.0 + rc - bc
        } else {
            4.0 + gc - rc
        };
        ((h / 6.0).rem_euclid(1.0), s, v)
    }

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv(ColourRgb::new(255, 0, 0)), ColourHsv { h: 0.0, s: 1.0, v: 1.0 });
        assert_eq!(rgb_to_hsv(ColourRgb::new(0, 0, 0)), ColourHsv { h: 0.0, s: 0.0, v: 0.0 });
        let g = rgb_to_hsv(ColourRgb::new(0, 128, 0));
        assert!((g.h - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.s, 1.0);
        assert!((g.v - 128.0 / 255.0).abs() < 1e-15);
        let grey = rgb_to_hsv(ColourRgb::new(90, 90, 90));
        assert_eq!((grey.h, grey.s), (0.0, 0.0));
    }

    #[test]
    fn sweep_matches_reference() {
        let mut worst: f64 = 0.0;
        for r in (0..=255u8).step_by(17) {
            for g in (0..=255u8).step_by(17) {
                for b in (0..=255u8).step_by(17) {
                    let c = ColourRgb::new(r, g, b);
                    let got = rgb_to_hsv(c);
                    let (h, s, v) = reference(c);
                    for x in [got.h, got.s, got.v] {
                        assert!((0.0..=1.0).contains(&x), "{c:?} -> {got:?}");
                    }
                    let dh = (got.h - h).abs();
                    let dh = dh.min(1.0 - dh);
                    worst = worst.max(dh).max((got.s - s).abs()).max((got.v - v).abs());
                }
            }
        }
        assert!(worst < 1e-9, "max abs error {worst}");
    }

    #[test]
    fn hsv_round_trip_on_saturated_hues() {
        for c in [
            ColourRgb::new(255, 0, 0),
            ColourRgb::new(0, 255, 0),
            ColourRgb::new(20, 40, 200),
            ColourRgb::new(200, 180, 10),
        ] {
            assert_eq!(hsv_to_rgb(rgb_to_hsv(c)), c);
        }
    }
}
