//! Small software rasterizer for the top-view image.

use nalgebra::Vector2;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];
pub const LIGHT_GRAY: Rgb = [215, 215, 215];
pub const BOX_BLUE: Rgb = [30, 70, 200];

/// 5x7 glyphs, one row per byte, high bit on the left.
fn glyph(c: char) -> Option<[u8; 7]> {
    let rows: [&str; 7] = match c.to_ascii_uppercase() {
        'A' => ["01110", "10001", "10001", "11111", "10001", "10001", "10001"],
        'B' => ["11110", "10001", "10001", "11110", "10001", "10001", "11110"],
        'C' => ["01110", "10001", "10000", "10000", "10000", "10001", "01110"],
        'D' => ["11110", "10001", "10001", "10001", "10001", "10001", "11110"],
        'E' => ["11111", "10000", "10000", "11110", "10000", "10000", "11111"],
        'F' => ["11111", "10000", "10000", "11110", "10000", "10000", "10000"],
        'G' => ["01110", "10001", "10000", "10111", "10001", "10001", "01111"],
        'H' => ["10001", "10001", "10001", "11111", "10001", "10001", "10001"],
        'I' => ["01110", "00100", "00100", "00100", "00100", "00100", "01110"],
        'J' => ["00111", "00010", "00010", "00010", "00010", "10010", "01100"],
        'K' => ["10001", "10010", "10100", "11000", "10100", "10010", "10001"],
        'L' => ["10000", "10000", "10000", "10000", "10000", "10000", "11111"],
        'M' => ["10001", "11011", "10101", "10101", "10001", "10001", "10001"],
        'N' => ["10001", "10001", "11001", "10101", "10011", "10001", "10001"],
        'O' => ["01110", "10001", "10001", "10001", "10001", "10001", "01110"],
        'P' => ["11110", "10001", "10001", "11110", "10000", "10000", "10000"],
        'Q' => ["01110", "10001", "10001", "10001", "10101", "10010", "01101"],
        'R' => ["11110", "10001", "10001", "11110", "10100", "10010", "10001"],
        'S' => ["01111", "10000", "10000", "01110", "00001", "00001", "11110"],
        'T' => ["11111", "00100", "00100", "00100", "00100", "00100", "00100"],
        'U' => ["10001", "10001", "10001", "10001", "10001", "10001", "01110"],
        'V' => ["10001", "10001", "10001", "10001", "10001", "01010", "00100"],
        'W' => ["10001", "10001", "10001", "10101", "10101", "10101", "01010"],
        'X' => ["10001", "10001", "01010", "00100", "01010", "10001", "10001"],
        'Y' => ["10001", "10001", "10001", "01010", "00100", "00100", "00100"],
        'Z' => ["11111", "00001", "00010", "00100", "01000", "10000", "11111"],
        '0' => ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
        '1' => ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
        '2' => ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
        '3' => ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
        '4' => ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
        '5' => ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
        '6' => ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
        '7' => ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
        '8' => ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
        '9' => ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
        '#' => ["01010", "01010", "11111", "01010", "11111", "01010", "01010"],
        '-' => ["00000", "00000", "00000", "11111", "00000", "00000", "00000"],
        ' ' => ["00000"; 7],
        _ => return None,
    };
    let mut out = [0u8; 7];
    for (o, r) in out.iter_mut().zip(rows) {
        *o = u8::from_str_radix(r, 2).expect("binary row");
    }
    Some(out)
}

pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, bg: Rgb) -> Self {
        let mut data = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            data.extend_from_slice(&bg);
        }
        Self { width, height, data }
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = ((y as u32 * self.width + x as u32) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    #[cfg(test)]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Even-odd fill sampled at pixel centres.
    pub fn fill_polygon(&mut self, pts: &[Vector2<f64>], c: Rgb) {
        let n = pts.len();
        if n < 3 {
            return;
        }
        let ymin = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let ymax = pts
            .iter()
            .map(|p| p.y)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .min(self.height as f64) as i64;
        let mut xs = Vec::new();
        for y in ymin..ymax {
            let sy = y as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                if (a.y > sy) != (b.y > sy) {
                    xs.push(a.x + (sy - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let x0 = (pair[0] - 0.5).ceil() as i64;
                let x1 = (pair[1] - 0.5).floor() as i64;
                for x in x0..=x1 {
                    self.put(x, y, c);
                }
            }
        }
    }

    pub fn disc(&mut self, center: Vector2<f64>, radius: f64, c: Rgb) {
        let r = radius.ceil() as i64 + 1;
        let (cx, cy) = (center.x.floor() as i64, center.y.floor() as i64);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let d = Vector2::new(x as f64 + 0.5, y as f64 + 0.5) - center;
                if d.norm() <= radius {
                    self.put(x, y, c);
                }
            }
        }
    }

    pub fn ring(&mut self, center: Vector2<f64>, radius: f64, width: f64, c: Rgb) {
        let r = (radius + width).ceil() as i64 + 1;
        let (cx, cy) = (center.x.floor() as i64, center.y.floor() as i64);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let d = (Vector2::new(x as f64 + 0.5, y as f64 + 0.5) - center).norm();
                if (d - radius).abs() <= width / 2.0 {
                    self.put(x, y, c);
                }
            }
        }
    }

    pub fn line(&mut self, a: Vector2<f64>, b: Vector2<f64>, width: f64, c: Rgb) {
        let len = (b - a).norm();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let p = a + (b - a) * (i as f64 / steps as f64);
            self.disc(p, width / 2.0, c);
        }
    }

    pub fn polyline_closed(&mut self, pts: &[Vector2<f64>], width: f64, c: Rgb) {
        for i in 0..pts.len() {
            self.line(pts[i], pts[(i + 1) % pts.len()], width, c);
        }
    }

    /// Text centred on `center`, glyphs scaled by `scale`.
    pub fn text(&mut self, s: &str, center: Vector2<f64>, scale: i64, c: Rgb) {
        let chars: Vec<char> = s.chars().collect();
        let w = chars.len() as i64 * 6 * scale - scale;
        let h = 7 * scale;
        let x0 = center.x.round() as i64 - w / 2;
        let y0 = center.y.round() as i64 - h / 2;
        for (k, ch) in chars.iter().enumerate() {
            let Some(g) = glyph(*ch) else { continue };
            for (row, bits) in g.iter().enumerate() {
                for col in 0..5 {
                    if bits & (1 << (4 - col)) != 0 {
                        for dy in 0..scale {
                            for dx in 0..scale {
                                self.put(
                                    x0 + k as i64 * 6 * scale + col * scale + dx,
                                    y0 + row as i64 * scale + dy,
                                    c,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
