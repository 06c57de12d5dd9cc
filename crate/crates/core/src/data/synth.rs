//! Procedural crowd scenes.
//!
//! Heads are dark disks with a lighter shoulder ellipse underneath, drawn
//! over a shaded background. Clutter patches add window grids and stripe
//! textures that share the heads' contrast but not their shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::density::{AnnotatedScene, Point};
use crate::error::{config_err, Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_heads: usize,
    pub cluster_count: usize,
    /// 0 keeps every head the same size; 1 shrinks heads at the top row to nothing.
    pub perspective: f64,
    /// Fraction of the maximum number of clutter patches.
    pub clutter_level: f64,
    /// Head radius at the bottom row, in pixels.
    pub head_radius: f64,
    /// Minimum distance from a head centre to the image border; `None` uses the head radius.
    pub margin: Option<f64>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            width: 96,
            height: 96,
            n_heads: 20,
            cluster_count: 3,
            perspective: 0.4,
            clutter_level: 0.5,
            head_radius: 3.0,
            margin: None,
        }
    }
}

/// Clutter patches at `clutter_level` 1.
pub const MAX_CLUTTER_PATCHES: usize = 6;
/// Two heads may not overlap by more than this fraction of their mean diameter.
pub const MAX_OVERLAP: f64 = 0.9;
const PLACEMENT_TRIES: usize = 400;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width % 8 != 0 || self.height % 8 != 0 {
            return Err(config_err!(
                "scene size {}x{} must be positive multiples of 8",
                self.width,
                self.height
            ));
        }
        if !(0.0..=1.0).contains(&self.perspective) || !(0.0..=1.0).contains(&self.clutter_level) {
            return Err(config_err!("perspective and clutter_level must lie in [0, 1]"));
        }
        if !(self.head_radius > 0.0) {
            return Err(config_err!("head_radius must be positive"));
        }
        if self.n_heads > 0 && self.cluster_count == 0 {
            return Err(config_err!("cluster_count must be positive when there are heads"));
        }
        Ok(())
    }

    pub fn radius_at(&self, y: f64) -> f64 {
        let r = self.head_radius * (1.0 - self.perspective * (1.0 - y / self.height as f64));
        r.max(0.5)
    }
}

/// Coverage of a pixel by an axis-aligned ellipse, from 4x4 subsamples.
fn coverage(px: usize, py: usize, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let mut hit = 0;
    for sy in 0..4 {
        for sx in 0..4 {
            let x = px as f64 + (sx as f64 + 0.5) / 4.0;
            let y = py as f64 + (sy as f64 + 0.5) / 4.0;
            let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
            if dx * dx + dy * dy <= 1.0 {
                hit += 1;
            }
        }
    }
    hit as f64 / 16.0
}

fn paint_ellipse(buf: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, rx: f64, ry: f64, value: f64) {
    let x0 = (cx - rx).floor().max(0.0) as usize;
    let y0 = (cy - ry).floor().max(0.0) as usize;
    let x1 = ((cx + rx).ceil() as usize).min(w);
    let y1 = ((cy + ry).ceil() as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = coverage(x, y, cx, cy, rx, ry);
            if a > 0.0 {
                let v = &mut buf[y * w + x];
                *v = *v * (1.0 - a) + value * a;
            }
        }
    }
}

fn paint_clutter(buf: &mut [f64], w: usize, h: usize, rng: &mut ChaCha8Rng) {
    let pw = rng.gen_range(w / 6..=w / 2).max(4);
    let ph = rng.gen_range(h / 6..=h / 2).max(4);
    let x0 = rng.gen_range(0..=w - pw.min(w));
    let y0 = rng.gen_range(0..=h - ph.min(h));
    let period = rng.gen_range(3..=6usize);
    let dark = rng.gen_range(0.15..0.35);
    let kind = rng.gen_range(0..3);
    for y in y0..(y0 + ph).min(h) {
        for x in x0..(x0 + pw).min(w) {
            let (u, v) = (x - x0, y - y0);
            let on = match kind {
                // window grid
                0 => u % period == 0 || v % period == 0,
                // vertical stripes
                1 => u % period < 2,
                // diagonal stripes
                _ => (u + v) % period == 0,
            };
            if on {
                buf[y * w + x] = dark;
            }
        }
    }
}

/// Deterministic scene for `spec`; head centres are the annotation.
pub fn generate_scene(spec: &SceneSpec) -> Result<AnnotatedScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (wf, hf) = (w as f64, h as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // background: vertical shading
    let top = rng.gen_range(0.55..0.7);
    let bottom = rng.gen_range(0.6..0.8);
    let mut buf: Vec<f64> = (0..w * h)
        .map(|i| {
            let t = (i / w) as f64 / hf;
            top + (bottom - top) * t
        })
        .collect();

    let patches = (spec.clutter_level * MAX_CLUTTER_PATCHES as f64).round() as usize;
    for _ in 0..patches {
        paint_clutter(&mut buf, w, h, &mut rng);
    }

    let spread = 0.12 * wf.min(hf);
    let centres: Vec<(f64, f64)> = (0..spec.cluster_count)
        .map(|_| (rng.gen_range(0.15..0.85) * wf, rng.gen_range(0.2..0.9) * hf))
        .collect();
    let jitter = Normal::new(0.0, spread).map_err(|e| Error::Generation(e.to_string()))?;
    let mut points: Vec<Point> = Vec::with_capacity(spec.n_heads);
    let mut radii: Vec<f64> = Vec::with_capacity(spec.n_heads);
    for i in 0..spec.n_heads {
        let mut placed = false;
        for attempt in 0..PLACEMENT_TRIES {
            let (cx, cy) = centres[rng.gen_range(0..centres.len())];
            // later attempts fall back to uniform placement
            let (x, y) = if attempt < PLACEMENT_TRIES / 2 {
                (cx + jitter.sample(&mut rng), cy + jitter.sample(&mut rng))
            } else {
                (rng.gen_range(0.0..wf), rng.gen_range(0.0..hf))
            };
            let (x, y) = ((x * 1000.0).round() / 1000.0, (y * 1000.0).round() / 1000.0);
            let r = spec.radius_at(y);
            let m = spec.margin.unwrap_or(r);
            if x < m || y < m || x > wf - m || y > hf - m || x >= wf || y >= hf {
                continue;
            }
            let crowded = points.iter().zip(&radii).any(|(p, &rp)| {
                let d = (p.x - x).hypot(p.y - y);
                d < (1.0 - MAX_OVERLAP) * (r + rp)
            });
            if crowded {
                continue;
            }
            points.push(Point::new(x, y));
            radii.push(r);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place head {} of {} in a {w}x{h} scene without heavy overlap",
                i + 1,
                spec.n_heads
            )));
        }
    }

    // shoulders first so heads stay on top, far rows first
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].y.total_cmp(&points[b].y));
    for &i in &order {
        let (p, r) = (points[i], radii[i]);
        let shade = rng.gen_range(0.75..0.95);
        paint_ellipse(&mut buf, w, h, p.x, p.y + 1.8 * r, 1.6 * r, 1.0 * r, shade);
        let tone = rng.gen_range(0.05..0.2);
        paint_ellipse(&mut buf, w, h, p.x, p.y, r, r, tone);
    }

    let noise = Normal::new(0.0, 0.02).map_err(|e| Error::Generation(e.to_string()))?;
    for v in buf.iter_mut() {
        let x = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
        *v = (x * 255.0).round() / 255.0;
    }

    let scene = AnnotatedScene {
        id: format!("scene_{:016x}", spec.seed),
        image: Image::from_planar(w, h, 1, buf)?,
        points,
    };
    scene.validate()?;
    Ok(scene)
}
