//! Count errors and density-map quality.

use std::fmt::Write as _;
use std::path::Path;

use crate::density::DensityMap;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// PSNR reported when the maps agree to within this mean squared error.
pub const PSNR_CAP_DB: f64 = 100.0;
const PSNR_CAP_MSE: f64 = 1e-10;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn nonempty(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Validation("count metrics need at least one image".into()));
    }
    Ok(())
}

/// Mean absolute count error over `(gt, pred)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    nonempty(pairs)?;
    Ok(pairs.iter().map(|(g, p)| (g - p).abs()).sum::<f64>() / pairs.len() as f64)
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    nonempty(pairs)?;
    let ms = pairs.iter().map(|(g, p)| (g - p) * (g - p)).sum::<f64>() / pairs.len() as f64;
    Ok(ms.sqrt())
}

/// Both maps divided by the ground-truth peak.
fn peak_scaled(pred: &DensityMap, gt: &DensityMap) -> Result<(Vec<f64>, Vec<f64>)> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Validation(format!(
            "map sizes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let peak = gt.max();
    if !(peak > 0.0) {
        return Err(Error::Validation("quality metrics are undefined for an all-zero ground truth".into()));
    }
    let s = 1.0 / peak;
    Ok((
        pred.values.iter().map(|v| v * s).collect(),
        gt.values.iter().map(|v| v * s).collect(),
    ))
}

/// PSNR in dB with the ground-truth peak mapped to 1.
pub fn psnr(pred: &DensityMap, gt: &DensityMap) -> Result<f64> {
    let (p, g) = peak_scaled(pred, gt)?;
    let mse = p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    if mse < PSNR_CAP_MSE {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Window side used for an `w x h` map: 11, or the largest odd size that fits.
pub fn ssim_window(width: usize, height: usize) -> usize {
    let m = width.min(height).min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a row-major plane.
fn filter_valid(v: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * v[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Gaussian-window SSIM on peak-scaled maps with unit dynamic range.
pub fn ssim(pred: &DensityMap, gt: &DensityMap) -> Result<f64> {
    let (p, g) = peak_scaled(pred, gt)?;
    let (w, h) = (gt.width, gt.height);
    let win = ssim_window(w, h);
    if win == 0 {
        return Err(Error::Validation("SSIM needs a non-empty map".into()));
    }
    let taps = gaussian_taps(win, SSIM_SIGMA);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (mu_p, ..) = filter_valid(&p, w, h, &taps);
    let (mu_g, ..) = filter_valid(&g, w, h, &taps);
    let (pp, ..) = filter_valid(&sq(&p, &p), w, h, &taps);
    let (gg, ..) = filter_valid(&sq(&g, &g), w, h, &taps);
    let (pg, ..) = filter_valid(&sq(&p, &g), w, h, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_p.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mp, mg) = (mu_p[i], mu_g[i]);
        let vp = pp[i] - mp * mp;
        let vg = gg[i] - mg * mg;
        let cov = pg[i] - mp * mg;
        total += ((2.0 * mp * mg + c1) * (2.0 * cov + c2)) / ((mp * mp + mg * mg + c1) * (vp + vg + c2));
    }
    Ok(total / n as f64)
}

/// Bilinear upsampling by `factor` with the mass divided by `factor^2`.
pub fn upsample_density(map: &DensityMap, factor: usize) -> Result<DensityMap> {
    if factor == 1 {
        return Ok(map.clone());
    }
    if factor == 0 || map.stride % factor != 0 {
        return Err(Error::Validation(format!(
            "cannot upsample a stride-{} map by {factor}",
            map.stride
        )));
    }
    let t: Tensor<f64> = map.to_tensor();
    let s = Shape::new(1, 1, map.height, map.width);
    let (oh, ow) = (map.height * factor, map.width * factor);
    let up = crate::tensor::resize_values(s, t.data(), oh, ow);
    let k = 1.0 / (factor * factor) as f64;
    Ok(DensityMap {
        width: ow,
        height: oh,
        stride: map.stride / factor,
        values: up.into_iter().map(|v| v * k).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageCount {
    pub id: String,
    pub gt: f64,
    pub pred: f64,
}

/// Test-set summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    /// Mean over images with a nonzero ground truth, maps at stride 2.
    pub psnr: f64,
    pub ssim: f64,
    /// Same, with maps at full image resolution.
    pub psnr_full: f64,
    pub ssim_full: f64,
    /// Images that entered the map-quality means.
    pub quality_images: usize,
    pub counts: Vec<ImageCount>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("mae", self.mae),
            ("rmse", self.rmse),
            ("psnr", self.psnr),
            ("ssim", self.ssim),
            ("psnr_full", self.psnr_full),
            ("ssim_full", self.ssim_full),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "images={}", self.counts.len());
        let _ = writeln!(s, "quality_images={}", self.quality_images);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,gt_count,pred_count\n");
        for c in &self.counts {
            let _ = writeln!(s, "{},{},{}", c.id, c.gt, c.pred);
        }
        s
    }

    pub fn write(&self, report: &Path, csv: Option<&Path>) -> Result<()> {
        std::fs::write(report, self.to_text()).map_err(|e| Error::io(report, e))?;
        if let Some(p) = csv {
            std::fs::write(p, self.to_csv()).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    /// Parses the key-value text form; per-image counts are not included.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut r = EvalReport {
            mae: f64::NAN,
            rmse: f64::NAN,
            psnr: f64::NAN,
            ssim: f64::NAN,
            psnr_full: f64::NAN,
            ssim_full: f64::NAN,
            quality_images: 0,
            counts: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                path: "<report>".into(),
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            };
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let x: f64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "mae" => r.mae = x,
                "rmse" => r.rmse = x,
                "psnr" => r.psnr = x,
                "ssim" => r.ssim = x,
                "psnr_full" => r.psnr_full = x,
                "ssim_full" => r.ssim_full = x,
                "quality_images" => r.quality_images = x as usize,
                _ => {}
            }
        }
        Ok(r)
    }
}
