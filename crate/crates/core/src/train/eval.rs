use rayon::prelude::*;

use crate::data::Sample;
use crate::density::DensityMap;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{mae, psnr, rmse, ssim, upsample_density, EvalReport, ImageCount};
use crate::model::Model;
use crate::tensor::{Real, Shape, Tensor};

/// Image as a 1xCxHxW tensor with `channels` planes. Gray images are
/// repeated across three planes; colour images never narrow to one.
pub fn image_tensor<T: Real>(image: &Image, channels: usize) -> Result<Tensor<T>> {
    match (image.channels, channels) {
        (a, b) if a == b => Ok(image.to_tensor()),
        (1, 3) => {
            let plane: Vec<T> = image.data.iter().map(|&v| T::from_float(v)).collect();
            let data = plane.iter().chain(&plane).chain(&plane).copied().collect();
            Tensor::from_vec(Shape::new(1, 3, image.height, image.width), data)
        }
        (a, b) => Err(Error::Version(format!("{a}-channel image given to a model built for {b} channels"))),
    }
}

/// Images of equal size stacked along the batch axis.
pub fn image_batch<T: Real>(samples: &[Sample], channels: usize) -> Result<Tensor<T>> {
    let items = samples
        .iter()
        .map(|s| image_tensor(&s.scene.image, channels))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&items.iter().collect::<Vec<_>>())
}

/// Predicted density for one whole image at the model's output stride.
pub fn predict_map<T: Real>(model: &Model<T>, image: &Image) -> Result<DensityMap> {
    let x = image_tensor::<T>(image, model.config().in_channels)?;
    let out = model.predict(&x)?;
    DensityMap::from_tensor(&out, model.output_stride())
}

struct PerImage {
    count: ImageCount,
    quality: Option<[f64; 4]>,
}

/// Prediction and ground truth for `sample`, both at `stride`.
pub fn sample_maps<T: Real>(model: &Model<T>, sample: &Sample, stride: usize) -> Result<(DensityMap, DensityMap)> {
    let pred = predict_map(model, &sample.scene.image)?;
    let s = model.output_stride();
    if s % stride != 0 {
        return Err(Error::Validation(format!("cannot compare a stride-{s} prediction at stride {stride}")));
    }
    Ok((upsample_density(&pred, s / stride)?, sample.density_at(stride)?))
}

fn score<T: Real>(model: &Model<T>, sample: &Sample) -> Result<PerImage> {
    let pred = predict_map(model, &sample.scene.image)?;
    let gt_count = sample.count();
    let count = ImageCount {
        id: sample.id().to_string(),
        gt: gt_count,
        pred: pred.sum(),
    };
    if !(sample.density.max() > 0.0) {
        return Ok(PerImage { count, quality: None });
    }
    let s = model.output_stride();
    let half = (upsample_density(&pred, s / 2)?, sample.density_at(2)?);
    let full = (upsample_density(&pred, s)?, sample.density.clone());
    Ok(PerImage {
        count,
        quality: Some([
            psnr(&half.0, &half.1)?,
            ssim(&half.0, &half.1)?,
            psnr(&full.0, &full.1)?,
            ssim(&full.0, &full.1)?,
        ]),
    })
}

/// Eval-mode metrics on whole images. Images are scored in parallel and
/// reduced in input order, so the report does not depend on thread count.
pub fn evaluate<T: Real>(model: &Model<T>, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let scored = samples.par_iter().map(|s| score(model, s)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = scored.iter().map(|p| (p.count.gt, p.count.pred)).collect();
    let q: Vec<[f64; 4]> = scored.iter().filter_map(|p| p.quality).collect();
    let mean = |k: usize| {
        if q.is_empty() {
            f64::NAN
        } else {
            q.iter().map(|v| v[k]).sum::<f64>() / q.len() as f64
        }
    };
    Ok(EvalReport {
        mae: mae(&pairs)?,
        rmse: rmse(&pairs)?,
        psnr: mean(0),
        ssim: mean(1),
        psnr_full: mean(2),
        ssim_full: mean(3),
        quality_images: q.len(),
        counts: scored.into_iter().map(|p| p.count).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, DatasetSpec};
    use crate::model::ModelConfig;

    fn data() -> Vec<Sample> {
        generate_dataset(&DatasetSpec {
            scenes: 4,
            width: 32,
            height: 32,
            heads_min: 0,
            heads_max: 4,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn gray_broadcast_and_colour_rejection() {
        let img = Image::from_planar(2, 1, 1, vec![0.25, 0.5]).unwrap();
        let t = image_tensor::<f64>(&img, 3).unwrap();
        assert_eq!(t.data(), &[0.25, 0.5, 0.25, 0.5, 0.25, 0.5]);
        let rgb = Image::zeros(2, 1, 3);
        assert!(matches!(image_tensor::<f64>(&rgb, 1), Err(Error::Version(_))));
    }

    #[test]
    fn report_is_ordered_and_consistent() {
        let d = data();
        let model = Model::<f32>::new(ModelConfig::desk().with_width(1.0 / 16.0), 1, 0.01).unwrap();
        let r = evaluate(&model, &d).unwrap();
        assert_eq!(r.counts.len(), 4);
        for (c, s) in r.counts.iter().zip(&d) {
            assert_eq!(c.id, s.id());
        }
        assert!(r.mae <= r.rmse + 1e-12);
        assert_eq!(r.quality_images, d.iter().filter(|s| s.count() > 0.0).count());
        assert_eq!(evaluate(&model, &d).unwrap(), r);
        assert!(evaluate(&model, &[]).is_err());
    }

    #[test]
    fn compared_maps_share_a_grid() {
        let d = data();
        let model = Model::<f32>::new(ModelConfig::desk(), 1, 0.01).unwrap();
        let (p, g) = sample_maps(&model, &d[0], 2).unwrap();
        assert_eq!((p.width, p.height, p.stride), (g.width, g.height, g.stride));
        assert_eq!(p.width, 16);
    }
}
