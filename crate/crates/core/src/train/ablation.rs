use std::fmt::Write as _;

use super::{evaluate, TrainConfig, Trainer};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::Variant;

pub const ABLATION_VARIANTS: [Variant; 3] = [Variant::Full, Variant::NoHag, Variant::Backbone];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub seed: u64,
    pub variant: Variant,
    pub report: EvalReport,
}

/// Median test metrics of one variant across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationSummary {
    pub variant: Variant,
    pub mae: f64,
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Trains every variant once per seed with otherwise identical settings.
pub fn ablation_matrix(
    base: &TrainConfig,
    seeds: &[u64],
    train: &[Sample],
    test: &[Sample],
    mut progress: impl FnMut(&AblationRun),
) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::new();
    for &seed in seeds {
        for variant in ABLATION_VARIANTS {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.model = cfg.model.with_variant(variant);
            let mut t = Trainer::<f32>::new(cfg)?;
            t.fit(train, None, |_, _| Ok(()))?;
            let run = AblationRun {
                seed,
                variant,
                report: evaluate(&t.model, test)?,
            };
            progress(&run);
            runs.push(run);
        }
    }
    Ok(runs)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

pub fn summarize(runs: &[AblationRun]) -> Result<Vec<AblationSummary>> {
    ABLATION_VARIANTS
        .iter()
        .filter(|v| runs.iter().any(|r| r.variant == **v))
        .map(|&variant| {
            let rs: Vec<&EvalReport> = runs.iter().filter(|r| r.variant == variant).map(|r| &r.report).collect();
            let pick = |f: fn(&EvalReport) -> f64| median(&mut rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            Ok(AblationSummary {
                variant,
                mae: pick(|r| r.mae),
                rmse: pick(|r| r.rmse),
                psnr: pick(|r| r.psnr),
                ssim: pick(|r| r.ssim),
            })
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|s| {
            if s.is_empty() {
                Err(Error::Input("no ablation runs to summarise".into()))
            } else {
                Ok(s)
            }
        })
}

/// Per-run rows followed by one `median` row per variant.
pub fn ablation_csv(runs: &[AblationRun]) -> Result<String> {
    let mut s = String::from("seed,variant,mae,rmse,psnr,ssim\n");
    for r in runs {
        let e = &r.report;
        let _ = writeln!(s, "{},{},{},{},{},{}", r.seed, r.variant.name(), e.mae, e.rmse, e.psnr, e.ssim);
    }
    for m in summarize(runs)? {
        let _ = writeln!(s, "median,{},{},{},{},{}", m.variant.name(), m.mae, m.rmse, m.psnr, m.ssim);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
