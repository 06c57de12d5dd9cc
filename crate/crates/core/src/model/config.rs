use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::tensor::BatchNormConfig;

/// Which parts of the network are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Encoder, context modules and the attention-guided decoder.
    Full,
    /// Encoder and context modules with a plain density head at stride 8.
    NoHag,
    /// Encoder only, plain density head at stride 8.
    Backbone,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-hag" => Ok(Variant::NoHag),
            "backbone" => Ok(Variant::Backbone),
            other => Err(config_err!("unknown ablation '{other}' (full|no-hag|backbone)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoHag => "no-hag",
            Variant::Backbone => "backbone",
        }
    }

    pub fn has_context(self) -> bool {
        !matches!(self, Variant::Backbone)
    }

    pub fn has_decoder(self) -> bool {
        matches!(self, Variant::Full)
    }

    pub fn code(self) -> u32 {
        match self {
            Variant::Full => 0,
            Variant::NoHag => 1,
            Variant::Backbone => 2,
        }
    }

    pub fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Variant::Full),
            1 => Ok(Variant::NoHag),
            2 => Ok(Variant::Backbone),
            _ => Err(config_err!("unknown variant code {c}")),
        }
    }
}

/// Number of convolutions in the VGG-style encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneDepth {
    /// Five blocks C1..C5 (2, 2, 3, 3, 3 convolutions), C5 dilated.
    Thirteen,
    /// Blocks C1..C4 only.
    Ten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Multiplier applied to every channel count.
    pub width_scale: f64,
    pub variant: Variant,
    pub backbone_depth: BackboneDepth,
    pub dcam_count: usize,
    pub dcam_dilations: Vec<usize>,
    pub kernel_size: usize,
    pub c5_dilation: usize,
    pub sam_widths: [usize; 2],
    pub dme_widths: [usize; 2],
    pub batchnorm: BatchNormConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            width_scale: 1.0,
            variant: Variant::Full,
            backbone_depth: BackboneDepth::Thirteen,
            dcam_count: 3,
            dcam_dilations: vec![2, 4, 6],
            kernel_size: 3,
            c5_dilation: 2,
            sam_widths: [64, 32],
            dme_widths: [64, 32],
            batchnorm: BatchNormConfig::default(),
        }
    }
}

/// Base widths of the five encoder blocks before scaling.
pub const BLOCK_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
/// Convolutions per encoder block.
pub const BLOCK_DEPTHS: [usize; 5] = [2, 2, 3, 3, 3];

impl ModelConfig {
    /// Desk-scale settings: grayscale input, one eighth of the widths.
    pub fn desk() -> Self {
        ModelConfig {
            in_channels: 1,
            width_scale: 0.125,
            ..Default::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_width(mut self, width_scale: f64) -> Self {
        self.width_scale = width_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(config_err!("width_scale must be in (0, 1], got {}", self.width_scale));
        }
        if self.width_scale * 64.0 < 4.0 - 1e-9 {
            return Err(config_err!(
                "width_scale {} leaves fewer than 4 channels in the first block",
                self.width_scale
            ));
        }
        if !(self.in_channels == 1 || self.in_channels == 3) {
            return Err(config_err!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(config_err!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.c5_dilation == 0 {
            return Err(config_err!("c5_dilation must be positive"));
        }
        if self.dcam_dilations.is_empty() {
            return Err(config_err!("dcam_dilations must not be empty"));
        }
        if self.dcam_dilations[0] == 0
            || self.dcam_dilations.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(config_err!(
                "dcam_dilations must be strictly increasing and positive, got {:?}",
                self.dcam_dilations
            ));
        }
        if self.sam_widths.contains(&0) || self.dme_widths.contains(&0) {
            return Err(config_err!("head widths must be positive"));
        }
        Ok(())
    }

    /// Scaled channel count, never below one.
    pub fn scaled(&self, base: usize) -> usize {
        ((base as f64 * self.width_scale).round() as usize).max(1)
    }

    pub fn block_count(&self) -> usize {
        match self.backbone_depth {
            BackboneDepth::Thirteen => 5,
            BackboneDepth::Ten => 4,
        }
    }

    /// Output channels of each encoder block.
    pub fn block_channels(&self) -> Vec<usize> {
        BLOCK_WIDTHS[..self.block_count()]
            .iter()
            .map(|&b| self.scaled(b))
            .collect()
    }

    /// Channels entering the context modules and the decoder.
    pub fn encoder_channels(&self) -> usize {
        *self.block_channels().last().expect("at least four blocks")
    }

    /// Channels of each dense branch inside a context module.
    pub fn dcam_branch_channels(&self) -> usize {
        (self.encoder_channels() / 2).max(1)
    }

    /// Widths of the two fusion modules: the shallow input's channel count.
    pub fn fusion_widths(&self) -> [usize; 2] {
        let b = self.block_channels();
        [b[2], b[1]]
    }

    /// Density output stride relative to the input image.
    pub fn output_stride(&self) -> usize {
        if self.variant.has_decoder() {
            2
        } else {
            8
        }
    }
}
