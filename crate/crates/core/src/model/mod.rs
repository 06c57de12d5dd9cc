//! The counting network: a VGG-style encoder, a stack of dilated context
//! modules and a decoder that fuses three scales under attention supervision.
//!
//! Parameters live in a flat [`ParamStore`] in declaration order; a
//! [`Session`] records one forward pass on a fresh [`Tape`].

pub(crate) mod checkpoint;
mod config;

pub use checkpoint::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use config::{BackboneDepth, ModelConfig, Variant, BLOCK_DEPTHS, BLOCK_WIDTHS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config_err, Error, Result};
use crate::tensor::{BatchNormConfig, BnMode, BnRunning, ConvSpec, Real, Shape, Tape, Tensor, Var};

/// Named parameter tensors in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push(&mut self, name: String, tensor: Tensor<T>) -> usize {
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: usize) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.shape().numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvRef {
    weight: usize,
    bias: Option<usize>,
    spec: ConvSpec,
}

/// Convolution, batch norm and an optional ReLU.
#[derive(Debug, Clone, Copy)]
struct ConvBn {
    conv: ConvRef,
    gamma: usize,
    beta: usize,
    bn: usize,
    relu: bool,
}

#[derive(Debug, Clone)]
struct Dcam {
    channels: usize,
    branches: Vec<ConvBn>,
    fuse: ConvRef,
}

#[derive(Debug, Clone)]
struct Head {
    layers: Vec<ConvBn>,
    out: Option<ConvRef>,
}

#[derive(Debug, Clone)]
struct Architecture {
    blocks: Vec<Vec<ConvBn>>,
    dcams: Vec<Dcam>,
    sams: Vec<Head>,
    fms: Vec<ConvBn>,
    dme: Head,
}

/// Declares parameters as zero tensors; values are filled by [`init_params`].
struct Builder<T> {
    params: ParamStore<T>,
    bn: Vec<usize>,
}

impl<T: Real> Builder<T> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, d: usize, bias: bool) -> Result<ConvRef> {
        let weight = self
            .params
            .push(format!("{name}.weight"), Tensor::zeros(Shape::new(cout, cin, k, k)));
        let bias = bias.then(|| {
            self.params
                .push(format!("{name}.bias"), Tensor::zeros(Shape::new(cout, 1, 1, 1)))
        });
        Ok(ConvRef {
            weight,
            bias,
            spec: ConvSpec::same(k, d)?,
        })
    }

    fn conv_bn(&mut self, name: &str, cin: usize, cout: usize, k: usize, d: usize, relu: bool) -> Result<ConvBn> {
        // batch norm cancels a conv bias, so none is declared
        let conv = self.conv(name, cin, cout, k, d, false)?;
        let gamma = self
            .params
            .push(format!("{name}.bn.gamma"), Tensor::full(Shape::new(cout, 1, 1, 1), T::one()));
        let beta = self
            .params
            .push(format!("{name}.bn.beta"), Tensor::zeros(Shape::new(cout, 1, 1, 1)));
        self.bn.push(cout);
        Ok(ConvBn {
            conv,
            gamma,
            beta,
            bn: self.bn.len() - 1,
            relu,
        })
    }
}

fn build<T: Real>(cfg: &ModelConfig) -> Result<(Architecture, ParamStore<T>, Vec<usize>)> {
    cfg.validate()?;
    let mut b = Builder {
        params: ParamStore::new(),
        bn: Vec::new(),
    };
    let k = cfg.kernel_size;
    let widths = cfg.block_channels();

    let mut blocks = Vec::new();
    let mut cin = cfg.in_channels;
    for (bi, &cout) in widths.iter().enumerate() {
        let d = if bi == 4 { cfg.c5_dilation } else { 1 };
        let mut layers = Vec::new();
        for j in 0..BLOCK_DEPTHS[bi] {
            layers.push(b.conv_bn(&format!("encoder.c{}.{j}", bi + 1), cin, cout, k, d, true)?);
            cin = cout;
        }
        blocks.push(layers);
    }

    let c = cfg.encoder_channels();
    let mut dcams = Vec::new();
    if cfg.variant.has_context() {
        let half = cfg.dcam_branch_channels();
        for i in 0..cfg.dcam_count {
            let mut branches = Vec::new();
            for (l, &d) in cfg.dcam_dilations.iter().enumerate() {
                branches.push(b.conv_bn(&format!("dcam{}.branch{}", i + 1, l + 1), c + l * half, half, k, d, true)?);
            }
            let fused = c + cfg.dcam_dilations.len() * half;
            let fuse = b.conv(&format!("dcam{}.fuse", i + 1), fused, c, 1, 1, true)?;
            dcams.push(Dcam {
                channels: c,
                branches,
                fuse,
            });
        }
    }

    let [s1, s2] = cfg.sam_widths.map(|w| cfg.scaled(w));
    let [d1, d2] = cfg.dme_widths.map(|w| cfg.scaled(w));
    let mut sams = Vec::new();
    let mut fms = Vec::new();
    let dme_in;
    if cfg.variant.has_decoder() {
        let fw = cfg.fusion_widths();
        let sam_in = [c, fw[0], fw[1]];
        let shallow = [widths[2], widths[1]];
        let mut deep = c;
        for (i, (&w, &sh)) in fw.iter().zip(&shallow).enumerate() {
            fms.push(b.conv_bn(&format!("fm{}", i + 1), deep + sh, w, k, 1, true)?);
            deep = w;
        }
        for (i, &cin) in sam_in.iter().enumerate() {
            let name = format!("sam{}", i + 1);
            sams.push(Head {
                layers: vec![
                    b.conv_bn(&format!("{name}.0"), cin, s1, k, 1, true)?,
                    b.conv_bn(&format!("{name}.1"), s1, s2, k, 1, true)?,
                    b.conv_bn(&format!("{name}.2"), s2, 1, 1, 1, false)?,
                ],
                out: None,
            });
        }
        dme_in = fw[1];
    } else {
        dme_in = c;
    }
    let dme = Head {
        layers: vec![
            b.conv_bn("dme.0", dme_in, d1, k, 1, true)?,
            b.conv_bn("dme.1", d1, d2, k, 1, true)?,
        ],
        out: Some(b.conv("dme.out", d2, 1, 1, 1, true)?),
    };
    Ok((
        Architecture {
            blocks,
            dcams,
            sams,
            fms,
            dme,
        },
        b.params,
        b.bn,
    ))
}

/// Draws every conv weight from N(0, std^2) in declaration order; biases and
/// batch-norm offsets are zero and batch-norm scales one.
pub fn init_params<T: Real>(params: &mut ParamStore<T>, seed: u64, std: f64) -> Result<()> {
    let normal = Normal::new(0.0, std).map_err(|e| config_err!("init std {std}: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in params.names.iter().zip(params.tensors.iter_mut()) {
        let fill = if name.ends_with(".weight") {
            None
        } else if name.ends_with(".gamma") {
            Some(T::one())
        } else {
            Some(T::zero())
        };
        for v in t.data_mut() {
            *v = match fill {
                Some(f) => f,
                None => T::from_float(normal.sample(&mut rng)),
            };
        }
    }
    Ok(())
}

/// Replacement for the finest attention map where it gates the density head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOverride {
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub mode: BnMode,
    pub gate: Option<GateOverride>,
}

impl ForwardOptions {
    pub fn train() -> Self {
        ForwardOptions {
            mode: BnMode::Train,
            gate: None,
        }
    }

    pub fn eval() -> Self {
        ForwardOptions {
            mode: BnMode::Eval,
            gate: None,
        }
    }

    pub fn with_gate(mut self, gate: GateOverride) -> Self {
        self.gate = Some(gate);
        self
    }
}

/// Encoder taps.
#[derive(Debug, Clone, Copy)]
pub struct EncoderFeatures {
    /// Stride 2.
    pub f2: Var,
    /// Stride 4.
    pub f3: Var,
    /// Last encoder block, stride 8.
    pub c5: Var,
}

/// Handles into the tape for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DecoderVars {
    /// N x 1 density at the model's output stride.
    pub density: Var,
    /// Attention maps at strides 8, 4, 2; absent for the ablations.
    pub attention: Option<[Var; 3]>,
}

/// Network parameters, batch-norm state and layout.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    arch: Architecture,
    params: ParamStore<T>,
    bn: Vec<BnRunning<T>>,
}

impl<T: Real> Model<T> {
    /// Seeded initialisation with weights drawn from N(0, init_std^2).
    pub fn new(config: ModelConfig, seed: u64, init_std: f64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        init_params(&mut model.params, seed, init_std)?;
        Ok(model)
    }

    /// Layout with every weight zero, gammas one and fresh running statistics.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let (arch, params, bn) = build(&config)?;
        Ok(Model {
            config,
            arch,
            params,
            bn: bn.into_iter().map(BnRunning::new).collect(),
        })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parts(config: ModelConfig, params: Vec<(String, Tensor<T>)>, bn: Vec<BnRunning<T>>) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        if params.len() != model.params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (id, (name, t)) in params.into_iter().enumerate() {
            let want = model.params.get(id).shape();
            if name != model.params.names[id] || t.shape() != want {
                return Err(Error::Validation(format!(
                    "parameter {id}: expected {} {want}, found {name} {}",
                    model.params.names[id],
                    t.shape()
                )));
            }
            model.params.tensors[id] = t;
        }
        if bn.len() != model.bn.len() || bn.iter().zip(&model.bn).any(|(a, b)| a.channels() != b.channels()) {
            return Err(Error::Validation("batch-norm statistics do not match the layout".into()));
        }
        model.bn = bn;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn bn_state(&self) -> &[BnRunning<T>] {
        &self.bn
    }

    pub fn bn_state_mut(&mut self) -> &mut [BnRunning<T>] {
        &mut self.bn
    }

    pub fn output_stride(&self) -> usize {
        self.config.output_stride()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
            bn: self
                .bn
                .iter()
                .map(|r| BnRunning {
                    mean: r.mean.iter().map(|v| U::from_float(v.to_float())).collect(),
                    var: r.var.iter().map(|v| U::from_float(v.to_float())).collect(),
                })
                .collect(),
        }
    }

    /// Forward session; train mode updates the running statistics.
    pub fn session(&mut self, opts: ForwardOptions) -> Session<'_, T> {
        Session {
            tape: Tape::new(),
            arch: &self.arch,
            params: &self.params,
            bn: BnSlot::Update(&mut self.bn),
            bn_cfg: self.config.batchnorm,
            in_channels: self.config.in_channels,
            opts,
        }
    }

    /// Forward session that never writes batch-norm state.
    pub fn frozen_session(&self, opts: ForwardOptions) -> Session<'_, T> {
        Session {
            tape: Tape::new(),
            arch: &self.arch,
            params: &self.params,
            bn: BnSlot::Frozen(&self.bn),
            bn_cfg: self.config.batchnorm,
            in_channels: self.config.in_channels,
            opts,
        }
    }

    /// Eval-mode density for a batch of images.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut s = self.frozen_session(ForwardOptions::eval());
        let x = s.input(images.clone());
        let out = s.forward(x)?;
        Ok(s.tape().value(out.density).clone())
    }
}

enum BnSlot<'m, T> {
    Update(&'m mut [BnRunning<T>]),
    Frozen(&'m [BnRunning<T>]),
}

/// One recorded forward pass.
pub struct Session<'m, T> {
    tape: Tape<T>,
    arch: &'m Architecture,
    params: &'m ParamStore<T>,
    bn: BnSlot<'m, T>,
    bn_cfg: BatchNormConfig,
    in_channels: usize,
    opts: ForwardOptions,
}

impl<'m, T: Real> Session<'m, T> {
    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }

    /// Releases the model borrow and returns the recording.
    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }

    pub fn input(&mut self, images: Tensor<T>) -> Var {
        self.tape.leaf(images)
    }

    fn p(&mut self, id: usize) -> Var {
        self.tape.param(id, self.params.get(id))
    }

    fn conv(&mut self, x: Var, c: ConvRef) -> Result<Var> {
        let w = self.p(c.weight);
        let b = c.bias.map(|b| self.p(b));
        self.tape.conv2d(x, w, b, c.spec)
    }

    fn conv_bn(&mut self, x: Var, l: ConvBn) -> Result<Var> {
        let y = self.conv(x, l.conv)?;
        let (g, b) = (self.p(l.gamma), self.p(l.beta));
        let (mode, cfg) = (self.opts.mode, self.bn_cfg);
        let y = match &mut self.bn {
            BnSlot::Update(bn) => self.tape.batchnorm2d(y, g, b, &mut bn[l.bn], mode, cfg)?,
            BnSlot::Frozen(bn) => self.tape.batchnorm2d_frozen(y, g, b, &bn[l.bn], mode, cfg)?,
        };
        Ok(if l.relu { self.tape.relu(y) } else { y })
    }

    fn check_image(&self, x: Var) -> Result<()> {
        let s = self.tape.shape(x);
        if s.c != self.in_channels {
            return Err(Error::Input(format!(
                "model expects {} input channels, got {}",
                self.in_channels, s.c
            )));
        }
        if s.h % 8 != 0 || s.w % 8 != 0 || s.h == 0 || s.w == 0 {
            return Err(Error::Input(format!(
                "image {}x{} must have height and width divisible by 8",
                s.w, s.h
            )));
        }
        Ok(())
    }

    /// Encoder pass returning the stride-2, stride-4 and final taps.
    pub fn backbone_forward(&mut self, x: Var) -> Result<EncoderFeatures> {
        self.check_image(x)?;
        let arch = self.arch;
        let mut h = x;
        let mut taps = Vec::new();
        for (bi, block) in arch.blocks.iter().enumerate() {
            if (1..=3).contains(&bi) {
                h = self.tape.maxpool2(h)?;
            }
            for &l in block {
                h = self.conv_bn(h, l)?;
            }
            taps.push(h);
        }
        Ok(EncoderFeatures {
            f2: taps[1],
            f3: taps[2],
            c5: h,
        })
    }

    /// Context module `index`: dense dilated branches plus a global branch.
    pub fn dcam_forward(&mut self, index: usize, x: Var) -> Result<Var> {
        let arch = self.arch;
        let m = arch
            .dcams
            .get(index)
            .ok_or_else(|| config_err!("no context module {index}"))?;
        let s = self.tape.shape(x);
        if s.c != m.channels {
            return Err(config_err!(
                "context module expects {} channels, got {}",
                m.channels,
                s.c
            ));
        }
        let mut dense = vec![x];
        let mut outs = Vec::with_capacity(m.branches.len());
        for &l in &m.branches {
            let inp = if dense.len() == 1 {
                x
            } else {
                self.tape.concat_channels(&dense)?
            };
            let hl = self.conv_bn(inp, l)?;
            dense.push(hl);
            outs.push(hl);
        }
        let g = self.tape.global_avg_pool(x);
        let g = self.tape.resize_bilinear(g, s.h, s.w)?;
        let mut parts = vec![g];
        parts.extend(outs);
        let cat = self.tape.concat_channels(&parts)?;
        self.conv(cat, m.fuse)
    }

    /// All context modules in sequence; identity when there are none.
    pub fn dcam_stack(&mut self, x: Var) -> Result<Var> {
        let mut h = x;
        for i in 0..self.arch.dcams.len() {
            h = self.dcam_forward(i, h)?;
        }
        Ok(h)
    }

    /// Attention head `index` (0 = stride 8, 2 = stride 2).
    pub fn sam_forward(&mut self, index: usize, x: Var) -> Result<Var> {
        let arch = self.arch;
        let head = arch
            .sams
            .get(index)
            .ok_or_else(|| config_err!("no attention head {index}"))?;
        let mut h = x;
        for &l in &head.layers {
            h = self.conv_bn(h, l)?;
        }
        Ok(self.tape.sigmoid(h))
    }

    /// Fusion module `index`: upsample `deep` twice, concatenate `shallow`.
    pub fn fm_fuse(&mut self, index: usize, deep: Var, shallow: Var) -> Result<Var> {
        let arch = self.arch;
        let l = *arch
            .fms
            .get(index)
            .ok_or_else(|| config_err!("no fusion module {index}"))?;
        let (d, s) = (self.tape.shape(deep), self.tape.shape(shallow));
        if s.h != 2 * d.h || s.w != 2 * d.w || s.n != d.n {
            return Err(config_err!("fusion needs shallow = 2 x deep, got {d} and {s}"));
        }
        let up = self.tape.bilinear_upsample(deep, 2)?;
        let cat = self.tape.concat_channels(&[up, shallow])?;
        self.conv_bn(cat, l)
    }

    /// Density head; the closing ReLU keeps the map nonnegative.
    pub fn dme_forward(&mut self, x: Var) -> Result<Var> {
        let arch = self.arch;
        let head = &arch.dme;
        let mut h = x;
        for &l in &head.layers {
            h = self.conv_bn(h, l)?;
        }
        let out = head.out.expect("density head has an output conv");
        let y = self.conv(h, out)?;
        Ok(self.tape.relu(y))
    }

    /// Whole network.
    pub fn forward(&mut self, x: Var) -> Result<DecoderVars> {
        let enc = self.backbone_forward(x)?;
        if self.arch.sams.is_empty() {
            let f6 = self.dcam_stack(enc.c5)?;
            let density = self.dme_forward(f6)?;
            return Ok(DecoderVars {
                density,
                attention: None,
            });
        }
        let f6 = self.dcam_stack(enc.c5)?;
        let a1 = self.sam_forward(0, f6)?;
        let m36 = self.fm_fuse(0, f6, enc.f3)?;
        let a2 = self.sam_forward(1, m36)?;
        let m23 = self.fm_fuse(1, m36, enc.f2)?;
        let a3 = self.sam_forward(2, m23)?;
        let gate = match self.opts.gate {
            None => a3,
            Some(o) => {
                let s = self.tape.shape(a3);
                let v = if o == GateOverride::Ones { T::one() } else { T::zero() };
                self.tape.constant(Tensor::full(s, v))
            }
        };
        let gated = self.tape.mul(m23, gate)?;
        let density = self.dme_forward(gated)?;
        Ok(DecoderVars {
            density,
            attention: Some([a1, a2, a3]),
        })
    }
}
