//! Residual 3D encoder-decoder.
//!
//! ```text
//! input (4,64,64,7)
//!   enc1 ──────────────────────────────┐ skip 1
//!   pool → (2,32,32)                   │
//!   enc2 ─────────────────────┐ skip 2 │
//!   pool → (1,16,16)          │        │
//!   bottleneck (1,16,16,24)   │        │
//!   upsample → concat ────────┘        │
//!   dec2                               │
//!   upsample → concat ─────────────────┘
//!   dec1
//!   bn → leaky-relu → 1x1x1 conv → (4,64,64,6)
//! ```
//!
//! Every block is a pre-activation residual unit: `convs_per_block` stacks of
//! batch-norm → leaky-ReLU → conv, added to an identity shortcut or, when the
//! channel count changes, a 1x1x1 projection of the block input. The first
//! conv of `enc1` sees the raw conditioning grid: normalizing spatially
//! constant clearance channels over a batch would erase them.

mod checkpoint;
mod input;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint,
    Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use input::{
    assemble_input, assemble_input_on, node_span, normalize_clearance, ConditioningGrid, AXIAL_CHANNEL,
    CONDITIONING_CHANNELS, COS_CHANNEL, SIN_CHANNEL, SPAN_CHANNEL,
};

use crate::error::{Error, Result};
use crate::tensor::{BatchStats, BnMode, Graph, PaddingSpec, Scalar, Tensor, Var};

pub const PARAMETER_BUDGET: (usize, usize) = (40_000, 65_000);
pub const BOTTLENECK_CHANNELS: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureConfig {
    /// Clearance channels plus coordinate channels.
    pub in_channels: usize,
    /// Channel widths of encoder levels 1 and 2 (mirrored in the decoder).
    pub level_widths: [usize; 2],
    pub bottleneck_channels: usize,
    pub convs_per_block: usize,
    pub kernel_size: usize,
    pub out_channels: usize,
    pub leaky_slope: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            in_channels: CONDITIONING_CHANNELS,
            level_widths: [8, 12],
            bottleneck_channels: BOTTLENECK_CHANNELS,
            convs_per_block: 2,
            kernel_size: 3,
            out_channels: 6,
            leaky_slope: 0.2,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ArchitectureConfig {
    /// Structural checks that do not depend on the parameter budget.
    pub fn validate_structure(&self) -> Result<()> {
        if self.bottleneck_channels != BOTTLENECK_CHANNELS {
            return Err(Error::Config(format!(
                "bottleneck must have {BOTTLENECK_CHANNELS} channels, got {}",
                self.bottleneck_channels
            )));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        if self.convs_per_block == 0 {
            return Err(Error::Config("blocks need at least one convolution".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.level_widths.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!("leaky slope {} outside [0, 1]", self.leaky_slope)));
        }
        if self.bn_epsilon <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("batch-norm epsilon must be > 0 and momentum in [0, 1]".into()));
        }
        Ok(())
    }

    /// Number of trainable values (conv kernels, biases, batch-norm affine terms).
    pub fn parameter_count(&self) -> usize {
        Layout::plan(self).specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Stable 64-bit hash of every field.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.to_record().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub(crate) fn to_record(&self) -> Vec<f64> {
        vec![
            self.in_channels as f64,
            self.level_widths[0] as f64,
            self.level_widths[1] as f64,
            self.bottleneck_channels as f64,
            self.convs_per_block as f64,
            self.kernel_size as f64,
            self.out_channels as f64,
            self.leaky_slope,
            self.bn_epsilon,
            self.bn_momentum,
        ]
    }

    pub(crate) fn from_record(v: &[f64]) -> Result<Self> {
        if v.len() != 10 {
            return Err(Error::CorruptCheckpoint(format!(
                "architecture record has {} fields, expected 10",
                v.len()
            )));
        }
        let u = |x: f64| x as usize;
        Ok(ArchitectureConfig {
            in_channels: u(v[0]),
            level_widths: [u(v[1]), u(v[2])],
            bottleneck_channels: u(v[3]),
            convs_per_block: u(v[4]),
            kernel_size: u(v[5]),
            out_channels: u(v[6]),
            leaky_slope: v[7],
            bn_epsilon: v[8],
            bn_momentum: v[9],
        })
    }
}

impl fmt::Display for ArchitectureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "in={} widths={:?} bottleneck={} convs/block={} k={} out={}",
            self.in_channels,
            self.level_widths,
            self.bottleneck_channels,
            self.convs_per_block,
            self.kernel_size,
            self.out_channels
        )
    }
}

/// A named trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Running mean/variance of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    HeNormal { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Clone, Copy, Debug)]
struct ConvRef {
    kernel: usize,
    bias: usize,
    spec: PaddingSpec,
}

#[derive(Clone, Copy, Debug)]
struct BnRef {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Clone, Debug)]
struct Block {
    /// The stem unit has no normalization in front of its conv.
    units: Vec<(Option<BnRef>, ConvRef)>,
    shortcut: Option<ConvRef>,
}

#[derive(Clone, Debug)]
struct Layout {
    specs: Vec<ParamSpec>,
    bn_names: Vec<(String, usize)>,
    enc: [Block; 2],
    bottleneck: Block,
    dec: [Block; 2],
    head_bn: BnRef,
    head: ConvRef,
}

struct Planner {
    specs: Vec<ParamSpec>,
    bn_names: Vec<(String, usize)>,
    k: usize,
}

impl Planner {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) -> ConvRef {
        let kernel = self.param(
            format!("{prefix}.kernel"),
            vec![k, k, k, cin, cout],
            Init::HeNormal { fan_in: k * k * k * cin },
        );
        let bias = self.param(format!("{prefix}.bias"), vec![cout], Init::Zeros);
        let spec = if k == 1 {
            PaddingSpec::none()
        } else {
            PaddingSpec::annulus([k, k, k])
        };
        ConvRef { kernel, bias, spec }
    }

    fn bn(&mut self, prefix: &str, c: usize) -> BnRef {
        let gamma = self.param(format!("{prefix}.gamma"), vec![c], Init::Ones);
        let beta = self.param(format!("{prefix}.beta"), vec![c], Init::Zeros);
        self.bn_names.push((prefix.to_string(), c));
        BnRef {
            gamma,
            beta,
            stats: self.bn_names.len() - 1,
        }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, convs: usize, stem: bool) -> Block {
        let mut units = Vec::with_capacity(convs);
        let mut c = cin;
        for u in 0..convs {
            let bn = (!(stem && u == 0)).then(|| self.bn(&format!("{name}.unit{}.bn", u + 1), c));
            let conv = self.conv(&format!("{name}.unit{}.conv", u + 1), c, cout, self.k);
            units.push((bn, conv));
            c = cout;
        }
        let shortcut = (cin != cout).then(|| self.conv(&format!("{name}.shortcut"), cin, cout, 1));
        Block { units, shortcut }
    }
}

impl Layout {
    fn plan(cfg: &ArchitectureConfig) -> Layout {
        let mut p = Planner {
            specs: Vec::new(),
            bn_names: Vec::new(),
            k: cfg.kernel_size,
        };
        let [w1, w2] = cfg.level_widths;
        let wb = cfg.bottleneck_channels;
        let n = cfg.convs_per_block;
        let enc1 = p.block("enc1", cfg.in_channels, w1, n, true);
        let enc2 = p.block("enc2", w1, w2, n, false);
        let bottleneck = p.block("bottleneck", w2, wb, n, false);
        let dec2 = p.block("dec2", wb + w2, w2, n, false);
        let dec1 = p.block("dec1", w2 + w1, w1, n, false);
        let head_bn = p.bn("head.bn", w1);
        let head = p.conv("head.conv", w1, cfg.out_channels, 1);
        Layout {
            specs: p.specs,
            bn_names: p.bn_names,
            enc: [enc1, enc2],
            bottleneck,
            dec: [dec1, dec2],
            head_bn,
            head,
        }
    }
}

/// Trainable parameters, running statistics and the architecture they belong to.
#[derive(Clone, Debug)]
pub struct ModelParameters<T> {
    config: ArchitectureConfig,
    layout: Layout,
    params: Vec<Parameter<T>>,
    running: Vec<RunningStats<T>>,
}

/// One recorded forward evaluation.
pub struct ForwardPass<T> {
    pub graph: Graph<T>,
    pub input: Var,
    pub output: Var,
    pub bottleneck: Var,
    /// Tape handle of each parameter, in parameter order.
    pub params: Vec<Var>,
    /// Batch statistics of each batch-norm layer (train mode only).
    pub batch_stats: Vec<BatchStats>,
}

/// Create and initialize parameters: He-normal kernels, zero biases, unit
/// gamma, zero beta, running mean 0 and variance 1.
pub fn build_model<T: Scalar>(config: &ArchitectureConfig, seed: u64) -> Result<ModelParameters<T>> {
    config.validate_structure()?;
    let count = config.parameter_count();
    let (min, max) = PARAMETER_BUDGET;
    if !(min..=max).contains(&count) {
        return Err(Error::ParameterBudget { count, min, max });
    }
    let layout = Layout::plan(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = layout
        .specs
        .iter()
        .map(|s| {
            let value = match s.init {
                Init::HeNormal { fan_in } => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    Tensor::from_fn(s.shape.clone(), |_| T::lit(normal.sample(&mut rng)))
                }
                Init::Zeros => Tensor::zeros(s.shape.clone()),
                Init::Ones => Tensor::full(s.shape.clone(), T::one()),
            };
            Parameter {
                name: s.name.clone(),
                grad: Tensor::zeros(s.shape.clone()),
                value,
            }
        })
        .collect();
    let running = layout
        .bn_names
        .iter()
        .map(|(name, c)| RunningStats {
            name: name.clone(),
            mean: vec![T::zero(); *c],
            var: vec![T::one(); *c],
        })
        .collect();
    Ok(ModelParameters {
        config: config.clone(),
        layout,
        params,
        running,
    })
}

impl<T: Scalar> ModelParameters<T> {
    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> u64 {
        self.config.fingerprint()
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.running
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Convert every stored value to another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            running: self
                .running
                .iter()
                .map(|r| RunningStats {
                    name: r.name.clone(),
                    mean: r.mean.iter().map(|v| U::lit(v.as_f64())).collect(),
                    var: r.var.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Replace parameter values (same order and shapes as [`Self::params`]).
    pub fn set_values(&mut self, values: &[Tensor<T>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::invalid("parameter list length mismatch"));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::invalid(format!("shape mismatch for {}", p.name)));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let r = shape.len();
        if !(4..=5).contains(&r) {
            return Err(Error::invalid(format!(
                "model input must be (A,T,R,C) or (N,A,T,R,C), got {shape:?}"
            )));
        }
        if shape[r - 1] != self.config.in_channels {
            return Err(Error::invalid(format!(
                "model expects {} input channels, got {}",
                self.config.in_channels,
                shape[r - 1]
            )));
        }
        if shape[r - 4..r - 1].iter().any(|e| e % 4 != 0) {
            return Err(Error::invalid(format!(
                "spatial extents {:?} must be divisible by 4 for two pooling levels",
                &shape[r - 4..r - 1]
            )));
        }
        Ok(())
    }

    /// Record a full forward evaluation on a fresh tape.
    pub fn forward_graph(&self, input: &Tensor<T>, mode: Mode) -> Result<ForwardPass<T>> {
        self.forward_graph_on(Graph::new(), input, mode)
    }

    /// Like [`Self::forward_graph`] but records onto the supplied tape.
    pub fn forward_graph_on(&self, mut g: Graph<T>, input: &Tensor<T>, mode: Mode) -> Result<ForwardPass<T>> {
        self.check_input(input.shape())?;
        let x = g.constant(input.clone());
        let params: Vec<Var> = self.params.iter().map(|p| g.leaf(p.value.clone())).collect();
        let mut ctx = Ctx {
            g,
            params: &params,
            model: self,
            mode,
            stats: Vec::new(),
            slope: T::lit(self.config.leaky_slope),
        };
        let l = &self.layout;
        let skip1 = ctx.block(&l.enc[0], x)?;
        let p1 = ctx.g.max_pool3d(skip1)?;
        let skip2 = ctx.block(&l.enc[1], p1)?;
        let p2 = ctx.g.max_pool3d(skip2)?;
        let bottleneck = ctx.block(&l.bottleneck, p2)?;
        let u2 = ctx.g.upsample3d(bottleneck)?;
        let c2 = ctx.g.concat_channels(u2, skip2)?;
        let d2 = ctx.block(&l.dec[1], c2)?;
        let u1 = ctx.g.upsample3d(d2)?;
        let c1 = ctx.g.concat_channels(u1, skip1)?;
        let d1 = ctx.block(&l.dec[0], c1)?;
        let h = ctx.bn(l.head_bn, d1)?;
        let h = ctx.g.leaky_relu(h, ctx.slope);
        let output = ctx.conv(l.head, h)?;
        let Ctx { g, stats, .. } = ctx;
        Ok(ForwardPass {
            graph: g,
            input: x,
            output,
            bottleneck,
            params,
            batch_stats: stats,
        })
    }

    /// Inference-mode prediction; returns the output tensor only.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let pass = self.forward_graph(input, Mode::Inference)?;
        let ForwardPass { graph, output, .. } = pass;
        Ok(graph.value(output).clone())
    }

    /// Fold batch statistics into the running averages:
    /// `running = (1 - m) * running + m * batch` with the unbiased batch variance.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        if stats.len() != self.running.len() {
            return Err(Error::invalid("batch statistics do not match batch-norm layers"));
        }
        let m = self.config.bn_momentum;
        for (r, s) in self.running.iter_mut().zip(stats) {
            let unbias = if s.count > 1 {
                s.count as f64 / (s.count - 1) as f64
            } else {
                1.0
            };
            for c in 0..r.mean.len() {
                r.mean[c] = T::lit((1.0 - m) * r.mean[c].as_f64() + m * s.mean[c]);
                r.var[c] = T::lit((1.0 - m) * r.var[c].as_f64() + m * s.variance[c] * unbias);
            }
        }
        Ok(())
    }
}

struct Ctx<'a, T: Scalar> {
    g: Graph<T>,
    params: &'a [Var],
    model: &'a ModelParameters<T>,
    mode: Mode,
    stats: Vec<BatchStats>,
    slope: T,
}

impl<T: Scalar> Ctx<'_, T> {
    fn bn(&mut self, r: BnRef, x: Var) -> Result<Var> {
        let eps = self.model.config.bn_epsilon;
        let (gamma, beta) = (self.params[r.gamma], self.params[r.beta]);
        let mode = match self.mode {
            Mode::Train => BnMode::Train,
            Mode::Inference => {
                let rs = &self.model.running[r.stats];
                BnMode::Inference {
                    running_mean: &rs.mean,
                    running_var: &rs.var,
                }
            }
        };
        let (y, stats) = self.g.batch_norm(x, gamma, beta, mode, eps)?;
        if let Some(s) = stats {
            self.stats.push(s);
        }
        Ok(y)
    }

    fn conv(&mut self, r: ConvRef, x: Var) -> Result<Var> {
        self.g.conv3d(x, self.params[r.kernel], self.params[r.bias], r.spec)
    }

    fn block(&mut self, b: &Block, x: Var) -> Result<Var> {
        let mut h = x;
        for &(bn, conv) in &b.units {
            let a = match bn {
                Some(bn) => {
                    let n = self.bn(bn, h)?;
                    self.g.leaky_relu(n, self.slope)
                }
                None => h,
            };
            h = self.conv(conv, a)?;
        }
        let shortcut = match b.shortcut {
            Some(proj) => self.conv(proj, x)?,
            None => x,
        };
        self.g.add(h, shortcut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_input(n: usize) -> Tensor<f64> {
        let grids: Vec<Tensor<f64>> = (0..n)
            .map(|i| {
                assemble_input_on([0.3 + 0.5 * i as f64, 1.0, 1.7], [4, 8, 8])
                    .unwrap()
                    .tensor
                    .cast()
            })
            .collect();
        Tensor::stack(&grids).unwrap()
    }

    #[test]
    fn default_parameter_count_is_within_budget() {
        let cfg = ArchitectureConfig::default();
        let count = cfg.parameter_count();
        assert!((40_000..=65_000).contains(&count), "{count}");
        let m = build_model::<f32>(&cfg, 1).unwrap();
        assert_eq!(m.parameter_count(), count);
    }

    #[test]
    fn budget_violation_names_the_count() {
        let cfg = ArchitectureConfig {
            level_widths: [4, 4],
            ..Default::default()
        };
        match build_model::<f32>(&cfg, 0) {
            Err(Error::ParameterBudget { count, .. }) => assert_eq!(count, cfg.parameter_count()),
            other => panic!("expected budget error, got {other:?}"),
        }
        let cfg = ArchitectureConfig {
            bottleneck_channels: 16,
            ..Default::default()
        };
        assert!(matches!(build_model::<f32>(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let cfg = ArchitectureConfig::default();
        let a = build_model::<f32>(&cfg, 7).unwrap();
        let b = build_model::<f32>(&cfg, 7).unwrap();
        let c = build_model::<f32>(&cfg, 8).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            let bits_a: Vec<u32> = pa.value.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = pb.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{}", pa.name);
        }
        let kernel = a.params().iter().position(|p| p.value.shape().len() == 5).unwrap();
        assert_ne!(a.params()[kernel].value, c.params()[kernel].value);
    }

    #[test]
    fn parameter_names_are_unique() {
        let m = build_model::<f32>(&ArchitectureConfig::default(), 0).unwrap();
        let mut names: Vec<&str> = m.params().iter().map(|p| p.name.as_str()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(names.contains(&"enc1.unit1.conv.kernel"));
    }

    #[test]
    fn he_normal_variance_matches_fan_in() {
        let m = build_model::<f64>(&ArchitectureConfig::default(), 3).unwrap();
        for p in m.params().iter().filter(|p| p.name.ends_with("kernel") && p.value.len() >= 10_000) {
            let s = p.value.shape();
            let fan_in = s[0] * s[1] * s[2] * s[3];
            let n = p.value.len() as f64;
            let mean = p.value.sum() / n;
            let var = p.value.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let want = 2.0 / fan_in as f64;
            assert!((var / want - 1.0).abs() < 0.2, "{}: {var} vs {want}", p.name);
        }
    }

    #[test]
    fn shape_chain_on_reduced_grid() {
        let m = build_model::<f64>(&ArchitectureConfig::default(), 0).unwrap();
        let pass = m.forward_graph(&small_input(2), Mode::Train).unwrap();
        assert_eq!(pass.graph.value(pass.bottleneck).shape(), &[2, 1, 2, 2, 24]);
        assert_eq!(pass.graph.value(pass.output).shape(), &[2, 4, 8, 8, 6]);
        assert_eq!(pass.batch_stats.len(), m.running_stats().len());
    }

    #[test]
    fn rejects_wrong_inputs() {
        let m = build_model::<f64>(&ArchitectureConfig::default(), 0).unwrap();
        assert!(m.predict(&Tensor::zeros(vec![4, 8, 8, 5])).is_err());
        assert!(m.predict(&Tensor::zeros(vec![4, 6, 8, 7])).is_err());
        assert!(m.predict(&Tensor::zeros(vec![8, 7])).is_err());
    }

    #[test]
    fn inference_is_deterministic() {
        let m = build_model::<f64>(&ArchitectureConfig::default(), 5).unwrap();
        let x = small_input(1);
        let a = m.predict(&x).unwrap();
        let b = m.predict(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut m = build_model::<f64>(&ArchitectureConfig::default(), 5).unwrap();
        let pass = m.forward_graph(&small_input(2), Mode::Train).unwrap();
        let s = pass.batch_stats.clone();
        m.update_running_stats(&s).unwrap();
        let r = &m.running_stats()[0];
        let unbias = s[0].count as f64 / (s[0].count - 1) as f64;
        assert!((r.mean[0] - 0.1 * s[0].mean[0]).abs() < 1e-15);
        assert!((r.var[0] - (0.9 + 0.1 * s[0].variance[0] * unbias)).abs() < 1e-15);
    }
}
