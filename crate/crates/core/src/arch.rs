//! Layer sequences, representation cut points and the three evaluation
//! model variants.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::nn::{conv_output_hw, pool_output_hw, ConvParams, LrnParams};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    Convolution {
        filters: usize,
        kernel: usize,
        params: ConvParams,
    },
    Relu,
    Normalization(LrnParams),
    MaxPooling {
        window: usize,
        stride: usize,
    },
    FullyConnected {
        outputs: usize,
    },
    Dropout,
    Softmax,
    Output,
}

impl LayerKind {
    pub fn is_learned(&self) -> bool {
        matches!(self, LayerKind::Convolution { .. } | LayerKind::FullyConnected { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Convolution { .. } => "convolution",
            LayerKind::Relu => "relu",
            LayerKind::Normalization(_) => "normalization",
            LayerKind::MaxPooling { .. } => "maxPooling",
            LayerKind::FullyConnected { .. } => "fullyConnected",
            LayerKind::Dropout => "dropout",
            LayerKind::Softmax => "softmax",
            LayerKind::Output => "output",
        }
    }

    /// Kinds that can end a representation block.
    fn can_end_block(&self) -> bool {
        matches!(
            self,
            LayerKind::Convolution { .. }
                | LayerKind::Relu
                | LayerKind::Normalization(_)
                | LayerKind::MaxPooling { .. }
                | LayerKind::FullyConnected { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    /// 1-based ordinal among convolution and fully-connected layers.
    pub learned_ordinal: Option<usize>,
}

/// An ordered layer list plus the cut points where features are read out.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    name: String,
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    /// `cuts[n - 1]` is the layer index after which representation `n` is read.
    cuts: Vec<usize>,
    /// Activation shape after each layer (index 0 is the input).
    shapes: Vec<Vec<usize>>,
}

impl ArchitectureSpec {
    /// Builds a spec from a layer sequence starting with `Input`.
    ///
    /// Each learned layer opens a representation block that extends over the
    /// following relu/normalization/pooling layers; the block's cut is its last
    /// such layer. Dropout, softmax and output never end a block.
    pub fn new(name: impl Into<String>, input_shape: [usize; 3], kinds: Vec<LayerKind>) -> Result<Self> {
        if kinds.first() != Some(&LayerKind::Input) {
            return Err(Error::config("layer 0 must be the input layer"));
        }
        if input_shape.iter().any(|&d| d == 0) {
            return Err(Error::config("input shape must be positive"));
        }
        let mut layers = Vec::with_capacity(kinds.len());
        let mut ordinal = 0;
        for (index, kind) in kinds.into_iter().enumerate() {
            if index > 0 && kind == LayerKind::Input {
                return Err(Error::config(format!("layer {index}: input layer must come first")));
            }
            let learned_ordinal = if kind.is_learned() {
                ordinal += 1;
                Some(ordinal)
            } else {
                None
            };
            layers.push(LayerSpec {
                index,
                kind,
                learned_ordinal,
            });
        }
        if ordinal == 0 {
            return Err(Error::config("architecture has no learned layers"));
        }

        let mut cuts = Vec::with_capacity(ordinal);
        let mut open: Option<usize> = None;
        for layer in &layers {
            if layer.kind.is_learned() {
                if let Some(cut) = open.take() {
                    cuts.push(cut);
                }
                open = Some(layer.index);
            } else if let Some(cut) = open.as_mut() {
                // A block only grows while its layers are contiguous.
                if layer.kind.can_end_block() && *cut + 1 == layer.index {
                    *cut = layer.index;
                }
            }
        }
        cuts.extend(open);

        let shapes = propagate_shapes(input_shape, &layers)?;
        Ok(ArchitectureSpec {
            name: name.into(),
            input_shape,
            layers,
            cuts,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Number of representation layers (`N`).
    pub fn depth(&self) -> usize {
        self.cuts.len()
    }

    pub fn representation_cuts(&self) -> &[usize] {
        &self.cuts
    }

    /// Layer index after which representation `n` (1-based) is read.
    pub fn cut(&self, n: usize) -> Result<usize> {
        self.check_n(n)?;
        Ok(self.cuts[n - 1])
    }

    pub fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.depth() {
            return Err(Error::config(format!(
                "representation layer {n} outside [1, {}] for {}",
                self.depth(),
                self.name
            )));
        }
        Ok(())
    }

    /// Activation shape right after `layer_index`.
    pub fn activation_shape(&self, layer_index: usize) -> &[usize] {
        &self.shapes[layer_index]
    }

    pub fn feature_dim(&self, n: usize) -> Result<usize> {
        Ok(self.activation_shape(self.cut(n)?).iter().product())
    }

    pub fn feature_dims(&self) -> Vec<usize> {
        (1..=self.depth())
            .map(|n| self.feature_dim(n).expect("n within range"))
            .collect()
    }

    pub fn learned_layer(&self, ordinal: usize) -> Result<&LayerSpec> {
        self.layers
            .iter()
            .find(|l| l.learned_ordinal == Some(ordinal))
            .ok_or_else(|| Error::config(format!("no learned layer with ordinal {ordinal}")))
    }

    /// `conv3`, `fc7`, ...
    pub fn layer_name(&self, ordinal: usize) -> Result<String> {
        let layer = self.learned_layer(ordinal)?;
        Ok(match layer.kind {
            LayerKind::Convolution { .. } => format!("conv{ordinal}"),
            _ => format!("fc{ordinal}"),
        })
    }

    /// Expected `(weights, bias)` shapes of a learned layer.
    pub fn weight_shapes(&self, ordinal: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let layer = self.learned_layer(ordinal)?;
        let input = &self.shapes[layer.index - 1];
        match layer.kind {
            LayerKind::Convolution {
                filters,
                kernel,
                params,
            } => {
                let cin = input[2];
                Ok((vec![filters, kernel, kernel, cin / params.groups], vec![filters]))
            }
            LayerKind::FullyConnected { outputs } => {
                Ok((vec![outputs, input.iter().product()], vec![outputs]))
            }
            _ => unreachable!("learned layers are conv or fc"),
        }
    }

    /// Layer index range `(start, end]` of representation block `n`.
    pub fn block_range(&self, n: usize) -> Result<(usize, usize)> {
        let end = self.cut(n)?;
        let start = if n == 1 { 0 } else { self.cuts[n - 2] };
        Ok((start, end))
    }

    /// Looks up a built-in architecture by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "alexnet" => Ok(build_alexnet()),
            "alexnet-mini" => Ok(build_alexnet_mini()),
            "two-block" => Ok(build_two_block()),
            other => Err(Error::config(format!(
                "unknown architecture '{other}' (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }
}

pub const PRESETS: &[&str] = &["alexnet", "alexnet-mini", "two-block"];

fn propagate_shapes(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
    let mut cur = input.to_vec();
    for layer in layers {
        let at = |e: Error| match e {
            Error::Config(m) => Error::Config(format!("layer {} ({}): {m}", layer.index, layer.kind.name())),
            other => other,
        };
        cur = match &layer.kind {
            LayerKind::Input => cur,
            LayerKind::Convolution {
                filters,
                kernel,
                params,
            } => {
                let &[h, w, c] = cur.as_slice() else {
                    return Err(at(Error::config("convolution needs a rank-3 input")));
                };
                if params.groups == 0 || c % params.groups != 0 || filters % params.groups != 0 {
                    return Err(at(Error::config(format!(
                        "{c} input channels / {filters} filters not divisible by {} groups",
                        params.groups
                    ))));
                }
                let (oh, ow) = conv_output_hw(h, w, *kernel, *kernel, *params).map_err(at)?;
                vec![oh, ow, *filters]
            }
            LayerKind::Normalization(p) => {
                p.validate().map_err(at)?;
                if cur.len() != 3 {
                    return Err(at(Error::config("normalization needs a rank-3 input")));
                }
                cur
            }
            LayerKind::MaxPooling { window, stride } => {
                let &[h, w, c] = cur.as_slice() else {
                    return Err(at(Error::config("pooling needs a rank-3 input")));
                };
                let (oh, ow) = pool_output_hw(h, w, *window, *stride).map_err(at)?;
                vec![oh, ow, c]
            }
            LayerKind::FullyConnected { outputs } => vec![*outputs],
            LayerKind::Relu | LayerKind::Dropout | LayerKind::Softmax | LayerKind::Output => cur,
        };
        shapes.push(cur.clone());
    }
    Ok(shapes)
}

fn conv(filters: usize, kernel: usize, stride: usize, padding: usize, groups: usize) -> LayerKind {
    LayerKind::Convolution {
        filters,
        kernel,
        params: ConvParams::new(stride, padding, groups),
    }
}

fn pool() -> LayerKind {
    LayerKind::MaxPooling { window: 3, stride: 2 }
}

fn norm() -> LayerKind {
    LayerKind::Normalization(LrnParams::ALEXNET)
}

fn fc(outputs: usize) -> LayerKind {
    LayerKind::FullyConnected { outputs }
}

/// The 25-layer sequence shared by the AlexNet presets, parameterized by the
/// learned layers so the scaled variant keeps the same structure.
fn alexnet_like(name: &str, input: [usize; 3], c: [LayerKind; 5], f: [usize; 3]) -> ArchitectureSpec {
    use LayerKind::*;
    let [c1, c2, c3, c4, c5] = c;
    let kinds = vec![
        Input,
        c1,
        Relu,
        norm(),
        pool(),
        c2,
        Relu,
        norm(),
        pool(),
        c3,
        Relu,
        c4,
        Relu,
        c5,
        Relu,
        pool(),
        fc(f[0]),
        Relu,
        Dropout,
        fc(f[1]),
        Relu,
        Dropout,
        fc(f[2]),
        Softmax,
        Output,
    ];
    ArchitectureSpec::new(name, input, kinds).expect("preset architecture is consistent")
}

/// AlexNet with the dual-stream grouping on conv2, conv4 and conv5.
pub fn build_alexnet() -> ArchitectureSpec {
    alexnet_like(
        "alexnet",
        [227, 227, 3],
        [
            conv(96, 11, 4, 0, 1),
            conv(256, 5, 1, 2, 2),
            conv(384, 3, 1, 1, 1),
            conv(384, 3, 1, 1, 2),
            conv(256, 3, 1, 1, 2),
        ],
        [4096, 4096, 1000],
    )
}

/// Same 25-layer structure on a 32×32 input with narrow layers.
pub fn build_alexnet_mini() -> ArchitectureSpec {
    alexnet_like(
        "alexnet-mini",
        [32, 32, 3],
        [
            conv(16, 5, 1, 0, 1),
            conv(32, 5, 1, 2, 2),
            conv(48, 3, 1, 1, 1),
            conv(48, 3, 1, 1, 2),
            conv(32, 3, 1, 1, 2),
        ],
        [64, 64, 10],
    )
}

/// Two convolution/relu/normalization/pooling blocks on a 32×32 input.
pub fn build_two_block() -> ArchitectureSpec {
    use LayerKind::*;
    ArchitectureSpec::new(
        "two-block",
        [32, 32, 3],
        vec![
            Input,
            conv(8, 5, 1, 0, 1),
            Relu,
            norm(),
            pool(),
            conv(16, 3, 1, 1, 2),
            Relu,
            norm(),
            pool(),
        ],
    )
    .expect("preset architecture is consistent")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariantTag {
    /// `A_{1,n}`: first `n` learned layers pretrained.
    PretrainedPrefix,
    /// `A_{1,n-1} R_n`: pretrained prefix with a random `n`-th layer.
    Hybrid,
    /// `R_{1,n}`: first `n` learned layers random.
    RandomBaseline,
}

impl VariantTag {
    pub const ALL: [VariantTag; 3] = [
        VariantTag::PretrainedPrefix,
        VariantTag::Hybrid,
        VariantTag::RandomBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::PretrainedPrefix => "pretrained_prefix",
            VariantTag::Hybrid => "hybrid",
            VariantTag::RandomBaseline => "random_baseline",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            VariantTag::PretrainedPrefix => 1,
            VariantTag::Hybrid => 2,
            VariantTag::RandomBaseline => 3,
        }
    }

    pub fn needs_pretrained(self) -> bool {
        !matches!(self, VariantTag::RandomBaseline)
    }

    pub fn needs_random(self) -> bool {
        !matches!(self, VariantTag::PretrainedPrefix)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrained_prefix" | "pretrained" | "A" => Ok(VariantTag::PretrainedPrefix),
            "hybrid" | "AR" => Ok(VariantTag::Hybrid),
            "random_baseline" | "random" | "R" => Ok(VariantTag::RandomBaseline),
            other => Err(Error::config(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelVariant {
    pub tag: VariantTag,
    pub n: usize,
}

impl ModelVariant {
    pub fn new(tag: VariantTag, n: usize, arch: &ArchitectureSpec) -> Result<Self> {
        arch.check_n(n)?;
        Ok(ModelVariant { tag, n })
    }

    /// Short mathematical label such as `A_{1,2}R_3`.
    pub fn label(&self) -> String {
        let n = self.n;
        match self.tag {
            VariantTag::PretrainedPrefix => format!("A_{{1,{n}}}"),
            VariantTag::RandomBaseline => format!("R_{{1,{n}}}"),
            VariantTag::Hybrid if n == 1 => "R_1".to_string(),
            VariantTag::Hybrid => format!("A_{{1,{}}}R_{n}", n - 1),
        }
    }
}
