//! Declarative architecture descriptions (`*.gknet` files), the builder that
//! turns them into a [`Network`], and the built-in miniature presets.
//!
//! The format is line oriented: one descriptor per line, whitespace separated
//! tokens, `#` starts a comment. The grammar is listed in docs/formats.md.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::blocks::bottleneck_width;
use crate::nn::{Activation, InceptionWidths, Network};
use crate::tensor::window_out;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Image { channels: usize, resolution: usize },
    Vector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        activation: Activation,
    },
    MaxPool { size: usize, stride: usize },
    AvgPool { size: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
    Activation(Activation),
    Inception(InceptionWidths),
    Residual { channels: usize },
    DenseBlock { repeats: usize, growth: usize },
    Softmax { classes: usize },
}

impl LayerSpec {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::GlobalAvgPool => "globalavgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Activation(_) => "activation",
            LayerSpec::Inception(_) => "inception",
            LayerSpec::Residual { .. } => "residual",
            LayerSpec::DenseBlock { .. } => "denseblock",
            LayerSpec::Softmax { .. } => "softmax",
        }
    }

    fn render(&self) -> String {
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                pad,
                activation,
            } => format!("conv {filters} {kernel} {stride} {pad} {activation}"),
            LayerSpec::MaxPool { size, stride } => format!("maxpool {size} {stride}"),
            LayerSpec::AvgPool { size, stride } => format!("avgpool {size} {stride}"),
            LayerSpec::GlobalAvgPool => "globalavgpool".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { units, activation } => format!("dense {units} {activation}"),
            LayerSpec::Dropout { rate } => format!("dropout {rate}"),
            LayerSpec::Activation(a) => format!("activation {a}"),
            LayerSpec::Inception(w) => format!(
                "inception {} {} {} {} {} {}",
                w.b1, w.b3_reduce, w.b3, w.b5_reduce, w.b5, w.pool_proj
            ),
            LayerSpec::Residual { channels } => format!("residual {channels}"),
            LayerSpec::DenseBlock { repeats, growth } => format!("denseblock {repeats} {growth}"),
            LayerSpec::Softmax { classes } => format!("softmax {classes}"),
        }
    }

    /// Per-sample output shape for the given input shape.
    fn output_shape(&self, shape: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let image = |what: &str| -> std::result::Result<[usize; 3], String> {
            match shape {
                [c, h, w] => Ok([*c, *h, *w]),
                _ => Err(format!("{what} needs an image input, got shape {shape:?}")),
            }
        };
        let positive = |vals: &[usize]| -> std::result::Result<(), String> {
            if vals.contains(&0) {
                Err(format!("{} arguments must be positive", self.keyword()))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                pad,
                ..
            } => {
                positive(&[filters, kernel, stride])?;
                check_kernel(kernel)?;
                let [_, h, w] = image("conv")?;
                let (hp, wp) = (h + 2 * pad, w + 2 * pad);
                if kernel > hp || kernel > wp {
                    return Err(format!("kernel {kernel} larger than padded input {hp}x{wp}"));
                }
                Ok(vec![filters, window_out(hp, kernel, stride), window_out(wp, kernel, stride)])
            }
            LayerSpec::MaxPool { size, stride } | LayerSpec::AvgPool { size, stride } => {
                positive(&[size, stride])?;
                let [c, h, w] = image(self.keyword())?;
                if size > h || size > w {
                    return Err(format!("pool window {size} larger than input {h}x{w}"));
                }
                Ok(vec![c, window_out(h, size, stride), window_out(w, size, stride)])
            }
            LayerSpec::GlobalAvgPool => Ok(vec![image("globalavgpool")?[0]]),
            LayerSpec::Flatten => Ok(vec![shape.iter().product()]),
            LayerSpec::Dense { units, .. } => {
                positive(&[units])?;
                Ok(vec![units])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(shape.to_vec())
            }
            LayerSpec::Activation(_) => Ok(shape.to_vec()),
            LayerSpec::Inception(widths) => {
                widths.validate().map_err(|e| e.to_string())?;
                let [_, h, w] = image("inception")?;
                if h < 3 || w < 3 {
                    return Err(format!("inception needs at least 3x3 input, got {h}x{w}"));
                }
                Ok(vec![widths.output_channels(), h, w])
            }
            LayerSpec::Residual { channels } => {
                positive(&[channels])?;
                let [c, h, w] = image("residual")?;
                if c != channels {
                    return Err(format!("residual declares {channels} channels, input has {c}"));
                }
                if h < 3 || w < 3 {
                    return Err(format!("residual needs at least 3x3 input, got {h}x{w}"));
                }
                Ok(vec![c, h, w])
            }
            LayerSpec::DenseBlock { repeats, growth } => {
                positive(&[growth])?;
                let [c, h, w] = image("denseblock")?;
                if repeats > 0 && (h < 3 || w < 3) {
                    return Err(format!("dense block needs at least 3x3 input, got {h}x{w}"));
                }
                Ok(vec![c + repeats * growth, h, w])
            }
            LayerSpec::Softmax { classes } => {
                if classes < 2 {
                    return Err("softmax needs at least 2 classes".into());
                }
                Ok(vec![classes])
            }
        }
    }

    /// Number of trainable scalars given the per-sample input shape.
    fn param_count(&self, shape: &[usize]) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        match *self {
            LayerSpec::Conv { filters, kernel, .. } => conv(shape[0], filters, kernel),
            LayerSpec::Dense { units, .. } | LayerSpec::Softmax { classes: units } => {
                shape.iter().product::<usize>() * units + units
            }
            LayerSpec::Inception(w) => {
                let c = shape[0];
                conv(c, w.b1, 1)
                    + conv(c, w.b3_reduce, 1)
                    + conv(w.b3_reduce, w.b3, 3)
                    + conv(c, w.b5_reduce, 1)
                    + conv(w.b5_reduce, w.b5, 5)
                    + conv(c, w.pool_proj, 1)
            }
            LayerSpec::Residual { channels } => 2 * conv(channels, channels, 3),
            LayerSpec::DenseBlock { repeats, growth } => (0..repeats)
                .map(|i| {
                    let cin = shape[0] + i * growth;
                    let width = bottleneck_width(growth);
                    conv(cin, width, 1) + conv(width, growth, 3)
                })
                .sum(),
            _ => 0,
        }
    }
}

fn check_kernel(kernel: usize) -> std::result::Result<(), String> {
    if matches!(kernel, 1 | 3 | 5 | 7) {
        Ok(())
    } else {
        Err(format!("kernel size {kernel} not supported (use 1, 3, 5 or 7)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub input: Input,
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// Descriptor lines including the input line.
    pub fn descriptor_count(&self) -> usize {
        self.layers.len() + 1
    }

    /// Validates the layer chain and returns the per-sample shape after every
    /// layer (index 0 is the input shape).
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        self.shape_chain_inner().map_err(|(i, msg)| match self.layers.get(i) {
            Some(layer) => Error::Config(format!("layer {} ({}): {msg}", i + 1, layer.keyword())),
            None => Error::Config(msg),
        })
    }

    fn shape_chain_inner(&self) -> std::result::Result<Vec<Vec<usize>>, (usize, String)> {
        let mut shapes = vec![self.input.shape()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(shapes.last().unwrap()).map_err(|m| (i, m))?;
            shapes.push(next);
        }
        match self.layers.iter().position(|l| matches!(l, LayerSpec::Softmax { .. })) {
            None => {
                return Err((
                    self.layers.len().saturating_sub(1),
                    "model must end with a softmax layer".into(),
                ));
            }
            Some(pos) if pos + 1 != self.layers.len() => {
                return Err((pos, "softmax must be the final layer".into()));
            }
            Some(_) => {}
        }
        Ok(shapes)
    }

    pub fn class_count(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Softmax { classes }) => Some(*classes),
            _ => None,
        }
    }

    /// Total trainable scalars, computed from the descriptors alone.
    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.shape_chain()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| l.param_count(s))
            .sum())
    }

    /// Renders the config back to the text format; `parse_model_spec` of the
    /// result yields an equal config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(out, "name {}", self.name);
        }
        match self.input {
            Input::Image {
                channels,
                resolution,
            } => {
                let _ = writeln!(out, "input {channels} {resolution}");
            }
            Input::Vector(n) => {
                let _ = writeln!(out, "input {n}");
            }
        }
        for layer in &self.layers {
            out.push_str(&layer.render());
            out.push('\n');
        }
        out
    }

    /// Same architecture at a different input resolution.
    pub fn with_resolution(&self, resolution: usize) -> Result<ModelConfig> {
        let mut cfg = self.clone();
        match &mut cfg.input {
            Input::Image { resolution: r, .. } => *r = resolution,
            Input::Vector(_) => {
                return Err(Error::Config("vector-input models have no resolution".into()))
            }
        }
        cfg.shape_chain()?;
        Ok(cfg)
    }

    pub fn with_classes(&self, classes: usize) -> Result<ModelConfig> {
        let mut cfg = self.clone();
        match cfg.layers.last_mut() {
            Some(LayerSpec::Softmax { classes: k }) => *k = classes,
            _ => return Err(Error::Config("model must end with a softmax layer".into())),
        }
        cfg.shape_chain()?;
        Ok(cfg)
    }
}

fn parse_usize(tok: &str, what: &str) -> std::result::Result<usize, String> {
    tok.parse::<usize>()
        .map_err(|_| format!("{what} must be a non-negative integer, got `{tok}`"))
}

fn parse_descriptor(keyword: &str, args: &[&str]) -> std::result::Result<LayerSpec, String> {
    let arity = |n: usize| -> std::result::Result<(), String> {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("`{keyword}` takes {n} arguments, got {}", args.len()))
        }
    };
    let act = |tok: &str| tok.parse::<Activation>().map_err(|e| e.to_string());
    let spec = match keyword {
        "conv" => {
            arity(5)?;
            let kernel = parse_usize(args[1], "kernel")?;
            check_kernel(kernel)?;
            LayerSpec::Conv {
                filters: parse_usize(args[0], "filters")?,
                kernel,
                stride: parse_usize(args[2], "stride")?,
                pad: parse_usize(args[3], "pad")?,
                activation: act(args[4])?,
            }
        }
        "maxpool" | "avgpool" => {
            arity(2)?;
            let size = parse_usize(args[0], "size")?;
            let stride = parse_usize(args[1], "stride")?;
            if keyword == "maxpool" {
                LayerSpec::MaxPool { size, stride }
            } else {
                LayerSpec::AvgPool { size, stride }
            }
        }
        "globalavgpool" => {
            arity(0)?;
            LayerSpec::GlobalAvgPool
        }
        "flatten" => {
            arity(0)?;
            LayerSpec::Flatten
        }
        "dense" => {
            arity(2)?;
            LayerSpec::Dense {
                units: parse_usize(args[0], "units")?,
                activation: act(args[1])?,
            }
        }
        "dropout" => {
            arity(1)?;
            let rate: f64 = args[0]
                .parse()
                .map_err(|_| format!("dropout rate must be a number, got `{}`", args[0]))?;
            LayerSpec::Dropout { rate }
        }
        "activation" => {
            arity(1)?;
            LayerSpec::Activation(act(args[0])?)
        }
        "inception" => {
            arity(6)?;
            let v: Vec<usize> = args
                .iter()
                .map(|a| parse_usize(a, "branch width"))
                .collect::<std::result::Result<_, _>>()?;
            LayerSpec::Inception(InceptionWidths {
                b1: v[0],
                b3_reduce: v[1],
                b3: v[2],
                b5_reduce: v[3],
                b5: v[4],
                pool_proj: v[5],
            })
        }
        "residual" => {
            arity(1)?;
            LayerSpec::Residual {
                channels: parse_usize(args[0], "channels")?,
            }
        }
        "denseblock" => {
            arity(2)?;
            LayerSpec::DenseBlock {
                repeats: parse_usize(args[0], "repeats")?,
                growth: parse_usize(args[1], "growth")?,
            }
        }
        "softmax" => {
            arity(1)?;
            LayerSpec::Softmax {
                classes: parse_usize(args[0], "classes")?,
            }
        }
        other => return Err(format!("unknown layer kind `{other}`")),
    };
    Ok(spec)
}

/// Parses the line-oriented model format. Errors carry the 1-based line
/// number of the offending descriptor.
pub fn parse_model_spec(text: &str) -> Result<ModelConfig> {
    let mut name = String::new();
    let mut input = None;
    let mut layers = Vec::new();
    let mut layer_lines = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (keyword, args) = (tokens[0], &tokens[1..]);
        match keyword {
            "name" => {
                if input.is_some() || args.len() != 1 {
                    return Err(err("`name <identifier>` must precede `input`".into()));
                }
                name = args[0].to_string();
            }
            "input" => {
                if input.is_some() {
                    return Err(err("duplicate `input` line".into()));
                }
                let parsed = match args {
                    [n] => Input::Vector(parse_usize(n, "features").map_err(err)?),
                    [c, r] => Input::Image {
                        channels: parse_usize(c, "channels").map_err(err)?,
                        resolution: parse_usize(r, "resolution").map_err(err)?,
                    },
                    _ => return Err(err("`input` takes <features> or <channels> <resolution>".into())),
                };
                if parsed.shape().contains(&0) {
                    return Err(err("input extents must be positive".into()));
                }
                input = Some(parsed);
            }
            _ => {
                if input.is_none() {
                    return Err(err("the first descriptor must be `input`".into()));
                }
                layers.push(parse_descriptor(keyword, args).map_err(err)?);
                layer_lines.push(line_no);
            }
        }
    }
    let input = input.ok_or(Error::Parse {
        line: last_line.max(1),
        message: "missing `input` line".into(),
    })?;
    if layers.is_empty() {
        return Err(Error::Parse {
            line: last_line,
            message: "missing softmax".into(),
        });
    }
    let config = ModelConfig {
        name,
        input,
        layers,
    };
    config.shape_chain_inner().map_err(|(i, message)| Error::Parse {
        line: layer_lines.get(i).copied().unwrap_or(last_line),
        message,
    })?;
    Ok(config)
}

/// Builds a freshly initialized network from a validated config.
pub fn instantiate(config: &ModelConfig, seed: u64) -> Result<Network> {
    config.shape_chain()?;
    Network::build(config, seed)
}

pub const PRESET_NAMES: [&str; 3] = ["mini-inception", "mini-resnet", "mini-densenet"];

/// One of the built-in miniature architectures.
pub fn preset(name: &str, channels: usize, resolution: usize, classes: usize) -> Result<ModelConfig> {
    let body = match name {
        "mini-inception" => {
            "conv 16 3 2 1 relu\n\
             maxpool 2 2\n\
             inception 8 8 12 4 4 4\n\
             maxpool 2 2\n\
             inception 12 12 16 4 8 8\n\
             globalavgpool\n"
        }
        "mini-resnet" => {
            "conv 12 3 2 1 relu\n\
             maxpool 2 2\n\
             residual 12\n\
             residual 12\n\
             residual 12\n\
             globalavgpool\n"
        }
        "mini-densenet" => {
            "conv 16 3 2 1 relu\n\
             maxpool 2 2\n\
             denseblock 3 4\n\
             conv 16 1 1 0 relu\n\
             avgpool 2 2\n\
             denseblock 3 8\n\
             globalavgpool\n"
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let text = format!("name {name}\ninput {channels} {resolution}\n{body}softmax {classes}\n");
    parse_model_spec(&text).map_err(|e| Error::Config(format!("preset {name}: {e}")))
}

/// The three presets at the given input geometry.
pub fn builtin_presets(channels: usize, resolution: usize, classes: usize) -> Result<Vec<ModelConfig>> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n, channels, resolution, classes))
        .collect()
}
