//! Parameter counts and model-wise compression rates.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::prune::{retained_channels, Rational};

/// VGG-16 convolution stack for CIFAR.
pub const VGG16_CIFAR: &str = include_str!("../data/vgg16_cifar.txt");
/// ShiftResNet-20 (ε = 9) for CIFAR-10.
pub const SHIFTRESNET20: &str = include_str!("../data/shiftresnet20.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    /// PW–shift–PW block with `ε·co` intermediate channels.
    ShiftModule {
        epsilon: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub ci: usize,
    pub co: usize,
    pub k: usize,
}

impl LayerSpec {
    /// Intermediate channel count of a shift module.
    fn expanded(&self, epsilon: Rational) -> usize {
        (epsilon * Rational::from_integer(self.co as u64)).to_integer() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDescriptor {
    pub layers: Vec<LayerSpec>,
    /// Parameters outside the decomposed layers (biases, BN, classifier).
    pub aux_params: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Baseline,
    Dp,
    Pd,
    Pdp(usize),
    Shift(usize),
    Pruned(Rational),
}

impl Scheme {
    fn applies_to(&self, kind: &LayerKind) -> bool {
        match (self, kind) {
            (Scheme::Baseline, _) => true,
            (Scheme::Pruned(_), kind) => matches!(kind, LayerKind::ShiftModule { .. }),
            (_, kind) => matches!(kind, LayerKind::Conv),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Baseline => write!(f, "baseline"),
            Scheme::Dp => write!(f, "dp"),
            Scheme::Pd => write!(f, "pd"),
            Scheme::Pdp(r) => write!(f, "pdp({r})"),
            Scheme::Shift(r) => write!(f, "shift({r})"),
            Scheme::Pruned(phi) => write!(f, "pruned({phi})"),
        }
    }
}

/// Weight count of one layer under `scheme`.
pub fn count(layer: &LayerSpec, scheme: Scheme) -> Result<usize> {
    let (ci, co, kk) = (layer.ci, layer.co, layer.k * layer.k);
    match (&layer.kind, scheme) {
        (LayerKind::Conv, Scheme::Baseline) => Ok(ci * co * kk),
        (LayerKind::Conv, Scheme::Dp) => Ok((co + kk) * ci),
        (LayerKind::Conv, Scheme::Pd) => Ok((ci + kk) * co),
        (LayerKind::Conv, Scheme::Pdp(r)) => Ok((ci + co + kk) * r),
        (LayerKind::Conv, Scheme::Shift(r)) => Ok((ci + co) * r),
        (LayerKind::ShiftModule { epsilon }, Scheme::Baseline) => {
            Ok((ci + co) * layer.expanded(*epsilon))
        }
        (LayerKind::ShiftModule { epsilon }, Scheme::Pruned(phi)) => {
            Ok((ci + co) * retained_channels(phi, layer.expanded(*epsilon)))
        }
        (kind, scheme) => Err(Error::invalid(format!(
            "scheme {scheme} does not apply to {} layer {}",
            match kind {
                LayerKind::Conv => "conv",
                LayerKind::ShiftModule { .. } => "shift",
            },
            layer.name
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCount {
    pub name: String,
    pub baseline: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compression {
    pub layers: Vec<LayerCount>,
    /// Summed baseline count of the listed layers.
    pub original: usize,
    /// Summed count of the listed layers under the scheme.
    pub compressed: usize,
    pub aux: usize,
    /// `100 · (1 − (compressed + aux) / (original + aux))`.
    pub cr_percent: f64,
}

/// Model-wise compression rate. Layers the scheme does not apply to keep
/// their baseline count.
pub fn compression_rate(model: &ModelDescriptor, scheme: Scheme) -> Result<Compression> {
    let mut layers = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let baseline = count(layer, Scheme::Baseline)?;
        let params = if scheme.applies_to(&layer.kind) {
            count(layer, scheme)?
        } else {
            baseline
        };
        layers.push(LayerCount {
            name: layer.name.clone(),
            baseline,
            params,
        });
    }
    let original: usize = layers.iter().map(|l| l.baseline).sum();
    let compressed: usize = layers.iter().map(|l| l.params).sum();
    let aux = model.aux_params;
    let total = original + aux;
    let cr_percent = if total == 0 {
        0.0
    } else {
        100.0 * (1.0 - (compressed + aux) as f64 / total as f64)
    };
    Ok(Compression {
        layers,
        original,
        compressed,
        aux,
        cr_percent,
    })
}

/// Parses the descriptor text format:
///
/// ```text
/// conv  <name> <ci> <co> <k>
/// shift <name> <ci> <co> <k> <epsilon>   # epsilon may be p/q
/// aux   <params>
/// ```
///
/// `#` starts a comment; blank lines are skipped.
pub fn parse_descriptor(text: &str) -> Result<ModelDescriptor> {
    let mut layers = Vec::new();
    let mut aux = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| Error::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some((&keyword, args)) = fields.split_first() else {
            continue;
        };
        match keyword {
            "conv" | "shift" => {
                let want = if keyword == "conv" { 4 } else { 5 };
                if args.len() != want {
                    return Err(err(format!(
                        "{keyword} takes {want} fields, got {}",
                        args.len()
                    )));
                }
                let ci = positive(args[1], "ci").map_err(err)?;
                let co = positive(args[2], "co").map_err(err)?;
                let k = positive(args[3], "k").map_err(err)?;
                if k % 2 == 0 {
                    return Err(err(format!("kernel extent {k} is even")));
                }
                let kind = if keyword == "conv" {
                    LayerKind::Conv
                } else {
                    let epsilon = Rational::from_str(args[4])
                        .map_err(|_| err(format!("bad expansion ratio {:?}", args[4])))?;
                    if *epsilon.numer() == 0 {
                        return Err(err("expansion ratio must be positive".into()));
                    }
                    if !(epsilon * Rational::from_integer(co as u64)).is_integer() {
                        return Err(err(format!(
                            "expansion ratio {epsilon} times {co} channels is not whole"
                        )));
                    }
                    LayerKind::ShiftModule { epsilon }
                };
                layers.push(LayerSpec {
                    name: args[0].to_string(),
                    kind,
                    ci,
                    co,
                    k,
                });
            }
            "aux" => {
                if args.len() != 1 {
                    return Err(err(format!("aux takes 1 field, got {}", args.len())));
                }
                if aux.is_some() {
                    return Err(err("aux given twice".into()));
                }
                aux = Some(
                    args[0]
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad aux count {:?}", args[0])))?,
                );
            }
            other => return Err(err(format!("unknown keyword {other:?}"))),
        }
    }
    if layers.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "descriptor lists no layers".into(),
        });
    }
    Ok(ModelDescriptor {
        layers,
        aux_params: aux.unwrap_or(0),
    })
}

fn positive(field: &str, what: &str) -> std::result::Result<usize, String> {
    match field.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("{what} must be a positive integer, got {field:?}")),
    }
}
