//! Plain-text weights files. Floats are written in Rust's shortest
//! round-trip form, so `load(save(net)) == net` bit for bit.
//!
//! ```text
//! qnet-weights 1
//! activation tanh
//! learning_rate 0.02
//! weight_init_max 0.1
//! loss_reduction mean_over_actions
//! layer 0 32 64
//! w <64 floats>        (32 rows)
//! b <64 floats>
//! layer 1 64 64
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, Layer, LossReduction, Network, NetworkConfig, QNetError};

const MAGIC: &str = "qnet-weights 1";

fn format_err(layer: impl Into<String>, message: impl Into<String>) -> QNetError {
    QNetError::Format {
        layer: layer.into(),
        message: message.into(),
    }
}

fn write_row(out: &mut String, tag: char, values: &[f64]) {
    out.push(tag);
    for v in values {
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

impl Network {
    pub fn to_text(&self) -> String {
        let cfg = &self.config;
        let mut out = String::new();
        let reduction = match cfg.loss_reduction {
            LossReduction::Sum => "sum",
            LossReduction::MeanOverActions => "mean_over_actions",
        };
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "activation {}", cfg.activation);
        let _ = writeln!(out, "learning_rate {:?}", cfg.learning_rate);
        let _ = writeln!(out, "weight_init_max {:?}", cfg.weight_init_max);
        let _ = writeln!(out, "loss_reduction {reduction}");
        for (l, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {l} {} {}", layer.fan_in, layer.fan_out);
            for row in layer.weights.chunks(layer.fan_out) {
                write_row(&mut out, 'w', row);
            }
            write_row(&mut out, 'b', &layer.bias);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, QNetError> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(format_err("header", format!("expected {MAGIC:?}")));
        }
        let mut header = |key: &str| -> Result<String, QNetError> {
            let line = lines
                .next()
                .ok_or_else(|| format_err("header", format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| format_err("header", format!("expected {key}, found {line:?}")))
        };
        let activation: Activation = header("activation")?
            .parse()
            .map_err(|e: String| format_err("header", e))?;
        let learning_rate = parse_f64(&header("learning_rate")?, "header")?;
        let weight_init_max = parse_f64(&header("weight_init_max")?, "header")?;
        let loss_reduction = match header("loss_reduction")?.as_str() {
            "sum" => LossReduction::Sum,
            "mean_over_actions" => LossReduction::MeanOverActions,
            other => return Err(format_err("header", format!("unknown loss reduction {other:?}"))),
        };

        let mut layers = Vec::with_capacity(3);
        for l in 0..3 {
            let name = format!("layer {l}");
            let head = lines
                .next()
                .ok_or_else(|| format_err(&name, "missing layer header"))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "layer" || parts[1] != l.to_string() {
                return Err(format_err(&name, format!("bad layer header {head:?}")));
            }
            let fan_in: usize = parts[2]
                .parse()
                .map_err(|_| format_err(&name, "bad fan_in"))?;
            let fan_out: usize = parts[3]
                .parse()
                .map_err(|_| format_err(&name, "bad fan_out"))?;
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for r in 0..fan_in {
                let row = lines.next().ok_or_else(|| {
                    format_err(&name, format!("expected {fan_in} weight rows, found {r}"))
                })?;
                weights.extend(parse_row(row, 'w', fan_out, &name)?);
            }
            let bias_line = lines
                .next()
                .ok_or_else(|| format_err(&name, "missing bias row"))?;
            let bias = parse_row(bias_line, 'b', fan_out, &name)?;
            layers.push(Layer {
                fan_in,
                fan_out,
                weights,
                bias,
            });
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(format_err("trailer", format!("unexpected line {extra:?}")));
        }

        let config = NetworkConfig {
            input_dim: layers[0].fan_in,
            hidden_dims: [layers[0].fan_out, layers[1].fan_out],
            output_dim: layers[2].fan_out,
            activation,
            learning_rate,
            weight_init_max,
            loss_reduction,
        };
        for l in 1..3 {
            if layers[l].fan_in != layers[l - 1].fan_out {
                return Err(format_err(
                    format!("layer {l}"),
                    format!(
                        "fan_in {} does not match previous fan_out {}",
                        layers[l].fan_in,
                        layers[l - 1].fan_out
                    ),
                ));
            }
        }
        Network::from_layers(config, layers)
    }

    pub fn save(&self, path: &Path) -> Result<(), QNetError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| QNetError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, QNetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QNetError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn parse_f64(s: &str, layer: &str) -> Result<f64, QNetError> {
    s.trim()
        .parse()
        .map_err(|_| format_err(layer, format!("bad number {s:?}")))
}

fn parse_row(line: &str, tag: char, expected: usize, layer: &str) -> Result<Vec<f64>, QNetError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag.encode_utf8(&mut [0; 4])) {
        return Err(format_err(layer, format!("expected a '{tag}' row, found {line:?}")));
    }
    let values = parts
        .map(|p| parse_f64(p, layer))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(format_err(
            layer,
            format!("'{tag}' row has {} values, expected {expected}", values.len()),
        ));
    }
    Ok(values)
}
