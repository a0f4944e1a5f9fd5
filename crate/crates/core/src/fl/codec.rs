//! Length-prefixed JSON frames for broadcasts and reports.
//!
//! A frame is a 4-byte little-endian body length followed by a UTF-8 JSON
//! object `{"v":1,"type":...,"round":...,"payload":{...}}`. Reports also carry
//! a top-level `federate` field. Every float is written with 17 significant
//! digits in a fixed 24-character form, so a payload's byte length depends on
//! the layer shapes alone and decoding restores the exact bits.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use super::{FederateId, GradientReport, WeightBroadcast};
use crate::nn::{Activation, DenseLayer, GradientStep, LayerSpec, ModelWeights};

pub const WIRE_VERSION: u64 = 1;
const PREFIX: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Broadcast(WeightBroadcast),
    Report(GradientReport),
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("truncated frame: need {expected} bytes, have {available}")]
    Truncated { expected: usize, available: usize },
    #[error("{extra} trailing bytes after frame")]
    TrailingBytes { extra: usize },
    #[error("malformed message at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported wire version {found} (expected {WIRE_VERSION})")]
    Version { found: u64 },
    #[error("cannot encode non-finite value in {0}")]
    NonFinite(&'static str),
}

fn push_f64(out: &mut String, x: f64, what: &'static str) -> Result<(), CodecError> {
    if !x.is_finite() {
        return Err(CodecError::NonFinite(what));
    }
    let s = format!("{x:.16e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !mantissa.starts_with('-') {
        out.push(' ');
    }
    let sign = if exp < 0 { '-' } else { '+' };
    write!(out, "{mantissa}e{sign}{:03}", exp.abs()).expect("write to string");
    Ok(())
}

fn push_array(out: &mut String, xs: &[f64], what: &'static str) -> Result<(), CodecError> {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_f64(out, x, what)?;
    }
    out.push(']');
    Ok(())
}

fn push_layers(out: &mut String, layers: &[DenseLayer], what: &'static str) -> Result<(), CodecError> {
    out.push_str("\"layers\":[");
    for (i, l) in layers.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{{\"rows\":{},\"cols\":{},\"weights\":", l.rows(), l.cols()).unwrap();
        push_array(out, l.weights(), what)?;
        out.push_str(",\"bias\":");
        push_array(out, l.bias(), what)?;
        out.push('}');
    }
    out.push(']');
    Ok(())
}

fn payload(m: &Message) -> Result<String, CodecError> {
    let mut out = String::from("{");
    match m {
        Message::Broadcast(b) => {
            let act = serde_json::to_string(&b.weights.spec().activation).expect("enum serializes");
            write!(out, "\"activation\":{act},").unwrap();
            push_layers(&mut out, b.weights.layers(), "broadcast weights")?;
        }
        Message::Report(r) => {
            out.push_str("\"loss\":");
            push_f64(&mut out, r.loss, "report loss")?;
            out.push(',');
            push_layers(&mut out, r.step.layers(), "report step")?;
        }
    }
    out.push('}');
    Ok(out)
}

/// Weights as a broadcast payload object, for storing a model on disk.
pub fn encode_weights(w: &ModelWeights) -> Result<String, CodecError> {
    payload(&Message::Broadcast(WeightBroadcast {
        round: 0,
        weights: w.clone(),
    }))
}

/// Inverse of [`encode_weights`]; offsets are relative to `text`.
pub fn decode_weights(text: &str) -> Result<ModelWeights, CodecError> {
    let p: WirePayload = serde_json::from_str(text).map_err(|e| CodecError::Malformed {
        offset: offset_of(text.as_bytes(), &e) - PREFIX,
        reason: e.to_string(),
    })?;
    weights_from_wire(p).map_err(|e| match e {
        CodecError::Malformed { reason, .. } => malformed(0, reason),
        other => other,
    })
}

fn weights_from_wire(p: WirePayload) -> Result<ModelWeights, CodecError> {
    if p.loss.is_some() {
        return Err(malformed(PREFIX, "weights carry a loss"));
    }
    let activation = p
        .activation
        .ok_or_else(|| malformed(PREFIX, "weights without activation"))?;
    let layers = layers_from_wire(p.layers)?;
    let (Some(first), Some(last)) = (layers.first(), layers.last()) else {
        return Err(malformed(PREFIX, "no layers"));
    };
    let spec = LayerSpec {
        input_dim: first.cols(),
        hidden_dims: layers[..layers.len() - 1].iter().map(|l| l.rows()).collect(),
        output_dim: last.rows(),
        activation,
    };
    ModelWeights::from_layers(&spec, layers).map_err(|e| malformed(PREFIX, e.to_string()))
}

/// Byte length of the `payload` object of `m`.
pub fn payload_len(m: &Message) -> Result<usize, CodecError> {
    Ok(payload(m)?.len())
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, CodecError> {
    let mut body = format!("{{\"v\":{WIRE_VERSION},");
    match m {
        Message::Broadcast(b) => write!(body, "\"type\":\"broadcast\",\"round\":{},", b.round),
        Message::Report(r) => {
            let id = serde_json::to_string(&r.federate).expect("id serializes");
            write!(body, "\"type\":\"report\",\"round\":{},\"federate\":{id},", r.round)
        }
    }
    .unwrap();
    body.push_str("\"payload\":");
    body.push_str(&payload(m)?);
    body.push('}');

    let len = u32::try_from(body.len()).expect("frame under 4 GiB");
    let mut out = Vec::with_capacity(PREFIX + body.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(body.as_bytes());
    Ok(out)
}

#[derive(Deserialize)]
struct VersionProbe {
    v: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Broadcast,
    Report,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    #[allow(dead_code)]
    v: u64,
    #[serde(rename = "type")]
    kind: Kind,
    round: u64,
    #[serde(default)]
    federate: Option<FederateId>,
    payload: WirePayload,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePayload {
    #[serde(default)]
    activation: Option<Activation>,
    #[serde(default)]
    loss: Option<f64>,
    layers: Vec<WireLayer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Byte offset into the frame of a serde_json error position.
fn offset_of(body: &[u8], e: &serde_json::Error) -> usize {
    let mut line = 1;
    let mut line_start = 0;
    for (i, &c) in body.iter().enumerate() {
        if line == e.line() {
            break;
        }
        if c == b'\n' {
            line += 1;
            line_start = i + 1;
        }
    }
    PREFIX + line_start + e.column().saturating_sub(1)
}

fn malformed(offset: usize, reason: impl Into<String>) -> CodecError {
    CodecError::Malformed {
        offset,
        reason: reason.into(),
    }
}

fn layers_from_wire(layers: Vec<WireLayer>) -> Result<Vec<DenseLayer>, CodecError> {
    layers
        .into_iter()
        .map(|l| {
            DenseLayer::from_parts(l.rows, l.cols, l.weights, l.bias)
                .map_err(|e| malformed(PREFIX, e.to_string()))
        })
        .collect()
}

/// Decodes exactly one frame; extra or missing bytes are errors.
pub fn decode_message(bytes: &[u8]) -> Result<Message, CodecError> {
    if bytes.len() < PREFIX {
        return Err(CodecError::Truncated {
            expected: PREFIX,
            available: bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[..PREFIX].try_into().expect("4 bytes")) as usize;
    let expected = PREFIX + len;
    if bytes.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            available: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CodecError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let body = &bytes[PREFIX..];

    let probe: VersionProbe =
        serde_json::from_slice(body).map_err(|e| malformed(offset_of(body, &e), e.to_string()))?;
    if probe.v != WIRE_VERSION {
        return Err(CodecError::Version { found: probe.v });
    }
    let wire: Wire =
        serde_json::from_slice(body).map_err(|e| malformed(offset_of(body, &e), e.to_string()))?;
    let p = wire.payload;

    match wire.kind {
        Kind::Broadcast => {
            if wire.federate.is_some() {
                return Err(malformed(PREFIX, "broadcast carries a federate id"));
            }
            Ok(Message::Broadcast(WeightBroadcast {
                round: wire.round,
                weights: weights_from_wire(p)?,
            }))
        }
        Kind::Report => {
            if p.activation.is_some() {
                return Err(malformed(PREFIX, "report carries broadcast fields"));
            }
            let federate = wire
                .federate
                .ok_or_else(|| malformed(PREFIX, "report without federate"))?;
            let loss = p.loss.ok_or_else(|| malformed(PREFIX, "report without loss"))?;
            let layers = layers_from_wire(p.layers)?;
            Ok(Message::Report(GradientReport {
                round: wire.round,
                federate,
                step: GradientStep::from_layers(layers),
                loss,
            }))
        }
    }
}
