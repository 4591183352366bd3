//! Plain-text parameter files.
//!
//! ```text
//! format alignprobe-checkpoint-v1
//! kind captioner
//! stage CE
//! V 57
//! h 64
//! d 64
//! vocab_hash 5c1f0e4b9a7d2e33
//! bos 0
//! eos 1
//! masked 0,2
//! metric 1.2345
//! tensor embed 57x64
//! [[...],...]
//! tensor img_w 64x64
//! ...
//! ```
//!
//! Header lines are `key value`; each tensor is a `tensor name dims` line
//! followed by one line holding the tensor as a nested JSON array. Tensors
//! appear in the parameter record's fixed order, and floats are written in
//! shortest round-trip form so a file reloads bit-exactly.

use std::fmt::Write as _;

use ndarray::ArrayViewD;
use serde_json::Value;

use crate::captioner::Specials;
use crate::error::{Error, Result};
use crate::nn::ParamTensors;

pub const FORMAT: &str = "alignprobe-checkpoint-v1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    /// `captioner`, `bag` or `sequence`.
    pub kind: String,
    /// `CE`, `SCST` or `MATCHER`.
    pub stage: String,
    pub vocab_size: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub vocab_hash: String,
    pub specials: Specials,
    pub metric: Option<f64>,
}

fn nested(view: &ArrayViewD<'_, f64>) -> Value {
    if view.ndim() == 0 {
        return Value::from(view.first().copied().unwrap_or(0.0));
    }
    Value::Array(view.outer_iter().map(|sub| nested(&sub)).collect())
}

fn flatten(v: &Value, out: &mut Vec<f64>, shape: &[usize], depth: usize) -> std::result::Result<(), String> {
    if depth == shape.len() {
        out.push(v.as_f64().ok_or("expected a number")?);
        return Ok(());
    }
    let arr = v.as_array().ok_or("expected an array")?;
    if arr.len() != shape[depth] {
        return Err(format!("axis {depth} has length {}, expected {}", arr.len(), shape[depth]));
    }
    for x in arr {
        flatten(x, out, shape, depth + 1)?;
    }
    Ok(())
}

/// Renders a checkpoint; fails on non-finite parameters.
pub fn write_checkpoint<P: ParamTensors>(header: &CheckpointHeader, params: &P) -> Result<String> {
    if !params.all_finite() {
        return Err(Error::Numeric { step: 0, what: "refusing to save non-finite parameters".into() });
    }
    let mut s = String::new();
    let masked: Vec<String> = header.specials.masked.iter().map(usize::to_string).collect();
    writeln!(s, "format {FORMAT}").unwrap();
    writeln!(s, "kind {}", header.kind).unwrap();
    writeln!(s, "stage {}", header.stage).unwrap();
    writeln!(s, "V {}", header.vocab_size).unwrap();
    writeln!(s, "h {}", header.hidden).unwrap();
    writeln!(s, "d {}", header.feature_dim).unwrap();
    writeln!(s, "vocab_hash {}", header.vocab_hash).unwrap();
    writeln!(s, "bos {}", header.specials.bos).unwrap();
    writeln!(s, "eos {}", header.specials.eos).unwrap();
    writeln!(s, "masked {}", masked.join(",")).unwrap();
    match header.metric {
        Some(m) => writeln!(s, "metric {m:?}").unwrap(),
        None => writeln!(s, "metric none").unwrap(),
    }
    for (name, t) in params.tensors() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(s, "tensor {name} {}", dims.join("x")).unwrap();
        writeln!(s, "{}", nested(&t)).unwrap();
    }
    Ok(s)
}

/// Parses the header; returns it with the index of the first tensor line.
pub fn read_header(text: &str) -> Result<(CheckpointHeader, usize)> {
    const SRC: &str = "checkpoint";
    let lines: Vec<&str> = text.lines().collect();
    let get = |i: usize, key: &str| -> Result<String> {
        let line = lines.get(i).ok_or_else(|| Error::parse(SRC, i + 1, format!("missing `{key}` line")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(Error::parse(SRC, i + 1, format!("expected `{key} ...`"))),
        }
    };
    if get(0, "format")? != FORMAT {
        return Err(Error::parse(SRC, 1, "unsupported checkpoint format"));
    }
    let num = |v: String, line: usize| v.parse::<usize>().map_err(|e| Error::parse(SRC, line, e.to_string()));
    let kind = get(1, "kind")?;
    let stage = get(2, "stage")?;
    let vocab_size = num(get(3, "V")?, 4)?;
    let hidden = num(get(4, "h")?, 5)?;
    let feature_dim = num(get(5, "d")?, 6)?;
    let vocab_hash = get(6, "vocab_hash")?;
    let bos = num(get(7, "bos")?, 8)?;
    let eos = num(get(8, "eos")?, 9)?;
    let masked_text = get(9, "masked")?;
    let masked = if masked_text.is_empty() {
        Vec::new()
    } else {
        masked_text.split(',').map(|m| num(m.to_string(), 10)).collect::<Result<_>>()?
    };
    let metric_text = get(10, "metric")?;
    let metric = match metric_text.as_str() {
        "none" => None,
        m => Some(m.parse::<f64>().map_err(|e| Error::parse(SRC, 11, e.to_string()))?),
    };
    let header = CheckpointHeader {
        kind,
        stage,
        vocab_size,
        hidden,
        feature_dim,
        vocab_hash,
        specials: Specials { bos, eos, masked },
        metric,
    };
    Ok((header, 11))
}

/// Fills `params` (already shaped per the header) from the tensor section.
pub fn read_tensors<P: ParamTensors>(text: &str, params: &mut P) -> Result<()> {
    const SRC: &str = "checkpoint";
    let (_, start) = read_header(text)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut i = start;
    for (name, mut t) in params.tensors_mut() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let expected = format!("tensor {name} {}", dims.join("x"));
        match lines.get(i) {
            Some(l) if *l == expected => {}
            _ => return Err(Error::parse(SRC, i + 1, format!("expected `{expected}`"))),
        }
        let body = lines.get(i + 1).ok_or_else(|| Error::parse(SRC, i + 2, "missing tensor data"))?;
        let value: Value = serde_json::from_str(body).map_err(|e| Error::parse(SRC, i + 2, e.to_string()))?;
        let mut flat = Vec::with_capacity(t.len());
        flatten(&value, &mut flat, t.shape(), 0).map_err(|m| Error::parse(SRC, i + 2, m))?;
        for (slot, v) in t.iter_mut().zip(flat) {
            *slot = v;
        }
        i += 2;
    }
    if i != lines.len() {
        return Err(Error::parse(SRC, i + 1, "unexpected trailing lines"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::CaptionerParams;
    use crate::rng::rng_from_seed;

    fn header(p: &CaptionerParams) -> CheckpointHeader {
        CheckpointHeader {
            kind: "captioner".into(),
            stage: "CE".into(),
            vocab_size: p.vocab_size(),
            hidden: p.hidden(),
            feature_dim: p.feature_dim(),
            vocab_hash: "0123456789abcdef".into(),
            specials: p.specials.clone(),
            metric: Some(0.1 + 0.2),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let specials = Specials { bos: 0, eos: 1, masked: vec![0, 2] };
        let p = CaptionerParams::random(7, 5, 4, specials.clone(), &mut rng_from_seed(3));
        let text = write_checkpoint(&header(&p), &p).unwrap();
        let (h, _) = read_header(&text).unwrap();
        assert_eq!(h, header(&p));
        let mut q = CaptionerParams::zeros(7, 5, 4, specials);
        read_tensors(&text, &mut q).unwrap();
        assert_eq!(p, q);
        assert_eq!(write_checkpoint(&header(&q), &q).unwrap(), text);
    }

    #[test]
    fn shape_mismatch_is_a_parse_error() {
        let specials = Specials { bos: 0, eos: 1, masked: vec![] };
        let p = CaptionerParams::random(7, 5, 4, specials.clone(), &mut rng_from_seed(3));
        let text = write_checkpoint(&header(&p), &p).unwrap();
        let mut q = CaptionerParams::zeros(7, 6, 4, specials);
        assert!(matches!(read_tensors(&text, &mut q), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_finite_parameters_are_refused() {
        let specials = Specials { bos: 0, eos: 1, masked: vec![] };
        let mut p = CaptionerParams::random(4, 3, 2, specials, &mut rng_from_seed(1));
        p.out_b[0] = f64::NAN;
        assert!(write_checkpoint(&header(&p), &p).is_err());
    }
}
