//! Plain-text serialization for layer specs.
//!
//! The format is line-oriented `key = value` with shape-annotated matrix
//! literals. A matrix value is `[RxC]` followed by `R*C` row-major
//! numbers; a vector value is `[N]` followed by `N` numbers. Example:
//!
//! ```text
//! input_dim = 2
//! state_dim = 2
//! transition = constant
//! a_bar = [2x2] 0.5 0 0 0.5
//! input_map = constant
//! b_bar = [2x2] 1 0 0 1
//! output_map = constant
//! c = [2x2] 1 0 0 1
//! passthrough = identity
//! ```
//!
//! Keys may appear in any order; unknown keys are rejected.

use super::{
    AffineMatMap, AffineVecMap, InputMapSpec, OutputMapSpec, PassthroughSpec, SsmLayerSpec,
    TransitionSpec,
};
use crate::mat::Mat;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: {message}")]
    BadValue { key: String, message: String },
    #[error("spec validation failed: {0}")]
    Invalid(String),
}

fn write_mat(out: &mut String, key: &str, m: &Mat) {
    let _ = write!(out, "{key} = [{}x{}]", m.rows(), m.cols());
    for v in m.data() {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

fn write_vec(out: &mut String, key: &str, v: &[f64]) {
    let _ = write!(out, "{key} = [{}]", v.len());
    for x in v {
        let _ = write!(out, " {x}");
    }
    out.push('\n');
}

fn write_vec_map(out: &mut String, prefix: &str, map: &AffineVecMap) {
    write_mat(out, &format!("{prefix}_weight"), &map.weight);
    write_vec(out, &format!("{prefix}_bias"), &map.bias);
}

fn write_mat_map(out: &mut String, prefix: &str, map: &AffineMatMap) {
    write_mat(out, &format!("{prefix}_weight"), &map.weight);
    write_mat(out, &format!("{prefix}_bias"), &map.bias);
}

/// Renders a layer spec in the text format.
pub fn to_text(spec: &SsmLayerSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "input_dim = {}", spec.input_dim());
    let _ = writeln!(out, "state_dim = {}", spec.state_dim());
    match &spec.transition {
        TransitionSpec::Constant { a_bar } => {
            let _ = writeln!(out, "transition = constant");
            write_mat(&mut out, "a_bar", a_bar);
        }
        TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta } => {
            let _ = writeln!(out, "transition = diagonal-selective");
            write_vec(&mut out, "a_diag", a_diag);
            write_vec(&mut out, "delta_bias", delta_bias);
            write_vec_map(&mut out, "pi_delta", pi_delta);
        }
        TransitionSpec::Diagonalizable { w, w_inv, pi_a } => {
            let _ = writeln!(out, "transition = diagonalizable");
            write_mat(&mut out, "w", w);
            write_mat(&mut out, "w_inv", w_inv);
            write_vec_map(&mut out, "pi_a", pi_a);
        }
        TransitionSpec::InputDependentFull { pi_a } => {
            let _ = writeln!(out, "transition = input-dependent-full");
            write_mat_map(&mut out, "pi_a", pi_a);
        }
    }
    match &spec.input_map {
        InputMapSpec::Constant { b_bar } => {
            let _ = writeln!(out, "input_map = constant");
            write_mat(&mut out, "b_bar", b_bar);
        }
        InputMapSpec::Affine { pi_b } => {
            let _ = writeln!(out, "input_map = affine");
            write_mat_map(&mut out, "pi_b", pi_b);
        }
        InputMapSpec::S6Discretized { pi_b } => {
            let _ = writeln!(out, "input_map = s6-discretized");
            write_mat_map(&mut out, "pi_b", pi_b);
        }
    }
    match &spec.output_map {
        OutputMapSpec::Constant { c } => {
            let _ = writeln!(out, "output_map = constant");
            write_mat(&mut out, "c", c);
        }
        OutputMapSpec::Affine { pi_c } => {
            let _ = writeln!(out, "output_map = affine");
            write_mat_map(&mut out, "pi_c", pi_c);
        }
    }
    match &spec.passthrough {
        PassthroughSpec::Identity => {
            let _ = writeln!(out, "passthrough = identity");
        }
        PassthroughSpec::Constant { d } => {
            let _ = writeln!(out, "passthrough = constant");
            write_mat(&mut out, "d", d);
        }
    }
    out
}

struct Fields {
    values: BTreeMap<String, String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Result<String, ParseError> {
        self.values.remove(key).ok_or_else(|| ParseError::MissingKey(key.to_string()))
    }

    fn take_usize(&mut self, key: &str) -> Result<usize, ParseError> {
        self.take(key)?.trim().parse::<usize>().map_err(|e| ParseError::BadValue {
            key: key.to_string(),
            message: e.to_string(),
        })
    }

    fn take_mat(&mut self, key: &str) -> Result<Mat, ParseError> {
        let raw = self.take(key)?;
        parse_mat(key, &raw)
    }

    fn take_vec(&mut self, key: &str) -> Result<Vec<f64>, ParseError> {
        let raw = self.take(key)?;
        parse_vec(key, &raw)
    }

    fn take_vec_map(&mut self, prefix: &str) -> Result<AffineVecMap, ParseError> {
        let weight = self.take_mat(&format!("{prefix}_weight"))?;
        let bias = self.take_vec(&format!("{prefix}_bias"))?;
        AffineVecMap::new(weight, bias).map_err(|e| ParseError::Invalid(e.to_string()))
    }

    fn take_mat_map(&mut self, prefix: &str) -> Result<AffineMatMap, ParseError> {
        let weight = self.take_mat(&format!("{prefix}_weight"))?;
        let bias = self.take_mat(&format!("{prefix}_bias"))?;
        AffineMatMap::new(bias.rows(), bias.cols(), weight, bias)
            .map_err(|e| ParseError::Invalid(e.to_string()))
    }
}

fn parse_numbers(key: &str, body: &str, expected: usize) -> Result<Vec<f64>, ParseError> {
    let nums: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse::<f64>).collect();
    let nums = nums.map_err(|e| ParseError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })?;
    if nums.len() != expected {
        return Err(ParseError::BadValue {
            key: key.to_string(),
            message: format!("expected {expected} numbers, got {}", nums.len()),
        });
    }
    Ok(nums)
}

fn parse_mat(key: &str, raw: &str) -> Result<Mat, ParseError> {
    let raw = raw.trim();
    let bad = |message: &str| ParseError::BadValue {
        key: key.to_string(),
        message: message.to_string(),
    };
    let rest = raw.strip_prefix('[').ok_or_else(|| bad("missing [RxC] shape"))?;
    let (shape, body) = rest.split_once(']').ok_or_else(|| bad("missing ] in shape"))?;
    let (r, c) = shape.split_once('x').ok_or_else(|| bad("shape must be RxC"))?;
    let rows: usize = r.trim().parse().map_err(|_| bad("bad row count"))?;
    let cols: usize = c.trim().parse().map_err(|_| bad("bad col count"))?;
    let nums = parse_numbers(key, body, rows * cols)?;
    Ok(Mat::from_flat(rows, cols, &nums))
}

fn parse_vec(key: &str, raw: &str) -> Result<Vec<f64>, ParseError> {
    let raw = raw.trim();
    let bad = |message: &str| ParseError::BadValue {
        key: key.to_string(),
        message: message.to_string(),
    };
    let rest = raw.strip_prefix('[').ok_or_else(|| bad("missing [N] shape"))?;
    let (shape, body) = rest.split_once(']').ok_or_else(|| bad("missing ] in shape"))?;
    let len: usize = shape.trim().parse().map_err(|_| bad("bad length"))?;
    parse_numbers(key, body, len)
}

const KNOWN_KEYS: &[&str] = &[
    "input_dim",
    "state_dim",
    "transition",
    "a_bar",
    "a_diag",
    "delta_bias",
    "pi_delta_weight",
    "pi_delta_bias",
    "w",
    "w_inv",
    "pi_a_weight",
    "pi_a_bias",
    "input_map",
    "b_bar",
    "pi_b_weight",
    "pi_b_bias",
    "output_map",
    "c",
    "pi_c_weight",
    "pi_c_bias",
    "passthrough",
    "d",
];

/// Parses the text format back into a validated layer spec.
pub fn from_text(text: &str) -> Result<SsmLayerSpec, ParseError> {
    let mut values = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ParseError::BadLine(lineno + 1))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ParseError::UnknownKey(key));
        }
        if values.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ParseError::DuplicateKey(key));
        }
    }
    let mut fields = Fields { values };
    let input_dim = fields.take_usize("input_dim")?;
    let state_dim = fields.take_usize("state_dim")?;

    let transition = match fields.take("transition")?.as_str() {
        "constant" => TransitionSpec::Constant { a_bar: fields.take_mat("a_bar")? },
        "diagonal-selective" => TransitionSpec::DiagonalSelective {
            a_diag: fields.take_vec("a_diag")?,
            delta_bias: fields.take_vec("delta_bias")?,
            pi_delta: fields.take_vec_map("pi_delta")?,
        },
        "diagonalizable" => TransitionSpec::Diagonalizable {
            w: fields.take_mat("w")?,
            w_inv: fields.take_mat("w_inv")?,
            pi_a: fields.take_vec_map("pi_a")?,
        },
        "input-dependent-full" => {
            TransitionSpec::InputDependentFull { pi_a: fields.take_mat_map("pi_a")? }
        }
        other => {
            return Err(ParseError::BadValue {
                key: "transition".into(),
                message: format!("unknown variant {other:?}"),
            })
        }
    };
    let input_map = match fields.take("input_map")?.as_str() {
        "constant" => InputMapSpec::Constant { b_bar: fields.take_mat("b_bar")? },
        "affine" => InputMapSpec::Affine { pi_b: fields.take_mat_map("pi_b")? },
        "s6-discretized" => InputMapSpec::S6Discretized { pi_b: fields.take_mat_map("pi_b")? },
        other => {
            return Err(ParseError::BadValue {
                key: "input_map".into(),
                message: format!("unknown variant {other:?}"),
            })
        }
    };
    let output_map = match fields.take("output_map")?.as_str() {
        "constant" => OutputMapSpec::Constant { c: fields.take_mat("c")? },
        "affine" => OutputMapSpec::Affine { pi_c: fields.take_mat_map("pi_c")? },
        other => {
            return Err(ParseError::BadValue {
                key: "output_map".into(),
                message: format!("unknown variant {other:?}"),
            })
        }
    };
    let passthrough = match fields.take("passthrough")?.as_str() {
        "identity" => PassthroughSpec::Identity,
        "constant" => PassthroughSpec::Constant { d: fields.take_mat("d")? },
        other => {
            return Err(ParseError::BadValue {
                key: "passthrough".into(),
                message: format!("unknown variant {other:?}"),
            })
        }
    };
    if let Some(extra) = fields.values.keys().next() {
        return Err(ParseError::UnknownKey(extra.clone()));
    }
    SsmLayerSpec::new(input_dim, state_dim, transition, input_map, output_map, passthrough)
        .map_err(|e| ParseError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_spec() -> SsmLayerSpec {
        SsmLayerSpec::new(
            2,
            3,
            TransitionSpec::Constant { a_bar: Mat::diag(&[0.5, 0.25, -0.5]) },
            InputMapSpec::Constant {
                b_bar: Mat::from_flat(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]),
            },
            OutputMapSpec::Constant { c: Mat::from_flat(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]) },
            PassthroughSpec::Identity,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_constant() {
        let spec = constant_spec();
        let text = to_text(&spec);
        let parsed = from_text(&text).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn round_trip_selective() {
        let spec = SsmLayerSpec::new(
            2,
            2,
            TransitionSpec::DiagonalSelective {
                a_diag: vec![-1.0, -0.5],
                delta_bias: vec![0.1, 0.2],
                pi_delta: AffineVecMap::new(
                    Mat::from_flat(2, 2, &[0.3, -0.1, 0.0, 0.2]),
                    vec![0.0, 0.0],
                )
                .unwrap(),
            },
            InputMapSpec::S6Discretized {
                pi_b: AffineMatMap::new(
                    2,
                    2,
                    Mat::zeros(4, 2),
                    Mat::from_flat(2, 2, &[1.0, 0.0, 0.0, 1.0]),
                )
                .unwrap(),
            },
            OutputMapSpec::Constant { c: Mat::identity(2) },
            PassthroughSpec::Identity,
        )
        .unwrap();
        let parsed = from_text(&to_text(&spec)).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(from_text("nonsense"), Err(ParseError::BadLine(1))));
        assert!(matches!(from_text("bogus = 1"), Err(ParseError::UnknownKey(_))));
        let text = to_text(&constant_spec());
        let truncated: String =
            text.lines().filter(|l| !l.starts_with("a_bar")).collect::<Vec<_>>().join("\n");
        assert!(matches!(from_text(&truncated), Err(ParseError::MissingKey(_))));
        let doubled = format!("{text}input_dim = 2\n");
        assert!(matches!(from_text(&doubled), Err(ParseError::DuplicateKey(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let text = "input_dim = 2\nstate_dim = 3\ntransition = constant\na_bar = [2x2] 1 0 0 1\n\
                    input_map = constant\nb_bar = [3x2] 1 0 0 1 0 0\noutput_map = constant\n\
                    c = [2x3] 1 0 0 0 1 0\npassthrough = identity\n";
        assert!(matches!(from_text(text), Err(ParseError::Invalid(_))));
    }
}
