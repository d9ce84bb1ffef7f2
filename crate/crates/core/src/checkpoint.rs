//! Plain-text container for named tensors.
//!
//! ```text
//! swproj-checkpoint 1
//! kind <tag>
//! meta <key> <value>          (zero or more)
//! tensor <name> <rank> <dim>...
//! <values separated by single spaces, one line>
//! ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip exponent form, so
//! `load(save(x))` reproduces every bit.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "swproj-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn token_ok(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Bundle {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("checkpoint missing meta key {key}")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        let v = self.meta_value(key)?;
        v.parse()
            .map_err(|_| Error::Parse(format!("checkpoint meta {key}={v} is not an integer")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Parse(format!("checkpoint missing tensor {name}")))
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        if !token_ok(&self.kind) {
            return Err(Error::invalid("checkpoint kind must be a single token"));
        }
        out.push_str(&format!("kind {}\n", self.kind));
        for (k, v) in &self.meta {
            if !token_ok(k) || !token_ok(v) {
                return Err(Error::invalid("checkpoint meta entries must be single tokens"));
            }
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            if !token_ok(name) {
                return Err(Error::invalid("tensor names must be single tokens"));
            }
            out.push_str(&format!("tensor {name} {}", t.ndim()));
            for s in t.shape() {
                out.push_str(&format!(" {s}"));
            }
            out.push('\n');
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse(format!("checkpoint: {msg}"));
        let mut lines = text.split('\n');
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header".into()));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .filter(|k| token_ok(k))
            .ok_or_else(|| bad("missing kind line".into()))?
            .to_string();
        let mut bundle = Bundle::new(kind);
        loop {
            let line = lines.next().ok_or_else(|| bad("missing end marker".into()))?;
            if line == "end" {
                break;
            }
            let toks: Vec<&str> = line.split(' ').collect();
            match toks.as_slice() {
                ["meta", k, v] => bundle.meta.push((k.to_string(), v.to_string())),
                ["tensor", name, rank, dims @ ..] => {
                    let rank: usize = rank.parse().map_err(|_| bad(format!("bad rank in {line:?}")))?;
                    if dims.len() != rank {
                        return Err(bad(format!("rank/shape mismatch in {line:?}")));
                    }
                    let shape = dims
                        .iter()
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad shape in {line:?}")))?;
                    let values_line = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
                    let data = if values_line.is_empty() {
                        Vec::new()
                    } else {
                        values_line
                            .split(' ')
                            .map(|s| s.parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| bad(format!("bad value in tensor {name}")))?
                    };
                    let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
                    bundle.tensors.push((name.to_string(), t));
                }
                _ => return Err(bad(format!("unexpected line {line:?}"))),
            }
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(bad("content after end marker".into()));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
