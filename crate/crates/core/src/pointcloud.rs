//! Point clouds as uniform empirical measures, plus the XYZ-table file format
//! and synthetic shape generators.
//!
//! XYZ-table layout: a header line `"m d"`, then `m` lines of `d`
//! space-separated decimal floats, LF line endings, no comments. The writer
//! uses Rust's shortest round-trip `Display` for every value.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{child_rng, rng_from_seed};

/// `m` points in `R^d`, each carrying mass `1/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Tensor,
}

impl PointCloud {
    pub fn new(points: Tensor) -> Result<Self> {
        match points.shape() {
            [m, d] if *m >= 1 && *d >= 1 => {}
            s => return Err(Error::shape("PointCloud", format!("need m x d with m, d >= 1, got {:?}", s))),
        }
        if !points.is_finite() {
            return Err(Error::NonFinite("PointCloud"));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn m(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.points.shape()[1]
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn into_tensor(self) -> Tensor {
        self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.d()];
        for i in 0..self.m() {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        acc.iter().map(|v| v / self.m() as f64).collect()
    }

    /// Cloud shifted by a constant vector.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d() {
            return Err(Error::shape("translated", format!("shift of length {} for d={}", shift.len(), self.d())));
        }
        let c = self.d();
        let data = self
            .points
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| v + shift[k % c])
            .collect();
        Self::new(Tensor::matrix(self.m(), c, data)?)
    }

    pub fn to_xyz_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.m(), self.d());
        for i in 0..self.m() {
            let row = self.row(i);
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{}", v);
            }
            s.push('\n');
        }
        s
    }
}

impl FromStr for PointCloud {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        if text.contains('\r') {
            return Err(Error::Parse("CR line endings are not allowed".into()));
        }
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or("");
        let dims: Vec<&str> = header.split(' ').collect();
        let parse_dim = |s: &str| -> Result<usize> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::Parse(format!("malformed header {:?}", header)));
            }
            s.parse().map_err(|_| Error::Parse(format!("malformed header {:?}", header)))
        };
        let (m, d) = match dims.as_slice() {
            [a, b] => (parse_dim(a)?, parse_dim(b)?),
            _ => return Err(Error::Parse(format!("malformed header {:?}", header))),
        };
        if m == 0 || d == 0 {
            return Err(Error::Parse(format!("header declares empty cloud {:?}", header)));
        }
        let mut data = Vec::with_capacity(m * d);
        for r in 0..m {
            let line = lines
                .next()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| Error::Parse(format!("expected {} rows, found {}", m, r)))?;
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != d {
                return Err(Error::Parse(format!(
                    "row {} has {} values, expected {}",
                    r + 1,
                    fields.len(),
                    d
                )));
            }
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {:?}", r + 1, f)))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("row {}: non-finite value {:?}", r + 1, f)));
                }
                data.push(v);
            }
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(Error::Parse(format!("more than {} rows", m)));
        }
        PointCloud::new(Tensor::matrix(m, d, data)?)
    }
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    text.parse()
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, cloud.to_xyz_string())?;
    Ok(())
}

/// Source and reconstruction (or any two clouds) of equal size and dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudPair {
    pub source: PointCloud,
    pub target: PointCloud,
}

impl CloudPair {
    pub fn new(source: PointCloud, target: PointCloud) -> Result<Self> {
        if source.m() != target.m() || source.d() != target.d() {
            return Err(Error::shape(
                "CloudPair",
                format!("{}x{} vs {}x{}", source.m(), source.d(), target.m(), target.d()),
            ));
        }
        Ok(Self { source, target })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    SphereShell,
    CubeSurface,
    PlaneGrid,
    GaussianBlob,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::SphereShell,
        ShapeKind::CubeSurface,
        ShapeKind::PlaneGrid,
        ShapeKind::GaussianBlob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::SphereShell => "sphere-shell",
            ShapeKind::CubeSurface => "cube-surface",
            ShapeKind::PlaneGrid => "plane-grid",
            ShapeKind::GaussianBlob => "gaussian-blob",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape kind {:?}", s)))
    }
}

/// Deterministic synthetic cloud of `m` points in `R^d`, `d` in {2, 3}.
pub fn synth_cloud(kind: ShapeKind, m: usize, d: usize, seed: u64) -> Result<PointCloud> {
    if !(d == 2 || d == 3) {
        return Err(Error::invalid(format!("synthetic shapes need d in {{2, 3}}, got {}", d)));
    }
    if m == 0 {
        return Err(Error::invalid("synthetic cloud needs m >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(m * d);
    match kind {
        ShapeKind::SphereShell => {
            for _ in 0..m {
                loop {
                    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > 1e-8 {
                        data.extend(g.iter().map(|v| v / n));
                        break;
                    }
                }
            }
        }
        ShapeKind::CubeSurface => {
            for _ in 0..m {
                let face = rng.random_range(0..d);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for k in 0..d {
                    data.push(if k == face { sign } else { rng.random_range(-1.0..=1.0) });
                }
            }
        }
        ShapeKind::PlaneGrid => {
            let side = (m as f64).powf(1.0 / (d - 1) as f64).ceil().max(1.0) as usize;
            let step = if side > 1 { 2.0 / (side - 1) as f64 } else { 0.0 };
            let jitter = 0.25 * step;
            for i in 0..m {
                let mut idx = i;
                for _ in 0..d - 1 {
                    let c = idx % side;
                    idx /= side;
                    let base = if side > 1 { -1.0 + c as f64 * step } else { 0.0 };
                    let off = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
                    data.push(base + off);
                }
                data.push(0.0);
            }
        }
        ShapeKind::GaussianBlob => {
            for _ in 0..m * d {
                data.push(rng.sample(StandardNormal));
            }
        }
    }
    PointCloud::new(Tensor::matrix(m, d, data)?)
}

/// `count` clouds cycling through `kinds`, each with its own derived seed.
pub fn synth_dataset(kinds: &[ShapeKind], count: usize, m: usize, d: usize, seed: u64) -> Result<Vec<PointCloud>> {
    if kinds.is_empty() {
        return Err(Error::invalid("synth_dataset needs at least one kind"));
    }
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            let s = crate::rng::derive_seed(seed, &[i as u64]);
            synth_cloud(kind, m, d, s)
        })
        .collect()
}

/// Random pairs of synthetic clouds of mixed kinds, each randomly scaled and
/// shifted so that pairs differ both in shape and in position.
pub fn synth_pairs(kinds: &[ShapeKind], count: usize, m: usize, d: usize, seed: u64) -> Result<Vec<CloudPair>> {
    if kinds.is_empty() {
        return Err(Error::invalid("synth_pairs needs at least one kind"));
    }
    (0..count)
        .map(|i| {
            let mut rng = child_rng(seed, &[i as u64]);
            let one = |rng: &mut crate::rng::SwRng| -> Result<PointCloud> {
                let kind = kinds[rng.random_range(0..kinds.len())];
                let base = synth_cloud(kind, m, d, rng.random())?;
                let scale = rng.random_range(0.5..1.5);
                let shift: Vec<f64> = (0..d).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
                let data = base
                    .points()
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| scale * v + shift[k % d])
                    .collect();
                PointCloud::new(Tensor::matrix(m, d, data)?)
            };
            let a = one(&mut rng)?;
            let b = one(&mut rng)?;
            CloudPair::new(a, b)
        })
        .collect()
}

/// Reorders rows: row `i` of the output is row `sigma[i]` of the input.
pub fn permute(cloud: &PointCloud, sigma: &[usize]) -> Result<PointCloud> {
    let m = cloud.m();
    if sigma.len() != m {
        return Err(Error::invalid(format!("permutation of length {} for m={}", sigma.len(), m)));
    }
    let mut seen = vec![false; m];
    for &s in sigma {
        if s >= m || seen[s] {
            return Err(Error::invalid("sigma is not a permutation"));
        }
        seen[s] = true;
    }
    let d = cloud.d();
    let mut data = Vec::with_capacity(m * d);
    for &s in sigma {
        data.extend_from_slice(cloud.row(s));
    }
    PointCloud::new(Tensor::matrix(m, d, data)?)
}
