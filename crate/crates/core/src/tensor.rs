//! Dense binary32 tensors, seeded generation, and the LFTN file format.
//!
//! LFTN layout (all integers little-endian, no padding, no footer):
//!
//! ```text
//! "LFTN" | version: u32 = 1 | rank: u32 | dims: rank x u64 | payload: prod(dims) x f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{shape, validation, Error, Result};
use crate::rng::SeededRng;

pub const LFTN_MAGIC: &[u8; 4] = b"LFTN";
pub const LFTN_VERSION: u32 = 1;

/// Row-major binary32 tensor. Immutable once built; every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(validation(format!("dimension {pos} is zero in {dims:?}")));
        }
        let len = checked_len(&dims)?;
        if len != data.len() {
            return Err(shape(format!(
                "dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(validation(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    /// Rank-2 constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = checked_len(dims)?;
        Self::new(dims.to_vec(), vec![0.0; len])
    }

    /// Internal constructor for kernel outputs whose shape and finiteness
    /// are guaranteed by construction.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, data }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(shape(format!("expected a matrix, got dims {other:?}"))),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.dims.len() < 2 {
            1
        } else {
            self.dims[1..].iter().product()
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| validation(format!("element count of {dims:?} overflows")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    StandardNormal,
    Uniform01,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard_normal" | "normal" => Ok(Self::StandardNormal),
            "uniform01" | "uniform" => Ok(Self::Uniform01),
            other => Err(validation(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Deterministic tensor for fixed `(dims, seed, dist)`; see [`crate::rng`]
/// for the pinned stream.
pub fn random_tensor(dims: &[usize], seed: u64, dist: Distribution) -> Result<Tensor> {
    if dims.is_empty() {
        return Err(validation("random_tensor needs at least one dimension"));
    }
    if dims.contains(&0) {
        return Err(validation(format!("dims must be positive, got {dims:?}")));
    }
    let len = checked_len(dims)?;
    let mut rng = SeededRng::new(seed);
    let data = match dist {
        Distribution::StandardNormal => (0..len).map(|_| rng.standard_normal() as f32).collect(),
        Distribution::Uniform01 => (0..len).map(|_| rng.uniform01()).collect(),
    };
    Tensor::new(dims.to_vec(), data)
}

pub fn encode_lftn(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.rank() + 4 * t.len());
    out.extend_from_slice(LFTN_MAGIC);
    out.extend_from_slice(&LFTN_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_lftn(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = bytes;
    let magic = take(&mut cur, 4).ok_or_else(|| Error::Format("missing magic".into()))?;
    if magic != LFTN_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}")));
    }
    let version = take_u32(&mut cur).ok_or_else(|| Error::Format("missing version".into()))?;
    if version != LFTN_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rank = take_u32(&mut cur).ok_or_else(|| Error::Format("missing rank".into()))? as usize;
    let mut dims = Vec::with_capacity(rank.min(64));
    for axis in 0..rank {
        let d = take(&mut cur, 8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::Format(format!("header ends before dim {axis}")))?;
        let d = usize::try_from(d)
            .map_err(|_| Error::Format(format!("dim {axis} = {d} does not fit in memory")))?;
        dims.push(d);
    }
    let expected = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| Error::Format(format!("element count of {dims:?} overflows")))?;
    if cur.len() as u64 != expected.saturating_mul(4) {
        return Err(Error::Truncated {
            expected,
            found: cur.len() as u64 / 4,
        });
    }
    let data = cur
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data)
}

fn take<'a>(cur: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    if cur.len() < n {
        return None;
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Some(head)
}

fn take_u32(cur: &mut &[u8]) -> Option<u32> {
    take(cur, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_lftn(&fs::read(path)?)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_lftn(t))?;
    f.flush()?;
    Ok(())
}
