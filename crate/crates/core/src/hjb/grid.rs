use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Box `[0, upper_0] x ... x [0, upper_{d-1}]` enumerated row-major, last
/// coordinate fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    upper: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(upper: Vec<i64>) -> Result<Self> {
        if upper.is_empty() {
            return Err(Error::InvalidArgument(
                "lattice needs at least one coordinate".into(),
            ));
        }
        if let Some(&u) = upper.iter().find(|&&u| u < 0) {
            return Err(Error::InvalidArgument(format!(
                "negative lattice bound {u}"
            )));
        }
        let mut strides = vec![1usize; upper.len()];
        let mut len = 1usize;
        for k in (0..upper.len()).rev() {
            strides[k] = len;
            len = len
                .checked_mul(upper[k] as usize + 1)
                .ok_or_else(|| Error::InvalidArgument("lattice too large".into()))?;
        }
        Ok(Self {
            upper,
            strides,
            len,
        })
    }

    pub fn dims(&self) -> usize {
        self.upper.len()
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of `s` after clamping every coordinate into the box.
    #[inline]
    pub fn index_clamped(&self, s: &[i64]) -> usize {
        let mut idx = 0;
        for ((&v, &u), &st) in s.iter().zip(&self.upper).zip(&self.strides) {
            idx += v.clamp(0, u) as usize * st;
        }
        idx
    }

    /// Index of `max(0, s + shift)` clamped into the box.
    #[inline]
    pub fn index_shifted(&self, s: &[i64], shift: &[i64]) -> usize {
        self.index_from(s.iter().zip(shift).map(|(&v, &d)| v + d))
    }

    /// Index of the state with the given coordinates, clamped into the box.
    #[inline]
    pub fn index_from(&self, coords: impl Iterator<Item = i64>) -> usize {
        let mut idx = 0;
        for ((v, &u), &st) in coords.zip(&self.upper).zip(&self.strides) {
            idx += v.clamp(0, u) as usize * st;
        }
        idx
    }

    pub fn contains(&self, s: &[i64]) -> bool {
        s.len() == self.dims()
            && s.iter()
                .zip(&self.upper)
                .all(|(&v, &u)| (0..=u).contains(&v))
    }

    pub fn state(&self, mut idx: usize) -> Vec<i64> {
        let mut s = vec![0; self.dims()];
        for (k, &st) in self.strides.iter().enumerate() {
            s[k] = (idx / st) as i64;
            idx %= st;
        }
        s
    }

    pub fn states(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len).map(|i| self.state(i))
    }
}

/// Value function `u(t, s)` stored at decreasing solver time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunctionGrid {
    lattice: Lattice,
    times: Vec<f64>,
    values: Vec<f64>,
    u_floor: f64,
}

const GRID_MAGIC: &str = "mpis-value-grid";
const GRID_VERSION: u32 = 1;

impl ValueFunctionGrid {
    /// `values` holds one row of `lattice.len()` entries per time node.
    pub fn new(lattice: Lattice, times: Vec<f64>, values: Vec<f64>, u_floor: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("value grid has no time nodes".into()));
        }
        if times.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidGrid(
                "time nodes must be strictly decreasing".into(),
            ));
        }
        if values.len() != times.len() * lattice.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                times.len() * lattice.len(),
                values.len()
            )));
        }
        if !(u_floor > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "floor must be positive, got {u_floor}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= u_floor) || !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "stored value {v} below floor {u_floor}"
            )));
        }
        Ok(Self {
            lattice,
            times,
            values,
            u_floor,
        })
    }

    /// Grid with a single value everywhere on `[0, final_time]`.
    pub fn constant(lattice: Lattice, final_time: f64, value: f64) -> Result<Self> {
        let n = lattice.len();
        Self::new(
            lattice,
            vec![final_time, 0.0],
            vec![value; 2 * n],
            value.min(1e-30),
        )
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn time_nodes(&self) -> &[f64] {
        &self.times
    }

    pub fn u_floor(&self) -> f64 {
        self.u_floor
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the `k`-th time node.
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.lattice.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn final_time(&self) -> f64 {
        self.times[0]
    }

    /// Node index `k` and weight `w` with `u(t) = (1 - w) u_k + w u_{k+1}`.
    #[inline]
    pub fn bracket(&self, t: f64) -> (usize, f64) {
        let times = &self.times;
        let last = times.len() - 1;
        if last == 0 || t >= times[0] {
            return (0, 0.0);
        }
        if t <= times[last] {
            return (last, 0.0);
        }
        // first node strictly below t
        let hi = times.partition_point(|&s| s >= t);
        let k = hi - 1;
        let w = (times[k] - t) / (times[k] - times[hi]);
        (k, w)
    }

    #[inline]
    pub fn value_at(&self, bracket: (usize, f64), idx: usize) -> f64 {
        let (k, w) = bracket;
        let n = self.lattice.len();
        let a = self.values[k * n + idx];
        if w == 0.0 {
            a
        } else {
            let b = self.values[(k + 1) * n + idx];
            (1.0 - w) * a + w * b
        }
    }

    /// Linear in `t`, state clamped to the box.
    pub fn value(&self, t: f64, s: &[i64]) -> f64 {
        self.value_at(self.bracket(t), self.lattice.index_clamped(s))
    }

    /// SHA-256 of the text export, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{GRID_MAGIC} {GRID_VERSION}");
        let upper: Vec<String> = self.lattice.upper().iter().map(|u| u.to_string()).collect();
        let _ = writeln!(out, "upper {}", upper.join(" "));
        let _ = writeln!(out, "u_floor {:e}", self.u_floor);
        let _ = writeln!(out, "nodes {}", self.times.len());
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:e}");
            for v in self.row(k) {
                let _ = write!(out, " {v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let what = "value grid";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(what, format!("missing `{key}` line")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::parse(
                    what,
                    format!("expected `{key}`, got `{line}`"),
                ));
            }
            Ok(it.map(str::to_owned).collect())
        };
        let header = next(GRID_MAGIC)?;
        if header.len() != 1 || header[0] != GRID_VERSION.to_string() {
            return Err(Error::parse(
                what,
                format!("unsupported version {header:?}"),
            ));
        }
        let upper = parse_all::<i64>(&next("upper")?, what)?;
        let u_floor = parse_one::<f64>(&next("u_floor")?, what)?;
        let nodes = parse_one::<usize>(&next("nodes")?, what)?;
        let lattice = Lattice::new(upper)?;
        let mut times = Vec::with_capacity(nodes);
        let mut values = Vec::with_capacity(nodes * lattice.len());
        for k in 0..nodes {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(what, format!("missing row {k}")))?;
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(what, format!("row {k}: {e}")))?;
            if row.len() != lattice.len() + 1 {
                return Err(Error::parse(
                    what,
                    format!(
                        "row {k} has {} fields, expected {}",
                        row.len(),
                        lattice.len() + 1
                    ),
                ));
            }
            times.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        if lines.next().is_some() {
            return Err(Error::parse(what, "trailing data after last row"));
        }
        Self::new(lattice, times, values, u_floor)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn parse_one<T: std::str::FromStr>(fields: &[String], what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if fields.len() != 1 {
        return Err(Error::parse(
            what,
            format!("expected one value, got {fields:?}"),
        ));
    }
    fields[0]
        .parse()
        .map_err(|e: T::Err| Error::parse(what, format!("`{}`: {e}", fields[0])))
}

pub(crate) fn parse_all<T: std::str::FromStr>(fields: &[String], what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    fields
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|e: T::Err| Error::parse(what, format!("`{f}`: {e}")))
        })
        .collect()
}
