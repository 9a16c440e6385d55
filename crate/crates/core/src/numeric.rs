//! Sample sets, seeded randomness, uniform sphere sampling and projection.
//!
//! # Random stream
//!
//! [`RngState`] is xoshiro256++ seeded through SplitMix64 (the reference
//! seeding procedure of the xoshiro family). Uniform reals take the top 53
//! bits of a 64-bit output, standard normals come from the ziggurat sampler
//! of `rand_distr`. Identical seeds therefore give identical integer streams
//! on every platform. [`RngState::fork`] derives an independent stream from a
//! parent seed and a stream index, which is how benchmark runs get their own
//! generators without sharing state.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{invalid, Error, Result};

/// An `N x d` set of finite points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n_points: usize,
    dim: usize,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, n_points: usize, dim: usize) -> Result<Self> {
        if n_points == 0 || dim == 0 {
            return Err(invalid(format!(
                "sample set needs at least one point and one dimension, got {n_points}x{dim}"
            )));
        }
        if data.len() != n_points * dim {
            return Err(invalid(format!(
                "sample data has {} values, expected {n_points}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite coordinate at point {}, axis {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { data, n_points, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(invalid(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), dim)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw coordinates. Callers are responsible for
    /// keeping them finite; [`SampleSet::is_finite`] rechecks.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies one coordinate axis into a new vector.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.rows().map(|r| r[axis]).collect()
    }

    /// Parses a point list: one point per line, coordinates separated by
    /// whitespace and/or commas. Blank lines and lines starting with `#` are
    /// skipped.
    pub fn parse_points(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut dim = None;
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut count = 0;
            for field in line.split(|c: char| c == ',' || c.is_whitespace()) {
                if field.is_empty() {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {}: cannot parse '{field}' as a number", lineno + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("line {}: non-finite value", lineno + 1)));
                }
                data.push(v);
                count += 1;
            }
            match dim {
                None => dim = Some(count),
                Some(d) if d != count => {
                    return Err(Error::Parse(format!(
                        "line {}: expected {d} coordinates, found {count}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            n += 1;
        }
        let dim = dim.ok_or_else(|| Error::Parse("point list contains no points".into()))?;
        Self::new(data, n, dim)
    }

    /// Writes the points one per line, comma separated, in shortest
    /// round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// A unit vector on the sphere `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalises `v` to unit length.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !(norm.is_finite() && norm > 0.0) {
            return Err(invalid("direction must be a finite non-zero vector"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(v))
    }

    /// Wraps an already-unit vector, checking the norm to 1e-9.
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || (norm - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("direction norm {norm} is not 1")));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Deterministic random stream (xoshiro256++).
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `stream`. Does not advance `self`.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        self.inner.sample(Open01)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws `count` i.i.d. uniform directions on `S^{dim-1}` by normalising
/// standard normal vectors.
pub fn sample_directions(rng: &mut RngState, count: usize, dim: usize) -> Result<Vec<Direction>> {
    if count == 0 || dim == 0 {
        return Err(invalid(format!(
            "need count >= 1 and dim >= 1, got count={count}, dim={dim}"
        )));
    }
    Ok((0..count).map(|_| random_direction(rng, dim)).collect())
}

pub(crate) fn random_direction(rng: &mut RngState, dim: usize) -> Direction {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        // an all-zero draw has probability zero but would break normalisation
        if norm2 > 1e-300 {
            let norm = norm2.sqrt();
            return Direction(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// Dot product of every point with `direction`.
pub fn project(samples: &SampleSet, direction: &Direction) -> Result<Vec<f64>> {
    if samples.dim() != direction.dim() {
        return Err(invalid(format!(
            "sample dimension {} does not match direction dimension {}",
            samples.dim(),
            direction.dim()
        )));
    }
    let mut out = Vec::with_capacity(samples.n_points());
    project_into(samples, direction.as_slice(), &mut out);
    Ok(out)
}

pub(crate) fn project_into(samples: &SampleSet, theta: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(samples.rows().map(|r| r.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()));
}
