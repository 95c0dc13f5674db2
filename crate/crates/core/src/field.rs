//! Space-time nodal containers.
//!
//! Fields are stored time-major: row `j` holds the spatial slice at `t_j`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSpaceField {
    n_time: usize,
    n_space: usize,
    data: Vec<f64>,
}

impl TimeSpaceField {
    pub fn zeros(n_time: usize, n_space: usize) -> Self {
        Self {
            n_time,
            n_space,
            data: vec![0.0; n_time * n_space],
        }
    }

    pub fn from_fn(n_time: usize, n_space: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_time * n_space);
        for j in 0..n_time {
            for i in 0..n_space {
                data.push(f(j, i));
            }
        }
        Self {
            n_time,
            n_space,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_space = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_space) {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {n_space}"),
                found: format!("row of length {}", bad.len()),
            });
        }
        Ok(Self {
            n_time: rows.len(),
            n_space,
            data: rows.concat(),
        })
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_time, self.n_space)
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_space..(j + 1) * self.n_space]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_space..(j + 1) * self.n_space]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_space.max(1)).take(self.n_time)
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let n = self.n_space.max(1);
        self.data.chunks_mut(n)
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.n_space + i]
    }

    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.data[j * self.n_space + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &TimeSpaceField) {
        assert_eq!(self.shape(), other.shape());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Field with the time axis reversed.
    pub fn reversed_in_time(&self) -> Self {
        Self::from_fn(self.n_time, self.n_space, |j, i| self.get(self.n_time - 1 - j, i))
    }

    pub(crate) fn check_shape(&self, n_time: usize, n_space: usize) -> Result<()> {
        if self.shape() != (n_time, n_space) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_time}x{n_space}"),
                found: format!("{}x{}", self.n_time, self.n_space),
            });
        }
        Ok(())
    }
}

/// A space-time vector field with one temporal and three ambient spatial
/// components, e.g. `q = (a, b)` or `σ = (ρ, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSpaceFlux {
    pub temporal: TimeSpaceField,
    pub spatial: [TimeSpaceField; 3],
}

impl TimeSpaceFlux {
    pub fn zeros(n_time: usize, n_space: usize) -> Self {
        let z = TimeSpaceField::zeros(n_time, n_space);
        Self {
            temporal: z.clone(),
            spatial: [z.clone(), z.clone(), z],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.temporal.shape()
    }

    pub fn components(&self) -> [&TimeSpaceField; 4] {
        [&self.temporal, &self.spatial[0], &self.spatial[1], &self.spatial[2]]
    }

    pub fn components_mut(&mut self) -> [&mut TimeSpaceField; 4] {
        let [x, y, z] = &mut self.spatial;
        [&mut self.temporal, x, y, z]
    }

    pub fn spatial_at(&self, j: usize, i: usize) -> [f64; 3] {
        [
            self.spatial[0].get(j, i),
            self.spatial[1].get(j, i),
            self.spatial[2].get(j, i),
        ]
    }

    pub fn set_spatial_at(&mut self, j: usize, i: usize, v: [f64; 3]) {
        for (c, x) in self.spatial.iter_mut().zip(v) {
            c.set(j, i, x);
        }
    }

    pub fn axpy(&mut self, a: f64, other: &TimeSpaceFlux) {
        for (x, y) in self.components_mut().into_iter().zip(other.components()) {
            x.axpy(a, y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }

    pub(crate) fn check_shape(&self, n_time: usize, n_space: usize) -> Result<()> {
        for c in self.components() {
            c.check_shape(n_time, n_space)?;
        }
        Ok(())
    }
}
