//! Uniform cell-centered lattice on a truncated box `[−L, L]^N`, `N ∈ {1, 2}`,
//! and scalar fields sampled on it.
//!
//! Cell centers sit at `x_i = −L + (i + 1/2) h` per axis with `h = 2L/n`, so
//! no node ever lies on the box boundary and symmetric kernel stencils never
//! hit the diagonal singularity.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MIN_POINTS_PER_AXIS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Solution extended by zero outside the box; jumps out of the box are
    /// accounted for by a diagonal leak coefficient. Default for Cauchy-problem
    /// experiments.
    ExteriorZero,
    /// Torus topology. Provided for spectral operator cross-validation.
    Periodic,
}

/// Uniform spatial discretization of `[−L, L]^N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
    spacing: f64,
    boundary_mode: BoundaryMode,
}

impl Grid {
    pub fn new(
        dim: usize,
        half_width: f64,
        points_per_axis: usize,
        boundary_mode: BoundaryMode,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "half_width must be positive and finite, got {half_width}"
            )));
        }
        if points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be even, got {points_per_axis}"
            )));
        }
        if points_per_axis < MIN_POINTS_PER_AXIS {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be at least {MIN_POINTS_PER_AXIS}, got {points_per_axis}"
            )));
        }
        let spacing = 2.0 * half_width / points_per_axis as f64;
        Ok(Grid {
            dim,
            half_width,
            points_per_axis,
            spacing,
            boundary_mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Lattice spacing `h = 2L/n` (derived, never stored independently).
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.boundary_mode
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary_mode == BoundaryMode::Periodic
    }

    pub fn cell_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Coordinate of the `i`-th cell center along one axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    /// Center of the cell with flat index `idx` (row-major for N = 2).
    /// The second component is zero in one dimension.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.axis_coord(idx), 0.0],
            _ => {
                let n = self.points_per_axis;
                [self.axis_coord(idx / n), self.axis_coord(idx % n)]
            }
        }
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        debug_assert_eq!(self.dim, 2);
        i * self.points_per_axis + j
    }

    /// Displacement `b − a` per axis, wrapped to the fundamental domain in
    /// periodic mode.
    pub fn displacement(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mut d = [b[0] - a[0], b[1] - a[1]];
        if self.is_periodic() {
            let period = 2.0 * self.half_width;
            for v in d.iter_mut().take(self.dim) {
                if *v > self.half_width {
                    *v -= period;
                } else if *v < -self.half_width {
                    *v += period;
                }
            }
        }
        d
    }

    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = self.displacement(a, b);
        match self.dim {
            1 => d[0].abs(),
            _ => d[0].hypot(d[1]),
        }
    }

    /// Indices of cells whose centers lie in the open ball `B_radius(center)`.
    /// Deterministic ordering (ascending flat index).
    pub fn ball_restriction(&self, center: [f64; 2], radius: f64) -> Result<Vec<usize>> {
        if !(radius > 0.0) || radius < 0.5 * self.spacing {
            return Err(Error::DegenerateBall {
                radius,
                spacing: self.spacing,
            });
        }
        let idx: Vec<usize> = (0..self.cell_count())
            .filter(|&i| self.distance(center, self.cell_center(i)) < radius)
            .collect();
        if idx.is_empty() {
            return Err(Error::DegenerateBall {
                radius,
                spacing: self.spacing,
            });
        }
        Ok(idx)
    }
}

/// Scalar field sampled at the cell centers of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value {v}")));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            values: vec![0.0; grid.cell_count()],
            grid,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field {
            values: vec![c; grid.cell_count()],
            grid,
        }
    }

    /// Sample `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.cell_count())
            .map(|i| f(grid.cell_center(i)))
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Midpoint quadrature `hᴺ Σ_i v_i`.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// `hᴺ Σ_i |v_i|^p`, the discrete `p`-th power of the `L^p` norm.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `hᴺ Σ |a_i − b_i|`.
    pub fn l1_distance(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Linear interpolation of the field at an arbitrary point of the box.
    /// Outside the sampled hull the zero extension is returned.
    pub fn interpolate(&self, x: [f64; 2]) -> f64 {
        match self.grid.dim() {
            1 => self.interpolate_1d(x[0]),
            _ => self.interpolate_2d(x),
        }
    }

    fn interpolate_1d(&self, x: f64) -> f64 {
        let g = &self.grid;
        let s = (x + g.half_width()) / g.spacing() - 0.5;
        if s <= -1.0 || s >= g.points_per_axis() as f64 {
            return 0.0;
        }
        let i0 = s.floor();
        let frac = s - i0;
        let i0 = i0 as isize;
        let at = |i: isize| -> f64 {
            if i < 0 || i >= g.points_per_axis() as isize {
                0.0
            } else {
                self.values[i as usize]
            }
        };
        at(i0) * (1.0 - frac) + at(i0 + 1) * frac
    }

    fn interpolate_2d(&self, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        let n = g.points_per_axis() as isize;
        let sx = (x[0] + g.half_width()) / g.spacing() - 0.5;
        let sy = (x[1] + g.half_width()) / g.spacing() - 0.5;
        if sx <= -1.0 || sx >= n as f64 || sy <= -1.0 || sy >= n as f64 {
            return 0.0;
        }
        let (ix, fx) = (sx.floor() as isize, sx - sx.floor());
        let (iy, fy) = (sy.floor() as isize, sy - sy.floor());
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || i >= n || j < 0 || j >= n {
                0.0
            } else {
                self.values[(i * n + j) as usize]
            }
        };
        at(ix, iy) * (1.0 - fx) * (1.0 - fy)
            + at(ix + 1, iy) * fx * (1.0 - fy)
            + at(ix, iy + 1) * (1.0 - fx) * fy
            + at(ix + 1, iy + 1) * fx * fy
    }

    /// CSV snapshot: one row per cell with coordinates and value.
    pub fn write_csv(&self, path: &Path, time: f64) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        writeln!(
            w,
            "# dim={} n={} half_width={:.17e} t={:.17e}",
            self.grid.dim(),
            self.grid.points_per_axis(),
            self.grid.half_width(),
            time
        )?;
        if self.grid.dim() == 1 {
            writeln!(w, "x,value")?;
            for (i, v) in self.values.iter().enumerate() {
                writeln!(w, "{:.17e},{:.17e}", self.grid.axis_coord(i), v)?;
            }
        } else {
            writeln!(w, "x,y,value")?;
            for (i, v) in self.values.iter().enumerate() {
                let c = self.grid.cell_center(i);
                writeln!(w, "{:.17e},{:.17e},{:.17e}", c[0], c[1], v)?;
            }
        }
        Ok(())
    }

    /// Flat binary snapshot. Little-endian header
    /// `[dim: u64, n: u64, half_width: f64, time: f64]` followed by the
    /// row-major `f64` payload.
    pub fn write_binary(&self, path: &Path, time: f64) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        w.write_all(&(self.grid.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        w.write_all(&time.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a binary snapshot written by [`Field::write_binary`]. Returns the
    /// field and its time stamp.
    pub fn read_binary(path: &Path, boundary_mode: BoundaryMode) -> Result<(Field, f64)> {
        let mut f = std::fs::File::open(path)?;
        let mut header = [0u8; 32];
        f.read_exact(&mut header)
            .map_err(|_| Error::MalformedData("binary field header truncated".into()))?;
        let dim = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let half_width = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let time = f64::from_le_bytes(header[24..32].try_into().unwrap());
        let grid = Grid::new(dim, half_width, n, boundary_mode)?;
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;
        if payload.len() != 8 * grid.cell_count() {
            return Err(Error::MalformedData(format!(
                "expected {} payload bytes, got {}",
                8 * grid.cell_count(),
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Field::new(grid, values)?, time))
    }

    /// Read a CSV snapshot written by [`Field::write_csv`].
    pub fn read_csv(path: &Path, boundary_mode: BoundaryMode) -> Result<(Field, f64)> {
        let f = std::fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedData("empty field csv".into()))??;
        let mut dim = 0usize;
        let mut n = 0usize;
        let mut half_width = f64::NAN;
        let mut time = f64::NAN;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "dim" => dim = v.parse().unwrap_or(0),
                    "n" => n = v.parse().unwrap_or(0),
                    "half_width" => half_width = v.parse().unwrap_or(f64::NAN),
                    "t" => time = v.parse().unwrap_or(f64::NAN),
                    _ => {}
                }
            }
        }
        let grid = Grid::new(dim, half_width, n, boundary_mode)?;
        let mut values = Vec::with_capacity(grid.cell_count());
        for line in lines {
            let line = line?;
            if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue; // column header
            }
            let v = line
                .rsplit(',')
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::MalformedData(format!("bad csv row: {line}")))?;
            values.push(v);
        }
        Ok((Field::new(grid, values)?, time))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn g1(half_width: f64, n: usize) -> Grid {
        Grid::new(1, half_width, n, BoundaryMode::ExteriorZero).unwrap()
    }

    #[test]
    fn grid_spacing_is_derived() {
        let g = g1(50.0, 1024);
        assert_eq!(g.spacing(), 0.09765625);
        assert_eq!(g.spacing() * g.points_per_axis() as f64, 2.0 * g.half_width());
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(1, 1.0, 15, BoundaryMode::ExteriorZero).is_err());
        assert!(Grid::new(1, 1.0, 18, BoundaryMode::ExteriorZero).is_ok());
        assert!(Grid::new(1, 1.0, 8, BoundaryMode::ExteriorZero).is_err());
        assert!(Grid::new(1, -3.0, 32, BoundaryMode::ExteriorZero).is_err());
        assert!(Grid::new(1, 0.0, 32, BoundaryMode::ExteriorZero).is_err());
        assert!(Grid::new(3, 1.0, 32, BoundaryMode::ExteriorZero).is_err());
    }

    #[test]
    fn grid_2d_cell_count() {
        let g = Grid::new(2, 10.0, 64, BoundaryMode::Periodic).unwrap();
        assert_eq!(g.cell_count(), 4096);
        assert_eq!(g.cell_volume(), g.spacing() * g.spacing());
    }

    #[test]
    fn cell_centers_avoid_boundary() {
        let g = g1(1.0, 16);
        assert_relative_eq!(g.axis_coord(0), -0.9375);
        assert_relative_eq!(g.axis_coord(15), 0.9375);
    }

    #[test]
    fn integrate_constant_and_zero() {
        let g = g1(1.0, 16);
        assert_eq!(Field::zeros(g).integrate(), 0.0);
        assert_relative_eq!(Field::constant(g, 1.0).integrate(), 2.0);
    }

    #[test]
    fn integrate_gaussian_against_error_function_oracle() {
        // Unit-mass Gaussian; midpoint quadrature of an analytic rapidly
        // decaying function converges far below 1e-10 at this resolution.
        let g = g1(50.0, 4096);
        let f = Field::from_fn(g, |x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
        assert!((f.integrate() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ball_restriction_cases() {
        let g = g1(1.0, 16);
        // whole box
        let all = g.ball_restriction([0.0, 0.0], 2.0 * g.half_width()).unwrap();
        assert_eq!(all.len(), 16);
        // degenerate
        let err = g.ball_restriction([0.0, 0.0], 0.4 * g.spacing());
        assert!(matches!(err, Err(Error::DegenerateBall { .. })));
        // the 8 central cells: |x| < 0.5 with h = 0.125
        let idx = g.ball_restriction([0.0, 0.0], 0.5).unwrap();
        assert_eq!(idx, vec![4, 5, 6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn binary_round_trip() {
        let g = g1(2.0, 32);
        let f = Field::from_fn(g, |x| (1.0 - x[0] * x[0]).max(0.0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.write_binary(&p, 1.5).unwrap();
        let (f2, t) = Field::read_binary(&p, BoundaryMode::ExteriorZero).unwrap();
        assert_eq!(t, 1.5);
        assert_eq!(f.values(), f2.values());
    }

    #[test]
    fn csv_round_trip() {
        let g = g1(2.0, 32);
        let f = Field::from_fn(g, |x| x[0].cos());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        f.write_csv(&p, 0.25).unwrap();
        let (f2, t) = Field::read_csv(&p, BoundaryMode::ExteriorZero).unwrap();
        assert_eq!(t, 0.25);
        for (a, b) in f.values().iter().zip(f2.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn interpolation_matches_samples_and_is_zero_outside() {
        let g = g1(1.0, 32);
        let f = Field::from_fn(g, |x| x[0] * x[0]);
        for i in 0..g.cell_count() {
            let c = g.cell_center(i);
            assert_relative_eq!(f.interpolate(c), f.values()[i], max_relative = 1e-14);
        }
        assert_eq!(f.interpolate([5.0, 0.0]), 0.0);
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0, seed in 0u64..1000) {
            let g = g1(1.0, 32);
            let f = Field::from_fn(g, |x| (x[0] * (seed as f64 + 1.0)).sin());
            let h = Field::from_fn(g, |x| (x[0] - seed as f64 * 0.01).cos());
            let combo = Field::new(
                g,
                f.values().iter().zip(h.values()).map(|(x, y)| a * x + b * y).collect(),
            ).unwrap();
            let lhs = combo.integrate();
            let rhs = a * f.integrate() + b * h.integrate();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn ball_restriction_monotone_in_radius(r1 in 0.2f64..1.0, r2 in 0.2f64..1.0) {
            let g = g1(1.0, 32);
            let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = g.ball_restriction([0.1, 0.0], small).unwrap();
            let b = g.ball_restriction([0.1, 0.0], large).unwrap();
            for i in &a {
                prop_assert!(b.contains(i));
            }
        }
    }
}
