//! Box lattices `[0, n]^4 ∩ Z^4`, real fields on them with an implicit zero
//! extension, the difference operators of the mesh `h = 1/n`, and the
//! discrete `L^2_h`, `L^∞_h` and `W^{2,2}_h` norms.
//!
//! Everything is indexed in lattice units. The mesh width only enters as a
//! scale factor in operators (`h^-1` per difference) and norms (`h^4` per
//! site).

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIM: usize = 4;

/// The box `[0, n]^4 ∩ Z^4`, equivalently `V_h` with `h = 1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
}

/// An exact rational mesh width `numerator / denominator`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mesh {
    pub numerator: u64,
    pub denominator: u64,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("grid size n must be positive"));
        }
        if n > u32::MAX as usize - 4 {
            return Err(Error::invalid(format!("grid size n = {n} is too large")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sites per axis, `n + 1`.
    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn mesh(&self) -> Mesh {
        Mesh {
            numerator: 1,
            denominator: self.n as u64,
        }
    }

    pub fn site_count(&self) -> usize {
        self.side().pow(DIM as u32)
    }

    pub fn contains(&self, coords: [i64; DIM]) -> bool {
        let n = self.n as i64;
        coords.iter().all(|&c| (0..=n).contains(&c))
    }

    /// Lexicographic index, first coordinate most significant.
    pub fn index_of(&self, site: Site) -> Option<usize> {
        if !self.contains(site.0) {
            return None;
        }
        let s = self.side();
        Some(site.0.iter().fold(0usize, |acc, &c| acc * s + c as usize))
    }

    pub fn site_at(&self, mut index: usize) -> Site {
        let s = self.side();
        let mut coords = [0i64; DIM];
        for c in coords.iter_mut().rev() {
            *c = (index % s) as i64;
            index /= s;
        }
        Site(coords)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(move |i| self.site_at(i))
    }

    /// The site `(⌊n/2⌋, …, ⌊n/2⌋)`.
    pub fn center(&self) -> Site {
        let c = (self.n / 2) as i64;
        Site([c; DIM])
    }

    /// `d_N(v)`, the lattice distance of an in-box site to the box boundary.
    pub fn boundary_distance(&self, site: Site) -> i64 {
        site.boundary_distance(self.n)
    }

    /// `d(x) = h · d_N(v)`.
    pub fn physical_boundary_distance(&self, site: Site) -> f64 {
        self.boundary_distance(site) as f64 * self.h()
    }

    pub fn point(&self, site: Site) -> [f64; DIM] {
        site.0.map(|c| c as f64 * self.h())
    }

    /// The lattice site at the physical point `x`, which must lie on `(hZ)^4`
    /// and inside `[0, 1]^4`.
    pub fn site_from_point(&self, x: [f64; DIM]) -> Result<Site> {
        let mut coords = [0i64; DIM];
        for (c, &xi) in coords.iter_mut().zip(&x) {
            let scaled = xi * self.n as f64;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "point {x:?} is not on the lattice of mesh 1/{}",
                    self.n
                )));
            }
            *c = rounded as i64;
        }
        if !self.contains(coords) {
            return Err(Error::OutsideBox(coords, self.n));
        }
        Ok(Site(coords))
    }
}

/// A lattice point in lattice units. Sites outside the box are allowed; they
/// index the exterior where every field vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site(pub [i64; DIM]);

impl Site {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        Site([a, b, c, d])
    }

    pub fn coords(&self) -> [i64; DIM] {
        self.0
    }

    pub fn offset(&self, delta: [i64; DIM]) -> Site {
        Site(std::array::from_fn(|i| self.0[i] + delta[i]))
    }

    pub fn step(&self, axis: usize, by: i64) -> Site {
        let mut c = self.0;
        c[axis] += by;
        Site(c)
    }

    pub fn difference(&self, other: Site) -> [i64; DIM] {
        std::array::from_fn(|i| self.0[i] - other.0[i])
    }

    /// Euclidean distance in lattice units.
    pub fn distance(&self, other: Site) -> f64 {
        norm(self.difference(other))
    }

    /// `min_i min(v_i, n - v_i)`; zero exactly on the box boundary.
    pub fn boundary_distance(&self, n: usize) -> i64 {
        let n = n as i64;
        self.0.iter().map(|&c| c.min(n - c)).min().unwrap_or(0)
    }

    /// Number of box faces through the site (coordinates equal to 0 or n).
    pub fn face_count(&self, n: usize) -> usize {
        let n = n as i64;
        self.0.iter().filter(|&&c| c == 0 || c == n).count()
    }
}

pub(crate) fn norm(v: [i64; DIM]) -> f64 {
    v.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
}

/// A real function on the box, identically zero outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.site_count()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.site_count()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.site_count() {
            return Err(Error::invalid(format!(
                "expected {} values for n = {}, got {}",
                grid.site_count(),
                grid.n(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Site) -> f64) -> Self {
        let values = grid.sites().map(f).collect();
        Self { grid, values }
    }

    /// The lattice delta `value · 1_{site}`.
    pub fn spike(grid: GridSpec, site: Site, value: f64) -> Result<Self> {
        let mut field = Self::zeros(grid);
        field.set(site, value)?;
        Ok(field)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
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

    /// Value at arbitrary lattice coordinates; exactly 0 outside the box.
    pub fn get(&self, coords: [i64; DIM]) -> f64 {
        match self.grid.index_of(Site(coords)) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    pub fn at(&self, site: Site) -> f64 {
        self.get(site.0)
    }

    pub fn set(&mut self, site: Site, value: f64) -> Result<()> {
        let i = self
            .grid
            .index_of(site)
            .ok_or(Error::OutsideBox(site.0, self.grid.n()))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    /// Maximum value and the lexicographically first site attaining it.
    pub fn argmax(&self) -> (f64, Site) {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.0 {
                best = (v, i);
            }
        }
        (best.0, self.grid.site_at(best.1))
    }

    pub(crate) fn padded(&self, margin: usize) -> Padded {
        Padded::from_field(self, margin)
    }
}

/// A copy of a field embedded in a zero-filled array with `margin` extra
/// layers on every side, so stencils can be applied without bounds checks.
pub(crate) struct Padded {
    pub n: usize,
    pub margin: usize,
    pub strides: [usize; DIM],
    pub data: Vec<f64>,
}

impl Padded {
    pub fn zeros(n: usize, margin: usize) -> Self {
        let side = n + 1 + 2 * margin;
        let strides = [side * side * side, side * side, side, 1];
        Self {
            n,
            margin,
            strides,
            data: vec![0.0; side.pow(DIM as u32)],
        }
    }

    pub fn from_field(field: &Field, margin: usize) -> Self {
        let n = field.grid.n();
        let mut p = Self::zeros(n, margin);
        let s = n + 1;
        for (row, chunk) in field.values.chunks_exact(s).enumerate() {
            let c = row % s;
            let b = (row / s) % s;
            let a = row / (s * s);
            let start = p.index([a as i64, b as i64, c as i64, 0]);
            p.data[start..start + s].copy_from_slice(chunk);
        }
        p
    }

    /// Linear index of lattice coordinates, valid for `-margin ≤ c ≤ n + margin`.
    #[inline]
    pub fn index(&self, c: [i64; DIM]) -> usize {
        let m = self.margin as i64;
        (0..DIM).fold(0usize, |acc, k| acc + (c[k] + m) as usize * self.strides[k])
    }

    /// Calls `f(coords, linear_index)` for every site of the box dilated by
    /// `dilation ≤ margin`, in lexicographic order.
    pub fn for_each_in(&self, dilation: usize, mut f: impl FnMut([i64; DIM], usize)) {
        debug_assert!(dilation <= self.margin);
        let lo = -(dilation as i64);
        let hi = (self.n + dilation) as i64;
        for a in lo..=hi {
            for b in lo..=hi {
                for c in lo..=hi {
                    let base = self.index([a, b, c, lo]);
                    for (k, d) in (lo..=hi).enumerate() {
                        f([a, b, c, d], base + k);
                    }
                }
            }
        }
    }

    /// Unscaled lattice Laplacian evaluated on the box dilated by
    /// `dilation < margin`; the result is stored in a padded array with the
    /// same margin and zeros elsewhere.
    pub fn laplacian(&self, dilation: usize) -> Padded {
        assert!(dilation < self.margin);
        let mut out = Padded::zeros(self.n, self.margin);
        let st = self.strides;
        self.for_each_in(dilation, |_, i| {
            let mut acc = -8.0 * self.data[i];
            for s in st {
                acc += self.data[i + s] + self.data[i - s];
            }
            out.data[i] = acc;
        });
        out
    }

    pub fn to_field(&self, grid: GridSpec, scale: f64) -> Field {
        let mut values = Vec::with_capacity(grid.site_count());
        self.for_each_in(0, |_, i| values.push(self.data[i] * scale));
        Field { grid, values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// `D^h_{±a}`: `(v(x + h e_a) - v(x)) / h` forward, `(v(x) - v(x - h e_a)) / h`
/// backward, evaluated on the box sites. `axis` is 0-based.
pub fn apply_diff(field: &Field, axis: usize, direction: Direction) -> Result<Field> {
    if axis >= DIM {
        return Err(Error::invalid(format!("axis {axis} out of range 0..4")));
    }
    let grid = field.grid();
    let inv_h = 1.0 / grid.h();
    Ok(Field::from_fn(grid, |site| {
        let here = field.at(site);
        match direction {
            Direction::Forward => (field.at(site.step(axis, 1)) - here) * inv_h,
            Direction::Backward => (here - field.at(site.step(axis, -1))) * inv_h,
        }
    }))
}

/// `Δ_h v(x) = Σ_i (v(x + h e_i) - 2 v(x) + v(x - h e_i)) / h²` on the box.
pub fn apply_laplacian(field: &Field) -> Field {
    let grid = field.grid();
    let h = grid.h();
    field.padded(1).laplacian(0).to_field(grid, 1.0 / (h * h))
}

/// `Δ_h² = Δ_h ∘ Δ_h` of the zero extension, evaluated on the box. The inner
/// Laplacian is taken on the box dilated by one layer, where it is generally
/// nonzero.
pub fn apply_bilaplacian(field: &Field) -> Field {
    let grid = field.grid();
    let h2 = grid.h() * grid.h();
    let inner = field.padded(2).laplacian(1);
    inner.laplacian(0).to_field(grid, 1.0 / (h2 * h2))
}

/// A finite-difference stencil in lattice units. Applying it to a field
/// scales by `h^-order`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    entries: Vec<([i64; DIM], f64)>,
    order: i32,
}

impl Stencil {
    pub fn new(mut entries: Vec<([i64; DIM], f64)>, order: i32) -> Self {
        entries.retain(|(_, c)| *c != 0.0);
        entries.sort_by_key(|e| e.0);
        Self { entries, order }
    }

    /// The 9-point lattice Laplacian `Σ_i D_i D_{-i}`.
    pub fn laplacian() -> Self {
        let mut entries = vec![([0; DIM], -2.0 * DIM as f64)];
        for axis in 0..DIM {
            for s in [-1, 1] {
                let mut o = [0; DIM];
                o[axis] = s;
                entries.push((o, 1.0));
            }
        }
        Self::new(entries, 2)
    }

    /// The Bilaplacian stencil, obtained by convolving the Laplacian with
    /// itself.
    pub fn bilaplacian() -> Self {
        let lap = Self::laplacian();
        lap.compose(&lap)
    }

    /// Stencil of the composed operator `self ∘ other`.
    pub fn compose(&self, other: &Stencil) -> Stencil {
        let mut acc: std::collections::BTreeMap<[i64; DIM], f64> = Default::default();
        for (oa, ca) in &self.entries {
            for (ob, cb) in &other.entries {
                let o = std::array::from_fn(|i| oa[i] + ob[i]);
                *acc.entry(o).or_insert(0.0) += ca * cb;
            }
        }
        Stencil::new(acc.into_iter().collect(), self.order + other.order)
    }

    pub fn entries(&self) -> &[([i64; DIM], f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn coefficient(&self, offset: [i64; DIM]) -> f64 {
        self.entries
            .iter()
            .find(|(o, _)| *o == offset)
            .map_or(0.0, |(_, c)| *c)
    }

    /// Apply to the zero extension of `field`, evaluating on the box sites.
    pub fn apply(&self, field: &Field) -> Field {
        let grid = field.grid();
        let scale = grid.h().powi(-self.order);
        Field::from_fn(grid, |site| {
            scale
                * self
                    .entries
                    .iter()
                    .map(|(o, c)| c * field.get(site.offset(*o).0))
                    .sum::<f64>()
        })
    }

    /// Apply to values given by a closure on arbitrary lattice points, with
    /// no scaling.
    pub fn apply_at(&self, at: [i64; DIM], f: impl Fn([i64; DIM]) -> f64) -> f64 {
        self.entries
            .iter()
            .map(|(o, c)| c * f(std::array::from_fn(|i| at[i] + o[i])))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2h: f64,
    pub linfh: f64,
    pub w22h: f64,
}

/// Squared `L^2_h`, gradient and Hessian parts of the `W^{2,2}_h((hZ)^4)`
/// norm of the zero extension. The Hessian uses `D_i D_{-j}` for all ordered
/// pairs `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevParts {
    pub l2_sq: f64,
    pub gradient_sq: f64,
    pub hessian_sq: f64,
}

impl SobolevParts {
    pub fn w22(&self) -> f64 {
        (self.l2_sq + self.gradient_sq + self.hessian_sq).sqrt()
    }
}

pub fn sobolev_parts(field: &Field) -> SobolevParts {
    let grid = field.grid();
    let h = grid.h();
    let h4 = h.powi(4);
    let p = field.padded(2);
    let st = p.strides;
    let d = &p.data;
    let mut l2 = 0.0;
    let mut grad = 0.0;
    let mut hess = 0.0;
    p.for_each_in(1, |_, i| {
        let v = d[i];
        l2 += v * v;
        for &si in &st {
            let g = d[i + si] - v;
            grad += g * g;
            for &sj in &st {
                // D_i D_{-j} v(x) = v(x+e_i) - v(x+e_i-e_j) - v(x) + v(x-e_j)
                let q = d[i + si] - d[i + si - sj] - v + d[i - sj];
                hess += q * q;
            }
        }
    });
    SobolevParts {
        l2_sq: l2 * h4,
        gradient_sq: grad * h4 / (h * h),
        hessian_sq: hess * h4 / h.powi(4),
    }
}

pub fn norms(field: &Field) -> Norms {
    let parts = sobolev_parts(field);
    let linfh = field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Norms {
        l2h: parts.l2_sq.sqrt(),
        linfh,
        w22h: parts.w22(),
    }
}

/// `(u, v)_{L^2_h}` over the box.
pub fn inner_product(u: &Field, v: &Field) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::invalid("fields live on different grids"));
    }
    let h4 = u.grid().h().powi(4);
    Ok(u.values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * h4)
}

/// Radial profile of the cutoff `η`: 1 on `[0, ½]`, 0 on `[1, ∞)`, and the
/// quintic smoothstep (C² at both junctions) in between.
pub fn cutoff_profile(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (s - 0.5);
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// `η((x - y) / r)` for physical points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub center: [f64; DIM],
    pub radius: f64,
}

impl Cutoff {
    pub fn new(center: [f64; DIM], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("cutoff radius must be positive"));
        }
        Ok(Self { center, radius })
    }

    pub fn eval(&self, x: [f64; DIM]) -> f64 {
        let r2: f64 = (0..DIM).map(|i| (x[i] - self.center[i]).powi(2)).sum();
        cutoff_profile(r2.sqrt() / self.radius)
    }
}

/// Restriction of the cutoff at scale `radius` (physical units) around
/// `center` to the lattice.
pub fn cutoff(grid: GridSpec, center: Site, radius: f64) -> Result<Field> {
    let eta = Cutoff::new(grid.point(center), radius)?;
    Ok(Field::from_fn(grid, |site| eta.eval(grid.point(site))))
}
