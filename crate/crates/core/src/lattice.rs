//! Lattice geometry, on-site potentials and the one-particle operators
//! h, Q1, v1 = i[h, Q1] and h_E = h - E Q1 on the truncated box
//! Λ_N = [-N, N]^d.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::HermitianOperator;
use crate::spectral::commutator_i;

/// Boundary treatment of the finite box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Plain truncation h_N = P_N h P_N; edge sites lose neighbors.
    Open,
    /// Periodic wrap-around; momentum is exact for translation-invariant
    /// problems, but the position operator is undefined.
    Torus,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Torus => "torus",
        }
    }
}

/// The box Λ_N = [-N, N]^d with a fixed row-major site flattening
/// (first coordinate slowest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    dimension: usize,
    half_width: i64,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(dimension: usize, half_width: i64, boundary: Boundary) -> Result<Self> {
        if dimension < 1 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if half_width < 1 {
            return Err(Error::InvalidParameter("half_width must be >= 1".into()));
        }
        let spec = LatticeSpec {
            dimension,
            half_width,
            boundary,
        };
        if spec.site_count_checked().is_none() {
            return Err(Error::InvalidParameter(format!(
                "box (2*{half_width}+1)^{dimension} is too large"
            )));
        }
        Ok(spec)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn linear_size(&self) -> i64 {
        2 * self.half_width + 1
    }

    fn site_count_checked(&self) -> Option<usize> {
        let l = self.linear_size() as usize;
        let mut n = 1usize;
        for _ in 0..self.dimension {
            n = n.checked_mul(l)?;
        }
        Some(n)
    }

    pub fn site_count(&self) -> usize {
        self.site_count_checked().expect("validated in new")
    }

    pub fn center_site(&self) -> Vec<i64> {
        vec![0; self.dimension]
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        coords.len() == self.dimension
            && coords.iter().all(|&x| x.abs() <= self.half_width)
    }

    /// Row-major flattened index of a site.
    pub fn site_index(&self, coords: &[i64]) -> Result<usize> {
        if !self.contains(coords) {
            return Err(Error::OutOfRange(format!(
                "site {coords:?} is not in [-{n}, {n}]^{d}",
                n = self.half_width,
                d = self.dimension
            )));
        }
        let l = self.linear_size();
        let mut idx: i64 = 0;
        for &x in coords {
            idx = idx * l + (x + self.half_width);
        }
        Ok(idx as usize)
    }

    pub fn site_coords(&self, mut index: usize) -> Vec<i64> {
        let l = self.linear_size() as usize;
        let mut coords = vec![0i64; self.dimension];
        for axis in (0..self.dimension).rev() {
            coords[axis] = (index % l) as i64 - self.half_width;
            index /= l;
        }
        coords
    }

    /// Wraps a coordinate into [-N, N] (torus only).
    fn wrap(&self, x: i64) -> i64 {
        let l = self.linear_size();
        (x + self.half_width).rem_euclid(l) - self.half_width
    }

    /// Flattened indices of the nearest neighbors of `coords`, respecting
    /// the boundary variant.
    pub fn neighbor_indices(&self, coords: &[i64]) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.dimension);
        let mut c = coords.to_vec();
        for axis in 0..self.dimension {
            for step in [1i64, -1] {
                c[axis] = coords[axis] + step;
                match self.boundary {
                    Boundary::Open => {
                        if c[axis].abs() <= self.half_width {
                            out.push(self.site_index(&c).expect("in box"));
                        }
                    }
                    Boundary::Torus => {
                        let w = self.wrap(c[axis]);
                        let mut wrapped = coords.to_vec();
                        wrapped[axis] = w;
                        out.push(self.site_index(&wrapped).expect("wrapped in box"));
                    }
                }
            }
            c[axis] = coords[axis];
        }
        out
    }

    /// Signed coordinate difference y_axis - x_axis; minimal image on the
    /// torus (linear size is odd, so the representative is unique).
    pub fn displacement(&self, x: &[i64], y: &[i64], axis: usize) -> f64 {
        let diff = y[axis] - x[axis];
        match self.boundary {
            Boundary::Open => diff as f64,
            Boundary::Torus => self.wrap(diff) as f64,
        }
    }

    /// Neighbor of `coords` one step along `direction` (1-based); errors on
    /// the open boundary when the neighbor falls outside the box.
    pub fn shifted_site(&self, coords: &[i64], direction: usize, step: i64) -> Result<usize> {
        let axis = direction_axis(self, direction)?;
        let mut c = coords.to_vec();
        c[axis] += step;
        match self.boundary {
            Boundary::Open => self.site_index(&c),
            Boundary::Torus => {
                c[axis] = self.wrap(c[axis]);
                self.site_index(&c)
            }
        }
    }
}

pub(crate) fn direction_axis(lattice: &LatticeSpec, direction: usize) -> Result<usize> {
    if direction < 1 || direction > lattice.dimension() {
        return Err(Error::InvalidParameter(format!(
            "direction {direction} not in 1..={}",
            lattice.dimension()
        )));
    }
    Ok(direction - 1)
}

/// On-site potential over a unit cell, V(x) = values[cell coords of x],
/// extended periodically: V(x + p_l e_l) = V(x).
#[derive(Clone, Debug, PartialEq)]
pub struct CellPotential {
    periods: Vec<usize>,
    /// Row-major over the cell Λ = {0..p_1} x ... x {0..p_d}.
    values: Vec<f64>,
}

impl CellPotential {
    pub fn new(periods: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if periods.is_empty() || periods.iter().any(|&p| p == 0) {
            return Err(Error::InvalidParameter(
                "cell periods must be positive".into(),
            ));
        }
        let size: usize = periods.iter().product();
        if values.len() != size {
            return Err(Error::InvalidParameter(format!(
                "cell needs {size} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "cell potential values must be finite".into(),
            ));
        }
        Ok(CellPotential { periods, values })
    }

    pub fn dimension(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn cell_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major index of a cell site given in-cell coordinates.
    pub fn cell_index(&self, m: &[i64]) -> usize {
        let mut idx = 0usize;
        for (axis, &c) in m.iter().enumerate() {
            idx = idx * self.periods[axis] + c as usize;
        }
        idx
    }

    pub fn cell_coords(&self, mut index: usize) -> Vec<i64> {
        let mut coords = vec![0i64; self.dimension()];
        for axis in (0..self.dimension()).rev() {
            coords[axis] = (index % self.periods[axis]) as i64;
            index /= self.periods[axis];
        }
        coords
    }

    pub fn value_at(&self, site: &[i64]) -> f64 {
        let mut idx = 0usize;
        for (axis, &x) in site.iter().enumerate() {
            let p = self.periods[axis] as i64;
            idx = idx * self.periods[axis] + x.rem_euclid(p) as usize;
        }
        self.values[idx]
    }
}

/// The on-site potential V.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// Explicit per-site table; must cover every site of the box.
    Table(HashMap<Vec<i64>, f64>),
    /// Periodic potential defined by a unit cell.
    Periodic(CellPotential),
}

impl PotentialSpec {
    pub fn value_at(&self, site: &[i64]) -> Result<f64> {
        match self {
            PotentialSpec::Zero => Ok(0.0),
            PotentialSpec::Table(map) => map.get(site).copied().ok_or_else(|| {
                Error::config(format!("potential table has no value for site {site:?}"))
            }),
            PotentialSpec::Periodic(cell) => Ok(cell.value_at(site)),
        }
    }

    /// Parses a plain-text table: one line per site, "x1 x2 ... xd value",
    /// whitespace-separated, '#' comments.
    pub fn parse_table(text: &str, dimension: usize) -> Result<PotentialSpec> {
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != dimension + 1 {
                return Err(Error::config_at(
                    lineno + 1,
                    format!(
                        "expected {} coordinates and a value, got {} tokens",
                        dimension,
                        tokens.len()
                    ),
                ));
            }
            let mut coords = Vec::with_capacity(dimension);
            for t in &tokens[..dimension] {
                coords.push(t.parse::<i64>().map_err(|e| {
                    Error::config_at(lineno + 1, format!("bad coordinate '{t}': {e}"))
                })?);
            }
            let value: f64 = tokens[dimension]
                .parse()
                .map_err(|e| Error::config_at(lineno + 1, format!("bad value: {e}")))?;
            if !value.is_finite() {
                return Err(Error::config_at(lineno + 1, "potential value must be finite"));
            }
            if map.insert(coords.clone(), value).is_some() {
                return Err(Error::config_at(
                    lineno + 1,
                    format!("duplicate entry for site {coords:?}"),
                ));
            }
        }
        Ok(PotentialSpec::Table(map))
    }

    pub fn load_table_file(path: &std::path::Path, dimension: usize) -> Result<PotentialSpec> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_table(&text, dimension)
    }
}

/// (hφ)(x) = -Σ_{|x-y|=1} φ(y) + V(x) φ(x) on the box, as a real symmetric
/// matrix; nearest-neighbor pairs respect the boundary variant.
pub fn build_hamiltonian(
    lattice: &LatticeSpec,
    potential: &PotentialSpec,
) -> Result<HermitianOperator> {
    let n = lattice.site_count();
    let mut m = Array2::<Complex64>::zeros((n, n));
    for idx in 0..n {
        let coords = lattice.site_coords(idx);
        m[[idx, idx]] = Complex64::new(potential.value_at(&coords)?, 0.0);
        for nb in lattice.neighbor_indices(&coords) {
            m[[idx, nb]] = Complex64::new(-1.0, 0.0);
        }
    }
    HermitianOperator::new(m)
}

/// Diagonal position operator Q_direction. Undefined on the torus.
pub fn build_position(lattice: &LatticeSpec, direction: usize) -> Result<HermitianOperator> {
    if lattice.boundary() == Boundary::Torus {
        return Err(Error::Unsupported(
            "position operator is ill-defined on the periodic torus".into(),
        ));
    }
    let axis = direction_axis(lattice, direction)?;
    let diag: Vec<f64> = (0..lattice.site_count())
        .map(|i| lattice.site_coords(i)[axis] as f64)
        .collect();
    Ok(HermitianOperator::from_diagonal(&diag))
}

/// v = i[h, q]. For the standard h its action on a basis vector is
/// v η_z = i η_{z+e} - i η_{z-e} at interior sites, independent of V.
pub fn build_velocity(h: &HermitianOperator, q: &HermitianOperator) -> Result<HermitianOperator> {
    commutator_i(h, q)
}

/// h_E = h - E Q1.
pub fn build_field_hamiltonian(
    h: &HermitianOperator,
    q1: &HermitianOperator,
    field: f64,
) -> Result<HermitianOperator> {
    h.add_scaled(q1, -field)
}

/// i[Q_direction, op] computed from entrywise displacement weights,
/// i (x_dir - y_dir) op_{xy}. On the torus the displacement is the minimal
/// image, which reproduces the commutator of the infinite lattice wherever
/// `op` is short-ranged relative to the box; on the open box this equals
/// `commutator_i(build_position(..), op)` exactly.
pub fn position_commutator(
    op: &HermitianOperator,
    lattice: &LatticeSpec,
    direction: usize,
) -> Result<HermitianOperator> {
    let axis = direction_axis(lattice, direction)?;
    let n = lattice.site_count();
    if op.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} vs lattice site count {n}",
            op.dim()
        )));
    }
    let coords: Vec<Vec<i64>> = (0..n).map(|i| lattice.site_coords(i)).collect();
    let mut m = Array2::zeros((n, n));
    for x in 0..n {
        for y in 0..n {
            let w = -lattice.displacement(&coords[x], &coords[y], axis);
            m[[x, y]] = Complex64::new(0.0, w) * op.entry(x, y);
        }
    }
    Ok(HermitianOperator::symmetrized(m))
}

/// Velocity from the hopping structure, i h_{xy} (y_dir - x_dir) with the
/// boundary-appropriate displacement; equals i[h, Q_direction] on the open
/// box and extends it to the torus (wrap bonds carry their bond direction).
pub fn velocity_operator(
    h: &HermitianOperator,
    lattice: &LatticeSpec,
    direction: usize,
) -> Result<HermitianOperator> {
    let axis = direction_axis(lattice, direction)?;
    let n = lattice.site_count();
    if h.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} vs lattice site count {n}",
            h.dim()
        )));
    }
    let coords: Vec<Vec<i64>> = (0..n).map(|i| lattice.site_coords(i)).collect();
    let mut m = Array2::zeros((n, n));
    for x in 0..n {
        for y in 0..n {
            let w = lattice.displacement(&coords[x], &coords[y], axis);
            m[[x, y]] = Complex64::new(0.0, w) * h.entry(x, y);
        }
    }
    Ok(HermitianOperator::symmetrized(m))
}
