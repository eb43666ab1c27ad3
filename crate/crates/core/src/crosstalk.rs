//! Linear flux crosstalk.
//!
//! Voltages `V` on the flux lines produce external fluxes
//! `phi_i = (S V)_i / v_phi0_i + phi_offset_i`, where `S` is the dimensionless
//! sensitivity matrix (unit diagonal in normalized form). Entries are stored as
//! fractions; percent only appears in reports.

use nalgebra::{DMatrix, DVector, LU};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::transmon::TransmonParams;

/// Solves refuse matrices whose 2-norm condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e8;

/// Distance-decay constants for the synthetic crosstalk generator
/// (level in percent: `100 / (a x + 1) + c`, spread `sigma` percent).
pub const DECAY_A: f64 = 178.2;
pub const DECAY_C: f64 = 0.264;
pub const DECAY_SIGMA: f64 = 0.342;

#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkMatrix {
    s: DMatrix<f64>,
}

impl CrosstalkMatrix {
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::DimensionMismatch { expected: s.nrows(), got: s.ncols() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("crosstalk entries must be finite".into()));
        }
        Ok(Self { s })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_len(n, r.len())?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self { s: DMatrix::identity(n, n) }
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.s.row(k).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|k| self.row(k)).collect()
    }

    pub fn is_unit_diagonal(&self) -> bool {
        (0..self.n()).all(|k| self.s[(k, k)] == 1.0)
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| self.s[(i, j)]))
    }

    /// Frobenius distance to another matrix of the same size.
    pub fn distance(&self, other: &CrosstalkMatrix) -> f64 {
        (&self.s - &other.s).norm()
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.s.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    n: usize,
    units: String,
    s: Vec<Vec<f64>>,
}

impl Serialize for CrosstalkMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr { n: self.n(), units: "fraction".into(), s: self.rows() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CrosstalkMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = MatrixRepr::deserialize(deserializer)?;
        if repr.units != "fraction" {
            return Err(D::Error::custom(format!("unsupported units {:?}", repr.units)));
        }
        if repr.s.len() != repr.n {
            return Err(D::Error::custom(format!("expected {} rows, found {}", repr.n, repr.s.len())));
        }
        CrosstalkMatrix::from_rows(&repr.s).map_err(D::Error::custom)
    }
}

/// Per-qubit voltage-per-flux-quantum and flux offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarCalibration {
    pub v_phi0: Vec<f64>,
    pub phi_offset: Vec<f64>,
}

impl ScalarCalibration {
    pub fn new(v_phi0: Vec<f64>, phi_offset: Vec<f64>) -> Result<Self> {
        check_len(v_phi0.len(), phi_offset.len())?;
        if let Some(k) = v_phi0.iter().position(|v| *v == 0.0) {
            return Err(Error::InvalidArgument(format!("v_phi0[{k}] is zero")));
        }
        Ok(Self { v_phi0, phi_offset })
    }

    pub fn from_params(params: &[TransmonParams]) -> Self {
        Self {
            v_phi0: params.iter().map(|p| p.v_phi0).collect(),
            phi_offset: params.iter().map(|p| p.phi_offset).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.v_phi0.len()
    }
}

/// Qubit positions (grid units) with symmetric neighbor relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct ArrayGeometry {
    pub positions: Vec<[f64; 2]>,
    /// Neighbor pairs `(i, j)` with `i < j`.
    pub adjacency: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryRepr {
    positions: Vec<[f64; 2]>,
    adjacency: Vec<(usize, usize)>,
}

impl TryFrom<GeometryRepr> for ArrayGeometry {
    type Error = Error;

    fn try_from(r: GeometryRepr) -> Result<Self> {
        ArrayGeometry::new(r.positions, r.adjacency)
    }
}

impl From<ArrayGeometry> for GeometryRepr {
    fn from(g: ArrayGeometry) -> Self {
        GeometryRepr { positions: g.positions, adjacency: g.adjacency }
    }
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 2]>, adjacency: Vec<(usize, usize)>) -> Result<Self> {
        let n = positions.len();
        for (a, pa) in positions.iter().enumerate() {
            if positions[..a].contains(pa) {
                return Err(Error::InvalidArgument(format!("duplicate position for qubit {a}")));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut pairs = Vec::with_capacity(adjacency.len());
        for (i, j) in adjacency {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(format!("bad adjacency pair ({i}, {j})")));
            }
            let pair = (i.min(j), i.max(j));
            if pairs.contains(&pair) {
                continue;
            }
            pairs.push(pair);
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let adjacency = pairs;
        Ok(Self { positions, adjacency, neighbors })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        (xi - xj).hypot(yi - yj)
    }
}

/// Unit-spaced `√n × √n` grid in row-major order.
pub fn grid_positions(n: usize) -> Result<ArrayGeometry> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || n == 0 {
        return Err(Error::NotPerfectSquare(n));
    }
    let positions = (0..n).map(|i| [(i % side) as f64, (i / side) as f64]).collect();
    let mut adjacency = Vec::with_capacity(2 * side * (side - 1));
    for i in 0..n {
        let (col, row) = (i % side, i / side);
        if col + 1 < side {
            adjacency.push((i, i + 1));
        }
        if row + 1 < side {
            adjacency.push((i, i + side));
        }
    }
    ArrayGeometry::new(positions, adjacency)
}

pub fn flux_from_voltages(s: &CrosstalkMatrix, cal: &ScalarCalibration, v: &[f64]) -> Result<Vec<f64>> {
    let n = s.n();
    check_len(n, cal.n())?;
    check_len(n, v.len())?;
    let sv = &s.s * DVector::from_column_slice(v);
    Ok((0..n).map(|i| sv[i] / cal.v_phi0[i] + cal.phi_offset[i]).collect())
}

/// LU factorization of a crosstalk matrix, reusable across many solves.
#[derive(Debug, Clone)]
pub struct CrosstalkSolver {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    pub condition: f64,
}

impl CrosstalkSolver {
    pub fn new(s: &CrosstalkMatrix) -> Result<Self> {
        let condition = s.condition_number();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMatrix { condition });
        }
        Ok(Self { lu: s.s.clone().lu(), n: s.n(), condition })
    }

    /// Voltages that produce `phi` exactly under the linear model.
    pub fn voltages_for_fluxes(&self, cal: &ScalarCalibration, phi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, cal.n())?;
        check_len(self.n, phi.len())?;
        let rhs = DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| cal.v_phi0[i] * (phi[i] - cal.phi_offset[i])),
        );
        let x = self.lu.solve(&rhs).ok_or(Error::SingularMatrix { condition: f64::INFINITY })?;
        Ok(x.iter().copied().collect())
    }
}

pub fn voltages_for_fluxes(s: &CrosstalkMatrix, cal: &ScalarCalibration, phi: &[f64]) -> Result<Vec<f64>> {
    CrosstalkSolver::new(s)?.voltages_for_fluxes(cal, phi)
}

/// Crosstalk level (percent) at distance `x` grid units.
pub fn decay_level(x: f64, a: f64, c: f64) -> f64 {
    100.0 / (a * x + 1.0) + c
}

/// Random matrix from the distance-decay model: each off-diagonal magnitude is
/// `|N(level(x_ij), sigma)|` percent with a uniformly random sign.
pub fn generate_crosstalk_matrix<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    a: f64,
    c: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<CrosstalkMatrix> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    let n = geom.n();
    let mut s = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let level = decay_level(geom.distance(i, j), a, c);
            let magnitude = Normal::new(level, sigma)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(rng)
                .abs();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s[(i, j)] = sign * magnitude / 100.0;
        }
    }
    CrosstalkMatrix::new(s)
}

/// Matrix with every off-diagonal entry `±level` (fraction), signs uniform.
pub fn uniform_level_matrix<R: Rng + ?Sized>(n: usize, level: f64, rng: &mut R) -> CrosstalkMatrix {
    let mut s = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[(i, j)] = if rng.random_bool(0.5) { level } else { -level };
            }
        }
    }
    CrosstalkMatrix { s }
}

/// Rescale each row to a unit diagonal and fold the factor into `v_phi0`,
/// leaving the voltage-to-flux map unchanged.
pub fn normalize_unit_diagonal(
    s_raw: &CrosstalkMatrix,
    cal: &ScalarCalibration,
) -> Result<(CrosstalkMatrix, ScalarCalibration)> {
    let n = s_raw.n();
    check_len(n, cal.n())?;
    let mut s = s_raw.s.clone();
    let mut v_phi0 = cal.v_phi0.clone();
    for k in 0..n {
        let diag = s[(k, k)];
        if diag == 0.0 {
            return Err(Error::ZeroDiagonal(k));
        }
        if diag != 1.0 {
            s.row_mut(k).iter_mut().for_each(|x| *x /= diag);
            s[(k, k)] = 1.0;
            v_phi0[k] /= diag;
        }
    }
    Ok((CrosstalkMatrix { s }, ScalarCalibration { v_phi0, phi_offset: cal.phi_offset.clone() }))
}
