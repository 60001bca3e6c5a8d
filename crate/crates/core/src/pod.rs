//! Proper orthogonal decomposition of snapshot data.
//!
//! States live on a uniform periodic grid with the discrete L² inner
//! product `<u, v> = h * sum_j u_j v_j`. The basis is the left singular
//! system of `sqrt(h) * X`, rescaled by `1/sqrt(h)` so that the modes are
//! orthonormal under that inner product. Snapshots are not mean-centred.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::cds::FlowMap;
use crate::error::{check_len, Error, Result};

/// Uniform grid with equal quadrature weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    pub n: usize,
    pub spacing: f64,
}

impl SpatialGrid {
    /// `n` equispaced nodes on a periodic interval of the given length.
    pub fn periodic(n: usize, length: f64) -> Self {
        Self {
            n,
            spacing: length / n as f64,
        }
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.spacing * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
}

/// Sampling schedule for [`collect_snapshots`]: columns at
/// `skip + i * stride`, `i = 1, 2, ...`, up to `horizon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotSchedule {
    pub horizon: f64,
    pub stride: f64,
    pub skip: f64,
}

impl SnapshotSchedule {
    pub fn times(&self) -> Result<Vec<f64>> {
        let Self { horizon, stride, skip } = *self;
        if !(stride > 0.0 && stride.is_finite()) {
            return Err(Error::InvalidInput(format!("snapshot stride {stride} must be > 0")));
        }
        if stride > horizon {
            return Err(Error::InvalidInput(format!(
                "snapshot stride {stride} exceeds horizon {horizon}"
            )));
        }
        if !(skip >= 0.0 && skip < horizon) {
            return Err(Error::InvalidInput(format!(
                "transient skip {skip} must lie in [0, horizon)"
            )));
        }
        let count = ((horizon - skip) / stride + 1e-9).floor() as usize;
        if count == 0 {
            return Err(Error::InvalidInput("schedule yields no snapshots".into()));
        }
        Ok((1..=count).map(|i| skip + i as f64 * stride).collect())
    }
}

/// `n x m` matrix whose columns are states at successive times.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    pub grid: SpatialGrid,
    pub data: DMatrix<f64>,
}

impl SnapshotMatrix {
    pub fn new(grid: SpatialGrid, data: DMatrix<f64>) -> Result<Self> {
        check_len(grid.n, data.nrows())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite snapshot entry".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn columns(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    pub grid: SpatialGrid,
    /// `n x S`, columns orthonormal under the grid inner product.
    pub modes: DMatrix<f64>,
    /// Nonincreasing, length `S`.
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    pub fn mode(&self, i: usize) -> Vec<f64> {
        self.modes.column(i).iter().copied().collect()
    }

    /// State `sum_i coeffs_i * Psi_i` for the first `coeffs.len()` modes.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() > self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        let mut state = vec![0.0; self.grid.n];
        for (i, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (s, m) in state.iter_mut().zip(self.modes.column(i).iter()) {
                *s += c * m;
            }
        }
        Ok(state)
    }

    /// Inner products `<state, Psi_i>` for modes `range`.
    pub(crate) fn project_range(&self, state: &[f64], range: std::ops::Range<usize>) -> Vec<f64> {
        range
            .map(|i| self.grid.spacing * self.modes.column(i).iter().zip(state).map(|(m, u)| m * u).sum::<f64>())
            .collect()
    }

    /// Gram matrix of the modes under the grid inner product.
    pub fn gram(&self) -> DMatrix<f64> {
        self.modes.transpose() * &self.modes * self.grid.spacing
    }
}

/// Integrates `flow` from `u0` and stores the state at every scheduled time.
pub fn collect_snapshots(
    flow: &dyn FlowMap,
    grid: SpatialGrid,
    u0: &[f64],
    schedule: SnapshotSchedule,
) -> Result<SnapshotMatrix> {
    check_len(grid.n, u0.len())?;
    check_len(flow.state_len(), u0.len())?;
    let times = schedule.times()?;
    let mut data = DMatrix::zeros(grid.n, times.len());
    flow.integrate(u0, &times, &mut |i, state| {
        data.column_mut(i).copy_from_slice(state);
    })?;
    SnapshotMatrix::new(grid, data)
}

/// Leading `modes` POD modes of a snapshot matrix.
pub fn compute_basis(snap: &SnapshotMatrix, modes: usize) -> Result<PodBasis> {
    let (n, m) = snap.data.shape();
    if modes == 0 || modes > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "requested {modes} modes from a {n} x {m} snapshot matrix"
        )));
    }
    let h = snap.grid.spacing;
    let weight = h.sqrt();
    let svd = (snap.data.clone() * weight).svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::InvalidInput("SVD did not produce left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut basis = DMatrix::zeros(n, modes);
    let mut singular_values = Vec::with_capacity(modes);
    for (dst, &src) in order.iter().take(modes).enumerate() {
        let mut col: Vec<f64> = u.column(src).iter().map(|v| v / weight).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        basis.column_mut(dst).copy_from_slice(&col);
        singular_values.push(svd.singular_values[src]);
    }
    Ok(PodBasis {
        grid: snap.grid,
        modes: basis,
        singular_values,
    })
}

/// All `S` POD coefficients `<state, Psi_i>`.
pub fn project_coefficients(basis: &PodBasis, state: &[f64]) -> Result<Vec<f64>> {
    check_len(basis.grid.n, state.len())?;
    Ok(basis.project_range(state, 0..basis.len()))
}

const SNAPSHOT_MAGIC: &[u8] = b"PODSNAP1";
const BASIS_MAGIC: &[u8] = b"PODBAS1";

fn write_header<W: Write>(out: &mut W, magic: &[u8], rows: usize, cols: usize, spacing: f64) -> Result<()> {
    let as_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::InvalidInput(format!("dimension {v} exceeds u32")));
    out.write_all(magic)?;
    out.write_all(&as_u32(rows)?.to_le_bytes())?;
    out.write_all(&as_u32(cols)?.to_le_bytes())?;
    out.write_all(&spacing.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(input: &mut R, magic: &[u8]) -> Result<(usize, usize, f64)> {
    let mut found = vec![0u8; magic.len()];
    input.read_exact(&mut found)?;
    if found != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    Ok((rows, cols, read_f64(input)?))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    Ok(f64::from_le_bytes(b8))
}

fn write_values<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(input)?);
    }
    // nalgebra storage is column-major, matching the file layout.
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn write_snapshots<W: Write>(snap: &SnapshotMatrix, mut out: W) -> Result<()> {
    let (n, m) = snap.data.shape();
    write_header(&mut out, SNAPSHOT_MAGIC, n, m, snap.grid.spacing)?;
    write_values(&mut out, snap.data.iter().copied())?;
    out.flush()?;
    Ok(())
}

pub fn read_snapshots<R: Read>(mut input: R) -> Result<SnapshotMatrix> {
    let (n, m, spacing) = read_header(&mut input, SNAPSHOT_MAGIC)?;
    let data = read_matrix(&mut input, n, m)?;
    SnapshotMatrix::new(SpatialGrid { n, spacing }, data)
}

pub fn write_basis<W: Write>(basis: &PodBasis, mut out: W) -> Result<()> {
    let (n, s) = basis.modes.shape();
    write_header(&mut out, BASIS_MAGIC, n, s, basis.grid.spacing)?;
    write_values(&mut out, basis.modes.iter().copied())?;
    write_values(&mut out, basis.singular_values.iter().copied())?;
    out.flush()?;
    Ok(())
}

pub fn read_basis<R: Read>(mut input: R) -> Result<PodBasis> {
    let (n, s, spacing) = read_header(&mut input, BASIS_MAGIC)?;
    let modes = read_matrix(&mut input, n, s)?;
    let singular_values = (0..s).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
    Ok(PodBasis {
        grid: SpatialGrid { n, spacing },
        modes,
        singular_values,
    })
}
