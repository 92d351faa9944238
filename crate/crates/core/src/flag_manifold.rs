//! Flag manifolds `Fl(p, q_1 < … < q_d)` in the Stiefel representation.
//!
//! A flag is stored as a `p × q_d` orthonormal basis whose first `q_k`
//! columns span `S_k`. Column block `k` (of width `q_k − q_{k−1}`) spans the
//! orthogonal increment `S_k ⊖ S_{k−1}`. The representative is unique only up
//! to right-multiplication of each block by an orthogonal matrix; everything
//! derived from it here (projectors, distances) is invariant under that action.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{orthonormality_error, polar_factor, principal_angles};

/// Orthonormality tolerance accepted by [`validate`].
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Dimension sequence `(p, q_1 < … < q_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSignature {
    p: usize,
    dims: Vec<usize>,
}

impl FlagSignature {
    pub fn new(p: usize, dims: Vec<usize>) -> Result<Self> {
        if p < 2 {
            return invalid(format!("ambient dimension must be at least 2, got {p}"));
        }
        if dims.is_empty() {
            return invalid("signature needs at least one dimension");
        }
        if dims[0] == 0 {
            return invalid("signature dimensions must be positive");
        }
        if dims.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!("signature dimensions must be strictly increasing: {dims:?}"));
        }
        if *dims.last().unwrap() >= p {
            return invalid(format!("largest dimension {} must be < p = {p}", dims.last().unwrap()));
        }
        Ok(Self { p, dims })
    }

    /// The Grassmannian `Gr(p, q)` seen as a one-level flag manifold.
    pub fn grassmann(p: usize, q: usize) -> Result<Self> {
        Self::new(p, vec![q])
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of levels `d`.
    pub fn depth(&self) -> usize {
        self.dims.len()
    }

    /// Largest dimension `q = q_d`.
    pub fn q(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Column range of block `k` (0-based) in the Stiefel representative.
    pub fn block(&self, k: usize) -> Range<usize> {
        let start = if k == 0 { 0 } else { self.dims[k - 1] };
        start..self.dims[k]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.depth()).map(|k| self.block(k).len()).collect()
    }

    /// Level index (0-based) of every column of the representative.
    pub fn column_levels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.q());
        for k in 0..self.depth() {
            out.extend(std::iter::repeat_n(k, self.block(k).len()));
        }
        out
    }
}

impl fmt::Display for FlagSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|q| q.to_string()).collect();
        write!(f, "Fl({}, ({}))", self.p, dims.join(","))
    }
}

/// A point on a flag manifold, stored as its Stiefel representative.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagPoint {
    signature: FlagSignature,
    basis: DMatrix<f64>,
}

/// Per-block tangent direction with the same shape as the representative.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBlocks(pub DMatrix<f64>);

impl TangentBlocks {
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl FlagPoint {
    /// Wraps a basis. Only the shape is checked here; see [`validate`].
    pub fn new(signature: FlagSignature, basis: DMatrix<f64>) -> Result<Self> {
        if basis.shape() != (signature.p(), signature.q()) {
            return invalid(format!(
                "basis is {}x{}, signature {signature} needs {}x{}",
                basis.nrows(),
                basis.ncols(),
                signature.p(),
                signature.q()
            ));
        }
        Ok(Self { signature, basis })
    }

    /// The flag spanned by the leading coordinate axes.
    pub fn identity(signature: FlagSignature) -> Self {
        let basis = DMatrix::identity(signature.p(), signature.q());
        Self { signature, basis }
    }

    pub fn signature(&self) -> &FlagSignature {
        &self.signature
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// Block `U_k` (0-based `k`).
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        let r = self.signature.block(k);
        self.basis.columns(r.start, r.len()).into_owned()
    }

    /// Orthonormal basis of `S_k`: the first `q_k` columns.
    pub fn subspace(&self, k: usize) -> DMatrix<f64> {
        self.basis.columns(0, self.signature.dims()[k]).into_owned()
    }

    fn ensure_valid(&self) -> Result<()> {
        if validate(self) {
            Ok(())
        } else {
            invalid(format!(
                "basis is not orthonormal (error {:.3e})",
                orthonormality_error(&self.basis)
            ))
        }
    }

    /// Serializes the basis as CSV with a `# flag p=.. dims=..` header.
    pub fn to_csv_string(&self) -> String {
        let dims: Vec<String> = self.signature.dims().iter().map(|q| q.to_string()).collect();
        let mut out = format!("# flag p={} dims={}\n", self.signature.p(), dims.join(","));
        for row in self.basis.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| parse_err(0, 0, "empty flag file"))?;
        let signature = parse_flag_header(header)?;
        let (p, q) = (signature.p(), signature.q());
        let mut data = Vec::with_capacity(p * q);
        let mut rows = 0;
        for (lineno, line) in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != q {
                return Err(parse_err(lineno + 1, cells.len(), format!("expected {q} columns")));
            }
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno + 1, c + 1, format!("not a number: {cell:?}")))?;
                data.push(v);
            }
            rows += 1;
        }
        if rows != p {
            return Err(parse_err(rows + 1, 0, format!("expected {p} rows, found {rows}")));
        }
        FlagPoint::new(signature, DMatrix::from_row_slice(p, q, &data))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

fn parse_err(row: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { row, col, msg: msg.into() }
}

fn parse_flag_header(line: &str) -> Result<FlagSignature> {
    let bad = || parse_err(1, 0, format!("malformed flag header: {line:?}"));
    let rest = line.trim().strip_prefix('#').ok_or_else(bad)?.trim();
    let rest = rest.strip_prefix("flag").ok_or_else(bad)?;
    let mut p = None;
    let mut dims = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("p=") {
            p = Some(v.parse::<usize>().map_err(|_| bad())?);
        } else if let Some(v) = tok.strip_prefix("dims=") {
            let parsed: std::result::Result<Vec<usize>, _> = v.split(',').map(str::parse).collect();
            dims = Some(parsed.map_err(|_| bad())?);
        }
    }
    FlagSignature::new(p.ok_or_else(bad)?, dims.ok_or_else(bad)?)
}

/// True iff the basis is orthonormal to within [`ORTHONORMALITY_TOL`].
pub fn validate(point: &FlagPoint) -> bool {
    point.basis.iter().all(|v| v.is_finite())
        && orthonormality_error(&point.basis) <= ORTHONORMALITY_TOL
}

/// Uniformly distributed flag: polar factor of a seeded Gaussian matrix.
pub fn random_uniform(signature: &FlagSignature, seed: u64) -> Result<FlagPoint> {
    let draw = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let g = DMatrix::from_fn(signature.p(), signature.q(), |_, _| rng.sample(StandardNormal));
        polar_factor(&g)
    };
    let basis = match draw(seed) {
        Ok(b) => b,
        Err(Error::DegenerateRetraction) => draw(seed.wrapping_add(1))?,
        Err(e) => return Err(e),
    };
    FlagPoint::new(signature.clone(), basis)
}

/// Orthogonal projectors `Π_{S_1}, …, Π_{S_d}`.
pub fn nested_projectors(point: &FlagPoint) -> Result<Vec<DMatrix<f64>>> {
    point.ensure_valid()?;
    let p = point.signature.p();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    let mut out = Vec::with_capacity(point.signature.depth());
    for k in 0..point.signature.depth() {
        let u = point.block(k);
        acc += &u * u.transpose();
        out.push(acc.clone());
    }
    Ok(out)
}

/// Per-block weights `(d − k + 1)/d` (1-based `k`) such that the average
/// projector equals `Σ_k weight_k U_k U_kᵀ`.
pub fn average_projector_weights(depth: usize) -> Vec<f64> {
    let d = depth as f64;
    (0..depth).map(|k| (d - k as f64) / d).collect()
}

/// Average multilevel projector `(1/d) Σ_k Π_{S_k}`.
pub fn average_projector(point: &FlagPoint) -> Result<DMatrix<f64>> {
    point.ensure_valid()?;
    let p = point.signature.p();
    let mut out = DMatrix::<f64>::zeros(p, p);
    for (k, w) in average_projector_weights(point.signature.depth()).into_iter().enumerate() {
        let u = point.block(k);
        out += (&u * u.transpose()) * w;
    }
    Ok(out)
}

/// Riemannian gradient of the steepest-descent scheme:
/// `∇_k = G_k − (U_k U_kᵀ G_k + Σ_{l≠k} U_l G_lᵀ U_k)`.
pub fn riemannian_gradient(point: &FlagPoint, euclid_grad: &DMatrix<f64>) -> Result<TangentBlocks> {
    if euclid_grad.shape() != point.basis.shape() {
        return invalid(format!(
            "gradient is {}x{}, basis is {}x{}",
            euclid_grad.nrows(),
            euclid_grad.ncols(),
            point.basis.nrows(),
            point.basis.ncols()
        ));
    }
    let u = &point.basis;
    // m[(i, j)] = g_iᵀ u_j, so block (l, k) of m is G_lᵀ U_k. Diagonal blocks
    // are replaced by U_kᵀ G_k so that `u * m` yields the bracketed sum.
    let mut m = euclid_grad.transpose() * u;
    for k in 0..point.signature.depth() {
        let r = point.signature.block(k);
        let diag = m.view((r.start, r.start), (r.len(), r.len())).transpose();
        m.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&diag);
    }
    Ok(TangentBlocks(euclid_grad - u * m))
}

/// Orthogonal (Frobenius) projection onto the horizontal space at `point`:
/// no component inside a block's own span, and `U_lᵀΔ_k = −Δ_lᵀU_k` across
/// blocks. [`riemannian_gradient`] outputs are fixed points of this map.
pub fn project_horizontal(point: &FlagPoint, direction: &DMatrix<f64>) -> Result<TangentBlocks> {
    if direction.shape() != point.basis.shape() {
        return invalid("direction shape does not match the basis");
    }
    let u = &point.basis;
    let c = u.transpose() * direction;
    // Skew part of UᵀΔ with the diagonal blocks removed.
    let mut s = (&c - c.transpose()) * 0.5;
    for k in 0..point.signature.depth() {
        let r = point.signature.block(k);
        s.view_mut((r.start, r.start), (r.len(), r.len())).fill(0.0);
    }
    Ok(TangentBlocks(direction - u * c + u * s))
}

/// Polar retraction `polar(U − step · direction)`.
pub fn retract(point: &FlagPoint, direction: &TangentBlocks, step: f64) -> Result<FlagPoint> {
    point.ensure_valid()?;
    if !(step >= 0.0) {
        return invalid(format!("step must be nonnegative, got {step}"));
    }
    if direction.0.shape() != point.basis.shape() {
        return invalid("direction shape does not match the basis");
    }
    if step == 0.0 {
        return Ok(point.clone());
    }
    let moved = &point.basis - &direction.0 * step;
    let basis = polar_factor(&moved)?;
    FlagPoint::new(point.signature.clone(), basis)
}

/// Per-level subspace distances `Θ(S_k(a), S_k(b))`.
pub fn flag_distance(a: &FlagPoint, b: &FlagPoint) -> Result<Vec<f64>> {
    if a.signature != b.signature {
        return invalid(format!("signatures differ: {} vs {}", a.signature, b.signature));
    }
    (0..a.signature.depth())
        .map(|k| {
            let angles = principal_angles(&a.subspace(k), &b.subspace(k))?;
            Ok(angles.iter().map(|t| t * t).sum::<f64>().sqrt())
        })
        .collect()
}
