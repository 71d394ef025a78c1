//! Problem form: minimize a linear objective over nonnegative scalars and
//! complex Hermitian PSD blocks subject to linear equalities.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ConicError;

pub type CMat = DMatrix<Complex64>;

/// Sparse linear functional over the program variables.
///
/// Block terms contribute `Re Tr(A X_b)`; the coefficient matrix is expected
/// to be Hermitian, which [`ConicProgram::validate`] enforces.
#[derive(Clone, Debug, Default)]
pub struct LinearExpr {
    pub scalars: Vec<(usize, f64)>,
    pub blocks: Vec<(usize, CMat)>,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(mut self, idx: usize, coeff: f64) -> Self {
        self.scalars.push((idx, coeff));
        self
    }

    pub fn block(mut self, idx: usize, coeff: CMat) -> Self {
        self.blocks.push((idx, coeff));
        self
    }

    pub fn add_scalar(&mut self, idx: usize, coeff: f64) {
        self.scalars.push((idx, coeff));
    }

    pub fn add_block(&mut self, idx: usize, coeff: CMat) {
        self.blocks.push((idx, coeff));
    }
}

/// Dense row over all variables. `blocks[b]` is `None` when the row does not
/// touch block `b`.
#[derive(Clone, Debug)]
pub struct Row {
    pub scalars: Vec<f64>,
    pub blocks: Vec<Option<CMat>>,
}

impl Row {
    fn zeros(n: usize, nblocks: usize) -> Self {
        Row { scalars: vec![0.0; n], blocks: vec![None; nblocks] }
    }
}

#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub n_scalars: usize,
    pub block_dims: Vec<usize>,
    pub rows: Vec<Row>,
    pub rhs: Vec<f64>,
    pub objective: Row,
}

impl ConicProgram {
    pub fn new(n_scalars: usize, block_dims: Vec<usize>) -> Self {
        let objective = Row::zeros(n_scalars, block_dims.len());
        ConicProgram { n_scalars, block_dims, rows: Vec::new(), rhs: Vec::new(), objective }
    }

    /// Append a scalar variable and return its index.
    pub fn push_scalar(&mut self) -> usize {
        self.n_scalars += 1;
        for r in self.rows.iter_mut() {
            r.scalars.push(0.0);
        }
        self.objective.scalars.push(0.0);
        self.n_scalars - 1
    }

    /// Append a PSD block of dimension `dim` and return its index.
    pub fn push_block(&mut self, dim: usize) -> usize {
        self.block_dims.push(dim);
        for r in self.rows.iter_mut() {
            r.blocks.push(None);
        }
        self.objective.blocks.push(None);
        self.block_dims.len() - 1
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    fn densify(&self, expr: &LinearExpr) -> Result<Row, ConicError> {
        let mut row = Row::zeros(self.n_scalars, self.block_dims.len());
        for &(i, c) in &expr.scalars {
            if i >= self.n_scalars {
                return Err(ConicError::Malformed(format!("scalar index {i} out of range")));
            }
            row.scalars[i] += c;
        }
        for (b, m) in &expr.blocks {
            let b = *b;
            if b >= self.block_dims.len() {
                return Err(ConicError::Malformed(format!("block index {b} out of range")));
            }
            let k = self.block_dims[b];
            if m.nrows() != k || m.ncols() != k {
                return Err(ConicError::Malformed(format!(
                    "block {b} coefficient is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            match &mut row.blocks[b] {
                Some(acc) => *acc += m,
                slot => *slot = Some(m.clone()),
            }
        }
        Ok(row)
    }

    /// Add the equality `expr = rhs`.
    pub fn add_eq(&mut self, expr: &LinearExpr, rhs: f64) -> Result<(), ConicError> {
        let row = self.densify(expr)?;
        self.rows.push(row);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Set the objective to minimize.
    pub fn set_objective(&mut self, expr: &LinearExpr) -> Result<(), ConicError> {
        self.objective = self.densify(expr)?;
        Ok(())
    }

    /// Shape and Hermiticity checks.
    pub fn validate(&self) -> Result<(), ConicError> {
        if self.block_dims.iter().any(|&k| k == 0) {
            return Err(ConicError::Malformed("block dimension must be >= 1".into()));
        }
        if self.n_scalars == 0 && self.block_dims.is_empty() {
            return Err(ConicError::Malformed("program has no variables".into()));
        }
        if self.rhs.len() != self.rows.len() {
            return Err(ConicError::Malformed("rhs length differs from row count".into()));
        }
        let check_row = |r: &Row, what: &str| -> Result<(), ConicError> {
            if r.scalars.len() != self.n_scalars || r.blocks.len() != self.block_dims.len() {
                return Err(ConicError::Malformed(format!("{what}: row width mismatch")));
            }
            if r.scalars.iter().any(|v| !v.is_finite()) {
                return Err(ConicError::Malformed(format!("{what}: non-finite coefficient")));
            }
            for (b, m) in r.blocks.iter().enumerate() {
                if let Some(m) = m {
                    let k = self.block_dims[b];
                    if m.nrows() != k || m.ncols() != k {
                        return Err(ConicError::Malformed(format!("{what}: block {b} shape")));
                    }
                    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(ConicError::Malformed(format!("{what}: non-finite entry")));
                    }
                    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
                    if (m - m.adjoint()).iter().any(|z| z.norm() > 1e-10 * scale) {
                        return Err(ConicError::Malformed(format!("{what}: block {b} not Hermitian")));
                    }
                }
            }
            Ok(())
        };
        for (i, r) in self.rows.iter().enumerate() {
            check_row(r, &format!("constraint {i}"))?;
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::Malformed("non-finite right-hand side".into()));
        }
        check_row(&self.objective, "objective")
    }
}

/// Hermitian coefficient selecting `Re X[r][c]` (for r == c, the diagonal entry).
pub fn re_entry(dim: usize, r: usize, c: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    if r == c {
        m[(r, r)] = Complex64::new(1.0, 0.0);
    } else {
        m[(c, r)] += Complex64::new(0.5, 0.0);
        m[(r, c)] += Complex64::new(0.5, 0.0);
    }
    m
}

/// Hermitian coefficient selecting `Im X[r][c]`, r != c.
pub fn im_entry(dim: usize, r: usize, c: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    m[(c, r)] = Complex64::new(0.0, -0.5);
    m[(r, c)] = Complex64::new(0.0, 0.5);
    m
}
