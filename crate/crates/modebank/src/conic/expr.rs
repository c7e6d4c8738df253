//! Affine expressions in scalar decision variables, and dense matrices of
//! them, used to assemble LMI blocks entry by entry.

use nalgebra::DMatrix;

/// Affine expression `Σ c_k · x_{i_k} + constant`, terms kept sorted by
/// variable id with duplicates merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub(crate) terms: Vec<(usize, f64)>,
    pub(crate) constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn variable(id: usize) -> Self {
        Self {
            terms: vec![(id, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(id: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(id, coeff)],
            constant: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut a, mut b) = (0, 0);
        while a < self.terms.len() || b < other.terms.len() {
            match (self.terms.get(a), other.terms.get(b)) {
                (Some(&(ia, ca)), Some(&(ib, cb))) => {
                    if ia == ib {
                        let c = ca + cb;
                        if c != 0.0 {
                            terms.push((ia, c));
                        }
                        a += 1;
                        b += 1;
                    } else if ia < ib {
                        terms.push((ia, ca));
                        a += 1;
                    } else {
                        terms.push((ib, cb));
                        b += 1;
                    }
                }
                (Some(&t), None) => {
                    terms.push(t);
                    a += 1;
                }
                (None, Some(&t)) => {
                    terms.push(t);
                    b += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Self {
            terms,
            constant: self.constant + other.constant,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut e = self.clone();
        e.constant += c;
        e
    }

    /// Evaluate at a point (indexing by variable id).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(i, c)| c * x[i])
            .sum::<f64>()
            + self.constant
    }

    pub fn max_var_id(&self) -> Option<usize> {
        self.terms.last().map(|&(i, _)| i)
    }

    /// Render with variable names for debug dumps.
    pub fn render(&self, names: &[String]) -> String {
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .map(|&(i, c)| format!("{c:+.6e}*{}", names.get(i).map(|s| s.as_str()).unwrap_or("?")))
            .collect();
        if self.constant != 0.0 || parts.is_empty() {
            parts.push(format!("{:+.6e}", self.constant));
        }
        parts.join(" ")
    }
}

/// Dense row-major matrix of affine expressions.
#[derive(Debug, Clone)]
pub struct ExprMat {
    rows: usize,
    cols: usize,
    data: Vec<LinExpr>,
}

impl ExprMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![LinExpr::default(); rows * cols],
        }
    }

    pub fn from_const(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out[(r, c)] = LinExpr::constant(m[(r, c)]);
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::from_const(&DMatrix::identity(n, n))
    }

    /// Row-major matrix of fresh variables given their ids.
    pub fn from_var_ids(ids: &[usize], rows: usize, cols: usize) -> Self {
        assert_eq!(ids.len(), rows * cols);
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out[(r, c)] = LinExpr::variable(ids[r * cols + c]);
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }
    pub fn ncols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].clone();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.data {
            *e = e.scale(s);
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "ExprMat add: shape mismatch");
        let mut out = self.clone();
        for (e, o) in out.data.iter_mut().zip(&other.data) {
            *e = e.add(o);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Constant matrix times expression matrix.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows, "ExprMat left_mul: shape mismatch");
        let mut out = Self::zeros(m.nrows(), self.cols);
        for r in 0..m.nrows() {
            for c in 0..self.cols {
                let mut acc = LinExpr::default();
                for k in 0..self.rows {
                    let coeff = m[(r, k)];
                    if coeff != 0.0 {
                        acc = acc.add(&self[(k, c)].scale(coeff));
                    }
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// Expression matrix times constant matrix.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, m.nrows(), "ExprMat right_mul: shape mismatch");
        let mut out = Self::zeros(self.rows, m.ncols());
        for r in 0..self.rows {
            for c in 0..m.ncols() {
                let mut acc = LinExpr::default();
                for k in 0..self.cols {
                    let coeff = m[(k, c)];
                    if coeff != 0.0 {
                        acc = acc.add(&self[(r, k)].scale(coeff));
                    }
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// Assemble from a grid of blocks; every row of the grid must agree on
    /// block heights, every column on block widths.
    pub fn block(grid: &[Vec<&ExprMat>]) -> Self {
        assert!(!grid.is_empty() && !grid[0].is_empty());
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        for row in grid {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            for (b, &w) in row.iter().zip(&widths) {
                assert_eq!(b.cols, w, "block width mismatch");
            }
        }
        for (row, &h) in grid.iter().zip(&heights) {
            for b in row {
                assert_eq!(b.rows, h, "block height mismatch");
            }
        }
        let total_r: usize = heights.iter().sum();
        let total_c: usize = widths.iter().sum();
        let mut out = Self::zeros(total_r, total_c);
        let mut r0 = 0;
        for (gi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (gj, b) in row.iter().enumerate() {
                for r in 0..heights[gi] {
                    for c in 0..widths[gj] {
                        out[(r0 + r, c0 + c)] = b[(r, c)].clone();
                    }
                }
                c0 += widths[gj];
            }
            r0 += heights[gi];
        }
        out
    }

    /// Evaluate every entry at a point.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)].eval(x))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinExpr> {
        self.data.iter()
    }
}

impl std::ops::Index<(usize, usize)> for ExprMat {
    type Output = LinExpr;
    fn index(&self, (r, c): (usize, usize)) -> &LinExpr {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ExprMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut LinExpr {
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn add_merges_terms() {
        let a = LinExpr::term(0, 1.0).add(&LinExpr::term(2, 3.0));
        let b = LinExpr::term(2, -3.0).add(&LinExpr::constant(5.0));
        let s = a.add(&b);
        assert_eq!(s.terms, vec![(0, 1.0)]);
        assert_eq!(s.constant, 5.0);
    }

    #[test]
    fn matrix_products_match_numeric_evaluation() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let vars = ExprMat::from_var_ids(&[0, 1, 2, 3], 2, 2);
        let x = [1.0, -1.0, 0.5, 2.0];
        let xm = vars.eval(&x);
        assert_relative_eq!(vars.left_mul(&m).eval(&x), &m * &xm, max_relative = 1e-14);
        assert_relative_eq!(vars.right_mul(&m).eval(&x), &xm * &m, max_relative = 1e-14);
        assert_relative_eq!(
            vars.transpose().eval(&x),
            xm.transpose(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn block_assembly() {
        let a = ExprMat::from_const(&DMatrix::from_element(1, 1, 2.0));
        let b = ExprMat::from_var_ids(&[0], 1, 1);
        let m = ExprMat::block(&[vec![&a, &b], vec![&b, &a]]);
        let x = [7.0];
        let got = m.eval(&x);
        let want = DMatrix::from_row_slice(2, 2, &[2.0, 7.0, 7.0, 2.0]);
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }
}
