//! Small dense matrix used by the least-squares objective.

use std::path::Path;
use std::str::FromStr;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix {rows}x{cols} needs {expected} entries, got {found}")]
    Size {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("linear system is singular (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
}

impl<T: Scalar> Matrix<T> {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::Size {
                rows,
                cols,
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// `Aᵀ y`
    pub fn mul_transpose_vec(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += *a * *yr;
            }
        }
        out
    }

    /// Largest eigenvalue of `AᵀA` (that is, `σ_max(A)²`) by power iteration
    /// from the all-ones start vector.
    pub fn gram_spectral_norm(&self, iterations: usize) -> T {
        if self.cols == 0 {
            return T::zero();
        }
        let mut v = vec![T::one(); self.cols];
        let mut lambda = T::zero();
        for _ in 0..iterations {
            let w = self.mul_transpose_vec(&self.mul_vec(&v));
            let norm = w.iter().map(|x| *x * *x).sum::<T>().sqrt();
            if norm == T::zero() {
                return T::zero();
            }
            let vnorm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
            lambda = norm / vnorm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }

    /// Reads the plain-text format: first line `rows cols`, then the entries in
    /// row-major order separated by whitespace.
    pub fn read_text(path: impl AsRef<Path>) -> Result<Self, MatrixError>
    where
        T: FromStr,
    {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MatrixError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self, MatrixError>
    where
        T: FromStr,
    {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(MatrixError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| MatrixError::Parse {
                line: hline + 1,
                message: format!("bad header: {e}"),
            })?;
        if dims.len() != 2 {
            return Err(MatrixError::Parse {
                line: hline + 1,
                message: format!("header must be `rows cols`, got {} fields", dims.len()),
            });
        }
        let mut data = Vec::with_capacity(dims[0] * dims[1]);
        for (ln, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok.parse::<T>().map_err(|_| MatrixError::Parse {
                    line: ln + 1,
                    message: format!("not a number: {tok:?}"),
                })?;
                data.push(v);
            }
        }
        Self::from_row_major(dims[0], dims[1], data)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| format!("{v}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Solves the square system `M z = rhs` by Gaussian elimination with partial
/// pivoting. `m` is row-major `n × n`.
pub fn solve_dense<T: Scalar>(mut m: Vec<T>, mut rhs: Vec<T>) -> Result<Vec<T>, MatrixError> {
    let n = rhs.len();
    debug_assert_eq!(m.len(), n * n);
    let scale = m.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let tiny = scale * T::epsilon() * T::of(n.max(1) as f64);
    for col in 0..n {
        let (piv_row, piv) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv <= tiny || piv == T::zero() {
            return Err(MatrixError::Singular {
                column: col,
                pivot: piv.as_f64(),
            });
        }
        if piv_row != col {
            for c in 0..n {
                m.swap(col * n + c, piv_row * n + c);
            }
            rhs.swap(col, piv_row);
        }
        let p = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let sub = f * m[col * n + c];
                m[r * n + c] -= sub;
            }
            let sub = f * rhs[col];
            rhs[r] -= sub;
        }
    }
    let mut z = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m[r * n + c] * z[c];
        }
        z[r] = acc / m[r * n + r];
    }
    Ok(z)
}
