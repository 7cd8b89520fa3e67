//! Integer lattices through Hermite normal form.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Sub-module of `Z^s` spanned by the rows of an echelon basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntLattice {
    dim: usize,
    /// Row echelon basis with positive pivots and reduced entries above them.
    rows: Vec<Vec<BigInt>>,
    pivots: Vec<usize>,
}

impl IntLattice {
    /// Lattice generated by `gens` (each of length `dim`).
    pub fn generated_by(dim: usize, gens: &[Vec<i64>]) -> Self {
        let mut m: Vec<Vec<BigInt>> = gens.iter().map(|g| g.iter().map(|&x| BigInt::from(x)).collect()).collect();
        let mut rows = Vec::new();
        let mut pivots = Vec::new();
        let mut top = 0;
        for col in 0..dim {
            // Euclid on the column below `top` until one non-zero entry remains.
            loop {
                let nz: Vec<usize> = (top..m.len()).filter(|&r| !m[r][col].is_zero()).collect();
                if nz.len() <= 1 {
                    break;
                }
                let piv = *nz.iter().min_by_key(|&&r| m[r][col].abs()).unwrap();
                for &r in &nz {
                    if r != piv {
                        let q = m[r][col].div_floor(&m[piv][col]);
                        for c in col..dim {
                            let d = &q * &m[piv][c];
                            m[r][c] -= d;
                        }
                    }
                }
            }
            if let Some(r) = (top..m.len()).find(|&r| !m[r][col].is_zero()) {
                m.swap(top, r);
                if m[top][col].is_negative() {
                    for x in m[top].iter_mut() {
                        *x = -x.clone();
                    }
                }
                pivots.push(col);
                top += 1;
            }
        }
        for r in m.into_iter().take(top) {
            rows.push(r);
        }
        // Reduce entries above each pivot into [0, pivot).
        for i in 0..rows.len() {
            let c = pivots[i];
            for k in 0..i {
                let q = rows[k][c].div_floor(&rows[i][c]);
                if !q.is_zero() {
                    for j in c..dim {
                        let d = &q * &rows[i][j];
                        rows[k][j] -= d;
                    }
                }
            }
        }
        Self { dim, rows, pivots }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Basis vectors (the columns of the basis matrix).
    pub fn basis(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    /// Index in `Z^s` for full-rank lattices, i.e. `|det|` of the basis matrix.
    pub fn determinant(&self) -> Option<BigInt> {
        (self.rank() == self.dim).then(|| {
            self.rows.iter().zip(&self.pivots).fold(BigInt::one(), |acc, (r, &c)| acc * &r[c])
        })
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        let mut w: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        for (r, &c) in self.rows.iter().zip(&self.pivots) {
            // Entries left of this pivot are already zero.
            if w[..c].iter().any(|x| !x.is_zero()) {
                return false;
            }
            let (q, rem) = w[c].div_rem(&r[c]);
            if !rem.is_zero() {
                return false;
            }
            for j in c..self.dim {
                let d = &q * &r[j];
                w[j] -= d;
            }
        }
        w.iter().all(Zero::is_zero)
    }
}

/// Smallest affine lattice `anchor + L` containing `points`: the anchor is the
/// first point and `L` is generated by the differences.
pub fn smallest_lattice(points: &[Vec<i64>]) -> Option<(Vec<i64>, IntLattice)> {
    let anchor = points.first()?.clone();
    let dim = anchor.len();
    let diffs: Vec<Vec<i64>> =
        points[1..].iter().map(|p| p.iter().zip(&anchor).map(|(a, b)| a - b).collect()).collect();
    Some((anchor, IntLattice::generated_by(dim, &diffs)))
}
