//! Banded Gaussian elimination without pivoting.
//!
//! The policy-evaluation systems solved here are strictly diagonally
//! dominant (diagonal 1, off-diagonal mass at most the continuation
//! factor), so elimination without pivoting is stable.

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `data[i * width + (j - i + kl)]` holds `A[i][j]`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i},{j}) outside band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.pos(i, j)]
        }
    }

    /// Solve `A x = b` in place by banded LU without pivoting; consumes the
    /// factorization workspace.
    pub fn solve(mut self, mut b: Vec<f64>) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let pivot = self.get(k, k);
            debug_assert!(pivot.abs() > 1e-300, "zero pivot at {k}");
            let i_end = (k + kl).min(n - 1);
            for i in k + 1..=i_end {
                let factor = self.get(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                let j_end = (k + ku).min(n - 1);
                for j in k..=j_end {
                    let v = self.get(k, j);
                    if v != 0.0 {
                        let p = self.pos(i, j);
                        self.data[p] -= factor * v;
                    }
                }
                b[i] -= factor * b[k];
            }
        }
        for k in (0..n).rev() {
            let j_end = (k + ku).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=j_end {
                acc -= self.get(k, j) * b[j];
            }
            b[k] = acc / self.get(k, k);
        }
        b
    }
}
