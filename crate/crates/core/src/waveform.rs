//! User bits, Walsh codes, per-bit code schedules, spreading and despreading.
//!
//! One matrix column is one bit interval of `M` chips. Bits are antipodal
//! (`+1`/`-1`), and despreading divides by `M` so that despreading a noiseless
//! spread signal returns the bits exactly.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{c64, CMatrix, RMatrix};
use crate::seed::{self, Seed};

/// Transmitted chip matrix `S` (`M x N`).
pub type SignalMatrix = CMatrix;

/// `K x N` matrix of antipodal user bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    k: usize,
    n: usize,
    // column-major, matching the matrix types
    values: Vec<i8>,
}

impl BitMatrix {
    /// Builds a bit matrix from a generator that must return `+1` or `-1`.
    pub fn try_from_fn(k: usize, n: usize, mut f: impl FnMut(usize, usize) -> i8) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::Parameter(format!("bit matrix must be non-empty, got {k}x{n}")));
        }
        let mut values = Vec::with_capacity(k * n);
        for j in 0..n {
            for i in 0..k {
                let v = f(i, j);
                if v != 1 && v != -1 {
                    return Err(Error::Parameter(format!("bit ({i},{j}) is {v}, expected +1 or -1")));
                }
                values.push(v);
            }
        }
        Ok(Self { k, n, values })
    }

    /// Hard decisions: `+1` for nonnegative entries, `-1` otherwise.
    pub fn from_signs(x: &RMatrix) -> Self {
        let (k, n) = (x.nrows(), x.ncols());
        let values = (0..n)
            .flat_map(|j| (0..k).map(move |i| (i, j)))
            .map(|(i, j)| if x[(i, j)] >= 0.0 { 1 } else { -1 })
            .collect();
        Self { k, n, values }
    }

    pub fn k_users(&self) -> usize {
        self.k
    }

    pub fn n_bits(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, user: usize, bit: usize) -> i8 {
        self.values[bit * self.k + user]
    }

    /// The bits of column `bit` (one per user).
    pub fn column(&self, bit: usize) -> &[i8] {
        &self.values[bit * self.k..(bit + 1) * self.k]
    }

    pub fn to_real(&self) -> RMatrix {
        RMatrix::from_fn(self.k, self.n, |i, j| f64::from(self.get(i, j)))
    }

    /// Number of positions where the two matrices disagree.
    pub fn count_differences(&self, other: &BitMatrix) -> Result<usize> {
        if (self.k, self.n) != (other.k, other.n) {
            return Err(Error::dims(
                "bit comparison",
                format!("{}x{}", self.k, self.n),
                format!("{}x{}", other.k, other.n),
            ));
        }
        Ok(self.values.iter().zip(&other.values).filter(|(a, b)| a != b).count())
    }
}

/// Sign of the Sylvester-Hadamard entry `(i, j)`: `(-1)^popcount(i & j)`.
#[inline]
fn walsh_entry(i: usize, j: usize) -> i8 {
    if (i & j).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Sylvester-Hadamard (Walsh) matrix of order `M`, a power of two.
///
/// The matrix is symmetric, so `W^T = W` and `W^T W = M I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalshMatrix {
    m: usize,
    values: Vec<i8>,
}

impl WalshMatrix {
    pub fn order(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.values[col * self.m + row]
    }

    pub fn column(&self, col: usize) -> &[i8] {
        &self.values[col * self.m..(col + 1) * self.m]
    }

    /// `W^T W` in exact integer arithmetic, row-major.
    pub fn gram(&self) -> Vec<i64> {
        let m = self.m;
        let mut g = vec![0i64; m * m];
        for a in 0..m {
            for b in a..m {
                let dot: i64 = self
                    .column(a)
                    .iter()
                    .zip(self.column(b))
                    .map(|(&x, &y)| i64::from(x) * i64::from(y))
                    .sum();
                g[a * m + b] = dot;
                g[b * m + a] = dot;
            }
        }
        g
    }

    /// Dense complex copy.
    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(self.m, self.m, |i, j| c64::new(f64::from(self.get(i, j)), 0.0))
    }

    /// `W^T a` via the fast Walsh-Hadamard transform of each column.
    pub fn apply_transpose(&self, a: &CMatrix) -> Result<CMatrix> {
        // W is symmetric
        self.apply(a)
    }

    /// `W a` via the fast Walsh-Hadamard transform of each column.
    pub fn apply(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.nrows() != self.m {
            return Err(Error::dims("Walsh transform", format!("{} rows", self.m), a.nrows()));
        }
        let mut out = a.clone();
        for j in 0..out.ncols() {
            fwht(out.col_as_slice_mut(j));
        }
        Ok(out)
    }
}

/// In-place natural-order fast Walsh-Hadamard transform (unnormalized).
fn fwht(x: &mut [c64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (x[i], x[i + h]);
                x[i] = a + b;
                x[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Sylvester construction of the order-`m` Walsh matrix.
pub fn walsh(m: usize) -> Result<WalshMatrix> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::Parameter(format!("Walsh order must be a power of two >= 2, got {m}")));
    }
    let values = (0..m)
        .flat_map(|j| (0..m).map(move |i| walsh_entry(i, j)))
        .collect();
    Ok(WalshMatrix { m, values })
}

/// I.i.d. uniform antipodal bits.
pub fn gen_bits(k: usize, n: usize, seed: Seed) -> Result<BitMatrix> {
    let mut rng = seed::rng(seed);
    BitMatrix::try_from_fn(k, n, |_, _| if rng.random::<bool>() { 1 } else { -1 })
}

/// Per-bit choice of `K` distinct Walsh columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSchedule {
    m: usize,
    k: usize,
    column_indices: Vec<Vec<usize>>,
}

impl CodeSchedule {
    /// Builds a schedule from explicit column choices. Every list must hold `k`
    /// distinct indices below `m`.
    pub fn from_indices(m: usize, k: usize, column_indices: Vec<Vec<usize>>) -> Result<Self> {
        if !m.is_power_of_two() || m < 2 {
            return Err(Error::Parameter(format!("code length must be a power of two >= 2, got {m}")));
        }
        if k > m {
            return Err(Error::Capacity { k, m });
        }
        for (n, idx) in column_indices.iter().enumerate() {
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if idx.len() != k || sorted.len() != k || sorted.last().is_some_and(|&c| c >= m) {
                return Err(Error::Parameter(format!(
                    "bit {n}: expected {k} distinct column indices below {m}, got {idx:?}"
                )));
            }
        }
        Ok(Self { m, k, column_indices })
    }

    pub fn code_len(&self) -> usize {
        self.m
    }

    pub fn k_users(&self) -> usize {
        self.k
    }

    pub fn n_bits(&self) -> usize {
        self.column_indices.len()
    }

    /// Walsh columns used at bit `n`, one per user.
    pub fn indices(&self, n: usize) -> &[usize] {
        &self.column_indices[n]
    }

    /// The `M x K` code matrix `C^(n)`.
    pub fn code_matrix(&self, n: usize) -> RMatrix {
        let idx = &self.column_indices[n];
        RMatrix::from_fn(self.m, self.k, |row, user| f64::from(walsh_entry(row, idx[user])))
    }
}

/// Draws `K` Walsh columns without replacement, independently for each bit.
pub fn gen_code_schedule(w: &WalshMatrix, k: usize, n: usize, seed: Seed) -> Result<CodeSchedule> {
    let m = w.order();
    if k > m {
        return Err(Error::Capacity { k, m });
    }
    if k == 0 || n == 0 {
        return Err(Error::Parameter(format!("need k >= 1 and n >= 1, got k={k} n={n}")));
    }
    let mut rng = seed::rng(seed);
    let column_indices = (0..n).map(|_| index::sample(&mut rng, m, k).into_vec()).collect();
    Ok(CodeSchedule { m, k, column_indices })
}

/// `s_n = C^(n) x_n` for every bit.
pub fn spread(x: &BitMatrix, c: &CodeSchedule) -> Result<SignalMatrix> {
    if x.k_users() != c.k_users() || x.n_bits() != c.n_bits() {
        return Err(Error::dims(
            "spread",
            format!("{}x{} bits", c.k_users(), c.n_bits()),
            format!("{}x{}", x.k_users(), x.n_bits()),
        ));
    }
    let m = c.code_len();
    let mut s = SignalMatrix::zeros(m, x.n_bits());
    for n in 0..x.n_bits() {
        let bits = x.column(n);
        let col = s.col_as_slice_mut(n);
        for (row, out) in col.iter_mut().enumerate() {
            let chip: i32 = c
                .indices(n)
                .iter()
                .zip(bits)
                .map(|(&code, &b)| i32::from(walsh_entry(row, code)) * i32::from(b))
                .sum();
            *out = c64::new(f64::from(chip), 0.0);
        }
    }
    Ok(s)
}

/// `x~_n = (1/M) C^(n)^T s^_n` for every bit; returns a `K x N` matrix.
pub fn despread(s_hat: &SignalMatrix, c: &CodeSchedule) -> Result<CMatrix> {
    let m = c.code_len();
    if s_hat.nrows() != m || s_hat.ncols() != c.n_bits() {
        return Err(Error::dims(
            "despread",
            format!("{}x{}", m, c.n_bits()),
            format!("{}x{}", s_hat.nrows(), s_hat.ncols()),
        ));
    }
    let inv_m = 1.0 / m as f64;
    let mut out = CMatrix::zeros(c.k_users(), c.n_bits());
    for n in 0..c.n_bits() {
        let col = s_hat.col_as_slice(n);
        for (user, &code) in c.indices(n).iter().enumerate() {
            let acc: c64 = col
                .iter()
                .enumerate()
                .map(|(row, &v)| if walsh_entry(row, code) > 0 { v } else { -v })
                .sum();
            out[(user, n)] = acc * inv_m;
        }
    }
    Ok(out)
}
