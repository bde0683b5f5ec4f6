//! Cyclic computation-task matrix, per-iteration assignment, and gradient
//! encoding.
//!
//! The task matrix is an `N x N` binary matrix whose rows each select `d`
//! subsets. Row `r` of the cyclic matrix covers columns `r, r+1, ...,
//! r+d-1 (mod N)`, so every row and every column has exactly `d` ones.
//! Each iteration the server draws a permutation of task rows (device `i`
//! works row `task_rows[i]`) and a data permutation mapping matrix columns
//! to subset indices. A device averages the `d` selected subset gradients
//! into its coded vector.
//!
//! The selected subset gradients are summed in ascending subset order and
//! divided by `d` once at the end. With `d = N` this makes the coded vector
//! bit-identical to `grad F(x) / N` computed by the data module, which the
//! reduction identities rely on.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::perm::{for_each_permutation, Permutation};
use crate::rng::RngStream;
use crate::scalar::{real_of, Compensated, Real};
use crate::vector::ModelVector;

/// Binary task matrix with every row selecting exactly `d` columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskMatrix {
    n: usize,
    d: usize,
    rows: Vec<Vec<usize>>,
}

impl TaskMatrix {
    /// Cyclic matrix: row 0 covers columns `0..d`, each later row is the
    /// right shift of the previous one.
    pub fn cyclic(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix size must be at least 1"));
        }
        if d < 1 || d > n {
            return Err(Error::invalid(format!("load d={d} must satisfy 1 <= d <= n={n}")));
        }
        let rows = (0..n)
            .map(|r| {
                let mut cols: Vec<usize> = (0..d).map(|j| (r + j) % n).collect();
                cols.sort_unstable();
                cols
            })
            .collect();
        Ok(Self { n, d, rows })
    }

    /// Arbitrary member of the family of matrices with row sums `d`
    /// (column sums unconstrained). Rows are lists of selected columns.
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.len() != n || n == 0 {
            return Err(Error::invalid("need exactly n rows"));
        }
        let d = rows[0].len();
        if d < 1 || d > n {
            return Err(Error::invalid("row weight must satisfy 1 <= d <= n"));
        }
        let mut sorted_rows = Vec::with_capacity(n);
        for row in rows {
            if row.len() != d {
                return Err(Error::invalid("all rows must select exactly d columns"));
            }
            let mut r = row;
            r.sort_unstable();
            if r.iter().any(|&c| c >= n) || r.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid("row entries must be distinct columns below n"));
            }
            sorted_rows.push(r);
        }
        Ok(Self { n, d, rows: sorted_rows })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Computational load per device (ones per row).
    pub fn load(&self) -> usize {
        self.d
    }

    /// Selected columns of one row, ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.rows[r]
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.n];
        for row in &self.rows {
            for &c in row {
                sums[c] += 1;
            }
        }
        sums
    }

    pub fn has_uniform_column_sums(&self) -> bool {
        self.column_sums().iter().all(|&s| s == self.d)
    }
}

/// One iteration's randomness: which task row each device works, and which
/// subset each matrix column refers to.
#[derive(Clone, Debug)]
pub struct Assignment {
    pub task_rows: Permutation,
    pub data_order: Permutation,
}

impl Assignment {
    pub fn sample(task_rng: &mut RngStream, data_rng: &mut RngStream, n: usize) -> Result<Self> {
        Ok(Self {
            task_rows: Permutation::sample(task_rng, n)?,
            data_order: Permutation::sample(data_rng, n)?,
        })
    }
}

/// Subset indices selected for `device` under `assignment`, ascending.
pub fn selected_subsets(
    device: usize,
    assignment: &Assignment,
    matrix: &TaskMatrix,
) -> Result<Vec<usize>> {
    let n = matrix.size();
    if assignment.task_rows.len() != n || assignment.data_order.len() != n {
        return Err(Error::invalid("assignment size does not match matrix"));
    }
    if device >= n {
        return Err(Error::invalid(format!("device {device} out of range")));
    }
    let row = assignment.task_rows.apply(device);
    let mut subsets: Vec<usize> =
        matrix.row(row).iter().map(|&col| assignment.data_order.apply(col)).collect();
    subsets.sort_unstable();
    Ok(subsets)
}

fn coded_sum<T: Real>(
    subsets: &[usize],
    dim: usize,
    mut fetch: impl FnMut(usize, &mut ModelVector<T>) -> Result<()>,
    load: usize,
) -> Result<ModelVector<T>> {
    let mut acc = ModelVector::zeros(dim);
    let mut scratch = ModelVector::zeros(dim);
    for &k in subsets {
        fetch(k, &mut scratch)?;
        acc.add_assign(&scratch)?;
    }
    acc.div_assign(real_of::<T>(load));
    Ok(acc)
}

/// Coded vector of one device: the average of its `d` selected subset
/// gradients at `model`.
pub fn encode<T: Real>(
    device: usize,
    assignment: &Assignment,
    model: &ModelVector<T>,
    dataset: &Dataset<T>,
    matrix: &TaskMatrix,
) -> Result<ModelVector<T>> {
    if dataset.num_subsets() != matrix.size() {
        return Err(Error::invalid("dataset subsets must match matrix size"));
    }
    let subsets = selected_subsets(device, assignment, matrix)?;
    coded_sum(
        &subsets,
        dataset.dim(),
        |k, out| dataset.local_gradient_into(model, k, out),
        matrix.load(),
    )
}

/// Same as [`encode`] but reading per-subset gradients from a cache, for
/// the inner loop of the simulator. Bit-identical to [`encode`] when the
/// cache holds `local_gradient(model, k)`.
pub fn encode_from_cache<T: Real>(
    device: usize,
    assignment: &Assignment,
    matrix: &TaskMatrix,
    gradients: &[ModelVector<T>],
) -> Result<ModelVector<T>> {
    if gradients.len() != matrix.size() {
        return Err(Error::invalid("gradient cache must match matrix size"));
    }
    let dim = gradients[0].dim();
    let subsets = selected_subsets(device, assignment, matrix)?;
    coded_sum(
        &subsets,
        dim,
        |k, out| {
            out.values_mut().copy_from_slice(gradients[k].values());
            Ok(())
        },
        matrix.load(),
    )
}

/// How the encoder moments are evaluated.
#[derive(Clone, Copy, Debug)]
pub enum MomentMode {
    /// Enumerate all `N! * N` (data permutation, task row) combinations.
    /// Rejected above `N = 8`.
    Exact,
    /// Sample combinations instead of enumerating them.
    MonteCarlo { samples: usize, seed: u64 },
}

/// First and second moments of one device's coded vector over the
/// assignment randomness, plus the mean squared deviation from the average
/// subset gradient.
#[derive(Clone, Debug)]
pub struct EncoderMoments<T: Real> {
    pub mean: ModelVector<T>,
    pub second_moment: T,
    pub mean_sq_deviation: T,
}

const EXACT_ENUMERATION_MAX_N: usize = 8;

pub fn encoder_moments<T: Real>(
    model: &ModelVector<T>,
    dataset: &Dataset<T>,
    matrix: &TaskMatrix,
    mode: MomentMode,
) -> Result<EncoderMoments<T>> {
    let n = matrix.size();
    if dataset.num_subsets() != n {
        return Err(Error::invalid("dataset subsets must match matrix size"));
    }
    let dim = dataset.dim();
    let gradients: Vec<ModelVector<T>> =
        (0..n).map(|k| dataset.local_gradient(model, k)).collect::<Result<_>>()?;
    let mu = dataset.mean_gradient(model)?;
    let load_divisor = real_of::<T>(matrix.load());

    let mut mean = vec![Compensated::<T>::new(); dim];
    let mut second = Compensated::<T>::new();
    let mut deviation = Compensated::<T>::new();
    let mut count: u64 = 0;

    let mut visit = |perm: &[usize], row: usize| {
        let mut g = ModelVector::zeros(dim);
        for &col in matrix.row(row) {
            // safe: permutation entries are below n
            let _ = g.add_assign(&gradients[perm[col]]);
        }
        g.div_assign(load_divisor);
        for (acc, &v) in mean.iter_mut().zip(g.values()) {
            acc.add(v);
        }
        second.add(g.norm_sq());
        deviation.add(g.distance_sq(&mu).expect("dims match"));
        count += 1;
    };

    match mode {
        MomentMode::Exact => {
            if n > EXACT_ENUMERATION_MAX_N {
                return Err(Error::BudgetExceeded(format!(
                    "exact enumeration limited to N <= {EXACT_ENUMERATION_MAX_N}, got {n}"
                )));
            }
            for_each_permutation(n, |perm| {
                for row in 0..n {
                    visit(perm, row);
                }
            });
        }
        MomentMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("need at least one sample"));
            }
            for s in 0..samples {
                let mut rng =
                    RngStream::derive(seed, crate::rng::StreamDomain::Probe, 0, s as u64);
                let perm = Permutation::sample(&mut rng, n)?;
                let row = rng.random_range(0..n);
                visit(perm.as_slice(), row);
            }
        }
    }

    let total = real_of::<T>(count as usize);
    let mean =
        ModelVector::from_values(mean.into_iter().map(|acc| acc.value() / total).collect());
    Ok(EncoderMoments {
        mean,
        second_moment: second.value() / total,
        mean_sq_deviation: deviation.value() / total,
    })
}
