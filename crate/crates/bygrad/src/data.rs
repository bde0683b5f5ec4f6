//! Synthetic heterogeneous linear-regression data and loss/gradient
//! evaluation.
//!
//! The training set is split into `N` subsets. Subset `k` (0-based here,
//! `k+1` in 1-based prose) holds samples `(z, y)` with `z` entries drawn
//! from `N(0, 100)` and `y ~ N(<z, c_k>, 1)` for a hidden per-subset
//! coefficient vector `c_k` with entries `N(0, 1 + (k+1) * sigma_h)`.
//! Larger `sigma_h` makes the subsets more heterogeneous; `sigma_h = 0` is
//! the IID case.
//!
//! The loss on subset `k` is `f_k(x) = sum_s 0.5 * (<x, z_s> - y_s)^2` and
//! the total loss is `F(x) = sum_k f_k(x)`, unnormalized.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamDomain};
use crate::scalar::{real_of, Real};
use crate::vector::ModelVector;

#[derive(Clone, Debug)]
pub struct Subset<T: Real> {
    pub features: Vec<ModelVector<T>>,
    pub labels: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Dataset<T: Real> {
    subsets: Vec<Subset<T>>,
    dim: usize,
}

impl<T: Real> Dataset<T>
where
    StandardNormal: Distribution<T>,
{
    /// Generate the linear-regression benchmark.
    ///
    /// Deterministic in `seed`: subsets draw from streams keyed by their own
    /// index, so the same seed reproduces the same dataset byte for byte.
    pub fn generate_linear_regression(
        seed: u64,
        num_subsets: usize,
        dim: usize,
        sigma_h: f64,
        samples_per_subset: usize,
    ) -> Result<Self> {
        if num_subsets == 0 || dim == 0 {
            return Err(Error::invalid("need at least one subset and one dimension"));
        }
        if samples_per_subset == 0 {
            return Err(Error::invalid("need at least one sample per subset"));
        }
        if !(sigma_h >= 0.0) {
            return Err(Error::invalid("sigma_h must be nonnegative"));
        }
        let feature_std: T = T::from_f64(10.0).unwrap();
        let mut subsets = Vec::with_capacity(num_subsets);
        for k in 0..num_subsets {
            let hidden_var = 1.0 + (k as f64 + 1.0) * sigma_h;
            let hidden_std: T = T::from_f64(hidden_var.sqrt()).unwrap();
            let mut hidden_rng = RngStream::derive(seed, StreamDomain::DataHidden, k as u64, 0);
            let hidden: Vec<T> = (0..dim)
                .map(|_| hidden_std * StandardNormal.sample(&mut hidden_rng))
                .collect();
            let hidden = ModelVector::from_values(hidden);

            let mut features = Vec::with_capacity(samples_per_subset);
            let mut labels = Vec::with_capacity(samples_per_subset);
            for s in 0..samples_per_subset {
                let mut rng = RngStream::derive(seed, StreamDomain::DataSample, k as u64, s as u64);
                let z: Vec<T> =
                    (0..dim).map(|_| feature_std * StandardNormal.sample(&mut rng)).collect();
                let z = ModelVector::from_values(z);
                let mean = z.dot(&hidden)?;
                let noise: T = StandardNormal.sample(&mut rng);
                features.push(z);
                labels.push(mean + noise);
            }
            subsets.push(Subset { features, labels });
        }
        Ok(Self { subsets, dim })
    }
}

impl<T: Real> Dataset<T> {
    pub fn from_subsets(subsets: Vec<Subset<T>>) -> Result<Self> {
        let dim = subsets
            .first()
            .and_then(|s| s.features.first())
            .map(|f| f.dim())
            .ok_or_else(|| Error::invalid("dataset must be nonempty"))?;
        for s in &subsets {
            if s.features.len() != s.labels.len() || s.features.is_empty() {
                return Err(Error::invalid("subset features and labels must align"));
            }
            for f in &s.features {
                if f.dim() != dim {
                    return Err(Error::DimMismatch { expected: dim, got: f.dim() });
                }
            }
        }
        Ok(Self { subsets, dim })
    }

    pub fn num_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subset(&self, k: usize) -> &Subset<T> {
        &self.subsets[k]
    }

    fn check_subset(&self, k: usize) -> Result<()> {
        if k >= self.subsets.len() {
            return Err(Error::invalid(format!(
                "subset index {k} out of range (have {})",
                self.subsets.len()
            )));
        }
        Ok(())
    }

    fn check_model(&self, model: &ModelVector<T>) -> Result<()> {
        if model.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: model.dim() });
        }
        Ok(())
    }

    /// Loss of subset `k`: `sum_s 0.5 (<x, z_s> - y_s)^2`.
    pub fn subset_loss(&self, model: &ModelVector<T>, k: usize) -> Result<T> {
        self.check_subset(k)?;
        self.check_model(model)?;
        let s = &self.subsets[k];
        let half = T::from_f64(0.5).unwrap();
        let mut acc = T::zero();
        for (z, &y) in s.features.iter().zip(&s.labels) {
            let r = model.dot(z)? - y;
            acc = acc + half * r * r;
        }
        Ok(acc)
    }

    /// Gradient of subset `k`: `sum_s (<x, z_s> - y_s) z_s`, written into `out`.
    pub fn local_gradient_into(
        &self,
        model: &ModelVector<T>,
        k: usize,
        out: &mut ModelVector<T>,
    ) -> Result<()> {
        self.check_subset(k)?;
        self.check_model(model)?;
        if out.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: out.dim() });
        }
        for v in out.values_mut() {
            *v = T::zero();
        }
        let s = &self.subsets[k];
        for (z, &y) in s.features.iter().zip(&s.labels) {
            let r = model.dot(z)? - y;
            out.axpy_assign(r, z)?;
        }
        Ok(())
    }

    pub fn local_gradient(&self, model: &ModelVector<T>, k: usize) -> Result<ModelVector<T>> {
        let mut out = ModelVector::zeros(self.dim);
        self.local_gradient_into(model, k, &mut out)?;
        Ok(out)
    }

    /// Total loss `F(x)` and gradient `grad F(x)`, accumulated subset by
    /// subset in index order. The gradient accumulation adds whole
    /// per-subset gradients so that it is bit-identical to summing
    /// `local_gradient(k)` over `k`.
    pub fn loss_and_gradient(&self, model: &ModelVector<T>) -> Result<(T, ModelVector<T>)> {
        self.check_model(model)?;
        let mut grad = ModelVector::zeros(self.dim);
        let mut scratch = ModelVector::zeros(self.dim);
        let mut loss = T::zero();
        for k in 0..self.subsets.len() {
            loss = loss + self.subset_loss(model, k)?;
            self.local_gradient_into(model, k, &mut scratch)?;
            grad.add_assign(&scratch)?;
        }
        Ok((loss, grad))
    }

    pub fn loss(&self, model: &ModelVector<T>) -> Result<T> {
        let mut loss = T::zero();
        for k in 0..self.subsets.len() {
            loss = loss + self.subset_loss(model, k)?;
        }
        Ok(loss)
    }

    pub fn full_gradient(&self, model: &ModelVector<T>) -> Result<ModelVector<T>> {
        let mut grad = ModelVector::zeros(self.dim);
        let mut scratch = ModelVector::zeros(self.dim);
        for k in 0..self.subsets.len() {
            self.local_gradient_into(model, k, &mut scratch)?;
            grad.add_assign(&scratch)?;
        }
        Ok(grad)
    }

    /// `grad F(x) / N`, the average subset gradient.
    pub fn mean_gradient(&self, model: &ModelVector<T>) -> Result<ModelVector<T>> {
        let mut g = self.full_gradient(model)?;
        g.div_assign(real_of::<T>(self.num_subsets()));
        Ok(g)
    }

    /// Smoothness constant of the quadratic loss: `sum over all samples of
    /// ||z||^2`. This upper-bounds the largest Hessian eigenvalue.
    pub fn smoothness_bound(&self) -> T {
        let mut acc = T::zero();
        for s in &self.subsets {
            for z in &s.features {
                acc = acc + z.norm_sq();
            }
        }
        acc
    }

    /// Empirical heterogeneity at `x`: `(1/N) sum_k ||grad f_k(x) - mu||^2`.
    pub fn heterogeneity_sq(&self, model: &ModelVector<T>) -> Result<T> {
        let mu = self.mean_gradient(model)?;
        let mut acc = T::zero();
        for k in 0..self.subsets.len() {
            let g = self.local_gradient(model, k)?;
            acc = acc + g.distance_sq(&mu)?;
        }
        Ok(acc / real_of::<T>(self.num_subsets()))
    }

    /// Supremum of the empirical heterogeneity over a probe set of models.
    pub fn heterogeneity_sup_sq(&self, probes: &[ModelVector<T>]) -> Result<T> {
        let mut best = T::zero();
        for p in probes {
            let h = self.heterogeneity_sq(p)?;
            if h > best {
                best = h;
            }
        }
        Ok(best)
    }
}

impl Dataset<f64> {
    /// Export as CSV with columns `k,y,z0,...,z{Q-1}`, one row per sample,
    /// subsets in index order. Floats are written in shortest
    /// round-trippable form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,y");
        for q in 0..self.dim {
            out.push_str(&format!(",z{q}"));
        }
        out.push('\n');
        for (k, s) in self.subsets.iter().enumerate() {
            for (z, y) in s.features.iter().zip(&s.labels) {
                out.push_str(&format!("{k},{y:?}"));
                for v in z.values() {
                    out.push_str(&format!(",{v:?}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty dataset file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "k" || cols[1] != "y" {
            return Err(Error::invalid("expected header k,y,z0,..."));
        }
        let dim = cols.len() - 2;
        let mut subsets: Vec<Subset<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(Error::invalid(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 2,
                    fields.len()
                )));
            }
            let k: usize = fields[0]
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: bad subset index", lineno + 2)))?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("line {}: bad float {s:?}", lineno + 2)))
            };
            let y = parse(fields[1])?;
            let z: Vec<f64> = fields[2..].iter().map(|s| parse(s)).collect::<Result<_>>()?;
            if k > subsets.len() {
                return Err(Error::invalid(format!(
                    "line {}: subset indices must be contiguous",
                    lineno + 2
                )));
            }
            if k == subsets.len() {
                subsets.push(Subset { features: Vec::new(), labels: Vec::new() });
            }
            subsets[k].features.push(ModelVector::from_values(z));
            subsets[k].labels.push(y);
        }
        Self::from_subsets(subsets)
    }
}
