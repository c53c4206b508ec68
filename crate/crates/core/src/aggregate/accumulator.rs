use super::AggregateError;

/// Mergeable running mean over `dim`-component vectors.
///
/// Sums are kept in `f64` with a Neumaier compensation term per component,
/// so merging shards and re-ordering usages only perturb the mean at the
/// level of a few ulps of the result.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    sum: Vec<f64>,
    compensation: Vec<f64>,
    count: u64,
}

#[inline]
fn neumaier_add(sum: &mut f64, compensation: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *compensation += (*sum - t) + x;
    } else {
        *compensation += (x - t) + *sum;
    }
    *sum = t;
}

impl MeanAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { sum: vec![0.0; dim], compensation: vec![0.0; dim], count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Compensated componentwise sum of everything accumulated so far.
    pub fn sum(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.compensation).map(|(s, c)| s + c).collect()
    }

    fn check_dim(&self, found: usize) -> Result<(), AggregateError> {
        if found != self.dim() {
            return Err(AggregateError::DimMismatch { expected: self.dim(), found });
        }
        Ok(())
    }

    pub fn accumulate(&mut self, v: &[f32]) -> Result<(), AggregateError> {
        self.check_dim(v.len())?;
        for ((s, c), &x) in self.sum.iter_mut().zip(&mut self.compensation).zip(v) {
            neumaier_add(s, c, x as f64);
        }
        self.count += 1;
        Ok(())
    }

    pub fn accumulate_f64(&mut self, v: &[f64]) -> Result<(), AggregateError> {
        self.check_dim(v.len())?;
        for ((s, c), &x) in self.sum.iter_mut().zip(&mut self.compensation).zip(v) {
            neumaier_add(s, c, x);
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &MeanAccumulator) -> Result<(), AggregateError> {
        self.check_dim(other.dim())?;
        for i in 0..self.sum.len() {
            neumaier_add(&mut self.sum[i], &mut self.compensation[i], other.sum[i]);
            self.compensation[i] += other.compensation[i];
        }
        self.count += other.count;
        Ok(())
    }

    /// Full-precision mean.
    pub fn mean(&self) -> Result<Vec<f64>, AggregateError> {
        if self.count == 0 {
            return Err(AggregateError::NoUsages);
        }
        let n = self.count as f64;
        Ok(self.sum().into_iter().map(|s| s / n).collect())
    }

    /// Mean narrowed to `f32` storage precision.
    pub fn finalize(&self) -> Result<Vec<f32>, AggregateError> {
        Ok(self.mean()?.into_iter().map(|x| x as f32).collect())
    }
}
