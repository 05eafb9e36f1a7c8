use crate::error::{dim_err, Error, Result};

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(dim_err!("prediction has {} values, target {}", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyOutput("no values to score".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Running sums of squared and absolute errors.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorAccumulator {
    sq: f64,
    abs: f64,
    count: usize,
}

impl ErrorAccumulator {
    pub fn push(&mut self, pred: &[f64], target: &[f64]) -> Result<()> {
        check(pred, target)?;
        for (p, t) in pred.iter().zip(target) {
            self.sq += (p - t).powi(2);
            self.abs += (p - t).abs();
        }
        self.count += pred.len();
        Ok(())
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) {
        self.sq += other.sq;
        self.abs += other.abs;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(mse, mae)`.
    pub fn finish(&self) -> Result<(f64, f64)> {
        if self.count == 0 {
            return Err(Error::EmptyOutput("no values to score".into()));
        }
        let n = self.count as f64;
        Ok((self.sq / n, self.abs / n))
    }
}
