use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Maps contiguous slices of a flat vector to named parameter tensors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    len: usize,
}

impl ParamLayout {
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, Vec<usize>)>) -> Self {
        let mut offset = 0;
        let entries = parts
            .into_iter()
            .map(|(name, shape)| {
                let e = ParamEntry { name: name.into(), shape, offset };
                offset += e.numel();
                e
            })
            .collect();
        Self { entries, len: offset }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Flat vector of every network weight plus the layout that names its slices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = alloc::vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn with_layout(values: Vec<f64>, layout: Arc<ParamLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    /// Concatenates named tensors in order.
    pub fn flatten<S: AsRef<str>>(params: &[(S, Tensor)]) -> Self {
        let layout = ParamLayout::new(
            params.iter().map(|(n, t)| (n.as_ref().to_string(), t.shape().to_vec())),
        );
        let values = params.iter().flat_map(|(_, t)| t.data().iter().copied()).collect();
        Self { layout: Arc::new(layout), values }
    }

    pub fn unflatten(&self) -> Vec<(String, Tensor)> {
        self.layout
            .entries()
            .iter()
            .map(|e| {
                let t = Tensor::new(e.shape.clone(), self.values[e.range()].to_vec())
                    .expect("layout entries cover the vector");
                (e.name.clone(), t)
            })
            .collect()
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|e| &self.values[e.range()])
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.values.clone())
    }

    /// Same layout, new values taken from a flat tensor.
    pub fn replaced(&self, t: &Tensor) -> Result<Self> {
        Self::with_layout(t.data().to_vec(), self.layout.clone())
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{} vs {} parameters",
                self.len(),
                other.len()
            )))
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { layout: self.layout.clone(), values })
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { layout: self.layout.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.squared_norm())
    }

    /// Root-mean-square of the entries.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            libm::sqrt(self.squared_norm() / self.values.len() as f64)
        }
    }

    pub fn squared_distance(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.squared_distance(other).map(libm::sqrt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_mats() -> Vec<(&'static str, Tensor)> {
        vec![
            ("a", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
            ("b", Tensor::matrix(2, 2, vec![-1.0, 0.5, 0.25, 8.0]).unwrap()),
        ]
    }

    #[test]
    fn flatten_two_matrices_gives_eight() {
        let p = ParamVector::flatten(&two_mats());
        assert_eq!(p.len(), 8);
        assert_eq!(p.slice("b").unwrap(), &[-1.0, 0.5, 0.25, 8.0]);
    }

    #[test]
    fn unflatten_round_trip_is_exact() {
        let p = ParamVector::flatten(&two_mats());
        let back = p.unflatten();
        let names: Vec<_> = back.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(ParamVector::flatten(&back), p);
    }

    #[test]
    fn squared_distance_matches_per_parameter_sum() {
        let a = ParamVector::flatten(&two_mats());
        let b = a.replaced(&Tensor::vector((0..8).map(|i| i as f64 * 0.3).collect())).unwrap();
        let mut brute = 0.0;
        for ((_, ta), (_, tb)) in a.unflatten().iter().zip(b.unflatten().iter()) {
            for (x, y) in ta.data().iter().zip(tb.data()) {
                brute += (x - y) * (x - y);
            }
        }
        assert_eq!(a.squared_distance(&b).unwrap(), brute);
    }

    #[test]
    fn mismatched_layouts_do_not_add() {
        let a = ParamVector::flatten(&two_mats());
        let b = ParamVector::flatten(&[("a", Tensor::vector(vec![0.0; 8]))]);
        assert!(matches!(a.checked_add(&b), Err(Error::LayoutMismatch(_))));
        assert!(ParamVector::with_layout(vec![0.0; 3], a.layout().clone()).is_err());
    }
}
