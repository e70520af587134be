//! Node-indexed scalar fields.

use crate::{Error, Result};

/// Which metric a field's values are expressed against.  Most operators act in
/// the fixed background metric; flow-time quantities (curvature of `e^{2u} g`,
/// gradients measured in the evolving metric) are tagged `Flowing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricTag {
    Background,
    Flowing,
}

/// A scalar function sampled at mesh nodes.  NaN or infinite entries are a
/// hard error at construction: every consumer relies on finiteness.
#[derive(Debug, Clone)]
pub struct Field {
    values: Vec<f64>,
    metric: MetricTag,
}

impl Field {
    pub fn new(values: Vec<f64>, metric: MetricTag) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("field entry {i}"),
            });
        }
        Ok(Field { values, metric })
    }

    pub fn background(values: Vec<f64>) -> Result<Self> {
        Field::new(values, MetricTag::Background)
    }

    pub fn constant(n: usize, c: f64, metric: MetricTag) -> Self {
        Field {
            values: vec![c; n],
            metric,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Field::constant(n, 0.0, MetricTag::Background)
    }

    pub fn metric(&self) -> MetricTag {
        self.metric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
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

    pub fn sup_norm(&self) -> f64 {
        crate::util::sup_norm(&self.values)
    }
}

impl std::ops::Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Field::background(vec![0.0, f64::NAN]).is_err());
        assert!(Field::background(vec![0.0, f64::INFINITY]).is_err());
        assert!(Field::background(vec![0.0, 1.0]).is_ok());
    }
}
