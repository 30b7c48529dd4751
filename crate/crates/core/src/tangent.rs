//! Forward-mode derivative propagation for sampled signals.

/// A signal and its derivatives with respect to a small set of parameters.
/// `tangents[j][n]` is `d value[n] / d theta_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
}

impl Jet {
    pub fn new(value: Vec<f64>, tangents: Vec<Vec<f64>>) -> Self {
        debug_assert!(tangents.iter().all(|t| t.len() == value.len()));
        Self { value, tangents }
    }

    /// A signal that does not depend on any parameter.
    pub fn constant(value: Vec<f64>, dims: usize) -> Self {
        let n = value.len();
        Self {
            value,
            tangents: vec![vec![0.0; n]; dims],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.tangents.len()
    }

    /// Pushes value and tangents through a linear map.
    pub fn map_linear(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Jet {
        Jet {
            value: f(&self.value),
            tangents: self.tangents.iter().map(|t| f(t)).collect(),
        }
    }
}
