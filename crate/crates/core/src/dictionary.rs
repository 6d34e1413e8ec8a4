//! Lifting dictionaries: maps a normalized state `x` to `ψ(x)`.
//!
//! Every family places the state itself first, so the lifted vector is
//! `[x, φ_1(x), ..., φ_K(x)]` and the state can be read back with a selector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededStream;

/// Bounds used for center sampling when none are given.
pub const DEFAULT_CENTER_BOUNDS: (f64, f64) = (-1.8, 1.8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryFamily {
    IdentityOnly,
    Polyharmonic,
    Gaussian,
    Multiquadric,
    InverseQuadratic,
    InverseMultiquadric,
    Polynomial,
}

impl DictionaryFamily {
    pub fn is_radial(self) -> bool {
        !matches!(self, Self::IdentityOnly | Self::Polynomial)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::IdentityOnly => "identity_only",
            Self::Polyharmonic => "polyharmonic",
            Self::Gaussian => "gaussian",
            Self::Multiquadric => "multiquadric",
            Self::InverseQuadratic => "inverse_quadratic",
            Self::InverseMultiquadric => "inverse_multiquadric",
            Self::Polynomial => "polynomial",
        }
    }

    /// Radial profile `φ(r)` with shape parameter `eps`.
    pub fn radial(self, r: f64, eps: f64) -> f64 {
        let er2 = (eps * r) * (eps * r);
        match self {
            // r log r -> 0 as r -> 0
            Self::Polyharmonic => {
                if r == 0.0 {
                    0.0
                } else {
                    r * r.ln()
                }
            }
            Self::Gaussian => (-er2).exp(),
            Self::Multiquadric => (1.0 + er2).sqrt(),
            Self::InverseQuadratic => 1.0 / (1.0 + er2),
            Self::InverseMultiquadric => 1.0 / (1.0 + er2).sqrt(),
            Self::IdentityOnly | Self::Polynomial => {
                unreachable!("{} has no radial profile", self.name())
            }
        }
    }
}

impl std::str::FromStr for DictionaryFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity_only" | "identity" => Self::IdentityOnly,
            "polyharmonic" => Self::Polyharmonic,
            "gaussian" => Self::Gaussian,
            "multiquadric" => Self::Multiquadric,
            "inverse_quadratic" => Self::InverseQuadratic,
            "inverse_multiquadric" => Self::InverseMultiquadric,
            "polynomial" => Self::Polynomial,
            other => return Err(Error::InvalidInput(format!("unknown dictionary family `{other}`"))),
        })
    }
}

/// A complete lifting specification. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionarySpec {
    family: DictionaryFamily,
    state_dim: usize,
    centers: Vec<Vec<f64>>,
    shape_parameter: f64,
    polynomial_degree: usize,
    center_bounds: (f64, f64),
    seed: u64,
    /// Exponent vectors of the extra monomials (polynomial family only).
    monomials: Vec<Vec<u32>>,
}

/// Draws `n_centers` points i.i.d. uniform on `[low, high]^state_dim`.
///
/// Components are drawn center by center from one ChaCha8 stream, so a
/// smaller sample with the same seed is a prefix of a larger one.
pub fn sample_centers(
    n_centers: usize,
    state_dim: usize,
    low: f64,
    high: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidRange { low, high });
    }
    if state_dim == 0 {
        return Err(Error::InvalidInput("state dimension must be at least 1".into()));
    }
    let mut stream = SeededStream::new(seed);
    Ok((0..n_centers)
        .map(|_| {
            (0..state_dim)
                .map(|_| stream.uniform(low, high).clamp(low, high))
                .collect()
        })
        .collect())
}

/// Exponent vectors with total degree in `2..=degree`, graded lexicographic.
fn monomial_exponents(state_dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(dim, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 2..=degree as u32 {
        rec(state_dim, total, &mut Vec::with_capacity(state_dim), &mut out);
    }
    out
}

impl DictionarySpec {
    /// No lifting: `ψ(x) = x`.
    pub fn identity(state_dim: usize) -> Self {
        DictionarySpec {
            family: DictionaryFamily::IdentityOnly,
            state_dim,
            centers: Vec::new(),
            shape_parameter: 1.0,
            polynomial_degree: 0,
            center_bounds: DEFAULT_CENTER_BOUNDS,
            seed: 0,
            monomials: Vec::new(),
        }
    }

    /// Radial family with `n_centers` centers sampled uniformly on `bounds`.
    ///
    /// `n_centers = 0` yields a dictionary that lifts to the state alone.
    pub fn radial(
        family: DictionaryFamily,
        state_dim: usize,
        n_centers: usize,
        bounds: (f64, f64),
        seed: u64,
        shape_parameter: f64,
    ) -> Result<Self> {
        let centers = sample_centers(n_centers, state_dim, bounds.0, bounds.1, seed)?;
        let mut spec = Self::with_centers(family, state_dim, centers, shape_parameter)?;
        spec.center_bounds = bounds;
        spec.seed = seed;
        Ok(spec)
    }

    /// Radial family with explicitly supplied centers.
    pub fn with_centers(
        family: DictionaryFamily,
        state_dim: usize,
        centers: Vec<Vec<f64>>,
        shape_parameter: f64,
    ) -> Result<Self> {
        if !family.is_radial() {
            return Err(Error::InvalidInput(format!(
                "{} is not a radial family",
                family.name()
            )));
        }
        if state_dim == 0 {
            return Err(Error::InvalidInput("state dimension must be at least 1".into()));
        }
        if !(shape_parameter > 0.0) || !shape_parameter.is_finite() {
            return Err(Error::InvalidInput(format!(
                "shape parameter must be positive, got {shape_parameter}"
            )));
        }
        for (i, c) in centers.iter().enumerate() {
            if c.len() != state_dim {
                return Err(Error::Shape(format!(
                    "center {i} has dimension {} but the state has {state_dim}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("center {i} is not finite")));
            }
        }
        // Bounds default to the hull of the supplied centers.
        let bounds = if centers.is_empty() {
            DEFAULT_CENTER_BOUNDS
        } else {
            centers.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
        };
        Ok(DictionarySpec {
            family,
            state_dim,
            centers,
            shape_parameter,
            polynomial_degree: 0,
            center_bounds: bounds,
            seed: 0,
            monomials: Vec::new(),
        })
    }

    /// Monomials of total degree `2..=degree` appended after the state.
    pub fn polynomial(state_dim: usize, degree: usize) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidInput("state dimension must be at least 1".into()));
        }
        Ok(DictionarySpec {
            family: DictionaryFamily::Polynomial,
            state_dim,
            centers: Vec::new(),
            shape_parameter: 1.0,
            polynomial_degree: degree,
            center_bounds: DEFAULT_CENTER_BOUNDS,
            seed: 0,
            monomials: monomial_exponents(state_dim, degree),
        })
    }

    /// Overrides recorded bounds and seed (used when reloading a model).
    pub(crate) fn with_provenance(mut self, bounds: (f64, f64), seed: u64) -> Self {
        self.center_bounds = bounds;
        self.seed = seed;
        self
    }

    pub fn family(&self) -> DictionaryFamily {
        self.family
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn shape_parameter(&self) -> f64 {
        self.shape_parameter
    }

    pub fn polynomial_degree(&self) -> usize {
        self.polynomial_degree
    }

    pub fn center_bounds(&self) -> (f64, f64) {
        self.center_bounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of lifting functions beyond the state itself.
    pub fn num_functions(&self) -> usize {
        match self.family {
            DictionaryFamily::IdentityOnly => 0,
            DictionaryFamily::Polynomial => self.monomials.len(),
            _ => self.centers.len(),
        }
    }

    /// Lifted dimension `N_l = n + num_functions`.
    pub fn lifted_dim(&self) -> usize {
        self.state_dim + self.num_functions()
    }

    /// Lifts one state vector.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Shape(format!(
                "state has dimension {} but the dictionary expects {}",
                x.len(),
                self.state_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("state to lift is not finite".into()));
        }
        let mut z = Vec::with_capacity(self.lifted_dim());
        self.lift_into(x, &mut z);
        Ok(z)
    }

    fn lift_into(&self, x: &[f64], z: &mut Vec<f64>) {
        z.extend_from_slice(x);
        match self.family {
            DictionaryFamily::IdentityOnly => {}
            DictionaryFamily::Polynomial => {
                z.extend(self.monomials.iter().map(|exps| {
                    x.iter()
                        .zip(exps)
                        .map(|(&v, &e)| v.powi(e as i32))
                        .product::<f64>()
                }));
            }
            family => {
                let eps = self.shape_parameter;
                z.extend(self.centers.iter().map(|c| {
                    let r = x
                        .iter()
                        .zip(c)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    family.radial(r, eps)
                }));
            }
        }
    }

    /// Lifts every column of an `n x N` state matrix into an `N_l x N` matrix.
    pub fn lift_batch(&self, states: &Matrix) -> Result<Matrix> {
        if states.nrows() != self.state_dim {
            return Err(Error::Shape(format!(
                "state matrix has {} rows but the dictionary expects {}",
                states.nrows(),
                self.state_dim
            )));
        }
        let lifted_dim = self.lifted_dim();
        let mut out = Matrix::zeros(lifted_dim, states.ncols());
        let mut buf = Vec::with_capacity(lifted_dim);
        for (j, col) in states.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("state column {j} is not finite")));
            }
            buf.clear();
            self.lift_into(col.as_slice(), &mut buf);
            out.column_mut(j).copy_from_slice(&buf);
        }
        Ok(out)
    }
}
