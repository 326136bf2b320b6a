//! Finite atom alphabets in R^d.
//!
//! An [`Alphabet`] is an ordered list of nonzero atoms. Models are built as
//! nonnegative combinations of atoms; the origin is never stored as an atom
//! because every slice adjoins it implicitly.

mod builders;
mod io;
pub mod toys;

pub use builders::{
    build_canonical, build_gaussian_waves, build_group_sparsity, build_group_sparsity_with,
    build_sparse_pca, build_spiral, build_spiral_with, spiral_point, symmetrize, CenterGrid,
    GaussianWaves, GROUP_SPARSITY_RESOLUTION,
};
pub(crate) use io::write_vector;
pub use io::{load_alphabet, parse_alphabet, save_alphabet, write_alphabet_json};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gauge::Decomposition;

/// Tolerance for the unit-norm flag.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Euclidean tolerance under which two atoms are considered equal.
pub const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AlphabetError {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("invalid sparsity k={k} for dimension d={d}: need 1 <= k <= d")]
    InvalidSparsity { d: usize, k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("alphabet must contain at least one atom")]
    Empty,
    #[error("atom {index} has length {len}, expected {dim}")]
    DimensionMismatch { index: usize, len: usize, dim: usize },
    #[error("atom {index} is the zero vector")]
    ZeroAtom { index: usize },
    #[error("atom {index} has a non-finite entry")]
    NonFinite { index: usize },
    #[error("atom {index} has norm {norm}, but the unit_norm flag is set")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("atom {index} has no negation in the alphabet, but the symmetric_closure flag is set")]
    NotSymmetric { index: usize },
    #[error("{labels} labels given for {atoms} atoms")]
    LabelCount { labels: usize, atoms: usize },
    #[error("could only draw {found} distinct atoms out of {wanted}")]
    TooFewDistinct { found: usize, wanted: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetFlags {
    #[serde(default)]
    pub contains_origin_closure: bool,
    #[serde(default)]
    pub symmetric_closure: bool,
    #[serde(default)]
    pub unit_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    flags: AlphabetFlags,
}

impl Alphabet {
    /// Validates every invariant, including the declared flags.
    pub fn new(
        dim: usize,
        atoms: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
        flags: AlphabetFlags,
    ) -> Result<Self, AlphabetError> {
        if dim == 0 {
            return Err(AlphabetError::InvalidDimension(dim));
        }
        if atoms.is_empty() {
            return Err(AlphabetError::Empty);
        }
        for (index, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(AlphabetError::DimensionMismatch { index, len: atom.len(), dim });
            }
            if atom.iter().any(|v| !v.is_finite()) {
                return Err(AlphabetError::NonFinite { index });
            }
            if atom.iter().all(|&v| v == 0.0) {
                return Err(AlphabetError::ZeroAtom { index });
            }
        }
        if let Some(l) = &labels {
            if l.len() != atoms.len() {
                return Err(AlphabetError::LabelCount { labels: l.len(), atoms: atoms.len() });
            }
        }
        let a = Alphabet { dim, atoms, labels, flags };
        a.check_flags()?;
        Ok(a)
    }

    /// Builds an alphabet with no flags set.
    pub fn from_atoms(dim: usize, atoms: Vec<Vec<f64>>) -> Result<Self, AlphabetError> {
        Self::new(dim, atoms, None, AlphabetFlags::default())
    }

    fn check_flags(&self) -> Result<(), AlphabetError> {
        if self.flags.unit_norm {
            for (index, atom) in self.atoms.iter().enumerate() {
                let norm = norm(atom);
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(AlphabetError::NotUnitNorm { index, norm });
                }
            }
        }
        if self.flags.symmetric_closure {
            for (index, atom) in self.atoms.iter().enumerate() {
                let neg: Vec<f64> = atom.iter().map(|v| -v).collect();
                if !self.atoms.iter().any(|b| distance(b, &neg) <= DEDUP_TOL) {
                    return Err(AlphabetError::NotSymmetric { index });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i]
    }

    pub fn atom_vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.atoms[i])
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn flags(&self) -> AlphabetFlags {
        self.flags
    }

    /// The d x |A| matrix whose columns are the atoms.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.atoms.len(), |r, c| self.atoms[c][r])
    }

    /// The d x |S| matrix of the atoms indexed by `subset`.
    pub fn submatrix(&self, subset: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, subset.len(), |r, c| self.atoms[subset[c]][r])
    }

    /// Whether every atom has its negation in the alphabet (numeric check).
    pub fn is_symmetric(&self) -> bool {
        self.atoms.iter().all(|atom| {
            let neg: Vec<f64> = atom.iter().map(|v| -v).collect();
            self.atoms.iter().any(|b| distance(b, &neg) <= DEDUP_TOL)
        })
    }

    /// Index of the atom equal to `v` within `tol`, if any.
    pub fn find_atom(&self, v: &[f64], tol: f64) -> Option<usize> {
        self.atoms.iter().position(|a| distance(a, v) <= tol)
    }
}

/// A model vector, optionally with the decomposition it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vector: Vec<f64>,
    pub true_decomposition: Option<Decomposition>,
}

impl Model {
    pub fn new(vector: Vec<f64>) -> Self {
        Model { vector, true_decomposition: None }
    }

    pub fn with_decomposition(vector: Vec<f64>, decomposition: Decomposition) -> Self {
        Model { vector, true_decomposition: Some(decomposition) }
    }

    /// Builds the model sum of c_i A_i from a decomposition.
    pub fn from_decomposition(alphabet: &Alphabet, decomposition: Decomposition) -> Self {
        let vector = decomposition.reconstruct(alphabet);
        Model { vector, true_decomposition: Some(decomposition) }
    }

    pub fn check_dim(&self, alphabet: &Alphabet) -> Result<(), AlphabetError> {
        if self.vector.len() != alphabet.dim() {
            return Err(AlphabetError::DimensionMismatch {
                index: 0,
                len: self.vector.len(),
                dim: alphabet.dim(),
            });
        }
        Ok(())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
