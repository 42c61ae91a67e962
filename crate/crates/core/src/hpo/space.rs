use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Real,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub values: Vec<f64>,
}

impl Dimension {
    pub fn real(name: &str, values: Vec<f64>) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::Real,
            values,
        }
    }

    pub fn integer(name: &str, values: impl IntoIterator<Item = i64>) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::Integer,
            values: values.into_iter().map(|v| v as f64).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation(format!("dimension {} is empty", self.name)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("dimension {} has a non-finite value", self.name)));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "dimension {} must be sorted and duplicate-free",
                self.name
            )));
        }
        if self.kind == DimensionKind::Integer && self.values.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::Validation(format!(
                "integer dimension {} has a fractional value",
                self.name
            )));
        }
        Ok(())
    }
}

/// Cartesian product of discrete value lists, enumerated lexicographically
/// (first dimension slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct HyperparameterSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for HyperparameterSpace {
    type Error = Error;
    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        HyperparameterSpace::new(dims)
    }
}

impl From<HyperparameterSpace> for Vec<Dimension> {
    fn from(s: HyperparameterSpace) -> Self {
        s.dims
    }
}

/// `num / den` for each numerator; integer division keeps grid values
/// bit-identical across levels that share them.
fn fractions(nums: impl IntoIterator<Item = i64>, den: f64) -> Vec<f64> {
    nums.into_iter().map(|i| i as f64 / den).collect()
}

fn tenths_with_edges(include_zero: bool) -> Vec<f64> {
    let mut v = Vec::new();
    if include_zero {
        v.push(0.0);
    }
    v.push(0.01);
    v.extend(fractions(1..=9, 10.0));
    v.push(0.99);
    v.push(1.0);
    v
}

impl HyperparameterSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Validation("space has no dimensions".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            d.validate()?;
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::Validation(format!("duplicate dimension {}", d.name)));
            }
        }
        Ok(HyperparameterSpace { dims })
    }

    /// Contrastive detector grid: 13 trade-off weights by `K` in 2..=5.
    pub fn contrastive_default() -> Self {
        Self::new(vec![
            Dimension::real("alpha", tenths_with_edges(true)),
            Dimension::integer("K", 2..=5),
        ])
        .expect("static grid")
    }

    /// Generative detector grid: 12 trade-off weights.
    pub fn generative_default() -> Self {
        Self::new(vec![Dimension::real("alpha", tenths_with_edges(false))]).expect("static grid")
    }

    /// Nested contrastive grids of increasing resolution, levels 1 to 4.
    /// Level 2 equals [`Self::contrastive_default`].
    pub fn contrastive_granularity(level: u8) -> Result<Self> {
        let (alpha, k) = match level {
            1 => (fractions(0..=5, 5.0), Dimension::integer("K", [2, 4])),
            2 => return Ok(Self::contrastive_default()),
            3 => {
                let mut a = fractions(0..=20, 20.0);
                a.insert(1, 0.01);
                a.insert(a.len() - 1, 0.99);
                (a, Dimension::integer("K", 2..=5))
            }
            4 => {
                let mut a = fractions(0..=40, 40.0);
                a.insert(1, 0.01);
                a.insert(a.len() - 1, 0.99);
                (a, Dimension::integer("K", 2..=7))
            }
            other => {
                return Err(Error::Validation(format!("granularity level {other} not in 1..=4")))
            }
        };
        Self::new(vec![Dimension::real("alpha", alpha), k])
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dims
    }

    /// `M`, the number of configurations.
    pub fn size(&self) -> usize {
        self.dims.iter().map(|d| d.values.len()).product()
    }

    pub fn config_at(&self, mut index: usize) -> Configuration {
        let mut values = vec![0.0; self.dims.len()];
        for (slot, d) in values.iter_mut().zip(&self.dims).rev() {
            let len = d.values.len();
            *slot = d.values[index % len];
            index /= len;
        }
        Configuration::new(
            self.dims
                .iter()
                .zip(values)
                .map(|(d, v)| (d.name.clone(), v))
                .collect(),
        )
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        if config.len() != self.dims.len() {
            return None;
        }
        let mut index = 0;
        for (d, (name, value)) in self.dims.iter().zip(config.entries()) {
            if &d.name != name {
                return None;
            }
            let pos = d.values.iter().position(|v| v == value)?;
            index = index * d.values.len() + pos;
        }
        Some(index)
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.index_of(config).is_some()
    }

    pub fn configurations(&self) -> Vec<Configuration> {
        (0..self.size()).map(|i| self.config_at(i)).collect()
    }

    /// Coordinates min-max scaled to `[0, 1]` per dimension; a single-valued
    /// dimension maps to 0.
    pub fn scaled(&self, config: &Configuration) -> Vec<f64> {
        self.dims
            .iter()
            .zip(config.values())
            .map(|(d, v)| {
                let lo = d.values[0];
                let hi = *d.values.last().expect("non-empty");
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Same dimensions, each value list contained in `other`'s.
    pub fn is_subset_of(&self, other: &HyperparameterSpace) -> bool {
        self.dims.len() == other.dims.len()
            && self.dims.iter().zip(&other.dims).all(|(a, b)| {
                a.name == b.name && a.values.iter().all(|v| b.values.contains(v))
            })
    }
}
