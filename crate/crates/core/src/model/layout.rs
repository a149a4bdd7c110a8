//! Flat parameter vectors with a named block layout and the bijections
//! between the unconstrained sampling scale and the constrained scale.

use std::ops::Range;

use crate::error::{Error, Result};

/// Transform from the unconstrained coordinate to the model scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `v = exp(u)`.
    Log,
    /// `v = 1 / (1 + exp(−u))`.
    Logit,
}

/// Magnitude beyond which exp/logistic transforms are treated as saturated.
pub const SATURATION_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// Name on the constrained scale, e.g. `sigma2_y`.
    pub name: String,
    pub shape: Vec<usize>,
    pub transform: Transform,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Name of the unconstrained coordinate block, e.g. `log_sigma2_y`.
    pub fn unconstrained_name(&self) -> String {
        match self.transform {
            Transform::Identity => self.name.clone(),
            Transform::Log => format!("log_{}", self.name),
            Transform::Logit => format!("logit_{}", self.name),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    dim: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: &[usize], transform: Transform) -> Range<usize> {
        let block = Block {
            name: name.to_string(),
            shape: shape.to_vec(),
            transform,
            offset: self.dim,
        };
        self.dim += block.len();
        let r = block.range();
        self.blocks.push(block);
        r
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.block(name).map(Block::range)
    }

    /// Block containing flat coordinate `idx`.
    pub fn block_of(&self, idx: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range().contains(&idx))
    }

    /// Per-coordinate names on the constrained scale, 1-based indices:
    /// `mu`, `beta[1,2]`, `sigma2[3]`.
    pub fn names(&self) -> Vec<String> {
        self.coordinate_names(false)
    }

    pub fn unconstrained_names(&self) -> Vec<String> {
        self.coordinate_names(true)
    }

    fn coordinate_names(&self, unconstrained: bool) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            let base = if unconstrained {
                b.unconstrained_name()
            } else {
                b.name.clone()
            };
            if b.shape.is_empty() {
                out.push(base);
                continue;
            }
            let mut idx = vec![0usize; b.shape.len()];
            for _ in 0..b.len() {
                let label: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
                out.push(format!("{base}[{}]", label.join(",")));
                for d in (0..idx.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < b.shape[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        }
        out
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Layout {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn to_constrained(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = u.to_vec();
        for b in &self.blocks {
            if b.transform == Transform::Identity {
                continue;
            }
            for i in b.range() {
                if !u[i].is_finite() || u[i].abs() > SATURATION_LIMIT {
                    return Err(Error::Saturation {
                        block: b.unconstrained_name(),
                    });
                }
                out[i] = match b.transform {
                    Transform::Log => u[i].exp(),
                    Transform::Logit => logistic(u[i]),
                    Transform::Identity => unreachable!(),
                };
            }
        }
        Ok(out)
    }

    pub fn to_unconstrained(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let mut out = v.to_vec();
        for b in &self.blocks {
            for i in b.range() {
                out[i] = match b.transform {
                    Transform::Identity => v[i],
                    Transform::Log => {
                        if !(v[i] > 0.0) {
                            return Err(Error::Domain(format!("{} must be positive", b.name)));
                        }
                        v[i].ln()
                    }
                    Transform::Logit => {
                        if !(v[i] > 0.0 && v[i] < 1.0) {
                            return Err(Error::Domain(format!("{} must lie in (0, 1)", b.name)));
                        }
                        v[i].ln() - (-v[i]).ln_1p()
                    }
                };
            }
        }
        Ok(out)
    }
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> ParamLayout {
        let mut l = ParamLayout::new();
        l.push("mu", &[], Transform::Identity);
        l.push("beta", &[2, 3], Transform::Identity);
        l.push("sigma2", &[2], Transform::Log);
        l.push("phi", &[], Transform::Logit);
        l
    }

    #[test]
    fn names_follow_row_major_blocks() {
        let l = layout();
        assert_eq!(l.dim(), 10);
        let names = l.names();
        assert_eq!(names[0], "mu");
        assert_eq!(names[1], "beta[1,1]");
        assert_eq!(names[3], "beta[1,3]");
        assert_eq!(names[4], "beta[2,1]");
        assert_eq!(names[7], "sigma2[1]");
        assert_eq!(names[9], "phi");
        assert_eq!(l.unconstrained_names()[9], "logit_phi");
        assert_eq!(l.block_of(8).unwrap().name, "sigma2");
    }

    #[test]
    fn origin_maps_to_unit_scale() {
        let l = layout();
        let c = l.to_constrained(&vec![0.0; l.dim()]).unwrap();
        assert_eq!(c[9], 0.5);
        assert_eq!(&c[7..9], &[1.0, 1.0]);
        assert!(c[..7].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturation_and_length_errors() {
        let l = layout();
        let mut u = vec![0.0; l.dim()];
        u[9] = 701.0;
        assert_eq!(
            l.to_constrained(&u).unwrap_err(),
            Error::Saturation {
                block: "logit_phi".into()
            }
        );
        assert_eq!(
            l.to_constrained(&[0.0; 3]).unwrap_err(),
            Error::Layout {
                expected: 10,
                got: 3
            }
        );
    }

    proptest! {
        #[test]
        fn round_trip(u in proptest::collection::vec(-5.0f64..5.0, 10)) {
            let l = layout();
            let back = l.to_unconstrained(&l.to_constrained(&u).unwrap()).unwrap();
            for (a, b) in u.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
