use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::spatial::NnIndex;
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 5.56;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustChamferParams {
    pub alpha: f64,
}

impl Default for RobustChamferParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl RobustChamferParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// Gaussian attenuation `exp(-α d²)` of a squared distance.
    #[inline]
    pub fn weight(&self, d2: f64) -> f64 {
        (-self.alpha * d2).exp()
    }
}

#[inline]
pub(crate) fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Nearest-neighbour pairing and robust weights between a moving set `A`
/// and a fixed set `B`, frozen at the positions where they were computed.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamferMatch {
    /// For each point of `A`: its neighbour in `B` and the weight.
    pub a_to_b: Vec<(u32, f64)>,
    /// For each point of `B`: its neighbour in `A` and the weight.
    pub b_to_a: Vec<(u32, f64)>,
}

impl ChamferMatch {
    /// Pairs every point with its nearest neighbour in the other set.
    /// `b_index` must index `b`.
    pub fn compute(
        a: &[Vec3],
        b: &[Vec3],
        b_index: &NnIndex,
        params: &RobustChamferParams,
    ) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::invalid("robust Chamfer needs two non-empty sets"));
        }
        let a_index = NnIndex::build(a)?;
        let pair = |idx: &NnIndex, from: &[Vec3], to: &[Vec3]| -> Vec<(u32, f64)> {
            from.par_iter()
                .with_min_len(128)
                .map(|p| {
                    let (j, _) = idx.nearest(p);
                    (j as u32, params.weight(dist2(p, &to[j])))
                })
                .collect()
        };
        Ok(Self {
            a_to_b: pair(b_index, a, b),
            b_to_a: pair(&a_index, b, a),
        })
    }

    /// Frozen robust Chamfer value at the given positions.
    pub fn value(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        let forward: f64 = self
            .a_to_b
            .iter()
            .zip(a)
            .map(|(&(j, w), p)| w * dist2(p, &b[j as usize]))
            .sum();
        let backward: f64 = self
            .b_to_a
            .iter()
            .zip(b)
            .map(|(&(i, w), q)| w * dist2(&a[i as usize], q))
            .sum();
        forward / a.len() as f64 + backward / b.len() as f64
    }

    /// Adds `scale * d(value)/dA` to `grad`.
    pub fn accumulate_gradient(&self, a: &[Vec3], b: &[Vec3], scale: f64, grad: &mut [Vec3]) {
        let sa = 2.0 * scale / a.len() as f64;
        let sb = 2.0 * scale / b.len() as f64;
        for (i, &(j, w)) in self.a_to_b.iter().enumerate() {
            grad[i] += (a[i] - b[j as usize]) * (sa * w);
        }
        for (j, &(i, w)) in self.b_to_a.iter().enumerate() {
            grad[i as usize] += (a[i as usize] - b[j]) * (sb * w);
        }
    }
}

/// Robust Chamfer distance: the two directional means of `w_R · d²`.
pub fn robust_chamfer(p: &[Vec3], q: &[Vec3], params: &RobustChamferParams) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("robust Chamfer needs two non-empty sets"));
    }
    let m = ChamferMatch::compute(p, q, &NnIndex::build(q)?, params)?;
    Ok(m.value(p, q))
}
