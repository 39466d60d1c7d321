use super::Transform6;
use crate::geometry::Vec3;
use crate::{Error, Result};

pub(crate) const INACTIVE: u32 = u32::MAX;

/// Chebyshev radius, in lattice steps, kept around occupied vertices.
pub const PRUNE_RADIUS: u32 = 3;

/// One resolution level: a lattice of `2l - 1` vertices per axis spanning
/// `[-1, 1]^3`, with parameters stored only at active vertices.
///
/// Inactive vertices behave as if they held [`Transform6::IDENTITY`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridLevel {
    level: u32,
    resolution: u32,
    slot_of: Vec<u32>,
    coords: Vec<[u32; 3]>,
    pub params: Vec<Transform6>,
}

/// Trilinear stencil of one query point at one level.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub count: usize,
    pub slots: [u32; 8],
    pub weights: [f64; 8],
    /// d(weight)/dx in canonical coordinates.
    pub grads: [[f64; 3]; 8],
}

impl GridLevel {
    pub fn resolution_for(level: u32) -> u32 {
        2 * level - 1
    }

    /// Level with every vertex active.
    pub fn dense(level: u32) -> Self {
        let r = Self::resolution_for(level) as usize;
        Self::with_mask(level, &vec![true; r * r * r])
    }

    /// Level whose active set is the listed lattice coordinates.
    pub fn from_coords(level: u32, coords: &[[u32; 3]]) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("grid levels start at 1"));
        }
        let r = Self::resolution_for(level);
        let mut mask = vec![false; (r * r * r) as usize];
        for c in coords {
            if c.iter().any(|&v| v >= r) {
                return Err(Error::invalid(format!(
                    "coordinate {c:?} outside a {r}^3 lattice"
                )));
            }
            mask[linear(r, *c)] = true;
        }
        Ok(Self::with_mask(level, &mask))
    }

    /// Keeps vertices whose nearest-vertex cell holds a point, dilated by
    /// [`PRUNE_RADIUS`] in the Chebyshev metric.
    pub fn pruned<'a>(level: u32, points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let r = Self::resolution_for(level);
        let n = r as usize;
        let mut occupied = vec![false; n * n * n];
        for p in points {
            occupied[linear(r, nearest_vertex(r, p))] = true;
        }
        // a Chebyshev ball is a box, so dilate one axis at a time
        let rad = PRUNE_RADIUS as usize;
        let mut mask = occupied;
        for axis in 0..3 {
            let src = mask.clone();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let c = [i, j, k];
                        let lo = c[axis].saturating_sub(rad);
                        let hi = (c[axis] + rad).min(n - 1);
                        let hit = (lo..=hi).any(|v| {
                            let mut d = c;
                            d[axis] = v;
                            src[(d[0] * n + d[1]) * n + d[2]]
                        });
                        mask[(i * n + j) * n + k] = hit;
                    }
                }
            }
        }
        Self::with_mask(level, &mask)
    }

    fn with_mask(level: u32, mask: &[bool]) -> Self {
        let r = Self::resolution_for(level);
        let n = r as usize;
        let mut slot_of = vec![INACTIVE; mask.len()];
        let mut coords = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lin = (i * n + j) * n + k;
                    if mask[lin] {
                        slot_of[lin] = coords.len() as u32;
                        coords.push([i as u32, j as u32, k as u32]);
                    }
                }
            }
        }
        let params = vec![Transform6::IDENTITY; coords.len()];
        Self {
            level,
            resolution: r,
            slot_of,
            coords,
            params,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn active_count(&self) -> usize {
        self.coords.len()
    }

    pub fn dense_count(&self) -> usize {
        (self.resolution as usize).pow(3)
    }

    /// Lattice coordinate of every active slot, in slot order.
    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    pub fn slot(&self, c: [u32; 3]) -> Option<usize> {
        if c.iter().any(|&v| v >= self.resolution) {
            return None;
        }
        match self.slot_of[linear(self.resolution, c)] {
            INACTIVE => None,
            s => Some(s as usize),
        }
    }

    /// Canonical-domain position of a lattice vertex.
    pub fn vertex_position(&self, c: [u32; 3]) -> Vec3 {
        if self.resolution == 1 {
            return Vec3::zeros();
        }
        let h = 2.0 / (self.resolution - 1) as f64;
        Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * h - Vec3::repeat(1.0)
    }

    /// Axis-adjacent pairs of active slots (6-connectivity), `a < b`.
    pub fn adjacency(&self) -> Vec<(u32, u32)> {
        let mut edges = Vec::new();
        for (s, c) in self.coords.iter().enumerate() {
            for axis in 0..3 {
                let mut d = *c;
                d[axis] += 1;
                if let Some(t) = self.slot(d) {
                    edges.push((s as u32, t as u32));
                }
            }
        }
        edges
    }

    /// Trilinear stencil at `x`; coordinates outside `[-1, 1]` are clamped
    /// and carry no derivative along the clamped axis.
    #[inline]
    pub fn stencil(&self, x: &Vec3) -> Stencil {
        let mut st = Stencil {
            count: 0,
            slots: [INACTIVE; 8],
            weights: [0.0; 8],
            grads: [[0.0; 3]; 8],
        };
        let r = self.resolution;
        if r == 1 {
            st.count = 1;
            st.slots[0] = self.slot_of[0];
            st.weights[0] = 1.0;
            return st;
        }
        let cells = (r - 1) as f64;
        let du_dx = cells / 2.0;
        let mut base = [0u32; 3];
        let mut frac = [0.0; 3];
        let mut live = [0.0; 3];
        for a in 0..3 {
            let xc = x[a];
            let clamped = xc.clamp(-1.0, 1.0);
            live[a] = if xc == clamped { du_dx } else { 0.0 };
            let u = (clamped + 1.0) * du_dx;
            let i0 = (u.floor() as u32).min(r - 2);
            base[a] = i0;
            frac[a] = u - i0 as f64;
        }
        let n = r as usize;
        let lin0 = (base[0] as usize * n + base[1] as usize) * n + base[2] as usize;
        let mut k = 0;
        for bx in 0..2 {
            let (wx, dwx) = if bx == 1 { (frac[0], 1.0) } else { (1.0 - frac[0], -1.0) };
            for by in 0..2 {
                let (wy, dwy) = if by == 1 { (frac[1], 1.0) } else { (1.0 - frac[1], -1.0) };
                for bz in 0..2 {
                    let (wz, dwz) = if bz == 1 { (frac[2], 1.0) } else { (1.0 - frac[2], -1.0) };
                    st.slots[k] = self.slot_of[lin0 + (bx * n + by) * n + bz];
                    st.weights[k] = wx * wy * wz;
                    st.grads[k] = [
                        dwx * wy * wz * live[0],
                        wx * dwy * wz * live[1],
                        wx * wy * dwz * live[2],
                    ];
                    k += 1;
                }
            }
        }
        st.count = 8;
        st
    }

    /// `sum_c w_c T_c` over the stencil, inactive corners contributing zero.
    #[inline]
    pub fn interpolate(&self, x: &Vec3) -> Transform6 {
        let st = self.stencil(x);
        let mut acc = Transform6::IDENTITY;
        for k in 0..st.count {
            if st.slots[k] != INACTIVE {
                acc.add_scaled(&self.params[st.slots[k] as usize], st.weights[k]);
            }
        }
        acc
    }
}

#[inline]
fn linear(r: u32, c: [u32; 3]) -> usize {
    let n = r as usize;
    (c[0] as usize * n + c[1] as usize) * n + c[2] as usize
}

/// Lattice vertex whose cell (the region closer to it than to any other
/// vertex) contains `p`; points outside the domain map to the boundary.
pub fn nearest_vertex(r: u32, p: &Vec3) -> [u32; 3] {
    if r == 1 {
        return [0; 3];
    }
    let du_dx = (r - 1) as f64 / 2.0;
    let mut c = [0u32; 3];
    for a in 0..3 {
        let u = (p[a].clamp(-1.0, 1.0) + 1.0) * du_dx;
        c[a] = (u.round() as u32).min(r - 1);
    }
    c
}
