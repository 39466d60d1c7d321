//! Laplacian smoothing of gradients, `g -> (I + λL)^-2 g`.

mod cholesky;
mod ordering;

pub use cholesky::{CholeskyFactor, UpperCsc};
pub use ordering::{nested_dissection, reverse_cuthill_mckee};

use crate::geometry::TriMesh;
use crate::grid::GridLevel;
use crate::{Error, Result};

/// Combinatorial graph Laplacian `L = D - A` with a cached factorization of
/// `I + λL`.
#[derive(Clone, Debug)]
pub struct LaplacianOperator {
    lambda: f64,
    adjacency: Vec<Vec<usize>>,
    // perm[new] = old
    perm: Vec<usize>,
    factor: CholeskyFactor,
}

enum Ordering<'a> {
    Lattice(&'a [[u32; 3]]),
    Bandwidth,
}

impl LaplacianOperator {
    /// Nodes are the active vertices of `level`, edges join axis neighbours.
    pub fn for_grid_level(level: &GridLevel, lambda: f64) -> Result<Self> {
        Self::build(
            level.active_count(),
            &level.adjacency(),
            lambda,
            Ordering::Lattice(level.coords()),
        )
    }

    pub fn for_mesh(mesh: &TriMesh, lambda: f64) -> Result<Self> {
        Self::build(mesh.vertices().len(), mesh.edges(), lambda, Ordering::Bandwidth)
    }

    /// Operator over an arbitrary undirected edge list.
    pub fn from_edges(n: usize, edges: &[(u32, u32)], lambda: f64) -> Result<Self> {
        Self::build(n, edges, lambda, Ordering::Bandwidth)
    }

    fn build(n: usize, edges: &[(u32, u32)], lambda: f64, ordering: Ordering) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("smoothing strength must be positive, got {lambda}")));
        }
        if n == 0 {
            return Err(Error::invalid("Laplacian needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            if a >= n || b >= n || a == b {
                return Err(Error::invalid(format!("bad Laplacian edge ({a}, {b})")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nb in adjacency.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        let perm = match ordering {
            Ordering::Lattice(coords) => nested_dissection(coords),
            Ordering::Bandwidth => reverse_cuthill_mckee(&adjacency),
        };
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for (k, &old) in perm.iter().enumerate() {
            let mut col: Vec<(usize, f64)> = adjacency[old]
                .iter()
                .map(|&u| inv[u])
                .filter(|&i| i < k)
                .map(|i| (i, -lambda))
                .collect();
            col.push((k, 1.0 + lambda * adjacency[old].len() as f64));
            col.sort_unstable_by_key(|e| e.0);
            for (i, v) in col {
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        let upper = UpperCsc {
            n,
            col_ptr,
            row_idx,
            values,
        };
        let factor = CholeskyFactor::factor(&upper)
            .ok_or_else(|| Error::invalid("I + λL is not positive definite"))?;
        Ok(Self {
            lambda,
            adjacency,
            perm,
            factor,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor.nnz()
    }

    /// `y = L x` for a single channel.
    pub fn apply_laplacian(&self, x: &[f64]) -> Vec<f64> {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(i, nb)| nb.len() as f64 * x[i] - nb.iter().map(|&j| x[j]).sum::<f64>())
            .collect()
    }

    /// `y = (I + λL) x` for a single channel.
    pub fn apply_shifted(&self, x: &[f64]) -> Vec<f64> {
        let lx = self.apply_laplacian(x);
        x.iter().zip(lx).map(|(a, b)| a + self.lambda * b).collect()
    }

    /// Solves `(I + λL)^2 x = g` channel by channel. `g` is node-major with
    /// `channels` interleaved values per node.
    pub fn smooth(&self, g: &[f64], channels: usize) -> Result<Vec<f64>> {
        let n = self.node_count();
        if channels == 0 || g.len() != n * channels {
            return Err(Error::invalid(format!(
                "gradient has {} entries, expected {n} nodes x {channels} channels",
                g.len()
            )));
        }
        let out = match channels {
            6 => self.smooth_block::<6>(g),
            3 => self.smooth_block::<3>(g),
            _ => {
                let mut out = vec![0.0; g.len()];
                let mut buf = vec![[0.0; 1]; n];
                for c in 0..channels {
                    for (new, &old) in self.perm.iter().enumerate() {
                        buf[new][0] = g[old * channels + c];
                    }
                    self.factor.solve_block_in_place(&mut buf);
                    self.factor.solve_block_in_place(&mut buf);
                    for (new, &old) in self.perm.iter().enumerate() {
                        out[old * channels + c] = buf[new][0];
                    }
                }
                out
            }
        };
        Ok(out)
    }

    fn smooth_block<const K: usize>(&self, g: &[f64]) -> Vec<f64> {
        let mut buf: Vec<[f64; K]> = self
            .perm
            .iter()
            .map(|&old| g[old * K..(old + 1) * K].try_into().unwrap())
            .collect();
        self.factor.solve_block_in_place(&mut buf);
        self.factor.solve_block_in_place(&mut buf);
        let mut out = vec![0.0; g.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old * K..(old + 1) * K].copy_from_slice(&buf[new]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::primitives;

    fn dense_laplacian(op: &LaplacianOperator) -> DMatrix<f64> {
        let n = op.node_count();
        let mut m = DMatrix::zeros(n, n);
        for (i, nb) in op.adjacency.iter().enumerate() {
            m[(i, i)] = nb.len() as f64;
            for &j in nb {
                m[(i, j)] = -1.0;
            }
        }
        m
    }

    fn dense_smooth(op: &LaplacianOperator, g: &[f64], channels: usize) -> Vec<f64> {
        let n = op.node_count();
        let a = DMatrix::identity(n, n) + dense_laplacian(op) * op.lambda();
        let a2 = &a * &a;
        let lu = a2.lu();
        let mut out = vec![0.0; g.len()];
        for c in 0..channels {
            let b = DVector::from_iterator(n, (0..n).map(|i| g[i * channels + c]));
            let x = lu.solve(&b).unwrap();
            for i in 0..n {
                out[i * channels + c] = x[i];
            }
        }
        out
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn relative_residual(op: &LaplacianOperator, x: &[f64], g: &[f64], channels: usize) -> f64 {
        let n = op.node_count();
        let mut r2 = 0.0;
        for c in 0..channels {
            let xc: Vec<f64> = (0..n).map(|i| x[i * channels + c]).collect();
            let y = op.apply_shifted(&op.apply_shifted(&xc));
            r2 += (0..n).map(|i| (y[i] - g[i * channels + c]).powi(2)).sum::<f64>();
        }
        r2.sqrt() / norm(g)
    }

    fn random_level(level: u32, keep: f64, seed: u64) -> GridLevel {
        let r = GridLevel::resolution_for(level);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords = Vec::new();
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    if rng.random::<f64>() < keep {
                        coords.push([i, j, k]);
                    }
                }
            }
        }
        GridLevel::from_coords(level, &coords).unwrap()
    }

    #[test]
    fn single_vertex_level_is_identity() {
        let op = LaplacianOperator::for_grid_level(&GridLevel::dense(1), 0.25).unwrap();
        assert_eq!(dense_laplacian(&op), DMatrix::zeros(1, 1));
        let g = [1.0, -2.0, 3.0, 0.5, 0.0, 7.0];
        assert_eq!(op.smooth(&g, 6).unwrap(), g.to_vec());
    }

    #[test]
    fn two_node_graph() {
        let op = LaplacianOperator::from_edges(2, &[(0, 1)], 1e6).unwrap();
        assert_eq!(dense_laplacian(&op), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let x = op.smooth(&[1.0, -1.0], 1).unwrap();
        assert!(x[0].abs() < 1e-10 && x[1].abs() < 1e-10);
        assert!((x[0] + x[1]).abs() < 1e-15);
    }

    #[test]
    fn triangle_mesh_laplacian() {
        let mesh = TriMesh::new(
            vec![crate::geometry::Vec3::zeros(), crate::geometry::Vec3::x(), crate::geometry::Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let op = LaplacianOperator::for_mesh(&mesh, 16.0).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(dense_laplacian(&op), expected);
        let g = [0.3, -1.0, 2.0, 0.3, -1.0, 2.0, 0.3, -1.0, 2.0];
        let x = op.smooth(&g, 3).unwrap();
        for (a, b) in x.iter().zip(g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_subset_assembly_is_symmetric_with_zero_rows() {
        let level = random_level(6, 0.5, 1);
        let op = LaplacianOperator::for_grid_level(&level, 0.25).unwrap();
        let l = dense_laplacian(&op);
        // independent assembly straight from lattice coordinates
        let coords = level.coords();
        let n = coords.len();
        let mut oracle = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let d: u32 = (0..3).map(|k| coords[a][k].abs_diff(coords[b][k])).sum();
                if d == 1 {
                    oracle[(a, b)] = -1.0;
                    oracle[(a, a)] += 1.0;
                }
            }
        }
        assert_eq!(l, oracle);
        assert_eq!(l, l.transpose());
        for i in 0..n {
            assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn lattice_matches_dense_solve() {
        let level = GridLevel::dense(3);
        assert_eq!(level.active_count(), 125);
        let op = LaplacianOperator::for_grid_level(&level, 0.25).unwrap();
        let g = random_vec(125 * 6, 2);
        let x = op.smooth(&g, 6).unwrap();
        let oracle = dense_smooth(&op, &g, 6);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(relative_residual(&op, &x, &g, 6) < 1e-8);
    }

    #[test]
    fn icosphere_matches_dense_solve() {
        let mesh = primitives::icosphere(3);
        assert_eq!(mesh.vertices().len(), 642);
        let op = LaplacianOperator::for_mesh(&mesh, 16.0).unwrap();
        let g = random_vec(642 * 3, 3);
        let x = op.smooth(&g, 3).unwrap();
        let oracle = dense_smooth(&op, &g, 3);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(relative_residual(&op, &x, &g, 3) < 1e-8);
    }

    #[test]
    fn finest_lattice_residual() {
        let level = GridLevel::dense(10);
        let op = LaplacianOperator::for_grid_level(&level, 0.25 * 1.5f64.powi(9)).unwrap();
        let g = random_vec(level.active_count() * 6, 4);
        let x = op.smooth(&g, 6).unwrap();
        assert!(relative_residual(&op, &x, &g, 6) < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let op = LaplacianOperator::for_grid_level(&GridLevel::dense(2), 1.0).unwrap();
        assert!(op.smooth(&[0.0; 26 * 6], 6).is_err());
        assert!(LaplacianOperator::for_grid_level(&GridLevel::dense(2), 0.0).is_err());
    }

    #[test]
    fn tiny_lambda_is_nearly_identity() {
        let level = random_level(4, 0.7, 5);
        let op = LaplacianOperator::for_grid_level(&level, 1e-12).unwrap();
        let g = random_vec(level.active_count() * 6, 6);
        let x = op.smooth(&g, 6).unwrap();
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dmax = x.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dmax / gmax < 1e-6);
    }

    fn components(op: &LaplacianOperator) -> Vec<usize> {
        let n = op.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = next;
            while let Some(v) = stack.pop() {
                for &u in &op.adjacency[v] {
                    if comp[u] == usize::MAX {
                        comp[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn smoothing_preserves_component_means_and_damps_energy(
            seed in 0u64..10_000,
            keep in 0.2f64..1.0,
            lambda in 1e-3f64..50.0,
            constant in -5.0f64..5.0,
        ) {
            let level = random_level(4, keep, seed);
            proptest::prop_assume!(level.active_count() > 0);
            let op = LaplacianOperator::for_grid_level(&level, lambda).unwrap();
            let n = op.node_count();
            let g = random_vec(n * 6, seed + 1);
            let x = op.smooth(&g, 6).unwrap();
            proptest::prop_assert!(norm(&x) <= norm(&g) * (1.0 + 1e-12));

            let comp = components(&op);
            let count = comp.iter().max().unwrap() + 1;
            for c in 0..6 {
                let mut before = vec![0.0; count];
                let mut after = vec![0.0; count];
                for i in 0..n {
                    before[comp[i]] += g[i * 6 + c];
                    after[comp[i]] += x[i * 6 + c];
                }
                for k in 0..count {
                    proptest::prop_assert!((before[k] - after[k]).abs() < 1e-9 * n as f64);
                }
            }

            let flat = vec![constant; n * 6];
            let y = op.smooth(&flat, 6).unwrap();
            for v in y {
                proptest::prop_assert!((v - constant).abs() < 1e-12 * (1.0 + constant.abs()));
            }
        }
    }
}
