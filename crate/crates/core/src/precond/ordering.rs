//! Fill-reducing orderings. Both return `perm` with `perm[new] = old`.

use std::collections::VecDeque;

/// Geometric nested dissection of lattice points: split on the mid-plane of
/// the longest axis, order both halves recursively, then the separator.
pub fn nested_dissection(coords: &[[u32; 3]]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..coords.len()).collect();
    let mut out = Vec::with_capacity(coords.len());
    dissect(coords, &mut ids, &mut out);
    out
}

fn dissect(coords: &[[u32; 3]], ids: &mut [usize], out: &mut Vec<usize>) {
    if ids.len() <= 4 {
        out.extend_from_slice(ids);
        return;
    }
    let mut lo = [u32::MAX; 3];
    let mut hi = [0u32; 3];
    for &i in ids.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(coords[i][a]);
            hi[a] = hi[a].max(coords[i][a]);
        }
    }
    let axis = (0..3).max_by_key(|&a| (hi[a] - lo[a], 2 - a)).unwrap();
    if hi[axis] == lo[axis] {
        out.extend_from_slice(ids);
        return;
    }
    let mid = lo[axis] + (hi[axis] - lo[axis]) / 2;
    // stable three-way partition keeps the ordering deterministic
    ids.sort_by_key(|&i| coords[i][axis].cmp(&mid) as i8);
    let left = ids.iter().take_while(|&&i| coords[i][axis] < mid).count();
    let sep = ids[left..].iter().take_while(|&&i| coords[i][axis] == mid).count();
    let (l, rest) = ids.split_at_mut(left);
    let (s, r) = rest.split_at_mut(sep);
    dissect(coords, l, out);
    dissect(coords, r, out);
    out.extend_from_slice(s);
}

/// Reverse Cuthill-McKee on an adjacency list, one pass per component,
/// each seeded at its lowest-degree node.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adjacency[i].len(), i));
    let mut queue = VecDeque::new();
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adjacency[u].len(), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}
