//! Independent reference implementations shared by the integration tests.
//! None of these call into the routines they are used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

/// Set partitions of `0..n` by inserting element `k` into each existing
/// block (newest first) or a new block. Block labels are creation order
/// reversed, so the labeling differs from restricted-growth strings too.
pub fn partitions_by_insertion(n: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<usize>>) {
        if k == n {
            let mut label = vec![0; n];
            let nb = blocks.len();
            for (b, members) in blocks.iter().enumerate() {
                for &e in members {
                    label[e] = nb - 1 - b;
                }
            }
            out.push(label);
            return;
        }
        blocks.push(vec![k]);
        rec(k + 1, n, blocks, out);
        blocks.pop();
        for b in (0..blocks.len()).rev() {
            blocks[b].push(k);
            rec(k + 1, n, blocks, out);
            blocks[b].pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// All simple cycles of a multigraph as sets of edge ids.
pub fn simple_cycles(vertices: usize, edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    let mut adj = vec![Vec::new(); vertices];
    for (id, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, id));
        adj[v].push((u, id));
    }
    let mut found = BTreeSet::new();
    for s in 0..vertices {
        // Only cycles whose smallest vertex is s.
        let mut on_path = vec![false; vertices];
        let mut path_edges = Vec::new();
        fn walk(
            u: usize,
            s: usize,
            adj: &[Vec<(usize, usize)>],
            on_path: &mut [bool],
            path_edges: &mut Vec<usize>,
            found: &mut BTreeSet<Vec<usize>>,
        ) {
            for &(w, id) in &adj[u] {
                if path_edges.contains(&id) || w < s {
                    continue;
                }
                if w == s {
                    if !path_edges.is_empty() {
                        let mut c = path_edges.clone();
                        c.push(id);
                        c.sort_unstable();
                        found.insert(c);
                    }
                    continue;
                }
                if on_path[w] {
                    continue;
                }
                on_path[w] = true;
                path_edges.push(id);
                walk(w, s, adj, on_path, path_edges, found);
                path_edges.pop();
                on_path[w] = false;
            }
        }
        on_path[s] = true;
        walk(s, s, &adj, &mut on_path, &mut path_edges, &mut found);
    }
    found
}

/// Census by brute force with a different cactus criterion: every edge lies
/// on exactly one simple cycle. Returns `(I_i, I_j, b) -> count`.
pub fn dual_census(q: usize) -> BTreeMap<(usize, usize, usize), u64> {
    let parts = partitions_by_insertion(q);
    let mut table = BTreeMap::new();
    for ip in &parts {
        for jp in &parts {
            let bi = ip.iter().max().unwrap() + 1;
            let bj = jp.iter().max().unwrap() + 1;
            let mut edges = Vec::new();
            for r in 0..q {
                edges.push((ip[r], bi + jp[r]));
                edges.push((bi + jp[r], ip[(r + 1) % q]));
            }
            let cycles = simple_cycles(bi + bj, &edges);
            let mut per_edge = vec![0usize; edges.len()];
            for c in &cycles {
                for &e in c {
                    per_edge[e] += 1;
                }
            }
            if per_edge.iter().all(|&k| k == 1) {
                let b = cycles.iter().filter(|c| c.len() == 2).count();
                *table.entry((q - bi, q - bj, b)).or_insert(0) += 1;
            }
        }
    }
    table
}

/// `C(n, k)` by Pascal's triangle.
pub fn binomial(n: usize, k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![1u64; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}

/// θ-parameters at `σ = 1` of `Σ_k c_k He_k` (probabilists' Hermite) in
/// closed form: `θ₁ = Σ_{k≥1} c_k² k!`, `θ₂ = c₁²`, `θ₃ = c₂²`.
pub fn hermite_thetas(c: &[f64]) -> (f64, f64, f64) {
    let mut fact = 1.0;
    let mut t1 = 0.0;
    for (k, &ck) in c.iter().enumerate().skip(1) {
        fact *= k as f64;
        t1 += ck * ck * fact;
    }
    let c1 = c.get(1).copied().unwrap_or(0.0);
    let c2 = c.get(2).copied().unwrap_or(0.0);
    (t1, c1 * c1, c2 * c2)
}

/// Eigenvalues of a small symmetric matrix by bisection on
/// `det(λI − A)` (Gaussian elimination with partial pivoting), assuming
/// simple roots in `[lo, hi]`.
pub fn char_poly_roots(a: &[Vec<f64>], lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let n = a.len();
    let det = |lambda: f64| -> f64 {
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { lambda - a[i][j] } else { -a[i][j] }).collect())
            .collect();
        let mut d = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            if m[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                m.swap(p, c);
                d = -d;
            }
            d *= m[c][c];
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        d
    };
    let mut roots = Vec::new();
    let h = (hi - lo) / grid as f64;
    for k in 0..grid {
        let (mut x0, mut x1) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
        let (mut f0, f1) = (det(x0), det(x1));
        if f0 == 0.0 {
            roots.push(x0);
            continue;
        }
        if f0.signum() == f1.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (x0 + x1);
            let fm = det(mid);
            if fm.signum() == f0.signum() {
                x0 = mid;
                f0 = fm;
            } else {
                x1 = mid;
            }
        }
        roots.push(0.5 * (x0 + x1));
    }
    roots
}
