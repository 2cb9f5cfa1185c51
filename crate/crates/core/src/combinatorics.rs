//! Admissible graphs and the moment formula.
//!
//! The `q`-th moment of `M` expands over closed walks
//! `i₁ j₁ i₂ j₂ … i_q j_q i₁`. An identification pattern is a pair of set
//! partitions, one of the `q` i-slots and one of the `q` j-slots; its quotient
//! is a bipartite multigraph with `2q` edges. The pattern is admissible when
//! the quotient is a cactus: every biconnected block is a single cycle.
//!
//! Patterns are counted as labeled objects (no reduction by rotation or
//! relabeling), which is the convention under which trees of simple cycles
//! are counted by Narayana numbers.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::activations::ThetaParams;
use crate::ensemble::{Model, Shape};
use crate::error::{Error, Result};
use crate::spectra::full_spectrum;
use crate::trials::{jackknife_mean, run_trials};

/// Largest `q` accepted by [`enumerate_admissible`].
pub const MAX_Q: usize = 6;

/// All set partitions of `0..n` as restricted-growth strings
/// (`a[0] = 0`, `a[k] ≤ 1 + max(a[..k])`), in lexicographic order.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=max + 1 {
            prefix.push(b);
            rec(prefix, max.max(b), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(vec![]);
        return out;
    }
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

fn block_count(rgs: &[usize]) -> usize {
    rgs.iter().copied().max().map_or(0, |m| m + 1)
}

/// Quotient multigraph of the `2q`-cycle. Vertices `0..bi` are i-blocks,
/// `bi..bi+bj` are j-blocks; edges are listed in walk order.
pub fn quotient_edges(i_part: &[usize], j_part: &[usize]) -> (usize, Vec<(usize, usize)>) {
    let q = i_part.len();
    let bi = block_count(i_part);
    let vertices = bi + block_count(j_part);
    let mut edges = Vec::with_capacity(2 * q);
    for r in 0..q {
        let j = bi + j_part[r];
        edges.push((i_part[r], j));
        edges.push((j, i_part[(r + 1) % q]));
    }
    (vertices, edges)
}

/// Biconnected blocks of a multigraph as lists of edge ids (Tarjan, with the
/// parent edge skipped by id so parallel edges form cycles).
fn biconnected_blocks(vertices: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); vertices];
    for (id, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, id));
        if u != v {
            adj[v].push((u, id));
        }
    }
    let mut disc = vec![usize::MAX; vertices];
    let mut low = vec![0usize; vertices];
    let mut time = 0;
    let mut stack: Vec<usize> = Vec::new();
    let mut blocks = Vec::new();

    fn dfs(
        u: usize,
        parent_edge: Option<usize>,
        adj: &[Vec<(usize, usize)>],
        disc: &mut [usize],
        low: &mut [usize],
        time: &mut usize,
        stack: &mut Vec<usize>,
        blocks: &mut Vec<Vec<usize>>,
    ) {
        disc[u] = *time;
        low[u] = *time;
        *time += 1;
        for &(v, id) in &adj[u] {
            if Some(id) == parent_edge {
                continue;
            }
            if disc[v] == usize::MAX {
                stack.push(id);
                dfs(v, Some(id), adj, disc, low, time, stack, blocks);
                low[u] = low[u].min(low[v]);
                if low[v] >= disc[u] {
                    let mut block = Vec::new();
                    while let Some(e) = stack.pop() {
                        block.push(e);
                        if e == id {
                            break;
                        }
                    }
                    blocks.push(block);
                }
            } else if disc[v] < disc[u] {
                stack.push(id);
                low[u] = low[u].min(disc[v]);
            }
        }
    }

    for s in 0..vertices {
        if disc[s] == usize::MAX {
            dfs(s, None, &adj, &mut disc, &mut low, &mut time, &mut stack, &mut blocks);
        }
    }
    blocks
}

/// Cycle lengths of a cactus multigraph, or `None` if it is not one.
pub fn cactus_cycle_lengths(vertices: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let blocks = biconnected_blocks(vertices, edges);
    let mut lengths = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut vs: Vec<usize> = block.iter().flat_map(|&e| [edges[e].0, edges[e].1]).collect();
        vs.sort_unstable();
        vs.dedup();
        // A single cycle has as many edges as vertices; a bridge fails this.
        if block.len() < 2 || vs.len() != block.len() {
            return None;
        }
        lengths.push(block.len());
    }
    Some(lengths)
}

/// Profile of an admissible pattern: `(I_i, I_j, b)`.
pub type Profile = (usize, usize, usize);

/// Profile of the pattern `(i_part, j_part)` if it is admissible.
pub fn admissible_profile(i_part: &[usize], j_part: &[usize]) -> Option<Profile> {
    let q = i_part.len();
    let (v, edges) = quotient_edges(i_part, j_part);
    let lengths = cactus_cycle_lengths(v, &edges)?;
    let b = lengths.iter().filter(|&&l| l == 2).count();
    Some((q - block_count(i_part), q - block_count(j_part), b))
}

/// Counts `𝒜(q, I_i, I_j, b)` of admissible patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphCensus {
    pub q: usize,
    pub table: BTreeMap<Profile, u64>,
}

impl GraphCensus {
    pub fn count(&self, ii: usize, ij: usize, b: usize) -> u64 {
        self.table.get(&(ii, ij, b)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.table.values().sum()
    }

    /// Counts of trees of simple cycles (every cycle of length two, so
    /// `b = q`), keyed by the number `l = q − I_j` of distinct j-indices.
    pub fn trees_by_distinct_j(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for (&(_, ij, b), &c) in &self.table {
            if b == self.q {
                *out.entry(self.q - ij).or_insert(0) += c;
            }
        }
        out
    }

    /// Rows `q,Ii,Ij,b,count` with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "q,Ii,Ij,b,count")?;
        for (&(ii, ij, b), &c) in &self.table {
            writeln!(w, "{},{ii},{ij},{b},{c}", self.q)?;
        }
        Ok(())
    }
}

/// Brute-force census over all partition pairs, parallel over i-partitions.
pub fn enumerate_admissible(q: usize) -> Result<GraphCensus> {
    if q == 0 || q > MAX_Q {
        return Err(Error::Parameter(format!("q must be in 1..={MAX_Q}, got {q}")));
    }
    let parts = set_partitions(q);
    let table = parts
        .par_iter()
        .map(|ip| {
            let mut local = BTreeMap::new();
            for jp in &parts {
                if let Some(p) = admissible_profile(ip, jp) {
                    *local.entry(p).or_insert(0u64) += 1;
                }
            }
            local
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    Ok(GraphCensus { q, table })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `N(q, l) = (1/q) C(q, l) C(q, l−1)`; zero outside `1 ≤ l ≤ q`.
pub fn narayana(q: usize, l: usize) -> u64 {
    if q == 0 || l == 0 || l > q {
        return 0;
    }
    (binomial(q, l) * binomial(q, l - 1) / q as u128) as u64
}

/// `𝔪_q = Σ 𝒜(q,I_i,I_j,b) θ₁^b θ₂^{q−b} ψ^{I_i+1−q} φ^{I_j}`.
pub fn moment_formula(q: usize, thetas: &ThetaParams, phi: f64, psi: f64, census: &GraphCensus) -> Result<f64> {
    if census.q != q {
        return Err(Error::Parameter(format!("census is for q = {}, asked for q = {q}", census.q)));
    }
    let mut s = 0.0;
    for (&(ii, ij, b), &c) in &census.table {
        s += c as f64
            * thetas.theta1.powi(b as i32)
            * thetas.theta2.powi((q - b) as i32)
            * psi.powi(ii as i32 + 1 - q as i32)
            * phi.powi(ij as i32);
    }
    Ok(s)
}

/// Monte-Carlo estimate of `(1/n₁) E Tr M^q`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub q: usize,
    pub mean: f64,
    /// Jackknife standard error over trials.
    pub std_error: f64,
    pub trials: usize,
}

/// Normalized trace moments `q = 1..=q_max`, one full spectrum per trial.
pub fn monte_carlo_moments(model: &Model, shape: Shape, q_max: usize, trials: usize, seed: u64) -> Result<Vec<MomentEstimate>> {
    if q_max == 0 || q_max > MAX_Q {
        return Err(Error::Parameter(format!("q must be in 1..={MAX_Q}, got {q_max}")));
    }
    let per_trial = run_trials(seed, trials, |_, s| {
        let spectrum = full_spectrum(&model.sample(shape, s)?)?;
        let n = spectrum.eigenvalues.len() as f64;
        Ok((1..=q_max)
            .map(|q| spectrum.eigenvalues.iter().map(|l| l.powi(q as i32)).sum::<f64>() / n)
            .collect::<Vec<f64>>())
    })?;
    Ok((1..=q_max)
        .map(|q| {
            let xs: Vec<f64> = per_trial.iter().map(|t| t[q - 1]).collect();
            let (mean, std_error) = jackknife_mean(&xs);
            MomentEstimate { q, mean, std_error, trials }
        })
        .collect())
}
