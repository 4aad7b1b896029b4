//! Undirected simple graphs and the exact (non-private) assortativity statistics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Role, TrialRng};

/// An immutable undirected simple graph on dense node ids `0..n`.
///
/// Adjacency is kept once, in compressed sparse rows with every neighbor list
/// sorted ascending. The bits `a_ij` with `j < i` (the lower triangle each user
/// randomizes) are therefore the prefix of row `i` returned by
/// [`Graph::lower_neighbors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    /// Length of the `j < i` prefix of each row.
    lower_len: Vec<u32>,
    num_edges: u64,
}

impl Graph {
    /// Builds a graph on `n` nodes. Duplicate edges (in either orientation)
    /// collapse into one; self-loops and out-of-range endpoints are errors.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!("{n} nodes exceed the u32 id space")));
        }
        let mut pairs = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::SelfLoop { line: 0, node: a as u64 });
            }
            pairs.push(canonical(a as u32, b as u32));
        }
        Ok(Self::from_canonical_pairs(n, pairs).0)
    }

    /// `pairs` hold `(hi, lo)` with `hi > lo`. Returns the graph and the number
    /// of duplicates dropped.
    fn from_canonical_pairs(n: usize, mut pairs: Vec<(u32, u32)>) -> (Graph, usize) {
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        let duplicates = before - pairs.len();

        let mut degree = vec![0usize; n];
        for &(hi, lo) in &pairs {
            degree[hi as usize] += 1;
            degree[lo as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; 2 * pairs.len()];
        for &(hi, lo) in &pairs {
            neighbors[cursor[hi as usize]] = lo;
            cursor[hi as usize] += 1;
            neighbors[cursor[lo as usize]] = hi;
            cursor[lo as usize] += 1;
        }
        let mut lower_len = Vec::with_capacity(n);
        for v in 0..n {
            let row = &mut neighbors[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            lower_len.push(row.partition_point(|&u| (u as usize) < v) as u32);
        }
        let graph = Graph {
            offsets,
            neighbors,
            lower_len,
            num_edges: pairs.len() as u64,
        };
        (graph, duplicates)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> u64 {
        self.num_edges
    }

    pub fn degree(&self, i: usize) -> u64 {
        (self.offsets[i + 1] - self.offsets[i]) as u64
    }

    pub fn degrees(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.offsets.windows(2).map(|w| (w[1] - w[0]) as u64)
    }

    /// Sorted neighbor ids of `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Sorted neighbor ids `j < i`: the ones of `i`'s lower-triangle row.
    pub fn lower_neighbors(&self, i: usize) -> &[u32] {
        let start = self.offsets[i];
        &self.neighbors[start..start + self.lower_len[i] as usize]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes() && self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Edges in canonical order: `(i, j)` with `i > j`, ascending `i` then `j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes())
            .flat_map(move |i| self.lower_neighbors(i).iter().map(move |&j| (i, j as usize)))
    }

    pub fn max_degree(&self) -> u64 {
        self.degrees().max().unwrap_or(0)
    }

    pub fn avg_degree(&self) -> f64 {
        if self.num_nodes() == 0 {
            0.0
        } else {
            2.0 * self.num_edges as f64 / self.num_nodes() as f64
        }
    }

    /// Writes the canonical edge list, one `i j` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_edge_list(std::io::BufWriter::new(file))
    }
}

fn canonical(a: u32, b: u32) -> (u32, u32) {
    if a > b {
        (a, b)
    } else {
        (b, a)
    }
}

/// How node tokens in an edge list become dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMapping {
    /// Ids are assigned `0, 1, ...` in order of first appearance.
    #[default]
    FirstAppearance,
    /// Tokens are used as ids directly (minus one if one-indexed); `n` is the
    /// largest id plus one, so ids that never appear become isolated nodes.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfLoopPolicy {
    #[default]
    Reject,
    SkipWithWarning,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub one_indexed: bool,
    pub ids: IdMapping,
    pub self_loops: SelfLoopPolicy,
    /// Skip the first non-comment line (e.g. a `node_1,node_2` CSV header).
    pub skip_header: bool,
}

/// A graph read from an edge list, with ingestion diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// `original_ids[v]` is the token that became node `v`.
    pub original_ids: Vec<u64>,
    pub skipped_self_loops: usize,
    pub duplicate_edges: usize,
}

/// Parses a SNAP-style edge list: `#` starts a comment line, every other
/// non-blank line holds two node tokens separated by whitespace or a comma.
pub fn load_edge_list<R: BufRead>(source: R, options: &LoadOptions) -> Result<LoadedGraph> {
    let mut remap: HashMap<u64, u32> = HashMap::new();
    let mut original_ids: Vec<u64> = Vec::new();
    let mut max_id: Option<u64> = None;
    let mut pairs = Vec::new();
    let mut skipped_self_loops = 0;
    let mut header_pending = options.skip_header;

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let mut tokens = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty());
        let (Some(a), Some(b)) = (tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two node ids, found {trimmed:?}"),
            });
        };
        let a = parse_token(a, line_no, options.one_indexed)?;
        let b = parse_token(b, line_no, options.one_indexed)?;
        if a == b {
            match options.self_loops {
                SelfLoopPolicy::Reject => return Err(Error::SelfLoop { line: line_no, node: a }),
                SelfLoopPolicy::SkipWithWarning => {
                    log::warn!("line {line_no}: skipping self-loop on node {a}");
                    skipped_self_loops += 1;
                    continue;
                }
            }
        }
        let (u, v) = match options.ids {
            IdMapping::FirstAppearance => {
                let mut intern = |tok: u64| -> u32 {
                    *remap.entry(tok).or_insert_with(|| {
                        original_ids.push(tok);
                        (original_ids.len() - 1) as u32
                    })
                };
                (intern(a), intern(b))
            }
            IdMapping::Identity => {
                let hi = a.max(b);
                if hi >= u32::MAX as u64 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("node id {hi} exceeds the supported range"),
                    });
                }
                max_id = Some(max_id.map_or(hi, |m| m.max(hi)));
                (a as u32, b as u32)
            }
        };
        pairs.push(canonical(u, v));
    }

    let n = match options.ids {
        IdMapping::FirstAppearance => original_ids.len(),
        IdMapping::Identity => {
            let n = max_id.map_or(0, |m| m as usize + 1);
            let shift = u64::from(options.one_indexed);
            original_ids = (0..n as u64).map(|v| v + shift).collect();
            n
        }
    };
    let (graph, duplicate_edges) = Graph::from_canonical_pairs(n, pairs);
    Ok(LoadedGraph {
        graph,
        original_ids,
        skipped_self_loops,
        duplicate_edges,
    })
}

pub fn load_edge_list_file(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadedGraph> {
    let file = File::open(path)?;
    load_edge_list(BufReader::new(file), options)
}

fn parse_token(token: &str, line: usize, one_indexed: bool) -> Result<u64> {
    let value: u64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("node id {token:?} is not a non-negative integer"),
    })?;
    if one_indexed {
        value.checked_sub(1).ok_or_else(|| Error::Parse {
            line,
            message: "node id 0 in a one-indexed edge list".into(),
        })
    } else {
        Ok(value)
    }
}

/// Barabási–Albert graph: `m` initially isolated nodes, then every new node
/// attaches to `m` distinct existing nodes drawn from the list of all edge
/// endpoints so far (degree-proportional), re-drawing on collision.
/// The result has exactly `(n - m) * m` edges.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "Barabási–Albert needs 1 <= m < n, got n = {n}, m = {m}"
        )));
    }
    let mut rng = TrialRng::new(seed, 0, 0).stream(Role::Generator, 0);
    let mut pairs = Vec::with_capacity((n - m) * m);
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * (n - m) * m);
    let mut targets: Vec<u32> = (0..m as u32).collect();
    // stamp[v] == source marks v as already chosen for the current source.
    let mut stamp = vec![u32::MAX; n];

    for source in m as u32..n as u32 {
        for &t in &targets {
            pairs.push((source, t));
        }
        endpoints.extend_from_slice(&targets);
        endpoints.extend(std::iter::repeat_n(source, m));

        targets.clear();
        while targets.len() < m {
            let pick = endpoints[rng.random_range(0..endpoints.len())];
            if stamp[pick as usize] != source {
                stamp[pick as usize] = source;
                targets.push(pick);
            }
        }
    }
    Ok(Graph::from_canonical_pairs(n, pairs).0)
}

/// Erdős–Rényi `G(n, p)`: every pair is an edge independently with probability `p`.
pub fn generate_gnp(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = TrialRng::new(seed, 0, 0).stream(Role::Generator, 1);
    let mut pairs = Vec::new();
    for i in 1..n as u32 {
        for j in 0..i {
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Ok(Graph::from_canonical_pairs(n, pairs).0)
}

/// Exact assortativity statistics of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n: usize,
    pub m: u64,
    pub d_max: u64,
    pub d_avg: f64,
    /// Assortativity factor: the numerator of the coefficient.
    pub r_u: f64,
    /// Denominator of the coefficient; never negative.
    pub r_d: f64,
    /// Assortativity coefficient, `None` when `r_d = 0` (e.g. regular graphs).
    pub r: Option<f64>,
}

/// Computes `r_u`, `r_d` and `r` from the degree sequence.
///
/// With `S1 = Σ_edges d_i d_j`, `S2 = Σ_i d_i²`, `S3 = Σ_i d_i³`:
///
/// ```text
/// r_u = S1/M - (S2/2M)² = (4M·S1 - S2²) / 4M²
/// r_d = S3/2M - (S2/2M)² = (2M·S3 - S2²) / 4M²
/// ```
///
/// The numerators are evaluated exactly in integer arithmetic, so the only
/// rounding is the final division.
pub fn exact_stats(g: &Graph) -> Result<GraphStats> {
    let m = g.num_edges();
    if m == 0 {
        return Err(Error::UndefinedStatistic("assortativity needs at least one edge"));
    }
    let s1: i128 = g
        .edges()
        .map(|(i, j)| (g.degree(i) * g.degree(j)) as i128)
        .sum();
    let (s2, s3) = g.degrees().fold((0i128, 0i128), |(s2, s3), d| {
        let d = d as i128;
        (s2 + d * d, s3 + d * d * d)
    });
    let m128 = m as i128;
    let scale = (4 * m128 * m128) as f64;
    let num_u = 4 * m128 * s1 - s2 * s2;
    let num_d = 2 * m128 * s3 - s2 * s2;
    let r_u = num_u as f64 / scale;
    let r_d = num_d as f64 / scale;
    let r = (num_d > 0).then(|| num_u as f64 / num_d as f64);
    Ok(GraphStats {
        n: g.num_nodes(),
        m,
        d_max: g.max_degree(),
        d_avg: g.avg_degree(),
        r_u,
        r_d,
        r,
    })
}

/// `(r_u, r_d)` evaluated literally as edge sums in floating point, with
/// compensated summation. Independent of [`exact_stats`]; used to cross-check it.
pub fn edge_form_stats(g: &Graph) -> Result<(f64, f64)> {
    let m = g.num_edges();
    if m == 0 {
        return Err(Error::UndefinedStatistic("assortativity needs at least one edge"));
    }
    let (mut prod, mut mean, mut sq) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    for (i, j) in g.edges() {
        let (di, dj) = (g.degree(i) as f64, g.degree(j) as f64);
        prod.add(di * dj);
        mean.add(0.5 * (di + dj));
        sq.add(0.5 * (di * di + dj * dj));
    }
    let m = m as f64;
    let mean_sq = (mean.total() / m).powi(2);
    Ok((prod.total() / m - mean_sq, sq.total() / m - mean_sq))
}

/// `T_i = Σ_j a_ij d_j`: the sum of the neighbors' degrees, readable from
/// node `i`'s 2-hop view.
pub fn neighbor_degree_sum(g: &Graph, i: usize) -> Result<u64> {
    if i >= g.num_nodes() {
        return Err(Error::InvalidParameter(format!(
            "node {i} outside 0..{}",
            g.num_nodes()
        )));
    }
    Ok(g.neighbors(i).iter().map(|&j| g.degree(j as usize)).sum())
}

/// Kahan–Babuška–Neumaier summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
