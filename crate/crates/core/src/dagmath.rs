//! Exact adjacency-matrix algebra for action coordination graphs.
//!
//! Edge convention: `A[j][i] = 1` means agent `j` is a parent of agent `i`
//! (row = source, column = target). Everything here is a pure function on
//! small dense matrices (d <= 64).
//!
//! The continuous constraints operate on real matrices:
//!
//! ```text
//! g(W) = trace(exp(W o W)) - d        acyclicity, zero iff no cycle
//! c(W) = sum(W^k)                     depth, zero iff no walk of length k
//! ```

use std::collections::BTreeSet;
use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Relative termination tolerance of the matrix-exponential power series.
pub const SERIES_TOL: f64 = 1e-12;

/// Binary action-dependency matrix of an ACG.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    dim: usize,
    bits: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            bits: vec![false; dim * dim],
        }
    }

    /// Builds a matrix from an edge list, rejecting self-loops.
    pub fn from_edges(dim: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(dim);
        for &(src, dst) in edges {
            a.set_edge(src, dst, true)?;
        }
        Ok(a)
    }

    /// Builds a matrix from 0/1 rows.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut a = Self::empty(dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => a.set_edge(i, j, true)?,
                    other => {
                        return Err(Error::Argument(format!(
                            "entry ({i},{j}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(a)
    }

    /// Parses whitespace-separated 0/1 rows, one row per non-empty line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Format(format!(
                        "line {}: token {other:?} is not 0 or 1",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Format("matrix file has no rows".into()));
        }
        let dim = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Format(format!(
                "ragged matrix: row {} has {} entries, expected {dim}",
                i + 1,
                r.len()
            )));
        }
        Self::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.bits[src * self.dim + dst]
    }

    pub fn set_edge(&mut self, src: usize, dst: usize, on: bool) -> Result<()> {
        if src >= self.dim || dst >= self.dim {
            return Err(Error::Argument(format!(
                "edge ({src},{dst}) out of range for dim {}",
                self.dim
            )));
        }
        if src == dst && on {
            return Err(Error::Argument(format!("self-loop on node {src}")));
        }
        self.bits[src * self.dim + dst] = on;
        Ok(())
    }

    /// Edges in row-major (source, target) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.dim;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| (idx / d, idx % d))
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_graph(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// True when every edge of `self` is also an edge of `other`.
    pub fn is_subgraph_of(&self, other: &AdjacencyMatrix) -> bool {
        self.dim == other.dim && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_real(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| {
            if self.has_edge(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AdjacencyMatrix{:?}", self.edges().collect::<Vec<_>>())
    }
}

impl fmt::Display for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let row: Vec<&str> = (0..self.dim)
                .map(|j| if self.has_edge(i, j) { "1" } else { "0" })
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Edge-probability matrix emitted by the generator decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Array2<f64>);

impl WeightMatrix {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        check_square(&w)?;
        for ((i, j), &v) in w.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("weight ({i},{j}) = {v} outside [0,1]")));
            }
            if i == j && v != 0.0 {
                return Err(Error::Argument(format!("diagonal weight ({i},{i}) = {v}")));
            }
        }
        Ok(Self(w))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Array2::zeros((dim, dim)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, src: usize, dst: usize) -> f64 {
        self.0[[src, dst]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Execution order of agents: every parent precedes its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoOrder(Vec<usize>);

impl TopoOrder {
    pub fn identity(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    /// Wraps a permutation, checking it against `dag`.
    pub fn checked(order: Vec<usize>, dag: &AdjacencyMatrix) -> Result<Self> {
        let order = Self(order);
        order.validate(dag)?;
        Ok(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.0.len()];
        for (p, &node) in self.0.iter().enumerate() {
            pos[node] = p;
        }
        pos
    }

    /// Checks the bijection and edge-precedence invariants against `dag`.
    pub fn validate(&self, dag: &AdjacencyMatrix) -> Result<()> {
        let d = dag.dim();
        if self.0.len() != d {
            return Err(Error::Consistency(format!(
                "order has {} entries for {d} agents",
                self.0.len()
            )));
        }
        let pos = self.positions();
        if self.0.iter().any(|&n| n >= d) || pos.contains(&usize::MAX) {
            return Err(Error::Consistency(format!("{:?} is not a permutation", self.0)));
        }
        if let Some((s, t)) = dag.edges().find(|&(s, t)| pos[s] > pos[t]) {
            return Err(Error::Consistency(format!(
                "edge {s}->{t} runs against order {:?}",
                self.0
            )));
        }
        Ok(())
    }
}

fn check_square(m: &Array2<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

/// `exp(B)` by the truncated power series used for the acyclicity constraint.
///
/// Stops once the m-th term's entry sum drops below
/// `SERIES_TOL * max(1, running trace)` or after `4d` terms. For nilpotent `B`
/// the terms vanish exactly, so the result is exact.
pub fn matexp_series(b: &Array2<f64>) -> Result<Array2<f64>> {
    let d = check_square(b)?;
    let mut sum = Array2::<f64>::eye(d);
    let mut term = Array2::<f64>::eye(d);
    let mut running_trace = d as f64;
    for m in 1..=4 * d {
        term = term.dot(b) / m as f64;
        sum += &term;
        running_trace += term.diag().sum();
        if term.sum().abs() < SERIES_TOL * running_trace.max(1.0) {
            break;
        }
    }
    Ok(sum)
}

pub fn matexp_trace(b: &Array2<f64>) -> Result<f64> {
    Ok(matexp_series(b)?.diag().sum())
}

/// `g(W) = trace(exp(W o W)) - d`.
pub fn acyclicity_value(w: &Array2<f64>) -> Result<f64> {
    let d = check_square(w)?;
    let sq = w * w;
    Ok(matexp_trace(&sq)? - d as f64)
}

/// Exact gradient of [`acyclicity_value`]: `exp(W o W)^T o 2W`.
pub fn acyclicity_grad(w: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(w)?;
    let e = matexp_series(&(w * w))?;
    Ok(&e.t() * &(w * 2.0))
}

/// Integer power of a square matrix, `k >= 1`.
pub fn matrix_power(w: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    check_square(w)?;
    if k == 0 {
        return Err(Error::Argument("matrix power requires k >= 1".into()));
    }
    let mut p = w.clone();
    for _ in 1..k {
        p = p.dot(w);
    }
    Ok(p)
}

/// `c(W) = sum(W^k)`; on a binary matrix this counts walks of length `k`.
pub fn depth_value(w: &Array2<f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Argument("depth bound k must be >= 1".into()));
    }
    Ok(matrix_power(w, k)?.sum())
}

/// Exact gradient of [`depth_value`]:
/// `sum_{m=0}^{k-1} (W^T)^m J (W^T)^{k-1-m}` with `J` the all-ones matrix.
///
/// Valid for singular `W`. The diagonal is not masked.
pub fn depth_grad(w: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    let d = check_square(w)?;
    if k == 0 {
        return Err(Error::Argument("depth bound k must be >= 1".into()));
    }
    let wt = w.t().to_owned();
    let mut powers = Vec::with_capacity(k);
    powers.push(Array2::<f64>::eye(d));
    for m in 1..k {
        let next = powers[m - 1].dot(&wt);
        powers.push(next);
    }
    let ones = Array2::<f64>::ones((d, d));
    let mut grad = Array2::<f64>::zeros((d, d));
    for m in 0..k {
        grad += &powers[m].dot(&ones).dot(&powers[k - 1 - m]);
    }
    Ok(grad)
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    White,
    Grey,
    Black,
}

/// Finds one directed cycle by depth-first search, visiting nodes and
/// successors in ascending index order. The returned nodes `[v0, .., vn]`
/// satisfy `v_i -> v_{i+1}` and `vn -> v0`.
pub fn find_cycle(a: &AdjacencyMatrix) -> Option<Vec<usize>> {
    let d = a.dim();
    let mut mark = vec![Mark::White; d];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(
        a: &AdjacencyMatrix,
        v: usize,
        mark: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Grey;
        stack.push(v);
        for w in 0..a.dim() {
            if !a.has_edge(v, w) {
                continue;
            }
            match mark[w] {
                Mark::Grey => {
                    let start = stack.iter().position(|&x| x == w).expect("grey node on stack");
                    return Some(stack[start..].to_vec());
                }
                Mark::White => {
                    if let Some(c) = visit(a, w, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Black => {}
            }
        }
        stack.pop();
        mark[v] = Mark::Black;
        None
    }

    for v in 0..d {
        if mark[v] == Mark::White {
            if let Some(c) = visit(a, v, &mut mark, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Three-colour DFS cycle check.
pub fn is_acyclic(a: &AdjacencyMatrix) -> bool {
    find_cycle(a).is_none()
}

/// Kahn's algorithm, breaking ties by the lowest agent index.
pub fn topological_order(a: &AdjacencyMatrix) -> Result<TopoOrder> {
    let d = a.dim();
    let mut indeg = vec![0usize; d];
    for (_, t) in a.edges() {
        indeg[t] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..d).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for w in 0..d {
            if a.has_edge(v, w) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
    }
    if order.len() < d {
        return Err(Error::CyclicGraph(find_cycle(a).unwrap_or_default()));
    }
    Ok(TopoOrder(order))
}

/// Smallest `k <= d` with `A^k = O`, or `None` when `A` has a cycle.
pub fn nilpotent_index(a: &AdjacencyMatrix) -> Option<usize> {
    let d = a.dim();
    // boolean powers: reach[i][j] = exists walk of current length from i to j
    let mut reach = a.bits.clone();
    for k in 1..=d {
        if !reach.iter().any(|&b| b) {
            return Some(k);
        }
        let mut next = vec![false; d * d];
        for i in 0..d {
            for l in 0..d {
                if reach[i * d + l] {
                    for j in 0..d {
                        if a.has_edge(l, j) {
                            next[i * d + j] = true;
                        }
                    }
                }
            }
        }
        reach = next;
    }
    None
}

/// Length in edges of the longest directed path.
pub fn longest_path_edges(a: &AdjacencyMatrix) -> Result<usize> {
    let order = topological_order(a)?;
    let mut depth = vec![0usize; a.dim()];
    for &v in order.as_slice() {
        for w in 0..a.dim() {
            if a.has_edge(v, w) {
                depth[w] = depth[w].max(depth[v] + 1);
            }
        }
    }
    Ok(depth.into_iter().max().unwrap_or(0))
}

/// `{ j : A[j][i] = 1 }`.
pub fn parents_of(a: &AdjacencyMatrix, i: usize) -> Result<Vec<usize>> {
    if i >= a.dim() {
        return Err(Error::Argument(format!(
            "agent {i} out of range for {} agents",
            a.dim()
        )));
    }
    Ok((0..a.dim()).filter(|&j| a.has_edge(j, i)).collect())
}

/// Plain-text summary: acyclicity, edge count, nilpotent index, and either
/// a topological order or one detected cycle.
pub fn dag_report(a: &AdjacencyMatrix) -> String {
    let mut s = format!("acyclic = {}\nedges = {}\n", is_acyclic(a), a.edge_count());
    match nilpotent_index(a) {
        Some(k) => s.push_str(&format!("nilpotent_index = {k}\n")),
        None => s.push_str("nilpotent_index = none\n"),
    }
    let join = |v: &[usize], sep: &str| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(sep);
    match (topological_order(a), find_cycle(a)) {
        (Ok(order), _) => s.push_str(&format!("order = {}\n", join(order.as_slice(), " "))),
        (Err(_), Some(mut cycle)) => {
            cycle.push(cycle[0]);
            s.push_str(&format!("cycle = {}\n", join(&cycle, " -> ")));
        }
        (Err(_), None) => unreachable!("a graph without a topological order has a cycle"),
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn chain3() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    /// Figure-2 style graph: A -> B, A -> C, B -> D, C -> D, D -> E.
    fn fig2() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]).unwrap()
    }

    // Reference exp(B) trace: plain Taylor series carried to 60 terms.
    fn reference_exp_trace(b: &Array2<f64>) -> f64 {
        let d = b.nrows();
        let mut term = Array2::<f64>::eye(d);
        let mut total = d as f64;
        for m in 1..60 {
            term = term.dot(b) / m as f64;
            total += term.diag().sum();
        }
        total
    }

    #[test]
    fn matexp_trace_examples() {
        assert_eq!(matexp_trace(&Array2::zeros((3, 3))).unwrap(), 3.0);
        let swap = array![[0.0, 1.0], [1.0, 0.0]];
        let want = reference_exp_trace(&swap);
        assert_relative_eq!(want, 2.0 * 1f64.cosh(), epsilon = 1e-12);
        assert_relative_eq!(matexp_trace(&swap).unwrap(), 3.0861613, epsilon = 1e-6);
        assert_eq!(matexp_trace(&array![[0.0, 1.0], [0.0, 0.0]]).unwrap(), 2.0);
    }

    #[test]
    fn matexp_rejects_non_square() {
        let r = matexp_trace(&Array2::zeros((2, 3)));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn acyclicity_value_examples() {
        assert_eq!(acyclicity_value(&Array2::zeros((4, 4))).unwrap(), 0.0);
        let swap = array![[0.0, 1.0], [1.0, 0.0]];
        assert_relative_eq!(acyclicity_value(&swap).unwrap(), 1.0861613, epsilon = 1e-6);
        assert_eq!(acyclicity_value(&chain3().to_real()).unwrap(), 0.0);
    }

    #[test]
    fn acyclicity_grad_at_half_two_cycle() {
        let w = array![[0.0, 0.5], [0.5, 0.0]];
        let g = acyclicity_grad(&w).unwrap();
        // exp([[0,.25],[.25,0]]) has off-diagonal sinh(0.25)
        let want = 2.0 * 0.5 * 0.25f64.sinh();
        // the series is capped at 4d = 8 terms
        assert_relative_eq!(g[[0, 1]], want, epsilon = 1e-9);
        let h = 1e-5;
        let fd = (acyclicity_value(&array![[0.0, 0.5 + h], [0.5, 0.0]]).unwrap()
            - acyclicity_value(&array![[0.0, 0.5 - h], [0.5, 0.0]]).unwrap())
            / (2.0 * h);
        assert_relative_eq!(g[[1, 0]], fd, max_relative = 1e-6);
        assert_relative_eq!(g[[1, 0]], 0.252612, epsilon = 1e-6);
        assert_eq!(g[[0, 0]], 0.0);
        assert_eq!(acyclicity_grad(&Array2::zeros((3, 3))).unwrap(), Array2::<f64>::zeros((3, 3)));
    }

    #[test]
    fn depth_examples() {
        let c = chain3().to_real();
        assert_eq!(depth_value(&c, 2).unwrap(), 1.0);
        assert_eq!(depth_value(&c, 3).unwrap(), 0.0);
        assert_eq!(depth_value(&Array2::zeros((4, 4)), 3).unwrap(), 0.0);
        assert!(matches!(depth_value(&c, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn depth_grad_examples() {
        let w = array![[0.0, 0.3, 0.1], [0.2, 0.0, 0.9], [0.4, 0.5, 0.0]];
        assert_eq!(depth_grad(&w, 1).unwrap(), Array2::<f64>::ones((3, 3)));
        let g = depth_grad(&array![[0.0, 1.0], [0.0, 0.0]], 2).unwrap();
        assert_eq!(g[[0, 1]], 0.0);
        assert_eq!(g[[1, 0]], 2.0);
    }

    #[test]
    fn cycle_checks() {
        assert!(is_acyclic(&AdjacencyMatrix::empty(3)));
        let two = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(!is_acyclic(&two));
        assert_eq!(find_cycle(&two), Some(vec![0, 1]));
        let three = AdjacencyMatrix::from_edges(4, &[(3, 1), (1, 2), (2, 3)]).unwrap();
        let cyc = find_cycle(&three).unwrap();
        assert_eq!(cyc, vec![1, 2, 3]);
    }

    #[test]
    fn topological_order_examples() {
        let a = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(topological_order(&a).unwrap().as_slice(), &[0, 1]);
        assert_eq!(
            topological_order(&AdjacencyMatrix::empty(3)).unwrap().as_slice(),
            &[0, 1, 2]
        );
        let order = topological_order(&fig2()).unwrap();
        let pos = order.positions();
        assert!(pos[0] < pos[1] && pos[0] < pos[2]);
        assert!(pos[1] < pos[3] && pos[2] < pos[3]);
        assert!(pos[3] < pos[4]);
        let reversed = AdjacencyMatrix::from_edges(3, &[(2, 1), (1, 0)]).unwrap();
        assert_eq!(topological_order(&reversed).unwrap().as_slice(), &[2, 1, 0]);
        let two = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(matches!(topological_order(&two), Err(Error::CyclicGraph(_))));
    }

    #[test]
    fn nilpotent_and_longest_path() {
        assert_eq!(nilpotent_index(&chain3()), Some(3));
        assert_eq!(nilpotent_index(&AdjacencyMatrix::empty(4)), Some(1));
        let two = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(nilpotent_index(&two), None);
        assert_eq!(longest_path_edges(&AdjacencyMatrix::empty(3)).unwrap(), 0);
        assert_eq!(longest_path_edges(&chain3()).unwrap(), 2);
        assert!(longest_path_edges(&two).is_err());
    }

    #[test]
    fn parents() {
        assert_eq!(parents_of(&fig2(), 3).unwrap(), vec![1, 2]);
        assert!(parents_of(&AdjacencyMatrix::empty(3), 1).unwrap().is_empty());
        assert_eq!(parents_of(&chain3(), 2).unwrap(), vec![1]);
        assert!(matches!(parents_of(&chain3(), 3), Err(Error::Argument(_))));
    }

    #[test]
    fn parse_matrix_text() {
        let a = AdjacencyMatrix::parse("0 1\n0 0\n").unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert!(matches!(AdjacencyMatrix::parse("0 1\n0\n"), Err(Error::Format(_))));
        assert!(AdjacencyMatrix::parse("1 0\n0 0\n").is_err());
        assert_eq!(AdjacencyMatrix::parse(&fig2().to_string()).unwrap(), fig2());
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::new(array![[0.0, 0.4], [1.0, 0.0]]).is_ok());
        assert!(WeightMatrix::new(array![[0.1, 0.4], [1.0, 0.0]]).is_err());
        assert!(WeightMatrix::new(array![[0.0, 1.4], [1.0, 0.0]]).is_err());
    }
}
