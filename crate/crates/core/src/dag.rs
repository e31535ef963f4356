//! Binary adjacency matrices and cycle handling.

use nalgebra::DMatrix;

/// Dense boolean adjacency; `edges[r * n_cols + c]` means `r -> c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n_rows: usize,
    n_cols: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            edges: vec![false; n_rows * n_cols],
        }
    }

    /// Keeps entries with `|w| > threshold`.
    pub fn from_weights(w: &DMatrix<f64>, threshold: f64) -> Self {
        let mut adj = Self::empty(w.nrows(), w.ncols());
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                adj.edges[r * w.ncols() + c] = w[(r, c)].abs() > threshold;
            }
        }
        adj
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = Self::empty(n, n);
        for &(r, c) in edges {
            adj.set(r, c, true);
        }
        adj
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn has_edge(&self, r: usize, c: usize) -> bool {
        self.edges[r * self.n_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.edges[r * self.n_cols + c] = on;
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows)
            .flat_map(move |r| (0..self.n_cols).map(move |c| (r, c)))
            .filter(move |&(r, c)| self.has_edge(r, c))
    }

    /// Kahn's algorithm; `None` when a cycle exists. Square matrices only.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        assert_eq!(
            self.n_rows, self.n_cols,
            "topological order needs a square adjacency"
        );
        let n = self.n_rows;
        let mut indeg: Vec<usize> = (0..n)
            .map(|c| (0..n).filter(|&r| self.has_edge(r, c)).count())
            .collect();
        let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for c in (0..n).rev() {
                if self.has_edge(v, c) {
                    indeg[c] -= 1;
                    if indeg[c] == 0 {
                        ready.push(c);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Edges of some directed cycle, if any. Self-loops count.
    pub fn find_cycle(&self) -> Option<Vec<(usize, usize)>> {
        let n = self.n_rows;
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next == n {
                    state[v] = 2;
                    stack.pop();
                    continue;
                }
                let c = *next;
                *next += 1;
                if !self.has_edge(v, c) {
                    continue;
                }
                match state[c] {
                    0 => {
                        parent[c] = v;
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => {
                        let mut cycle = vec![(v, c)];
                        let mut x = v;
                        while x != c {
                            cycle.push((parent[x], x));
                            x = parent[x];
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            }
        }
        None
    }
}

/// Removes the smallest-magnitude edge on some cycle of the thresholded
/// graph until it is acyclic. Removed entries are set to zero in `w` and
/// returned.
pub fn break_cycles(w: &mut DMatrix<f64>, threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut removed = Vec::new();
    loop {
        let adj = Adjacency::from_weights(w, threshold);
        let Some(cycle) = adj.find_cycle() else {
            return removed;
        };
        let &(r, c) = cycle
            .iter()
            .min_by(|a, b| w[**a].abs().total_cmp(&w[**b].abs()))
            .expect("a cycle has at least one edge");
        removed.push((r, c, w[(r, c)]));
        w[(r, c)] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_is_acyclic() {
        let adj = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(adj.topological_order(), Some(vec![0, 1, 2]));
        assert!(adj.find_cycle().is_none());
    }

    #[test]
    fn detects_three_cycle() {
        let adj = Adjacency::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(!adj.is_acyclic());
        let cyc = adj.find_cycle().unwrap();
        assert_eq!(cyc.len(), 3);
        for (r, c) in cyc {
            assert!(adj.has_edge(r, c));
        }
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let adj = Adjacency::from_edges(2, &[(1, 1)]);
        assert_eq!(adj.find_cycle(), Some(vec![(1, 1)]));
    }

    #[test]
    fn break_cycles_drops_weakest_edge() {
        let mut w = DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.0, 0.0, 0.0, 0.5, 0.3, 0.0, 0.0]);
        let removed = break_cycles(&mut w, 0.2);
        assert_eq!(removed, vec![(2, 0, 0.3)]);
        assert!(Adjacency::from_weights(&w, 0.2).is_acyclic());
    }

    #[test]
    fn threshold_is_strict() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.2, -0.2000001, 0.0]);
        let adj = Adjacency::from_weights(&w, 0.2);
        assert!(!adj.has_edge(0, 1));
        assert!(adj.has_edge(1, 0));
    }
}
