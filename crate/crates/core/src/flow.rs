//! Min-cost transportation by successive shortest paths.
//!
//! Costs are small nonnegative integers, so shortest-path distances and node
//! potentials stay exact; only the shipped amounts are floating point.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

/// Residual amounts at or below this are treated as empty.
const CAP_EPS: f64 = 1e-15;

struct Edge {
    to: usize,
    cap: f64,
    cost: i64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: i64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }
}

/// Optimal plan for shipping `supply` to `demand` at unit costs `cost[i][j]`.
///
/// Returns the flow matrix and its integer-cost objective. The total shipped
/// is `min(Σ supply, Σ demand)`.
pub(crate) fn min_cost_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<i64>],
) -> (DMatrix<f64>, f64) {
    let (m, k) = (supply.len(), demand.len());
    let source = m + k;
    let sink = source + 1;
    let mut g = Graph::new(m + k + 2);
    for (i, &s) in supply.iter().enumerate() {
        g.add_edge(source, i, s, 0);
    }
    for (j, &d) in demand.iter().enumerate() {
        g.add_edge(m + j, sink, d, 0);
    }
    let mut cell = vec![vec![0usize; k]; m];
    for i in 0..m {
        for j in 0..k {
            debug_assert!(cost[i][j] >= 0);
            cell[i][j] = g.add_edge(i, m + j, f64::INFINITY, cost[i][j]);
        }
    }

    let nodes = g.adj.len();
    // all original costs are nonnegative, so zero potentials are valid
    let mut potential = vec![0i64; nodes];
    let mut total = 0.0;
    loop {
        let mut dist = vec![i64::MAX; nodes];
        let mut prev_edge = vec![usize::MAX; nodes];
        dist[source] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0i64, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &g.adj[u] {
                let edge = &g.edges[e];
                if edge.cap <= CAP_EPS {
                    continue;
                }
                let nd = d + edge.cost + potential[u] - potential[edge.to];
                if nd < dist[edge.to] {
                    dist[edge.to] = nd;
                    prev_edge[edge.to] = e;
                    heap.push(Reverse((nd, edge.to)));
                }
            }
        }
        if dist[sink] == i64::MAX {
            break;
        }
        for v in 0..nodes {
            if dist[v] != i64::MAX {
                potential[v] += dist[v];
            }
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let e = prev_edge[v];
            push = push.min(g.edges[e].cap);
            v = g.edges[e ^ 1].to;
        }
        let mut v = sink;
        let mut path_cost = 0i64;
        while v != source {
            let e = prev_edge[v];
            g.edges[e].cap -= push;
            g.edges[e ^ 1].cap += push;
            path_cost += g.edges[e].cost;
            v = g.edges[e ^ 1].to;
        }
        total += push * path_cost as f64;
    }

    let flows = DMatrix::from_fn(m, k, |i, j| g.edges[cell[i][j] ^ 1].cap);
    (flows, total)
}
