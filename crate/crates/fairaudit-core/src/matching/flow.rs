//! Min-cost flow via successive shortest paths with Johnson potentials.
//!
//! Costs are integers; the caller scales real distances before building the
//! network. `augment_while_negative` pushes flow only along paths whose true
//! cost is negative, which is exactly what the max-weight matching reduction
//! in the full matcher needs.

use crate::error::{Error, Result};

const INF: i64 = i64::MAX / 4;

pub struct FlowNetwork {
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<i64>,
    cost: Vec<i64>,
}

impl FlowNetwork {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n_nodes],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Adds a directed edge and its residual twin; returns the edge id.
    /// The twin of edge `e` is `e ^ 1`.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        let id = self.to.len();
        self.to.push(to as u32);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[from].push(id as u32);
        self.to.push(from as u32);
        self.cap.push(0);
        self.cost.push(-cost);
        self.adj[to].push((id + 1) as u32);
        id
    }

    /// Residual capacity left on edge `id` (0 means fully used for unit edges).
    pub fn residual(&self, id: usize) -> i64 {
        self.cap[id]
    }

    /// Bellman-Ford pass to initialize potentials when negative costs exist.
    fn initial_potentials(&self, source: usize) -> Vec<i64> {
        let n = self.n_nodes();
        let mut phi = vec![INF; n];
        phi[source] = 0;
        // Edge count bounds the number of relaxation rounds; the graphs here
        // are shallow DAGs so this converges in a few passes.
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if phi[u] == INF {
                    continue;
                }
                for &eid in &self.adj[u] {
                    let e = eid as usize;
                    if self.cap[e] <= 0 {
                        continue;
                    }
                    let v = self.to[e] as usize;
                    let nd = phi[u] + self.cost[e];
                    if nd < phi[v] {
                        phi[v] = nd;
                        changed = true;
                    }
                }
            }
            if !changed {
                return phi;
            }
        }
        phi
    }

    /// Successive shortest paths from `source` to `sink`, augmenting while
    /// the true path cost stays negative. Returns (total flow, total cost).
    pub fn augment_while_negative(&mut self, source: usize, sink: usize) -> Result<(i64, i64)> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        let n = self.n_nodes();
        if source >= n || sink >= n || source == sink {
            return Err(Error::InternalFlowError("bad source/sink".into()));
        }
        let mut phi = self.initial_potentials(source);
        for p in &mut phi {
            if *p == INF {
                *p = 0; // unreachable nodes never join an augmenting path
            }
        }
        let mut total_flow = 0;
        let mut total_cost = 0;
        let mut dist = vec![INF; n];
        let mut parent_edge = vec![u32::MAX; n];

        loop {
            dist.fill(INF);
            parent_edge.fill(u32::MAX);
            dist[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, source as u32)));
            let mut sink_dist = INF;
            while let Some(Reverse((d, u))) = heap.pop() {
                let u = u as usize;
                if d > dist[u] {
                    continue;
                }
                if u == sink {
                    sink_dist = d;
                    break;
                }
                for &eid in &self.adj[u] {
                    let e = eid as usize;
                    if self.cap[e] <= 0 {
                        continue;
                    }
                    let v = self.to[e] as usize;
                    let rc = d + self.cost[e] + phi[u] - phi[v];
                    if rc < dist[v] {
                        dist[v] = rc;
                        parent_edge[v] = eid;
                        heap.push(Reverse((rc, v as u32)));
                    }
                }
            }
            if sink_dist == INF {
                break;
            }
            let true_cost = sink_dist + phi[sink] - phi[source];
            if true_cost >= 0 {
                break;
            }
            for v in 0..n {
                if dist[v] < INF {
                    phi[v] += dist[v].min(sink_dist);
                } else {
                    phi[v] += sink_dist;
                }
            }
            // bottleneck along the path
            let mut bottleneck = INF;
            let mut v = sink;
            while v != source {
                let e = parent_edge[v] as usize;
                if parent_edge[v] == u32::MAX {
                    return Err(Error::InternalFlowError("broken parent chain".into()));
                }
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1] as usize;
            }
            let mut v = sink;
            while v != source {
                let e = parent_edge[v] as usize;
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1] as usize;
            }
            total_flow += bottleneck;
            total_cost += bottleneck * true_cost;
        }
        Ok((total_flow, total_cost))
    }
}
