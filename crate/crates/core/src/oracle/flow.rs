//! Primal-dual min-cost flow with integer capacities and costs: Dijkstra on
//! reduced costs to update potentials, then Dinic blocking flows on the
//! zero-reduced-cost subgraph.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

pub(crate) const INF_CAP: i64 = i64::MAX / 4;

pub(crate) struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i64>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    /// Add u → v and its residual twin; returns the forward arc id.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> usize {
        let id = self.to.len();
        self.to.extend([v, u]);
        self.cap.extend([cap, 0]);
        self.cost.extend([cost, -cost]);
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow currently on forward arc `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.cap[id + 1]
    }

    /// Nodes reachable from `s` through arcs with residual capacity.
    pub fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let v = self.to[a];
                if self.cap[a] > 0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn dijkstra(&self, s: usize, pot: &[i64]) -> Vec<i64> {
        let n = self.adj.len();
        let mut dist = vec![i64::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[s] = 0;
        heap.push(Reverse((0i64, s)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &a in &self.adj[u] {
                if self.cap[a] <= 0 {
                    continue;
                }
                let v = self.to[a];
                let nd = d + self.cost[a] + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        dist
    }

    fn admissible(&self, a: usize, u: usize, pot: &[i64]) -> bool {
        self.cap[a] > 0 && self.cost[a] + pot[u] - pot[self.to[a]] == 0
    }

    fn levels(&self, s: usize, t: usize, pot: &[i64]) -> Option<Vec<u32>> {
        let mut level = vec![u32::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let v = self.to[a];
                if level[v] == u32::MAX && self.admissible(a, u, pot) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] != u32::MAX).then_some(level)
    }

    fn augment(&mut self, u: usize, t: usize, limit: i64, level: &[u32], iter: &mut [usize], pot: &[i64]) -> i64 {
        if u == t {
            return limit;
        }
        while iter[u] < self.adj[u].len() {
            let a = self.adj[u][iter[u]];
            let v = self.to[a];
            if level[v] == level[u] + 1 && self.admissible(a, u, pot) {
                let pushed = self.augment(v, t, limit.min(self.cap[a]), level, iter, pot);
                if pushed > 0 {
                    self.cap[a] -= pushed;
                    self.cap[a ^ 1] += pushed;
                    return pushed;
                }
            }
            iter[u] += 1;
        }
        0
    }

    /// Send up to `demand` units from `s` to `t` at minimum cost.
    /// Returns (flow sent, total cost).
    pub fn min_cost_flow(&mut self, s: usize, t: usize, demand: i64) -> (i64, i64) {
        let n = self.adj.len();
        let mut pot = vec![0i64; n];
        let mut flow = 0i64;
        let mut cost = 0i64;
        while flow < demand {
            let dist = self.dijkstra(s, &pot);
            if dist[t] == i64::MAX {
                break;
            }
            let dt = dist[t];
            for v in 0..n {
                pot[v] += dist[v].min(dt);
            }
            while flow < demand {
                let Some(level) = self.levels(s, t, &pot) else { break };
                let mut iter = vec![0usize; n];
                loop {
                    let pushed = self.augment(s, t, demand - flow, &level, &mut iter, &pot);
                    if pushed == 0 {
                        break;
                    }
                    flow += pushed;
                    cost += pushed * (pot[t] - pot[s]);
                    if flow >= demand {
                        break;
                    }
                }
            }
        }
        (flow, cost)
    }
}
