use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::stats::{are_dissimilar, ClassStats};
use crate::distance::Distance;
use crate::error::{Error, Result};

/// Undirected graph over class ids; an edge joins two similar classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimGraph {
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

/// JSON form: `{"vertices":[...],"edges":[[i,j],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimGraphJson {
    pub vertices: Vec<u32>,
    pub edges: Vec<[u32; 2]>,
}

impl SimGraph {
    pub fn with_vertices(vertices: impl IntoIterator<Item = u32>) -> Self {
        SimGraph { adjacency: vertices.into_iter().map(|v| (v, BTreeSet::new())).collect() }
    }

    pub fn add_vertex(&mut self, v: u32) {
        self.adjacency.entry(v).or_default();
    }

    pub fn add_edge(&mut self, a: u32, b: u32) -> Result<()> {
        if a == b {
            return Err(Error::arg(format!("self-loop on {a}")));
        }
        if !self.adjacency.contains_key(&a) || !self.adjacency.contains_key(&b) {
            return Err(Error::arg(format!("edge ({a}, {b}) references an unknown vertex")));
        }
        self.adjacency.get_mut(&a).unwrap().insert(b);
        self.adjacency.get_mut(&b).unwrap().insert(a);
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn neighbors(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adjacency.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).max().unwrap_or(0)
    }

    /// Edges with the smaller id first, in ascending order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.adjacency.iter().flat_map(|(&a, n)| n.iter().filter(move |&&b| a < b).map(move |&b| (a, b))).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Vertices by descending degree, ties by ascending id.
    pub fn degree_order(&self) -> Vec<u32> {
        let mut order: Vec<u32> = self.vertices().collect();
        order.sort_by(|a, b| self.degree(*b).cmp(&self.degree(*a)).then(a.cmp(b)));
        order
    }

    pub fn to_json(&self) -> SimGraphJson {
        SimGraphJson {
            vertices: self.vertices().collect(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn from_json(json: &SimGraphJson) -> Result<Self> {
        let mut g = SimGraph::with_vertices(json.vertices.iter().copied());
        for &[a, b] in &json.edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }
}

/// One vertex per class; an edge wherever the pair fails the dissimilarity test.
pub fn build_simgraph(stats: &[ClassStats], metric: Distance) -> Result<SimGraph> {
    let mut g = SimGraph::default();
    for s in stats {
        if g.adjacency.contains_key(&s.class_id) {
            return Err(Error::arg(format!("duplicate class id {} in SimGraph input", s.class_id)));
        }
        g.add_vertex(s.class_id);
    }
    for (i, a) in stats.iter().enumerate() {
        for b in &stats[i + 1..] {
            if !are_dissimilar(a, b, metric)? {
                g.add_edge(a.class_id, b.class_id)?;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub color_of: BTreeMap<u32, usize>,
    pub num_colors: usize,
}

impl Coloring {
    pub fn is_proper(&self, g: &SimGraph) -> bool {
        g.edges().iter().all(|(a, b)| self.color_of.get(a) != self.color_of.get(b))
            && g.vertices().all(|v| self.color_of.get(&v).is_some_and(|&c| c < self.num_colors))
    }

    /// Vertices of each color, colors ascending.
    pub fn classes(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_colors];
        for (&v, &c) in &self.color_of {
            out[c].push(v);
        }
        out
    }
}

/// Greedy coloring in Welsh-Powell order: each vertex takes the smallest
/// color unused by its already-colored neighbors.
pub fn welsh_powell(g: &SimGraph) -> Coloring {
    let mut color_of: BTreeMap<u32, usize> = BTreeMap::new();
    let mut num_colors = 0;
    let mut taken: Vec<bool> = Vec::new();
    for v in g.degree_order() {
        taken.clear();
        taken.resize(num_colors + 1, false);
        for u in g.neighbors(v) {
            if let Some(&c) = color_of.get(&u) {
                taken[c] = true;
            }
        }
        let c = taken.iter().position(|t| !t).unwrap_or(num_colors);
        num_colors = num_colors.max(c + 1);
        color_of.insert(v, c);
    }
    Coloring { color_of, num_colors }
}

/// `max_i min(deg(v'_i) + 1, i)` over the degree-descending order, 1-based.
pub fn welsh_powell_bound(g: &SimGraph) -> Result<usize> {
    if g.is_empty() {
        return Err(Error::arg("Welsh-Powell bound is undefined for an empty graph"));
    }
    Ok(g.degree_order().iter().enumerate().map(|(i, &v)| (g.degree(v) + 1).min(i + 1)).max().unwrap())
}
