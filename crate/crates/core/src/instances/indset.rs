use std::collections::BTreeSet;

use rand::Rng;

use super::{InstanceBuilder, InstanceError, MilpInstance, RngSeed};

/// Undirected simple graph as sorted adjacency sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub adjacency: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, adj)| adj.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].contains(&v)
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.adjacency[u].insert(v);
        self.adjacency[v].insert(u);
    }
}

/// Preferential-attachment graph: node `affinity` is joined to all earlier nodes,
/// then each later node attaches to `affinity` distinct existing nodes with
/// probability proportional to degree.
pub fn barabasi_albert(
    nodes: usize,
    affinity: usize,
    seed: RngSeed,
) -> Result<Graph, InstanceError> {
    if affinity == 0 || nodes <= affinity {
        return Err(InstanceError::InvalidParameter(format!(
            "need nodes > affinity >= 1 (got {nodes}, {affinity})"
        )));
    }
    let mut rng = seed.rng();
    let mut g = Graph {
        adjacency: vec![BTreeSet::new(); nodes],
    };
    for u in 0..affinity {
        g.add_edge(u, affinity);
    }
    for new in affinity + 1..nodes {
        let mut chosen = BTreeSet::new();
        while chosen.len() < affinity {
            let total: usize = (0..new)
                .filter(|u| !chosen.contains(u))
                .map(|u| g.adjacency[u].len())
                .sum();
            let mut target = rng.gen_range(0..total);
            for u in (0..new).filter(|u| !chosen.contains(u)) {
                let d = g.adjacency[u].len();
                if target < d {
                    chosen.insert(u);
                    break;
                }
                target -= d;
            }
        }
        for u in chosen {
            g.add_edge(u, new);
        }
    }
    Ok(g)
}

/// Greedy clique cover of the edge set. Each uncovered edge seeds a clique that is
/// grown with common neighbours in decreasing degree order (ties by index).
pub fn clique_edge_cover(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.n_nodes();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&u| (std::cmp::Reverse(g.adjacency[u].len()), u));
    let mut covered: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut cliques = Vec::new();
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.sort_by_key(|&(u, v)| {
        (
            std::cmp::Reverse(g.adjacency[u].len() + g.adjacency[v].len()),
            u,
            v,
        )
    });
    for (u, v) in edges {
        if covered.contains(&(u, v)) {
            continue;
        }
        let mut clique = vec![u, v];
        for &w in &by_degree {
            if w != u && w != v && clique.iter().all(|&c| g.has_edge(c, w)) {
                clique.push(w);
            }
        }
        clique.sort_unstable();
        for (a, &x) in clique.iter().enumerate() {
            for &y in &clique[a + 1..] {
                covered.insert((x, y));
            }
        }
        cliques.push(clique);
    }
    cliques
}

/// Maximum independent set on a preferential-attachment graph with clique rows.
pub fn generate_indset(
    nodes: usize,
    affinity: usize,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    let g = barabasi_albert(nodes, affinity, seed)?;
    indset_from_graph(&g, format!("indset-{nodes}-a{affinity}-s{}", seed.0))
}

pub fn indset_from_graph(g: &Graph, name: String) -> Result<MilpInstance, InstanceError> {
    let mut b = InstanceBuilder::new(name);
    for _ in 0..g.n_nodes() {
        b.add_binary(-1.0);
    }
    for clique in clique_edge_cover(g) {
        b.add_le(clique.into_iter().map(|v| (v, 1.0)), 1.0);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_one_edge() {
        let inst = generate_indset(2, 1, RngSeed(0)).unwrap();
        assert_eq!(inst.n_cons(), 1);
        assert_eq!(
            inst.rows.row(0).collect::<Vec<_>>(),
            vec![(0, 1.0), (1, 1.0)]
        );
        assert_eq!(inst.objective, vec![-1.0, -1.0]);
    }

    #[test]
    fn cover_hits_every_edge_with_cliques() {
        let g = barabasi_albert(60, 4, RngSeed(3)).unwrap();
        let cliques = clique_edge_cover(&g);
        for (u, v) in g.edges() {
            assert!(cliques.iter().any(|c| c.contains(&u) && c.contains(&v)));
        }
        for c in &cliques {
            for (a, &x) in c.iter().enumerate() {
                for &y in &c[a + 1..] {
                    assert!(g.has_edge(x, y));
                }
            }
        }
    }

    #[test]
    fn attachment_edge_count() {
        let g = barabasi_albert(30, 3, RngSeed(8)).unwrap();
        assert_eq!(g.edges().count(), 3 + (30 - 4) * 3);
    }
}
