use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::EngineError;

pub const DEFAULT_RETRIES: u32 = 3;

fn default_retries() -> u32 {
    DEFAULT_RETRIES
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDef {
    pub id: String,
    pub topic: String,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

/// A DAG of task nodes. Serialized as
/// `{"id":..,"nodes":[{"id":..,"topic":..,"retries":..}],"edges":[[from,to],..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDefinition {
    pub id: String,
    pub nodes: Vec<NodeDef>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

impl WorkflowDefinition {
    pub fn parse(json: &str) -> Result<Self, EngineError> {
        serde_json::from_str(json).map_err(|e| EngineError::InvalidDefinition(e.to_string()))
    }

    pub fn node(&self, id: &str) -> Option<&NodeDef> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn predecessors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(_, to)| to == node).map(|(from, _)| from.as_str())
    }

    pub fn successors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(from, _)| from == node).map(|(_, to)| to.as_str())
    }

    pub fn roots(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).filter(|id| self.predecessors(id).next().is_none()).collect()
    }

    /// Every node that can reach `node`.
    pub fn ancestors(&self, node: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&str> = self.predecessors(node).collect();
        while let Some(n) = stack.pop() {
            if out.insert(n.to_string()) {
                stack.extend(self.predecessors(n));
            }
        }
        out
    }

    /// Checks all structural invariants and returns a topological order
    /// (Kahn's algorithm, ties by declaration order).
    pub fn validate(&self) -> Result<Vec<String>, EngineError> {
        if self.id.trim().is_empty() {
            return Err(EngineError::InvalidDefinition("workflow id is empty".into()));
        }
        if self.nodes.is_empty() {
            return Err(EngineError::InvalidDefinition("workflow has no nodes".into()));
        }
        let mut position: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() || n.topic.trim().is_empty() {
                return Err(EngineError::InvalidDefinition(format!("node {:?} needs an id and a topic", n.id)));
            }
            if position.insert(&n.id, i).is_some() {
                return Err(EngineError::DuplicateNode(n.id.clone()));
            }
        }
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut seen_edges = BTreeSet::new();
        for (from, to) in &self.edges {
            let (Some(&f), Some(&t)) = (position.get(from.as_str()), position.get(to.as_str())) else {
                return Err(EngineError::DanglingEdge { from: from.clone(), to: to.clone() });
            };
            if seen_edges.insert((f, t)) {
                out_edges[f].push(t);
                indegree[t] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        if ready.is_empty() {
            return Err(EngineError::CyclicGraph(self.find_cycle(&out_edges, &indegree)));
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            order.push(self.nodes[i].id.clone());
            for &t in &out_edges[i] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.insert(t);
                }
            }
        }
        if order.len() < self.nodes.len() {
            return Err(EngineError::CyclicGraph(self.find_cycle(&out_edges, &indegree)));
        }
        Ok(order)
    }

    /// Walks backwards among nodes left with positive in-degree; each has an
    /// unprocessed predecessor, so the walk must revisit a node, closing a
    /// cycle.
    fn find_cycle(&self, out_edges: &[Vec<usize>], indegree: &[usize]) -> Vec<String> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); indegree.len()];
        for (f, targets) in out_edges.iter().enumerate() {
            for &t in targets {
                preds[t].push(f);
            }
        }
        let Some(start) = (0..indegree.len()).find(|&i| indegree[i] > 0) else { return Vec::new() };
        let mut path: Vec<usize> = Vec::new();
        let mut index_in_path: BTreeMap<usize, usize> = BTreeMap::new();
        let mut current = start;
        loop {
            if let Some(&at) = index_in_path.get(&current) {
                return path[at..].iter().rev().map(|&i| self.nodes[i].id.clone()).collect();
            }
            index_in_path.insert(current, path.len());
            path.push(current);
            match preds[current].iter().find(|&&p| indegree[p] > 0) {
                Some(&p) => current = p,
                None => return path.iter().rev().map(|&i| self.nodes[i].id.clone()).collect(),
            }
        }
    }
}
