//! The ladder as an abstract DAG of `(level, column)` nodes, plus path analysis.
//!
//! Columns alternate encoder, decoder, encoder, ... Encoder columns run top-down with
//! stride-2 down-edges, decoder columns bottom-up with up-edges. Every non-bottom level has
//! lateral sum-skips between adjacent columns. The bottom level holds one node per pair,
//! in the encoder column, and turns straight into the decoder column one level up.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::ladder::config::level_letter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: usize,
    pub column: usize,
}

impl NodeId {
    pub fn new(level: usize, column: usize) -> Self {
        Self { level, column }
    }

    /// Parse a label like `B3`: level letter, then 1-based column.
    pub fn parse_label(label: &str) -> Result<Self> {
        let mut chars = label.trim().chars();
        let letter = chars.next().ok_or_else(|| Error::Topology("empty node label".into()))?;
        if !letter.is_ascii_uppercase() {
            return Err(Error::Topology(format!("bad level letter in `{label}`")));
        }
        let column: usize = chars
            .as_str()
            .parse()
            .map_err(|_| Error::Topology(format!("bad column in `{label}`")))?;
        if column == 0 {
            return Err(Error::Topology(format!("columns are 1-based in `{label}`")));
        }
        Ok(Self::new((letter as u8 - b'A') as usize, column - 1))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", level_letter(self.level), self.column + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    /// Stride-2 convolution inside an encoder column.
    Down,
    /// Stride-2 transposed convolution inside a decoder column.
    Up,
    /// From the bottom node of an encoder column up into the next decoder column.
    Turn,
    /// Sum-skip between adjacent columns at one level.
    Lateral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderTopology {
    pub levels: usize,
    pub pairs: usize,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
}

pub fn is_encoder(column: usize) -> bool {
    column.is_multiple_of(2)
}

impl LadderTopology {
    pub fn new(levels: usize, pairs: usize) -> Result<Self> {
        if !(2..=26).contains(&levels) || pairs < 1 {
            return Err(Error::Topology(format!("need levels in 2..=26 and pairs >= 1, got {levels}/{pairs}")));
        }
        let bottom = levels - 1;
        let columns = 2 * pairs;
        let mut nodes = Vec::new();
        for column in 0..columns {
            for level in 0..bottom {
                nodes.push(NodeId::new(level, column));
            }
            if is_encoder(column) {
                nodes.push(NodeId::new(bottom, column));
            }
        }
        let mut edges = Vec::new();
        for column in 0..columns {
            if is_encoder(column) {
                for level in 0..bottom {
                    edges.push(Edge { from: NodeId::new(level, column), to: NodeId::new(level + 1, column), kind: EdgeKind::Down });
                }
                edges.push(Edge {
                    from: NodeId::new(bottom, column),
                    to: NodeId::new(bottom - 1, column + 1),
                    kind: EdgeKind::Turn,
                });
            } else {
                for level in (0..bottom - 1).rev() {
                    edges.push(Edge { from: NodeId::new(level + 1, column), to: NodeId::new(level, column), kind: EdgeKind::Up });
                }
            }
            if column + 1 < columns {
                for level in 0..bottom {
                    edges.push(Edge {
                        from: NodeId::new(level, column),
                        to: NodeId::new(level, column + 1),
                        kind: EdgeKind::Lateral,
                    });
                }
            }
        }
        Ok(Self { levels, pairs, nodes, edges })
    }

    pub fn source(&self) -> NodeId {
        NodeId::new(0, 0)
    }

    pub fn sink(&self) -> NodeId {
        NodeId::new(0, 2 * self.pairs - 1)
    }

    pub fn dag(&self) -> Dag {
        Dag::new(self.nodes.clone(), self.edges.iter().map(|e| (e.from, e.to)).collect())
    }

    /// Distinct source-to-sink paths, by memoized traversal.
    pub fn count_paths(&self) -> Result<u128> {
        self.dag().count_paths(self.source(), self.sink())
    }

    /// Every source-to-sink path, by depth-first enumeration. Only for small ladders.
    pub fn enumerate_paths(&self) -> Result<Vec<Vec<NodeId>>> {
        self.dag().enumerate_paths(self.source(), self.sink())
    }

    /// Whether `path` starts at the source, ends at the sink and only follows edges.
    pub fn is_valid_path(&self, path: &[NodeId]) -> bool {
        let edges: BTreeSet<(NodeId, NodeId)> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        path.first() == Some(&self.source())
            && path.last() == Some(&self.sink())
            && path.windows(2).all(|w| edges.contains(&(w[0], w[1])))
    }

    /// One `level,col -> level,col` line per edge, 0-based indices.
    pub fn to_edge_list(&self) -> String {
        self.dag().to_edge_list()
    }
}

/// Parse `A1 -> B1 -> ...` into nodes.
pub fn parse_path(text: &str) -> Result<Vec<NodeId>> {
    text.split(&['→', '>'][..])
        .map(|s| s.trim().trim_end_matches('-').trim())
        .filter(|s| !s.is_empty())
        .map(NodeId::parse_label)
        .collect()
}

/// Plain directed graph used for path analysis and edge-list interchange.
#[derive(Clone, Debug, PartialEq)]
pub struct Dag {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl Dag {
    pub fn new(nodes: Vec<NodeId>, edges: Vec<(NodeId, NodeId)>) -> Self {
        Self { nodes, edges }
    }

    fn successors(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for &(a, b) in &self.edges {
            succ.entry(a).or_default().push(b);
            succ.entry(b).or_default();
        }
        succ
    }

    /// Kahn ordering; fails on a cycle.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let succ = self.successors();
        let mut indegree: BTreeMap<NodeId, usize> = succ.keys().map(|&n| (n, 0)).collect();
        for targets in succ.values() {
            for t in targets {
                *indegree.get_mut(t).expect("every target is a key") += 1;
            }
        }
        let mut ready: Vec<NodeId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for t in &succ[&n] {
                let d = indegree.get_mut(t).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.push(*t);
                }
            }
        }
        if order.len() != indegree.len() {
            let stuck = indegree.iter().find(|(_, &d)| d > 0).map(|(n, _)| *n).expect("cycle member");
            return Err(Error::Topology(format!("cycle detected through {stuck}")));
        }
        Ok(order)
    }

    pub fn count_paths(&self, source: NodeId, sink: NodeId) -> Result<u128> {
        let order = self.topological_order()?;
        let succ = self.successors();
        let mut ways: BTreeMap<NodeId, u128> = BTreeMap::new();
        for n in order.iter().rev() {
            let w = if *n == sink {
                1
            } else {
                succ[n].iter().map(|t| ways[t]).try_fold(0u128, u128::checked_add)
                    .ok_or_else(|| Error::Topology("path count overflows u128".into()))?
            };
            ways.insert(*n, w);
        }
        ways.get(&source)
            .copied()
            .ok_or_else(|| Error::Topology(format!("source {source} not in graph")))
    }

    pub fn enumerate_paths(&self, source: NodeId, sink: NodeId) -> Result<Vec<Vec<NodeId>>> {
        self.topological_order()?;
        let succ = self.successors();
        let mut out = Vec::new();
        let mut stack = vec![source];
        fn walk(
            succ: &BTreeMap<NodeId, Vec<NodeId>>,
            sink: NodeId,
            stack: &mut Vec<NodeId>,
            out: &mut Vec<Vec<NodeId>>,
        ) {
            let here = *stack.last().expect("non-empty");
            if here == sink {
                out.push(stack.clone());
                return;
            }
            for &next in succ.get(&here).map(Vec::as_slice).unwrap_or(&[]) {
                stack.push(next);
                walk(succ, sink, stack, out);
                stack.pop();
            }
        }
        walk(&succ, sink, &mut stack, &mut out);
        Ok(out)
    }

    pub fn to_edge_list(&self) -> String {
        self.edges
            .iter()
            .map(|(a, b)| format!("{},{} -> {},{}\n", a.level, a.column, b.level, b.column))
            .collect()
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let parse_node = |s: &str, line: usize| -> Result<NodeId> {
            let (l, c) = s
                .trim()
                .split_once(',')
                .ok_or_else(|| Error::Topology(format!("line {line}: expected `level,col`")))?;
            let num = |v: &str| {
                v.trim().parse::<usize>().map_err(|_| Error::Topology(format!("line {line}: bad index `{v}`")))
            };
            Ok(NodeId::new(num(l)?, num(c)?))
        };
        let mut nodes = BTreeSet::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (a, b) = line
                .split_once("->")
                .ok_or_else(|| Error::Topology(format!("line {}: missing `->`", i + 1)))?;
            let (a, b) = (parse_node(a, i + 1)?, parse_node(b, i + 1)?);
            nodes.insert(a);
            nodes.insert(b);
            edges.push((a, b));
        }
        Ok(Self { nodes: nodes.into_iter().collect(), edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_counts() {
        assert_eq!(LadderTopology::new(2, 1).unwrap().count_paths().unwrap(), 2);
        assert_eq!(LadderTopology::new(5, 1).unwrap().count_paths().unwrap(), 5);
    }

    #[test]
    fn labels_roundtrip() {
        let n = NodeId::parse_label("D2").unwrap();
        assert_eq!(n, NodeId::new(3, 1));
        assert_eq!(n.to_string(), "D2");
        assert!(NodeId::parse_label("a1").is_err());
        assert!(NodeId::parse_label("A0").is_err());
    }

    #[test]
    fn structure_of_two_pair_ladder() {
        let t = LadderTopology::new(5, 2).unwrap();
        // 4 non-bottom levels × 4 columns + 2 bottom nodes
        assert_eq!(t.nodes.len(), 18);
        let laterals = t.edges.iter().filter(|e| e.kind == EdgeKind::Lateral).count();
        assert_eq!(laterals, 4 * 3);
        let turns: Vec<_> = t.edges.iter().filter(|e| e.kind == EdgeKind::Turn).map(|e| (e.from.to_string(), e.to.to_string())).collect();
        assert_eq!(turns, vec![("E1".into(), "D2".into()), ("E3".into(), "D4".into())]);
        let order = t.dag().topological_order().unwrap();
        assert_eq!(order.len(), 18);
    }

    #[test]
    fn cycle_is_rejected() {
        let a = NodeId::new(0, 0);
        let b = NodeId::new(1, 0);
        let dag = Dag::new(vec![a, b], vec![(a, b), (b, a)]);
        assert!(matches!(dag.count_paths(a, b), Err(Error::Topology(_))));
        assert!(dag.enumerate_paths(a, b).is_err());
    }

    #[test]
    fn edge_list_roundtrip() {
        let t = LadderTopology::new(3, 2).unwrap();
        let text = t.to_edge_list();
        assert!(text.lines().all(|l| l.contains(" -> ")));
        let back = Dag::parse_edge_list(&text).unwrap();
        assert_eq!(back.edges, t.dag().edges);
        assert_eq!(back.count_paths(t.source(), t.sink()).unwrap(), t.count_paths().unwrap());
    }

    #[test]
    fn parse_path_accepts_arrows() {
        let p = parse_path("A1 → B1 -> A2").unwrap();
        assert_eq!(p.len(), 3);
        assert!(LadderTopology::new(2, 1).unwrap().is_valid_path(&p));
        assert!(!LadderTopology::new(2, 1).unwrap().is_valid_path(&p[1..]));
    }
}
