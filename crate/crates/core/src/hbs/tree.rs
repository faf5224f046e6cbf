//! Binary cluster trees over contiguous index ranges.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub start: usize,
    pub end: usize,
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
}

impl TreeNode {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Balanced binary partition of `0..n`. Nodes are stored level by level, so a
/// parent always precedes its children and node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTree {
    n: usize,
    leaf_size: usize,
    nodes: Vec<TreeNode>,
}

/// Splits ranges in half until every leaf holds at most `leaf_size` indices.
///
/// `leaf_size` is clamped to `[1, n]`; leaves end up with sizes in
/// `(leaf_size / 2, leaf_size]` whenever at least one split happens.
pub fn build_tree(n: usize, leaf_size: usize) -> ClusterTree {
    let leaf_size = leaf_size.clamp(1, n.max(1));
    let mut nodes = vec![TreeNode {
        start: 0,
        end: n,
        level: 0,
        parent: None,
        children: None,
    }];
    let mut i = 0;
    while i < nodes.len() {
        let (start, end, level) = (nodes[i].start, nodes[i].end, nodes[i].level);
        if end - start > leaf_size {
            let mid = start + (end - start) / 2;
            let c = nodes.len();
            nodes[i].children = Some([c, c + 1]);
            for (s, e) in [(start, mid), (mid, end)] {
                nodes.push(TreeNode {
                    start: s,
                    end: e,
                    level: level + 1,
                    parent: Some(i),
                    children: None,
                });
            }
        }
        i += 1;
    }
    ClusterTree {
        n,
        leaf_size,
        nodes,
    }
}

impl ClusterTree {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|t| t.level).max().unwrap_or(0)
    }

    /// Leaf node ids, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut l: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect();
        l.sort_by_key(|&i| self.nodes[i].start);
        l
    }

    /// Largest leaf size.
    pub fn max_leaf(&self) -> usize {
        self.leaves().iter().map(|&i| self.nodes[i].len()).max().unwrap_or(0)
    }

    /// Same partition with every leaf larger than `max_leaf` split further.
    pub fn refined(&self, max_leaf: usize) -> ClusterTree {
        let max_leaf = max_leaf.max(1);
        if self.max_leaf() <= max_leaf {
            return self.clone();
        }
        // rebuild level order, splitting oversized leaves recursively
        let mut nodes: Vec<TreeNode> = Vec::new();
        // queue of (source node id or None for synthesized, start, end, level, parent)
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((Some(0usize), 0usize, self.n, 0usize, None));
        while let Some((src, start, end, level, parent)) = queue.pop_front() {
            let id = nodes.len();
            nodes.push(TreeNode {
                start,
                end,
                level,
                parent,
                children: None,
            });
            if let Some(p) = parent {
                match &mut nodes[p].children {
                    Some(ch) => ch[1] = id,
                    none => *none = Some([id, id]),
                }
            }
            let kids = src.and_then(|s| self.nodes[s].children);
            match kids {
                Some([a, b]) => {
                    for k in [a, b] {
                        let t = &self.nodes[k];
                        queue.push_back((Some(k), t.start, t.end, level + 1, Some(id)));
                    }
                }
                None if end - start > max_leaf => {
                    let mid = start + (end - start) / 2;
                    queue.push_back((None, start, mid, level + 1, Some(id)));
                    queue.push_back((None, mid, end, level + 1, Some(id)));
                }
                None => {}
            }
        }
        ClusterTree {
            n: self.n,
            leaf_size: self.leaf_size.min(max_leaf),
            nodes,
        }
    }

    /// Checks the structural invariants: children partition their parent into
    /// adjacent ranges, parents precede children.
    pub fn is_consistent(&self) -> bool {
        if self.nodes.is_empty() || self.nodes[0].range() != (0..self.n) {
            return false;
        }
        self.nodes.iter().enumerate().all(|(i, t)| match t.children {
            None => true,
            Some([a, b]) => {
                let (l, r) = (&self.nodes[a], &self.nodes[b]);
                a > i
                    && b > i
                    && l.parent == Some(i)
                    && r.parent == Some(i)
                    && l.start == t.start
                    && l.end == r.start
                    && r.end == t.end
                    && !l.is_empty()
                    && !r.is_empty()
            }
        })
    }
}
