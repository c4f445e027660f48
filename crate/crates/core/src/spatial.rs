//! R-tree over tile rectangles.
//!
//! Tiles of an acquired mosaic overlap and may be sheared, so the tiles under
//! a viewport cannot be computed from the grid indices alone. The tree is
//! bulk loaded with sort-tile-recursive packing and also supports Guttman
//! insertion with quadratic split.

use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ENTRIES: usize = 16;
pub const DEFAULT_MIN_ENTRIES: usize = 6;

/// Half-open axis-aligned rectangle `[x0, x1) x [y0, y1)` in slide pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn try_new(x0: i64, y0: i64, x1: i64, y1: i64) -> Option<Self> {
        (x0 < x1 && y0 < y1).then_some(Rect { x0, y0, x1, y1 })
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    fn area(&self) -> i128 {
        self.width() as i128 * self.height() as i128
    }

    /// Half-open overlap test: rectangles that only touch along an edge do
    /// not intersect.
    #[inline]
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        Rect::try_new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    /// Grows the rectangle by `dx` / `dy` on every side.
    pub fn inflate(&self, dx: i64, dy: i64) -> Rect {
        Rect {
            x0: self.x0 - dx,
            y0: self.y0 - dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    fn centre2(&self) -> (i64, i64) {
        (self.x0 + self.x1, self.y0 + self.y1)
    }

    fn enlargement(&self, other: &Rect) -> i128 {
        self.union(other).area() - self.area()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<(Rect, u64)>),
    Inner(Vec<(Rect, usize)>),
}

impl Node {
    fn len(&self) -> usize {
        match self {
            Node::Leaf(e) => e.len(),
            Node::Inner(e) => e.len(),
        }
    }

    fn bounds(&self) -> Rect {
        fn fold<T>(e: &[(Rect, T)]) -> Rect {
            e.iter()
                .map(|x| x.0)
                .reduce(|a, b| a.union(&b))
                .expect("non-empty node")
        }
        match self {
            Node::Leaf(e) => fold(e),
            Node::Inner(e) => fold(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RTree {
    nodes: Vec<Node>,
    root: Option<usize>,
    /// Number of levels; leaves are at depth `height - 1`.
    height: usize,
    len: usize,
    max_entries: usize,
    min_entries: usize,
}

impl Default for RTree {
    fn default() -> Self {
        RTree::new()
    }
}

impl RTree {
    pub fn new() -> Self {
        RTree::with_fanout(DEFAULT_MIN_ENTRIES, DEFAULT_MAX_ENTRIES)
    }

    pub fn with_fanout(min_entries: usize, max_entries: usize) -> Self {
        assert!(
            min_entries >= 1 && 2 * min_entries <= max_entries,
            "bad fanout"
        );
        RTree {
            nodes: Vec::new(),
            root: None,
            height: 0,
            len: 0,
            max_entries,
            min_entries,
        }
    }

    /// Bulk loads `entries` with sort-tile-recursive packing.
    pub fn build(entries: Vec<(Rect, u64)>) -> Self {
        let mut tree = RTree::new();
        tree.bulk_load(entries);
        tree
    }

    fn bulk_load(&mut self, entries: Vec<(Rect, u64)>) {
        debug_assert!(entries.iter().all(|e| e.0.is_valid()));
        self.nodes.clear();
        self.len = entries.len();
        if entries.is_empty() {
            self.root = None;
            self.height = 0;
            return;
        }
        let mut level: Vec<(Rect, usize)> = str_pack(entries, self.max_entries)
            .into_iter()
            .map(|group| self.push(Node::Leaf(group)))
            .collect();
        self.height = 1;
        while level.len() > 1 {
            level = str_pack(level, self.max_entries)
                .into_iter()
                .map(|group| self.push(Node::Inner(group)))
                .collect();
            self.height += 1;
        }
        self.root = Some(level[0].1);
    }

    fn push(&mut self, node: Node) -> (Rect, usize) {
        let b = node.bounds();
        self.nodes.push(node);
        (b, self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bounds(&self) -> Option<Rect> {
        self.root.map(|r| self.nodes[r].bounds())
    }

    /// Ids of every entry whose rectangle intersects `query`, in no
    /// particular order.
    pub fn query_intersect(&self, query: &Rect) -> Vec<u64> {
        let mut out = Vec::new();
        let Some(root) = self.root else {
            return out;
        };
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                Node::Leaf(e) => {
                    out.extend(e.iter().filter(|x| x.0.intersects(query)).map(|x| x.1))
                }
                Node::Inner(e) => {
                    stack.extend(e.iter().filter(|x| x.0.intersects(query)).map(|x| x.1))
                }
            }
        }
        out
    }

    /// Inserts one entry, splitting overflowing nodes quadratically.
    pub fn insert(&mut self, rect: Rect, id: u64) {
        debug_assert!(rect.is_valid());
        self.len += 1;
        let Some(root) = self.root else {
            let (_, idx) = self.push(Node::Leaf(vec![(rect, id)]));
            self.root = Some(idx);
            self.height = 1;
            return;
        };
        if let Some(sibling) = self.insert_rec(root, rect, id, self.height - 1) {
            let old = (self.nodes[root].bounds(), root);
            let (_, new_root) = self.push(Node::Inner(vec![old, sibling]));
            self.root = Some(new_root);
            self.height += 1;
        }
    }

    fn insert_rec(
        &mut self,
        node: usize,
        rect: Rect,
        id: u64,
        depth: usize,
    ) -> Option<(Rect, usize)> {
        if depth == 0 {
            let Node::Leaf(entries) = &mut self.nodes[node] else {
                unreachable!("leaf expected at depth 0")
            };
            entries.push((rect, id));
            if entries.len() <= self.max_entries {
                return None;
            }
            let all = std::mem::take(entries);
            let (a, b) = quadratic_split(all, self.min_entries);
            self.nodes[node] = Node::Leaf(a);
            return Some(self.push(Node::Leaf(b)));
        }
        let child_slot = {
            let Node::Inner(entries) = &self.nodes[node] else {
                unreachable!("inner node expected above leaves")
            };
            entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| (e.0.enlargement(&rect), e.0.area()))
                .map(|(i, _)| i)
                .expect("inner node is non-empty")
        };
        let child = match &self.nodes[node] {
            Node::Inner(e) => e[child_slot].1,
            Node::Leaf(_) => unreachable!(),
        };
        let split = self.insert_rec(child, rect, id, depth - 1);
        let child_bounds = self.nodes[child].bounds();
        let Node::Inner(entries) = &mut self.nodes[node] else {
            unreachable!()
        };
        entries[child_slot].0 = child_bounds;
        let sibling = split?;
        entries.push(sibling);
        if entries.len() <= self.max_entries {
            return None;
        }
        let all = std::mem::take(entries);
        let (a, b) = quadratic_split(all, self.min_entries);
        self.nodes[node] = Node::Inner(a);
        Some(self.push(Node::Inner(b)))
    }

    /// Checks the structural invariants: fanout bounds on non-root nodes,
    /// bounding rectangles that contain their children, leaves at equal depth.
    pub fn check_invariants(&self) -> Result<(), String> {
        let Some(root) = self.root else {
            return if self.len == 0 {
                Ok(())
            } else {
                Err("empty tree with non-zero length".into())
            };
        };
        let mut count = 0usize;
        let mut stack = vec![(root, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            let node = &self.nodes[n];
            if n != root && (node.len() < self.min_entries || node.len() > self.max_entries) {
                return Err(format!("node {n} has {} entries", node.len()));
            }
            if node.len() == 0 {
                return Err(format!("node {n} is empty"));
            }
            match node {
                Node::Leaf(e) => {
                    if depth != self.height - 1 {
                        return Err(format!("leaf {n} at depth {depth}, height {}", self.height));
                    }
                    count += e.len();
                }
                Node::Inner(e) => {
                    for (r, child) in e {
                        if *r != self.nodes[*child].bounds() {
                            return Err(format!("stale bounds for child {child}"));
                        }
                        stack.push((*child, depth + 1));
                    }
                }
            }
        }
        if count != self.len {
            return Err(format!("{count} leaf entries, expected {}", self.len));
        }
        Ok(())
    }
}

/// Groups `items` into nodes of at most `max` entries: items are sorted by
/// centre x, cut into vertical slices, each slice sorted by centre y and cut
/// into nodes. Node sizes differ by at most one so every node holds at least
/// `floor(n / ceil(n / max))` items.
fn str_pack<T>(mut items: Vec<(Rect, T)>, max: usize) -> Vec<Vec<(Rect, T)>> {
    let n = items.len();
    let nodes = n.div_ceil(max);
    if nodes <= 1 {
        return vec![items];
    }
    let sizes: Vec<usize> = (0..nodes)
        .map(|i| n / nodes + usize::from(i < n % nodes))
        .collect();
    let slices = (nodes as f64).sqrt().ceil() as usize;
    items.sort_by_key(|e| e.0.centre2().0);

    let mut out = Vec::with_capacity(nodes);
    let mut rest = items.into_iter();
    let mut node_idx = 0;
    for s in 0..slices {
        let in_slice = nodes / slices + usize::from(s < nodes % slices);
        let slice_sizes = &sizes[node_idx..node_idx + in_slice];
        let total: usize = slice_sizes.iter().sum();
        let mut slice: Vec<(Rect, T)> = rest.by_ref().take(total).collect();
        slice.sort_by_key(|e| e.0.centre2().1);
        let mut it = slice.into_iter();
        for &size in slice_sizes {
            out.push(it.by_ref().take(size).collect());
        }
        node_idx += in_slice;
    }
    out
}

fn quadratic_split<T>(mut entries: Vec<(Rect, T)>, min: usize) -> (Vec<(Rect, T)>, Vec<(Rect, T)>) {
    let mut seeds = (0, 1);
    let mut worst = i128::MIN;
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, b) = (entries[i].0, entries[j].0);
            let waste = a.union(&b).area() - a.area() - b.area();
            if waste > worst {
                worst = waste;
                seeds = (i, j);
            }
        }
    }
    // remove the higher index first so the lower one stays valid
    let sb = entries.swap_remove(seeds.1);
    let sa = entries.swap_remove(seeds.0);
    let (mut ba, mut bb) = (sa.0, sb.0);
    let mut ga = vec![sa];
    let mut gb = vec![sb];

    while !entries.is_empty() {
        let remaining = entries.len();
        if ga.len() + remaining == min {
            for e in entries.drain(..) {
                ba = ba.union(&e.0);
                ga.push(e);
            }
            break;
        }
        if gb.len() + remaining == min {
            for e in entries.drain(..) {
                bb = bb.union(&e.0);
                gb.push(e);
            }
            break;
        }
        let (pick, _) = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (ba.enlargement(&e.0) - bb.enlargement(&e.0)).abs()))
            .max_by_key(|&(_, d)| d)
            .expect("non-empty");
        let e = entries.swap_remove(pick);
        let (da, db) = (ba.enlargement(&e.0), bb.enlargement(&e.0));
        let to_a = match da.cmp(&db) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => (ba.area(), ga.len()) <= (bb.area(), gb.len()),
        };
        if to_a {
            ba = ba.union(&e.0);
            ga.push(e);
        } else {
            bb = bb.union(&e.0);
            gb.push(e);
        }
    }
    (ga, gb)
}
