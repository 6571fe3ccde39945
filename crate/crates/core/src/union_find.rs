//! Disjoint-set forest with path halving and union by size.

#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    /// Forest whose sets start with the given weights instead of 1.
    pub fn with_weights(weights: Vec<usize>) -> Self {
        Self {
            parent: (0..weights.len()).collect(),
            size: weights,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merge the sets of `a` and `b`; returns the surviving root.
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }

    /// Merge `child`'s set into `root`'s set, keeping `root`'s root as the
    /// representative regardless of size.
    pub fn union_into(&mut self, root: usize, child: usize) -> usize {
        let (r, c) = (self.find(root), self.find(child));
        if r != c {
            self.parent[c] = r;
            self.size[r] += self.size[c];
        }
        r
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Total weight (element count unless weighted) of the set containing `x`.
    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    /// Dense component id per element, numbered by first occurrence.
    pub fn component_ids(&mut self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut id_of_root = vec![usize::MAX; n];
        let mut next = 0;
        let ids = (0..n)
            .map(|i| {
                let r = self.find(i);
                if id_of_root[r] == usize::MAX {
                    id_of_root[r] = next;
                    next += 1;
                }
                id_of_root[r]
            })
            .collect();
        (ids, next)
    }
}
