//! Finite matroid oracles: independence, rank and span queries over a dense
//! ground set `0..n`, plus the parallel-copy extension used by the reductions.

use std::collections::BTreeMap;

use crate::error::Error;

/// A finite matroid given in one of the explicit representations the solver
/// understands. Oracles are immutable after construction, so shared read-only
/// access from multiple workers is safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatroidOracle {
    /// Independent sets are all sets of size at most `rank`.
    Uniform { n: usize, rank: usize },
    /// Ground set partitioned into blocks, each with a capacity.
    Partition {
        blocks: Vec<Vec<usize>>,
        capacities: Vec<usize>,
    },
    /// Capacities on a laminar family of subsets; a set is independent when
    /// it meets every family set within its capacity.
    Laminar {
        n: usize,
        sets: Vec<LaminarSet>,
    },
    /// Edges of a multigraph; independent sets are forests. Self-loops are
    /// dependent on their own.
    Graphic {
        vertices: usize,
        edges: Vec<(usize, usize)>,
    },
    /// Copies of the elements of a base matroid; two copies of the same base
    /// element are parallel.
    ParallelExtension {
        base: Box<MatroidOracle>,
        /// `map[j]` is the base element that copy `j` duplicates.
        map: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaminarSet {
    pub elements: Vec<usize>,
    pub capacity: usize,
}

impl MatroidOracle {
    /// Number of ground-set elements.
    pub fn n(&self) -> usize {
        match self {
            MatroidOracle::Uniform { n, .. } => *n,
            MatroidOracle::Partition { blocks, .. } => blocks.iter().map(Vec::len).sum(),
            MatroidOracle::Laminar { n, .. } => *n,
            MatroidOracle::Graphic { edges, .. } => edges.len(),
            MatroidOracle::ParallelExtension { map, .. } => map.len(),
        }
    }

    /// Validates the structural invariants of the representation.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        match self {
            MatroidOracle::Uniform { n, rank } => {
                if *n == 0 {
                    violations.push("uniform: ground set must be nonempty".into());
                }
                if rank > n {
                    violations.push(format!("uniform: rank {rank} exceeds n {n}"));
                }
            }
            MatroidOracle::Partition { blocks, capacities } => {
                if blocks.len() != capacities.len() {
                    violations.push("partition: blocks/capacities length mismatch".into());
                }
                let n: usize = blocks.iter().map(Vec::len).sum();
                let mut seen = vec![false; n];
                for block in blocks {
                    for &e in block {
                        if e >= n {
                            violations.push(format!("partition: element {e} out of range"));
                        } else if seen[e] {
                            violations.push(format!("partition: element {e} covered twice"));
                        } else {
                            seen[e] = true;
                        }
                    }
                }
                if n == 0 {
                    violations.push("partition: ground set must be nonempty".into());
                }
                if n > 128 {
                    violations.push("partition: ground sets above 128 elements unsupported".into());
                }
            }
            MatroidOracle::Laminar { n, sets } => {
                if *n == 0 {
                    violations.push("laminar: ground set must be nonempty".into());
                }
                if *n > 128 {
                    violations.push("laminar: ground sets above 128 elements unsupported".into());
                }
                for (idx, s) in sets.iter().enumerate() {
                    for &e in &s.elements {
                        if e >= *n {
                            violations.push(format!("laminar: set {idx} element {e} out of range"));
                        }
                    }
                }
                let masks: Vec<u128> = sets.iter().map(|s| mask_of(&s.elements)).collect();
                for i in 0..masks.len() {
                    for j in i + 1..masks.len() {
                        let inter = masks[i] & masks[j];
                        if inter != 0 && inter != masks[i] && inter != masks[j] {
                            violations
                                .push(format!("laminar: sets {i} and {j} cross (not laminar)"));
                        }
                    }
                }
                let covered = masks.iter().fold(0u128, |a, m| a | m);
                for e in 0..*n {
                    if *n <= 128 && covered & (1u128 << e) == 0 {
                        violations.push(format!(
                            "laminar: element {e} not covered by any family set"
                        ));
                    }
                }
            }
            MatroidOracle::Graphic { vertices, edges } => {
                for (idx, &(u, v)) in edges.iter().enumerate() {
                    if u >= *vertices || v >= *vertices {
                        violations.push(format!("graphic: edge {idx} endpoint out of range"));
                    }
                }
                if edges.is_empty() {
                    violations.push("graphic: ground set must be nonempty".into());
                }
            }
            MatroidOracle::ParallelExtension { base, map } => {
                violations.extend(base.validate());
                for (j, &b) in map.iter().enumerate() {
                    if b >= base.n() {
                        violations.push(format!("parallel: copy {j} maps out of range"));
                    }
                }
                if map.is_empty() {
                    violations.push("parallel: ground set must be nonempty".into());
                }
            }
        }
        violations
    }

    fn check_in_range(&self, set: &[usize]) -> Result<(), Error> {
        let n = self.n();
        for &e in set {
            if e >= n {
                return Err(Error::IndexOutOfRange { index: e, n });
            }
        }
        Ok(())
    }

    /// True iff `set` (distinct indices) is independent.
    pub fn is_independent(&self, set: &[usize]) -> Result<bool, Error> {
        self.check_in_range(set)?;
        Ok(match self {
            MatroidOracle::Uniform { rank, .. } => set.len() <= *rank,
            MatroidOracle::Partition { .. } | MatroidOracle::Laminar { .. } => {
                self.laminar_independent(set)
            }
            MatroidOracle::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                set.iter().all(|&e| {
                    let (u, v) = edges[e];
                    uf.union(u, v)
                })
            }
            MatroidOracle::ParallelExtension { .. } => self.rank(set)? == set.len(),
        })
    }

    /// Size of a maximal independent subset of `set`.
    pub fn rank(&self, set: &[usize]) -> Result<usize, Error> {
        self.check_in_range(set)?;
        Ok(match self {
            MatroidOracle::Uniform { rank, .. } => set.len().min(*rank),
            MatroidOracle::Partition { .. } | MatroidOracle::Laminar { .. } => {
                self.laminar_rank(set)
            }
            MatroidOracle::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                set.iter()
                    .filter(|&&e| {
                        let (u, v) = edges[e];
                        uf.union(u, v)
                    })
                    .count()
            }
            MatroidOracle::ParallelExtension { base, map } => {
                let mut image: Vec<usize> = set.iter().map(|&e| map[e]).collect();
                image.sort_unstable();
                image.dedup();
                base.rank(&image)?
            }
        })
    }

    /// True iff `rank(set ∪ {e}) = rank(set)`.
    pub fn in_span(&self, set: &[usize], e: usize) -> Result<bool, Error> {
        self.check_in_range(&[e])?;
        let base_rank = self.rank(set)?;
        let mut with_e: Vec<usize> = set.iter().copied().filter(|&x| x != e).collect();
        with_e.push(e);
        Ok(self.rank(&with_e)? == base_rank)
    }

    /// Replaces each element `i` by `multiplicities[i]` parallel copies.
    /// Copies are numbered in ascending base-element order, so the copies of
    /// element 0 come first.
    pub fn parallel_extend(&self, multiplicities: &BTreeMap<usize, usize>) -> Result<Self, Error> {
        let n = self.n();
        for i in 0..n {
            match multiplicities.get(&i) {
                Some(0) => return Err(Error::ZeroMultiplicity { element: i }),
                Some(_) => {}
                None => return Err(Error::ZeroMultiplicity { element: i }),
            }
        }
        let mut map = Vec::new();
        for i in 0..n {
            for _ in 0..multiplicities[&i] {
                map.push(i);
            }
        }
        Ok(MatroidOracle::ParallelExtension {
            base: Box::new(self.clone()),
            map,
        })
    }

    // Partition and laminar share one capacity-system rank computation; a
    // partition is the laminar family consisting of its blocks.
    fn capacity_family(&self) -> (usize, Vec<(u128, usize)>) {
        match self {
            MatroidOracle::Partition { blocks, capacities } => {
                let n = self.n();
                let fam = blocks
                    .iter()
                    .zip(capacities)
                    .map(|(b, &c)| (mask_of(b), c))
                    .collect();
                (n, fam)
            }
            MatroidOracle::Laminar { n, sets } => {
                let fam = sets
                    .iter()
                    .map(|s| (mask_of(&s.elements), s.capacity))
                    .collect();
                (*n, fam)
            }
            _ => unreachable!("capacity_family on non-laminar variant"),
        }
    }

    fn laminar_independent(&self, set: &[usize]) -> bool {
        let (_, family) = self.capacity_family();
        let s = mask_of(set);
        family
            .iter()
            .all(|&(mask, cap)| (s & mask).count_ones() as usize <= cap)
    }

    fn laminar_rank(&self, set: &[usize]) -> usize {
        let (_, family) = self.capacity_family();
        let s = mask_of(set);
        // Process family sets smallest-first so every child precedes its
        // parent, capping contributions bottom-up over the laminar forest.
        let mut order: Vec<usize> = (0..family.len()).collect();
        order.sort_by_key(|&i| family[i].0.count_ones());
        let mut contribution: Vec<usize> = vec![0; family.len()];
        let mut is_root = vec![true; family.len()];
        for (pos, &i) in order.iter().enumerate() {
            let (mask, cap) = family[i];
            // Direct children: already-processed roots nested strictly inside.
            let mut child_mask = 0u128;
            let mut total = 0usize;
            for &j in &order[..pos] {
                let (jm, _) = family[j];
                if is_root[j] && jm & !mask == 0 {
                    total += contribution[j];
                    child_mask |= jm;
                    is_root[j] = false;
                }
            }
            total += (s & mask & !child_mask).count_ones() as usize;
            contribution[i] = total.min(cap);
        }
        let mut covered = 0u128;
        let mut rank = 0usize;
        for &i in &order {
            if is_root[i] {
                rank += contribution[i];
                covered |= family[i].0;
            }
        }
        // Elements of `set` outside every family set are free.
        rank + (s & !covered).count_ones() as usize
    }
}

fn mask_of(elements: &[usize]) -> u128 {
    elements
        .iter()
        .fold(0u128, |acc, &e| acc | (1u128 << (e as u32)))
}

/// Greedy rank computed only from `is_independent`; the reference oracle the
/// native per-variant ranks are checked against.
pub fn rank_by_independence(m: &MatroidOracle, set: &[usize]) -> Result<usize, Error> {
    let mut picked: Vec<usize> = Vec::new();
    for &e in set {
        picked.push(e);
        if !m.is_independent(&picked)? {
            picked.pop();
        }
    }
    Ok(picked.len())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    /// Merges the components of `u` and `v`; false when already connected
    /// (including the self-loop case `u == v`).
    fn union(&mut self, u: usize, v: usize) -> bool {
        let (ru, rv) = (self.find(u), self.find(v));
        if ru == rv {
            return false;
        }
        self.parent[ru] = rv;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> MatroidOracle {
        MatroidOracle::Graphic {
            vertices: 3,
            edges: vec![(0, 1), (1, 2), (0, 2)],
        }
    }

    #[test]
    fn uniform_independence() {
        let m = MatroidOracle::Uniform { n: 4, rank: 2 };
        assert!(m.is_independent(&[0, 1]).unwrap());
        assert!(!m.is_independent(&[0, 1, 2]).unwrap());
    }

    #[test]
    fn graphic_cycle_is_dependent() {
        assert!(!triangle().is_independent(&[0, 1, 2]).unwrap());
        assert!(triangle().is_independent(&[0, 1]).unwrap());
    }

    #[test]
    fn rank_examples() {
        let m = MatroidOracle::Uniform { n: 3, rank: 2 };
        assert_eq!(m.rank(&[0, 1, 2]).unwrap(), 2);

        let path = MatroidOracle::Graphic {
            vertices: 3,
            edges: vec![(0, 1), (1, 2)],
        };
        assert_eq!(path.rank(&[0, 1]).unwrap(), 2);

        let base = MatroidOracle::Uniform { n: 1, rank: 1 };
        let ext = base
            .parallel_extend(&BTreeMap::from([(0, 2)]))
            .unwrap();
        assert_eq!(ext.rank(&[0, 1]).unwrap(), 1);
    }

    #[test]
    fn span_examples() {
        let m = MatroidOracle::Uniform { n: 3, rank: 1 };
        assert!(m.in_span(&[0], 1).unwrap());
        assert!(!m.in_span(&[], 1).unwrap());

        // s-u-t path plus chord (s,t): the chord is spanned by the path.
        let g = MatroidOracle::Graphic {
            vertices: 3,
            edges: vec![(0, 1), (1, 2), (0, 2)],
        };
        assert!(g.in_span(&[0, 1], 2).unwrap());
    }

    #[test]
    fn parallel_extension_examples() {
        let m = MatroidOracle::Uniform { n: 2, rank: 1 };
        let ext = m
            .parallel_extend(&BTreeMap::from([(0, 2), (1, 1)]))
            .unwrap();
        assert_eq!(ext.n(), 3);
        assert_eq!(ext.rank(&[0, 1]).unwrap(), 1);

        let doubled = triangle()
            .parallel_extend(&BTreeMap::from([(0, 2), (1, 2), (2, 2)]))
            .unwrap();
        assert_eq!(doubled.n(), 6);
        assert_eq!(doubled.rank(&[0, 1]).unwrap(), 1);

        let err = m.parallel_extend(&BTreeMap::from([(0, 2), (1, 0)]));
        assert!(err.is_err());
    }

    #[test]
    fn self_loop_is_spanned_by_empty_set() {
        let g = MatroidOracle::Graphic {
            vertices: 2,
            edges: vec![(0, 0), (0, 1)],
        };
        assert!(!g.is_independent(&[0]).unwrap());
        assert!(g.in_span(&[], 0).unwrap());
        assert!(!g.in_span(&[], 1).unwrap());
    }

    #[test]
    fn laminar_rank_matches_reference() {
        let m = MatroidOracle::Laminar {
            n: 4,
            sets: vec![
                LaminarSet {
                    elements: vec![0, 1, 2, 3],
                    capacity: 3,
                },
                LaminarSet {
                    elements: vec![0, 1],
                    capacity: 1,
                },
                LaminarSet {
                    elements: vec![2, 3],
                    capacity: 2,
                },
            ],
        };
        assert!(m.validate().is_empty());
        for mask in 0u32..16 {
            let set: Vec<usize> = (0..4).filter(|&e| mask & (1 << e) != 0).collect();
            assert_eq!(
                m.rank(&set).unwrap(),
                rank_by_independence(&m, &set).unwrap(),
                "mask {mask}"
            );
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        let m = MatroidOracle::Uniform { n: 3, rank: 2 };
        assert!(m.is_independent(&[3]).is_err());
        assert!(m.rank(&[0, 7]).is_err());
    }
}
