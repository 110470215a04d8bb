//! Symbolic collision sequences and their collision graphs.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::CollisionEvent;
use crate::phase_space::Pair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSequence {
    pub n: usize,
    pub labels: Vec<Pair>,
    pub times: Vec<f64>,
}

/// Components of the graph on the first `k − 1` collisions when the first
/// `k` are the shortest connected prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectedPrefix {
    pub k: usize,
    /// 0-based ball labels, each side sorted.
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

struct Dsu {
    parent: Vec<usize>,
    components: usize,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), components: n }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.parent[a] = b;
            self.components -= 1;
        }
    }
}

impl CollisionSequence {
    pub fn new(n: usize, labels: Vec<Pair>, times: Vec<f64>) -> Result<Self> {
        if labels.len() != times.len() {
            return Err(Error::ContractViolation("labels and times differ in length".into()));
        }
        if let Some(p) = labels.iter().find(|p| p.j >= n || p.i >= p.j) {
            return Err(Error::ContractViolation(format!("pair {p} is not a pair of {n} balls")));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ContractViolation("collision times are not strictly increasing".into()));
        }
        Ok(Self { n, labels, times })
    }

    pub fn from_events(n: usize, events: &[CollisionEvent]) -> Result<Self> {
        Self::new(n, events.iter().map(|e| e.pair).collect(), events.iter().map(|e| e.t).collect())
    }

    /// Labels only, with times `0, 1, 2, …`.
    pub fn from_labels(n: usize, labels: Vec<Pair>) -> Result<Self> {
        let times = (0..labels.len()).map(|k| k as f64).collect();
        Self::new(n, labels, times)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Whether the collisions in `range` connect all `n` balls.
    pub fn is_connected(&self, range: std::ops::Range<usize>) -> bool {
        let mut dsu = Dsu::new(self.n);
        for p in &self.labels[range] {
            dsu.union(p.i, p.j);
        }
        dsu.components == 1
    }

    /// End indices (exclusive) of the greedy earliest-closing decomposition
    /// into consecutive connected blocks.
    pub fn connected_blocks(&self) -> Vec<usize> {
        let mut ends = Vec::new();
        let mut dsu = Dsu::new(self.n);
        for (k, p) in self.labels.iter().enumerate() {
            dsu.union(p.i, p.j);
            if dsu.components == 1 {
                ends.push(k + 1);
                dsu = Dsu::new(self.n);
            }
        }
        ends
    }

    pub fn richness(&self) -> usize {
        self.connected_blocks().len()
    }

    pub fn first_connected_prefix(&self) -> Option<ConnectedPrefix> {
        let mut dsu = Dsu::new(self.n);
        for (k, p) in self.labels.iter().enumerate() {
            let (a, b) = (dsu.find(p.i), dsu.find(p.j));
            if a != b && dsu.components == 2 {
                let left: Vec<usize> = (0..self.n).filter(|&v| dsu.find(v) == a).collect();
                let right: Vec<usize> = (0..self.n).filter(|&v| dsu.find(v) == b).collect();
                let (left, right) = if left[0] < right[0] { (left, right) } else { (right, left) };
                return Some(ConnectedPrefix { k: k + 1, left, right });
            }
            dsu.union(p.i, p.j);
        }
        None
    }

    /// Reads the `t,i,j,…` event CSV written by the flow module. Labels in
    /// the file are 1-based.
    pub fn read_events_csv<R: Read>(input: R, n: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("missing column {name}")))
        };
        let (ct, ci, cj) = (col("t")?, col("i")?, col("j")?);
        let mut labels = Vec::new();
        let mut times = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 1));
            let t: f64 = field(ct).parse().map_err(|_| bad("t"))?;
            let i: usize = field(ci).parse().map_err(|_| bad("i"))?;
            let j: usize = field(cj).parse().map_err(|_| bad("j"))?;
            if i == 0 || j == 0 || i == j {
                return Err(bad("pair"));
            }
            labels.push(Pair::new(i - 1, j - 1));
            times.push(t);
        }
        Self::new(n, labels, times).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(n: usize, pairs: &[(usize, usize)]) -> CollisionSequence {
        CollisionSequence::from_labels(n, pairs.iter().map(|&(a, b)| Pair::new(a - 1, b - 1)).collect()).unwrap()
    }

    #[test]
    fn connectivity_examples() {
        assert!(seq(2, &[(1, 2)]).is_connected(0..1));
        assert!(!seq(3, &[(1, 2)]).is_connected(0..1));
        assert!(seq(3, &[(1, 2), (2, 3)]).is_connected(0..2));
    }

    #[test]
    fn richness_examples() {
        assert_eq!(seq(3, &[]).richness(), 0);
        assert_eq!(seq(2, &[(1, 2); 5]).richness(), 5);
        let s = seq(3, &[(1, 2), (1, 3), (1, 2), (2, 3)]);
        assert_eq!(s.richness(), 2);
        assert_eq!(s.connected_blocks(), vec![2, 4]);
    }

    #[test]
    fn first_prefix_examples() {
        let p = seq(3, &[(1, 2), (2, 3), (1, 3)]).first_connected_prefix().unwrap();
        assert_eq!(p, ConnectedPrefix { k: 2, left: vec![0, 1], right: vec![2] });
        let p = seq(2, &[(1, 2)]).first_connected_prefix().unwrap();
        assert_eq!(p, ConnectedPrefix { k: 1, left: vec![0], right: vec![1] });
        assert_eq!(seq(3, &[(1, 2), (1, 2)]).first_connected_prefix(), None);
    }

    #[test]
    fn csv_round_trip() {
        let text = "t,i,j,rel_speed,cos_phi\n0.5,1,2,1.0,0.5\n0.75,2,3,1.0,0.5\n";
        let s = CollisionSequence::read_events_csv(text.as_bytes(), 3).unwrap();
        assert_eq!(s.labels, vec![Pair::new(0, 1), Pair::new(1, 2)]);
        assert_eq!(s.times, vec![0.5, 0.75]);
        assert!(CollisionSequence::read_events_csv("t,i\n0.5,1\n".as_bytes(), 3).is_err());
        assert!(CollisionSequence::read_events_csv("t,i,j\n0.5,1,4\n".as_bytes(), 3).is_err());
        assert!(CollisionSequence::read_events_csv("t,i,j\n0.5,1,2\n0.5,2,3\n".as_bytes(), 3).is_err());
    }

    fn labels(n: usize, max_len: usize) -> impl Strategy<Value = Vec<Pair>> {
        prop::collection::vec((0..n, 0..n - 1), 0..max_len)
            .prop_map(move |v| v.into_iter().map(|(a, b)| Pair::new(a, if b >= a { b + 1 } else { b })).collect())
    }

    proptest! {
        #[test]
        fn richness_superadditive(a in labels(4, 30), b in labels(4, 30)) {
            let sa = CollisionSequence::from_labels(4, a.clone()).unwrap();
            let sb = CollisionSequence::from_labels(4, b.clone()).unwrap();
            let joined = CollisionSequence::from_labels(4, [a.clone(), b].concat()).unwrap();
            prop_assert!(joined.richness() + 1 >= sa.richness() + sb.richness());
            if sa.connected_blocks().last() == Some(&a.len()) || a.is_empty() {
                prop_assert_eq!(joined.richness(), sa.richness() + sb.richness());
            }
        }

        #[test]
        fn connectivity_monotone(a in labels(5, 20), extra in labels(5, 5)) {
            let s = CollisionSequence::from_labels(5, [a.clone(), extra].concat()).unwrap();
            if s.is_connected(0..a.len()) {
                prop_assert!(s.is_connected(0..s.len()));
            }
        }

        #[test]
        fn prefix_is_minimal(a in labels(4, 25)) {
            let s = CollisionSequence::from_labels(4, a).unwrap();
            match s.first_connected_prefix() {
                Some(p) => {
                    prop_assert!(s.is_connected(0..p.k));
                    prop_assert!(!s.is_connected(0..p.k - 1));
                    prop_assert_eq!(p.left.len() + p.right.len(), 4);
                }
                None => prop_assert!(!s.is_connected(0..s.len())),
            }
        }
    }
}
