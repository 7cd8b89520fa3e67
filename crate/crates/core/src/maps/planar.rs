//! Rooted, optionally pointed planar maps stored as rotation systems.
//!
//! Edge `e` owns half-edges `2e` and `2e + 1`, so `α(h) = h ^ 1`. The
//! rotation `σ` cycles the half-edges leaving a vertex and `φ = σ ∘ α`
//! walks around a face.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::weights::WeightSequence;
use crate::error::{Error, Result};

const STUB: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct PlanarMap {
    sigma: Vec<u32>,
    root: Option<u32>,
    marked: Option<u32>,
    vertex: Vec<u32>,
    face: Vec<u32>,
    vertex_start: Vec<u32>,
    n_faces: usize,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    sigma: Vec<u32>,
    root: Option<u32>,
    marked: Option<u32>,
}

impl TryFrom<MapRepr> for PlanarMap {
    type Error = Error;
    fn try_from(r: MapRepr) -> Result<Self> {
        PlanarMap::from_rotation(r.sigma, r.root, r.marked)
    }
}

impl From<PlanarMap> for MapRepr {
    fn from(m: PlanarMap) -> Self {
        MapRepr { sigma: m.sigma, root: m.root, marked: m.marked }
    }
}

fn orbits(perm: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut id = vec![STUB; perm.len()];
    let mut starts = Vec::new();
    for h in 0..perm.len() {
        if id[h] != STUB {
            continue;
        }
        let k = starts.len() as u32;
        starts.push(h as u32);
        let mut g = h;
        while id[g] == STUB {
            id[g] = k;
            g = perm[g] as usize;
        }
    }
    (id, starts)
}

impl PlanarMap {
    /// One vertex, no edge, one face of degree zero; pointed at its vertex.
    pub fn vertex_map() -> Self {
        Self {
            sigma: Vec::new(),
            root: None,
            marked: Some(0),
            vertex: Vec::new(),
            face: Vec::new(),
            vertex_start: Vec::new(),
            n_faces: 1,
        }
    }

    /// Builds a map from its rotation; rejects non-permutations and
    /// disconnected maps. Vertex ids follow the smallest half-edge of each
    /// orbit.
    pub fn from_rotation(sigma: Vec<u32>, root: Option<u32>, marked: Option<u32>) -> Result<Self> {
        let n = sigma.len();
        if n == 0 {
            if root.is_some() || marked.is_some_and(|m| m != 0) {
                return Err(Error::Invalid("the vertex map has no half-edges".into()));
            }
            let mut m = Self::vertex_map();
            m.marked = marked;
            return Ok(m);
        }
        if n % 2 != 0 {
            return Err(Error::Invalid("a rotation needs an even number of half-edges".into()));
        }
        let mut seen = vec![false; n];
        for &s in &sigma {
            let s = s as usize;
            if s >= n || seen[s] {
                return Err(Error::Invalid("sigma is not a permutation".into()));
            }
            seen[s] = true;
        }
        let (vertex, vertex_start) = orbits(&sigma);
        let phi: Vec<u32> = (0..n).map(|h| sigma[h ^ 1]).collect();
        let (face, face_start) = orbits(&phi);
        if root.is_some_and(|r| r as usize >= n) {
            return Err(Error::Invalid("root half-edge out of range".into()));
        }
        if marked.is_some_and(|v| v as usize >= vertex_start.len()) {
            return Err(Error::Invalid("marked vertex out of range".into()));
        }
        let m = Self { sigma, root, marked, vertex, face, vertex_start, n_faces: face_start.len() };
        if m.distances_from(0).contains(&STUB) {
            return Err(Error::Invalid("the map is not connected".into()));
        }
        Ok(m)
    }

    pub fn n_half_edges(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_edges(&self) -> usize {
        self.sigma.len() / 2
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_start.len().max(1)
    }

    pub fn n_faces(&self) -> usize {
        self.n_faces
    }

    /// `V − E + F`; equals 2 for every planar map.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces as i64
    }

    pub fn root(&self) -> Option<u32> {
        self.root
    }

    pub fn marked(&self) -> Option<u32> {
        self.marked
    }

    pub fn sigma(&self, h: u32) -> u32 {
        self.sigma[h as usize]
    }

    pub fn alpha(h: u32) -> u32 {
        h ^ 1
    }

    pub fn phi(&self, h: u32) -> u32 {
        self.sigma[(h ^ 1) as usize]
    }

    /// Vertex that `h` leaves.
    pub fn vertex_of(&self, h: u32) -> u32 {
        self.vertex[h as usize]
    }

    pub fn face_of(&self, h: u32) -> u32 {
        self.face[h as usize]
    }

    /// Half-edges around `v` in rotation order, starting from its smallest.
    pub fn rotation(&self, v: u32) -> Vec<u32> {
        let Some(&s) = self.vertex_start.get(v as usize) else { return Vec::new() };
        self.cycle_from(s)
    }

    /// The `σ`-cycle through `h`, starting at `h`.
    pub fn cycle_from(&self, h: u32) -> Vec<u32> {
        let mut out = vec![h];
        let mut g = self.sigma(h);
        while g != h {
            out.push(g);
            g = self.sigma(g);
        }
        out
    }

    pub fn vertex_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_vertices()];
        for &v in &self.vertex {
            d[v as usize] += 1;
        }
        d
    }

    pub fn face_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_faces];
        for &f in &self.face {
            d[f as usize] += 1;
        }
        d
    }

    /// Graph distances from vertex `v`; `u32::MAX` marks unreachable vertices.
    pub fn distances_from(&self, v: u32) -> Vec<u32> {
        let mut dist = vec![STUB; self.n_vertices()];
        dist[v as usize] = 0;
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for h in self.rotation(u) {
                let w = self.vertex_of(h ^ 1);
                if dist[w as usize] == STUB {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Dual map: faces become vertices, the root half-edge is kept and the
    /// mark is dropped.
    pub fn dual(&self) -> Self {
        if self.sigma.is_empty() {
            return Self { marked: None, ..Self::vertex_map() };
        }
        let phi = (0..self.sigma.len() as u32).map(|h| self.phi(h)).collect();
        Self::from_rotation(phi, self.root, None).expect("the dual of a map is a map")
    }

    pub fn with_root(mut self, root: Option<u32>) -> Result<Self> {
        if root.is_some_and(|r| r as usize >= self.sigma.len()) {
            return Err(Error::Invalid("root half-edge out of range".into()));
        }
        self.root = root;
        Ok(self)
    }

    pub fn with_marked(mut self, marked: Option<u32>) -> Result<Self> {
        if marked.is_some_and(|v| v as usize >= self.n_vertices()) {
            return Err(Error::Invalid("marked vertex out of range".into()));
        }
        self.marked = marked;
        Ok(self)
    }

    /// Same map rooted at the opposite half-edge of the root edge.
    pub fn reverse_root(mut self) -> Self {
        self.root = self.root.map(|r| r ^ 1);
        self
    }

    /// Product of the face weights `q_{deg f}`; the vertex map has weight 1.
    pub fn weight(&self, q: &WeightSequence) -> f64 {
        if self.sigma.is_empty() {
            return 1.0;
        }
        self.face_degrees().iter().map(|&d| q.q(d as u32)).product()
    }

    /// Isomorphism invariant of the rooted (and pointed) map: two maps get
    /// equal codes iff some orientation-preserving bijection carries root
    /// to root and mark to mark.
    pub fn canonical_code(&self) -> Vec<u32> {
        match self.root {
            Some(r) => self.code_from(r),
            None if self.sigma.is_empty() => vec![0, self.marked.map_or(STUB, |_| 0)],
            None => (0..self.sigma.len() as u32).map(|h| self.code_from(h)).min().unwrap_or_default(),
        }
    }

    /// Breadth-first code from half-edge `start`. A vertex discovered
    /// through half-edge `g` labels its whole rotation starting at `g`;
    /// each processed vertex emits its degree and its partners' labels.
    pub fn code_from(&self, start: u32) -> Vec<u32> {
        self.code_with(start, |_| true)
    }

    /// As [`code_from`](Self::code_from), restricted to half-edges kept by
    /// `keep`. Partners outside the kept set are written as stubs.
    pub fn code_with(&self, start: u32, keep: impl Fn(u32) -> bool) -> Vec<u32> {
        let mut label = vec![STUB; self.sigma.len()];
        let mut order = vec![STUB; self.n_vertices()];
        let mut next = 0u32;
        let mut discovered = 0u32;
        let mut queue = VecDeque::new();
        let mut out = Vec::with_capacity(self.sigma.len() + self.n_vertices() + 1);
        let mut discover = |g: u32, label: &mut Vec<u32>, order: &mut Vec<u32>, queue: &mut VecDeque<u32>| {
            order[self.vertex_of(g) as usize] = discovered;
            discovered += 1;
            for h in self.cycle_from(g) {
                label[h as usize] = next;
                next += 1;
            }
            queue.push_back(g);
        };
        discover(start, &mut label, &mut order, &mut queue);
        while let Some(g) = queue.pop_front() {
            let rot = self.cycle_from(g);
            out.push(rot.len() as u32);
            for h in rot {
                let p = h ^ 1;
                if !keep(p) {
                    out.push(STUB);
                    continue;
                }
                if label[p as usize] == STUB {
                    discover(p, &mut label, &mut order, &mut queue);
                }
                out.push(label[p as usize]);
            }
        }
        out.push(self.marked.map_or(STUB, |m| order[m as usize]));
        out
    }
}

fn permutations(n: usize, f: &mut impl FnMut(&[u32])) {
    fn rec(k: usize, p: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(k + 1, p, f);
            p.swap(k, i);
        }
    }
    let mut p: Vec<u32> = (0..n as u32).collect();
    rec(0, &mut p, f);
}

/// Every rooted planar map with exactly `edges` edges, up to isomorphism.
/// The root is half-edge 0 and no vertex is marked.
pub fn rooted_maps(edges: usize) -> Vec<PlanarMap> {
    if edges == 0 {
        return vec![PlanarMap { marked: None, ..PlanarMap::vertex_map() }];
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    permutations(2 * edges, &mut |p| {
        let Ok(m) = PlanarMap::from_rotation(p.to_vec(), Some(0), None) else { return };
        if m.euler_characteristic() == 2 && seen.insert(m.canonical_code()) {
            out.push(m);
        }
    });
    out
}

/// How the root edge sits relative to the marked vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootSign {
    /// The root half-edge moves away from the mark.
    Positive,
    /// Both ends are equally far from the mark.
    Null,
}

/// Rooted maps with at most `max_edges` edges and a marked vertex such
/// that the root edge has the given sign. The positive family also
/// contains the vertex map.
pub fn pointed_maps(max_edges: usize, sign: RootSign) -> Vec<PlanarMap> {
    let mut out = Vec::new();
    if sign == RootSign::Positive {
        out.push(PlanarMap::vertex_map());
    }
    for e in 1..=max_edges {
        for m in rooted_maps(e) {
            let r = m.root.expect("rooted");
            for v in 0..m.n_vertices() as u32 {
                let d = m.distances_from(v);
                let (a, b) = (d[m.vertex_of(r) as usize], d[m.vertex_of(r ^ 1) as usize]);
                let keep = match sign {
                    RootSign::Positive => a < b,
                    RootSign::Null => a == b,
                };
                if keep {
                    out.push(m.clone().with_marked(Some(v)).expect("in range"));
                }
            }
        }
    }
    out
}
