//! Local balls around a corner, a vertex or a face, with canonical keys.
//!
//! The ball of radius `r` keeps every vertex within graph distance `r` of
//! the centre together with its full rotation. Half-edges whose partner
//! lies outside are kept as stubs, so the key records vertex degrees on the
//! boundary but nothing beyond it.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use super::planar::PlanarMap;

const STUB: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Center {
    /// The corner following half-edge `h` in its rotation; rooted at `h`.
    Corner(u32),
    Vertex(u32),
    Face(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ball {
    pub key: Vec<u32>,
    pub vertices: usize,
}

/// Distances up to `r` from the given sources (multi-source BFS).
fn local_distances(map: &PlanarMap, sources: &[u32], r: u32) -> HashMap<u32, u32> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == r {
            continue;
        }
        for h in map.rotation(v) {
            let w = map.vertex_of(h ^ 1);
            if let Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Breadth-first code of the ball started at half-edge `start`; the
/// kept vertices are the keys of `dist`.
fn ball_code(map: &PlanarMap, start: u32, dist: &HashMap<u32, u32>) -> Vec<u32> {
    let mut label: HashMap<u32, u32> = HashMap::new();
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    let mut discover = |g: u32, label: &mut HashMap<u32, u32>, queue: &mut VecDeque<u32>| {
        for h in map.cycle_from(g) {
            label.insert(h, next);
            next += 1;
        }
        queue.push_back(g);
    };
    discover(start, &mut label, &mut queue);
    while let Some(g) = queue.pop_front() {
        let rot = map.cycle_from(g);
        out.push(rot.len() as u32);
        for h in rot {
            let p = h ^ 1;
            if !dist.contains_key(&map.vertex_of(p)) {
                out.push(STUB);
                continue;
            }
            if !label.contains_key(&p) {
                discover(p, &mut label, &mut queue);
            }
            out.push(label[&p]);
        }
    }
    out
}

/// Ball of radius `r` around `center`, keyed up to isomorphisms that fix
/// the centre and preserve orientation.
pub fn local_ball(map: &PlanarMap, center: Center, r: u32) -> Ball {
    if map.n_half_edges() == 0 {
        return Ball { key: vec![0], vertices: 1 };
    }
    match center {
        Center::Corner(h) => {
            let dist = local_distances(map, &[map.vertex_of(h)], r);
            Ball { key: ball_code(map, h, &dist), vertices: dist.len() }
        }
        Center::Vertex(v) => {
            let dist = local_distances(map, &[v], r);
            let key = map.rotation(v).into_iter().map(|h| ball_code(map, h, &dist)).min().unwrap_or_default();
            Ball { key, vertices: dist.len() }
        }
        Center::Face(f) => {
            let sides: Vec<u32> = (0..map.n_half_edges() as u32).filter(|&h| map.face_of(h) == f).collect();
            let mut sources: Vec<u32> = sides.iter().map(|&h| map.vertex_of(h)).collect();
            sources.sort_unstable();
            sources.dedup();
            let dist = local_distances(map, &sources, r);
            let key = sides.iter().map(|&h| ball_code(map, h, &dist)).min().unwrap_or_default();
            Ball { key, vertices: dist.len() }
        }
    }
}

/// Vertices of the ball, for structural comparisons.
pub fn ball_vertices(map: &PlanarMap, center: Center, r: u32) -> Vec<u32> {
    let sources = match center {
        Center::Corner(h) => vec![map.vertex_of(h)],
        Center::Vertex(v) => vec![v],
        Center::Face(f) => {
            (0..map.n_half_edges() as u32).filter(|&h| map.face_of(h) == f).map(|h| map.vertex_of(h)).collect()
        }
    };
    if map.n_half_edges() == 0 {
        return vec![0];
    }
    let mut v: Vec<u32> = local_distances(map, &sources, r).into_keys().collect();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    use super::*;
    use crate::maps::planar::rooted_maps;
    use crate::rng::Rng;

    /// A Boltzmann map with about `edges` edges at the uniform-map weights.
    fn random_map(seed: u64, edges: u64) -> PlanarMap {
        use crate::maps::bdfg::mobile_to_map;
        use crate::maps::mobile::{Flavor, MobileSampler};
        use crate::maps::solve::{params_at, vertex_weight_params};
        let p = vertex_weight_params(1.0).unwrap();
        let s = MobileSampler::new(&params_at(&p.weights(), p.x, p.y).unwrap()).unwrap();
        let mut rng = crate::rng::rng_for(seed, "ball-map", 0);
        let (m, _) = s.sample_conditioned(Flavor::Plus, &[1, 0, 1, 1], edges + 1, 1_000_000, &mut rng).unwrap();
        mobile_to_map(&m, Flavor::Plus).unwrap()
    }

    /// Relabels edges and flips half-edge orientations.
    fn relabel(map: &PlanarMap, seed: u64) -> (PlanarMap, Vec<u32>) {
        let mut rng = Rng::seed_from_u64(seed);
        let e = map.n_edges();
        let mut perm: Vec<u32> = (0..e as u32).collect();
        perm.shuffle(&mut rng);
        let flips: Vec<u32> = (0..e).map(|_| u32::from(rand::Rng::random_bool(&mut rng, 0.5))).collect();
        let image = |h: u32| 2 * perm[(h / 2) as usize] + ((h & 1) ^ flips[(h / 2) as usize]);
        let mut sigma = vec![0; 2 * e];
        for h in 0..2 * e as u32 {
            sigma[image(h) as usize] = image(map.sigma(h));
        }
        let images = (0..2 * e as u32).map(image).collect();
        (PlanarMap::from_rotation(sigma, map.root().map(image), None).unwrap(), images)
    }

    #[test]
    fn radius_zero_vertex_ball_is_the_vertex() {
        let m = PlanarMap::from_rotation(vec![2, 1, 0, 3], Some(0), None).unwrap();
        let b = local_ball(&m, Center::Vertex(m.vertex_of(0)), 0);
        assert_eq!(b.vertices, 1);
        assert_eq!(b.key, vec![2, STUB, STUB]);
    }

    proptest! {
        #[test]
        fn keys_survive_relabelling(seed in 0u64..1000, r in 0u32..3) {
            let m = random_map(seed, 25);
            let (m2, image) = relabel(&m, seed ^ 0xabc);
            for h in 0..m.n_half_edges() as u32 {
                let a = local_ball(&m, Center::Corner(h), r);
                let b = local_ball(&m2, Center::Corner(image[h as usize]), r);
                prop_assert_eq!(a, b);
                let v = m.vertex_of(h);
                let a = local_ball(&m, Center::Vertex(v), r);
                let b = local_ball(&m2, Center::Vertex(m2.vertex_of(image[h as usize])), r);
                prop_assert_eq!(a, b);
                let a = local_ball(&m, Center::Face(m.face_of(h)), r);
                let b = local_ball(&m2, Center::Face(m2.face_of(image[h as usize])), r);
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn balls_grow_with_the_radius(seed in 0u64..1000, h in 0u32..40) {
            let m = random_map(seed, 20);
            let c = Center::Corner(h % m.n_half_edges() as u32);
            for r in 0..4 {
                let small = ball_vertices(&m, c, r);
                let big = ball_vertices(&m, c, r + 1);
                prop_assert!(small.iter().all(|v| big.binary_search(v).is_ok()));
            }
        }
    }

    #[test]
    fn large_radius_corner_keys_identify_rooted_maps() {
        let maps = rooted_maps(3);
        let mut keys: Vec<_> = maps.iter().map(|m| local_ball(m, Center::Corner(0), 10).key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), maps.len());
    }
}
