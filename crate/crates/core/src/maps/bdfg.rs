//! From labelled mobiles to pointed rooted planar maps.
//!
//! Every corner of a labelled or flagged vertex sends an arc to its
//! successor: the next labelled corner in cyclic contour order whose label
//! is one less (one half less for flagged corners), or to an extra vertex
//! when no such corner exists. The two arcs of a flagged vertex merge into
//! one edge. The extra vertex is the marked vertex of the map.

use std::collections::HashMap;

use super::mobile::{Flavor, Mobile, FLAGGED, LABELLED};
use super::planar::PlanarMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Corner {
    vertex: usize,
    labelled: bool,
    label: i64,
}

/// Corners of labelled and flagged vertices in contour order, starting
/// with the root corner that precedes the first child.
fn contour(m: &Mobile) -> Vec<Corner> {
    let t = &m.tree;
    let keep = |v: usize| matches!(t.type_of(v), LABELLED | FLAGGED);
    let mut out = Vec::new();
    let mut emit = |v: usize| {
        if keep(v) {
            out.push(Corner { vertex: v, labelled: t.type_of(v) == LABELLED, label: m.labels[v] });
        }
    };
    emit(0);
    let mut stack = vec![(0usize, 0usize)];
    while let Some(top) = stack.last_mut() {
        let (v, i) = *top;
        let kids = t.children(v);
        if i < kids.len() {
            top.1 += 1;
            stack.push((kids[i], 0));
            emit(kids[i]);
            continue;
        }
        stack.pop();
        if let Some(&(p, j)) = stack.last() {
            // Back at `p` after its `j`-th child.
            if j < t.children(p).len() || stack.len() > 1 {
                emit(p);
            }
        }
    }
    out
}

/// Result of the bijection together with the map vertex of each labelled
/// mobile vertex.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub map: PlanarMap,
    pub map_vertex: Vec<Option<u32>>,
}

/// Maps a mobile to its pointed rooted planar map.
pub fn mobile_to_map(m: &Mobile, flavor: Flavor) -> Result<PlanarMap> {
    Ok(embed(m, flavor)?.map)
}

pub fn embed(m: &Mobile, flavor: Flavor) -> Result<Embedding> {
    let t = &m.tree;
    let want = if flavor == Flavor::Zero { FLAGGED } else { LABELLED };
    if t.type_of(0) != want {
        return Err(Error::Invalid(format!("a {flavor:?} mobile needs a root of type {want}")));
    }
    if t.len() == 1 {
        let mut map_vertex = vec![None; 1];
        map_vertex[0] = Some(0);
        return Ok(Embedding { map: PlanarMap::vertex_map(), map_vertex });
    }
    let corners = contour(m);
    let n = corners.len();
    let target = |c: &Corner| c.label - if c.labelled { 2 } else { 1 };

    let mut succ: Vec<Option<usize>> = vec![None; n];
    let mut next: HashMap<i64, usize> = HashMap::new();
    for p in (0..2 * n).rev() {
        let i = p % n;
        if p < n {
            succ[i] = next.get(&target(&corners[i])).map(|&j| j % n);
        }
        if corners[i].labelled {
            next.insert(corners[i].label, p);
        }
    }

    // Arcs arriving at each corner (origin corner, half-edge) and at the
    // extra vertex; the half-edge leaving each labelled corner.
    let mut incoming: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
    let mut at_extra: Vec<(usize, u32)> = Vec::new();
    let mut outgoing: Vec<Option<u32>> = vec![None; n];
    let mut arrive = |origin: usize, half: u32, incoming: &mut Vec<Vec<(usize, u32)>>| match succ[origin] {
        Some(c) => incoming[c].push((origin, half)),
        None => at_extra.push((origin, half)),
    };
    let mut edges = 0u32;
    let mut flagged_first: HashMap<usize, usize> = HashMap::new();
    let mut root_half = None;
    for (i, c) in corners.iter().enumerate() {
        if c.labelled {
            let e = edges;
            edges += 1;
            outgoing[i] = Some(2 * e);
            arrive(i, 2 * e + 1, &mut incoming);
            if i == 0 {
                root_half = Some(2 * e + 1);
            }
        } else if let Some(first) = flagged_first.remove(&c.vertex) {
            let e = edges;
            edges += 1;
            arrive(first, 2 * e, &mut incoming);
            arrive(i, 2 * e + 1, &mut incoming);
            if c.vertex == 0 {
                root_half = Some(2 * e + 1);
            }
        } else {
            flagged_first.insert(c.vertex, i);
        }
    }
    if !flagged_first.is_empty() {
        return Err(Error::Invalid("a flagged vertex does not have exactly two corners".into()));
    }

    // Rotations: at a labelled vertex, corner by corner, arcs arriving from
    // nearer corners first and the outgoing arc last.
    let mut rotations: Vec<Vec<u32>> = vec![Vec::new(); t.len()];
    for (i, c) in corners.iter().enumerate() {
        if !c.labelled {
            continue;
        }
        let mut inc = std::mem::take(&mut incoming[i]);
        inc.sort_by_key(|&(o, _)| (i + n - o) % n);
        let rot = &mut rotations[c.vertex];
        rot.extend(inc.iter().map(|&(_, h)| h));
        rot.extend(outgoing[i]);
    }
    at_extra.sort_by_key(|&(o, _)| std::cmp::Reverse(o));
    let extra: Vec<u32> = at_extra.iter().map(|&(_, h)| h).collect();

    let mut sigma = vec![0u32; 2 * edges as usize];
    for rot in rotations.iter().chain(std::iter::once(&extra)) {
        for (k, &h) in rot.iter().enumerate() {
            sigma[h as usize] = rot[(k + 1) % rot.len()];
        }
    }
    let map = PlanarMap::from_rotation(sigma, root_half, None)?;
    let marked = extra.first().map(|&h| map.vertex_of(h));
    let map = map.with_marked(marked)?;
    let map_vertex = rotations.iter().map(|r| r.first().map(|&h| map.vertex_of(h))).collect();
    let map = if flavor == Flavor::Minus { map.reverse_root() } else { map };
    Ok(Embedding { map, map_vertex })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::maps::mobile::{MobileSampler, FACE, FLAGGED_FACE};
    use crate::maps::planar::{pointed_maps, RootSign};
    use crate::maps::solve::{params_at, vertex_weight_params, BoltzmannParams};
    use crate::rng::rng_for;

    fn params(t: f64) -> BoltzmannParams {
        let p = vertex_weight_params(t).unwrap();
        params_at(&p.weights(), p.x, p.y).unwrap()
    }

    fn small_mobile(s: &MobileSampler, flavor: Flavor, rng: &mut crate::rng::Rng) -> Mobile {
        loop {
            if let Some(tree) = s.tree_within(flavor, &[1, 1, 1, 1], Some(400), rng).unwrap() {
                return crate::maps::mobile::decorate(tree, rng).unwrap();
            }
        }
    }

    #[test]
    fn maps_are_planar_with_the_expected_counts_and_distances() {
        for t in [0.5, 1.0, 2.0] {
            let s = MobileSampler::new(&params(t)).unwrap();
            let mut rng = rng_for(21, "bdfg", (t * 10.0) as u64);
            for i in 0..400 {
                let flavor = [Flavor::Plus, Flavor::Zero, Flavor::Minus][i % 3];
                let m = small_mobile(&s, flavor, &mut rng);
                let e = embed(&m, flavor).unwrap();
                let map = &e.map;
                assert_eq!(map.euler_characteristic(), 2, "t = {t}, draw {i}");
                let [n1, n2, n3, n4] = m.type_counts();
                if m.tree.len() > 1 {
                    assert_eq!(map.n_vertices(), n1 + 1);
                    let root_edges = if flavor == Flavor::Zero { 0 } else { 1 };
                    assert_eq!(map.n_edges() + root_edges, n1 + n2 + n3);
                    assert_eq!(map.n_faces(), n3 + n4);
                }
                // Face degrees: two per labelled neighbour, one per flagged one.
                let mut expected: Vec<usize> = (0..m.tree.len())
                    .filter(|&v| matches!(m.tree.type_of(v), FACE | FLAGGED_FACE))
                    .map(|v| {
                        let parent = if m.tree.type_of(v) == FACE { 2 } else { 1 };
                        parent
                            + m.tree.children(v).iter().map(|&c| if m.tree.type_of(c) == LABELLED { 2 } else { 1 }).sum::<usize>()
                    })
                    .collect();
                let mut got = map.face_degrees();
                expected.sort_unstable();
                got.sort_unstable();
                if m.tree.len() > 1 {
                    assert_eq!(got, expected);
                }
                // Labels are distances to the marked vertex, up to a shift.
                let Some(mark) = map.marked() else { continue };
                let dist = map.distances_from(mark);
                let min = (0..m.tree.len())
                    .filter(|&v| m.tree.type_of(v) == LABELLED)
                    .map(|v| m.labels[v])
                    .min();
                for (v, mv) in e.map_vertex.iter().enumerate() {
                    if let (Some(mv), Some(min)) = (mv, min) {
                        if m.tree.len() > 1 {
                            assert_eq!(2 * dist[*mv as usize] as i64, m.labels[v] - min + 2);
                        }
                    }
                }
            }
        }
    }

    fn empirical_vs_exact(flavor: Flavor, sign: RootSign, norm: impl Fn(&BoltzmannParams) -> f64) {
        let p = params(1.0);
        let s = MobileSampler::new(&p).unwrap();
        let mut exact: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let z = norm(&p);
        for m in pointed_maps(3, sign) {
            exact.insert(m.canonical_code(), m.weight(&p.q) / z);
        }
        let draws = 200_000;
        let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut rng = rng_for(22, "bdfg-law", flavor as u64);
        for _ in 0..draws {
            let Some(tree) = s.tree_within(flavor, &[1, 1, 1, 1], Some(12), &mut rng).unwrap() else { continue };
            let m = crate::maps::mobile::decorate(tree, &mut rng).unwrap();
            let map = mobile_to_map(&m, flavor).unwrap();
            if map.n_edges() <= 3 {
                *counts.entry(map.canonical_code()).or_default() += 1;
            }
        }
        for code in counts.keys() {
            assert!(exact.contains_key(code), "sampled map missing from the enumeration");
        }
        for (code, &pr) in &exact {
            let c = counts.get(code).copied().unwrap_or(0) as f64 / draws as f64;
            let sd = (pr * (1.0 - pr) / draws as f64).sqrt();
            assert!((c - pr).abs() < 5.0 * sd + 1e-6, "{flavor:?}: frequency {c} vs probability {pr}");
        }
    }

    #[test]
    fn positive_maps_have_boltzmann_frequencies() {
        empirical_vs_exact(Flavor::Plus, RootSign::Positive, |p| p.x);
    }

    #[test]
    fn null_maps_have_boltzmann_frequencies() {
        empirical_vs_exact(Flavor::Zero, RootSign::Null, |p| p.y * p.y);
    }
}
