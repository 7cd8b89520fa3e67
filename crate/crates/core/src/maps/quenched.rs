//! Quenched stability of local balls in large Boltzmann maps.
//!
//! Maps with exactly `n` edges are drawn by exact rejection: a flavour is
//! chosen with the Boltzmann weights, a mobile is grown with early abort
//! and kept only if it encodes `n` edges. The result is a pointed map; the
//! mark is forgotten by weighting each map with `1/V`, which turns the
//! pointed law back into the rooted one.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::ball::{local_ball, Center};
use super::bdfg::mobile_to_map;
use super::mobile::{decorate, weighted_size, Flavor, MobileSampler, SizeWeights};
use super::planar::PlanarMap;
use super::solve::{params_at, vertex_weight_params};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

/// `|T|_γ = edges + 1` for every flavour.
pub const EDGE_WEIGHTS: SizeWeights = [1, 0, 1, 1];

#[derive(Clone, Debug, Serialize)]
pub struct MapDraw {
    pub map: PlanarMap,
    pub flavor: Flavor,
    pub attempts: u64,
    /// For the zero flavour: `|T|_γ` minus the larger of the two glued blocks.
    pub block_defect: Option<u64>,
}

/// Draws a pointed Boltzmann map with exactly `edges` edges.
pub fn sample_map_with_edges(s: &MobileSampler, edges: u64, budget: u64, rng: &mut Rng) -> Result<MapDraw> {
    let target = edges + 1;
    let [(_, plus), (_, zero), _] = s.flavor_weights();
    for attempt in 1..=budget {
        let u: f64 = rng.random();
        let flavor = if u < plus {
            Flavor::Plus
        } else if u < plus + zero {
            Flavor::Zero
        } else {
            Flavor::Minus
        };
        let Some(tree) = s.tree_within(flavor, &EDGE_WEIGHTS, Some(target), rng)? else { continue };
        if weighted_size(&tree, &EDGE_WEIGHTS) != target {
            continue;
        }
        let block_defect = (flavor == Flavor::Zero).then(|| {
            let biggest =
                tree.children(0).iter().map(|&c| weighted_size(&tree.fringe(c), &EDGE_WEIGHTS)).max().unwrap_or(0);
            target - biggest
        });
        let mobile = decorate(tree, rng)?;
        let map = mobile_to_map(&mobile, flavor)?;
        return Ok(MapDraw { map, flavor, attempts: attempt, block_defect });
    }
    Err(Error::BudgetExhausted { attempts: budget, accepted: 0, rate: 0.0 })
}

/// Uniform half-edge: a uniform edge and a fair coin for its direction.
pub fn uniform_half_edge(map: &PlanarMap, rng: &mut Rng) -> Option<u32> {
    if map.n_edges() == 0 {
        return None;
    }
    let e = rng.random_range(0..map.n_edges() as u32);
    Some(2 * e + u32::from(rng.random_bool(0.5)))
}

pub fn key_hash(key: &[u32]) -> u64 {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    h.finish()
}

/// Law of the radius-`r` ball at a uniform corner, keyed by hashed ball codes.
pub fn quenched_law(map: &PlanarMap, r: u32) -> BTreeMap<u64, f64> {
    let n = map.n_half_edges();
    let mut law = BTreeMap::new();
    if n == 0 {
        law.insert(key_hash(&local_ball(map, Center::Vertex(0), r).key), 1.0);
        return law;
    }
    let w = 1.0 / n as f64;
    for h in 0..n as u32 {
        *law.entry(key_hash(&local_ball(map, Center::Corner(h), r).key)).or_default() += w;
    }
    law
}

pub fn total_variation(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
    let mut s = 0.0;
    for (k, &p) in a {
        s += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            s += q;
        }
    }
    (s / 2.0).min(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct QuenchedConfig {
    /// Vertex weight of the dual map; face weights are `t λ(t)^n`.
    pub t: f64,
    pub edges: u64,
    pub draws: usize,
    pub radius: u32,
    pub seed: u64,
    /// Compare balls of the dual (vertex-weighted) map instead of the
    /// face-weighted one.
    pub dual: bool,
    pub budget: u64,
}

impl Default for QuenchedConfig {
    fn default() -> Self {
        Self { t: 1.0, edges: 500, draws: 800, radius: 2, seed: 3, dual: true, budget: 50_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuenchedReport {
    pub config: QuenchedConfig,
    /// Total variation between the ball laws of the two halves.
    pub tv_halves: f64,
    pub distinct_keys: usize,
    /// Probability of the most common ball.
    pub top_key_mass: f64,
    pub mean_attempts: f64,
    pub flavor_counts: [usize; 3],
    /// Mean and maximum of the zero-flavour block defect.
    pub block_defect_mean: Option<f64>,
    pub block_defect_max: Option<u64>,
}

/// Per-ball probabilities in the first and second half of the draws.
pub type BallTable = BTreeMap<u64, (f64, f64)>;

/// Draws the maps of a quenched experiment; draw `i` uses its own stream.
pub fn quenched_draws(cfg: &QuenchedConfig) -> Result<Vec<MapDraw>> {
    if cfg.draws < 2 {
        return Err(Error::Invalid("at least two draws are needed".into()));
    }
    let p = vertex_weight_params(cfg.t)?;
    let params = params_at(&p.weights(), p.x, p.y)?;
    if !params.critical {
        return Err(Error::NotAdmissible(format!("weights at t = {} are not critical", cfg.t)));
    }
    let sampler = MobileSampler::new(&params)?;
    (0..cfg.draws)
        .into_par_iter()
        .map(|i| sample_map_with_edges(&sampler, cfg.edges, cfg.budget, &mut rng_for(cfg.seed, "quenched", i as u64)))
        .collect()
}

/// Splits the draws into two halves and compares their averaged
/// corner-ball laws.
pub fn quenched_analysis(cfg: &QuenchedConfig, draws: &[MapDraw]) -> Result<(QuenchedReport, BallTable)> {
    if draws.len() < 2 {
        return Err(Error::Invalid("at least two draws are needed".into()));
    }
    let laws: Vec<(f64, BTreeMap<u64, f64>)> = draws
        .par_iter()
        .map(|d| {
            let weight = 1.0 / d.map.n_vertices() as f64;
            let law = if cfg.dual { quenched_law(&d.map.dual(), cfg.radius) } else { quenched_law(&d.map, cfg.radius) };
            (weight, law)
        })
        .collect();
    let half = laws.len() / 2;
    let average = |part: &[(f64, BTreeMap<u64, f64>)]| {
        let total: f64 = part.iter().map(|d| d.0).sum();
        let mut law: BTreeMap<u64, f64> = BTreeMap::new();
        for (w, l) in part {
            for (&k, &p) in l {
                *law.entry(k).or_default() += w * p / total;
            }
        }
        law
    };
    let (a, b) = (average(&laws[..half]), average(&laws[half..]));
    let all = average(&laws);
    let mut table: BallTable = a.iter().map(|(&k, &p)| (k, (p, 0.0))).collect();
    for (&k, &q) in &b {
        table.entry(k).or_default().1 = q;
    }
    let mut flavor_counts = [0; 3];
    for d in draws {
        flavor_counts[d.flavor as usize] += 1;
    }
    let defects: Vec<u64> = draws.iter().filter_map(|d| d.block_defect).collect();
    let report = QuenchedReport {
        config: cfg.clone(),
        tv_halves: total_variation(&a, &b),
        distinct_keys: all.len(),
        top_key_mass: all.values().copied().fold(0.0, f64::max),
        mean_attempts: draws.iter().map(|d| d.attempts as f64).sum::<f64>() / draws.len() as f64,
        flavor_counts,
        block_defect_mean: (!defects.is_empty()).then(|| defects.iter().sum::<u64>() as f64 / defects.len() as f64),
        block_defect_max: defects.iter().copied().max(),
    };
    Ok((report, table))
}

pub fn quenched_experiment(cfg: &QuenchedConfig) -> Result<QuenchedReport> {
    Ok(quenched_analysis(cfg, &quenched_draws(cfg)?)?.0)
}
