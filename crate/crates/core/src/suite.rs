//! The acceptance matrix: thirteen gates, each reporting its statistic,
//! threshold, draw count and runtime.
//!
//! `quick` halves every draw count and doubles every non-zero tolerance.

use std::collections::BTreeMap;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::enumerate::{trees_of_size, trees_up_to};
use crate::error::Result;
use crate::fringe::{fringe_ratio_experiment, top_patterns, tv_distance};
use crate::lattice::{
    conditional_clt_check, joint_size_pmf, tail_asymptotic_check, CltParams, Precision, SesquiExactSampler,
    SesquiModel,
};
use crate::maps::bdfg::mobile_to_map;
use crate::maps::mobile::{aggregated_decoration_count, decorate, Flavor, MobileSampler, FACE, FLAGGED_FACE};
use crate::maps::planar::{pointed_maps, RootSign};
use crate::maps::solve::{crit_residual, params_at, vertex_weight_params, BoltzmannParams};
use crate::maps::weights::{f_bullet, f_diamond, Series};
use crate::maps::{quenched_experiment, QuenchedConfig};
use crate::model::{ratio_to_f64, OffspringModel};
use crate::rng::rng_for;
use crate::sampler::{Conditioning, ConditionedSampler, Method, RootLaw, SampleOptions};
use crate::sin::{exact_extended_law, sample_mixture_within, MixtureLaw, SinTreeSampler};

pub const CRITERIA: u32 = 13;

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub quick: bool,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { quick: false, seed: 20240601 }
    }
}

impl SuiteOptions {
    fn draws(&self, n: usize) -> usize {
        if self.quick {
            n.div_ceil(2)
        } else {
            n
        }
    }

    fn tol(&self, t: f64) -> f64 {
        if self.quick {
            2.0 * t
        } else {
            t
        }
    }
}

/// One line of the acceptance report.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionRow {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// The gated statistic.
    pub value: f64,
    pub threshold: f64,
    pub draws: u64,
    pub stderr: Option<f64>,
    pub runtime_s: f64,
    pub runtime_limit_s: f64,
    /// Named side measurements behind `detail`.
    pub metrics: BTreeMap<String, f64>,
    pub detail: String,
}

impl CriterionRow {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {} value={:.6} threshold={} draws={} runtime={:.1}s | {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.value,
            self.threshold,
            self.draws,
            self.runtime_s,
            self.detail
        )
    }
}

struct Outcome {
    passed: bool,
    value: f64,
    threshold: f64,
    draws: u64,
    stderr: Option<f64>,
    metrics: BTreeMap<String, f64>,
    detail: String,
}

impl Outcome {
    fn exact(passed: bool, value: f64, detail: String) -> Self {
        Self { passed, value, threshold: 0.0, draws: 0, stderr: None, metrics: BTreeMap::new(), detail }
    }

    fn with(mut self, metrics: &[(&str, f64)]) -> Self {
        self.metrics.extend(metrics.iter().map(|&(k, v)| (k.to_string(), v)));
        self
    }
}

pub fn criterion_name(id: u32) -> &'static str {
    match id {
        1 => "cycle-lemma-exactness",
        2 => "lattice-constants",
        3 => "tail-asymptotics",
        4 => "conditional-clt",
        5 => "exact-conditioned-sampler",
        6 => "fringe-convergence",
        7 => "sin-tree-marginal",
        8 => "mixture-law",
        9 => "decoration-counts",
        10 => "bdfg-structure",
        11 => "boltzmann-identity",
        12 => "critical-vertex-weights",
        13 => "quenched-stability",
        _ => "unknown",
    }
}

fn runtime_limit(id: u32) -> f64 {
    match id {
        1 => 10.0,
        2 => 5.0,
        3 | 4 | 5 | 8 => 60.0,
        6 | 11 => 300.0,
        7 | 10 => 120.0,
        9 => 5.0,
        12 => 60.0,
        13 => 600.0,
        _ => f64::INFINITY,
    }
}

/// Runs one criterion; errors become failing rows.
pub fn run_criterion(id: u32, opts: &SuiteOptions) -> CriterionRow {
    let start = Instant::now();
    let out = match id {
        1 => cycle_lemma(),
        2 => lattice_constants(),
        3 => tail_asymptotics(opts),
        4 => conditional_clt(opts),
        5 => exact_sampler(opts),
        6 => fringe_convergence(opts),
        7 => sin_marginal(opts),
        8 => mixture(opts),
        9 => decoration_counts(),
        10 => bdfg_structure(opts),
        11 => boltzmann_identity(opts),
        12 => critical_weights(),
        13 => quenched(opts),
        _ => Err(crate::Error::Invalid(format!("there is no criterion {id}"))),
    };
    let runtime_s = start.elapsed().as_secs_f64();
    let runtime_limit_s = runtime_limit(id);
    let out = out.unwrap_or_else(|e| Outcome {
        passed: false,
        value: f64::NAN,
        threshold: f64::NAN,
        draws: 0,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!("error: {e}"),
    });
    let in_time = runtime_s <= runtime_limit_s;
    let mut detail = out.detail;
    if !in_time {
        detail.push_str(&format!("; runtime above the {runtime_limit_s} s budget"));
    }
    CriterionRow {
        id,
        name: criterion_name(id),
        passed: out.passed && in_time,
        value: out.value,
        threshold: out.threshold,
        draws: out.draws,
        stderr: out.stderr,
        runtime_s,
        runtime_limit_s,
        metrics: out.metrics,
        detail,
    }
}

/// Runs every criterion in order, without short-circuiting.
pub fn run_suite(opts: &SuiteOptions) -> Vec<CriterionRow> {
    (1..=CRITERIA).map(|id| run_criterion(id, opts)).collect()
}

fn e1() -> (SesquiModel, OffspringModel) {
    let s = SesquiModel::e1();
    let m = s.to_offspring_model();
    (s, m)
}

fn cycle_lemma() -> Result<Outcome> {
    let (s, m) = e1();
    let mut mismatches = Vec::new();
    for n in 1..=10u64 {
        let mut by_ell: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (t, p) in trees_of_size(&m, 1, n as usize)? {
            *by_ell.entry(t.count_of(1) as u64).or_insert_with(BigRational::zero) += p;
        }
        if joint_size_pmf(&s, n)? != by_ell {
            mismatches.push(n);
        }
    }
    Ok(Outcome::exact(
        mismatches.is_empty(),
        mismatches.len() as f64,
        format!("sizes with a mismatch: {mismatches:?}; exact rational comparison for n = 1..10"),
    ))
}

fn lattice_constants() -> Result<Outcome> {
    let (s, m) = e1();
    let r = s.full_lattice_report()?;
    let constants = (r.a, r.big_d, r.m, r.d) == (1, 1, 2, 2) && r.m == r.d * r.big_d;
    let support = s.size_support_brute(25);
    let pattern: Vec<usize> = (1..=25).filter(|&n| n as u64 >= r.a && (n as u64 - r.a) % r.big_d == 0).collect();
    let support_ok = support.iter().copied().collect::<Vec<_>>() == pattern;
    let odd = trees_up_to(&m, 1, 12)?.iter().all(|(t, _)| t.count_of(1) % 2 == 1);
    let residues = (1..=25u64).all(|n| r.j_of(n) == Some(1));
    Ok(Outcome::exact(
        constants && support_ok && odd && residues,
        r.m as f64,
        format!(
            "(a, D, m, d) = ({}, {}, {}, {}); sizes to 25 follow a + DN: {support_ok}; #1 odd on all trees to 12 vertices: {odd}; j_n = 1 for n ≤ 25: {residues}",
            r.a, r.big_d, r.m, r.d
        ),
    ))
}

fn tail_asymptotics(opts: &SuiteOptions) -> Result<Outcome> {
    let (s, _) = e1();
    let ratio = tail_asymptotic_check(&s, 2001, Precision::Float)?;
    let tol = opts.tol(0.1);
    Ok(Outcome {
        passed: (ratio - 1.0).abs() <= tol,
        value: ratio,
        threshold: tol,
        draws: 0,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!("P(#T = 2001) n^(3/2) / tail_const = {ratio:.6}; gate |ratio - 1| <= {tol}"),
    })
}

fn conditional_clt(opts: &SuiteOptions) -> Result<Outcome> {
    let (s, _) = e1();
    let params = CltParams::of(&s)?;
    let mu_ok = params.mu == BigRational::new(4.into(), 5.into());
    let rep = conditional_clt_check(&s, 2001, Precision::Float)?;
    let tol = opts.tol(0.05);
    Ok(Outcome {
        passed: mu_ok && rep.ks < tol,
        value: rep.ks,
        threshold: tol,
        draws: 0,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!("KS = {:.5}; mu = {} (expected 4/5), sigma^2 = {}", rep.ks, params.mu, params.sigma2),
    })
}

fn exact_sampler(opts: &SuiteOptions) -> Result<Outcome> {
    let (s, m) = e1();
    let n = 6;
    let exact: Vec<_> = trees_of_size(&m, 1, n)?;
    let total: BigRational = exact.iter().map(|(_, p)| p.clone()).sum();
    let target: BTreeMap<Vec<u8>, f64> =
        exact.iter().map(|(t, p)| (t.canonical_key(), ratio_to_f64(&(p / &total)))).collect();
    let sampler = SesquiExactSampler::new(&s, n as u64)?;
    let draws = opts.draws(100_000);
    let keys: Vec<Vec<u8>> =
        (0..draws).into_par_iter().map(|i| sampler.sample(&mut rng_for(opts.seed, "c5", i as u64)).canonical_key()).collect();
    let mut emp: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for k in keys {
        *emp.entry(k).or_default() += 1.0 / draws as f64;
    }
    let tv = tv_distance(&emp, &target);
    let tol = opts.tol(0.02);
    Ok(Outcome {
        passed: tv < tol,
        value: tv,
        threshold: tol,
        draws: draws as u64,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!("{} shapes of size {n}; {} observed", target.len(), emp.len()),
    })
}

fn fringe_convergence(opts: &SuiteOptions) -> Result<Outcome> {
    let (_, m) = e1();
    let sampler = ConditionedSampler::new(&m, RootLaw::Fixed(1), Conditioning::TotalSize(2001), Method::Auto, 1_000_000)?;
    let patterns: Vec<_> = top_patterns(&m, 1, 5, 9)?.into_iter().map(|(t, _)| t).collect();
    let draws = opts.draws(200);
    let rep = fringe_ratio_experiment(&sampler, &patterns, 1, draws, opts.seed)?;
    let tol = opts.tol(0.05);
    let worst = rep.patterns.iter().map(|p| (p.mean - p.target).abs()).fold(0.0, f64::max);
    let stderr = rep.patterns.iter().map(|p| p.stderr).fold(0.0, f64::max);
    let detail = rep
        .patterns
        .iter()
        .map(|p| format!("{}: {:.4} vs {:.4}", p.pattern, p.mean, p.target))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { passed: worst < tol, value: worst, threshold: tol, draws: draws as u64, stderr: Some(stderr), metrics: BTreeMap::new(), detail })
}

fn sin_marginal(opts: &SuiteOptions) -> Result<Outcome> {
    let (_, m) = e1();
    let max = 5;
    let exact: BTreeMap<Vec<u8>, f64> =
        exact_extended_law(&m, 1, None, 1, max)?.into_iter().map(|(k, p)| (k, ratio_to_f64(&p))).collect();
    let sampler = SinTreeSampler::new(&m, 1, None)?;
    let draws = opts.draws(100_000);
    let sopts = SampleOptions::default();
    let keys: Vec<Option<Vec<u8>>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let t = sampler.sample_within(1, max, &mut rng_for(opts.seed, "c7", i as u64), &sopts)?;
            Ok(t.map(|t| t.pointed.canonical_key()))
        })
        .collect::<Result<_>>()?;
    let mut emp: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for k in keys.into_iter().flatten() {
        *emp.entry(k).or_default() += 1.0 / draws as f64;
    }
    let tv = tv_distance(&emp, &exact);
    let tol = opts.tol(0.02);
    let mass: f64 = exact.values().sum();
    Ok(Outcome {
        passed: tv < tol,
        value: tv,
        threshold: tol,
        draws: draws as u64,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!(
            "depth-1 extended fringe restricted to {} pointed trees with at most {max} vertices (exact mass {mass:.4})",
            exact.len()
        ),
    })
}

fn mixture(opts: &SuiteOptions) -> Result<Outcome> {
    let (_, m) = e1();
    let law = MixtureLaw::new(&m, 1, &[1, 2])?;
    let p = law.probability(1);
    let draws = opts.draws(100_000);
    let sopts = SampleOptions::default();
    let hits: Vec<bool> = (0..draws)
        .into_par_iter()
        .map(|i| Ok(sample_mixture_within(&m, 1, &[1, 2], 1, 64, &mut rng_for(opts.seed, "c8", i as u64), &sopts)?.0 == 1))
        .collect::<Result<_>>()?;
    let freq = hits.iter().filter(|&&h| h).count() as f64 / draws as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    let z = (freq - p).abs() / se;
    let tol = opts.tol(3.0);
    Ok(Outcome {
        passed: z <= tol && law.exact.as_ref().is_some_and(|e| e[0] == "4/5"),
        value: z,
        threshold: tol,
        draws: draws as u64,
        stderr: Some(se),
        metrics: BTreeMap::new(),
        detail: format!("frequency of eta = 1: {freq:.5}; exact {}", law.exact.as_ref().map_or("-", |e| &e[0])),
    })
}

fn decoration_counts() -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut checked = 0;
    for k in 0..=6u32 {
        for kp in 0..=6 - k {
            for (parent, series) in [(FACE, Series::Bullet), (FLAGGED_FACE, Series::Diamond)] {
                checked += 1;
                if aggregated_decoration_count(parent, k as usize, kp as usize)? != series.coefficient(k, kp) {
                    bad.push((parent, k, kp));
                }
            }
        }
    }
    Ok(Outcome::exact(
        bad.is_empty(),
        bad.len() as f64,
        format!("{checked} (parent, k, k') cases compared exactly; mismatches {bad:?}"),
    ))
}

fn uniform_params(t: f64) -> Result<BoltzmannParams> {
    let p = vertex_weight_params(t)?;
    params_at(&p.weights(), p.x, p.y)
}

fn bdfg_structure(opts: &SuiteOptions) -> Result<Outcome> {
    let sampler = MobileSampler::new(&uniform_params(1.0)?)?;
    let draws = opts.draws(10_000);
    let cap = 200_000;
    let done: Vec<[bool; 7]> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(opts.seed, "c10", i as u64);
            let flavor = if i % 2 == 0 { Flavor::Plus } else { Flavor::Zero };
            // Draws above the cap are redrawn, so the maps are conditioned
            // on having at most `cap` mobile vertices.
            let tree = loop {
                if let Some(t) = sampler.tree_within(flavor, &[1, 1, 1, 1], Some(cap), &mut rng)? {
                    break t;
                }
            };
            let mobile = decorate(tree, &mut rng)?;
            let map = mobile_to_map(&mobile, flavor)?;
            let [n1, n2, n3, n4] = mobile.type_counts();
            let (v, e, f) = (map.n_vertices(), map.n_edges(), map.n_faces());
            Ok([
                mobile.tree.len() == 1,
                map.euler_characteristic() == 2,
                v == 1 + n1,
                e == n1 + n3 + n4,
                f == n3 + n4,
                e + 1 == n1 + n3 + n4,
                n2 + usize::from(flavor == Flavor::Zero) == n4,
            ])
        })
        .collect::<Result<_>>()?;
    let count = |j: usize| done.iter().filter(|r| r[j]).count();
    let n = done.len();
    let (single, euler, vert, edge, face, edge_shift) = (count(0), count(1), count(2), count(3), count(4), count(5));
    let frac = |c: usize| c as f64 / n.max(1) as f64;
    let metrics = [
        ("maps", n as f64),
        ("euler", frac(euler)),
        ("vertices", frac(vert)),
        ("edges", frac(edge)),
        ("edges_minus_one", frac(edge_shift)),
        ("faces", frac(face)),
        ("flagged_faces", frac(count(6))),
        ("single_vertex", frac(single)),
    ];
    Ok(Outcome {
        passed: euler == n && vert == n && edge == n,
        value: (n - euler.min(vert).min(edge)) as f64,
        threshold: 0.0,
        draws: n as u64,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!(
            "{n} maps (mobiles with at most {cap} vertices); Euler {euler}/{n}; V = 1 + #1 on {vert}/{n}; E = #1 + #3 + #4 on {edge}/{n}; E = #1 + #3 + #4 - 1 on {edge_shift}/{n}; F = #3 + #4 on {face}/{n} (reported, not gated); {single} one-vertex mobiles"
        ),
    }
    .with(&metrics))
}

fn boltzmann_identity(opts: &SuiteOptions) -> Result<Outcome> {
    let params = uniform_params(1.0)?;
    let sampler = MobileSampler::new(&params)?;
    let max_edges = 3;
    let exact: BTreeMap<Vec<u32>, f64> = pointed_maps(max_edges, RootSign::Positive)
        .into_iter()
        .map(|m| (m.canonical_code(), m.weight(&params.q) / params.x))
        .collect();
    let draws = opts.draws(100_000);
    // |T|_γ with unit weights on types 1, 3 and 4 exceeds the edge count.
    let limit = max_edges as u64 + 1;
    let codes: Vec<Option<Vec<u32>>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(opts.seed, "c11", i as u64);
            let Some(tree) = sampler.tree_within(Flavor::Plus, &[1, 0, 1, 1], Some(limit), &mut rng)? else {
                return Ok(None);
            };
            let map = mobile_to_map(&decorate(tree, &mut rng)?, Flavor::Plus)?;
            Ok((map.n_edges() <= max_edges).then(|| map.canonical_code()))
        })
        .collect::<Result<_>>()?;
    let mut emp: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for c in codes.into_iter().flatten() {
        *emp.entry(c).or_default() += 1.0 / draws as f64;
    }
    let unknown = emp.keys().filter(|k| !exact.contains_key(*k)).count();
    let tv = tv_distance(&emp, &exact);
    let tol = opts.tol(0.02);
    Ok(Outcome {
        passed: tv < tol && unknown == 0,
        value: tv,
        threshold: tol,
        draws: draws as u64,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!(
            "{} pointed positive maps with at most {max_edges} edges (exact mass {:.5}, empirical {:.5}); {unknown} sampled maps outside the enumeration",
            exact.len(),
            exact.values().sum::<f64>(),
            emp.values().sum::<f64>()
        ),
    })
}

fn critical_weights() -> Result<Outcome> {
    let mut worst_fixed: f64 = 0.0;
    let mut worst_crit: f64 = 0.0;
    let mut all_above_one = true;
    let mut parts = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let p = vertex_weight_params(t)?;
        let q = p.weights();
        let r1 = (f_bullet(&q, p.x, p.y)? - (1.0 - 1.0 / p.x)).abs();
        let r2 = (f_diamond(&q, p.x, p.y)? - p.y).abs();
        let r3 = crit_residual(&q, p.x, p.y)?.abs();
        worst_fixed = worst_fixed.max(r1).max(r2);
        worst_crit = worst_crit.max(r3);
        all_above_one &= p.x > 1.0;
        parts.push(format!("t = {t}: x = {:.15}, residuals {r1:.1e} {r2:.1e} {r3:.1e}", p.x));
    }
    let x1 = vertex_weight_params(1.0)?.x;
    let claimed = (2.0 + 2f64.sqrt()) / 3.0;
    let gap = (x1 - claimed).abs();
    parts.push(format!("x(1) - (2 + sqrt 2)/3 = {:.6}; x(1) - 4/3 = {:.1e}", x1 - claimed, x1 - 4.0 / 3.0));
    Ok(Outcome {
        passed: all_above_one && worst_fixed < 1e-10 && worst_crit < 1e-8 && gap < 1e-12,
        value: gap,
        threshold: 1e-12,
        draws: 0,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: parts.join("; "),
    }
    .with(&[
        ("x1", x1),
        ("worst_fixed_point_residual", worst_fixed),
        ("worst_criticality_residual", worst_crit),
        ("all_x_above_one", f64::from(u8::from(all_above_one))),
    ]))
}

fn quenched(opts: &SuiteOptions) -> Result<Outcome> {
    let cfg = QuenchedConfig { draws: opts.draws(800), seed: opts.seed, ..Default::default() };
    let rep = quenched_experiment(&cfg)?;
    let tol = opts.tol(0.1);
    Ok(Outcome {
        passed: rep.tv_halves < tol,
        value: rep.tv_halves,
        threshold: tol,
        draws: cfg.draws as u64,
        stderr: None,
        metrics: BTreeMap::new(),
        detail: format!(
            "{} distinct radius-{} balls over {} corners, heaviest ball mass {:.2e}; flavours (+, 0, -) = {:?}; zero-flavour block defect mean {:.2}, max {}; mean attempts {:.0}",
            rep.distinct_keys,
            cfg.radius,
            2 * cfg.edges as usize * cfg.draws,
            rep.top_key_mass,
            rep.flavor_counts,
            rep.block_defect_mean.unwrap_or(f64::NAN),
            rep.block_defect_max.unwrap_or(0),
            rep.mean_attempts
        ),
    }
    .with(&[
        ("distinct_keys", rep.distinct_keys as f64),
        ("top_key_mass", rep.top_key_mass),
        ("corners", (2 * cfg.edges as usize * cfg.draws) as f64),
    ]))
}
