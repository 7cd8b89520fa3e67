use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use mtgw_core::fringe::{decode_pointed, vertex_outcome_counts, FringeOutcome, Selector};
use mtgw_core::lattice::{conditional_clt_check, tail_asymptotic_check, CltParams, Precision, SesquiModel};
use mtgw_core::maps::{quenched_analysis, quenched_draws, QuenchedConfig};
use mtgw_core::model::ratio_to_f64;
use mtgw_core::sampler::{Conditioning, ConditionedSampler, Method, RootLaw, SampleOptions};
use mtgw_core::sin::{exact_extended_law, SinTreeSampler};
use mtgw_core::suite::{run_criterion, SuiteOptions, CRITERIA};
use mtgw_core::{rng_for, Error, MultiTypeTree, OffspringModel, PointedTree, TypeId};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{summary, write_csv, write_json, write_jsonl};
use crate::{FringeArgs, LltArgs, MapSampleArgs, SampleArgs, SinTreeArgs, SuiteArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Run,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn config(e: impl Display) -> Self {
        Self { kind: FailureKind::Config, message: e.to_string() }
    }

    pub fn run(e: impl Display) -> Self {
        Self { kind: FailureKind::Run, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PossiblyNonExtinct { .. } | Error::BudgetExhausted { .. } | Error::Overflow(_) => Failure::run(e),
            _ => Failure::config(e),
        }
    }
}

type Outcome = Result<bool, Failure>;

/// Sizes the global rayon pool from `MTGW_THREADS`.
pub fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MTGW_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Failure::config(format!("MTGW_THREADS must be a count, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::run)
}

fn load_model(path: &Path) -> Result<OffspringModel, Failure> {
    OffspringModel::from_json_file(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn parse_condition(s: &str) -> Result<Option<Conditioning>, Failure> {
    let bad = || Failure::config(format!("cannot parse condition {s:?}; expected none, total=N or types=T:K,T:K"));
    if s == "none" {
        return Ok(None);
    }
    let (kind, value) = s.split_once('=').ok_or_else(bad)?;
    match kind {
        "total" => Ok(Some(Conditioning::TotalSize(value.parse().map_err(|_| bad())?))),
        "types" => {
            let mut counts = BTreeMap::new();
            for part in value.split(',') {
                let (t, k) = part.split_once(':').ok_or_else(bad)?;
                counts.insert(t.parse::<TypeId>().map_err(|_| bad())?, k.parse::<u64>().map_err(|_| bad())?);
            }
            Ok(Some(Conditioning::TypeVector(counts)))
        }
        _ => Err(bad()),
    }
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::config(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Serialize)]
struct TreeLine<'a> {
    index: usize,
    size: usize,
    type_counts: BTreeMap<TypeId, usize>,
    tree: &'a MultiTypeTree,
}

pub fn sample(a: SampleArgs) -> Outcome {
    let model = load_model(&a.model.model)?;
    let trees: Vec<MultiTypeTree> = match parse_condition(&a.condition)? {
        Some(cond) => {
            let s = ConditionedSampler::new(&model, RootLaw::Fixed(a.root), cond, Method::Auto, a.budget)?;
            (0..a.count).into_par_iter().map(|i| s.sample(&mut rng_for(a.seed, "sample", i as u64))).collect::<Result<_, _>>()?
        }
        None => {
            let root = RootLaw::Fixed(a.root);
            root.validate(&model)?;
            let opts = SampleOptions::default();
            (0..a.count)
                .into_par_iter()
                .map(|i| mtgw_core::sampler::sample_tree_with(&model, &root, &mut rng_for(a.seed, "sample", i as u64), &opts))
                .collect::<Result<_, _>>()?
        }
    };
    if let Some(out) = &a.out {
        let lines: Vec<TreeLine> = trees
            .iter()
            .enumerate()
            .map(|(index, t)| TreeLine { index, size: t.len(), type_counts: t.type_counts(), tree: t })
            .collect();
        write_jsonl(out, &lines)?;
    }
    let mean = trees.iter().map(|t| t.len() as f64).sum::<f64>() / trees.len().max(1) as f64;
    summary(&serde_json::json!({ "command": "sample", "count": trees.len(), "mean_size": mean }))?;
    Ok(true)
}

#[derive(Serialize)]
struct FringeRow {
    key: String,
    empirical: f64,
    target: f64,
    abs_err: f64,
}

pub fn fringe(a: FringeArgs) -> Outcome {
    positive("--tol", a.tol)?;
    let model = load_model(&a.model.model)?;
    let cond = parse_condition(&a.condition)?.ok_or_else(|| Failure::config("fringe needs a conditioning event"))?;
    let sampler = ConditionedSampler::new(&model, RootLaw::Fixed(a.root), cond, Method::Auto, a.budget)?;
    let target = exact_extended_law(&model, a.kappa, None, a.h, a.max_size)?;
    let laws: Vec<BTreeMap<FringeOutcome, f64>> = (0..a.draws)
        .into_par_iter()
        .map(|i| {
            let t = sampler.sample(&mut rng_for(a.seed, "fringe", i as u64))?;
            let counts = vertex_outcome_counts(&t, &Selector::Type(a.kappa), a.h, Some(a.kappa));
            let total: u64 = counts.values().sum();
            Ok::<_, Error>(counts.into_iter().map(|(k, c)| (k, c as f64 / total.max(1) as f64)).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut empirical: BTreeMap<FringeOutcome, f64> = BTreeMap::new();
    for law in &laws {
        for (k, p) in law {
            *empirical.entry(k.clone()).or_default() += p / a.draws as f64;
        }
    }

    let mut keyed: Vec<(Vec<u8>, f64)> = target.iter().map(|(k, p)| (k.clone(), ratio_to_f64(p))).collect();
    keyed.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    let row = |key: String, empirical: f64, target: f64| FringeRow { key, empirical, target, abs_err: (empirical - target).abs() };
    let mut rows = Vec::new();
    for (k, p) in &keyed {
        let e = empirical.get(&FringeOutcome::Pointed(k.clone())).copied().unwrap_or(0.0);
        rows.push(row(decode_pointed(k)?.display(), e, *p));
    }
    let listed: f64 = keyed.iter().map(|(_, p)| p).sum();
    let larger: f64 = empirical
        .iter()
        .filter(|(k, _)| matches!(k, FringeOutcome::Pointed(key) if !target.contains_key(key)))
        .map(|(_, p)| p)
        .sum();
    rows.push(row(format!("larger than {} vertices", a.max_size), larger, 1.0 - listed));
    rows.push(row("overflow".into(), empirical.get(&FringeOutcome::Overflow).copied().unwrap_or(0.0), 0.0));

    let worst = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
    if let Some(out) = &a.out {
        write_csv(out, &rows)?;
    }
    let passed = worst < a.tol;
    summary(&serde_json::json!({
        "command": "fringe", "draws": a.draws, "h": a.h, "rows": rows.len(),
        "max_abs_err": worst, "threshold": a.tol, "passed": passed,
    }))?;
    Ok(passed)
}

#[derive(Serialize)]
struct SinLine<'a> {
    index: usize,
    depth: usize,
    gamma: Option<TypeId>,
    size: usize,
    spine: &'a [usize],
    display: String,
    tree: &'a PointedTree,
}

pub fn sin_tree(a: SinTreeArgs) -> Outcome {
    let model = load_model(&a.model.model)?;
    let gamma = a.gamma.filter(|&g| g != a.kappa);
    let sampler = SinTreeSampler::new(&model, a.kappa, gamma)?;
    let opts = SampleOptions::default();
    let draws: Vec<_> = (0..a.draws)
        .into_par_iter()
        .map(|i| sampler.sample(a.depth, &mut rng_for(a.seed, "sin-tree", i as u64), &opts))
        .collect::<Result<_, _>>()?;
    if let Some(out) = &a.out {
        let lines: Vec<SinLine> = draws
            .iter()
            .enumerate()
            .map(|(index, s)| SinLine {
                index,
                depth: s.depth,
                gamma: s.gamma,
                size: s.pointed.tree.len(),
                spine: &s.spine,
                display: s.pointed.display(),
                tree: &s.pointed,
            })
            .collect();
        write_jsonl(out, &lines)?;
    }
    let mean = draws.iter().map(|s| s.pointed.tree.len() as f64).sum::<f64>() / draws.len().max(1) as f64;
    summary(&serde_json::json!({ "command": "sin-tree", "draws": draws.len(), "mean_size": mean }))?;
    Ok(true)
}

#[derive(Serialize)]
struct LltReport {
    n: u64,
    a: u64,
    #[serde(rename = "D")]
    big_d: u64,
    m: u64,
    d: u64,
    j_n: Option<u64>,
    mu: f64,
    mu_exact: String,
    sigma2: f64,
    sigma2_exact: String,
    tail_const: f64,
    tail_ratio: f64,
    ks: f64,
    mean_fraction: f64,
}

pub fn llt(a: LltArgs) -> Outcome {
    let model = load_model(&a.model.model)?;
    let s = SesquiModel::from_offspring_model(&model, a.fertile)?;
    let lattice = s.full_lattice_report()?;
    let clt = CltParams::of(&s)?;
    let precision = if a.exact { Precision::Exact } else { Precision::Float };
    let tail_ratio = tail_asymptotic_check(&s, a.n, precision)?;
    let c = conditional_clt_check(&s, a.n, precision)?;
    let report = LltReport {
        n: a.n,
        a: lattice.a,
        big_d: lattice.big_d,
        m: lattice.m,
        d: lattice.d,
        j_n: lattice.j_of(a.n),
        mu: ratio_to_f64(&clt.mu),
        mu_exact: clt.mu.to_string(),
        sigma2: ratio_to_f64(&clt.sigma2),
        sigma2_exact: clt.sigma2.to_string(),
        tail_const: clt.tail_const,
        tail_ratio,
        ks: c.ks,
        mean_fraction: c.mean_fraction,
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    summary(&report)?;
    Ok(true)
}

#[derive(Serialize)]
struct BallRow {
    ball: String,
    first_half: f64,
    second_half: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct MapLine {
    index: usize,
    flavor: String,
    attempts: u64,
    vertices: usize,
    edges: usize,
    faces: usize,
    involution: Vec<u32>,
    rotation: Vec<u32>,
    root: Option<u32>,
    marked: Option<u32>,
}

pub fn map_sample(a: MapSampleArgs) -> Outcome {
    if a.unit != "edges" {
        return Err(Failure::config(format!("--unit {} is not supported; use edges", a.unit)));
    }
    positive("--t", a.t)?;
    positive("--tol", a.tol)?;
    let cfg = QuenchedConfig {
        t: a.t,
        edges: a.n,
        draws: a.draws,
        radius: a.radius,
        seed: a.seed,
        dual: !a.primal,
        budget: a.budget,
    };
    let draws = quenched_draws(&cfg)?;
    let (report, table) = quenched_analysis(&cfg, &draws)?;
    if let Some(out) = &a.out {
        let rows: Vec<BallRow> = table
            .iter()
            .map(|(k, &(p, q))| BallRow { ball: format!("{k:016x}"), first_half: p, second_half: q, abs_diff: (p - q).abs() })
            .collect();
        write_csv(out, &rows)?;
    }
    if let Some(path) = &a.maps {
        let lines: Vec<MapLine> = draws
            .iter()
            .enumerate()
            .map(|(index, d)| {
                let h = d.map.n_half_edges() as u32;
                MapLine {
                    index,
                    flavor: format!("{:?}", d.flavor).to_lowercase(),
                    attempts: d.attempts,
                    vertices: d.map.n_vertices(),
                    edges: d.map.n_edges(),
                    faces: d.map.n_faces(),
                    involution: (0..h).map(|x| x ^ 1).collect(),
                    rotation: (0..h).map(|x| d.map.sigma(x)).collect(),
                    root: d.map.root(),
                    marked: d.map.marked(),
                }
            })
            .collect();
        write_jsonl(path, &lines)?;
    }
    let passed = report.tv_halves < a.tol;
    summary(&serde_json::json!({ "command": "map-sample", "report": report, "threshold": a.tol, "passed": passed }))?;
    Ok(passed)
}

#[derive(Serialize)]
struct SuiteRow<'a> {
    id: u32,
    name: &'a str,
    passed: bool,
    value: f64,
    threshold: f64,
    draws: u64,
    stderr: Option<f64>,
    runtime_s: f64,
    runtime_limit_s: f64,
    detail: &'a str,
}

pub fn suite(a: SuiteArgs) -> Outcome {
    let ids: Vec<u32> = if a.only.is_empty() { (1..=CRITERIA).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
        return Err(Failure::config(format!("there is no criterion {bad}")));
    }
    let opts = SuiteOptions { quick: a.quick, seed: a.seed };
    let rows: Vec<_> = ids
        .iter()
        .map(|&id| {
            let r = run_criterion(id, &opts);
            println!("{}", r.line());
            r
        })
        .collect();
    if let Some(out) = &a.out {
        let csv_rows: Vec<SuiteRow> = rows
            .iter()
            .map(|r| SuiteRow {
                id: r.id,
                name: r.name,
                passed: r.passed,
                value: r.value,
                threshold: r.threshold,
                draws: r.draws,
                stderr: r.stderr,
                runtime_s: r.runtime_s,
                runtime_limit_s: r.runtime_limit_s,
                detail: &r.detail,
            })
            .collect();
        write_csv(out, &csv_rows)?;
    }
    Ok(rows.iter().all(|r| r.passed))
}
