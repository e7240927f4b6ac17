//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use easemap::ingest::BipartiteIndex;
use easemap::solver::{fit, FitTrace, RatingState, SolverOptions};
use easemap::synth::{generate, GroundTruth};
use easemap::{Hyperparams, MapId, PlayerId, PreparedScore, ScoreValue};

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (k, err) = gk15(f, a, b);
        if err <= tol || depth == 0 || b - a < 1e-300 {
            return k;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 60)
}

/// Regularized incomplete beta at every point of the ascending grid `xs`
/// (which must start at 0 and end at 1), by cumulative quadrature of the
/// beta density with the normalizer integrated the same way.
pub fn incomplete_beta_by_quadrature(a: f64, b: f64, xs: &[f64]) -> Vec<f64> {
    let density = move |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else {
            t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0)
        }
    };
    let mut cumulative = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cumulative[i] = cumulative[i - 1] + integrate(&density, xs[i - 1], xs[i], 1e-17);
    }
    let total = *cumulative.last().unwrap();
    cumulative.iter().map(|c| c / total).collect()
}

/// CDF of the exponential with mean `theta` truncated to `[0, max]`, by
/// quadrature of its density.
pub fn truncated_exp_cdf_by_quadrature(x: f64, theta: f64, max: f64) -> f64 {
    let density = |t: f64| (-t / theta).exp() / theta;
    integrate(&density, 0.0, x, 1e-16) / integrate(&density, 0.0, max, 1e-16)
}

/// An edge as plain strings, for oracles that must not share the index.
#[derive(Debug, Clone)]
pub struct PlainEdge {
    pub player: String,
    pub map: String,
    pub value: f64,
}

pub fn plain_edges(graph: &BipartiteIndex) -> Vec<PlainEdge> {
    graph
        .edges()
        .iter()
        .map(|e| PlainEdge { player: e.player.to_string(), map: e.map.to_string(), value: e.value.get() })
        .collect()
}

/// Arithmetic mean of `s / e` over a player's edges.
pub fn brute_skill(edges: &[PlainEdge], ease: &HashMap<String, f64>, player: &str) -> f64 {
    let est: Vec<f64> = edges.iter().filter(|e| e.player == player).map(|e| e.value / ease[&e.map]).collect();
    est.iter().sum::<f64>() / est.len() as f64
}

/// Arithmetic mean of `s / p` over a map's edges.
pub fn brute_ease(edges: &[PlainEdge], skill: &HashMap<String, f64>, map: &str) -> f64 {
    let est: Vec<f64> = edges.iter().filter(|e| e.map == map).map(|e| e.value / skill[&e.player]).collect();
    est.iter().sum::<f64>() / est.len() as f64
}

/// Mean of the smallest half of `|s - p e|`, all of them for a single edge.
pub fn brute_error(edges: &[PlainEdge], skill: &HashMap<String, f64>, ease: &HashMap<String, f64>) -> f64 {
    let mut errs: Vec<f64> = edges.iter().map(|e| (e.value - skill[&e.player] * ease[&e.map]).abs()).collect();
    // selection by repeated minimum, independent of any sort
    let keep = if errs.len() <= 1 { errs.len() } else { errs.len() / 2 };
    let mut total = 0.0;
    for _ in 0..keep {
        let (i, &v) = errs.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        total += v;
        errs.swap_remove(i);
    }
    total / keep as f64
}

pub fn state_maps(graph: &BipartiteIndex, state: &RatingState) -> (HashMap<String, f64>, HashMap<String, f64>) {
    let skill = graph.players().iter().map(|p| p.to_string()).zip(state.skill.iter().copied()).collect();
    let ease = graph.maps().iter().map(|m| m.to_string()).zip(state.ease.iter().copied()).collect();
    (skill, ease)
}

pub fn edge(p: &str, m: &str, v: f64) -> PreparedScore {
    PreparedScore {
        player: PlayerId::new(p).unwrap(),
        map: MapId::new(m).unwrap(),
        value: ScoreValue::new(v).unwrap(),
        adjusted_raw: None,
        timestamp: 0,
    }
}

/// No top-proportion cut and no sd trim: plain averaging.
pub fn plain_hp() -> Hyperparams {
    Hyperparams { aggregation_topscores_p: 1.0, aggregation_topscores_sd_range: None, ..Default::default() }
}

pub struct SyntheticFit {
    pub truth: GroundTruth,
    pub graph: BipartiteIndex,
    pub state: RatingState,
    pub trace: FitTrace,
}

pub fn fit_synthetic(
    n_players: usize,
    n_maps: usize,
    density: f64,
    noise_sd: f64,
    seed: u64,
    hp: &Hyperparams,
    opts: &SolverOptions,
) -> SyntheticFit {
    let truth = GroundTruth::random(n_players, n_maps, noise_sd, seed).unwrap();
    let ds = generate(&truth, density, hp.truncexp_max).unwrap();
    let graph = BipartiteIndex::from_edges(ds.edges);
    let (state, trace) = fit(&graph, hp, opts).unwrap();
    SyntheticFit { truth, graph, state, trace }
}
