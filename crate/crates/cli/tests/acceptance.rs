//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset with `cargo test -p tazcar-cli --test acceptance -- 3 5`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma, InverseGamma};

use tazcar::centrality::{
    centralization_denominator, classify_pattern, graph_centralization, node_betweenness, CentralizationVariant, Edge,
    Metric, NetworkPattern, RoadGraph,
};
use tazcar::data::{build_design, DesignMatrix};
use tazcar::eval::{alpha_from_sds, alpha_spatial_share, format_percent, percent_change, r_squared, DicVerdict};
use tazcar::mcmc::conjugate::{sigma_theta_posterior, tau_c_posterior};
use tazcar::mcmc::{fit, fit_counts, irls_poisson_fit, update_sigma_theta, update_tau_c, McmcConfig};
use tazcar::model::{GammaPrior, InverseGammaPrior, ModelSpec};
use tazcar::recovery::{run_recovery, RecoveryOptions};
use tazcar::scalar::Exact;
use tazcar::synth::{generate_lattice, generate_pattern_network, simulate_dataset, CovariateDistributions, Truth};
use tazcar::weights::{build_weights, ProximityMatrix};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

// ---------------------------------------------------------------- 1

/// Every simple path from `s` to `t` with its total length.
fn simple_paths(adj: &[Vec<(usize, u64)>], s: usize, t: usize) -> Vec<(u64, Vec<usize>)> {
    fn walk(adj: &[Vec<(usize, u64)>], at: usize, t: usize, len: u64, path: &mut Vec<usize>, out: &mut Vec<(u64, Vec<usize>)>) {
        if at == t {
            out.push((len, path.clone()));
            return;
        }
        for &(next, w) in &adj[at] {
            if !path.contains(&next) {
                path.push(next);
                walk(adj, next, t, len + w, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(adj, s, t, 0, &mut vec![s], &mut out);
    out
}

/// Ordered-pair betweenness by enumerating every shortest path.
fn brute_force_betweenness(n: usize, edges: &[(usize, usize, u64)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut raw = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let paths = simple_paths(&adj, s, t);
            let Some(best) = paths.iter().map(|p| p.0).min() else { continue };
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.0 == best).map(|p| &p.1).collect();
            for (v, r) in raw.iter_mut().enumerate() {
                if v != s && v != t {
                    let through = shortest.iter().filter(|p| p.contains(&v)).count();
                    *r += through as f64 / shortest.len() as f64;
                }
            }
        }
    }
    raw
}

fn random_connected_graph(rng: &mut ChaCha8Rng, weighted: bool) -> (usize, Vec<(usize, usize, u64)>) {
    let n = rng.random_range(3..=8);
    let density: f64 = rng.random_range(0.0..0.6);
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let weight = |rng: &mut ChaCha8Rng| if weighted { rng.random_range(1..=4) } else { 1 };
    for v in 1..n {
        let u = rng.random_range(0..v);
        seen.insert((u, v));
        let w = weight(rng);
        edges.push((u, v, w));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !seen.contains(&(u, v)) && rng.random::<f64>() < density {
                let w = weight(rng);
                edges.push((u, v, w));
            }
        }
    }
    (n, edges)
}

fn road_graph(n: usize, edges: &[(usize, usize, u64)]) -> RoadGraph {
    let edges = edges
        .iter()
        .map(|&(u, v, w)| Edge { u, v, length_km: Some(w as f64) })
        .collect();
    RoadGraph::new(n, edges).unwrap()
}

fn star(leaves: usize) -> RoadGraph {
    RoadGraph::from_pairs(leaves + 1, &(1..=leaves).map(|v| (0, v)).collect::<Vec<_>>()).unwrap()
}

fn path(n: usize) -> RoadGraph {
    RoadGraph::from_pairs(n, &(1..n).map(|v| (v - 1, v)).collect::<Vec<_>>()).unwrap()
}

fn cycle(n: usize) -> RoadGraph {
    RoadGraph::from_pairs(n, &(0..n).map(|v| (v, (v + 1) % n)).collect::<Vec<_>>()).unwrap()
}

fn complete(n: usize) -> RoadGraph {
    let pairs: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    RoadGraph::from_pairs(n, &pairs).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut graphs = 0;
    for k in 0..300 {
        let weighted = k % 3 == 2;
        let (n, edges) = random_connected_graph(&mut rng, weighted);
        let g = road_graph(n, &edges);
        let metric = if weighted { Metric::EdgeLength } else { Metric::HopCount };
        let ours = node_betweenness::<f64>(&g, metric).unwrap();
        let oracle = brute_force_betweenness(n, &edges);
        let denom = ((n - 1) * (n - 2)) as f64;
        for v in 0..n {
            worst = worst.max((ours.raw[v] - oracle[v]).abs());
            worst = worst.max((ours.normalized[v] - oracle[v] / denom).abs());
        }
        graphs += 1;
    }
    let oracle_ok = worst <= 1e-9;

    let exact = |g: &RoadGraph| node_betweenness::<Exact>(g, Metric::HopCount).unwrap().normalized;
    let r = |a: i64, b: i64| Exact::new(BigInt::from(a), BigInt::from(b));
    let s = exact(&star(4));
    let star_ok = s[0] == r(1, 1) && s[1..].iter().all(|v| *v == r(0, 1));
    let cycle_ok = exact(&cycle(4)).iter().all(|v| *v == r(1, 6));
    let p = exact(&path(4));
    let path_ok = p == vec![r(0, 1), r(2, 3), r(2, 3), r(0, 1)];
    let complete_ok = (3..=8).all(|n| exact(&complete(n)).iter().all(|v| *v == r(0, 1)));
    let elapsed = start.elapsed();
    let pass = oracle_ok && star_ok && cycle_ok && path_ok && complete_ok && elapsed < Duration::from_secs(10);
    Outcome::new(
        pass,
        format!(
            "{graphs} random graphs (N<=8, a third edge-weighted), max |error| {worst:.1e}; star {} 4-cycle {} path {} complete {}; {:.2}s",
            verdict(star_ok),
            verdict(cycle_ok),
            verdict(path_ok),
            verdict(complete_ok),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let variant = CentralizationVariant::Unnormalized;
    let one = Exact::from_integer(BigInt::from(1));
    let zero = Exact::from_integer(BigInt::from(0));
    let star_exact = graph_centralization::<Exact>(&star(4), Metric::HopCount, variant).unwrap() == one;
    let star_float = graph_centralization::<f64>(&star(4), Metric::HopCount, variant).unwrap() == 1.0;
    let cycles = (3..=20).all(|n| {
        graph_centralization::<Exact>(&cycle(n), Metric::HopCount, variant).unwrap() == zero
            && graph_centralization::<f64>(&cycle(n), Metric::HopCount, variant).unwrap() == 0.0
    });
    let completes = (3..=12).all(|n| {
        graph_centralization::<Exact>(&complete(n), Metric::HopCount, variant).unwrap() == zero
            && graph_centralization::<f64>(&complete(n), Metric::HopCount, variant).unwrap() == 0.0
    });
    let identity = (3..=50usize).all(|n| {
        let factored = BigInt::from((n - 1) * (n - 1) * (n - 2));
        centralization_denominator::<Exact>(n) == Exact::from_integer(factored)
            && centralization_denominator::<f64>(n) == ((n - 1) * (n - 1) * (n - 2)) as f64
    });
    let pass = star_exact && star_float && cycles && completes && identity;
    Outcome::new(
        pass,
        format!(
            "star N=5 exact {} float {}; cycles 3..20 {}; complete 3..12 {}; denominator identity N=3..50 {}",
            verdict(star_exact),
            verdict(star_float),
            verdict(cycles),
            verdict(completes),
            verdict(identity)
        ),
    )
}

// ---------------------------------------------------------------- 3

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_3() -> Outcome {
    const SIZE: usize = 5;
    let irregularity = |p: NetworkPattern| match p {
        NetworkPattern::IrregularGrid => 0.2,
        NetworkPattern::Lollipops => 0.2,
        _ => 0.0,
    };
    let mut medians = Vec::new();
    let mut classes = Vec::new();
    for p in NetworkPattern::ORDERED {
        let values: Vec<f64> = (0..50u64)
            .map(|seed| {
                let g = generate_pattern_network(p, SIZE, irregularity(p), seed).unwrap();
                assert_eq!(g.node_count(), SIZE * SIZE);
                graph_centralization::<f64>(&g, Metric::HopCount, CentralizationVariant::Unnormalized).unwrap()
            })
            .collect();
        classes.push(values.iter().map(|&c| classify_pattern(c).unwrap()).collect::<Vec<_>>());
        medians.push(median(values));
    }
    let increasing = medians.windows(2).all(|w| w[0] < w[1]);
    let grid_ok = classes[0].iter().all(|&c| c == NetworkPattern::Grid);
    let lolli_ok = classes[3].iter().all(|&c| c == NetworkPattern::Lollipops);
    let shown: Vec<String> = NetworkPattern::ORDERED
        .iter()
        .zip(&medians)
        .map(|(p, m)| format!("{p} {m:.3}"))
        .collect();
    Outcome::new(
        increasing && grid_ok && lolli_ok,
        format!(
            "medians over 50 seeds, {} nodes: {}; strictly increasing {}; Grid exemplars Grid {}; Lollipops exemplars Lollipops {}",
            SIZE * SIZE,
            shown.join(" < "),
            verdict(increasing),
            verdict(grid_ok),
            verdict(lolli_ok)
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Asymptotic Kolmogorov-Smirnov p-value with the Stephens correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp() * if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn ks_statistic(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    const DRAWS: usize = 100_000;
    let theta = [0.1, 0.1, 0.3, -0.3];
    let ig_prior = InverseGammaPrior { shape: 0.001, scale: 0.001 };
    let ig = sigma_theta_posterior(&theta, ig_prior);
    let ig_params = (ig.shape - 2.001).abs() < 1e-12 && (ig.scale - 0.101).abs() < 1e-12;

    let w = ProximityMatrix::from_triples(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
    let phi = [-0.3, -0.1, 0.1, 0.3];
    let g_prior = GammaPrior { shape: 0.1, rate: 0.1 };
    let g = tau_c_posterior(&phi, &w, 1, g_prior);
    let g_params = (g.shape - 1.6).abs() < 1e-12 && (g.rate - 0.16).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sigma_draws: Vec<f64> = (0..DRAWS).map(|_| update_sigma_theta(&theta, ig_prior, &mut rng)).collect();
    let tau_draws: Vec<f64> = (0..DRAWS).map(|_| update_tau_c(&phi, &w, 1, g_prior, &mut rng)).collect();
    let ig_dist = InverseGamma::new(2.001, 0.101).unwrap();
    let g_dist = Gamma::new(1.6, 0.16).unwrap();
    let p_sigma = ks_p_value(ks_statistic(sigma_draws, |x| ig_dist.cdf(x)), DRAWS);
    let p_tau = ks_p_value(ks_statistic(tau_draws, |x| g_dist.cdf(x)), DRAWS);
    let pass = ig_params && g_params && p_sigma > 0.01 && p_tau > 0.01;
    Outcome::new(
        pass,
        format!(
            "IG({:.6}, {:.6}) {} KS p={p_sigma:.3}; Gamma({:.6}, {:.6}) {} KS p={p_tau:.3}; {DRAWS} draws each",
            ig.shape,
            ig.scale,
            verdict(ig_params),
            g.shape,
            g.rate,
            verdict(g_params)
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Gauss-Hermite rule for the weight `e^{-z^2}` (Golub-Welsch).
fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(m, m, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

const TOY_X: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
const TOY_Y: [u64; 5] = [3, 6, 4, 9, 12];
const TOY_EDGES: [(usize, usize); 5] = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)];
const TOY_PRIOR_VAR: f64 = 1.0e3;

fn toy_design() -> DesignMatrix<f64> {
    let rows = TOY_X.iter().map(|&x| vec![1.0, x]).collect();
    DesignMatrix::from_rows(rows, vec!["intercept".into(), "x".into()]).unwrap()
}

/// Posterior mean of `beta` from log marginal likelihoods on a dense grid
/// spanning eight inflated standard errors around the Poisson MLE.
fn grid_posterior_mean(log_marginal: impl Fn(f64, f64) -> f64) -> ([f64; 2], f64) {
    const POINTS: usize = 81;
    let mle = irls_poisson_fit(&toy_design(), &TOY_Y).unwrap();
    let centre = [mle.beta[0], mle.beta[1]];
    let half = [16.0 * mle.covariance[(0, 0)].sqrt(), 16.0 * mle.covariance[(1, 1)].sqrt()];
    let at = |k: usize, j: usize| centre[k] - half[k] + 2.0 * half[k] * j as f64 / (POINTS - 1) as f64;
    let mut cells = Vec::with_capacity(POINTS * POINTS);
    for a in 0..POINTS {
        for b in 0..POINTS {
            let (b0, b1) = (at(0, a), at(1, b));
            let lp = log_marginal(b0, b1) - (b0 * b0 + b1 * b1) / (2.0 * TOY_PRIOR_VAR);
            cells.push((a, b, b0, b1, lp));
        }
    }
    let top = cells.iter().map(|c| c.4).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m0, mut m1, mut rim) = (0.0, 0.0, 0.0, 0.0f64);
    for &(a, b, b0, b1, lp) in &cells {
        let w = (lp - top).exp();
        z += w;
        m0 += w * b0;
        m1 += w * b1;
        if a == 0 || b == 0 || a == POINTS - 1 || b == POINTS - 1 {
            rim = rim.max(w);
        }
    }
    ([m0 / z, m1 / z], rim)
}

/// Exact posterior of the CAR toy with known `tau_c`: `phi` is integrated
/// over the sum-to-zero subspace by adaptive Gauss-Hermite quadrature.
fn car_toy_oracle(tau_c: f64) -> ([f64; 2], f64) {
    const N: usize = 5;
    const D: usize = N - 1;
    let mut q = DMatrix::<f64>::zeros(N, N);
    for &(i, j) in &TOY_EDGES {
        q[(i, i)] += 1.0;
        q[(j, j)] += 1.0;
        q[(i, j)] -= 1.0;
        q[(j, i)] -= 1.0;
    }
    // orthonormal basis of the sum-to-zero subspace: drop the null eigenvector
    let eig = SymmetricEigen::new(q.clone());
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let basis = DMatrix::from_fn(N, D, |r, c| eig.eigenvectors[(r, order[c + 1])]);
    let k = basis.transpose() * &q * &basis * tau_c;
    let rule = gauss_hermite(8);
    let nodes: Vec<([f64; D], f64)> = {
        let mut out = Vec::new();
        let mut idx = [0usize; D];
        loop {
            let mut z = [0.0; D];
            let mut w = 1.0;
            for d in 0..D {
                z[d] = rule[idx[d]].0;
                w *= rule[idx[d]].1;
            }
            out.push((z, w));
            let mut p = 0;
            while p < D {
                idx[p] += 1;
                if idx[p] < rule.len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
            if p == D {
                break out;
            }
        }
    };
    let b_rows: Vec<[f64; D]> = (0..N).map(|i| std::array::from_fn(|c| basis[(i, c)])).collect();
    let k_arr: [[f64; D]; D] = std::array::from_fn(|r| std::array::from_fn(|c| k[(r, c)]));

    let log_marginal = |b0: f64, b1: f64| -> f64 {
        let eta: Vec<f64> = TOY_X.iter().map(|x| b0 + b1 * x).collect();
        let f = |u: &[f64; D]| -> f64 {
            let mut total = 0.0;
            for i in 0..N {
                let psi = eta[i] + (0..D).map(|c| b_rows[i][c] * u[c]).sum::<f64>();
                total += TOY_Y[i] as f64 * psi - psi.exp();
            }
            let mut quad = 0.0;
            for r in 0..D {
                for c in 0..D {
                    quad += u[r] * k_arr[r][c] * u[c];
                }
            }
            total - 0.5 * quad
        };
        // Newton for the conditional mode of the latent coordinates
        let mut u = DVector::<f64>::zeros(D);
        let mut precision = k.clone();
        for _ in 0..100 {
            let phi = &basis * &u;
            let lambda = DVector::from_fn(N, |i, _| (eta[i] + phi[i]).exp());
            let resid = DVector::from_fn(N, |i, _| TOY_Y[i] as f64 - lambda[i]);
            let grad = basis.transpose() * resid - &k * &u;
            precision = basis.transpose() * DMatrix::from_diagonal(&lambda) * &basis + &k;
            let step = precision.clone().cholesky().unwrap().solve(&grad);
            u += &step;
            if step.amax() < 1e-13 {
                break;
            }
        }
        let a = precision.cholesky().unwrap().inverse().cholesky().unwrap().l();
        let det: f64 = (0..D).map(|d| a[(d, d)]).product();
        let mode: [f64; D] = std::array::from_fn(|d| u[d]);
        let f_mode = f(&mode);
        let mut total = 0.0;
        for (z, w) in &nodes {
            let mut point = mode;
            for r in 0..D {
                for c in 0..=r {
                    point[r] += std::f64::consts::SQRT_2 * a[(r, c)] * z[c];
                }
            }
            let z2: f64 = z.iter().map(|v| v * v).sum();
            total += w * (f(&point) - f_mode + z2).exp();
        }
        f_mode + (total * det * 2f64.powf(D as f64 / 2.0)).ln()
    };
    grid_posterior_mean(log_marginal)
}

/// Exact posterior of the heterogeneity-only toy with known `sigma_theta^2`;
/// the likelihood factorizes, so each `theta_i` is a one-dimensional
/// adaptive Gauss-Hermite integral.
fn theta_toy_oracle(sigma_sq: f64) -> ([f64; 2], f64) {
    let rule = gauss_hermite(24);
    let log_marginal = |b0: f64, b1: f64| -> f64 {
        TOY_X
            .iter()
            .zip(TOY_Y)
            .map(|(x, y)| {
                let eta = b0 + b1 * x;
                let y = y as f64;
                let f = |t: f64| y * (eta + t) - (eta + t).exp() - t * t / (2.0 * sigma_sq);
                let mut t = 0.0;
                let mut curvature = 1.0 / sigma_sq;
                for _ in 0..100 {
                    let lam = (eta + t).exp();
                    curvature = lam + 1.0 / sigma_sq;
                    let step = (y - lam - t / sigma_sq) / curvature;
                    t += step;
                    if step.abs() < 1e-13 {
                        break;
                    }
                }
                let s = (1.0 / curvature).sqrt();
                let f_mode = f(t);
                let sum: f64 = rule
                    .iter()
                    .map(|(z, w)| w * (f(t + std::f64::consts::SQRT_2 * s * z) - f_mode + z * z).exp())
                    .sum();
                f_mode + (sum * s * std::f64::consts::SQRT_2).ln() - 0.5 * (2.0 * std::f64::consts::PI * sigma_sq).ln()
            })
            .sum()
    };
    grid_posterior_mean(log_marginal)
}

fn criterion_5() -> Outcome {
    const TOL: f64 = 0.02;
    let start = Instant::now();
    let design = toy_design();
    let triples: Vec<(usize, usize, f64)> = TOY_EDGES.iter().map(|&(i, j)| (i, j, 1.0)).collect();
    let w = ProximityMatrix::from_triples(5, &triples).unwrap();
    let config = McmcConfig { burn_in: 20_000, iterations: 200_000, seed: 11, ..McmcConfig::default() };

    let tau_c = 2.0;
    let car_spec = ModelSpec { heterogeneity: false, fixed_tau_c: Some(tau_c), ..ModelSpec::default() };
    let car = fit_counts(&TOY_Y, &design, Some(&w), &car_spec, &config).unwrap();
    let (car_exact, car_rim) = car_toy_oracle(tau_c);

    let sigma_sq = 0.3;
    let theta_spec = ModelSpec { spatial: false, fixed_sigma_theta_sq: Some(sigma_sq), ..ModelSpec::default() };
    let het = fit_counts(&TOY_Y, &design, None, &theta_spec, &config).unwrap();
    let (het_exact, het_rim) = theta_toy_oracle(sigma_sq);

    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (label, report, exact) in [("CAR", &car, car_exact), ("theta", &het, het_exact)] {
        let got: Vec<f64> = report.coefficients.iter().map(|c| c.mean).collect();
        worst = worst.max((got[0] - exact[0]).abs()).max((got[1] - exact[1]).abs());
        parts.push(format!(
            "{label}: sampler ({:.4}, {:.4}) grid ({:.4}, {:.4})",
            got[0], got[1], exact[0], exact[1]
        ));
    }
    let grid_ok = car_rim < 1e-8 && het_rim < 1e-8;
    let elapsed = start.elapsed();
    let pass = worst <= TOL && grid_ok && elapsed < Duration::from_secs(60);
    Outcome::new(
        pass,
        format!(
            "{}; max |diff| {worst:.4} (tol {TOL}); grid covers the mass {}; {:.1}s",
            parts.join("; "),
            verdict(grid_ok),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let options = RecoveryOptions::default();
    let summary = run_recovery(&Truth::default(), &ModelSpec::default(), &options).unwrap();
    let reps = summary.replicates.len();
    let worst_rhat = summary.replicates.iter().map(|r| r.max_coefficient_rhat).fold(1.0, f64::max);
    let rhat_ok = summary.replicates.iter().all(|r| r.max_coefficient_rhat < 1.1);
    let min_covered = (summary.min_coverage() * reps as f64).round() as usize;
    let coverage_ok = summary.coverage.iter().all(|c| c * reps as f64 >= 16.0 - 1e-9);

    let mut within = 0;
    let mut in_interval = 0;
    let mut deviations = Vec::new();
    for r in &summary.replicates {
        let (Some(est), Some(inj)) = (r.alpha_mean, r.injected_share) else { continue };
        deviations.push(est - inj);
        if (est - inj).abs() <= 0.15 {
            within += 1;
        }
        if r.alpha_interval.is_some_and(|(lo, hi)| lo <= inj && inj <= hi) {
            in_interval += 1;
        }
    }
    let alpha_ok = within == reps;
    let mean_dev = deviations.iter().sum::<f64>() / deviations.len().max(1) as f64;
    let worst_dev = deviations.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let budget_ok = elapsed < Duration::from_secs(30 * 60);
    Outcome::new(
        rhat_ok && coverage_ok && alpha_ok && budget_ok,
        format!(
            "{reps} reps {}x{}, {} chains {}/{}: (a) max beta R-hat {worst_rhat:.3} {}; (b) min coverage {min_covered}/{reps} {}; \
             (c) alpha within 0.15 in {within}/{reps} {} (mean dev {mean_dev:+.3}, worst {worst_dev:.3}, injected share inside 95% BCI {in_interval}/{reps}); {:.0}s",
            options.lattice,
            options.lattice,
            options.config.chains,
            options.config.burn_in,
            options.config.iterations,
            verdict(rhat_ok),
            verdict(coverage_ok),
            verdict(alpha_ok),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 7

/// DIC(theta-only) - DIC(CAR) for one simulated dataset.
fn dic_gap(truth: &Truth, lattice: usize, seed: u64, config: &McmcConfig) -> f64 {
    let topology = generate_lattice(lattice, 4).unwrap();
    let (records, _) = simulate_dataset(&topology, truth, &CovariateDistributions::default(), seed).unwrap();
    let car_spec = ModelSpec { design: truth.design.clone(), ..ModelSpec::default() };
    let theta_spec = ModelSpec { spatial: false, ..car_spec.clone() };
    let design = build_design::<f64>(&records, &car_spec.design).unwrap();
    let weights = build_weights::<f64>(&topology, car_spec.proximity);
    let config = McmcConfig { seed, ..config.clone() };
    let car = fit(&records, &design, Some(&weights), &car_spec, &config).unwrap();
    let theta = fit(&records, &design, None, &theta_spec, &config).unwrap();
    theta.dic.dic - car.dic.dic
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let config = McmcConfig { burn_in: 5_000, iterations: 10_000, ..McmcConfig::default() };
    let seeds = 101..=120u64;

    // strong spatial signal: the reference variances on a larger lattice at
    // lower crash counts, where the CAR structure is identifiable
    let mut strong = Truth::default();
    strong.coefficients.insert("intercept".into(), 0.058);
    let strong_gaps: Vec<f64> = seeds.clone().map(|s| dic_gap(&strong, 20, s, &config)).collect();
    let decisive = strong_gaps.iter().filter(|&&d| DicVerdict::from_difference(d) == DicVerdict::Decisive && d > 0.0).count();

    // no spatial signal: heterogeneity only
    let null = Truth { sigma_theta_sq: Some(0.1), tau_c: None, ..Truth::default() };
    let null_gaps: Vec<f64> = seeds.map(|s| dic_gap(&null, 13, s, &config)).collect();
    let equivalent = null_gaps.iter().filter(|&&d| DicVerdict::from_difference(d) == DicVerdict::Equivalent).count();

    let strong_ok = decisive >= 18;
    let null_ok = equivalent * 2 > null_gaps.len();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.1}, {hi:.1}]")
    };
    Outcome::new(
        strong_ok && null_ok,
        format!(
            "with spatial effects (20x20): CAR decisive in {decisive}/20 {} (gap range {}); without (13x13): equivalent in {equivalent}/20 {} (gap range {}); {:.0}s",
            verdict(strong_ok),
            range(&strong_gaps),
            verdict(null_ok),
            range(&null_gaps),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let cases = [(0.443, 0.5574, "56%"), (0.107, 0.1129, "11.3%"), (0.314, 0.3689, "36.9%")];
    let mut pass = true;
    let mut parts = Vec::new();
    for (beta, value, reported) in cases {
        let change = percent_change(beta).unwrap();
        let shown = format_percent(change);
        let ours: f64 = shown.trim_end_matches('%').parse().unwrap();
        let printed: f64 = reported.trim_end_matches('%').parse().unwrap();
        let ok = (change - value).abs() < 5e-5 && (ours - printed).abs() <= 0.5 && (change * 100.0 - printed).abs() <= 0.5;
        pass &= ok;
        parts.push(format!("{beta} -> {change:.4} \"{shown}\" vs \"{reported}\" {}", verdict(ok)));
    }
    Outcome::new(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let y = [1.0, 2.0, 3.0, 6.0];
    let perfect = r_squared(&y, &y).unwrap() == 1.0;
    let at_mean = r_squared(&y, &[3.0; 4]).unwrap() == 0.0;
    let constant = r_squared(&[2.0; 4], &y).is_err();
    let alpha_cases = alpha_from_sds(1.0, 1.0) == Some(0.5)
        && alpha_from_sds(0.0, 2.0) == Some(1.0)
        && alpha_from_sds(3.0, 0.0) == Some(0.0)
        && alpha_from_sds(1.0, 3.0) == Some(0.75)
        && alpha_from_sds(0.0f64, 0.0).is_none();
    // sd(theta) = 1, sd(phi) = 3
    let from_effects =
        alpha_spatial_share(&[-1.0, 0.0, 1.0], &[-3.0, 0.0, 3.0]).unwrap() == Some(0.75);
    let pass = perfect && at_mean && constant && alpha_cases && from_effects;
    Outcome::new(
        pass,
        format!(
            "R2 perfect {} at-mean {} constant-rejected {}; alpha arithmetic {} from effects {}; \
             reported field values (R2 0.774-0.778, alpha 0.854) out of scope: source data unavailable",
            verdict(perfect),
            verdict(at_mean),
            verdict(constant),
            verdict(alpha_cases),
            verdict(from_effects)
        ),
    )
}

// ---------------------------------------------------------------- 10

fn tazcar(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tazcar"));
    cmd.args(args).env_remove("TAZCAR_THREADS");
    if let Some(t) = threads {
        cmd.env("TAZCAR_THREADS", t);
    }
    cmd.output().expect("tazcar runs")
}

fn fit_bytes(dir: &Path, tag: &str, threads: Option<&str>, extra: &[&str]) -> Vec<u8> {
    let data = dir.join("zones.tsv");
    let weights = dir.join("weights.txt");
    let out = dir.join(format!("report-{tag}.json"));
    let mut args = vec![
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--chains",
        "3",
        "--burnin",
        "1000",
        "--iters",
        "2000",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let status = tazcar(&args, threads);
    let code = status.status.code();
    assert!(matches!(code, Some(0) | Some(4)), "fit failed: {}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out).unwrap()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("zones.tsv");
    let weights = dir.path().join("weights.txt");
    let sim = tazcar(
        &[
            "simulate",
            "--lattice",
            "6",
            "--seed",
            "5",
            "--out",
            data.to_str().unwrap(),
            "--weights-out",
            weights.to_str().unwrap(),
        ],
        None,
    );
    assert!(sim.status.success(), "simulate failed: {}", String::from_utf8_lossy(&sim.stderr));

    let first = fit_bytes(dir.path(), "a", Some("1"), &[]);
    let again = fit_bytes(dir.path(), "b", Some("1"), &[]);
    let two = fit_bytes(dir.path(), "c", Some("2"), &[]);
    let flag = fit_bytes(dir.path(), "d", None, &["--threads", "3"]);
    let runs_ok = first == again;
    let threads_ok = first == two && first == flag;
    Outcome::new(
        runs_ok && threads_ok && !first.is_empty(),
        format!(
            "{}-byte report: repeat run identical {}; 1 vs 2 vs 3 threads identical {}",
            first.len(),
            verdict(runs_ok),
            verdict(threads_ok)
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("centrality oracle", criterion_1),
        ("centralization anchors", criterion_2),
        ("pattern ordering", criterion_3),
        ("conjugate updates", criterion_4),
        ("toy posterior oracle", criterion_5),
        ("parameter recovery", criterion_6),
        ("DIC discrimination", criterion_7),
        ("effect-size transforms", criterion_8),
        ("R2 and alpha anchors", criterion_9),
        ("determinism", criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let mark = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {number:>2} [{name}]: {mark} - {}", outcome.detail);
        if !outcome.pass {
            failed.push(number);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
