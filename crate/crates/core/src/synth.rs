//! Synthetic zone lattices, road-network patterns and crash datasets drawn
//! from known parameters.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::centrality::{NetworkPattern, RoadGraph};
use crate::data::{build_design, DesignOptions, LandUse, ZoneRecord};
use crate::error::{Error, Result};
use crate::eval::alpha_spatial_share;
use crate::model::{car_conditional, center_phi, CarConditional, PSI_CLAMP};
use crate::weights::{build_weights, NeighborPair, ProximityMatrix, WeightMode, ZoneTopology};

/// Gibbs sweeps used to draw an ICAR field.
pub const ICAR_SWEEPS: usize = 200;
/// Connected re-draws allowed when deleting grid edges.
pub const MAX_REDRAWS: usize = 100;

/// `m x m` rook-adjacent zones numbered row by row, with unit boundaries
/// and `lanes` arterial lanes across every shared edge.
pub fn generate_lattice(m: usize, lanes: u32) -> Result<ZoneTopology> {
    if m < 2 {
        return Err(Error::Validation(format!("lattice side must be at least 2, got {m}")));
    }
    let mut pairs = Vec::with_capacity(2 * m * (m - 1));
    for r in 0..m {
        for c in 0..m {
            let i = r * m + c;
            if c + 1 < m {
                pairs.push(NeighborPair { i, j: i + 1, boundary_km: 1.0, lanes });
            }
            if r + 1 < m {
                pairs.push(NeighborPair { i, j: i + m, boundary_km: 1.0, lanes });
            }
        }
    }
    ZoneTopology::new(m * m, pairs)
}

fn lattice_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    edges
}

/// Road network of roughly `size * size` intersections in the given pattern.
///
/// `irregularity` in `[0, 1)` is the share of grid edges removed for
/// `IrregularGrid` and, for `Lollipops`, the share of dead ends that leave
/// the trunk away from its middle. `Mixed` ignores it.
pub fn generate_pattern_network(pattern: NetworkPattern, size: usize, irregularity: f64, seed: u64) -> Result<RoadGraph> {
    if size < 3 {
        return Err(Error::Validation(format!("network size must be at least 3, got {size}")));
    }
    if !(0.0..1.0).contains(&irregularity) {
        return Err(Error::Validation(format!("irregularity must lie in [0, 1), got {irregularity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    match pattern {
        NetworkPattern::Grid => RoadGraph::from_pairs(n, &lattice_edges(size, size)),
        NetworkPattern::IrregularGrid => {
            let all = lattice_edges(size, size);
            let remove = ((all.len() as f64) * irregularity).round() as usize;
            for _ in 0..MAX_REDRAWS {
                let mut edges = all.clone();
                edges.shuffle(&mut rng);
                edges.truncate(all.len() - remove);
                edges.sort_unstable();
                let g = RoadGraph::from_pairs(n, &edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Domain(format!(
                "no connected irregular grid after {MAX_REDRAWS} draws; lower the irregularity"
            )))
        }
        NetworkPattern::Mixed => {
            // grid on the upper half, a random tree below hanging off the
            // bottom grid row
            let rows = size.div_ceil(2);
            let grid_nodes = rows * size;
            let mut edges = lattice_edges(rows, size);
            let bottom = (rows - 1) * size;
            for v in grid_nodes..n {
                let parent = if v == grid_nodes || rng.random::<f64>() < 0.5 {
                    bottom + rng.random_range(0..size)
                } else {
                    rng.random_range(grid_nodes..v)
                };
                edges.push((parent, v));
            }
            RoadGraph::from_pairs(n, &edges)
        }
        NetworkPattern::Lollipops => {
            // short trunk, every other node is a dead end off a trunk node
            let trunk = (size / 2).max(2);
            let mut edges: Vec<(usize, usize)> = (1..trunk).map(|v| (v - 1, v)).collect();
            let middle = trunk / 2;
            for v in trunk..n {
                let parent = if rng.random::<f64>() < irregularity {
                    rng.random_range(0..trunk)
                } else {
                    middle
                };
                edges.push((parent, v));
            }
            RoadGraph::from_pairs(n, &edges)
        }
        NetworkPattern::Unclassifiable => Err(Error::Validation("cannot generate an unclassifiable network".into())),
    }
}

/// Mean and standard deviation of a continuous covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    /// Log-normal with these moments.
    fn log_normal(self) -> Result<LogNormal<f64>> {
        if !(self.mean > 0.0 && self.sd > 0.0) {
            return Err(Error::Validation(format!("positive covariate needs mean and sd > 0, got {self:?}")));
        }
        let s2 = (1.0 + (self.sd / self.mean).powi(2)).ln();
        LogNormal::new(self.mean.ln() - s2 / 2.0, s2.sqrt()).map_err(|e| Error::Validation(e.to_string()))
    }

    fn normal(self) -> Result<Normal<f64>> {
        Normal::new(self.mean, self.sd).map_err(|e| Error::Validation(e.to_string()))
    }
}

/// Covariate generator. Positive quantities are log-normal, the log trip
/// counts normal; categories are drawn with the given weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateDistributions {
    pub area_km2: Moments,
    pub ln_production: Moments,
    pub ln_attraction: Moments,
    pub arterial_length_km: Moments,
    pub access_density: Moments,
    pub signal_density: Moments,
    pub road_density: Moments,
    /// Grid, IrregularGrid, Mixed, Lollipops.
    pub pattern_weights: [f64; 4],
    /// In `LandUse::ALL` order.
    pub land_use_weights: [f64; 7],
}

impl Default for CovariateDistributions {
    fn default() -> Self {
        Self {
            area_km2: Moments::new(3.26, 2.4),
            ln_production: Moments::new(9.89, 0.88),
            ln_attraction: Moments::new(9.84, 0.96),
            arterial_length_km: Moments::new(3.13, 2.05),
            access_density: Moments::new(2.08, 1.31),
            signal_density: Moments::new(1.74, 0.75),
            road_density: Moments::new(3.11, 2.13),
            pattern_weights: [0.25; 4],
            land_use_weights: [1.0; 7],
        }
    }
}

/// Generating parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Keyed by design column label.
    pub coefficients: BTreeMap<String, f64>,
    /// `None` leaves `theta` at zero.
    pub sigma_theta_sq: Option<f64>,
    /// `None` leaves `phi` at zero.
    pub tau_c: Option<f64>,
    #[serde(default)]
    pub proximity: WeightMode,
    #[serde(default)]
    pub design: DesignOptions,
}

impl Default for Truth {
    /// Estimates of the first-order adjacency model fitted to suburban
    /// arterial crashes, used as a realistic ground truth.
    fn default() -> Self {
        let coefficients = [
            ("intercept", 2.361),
            ("ln_production", 0.073),
            ("ln_attraction", -0.086),
            ("arterial_length_km", 0.177),
            ("access_density", 0.107),
            ("signal_density", 0.314),
            ("road_density", -0.027),
            ("pattern:IrregularGrid", 0.443),
            ("pattern:Mixed", 0.537),
            ("pattern:Lollipops", 0.692),
            ("land_use:Commercial", 0.15),
            ("land_use:Educational", 0.024),
            ("land_use:Technical", -0.115),
            ("land_use:Residential", 0.198),
            ("land_use:Greenspace", -0.082),
            ("land_use:Agricultural", 0.019),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            coefficients,
            sigma_theta_sq: Some(1.0 / 632.2),
            tau_c: Some(2.525),
            proximity: WeightMode::Adjacency,
            design: DesignOptions::default(),
        }
    }
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_theta_sq", self.sigma_theta_sq), ("tau_c", self.tau_c)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Validation(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some((k, v)) = self.coefficients.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("coefficient {k} is {v}")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let truth: Self = serde_json::from_str(text)?;
        truth.validate()?;
        Ok(truth)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    /// Coefficients in the column order of `labels`.
    pub fn beta_for(&self, labels: &[String]) -> Result<Vec<f64>> {
        let missing: Vec<&str> = labels
            .iter()
            .filter(|l| !self.coefficients.contains_key(*l))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!("truth lacks coefficients for {missing:?}")));
        }
        if let Some(extra) = self.coefficients.keys().find(|k| !labels.contains(k)) {
            return Err(Error::Validation(format!("truth coefficient `{extra}` is not a design column")));
        }
        Ok(labels.iter().map(|l| self.coefficients[l]).collect())
    }
}

/// Realized latent values behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTruth {
    pub truth: Truth,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `sd(phi) / (sd(theta) + sd(phi))` of the realized effects.
    pub spatial_share: Option<f64>,
}

impl SimulatedTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One ICAR draw: `sweeps` Gibbs passes from a standard normal start, then
/// centered per connected component. Islands stay at 0.
pub fn draw_icar(w: &ProximityMatrix<f64>, tau_c: f64, sweeps: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = w.len();
    let mut phi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for i in w.islands() {
        phi[i] = 0.0;
    }
    for _ in 0..sweeps {
        for i in 0..n {
            if let CarConditional::Normal { mean, variance } = car_conditional(&phi, w, tau_c, i) {
                let z: f64 = rng.sample(StandardNormal);
                phi[i] = mean + variance.sqrt() * z;
            }
        }
    }
    center_phi(&mut phi, &w.connected_components());
    phi
}

fn draw_records(n: usize, dist: &CovariateDistributions, rng: &mut ChaCha8Rng) -> Result<Vec<ZoneRecord>> {
    let area = dist.area_km2.log_normal()?;
    let production = dist.ln_production.normal()?;
    let attraction = dist.ln_attraction.normal()?;
    let arterial = dist.arterial_length_km.log_normal()?;
    let access = dist.access_density.log_normal()?;
    let signal = dist.signal_density.log_normal()?;
    let road = dist.road_density.log_normal()?;
    let bad = |e: rand::distr::weighted::Error| Error::Validation(format!("category weights: {e}"));
    let pattern = WeightedIndex::new(dist.pattern_weights).map_err(bad)?;
    let land_use = WeightedIndex::new(dist.land_use_weights).map_err(bad)?;
    Ok((0..n)
        .map(|i| ZoneRecord {
            zone_id: format!("Z{:03}", i + 1),
            area_km2: area.sample(rng),
            ln_production: production.sample(rng),
            ln_attraction: attraction.sample(rng),
            arterial_length_km: arterial.sample(rng),
            access_density: access.sample(rng),
            signal_density: signal.sample(rng),
            road_density: road.sample(rng),
            pattern: NetworkPattern::ORDERED[pattern.sample(rng)],
            land_use: LandUse::ALL[land_use.sample(rng)],
            crash_count: 0,
        })
        .collect())
}

/// Draws covariates, random effects and Poisson crash counts for every
/// zone of `topology`. The same seed always gives the same dataset.
pub fn simulate_dataset(
    topology: &ZoneTopology,
    truth: &Truth,
    covariates: &CovariateDistributions,
    seed: u64,
) -> Result<(Vec<ZoneRecord>, SimulatedTruth)> {
    truth.validate()?;
    let n = topology.zone_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = draw_records(n, covariates, &mut rng)?;
    let design = build_design::<f64>(&records, &truth.design)?;
    let beta = truth.beta_for(design.labels())?;

    let theta: Vec<f64> = match truth.sigma_theta_sq {
        Some(s2) => (0..n).map(|_| s2.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect(),
        None => vec![0.0; n],
    };
    let phi = match truth.tau_c {
        Some(tau) => draw_icar(&build_weights(topology, truth.proximity), tau, ICAR_SWEEPS, &mut rng),
        None => vec![0.0; n],
    };
    let mut lambda = Vec::with_capacity(n);
    for (i, record) in records.iter_mut().enumerate() {
        let psi = design.linear_part(i, &beta) + theta[i] + phi[i];
        if !(psi <= PSI_CLAMP) {
            return Err(Error::Domain(format!(
                "log mean {psi:.2} at zone {} overflows; rejecting the truth",
                record.zone_id
            )));
        }
        let l = psi.exp();
        record.crash_count = Poisson::new(l)
            .map_err(|e| Error::Domain(format!("Poisson mean {l}: {e}")))?
            .sample(&mut rng) as u64;
        lambda.push(l);
    }
    let spatial_share = alpha_spatial_share(&theta, &phi)?;
    Ok((
        records,
        SimulatedTruth {
            truth: truth.clone(),
            seed,
            theta,
            phi,
            lambda,
            spatial_share,
        },
    ))
}
