//! Zone-level analysis dataset and the dummy-coded design matrix.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::centrality::{analyze, CentralizationVariant, Metric, NetworkPattern, RoadGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dominant land use of a zone. `Industrial` is the reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandUse {
    Industrial,
    Commercial,
    Educational,
    Technical,
    Residential,
    Greenspace,
    Agricultural,
}

impl LandUse {
    pub const ALL: [LandUse; 7] = [
        LandUse::Industrial,
        LandUse::Commercial,
        LandUse::Educational,
        LandUse::Technical,
        LandUse::Residential,
        LandUse::Greenspace,
        LandUse::Agricultural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandUse::Industrial => "Industrial",
            LandUse::Commercial => "Commercial",
            LandUse::Educational => "Educational",
            LandUse::Technical => "Technical",
            LandUse::Residential => "Residential",
            LandUse::Greenspace => "Greenspace",
            LandUse::Agricultural => "Agricultural",
        }
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandUse {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LandUse::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown land use `{s}`")))
    }
}

/// Continuous zone covariates.
///
/// `SignalDensity` is signalized intersections per arterial kilometer; it
/// is also reported under the alias "signal spacing".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    AreaKm2,
    LnProduction,
    LnAttraction,
    ArterialLengthKm,
    AccessDensity,
    SignalDensity,
    RoadDensity,
}

impl Covariate {
    pub const ALL: [Covariate; 7] = [
        Covariate::AreaKm2,
        Covariate::LnProduction,
        Covariate::LnAttraction,
        Covariate::ArterialLengthKm,
        Covariate::AccessDensity,
        Covariate::SignalDensity,
        Covariate::RoadDensity,
    ];

    /// Covariates of the arterial crash model, in reporting order.
    pub const MODEL_DEFAULT: [Covariate; 6] = [
        Covariate::LnProduction,
        Covariate::LnAttraction,
        Covariate::ArterialLengthKm,
        Covariate::AccessDensity,
        Covariate::SignalDensity,
        Covariate::RoadDensity,
    ];

    pub fn column_name(self) -> &'static str {
        match self {
            Covariate::AreaKm2 => "area_km2",
            Covariate::LnProduction => "ln_production",
            Covariate::LnAttraction => "ln_attraction",
            Covariate::ArterialLengthKm => "arterial_length_km",
            Covariate::AccessDensity => "access_density",
            Covariate::SignalDensity => "signal_density",
            Covariate::RoadDensity => "road_density",
        }
    }

    pub fn value(self, r: &ZoneRecord) -> f64 {
        match self {
            Covariate::AreaKm2 => r.area_km2,
            Covariate::LnProduction => r.ln_production,
            Covariate::LnAttraction => r.ln_attraction,
            Covariate::ArterialLengthKm => r.arterial_length_km,
            Covariate::AccessDensity => r.access_density,
            Covariate::SignalDensity => r.signal_density,
            Covariate::RoadDensity => r.road_density,
        }
    }
}

/// One traffic analysis zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub zone_id: String,
    pub area_km2: f64,
    pub ln_production: f64,
    pub ln_attraction: f64,
    pub arterial_length_km: f64,
    pub access_density: f64,
    pub signal_density: f64,
    pub road_density: f64,
    pub pattern: NetworkPattern,
    pub land_use: LandUse,
    /// Crashes on arterials inside the zone.
    pub crash_count: u64,
}

impl ZoneRecord {
    pub fn validate(&self) -> Result<()> {
        for c in Covariate::ALL {
            let v = c.value(self);
            if !v.is_finite() {
                return Err(Error::Validation(format!("{} is not finite", c.column_name())));
            }
        }
        if self.area_km2 <= 0.0 {
            return Err(Error::Validation(format!("area_km2 must be positive, got {}", self.area_km2)));
        }
        if self.arterial_length_km <= 0.0 {
            return Err(Error::Validation(format!(
                "arterial_length_km must be positive, got {}",
                self.arterial_length_km
            )));
        }
        for c in [Covariate::AccessDensity, Covariate::SignalDensity, Covariate::RoadDensity] {
            if c.value(self) < 0.0 {
                return Err(Error::Validation(format!("{} must be nonnegative", c.column_name())));
            }
        }
        if self.pattern == NetworkPattern::Unclassifiable {
            return Err(Error::Validation("pattern must be one of the four classified patterns".into()));
        }
        Ok(())
    }
}

/// Column order of the dataset file.
pub const DATASET_COLUMNS: [&str; 11] = [
    "zone_id",
    "area_km2",
    "ln_production",
    "ln_attraction",
    "arterial_length_km",
    "access_density",
    "signal_density",
    "road_density",
    "pattern",
    "land_use",
    "crash_count",
];

/// A rejected data row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses dataset text, keeping good rows and reporting bad ones.
///
/// A missing or misnamed header column fails the whole load.
pub fn parse_dataset_lenient(text: &str) -> Result<(Vec<ZoneRecord>, Vec<RowError>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Validation("dataset is empty".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut index = [0usize; 11];
    for (slot, col) in index.iter_mut().zip(DATASET_COLUMNS) {
        *slot = names
            .iter()
            .position(|n| *n == col)
            .ok_or_else(|| Error::parse(1, format!("missing column `{col}`")))?;
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            rejected.push(RowError {
                line: line_no,
                message: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
            continue;
        }
        let get = |k: usize| fields[index[k]];
        match parse_row(get) {
            Ok(r) => records.push(r),
            Err(e) => rejected.push(RowError {
                line: line_no,
                message: e,
            }),
        }
    }
    Ok((records, rejected))
}

fn parse_row<'a>(get: impl Fn(usize) -> &'a str) -> std::result::Result<ZoneRecord, String> {
    let num = |k: usize| {
        get(k)
            .parse::<f64>()
            .map_err(|_| format!("{} is not numeric: `{}`", DATASET_COLUMNS[k], get(k)))
    };
    let crash = get(10);
    let crash_count = match crash.parse::<i64>() {
        Ok(c) if c < 0 => return Err(format!("crash_count must be nonnegative, got {c}")),
        Ok(c) => c as u64,
        Err(_) => return Err(format!("crash_count is not an integer: `{crash}`")),
    };
    let record = ZoneRecord {
        zone_id: get(0).to_string(),
        area_km2: num(1)?,
        ln_production: num(2)?,
        ln_attraction: num(3)?,
        arterial_length_km: num(4)?,
        access_density: num(5)?,
        signal_density: num(6)?,
        road_density: num(7)?,
        pattern: get(8).parse().map_err(|e: Error| e.to_string())?,
        land_use: get(9).parse().map_err(|e: Error| e.to_string())?,
        crash_count,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Strict parse: any rejected row fails the load with every row error listed.
pub fn parse_dataset(text: &str) -> Result<Vec<ZoneRecord>> {
    let (records, rejected) = parse_dataset_lenient(text)?;
    if let Some(first) = rejected.first() {
        let all: Vec<String> = rejected.iter().map(ToString::to_string).collect();
        return Err(Error::parse(first.line, all.join("; ")));
    }
    if records.is_empty() {
        return Err(Error::Validation("dataset has no rows".into()));
    }
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ZoneRecord>> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn dataset_to_text(records: &[ZoneRecord]) -> String {
    let mut out = DATASET_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}\n",
            r.zone_id,
            r.area_km2,
            r.ln_production,
            r.ln_attraction,
            r.arterial_length_km,
            r.access_density,
            r.signal_density,
            r.road_density,
            r.pattern,
            r.land_use,
            r.crash_count
        ));
    }
    out
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[ZoneRecord]) -> Result<()> {
    std::fs::write(path, dataset_to_text(records))?;
    Ok(())
}

/// Picks a zone's pattern from an explicit label and/or its road network.
///
/// The explicit label wins; a disagreeing network adds a warning.
pub fn resolve_pattern(
    explicit: Option<NetworkPattern>,
    graph: Option<&RoadGraph>,
) -> Result<(NetworkPattern, Option<String>)> {
    let computed = match graph {
        Some(g) => Some(analyze::<f64>(g, Metric::HopCount, CentralizationVariant::Unnormalized)?.pattern),
        None => None,
    };
    match (explicit, computed) {
        (Some(p), Some(c)) if p != c => Ok((
            p,
            Some(format!("explicit pattern {p} disagrees with road-network classification {c}")),
        )),
        (Some(p), _) => Ok((p, None)),
        (None, Some(NetworkPattern::Unclassifiable)) => {
            Err(Error::Domain("road network too small to classify".into()))
        }
        (None, Some(c)) => Ok((c, None)),
        (None, None) => Err(Error::Validation("zone has neither a pattern nor a road network".into())),
    }
}

/// Which columns enter the design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub covariates: Vec<Covariate>,
    pub include_pattern: bool,
    pub include_land_use: bool,
    /// Center and scale continuous columns; coefficients are reported back
    /// on the raw scale.
    pub standardize: bool,
    /// Experimental: `ln(arterial_length_km)` as a fixed offset.
    pub arterial_length_offset: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            covariates: Covariate::MODEL_DEFAULT.to_vec(),
            include_pattern: true,
            include_land_use: true,
            standardize: false,
            arterial_length_offset: false,
        }
    }
}

/// Row-major `n x p` covariate matrix whose column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    labels: Vec<String>,
    /// `(mean, sd)` used to standardize each column; `None` for raw columns.
    scaling: Vec<Option<(T, T)>>,
    offset: Option<Vec<T>>,
    pub warnings: Vec<String>,
}

/// Pattern dummies in reporting order (base: Grid).
pub const PATTERN_LEVELS: [NetworkPattern; 3] = [
    NetworkPattern::IrregularGrid,
    NetworkPattern::Mixed,
    NetworkPattern::Lollipops,
];

/// Land-use dummies in reporting order (base: Industrial).
pub const LAND_USE_LEVELS: [LandUse; 6] = [
    LandUse::Commercial,
    LandUse::Educational,
    LandUse::Technical,
    LandUse::Residential,
    LandUse::Greenspace,
    LandUse::Agricultural,
];

pub fn build_design<T: Scalar>(records: &[ZoneRecord], options: &DesignOptions) -> Result<DesignMatrix<T>> {
    if records.is_empty() {
        return Err(Error::Validation("cannot build a design from zero records".into()));
    }
    let mut labels = vec!["intercept".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; records.len()]];
    let mut continuous = vec![false];
    for &c in &options.covariates {
        labels.push(c.column_name().to_string());
        columns.push(records.iter().map(|r| c.value(r)).collect());
        continuous.push(true);
    }
    if options.include_pattern {
        for level in PATTERN_LEVELS {
            if records.iter().any(|r| r.pattern == NetworkPattern::Unclassifiable) {
                return Err(Error::Validation("record with unclassifiable pattern".into()));
            }
            labels.push(format!("pattern:{level}"));
            columns.push(records.iter().map(|r| f64::from(u8::from(r.pattern == level))).collect());
            continuous.push(false);
        }
    }
    if options.include_land_use {
        for level in LAND_USE_LEVELS {
            labels.push(format!("land_use:{level}"));
            columns.push(records.iter().map(|r| f64::from(u8::from(r.land_use == level))).collect());
            continuous.push(false);
        }
    }
    let mut warnings = Vec::new();
    let mut scaling = vec![None; columns.len()];
    for (k, col) in columns.iter_mut().enumerate().skip(1) {
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let constant = col.iter().all(|&v| v == col[0]);
        if constant {
            warnings.push(format!("column `{}` is constant", labels[k]));
        }
        if continuous[k] && options.standardize && !constant {
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len().max(2) - 1) as f64;
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v = (*v - mean) / sd;
            }
            scaling[k] = Some((T::lit(mean), T::lit(sd)));
        }
    }
    let rows = records.len();
    let cols = columns.len();
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        values.extend(columns.iter().map(|c| T::lit(c[i])));
    }
    let offset = options
        .arterial_length_offset
        .then(|| records.iter().map(|r| T::lit(r.arterial_length_km.ln())).collect());
    Ok(DesignMatrix {
        rows,
        cols,
        values,
        labels,
        scaling,
        offset,
        warnings,
    })
}

impl<T: Scalar> DesignMatrix<T> {
    /// Design from raw row-major values; column 0 must be all ones.
    pub fn from_rows(rows: Vec<Vec<T>>, labels: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let p = labels.len();
        if n == 0 || p == 0 {
            return Err(Error::Dimension("design needs at least one row and column".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Dimension(format!("row {bad} has {} columns, expected {p}", rows[bad].len())));
        }
        if rows.iter().any(|r| r[0] != T::one()) {
            return Err(Error::Validation("column 0 must be the intercept (all ones)".into()));
        }
        Ok(Self {
            rows: n,
            cols: p,
            values: rows.into_iter().flatten().collect(),
            labels,
            scaling: vec![None; p],
            offset: None,
            warnings: Vec::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> T {
        self.values[i * self.cols + k]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn offset(&self) -> Option<&[T]> {
        self.offset.as_deref()
    }

    pub fn is_standardized(&self) -> bool {
        self.scaling.iter().any(Option::is_some)
    }

    /// Maps coefficients on standardized columns back to raw units.
    pub fn back_transform(&self, beta: &[T]) -> Vec<T> {
        let mut out = beta.to_vec();
        for (k, s) in self.scaling.iter().enumerate() {
            if let Some((mean, sd)) = *s {
                out[k] = beta[k] / sd;
                out[0] -= beta[k] * mean / sd;
            }
        }
        out
    }

    /// `x_i . beta` plus the offset when present.
    pub fn linear_part(&self, i: usize, beta: &[T]) -> T {
        let base = self
            .row(i)
            .iter()
            .zip(beta)
            .fold(T::zero(), |acc, (&x, &b)| acc + x * b);
        match &self.offset {
            Some(o) => base + o[i],
            None => base,
        }
    }

    /// Numerical column rank via SVD.
    pub fn rank(&self) -> usize {
        let m = DMatrix::from_row_slice(
            self.rows,
            self.cols,
            &self.values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>(),
        );
        let sv = m.svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let tol = max * (self.rows.max(self.cols) as f64) * f64::EPSILON;
        sv.iter().filter(|&&s| s > tol).count()
    }
}

/// Table-2 style summary of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSummary {
    pub name: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
}

pub fn summarize_values(name: &str, values: &[f64]) -> Result<CovariateSummary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Domain(format!("sd undefined for {n} observation(s) of {name}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(CovariateSummary {
        name: name.to_string(),
        mean,
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        sd: var.sqrt(),
    })
}

/// Summary of every continuous covariate.
pub fn summarize(records: &[ZoneRecord]) -> Result<Vec<CovariateSummary>> {
    Covariate::ALL
        .iter()
        .map(|&c| {
            let values: Vec<f64> = records.iter().map(|r| c.value(r)).collect();
            summarize_values(c.column_name(), &values)
        })
        .collect()
}
