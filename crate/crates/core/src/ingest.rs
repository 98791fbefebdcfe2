//! Mortality data ingestion.
//!
//! Reads the HMD "1x1" period text layout (deaths, exposures or rates), builds
//! validated age x year surfaces of central death rates with the log transform
//! applied, and generates synthetic clusters from known decomposition
//! parameters so the rest of the pipeline can be tested against ground truth.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lilee::LiLeeParams;

/// Floor added before taking logs so zero-death cells stay finite.
pub const LOG_EPSILON: f64 = 1e-10;
/// Oldest age kept after truncation.
pub const DEFAULT_AGE_MAX: u32 = 90;
/// Age the HMD open interval token `110+` is mapped to.
pub const OPEN_AGE: u32 = 110;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Deaths,
    Exposures,
    Rates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmdRecord {
    pub year: i32,
    pub age: u32,
    /// Total (both sexes) column; `None` for the `.` missing marker.
    pub total: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HmdTable {
    pub kind: TableKind,
    pub records: Vec<HmdRecord>,
}

impl HmdTable {
    fn lookup(&self) -> std::collections::HashMap<(i32, u32), Option<f64>> {
        self.records
            .iter()
            .map(|r| ((r.year, r.age), r.total))
            .collect()
    }
}

fn parse_year(tok: &str, line: usize) -> Result<Option<i32>> {
    // Territorial-change years appear twice, as "1990-" (old borders) and
    // "1990+" (new borders). Keep the new-border row.
    let (digits, skip) = match tok.strip_suffix('-') {
        Some(d) => (d, true),
        None => (tok.strip_suffix('+').unwrap_or(tok), false),
    };
    let year = digits.parse::<i32>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid year token {tok:?}"),
    })?;
    Ok(if skip { None } else { Some(year) })
}

fn parse_age(tok: &str, line: usize) -> Result<u32> {
    if tok == "110+" {
        return Ok(OPEN_AGE);
    }
    tok.parse::<u32>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid age token {tok:?}"),
    })
}

fn parse_value(tok: &str, line: usize) -> Result<Option<f64>> {
    if tok == "." {
        return Ok(None);
    }
    let v = tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid value token {tok:?}"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Parse {
            line,
            msg: format!("value {tok:?} must be finite and non-negative"),
        });
    }
    Ok(Some(v))
}

/// Parses an HMD 1x1 period file. Header lines up to and including the
/// `Year Age Female Male Total` column line are skipped; if no column line is
/// present every non-blank line is treated as data. Only the Total column is
/// kept.
pub fn parse_hmd_file(text: &str, kind: TableKind) -> Result<HmdTable> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| {
            l.split_whitespace()
                .next()
                .is_some_and(|t| t.eq_ignore_ascii_case("year"))
        })
        .map_or(0, |i| i + 1);

    let mut records = Vec::new();
    let mut prev: Option<(i32, u32)> = None;
    for (idx, raw) in lines.iter().enumerate().skip(start) {
        let line_no = idx + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 columns, found {}", toks.len()),
            });
        }
        let Some(year) = parse_year(toks[0], line_no)? else {
            continue;
        };
        let age = parse_age(toks[1], line_no)?;
        // Female and Male columns are validated but not kept.
        parse_value(toks[2], line_no)?;
        parse_value(toks[3], line_no)?;
        let total = parse_value(toks[4], line_no)?;

        if let Some((py, pa)) = prev {
            let ordered = (year == py && age > pa) || year > py;
            if !ordered {
                return Err(Error::Structure(format!(
                    "line {line_no}: ({year}, {age}) does not follow ({py}, {pa})"
                )));
            }
        }
        prev = Some((year, age));
        records.push(HmdRecord { year, age, total });
    }
    if records.is_empty() {
        return Err(Error::Structure("no data rows found".into()));
    }
    Ok(HmdTable { kind, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Linear interpolation along years within each age; interior gaps only.
    InterpolateYears,
}

/// Central death rates for one country on a contiguous age x year grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySurface {
    pub country: String,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// ages x years
    pub m: Array2<f64>,
    /// `ln(m + LOG_EPSILON)`, ages x years
    pub log_m: Array2<f64>,
    /// Cells filled by the interpolation policy, as (year, age).
    #[serde(default)]
    pub imputed: Vec<(i32, u32)>,
}

impl MortalitySurface {
    /// Builds a surface from a rate matrix, validating the grid and applying
    /// the log transform.
    pub fn from_rates(country: &str, ages: Vec<u32>, years: Vec<i32>, m: Array2<f64>) -> Result<Self> {
        if m.dim() != (ages.len(), years.len()) {
            return Err(Error::Dimension(format!(
                "rate matrix is {:?}, expected {}x{}",
                m.dim(),
                ages.len(),
                years.len()
            )));
        }
        check_contiguous_ages(&ages)?;
        check_contiguous_years(&years)?;
        if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("rate {v} is not a finite non-negative number")));
        }
        let log_m = m.mapv(|v| (v + LOG_EPSILON).ln());
        Ok(Self {
            country: country.to_string(),
            ages,
            years,
            m,
            log_m,
            imputed: Vec::new(),
        })
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }
}

fn check_contiguous_ages(ages: &[u32]) -> Result<()> {
    if ages.first() != Some(&0) || ages.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Structure("ages must be contiguous starting at 0".into()));
    }
    Ok(())
}

fn check_contiguous_years(years: &[i32]) -> Result<()> {
    if years.is_empty() || years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Structure("years must be non-empty and contiguous".into()));
    }
    Ok(())
}

/// Builds a surface for `country` over `year_range` (inclusive) and ages
/// `0..=age_max`. With a deaths table, `exposures` is required and
/// `m = D / E`; with a rates table values pass through.
pub fn build_surface(
    country: &str,
    primary: &HmdTable,
    exposures: Option<&HmdTable>,
    year_range: (i32, i32),
    age_max: u32,
    policy: MissingPolicy,
) -> Result<MortalitySurface> {
    let (y0, y1) = year_range;
    if y1 < y0 {
        return Err(Error::InvalidArgument(format!("empty year range {y0}..={y1}")));
    }
    let ages: Vec<u32> = (0..=age_max).collect();
    let years: Vec<i32> = (y0..=y1).collect();
    let prim = primary.lookup();

    let mut cells: Array2<Option<f64>> = Array2::from_elem((ages.len(), years.len()), None);
    match primary.kind {
        TableKind::Rates => {
            for (ai, &age) in ages.iter().enumerate() {
                for (yi, &year) in years.iter().enumerate() {
                    cells[[ai, yi]] = prim.get(&(year, age)).copied().flatten();
                }
            }
        }
        TableKind::Deaths => {
            let exp = exposures
                .ok_or_else(|| Error::InvalidArgument("deaths table requires an exposures table".into()))?;
            if exp.kind != TableKind::Exposures {
                return Err(Error::InvalidArgument("second table must hold exposures".into()));
            }
            let exp = exp.lookup();
            for (ai, &age) in ages.iter().enumerate() {
                for (yi, &year) in years.iter().enumerate() {
                    let d = prim.get(&(year, age)).copied().flatten();
                    let e = exp.get(&(year, age)).copied().flatten();
                    cells[[ai, yi]] = match (d, e) {
                        (Some(d), Some(e)) if e > 0.0 => Some(d / e),
                        (Some(d), Some(_)) if d > 0.0 => {
                            return Err(Error::Exposure {
                                country: country.to_string(),
                                year,
                                age,
                                deaths: d,
                            })
                        }
                        _ => None,
                    };
                }
            }
        }
        TableKind::Exposures => {
            return Err(Error::InvalidArgument("primary table must hold deaths or rates".into()));
        }
    }

    let mut imputed = Vec::new();
    let mut m = Array2::zeros(cells.dim());
    for ai in 0..ages.len() {
        for yi in 0..years.len() {
            m[[ai, yi]] = match cells[[ai, yi]] {
                Some(v) => v,
                None => match policy {
                    MissingPolicy::Reject => {
                        return Err(Error::DataGap {
                            country: country.to_string(),
                            year: years[yi],
                            age: ages[ai],
                        })
                    }
                    MissingPolicy::InterpolateYears => {
                        let before = (0..yi).rev().find_map(|j| cells[[ai, j]].map(|v| (j, v)));
                        let after = ((yi + 1)..years.len()).find_map(|j| cells[[ai, j]].map(|v| (j, v)));
                        match (before, after) {
                            (Some((j0, v0)), Some((j1, v1))) => {
                                imputed.push((years[yi], ages[ai]));
                                let w = (yi - j0) as f64 / (j1 - j0) as f64;
                                v0 + w * (v1 - v0)
                            }
                            _ => {
                                return Err(Error::DataGap {
                                    country: country.to_string(),
                                    year: years[yi],
                                    age: ages[ai],
                                })
                            }
                        }
                    }
                },
            };
        }
    }
    let mut surface = MortalitySurface::from_rates(country, ages, years, m)?;
    surface.imputed = imputed;
    Ok(surface)
}

/// Which HMD tables a cluster is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HmdSource {
    /// `<CODE>.Mx_1x1.txt`
    #[default]
    Rates,
    /// `<CODE>.Deaths_1x1.txt` over `<CODE>.Exposures_1x1.txt`
    DeathsExposures,
}

/// Standard HMD file name for a country code and table kind.
pub fn hmd_file_name(code: &str, kind: TableKind) -> String {
    let stem = match kind {
        TableKind::Rates => "Mx",
        TableKind::Deaths => "Deaths",
        TableKind::Exposures => "Exposures",
    };
    format!("{code}.{stem}_1x1.txt")
}

fn read_table(dir: &std::path::Path, code: &str, kind: TableKind) -> Result<HmdTable> {
    let path = dir.join(hmd_file_name(code, kind));
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_hmd_file(&text, kind)
}

/// Reads one surface per country code from `dir`, in the given order.
pub fn load_hmd_cluster(
    dir: &std::path::Path,
    countries: &[String],
    source: HmdSource,
    year_range: (i32, i32),
    age_max: u32,
    policy: MissingPolicy,
) -> Result<ClusterDataset> {
    let surfaces = countries
        .iter()
        .map(|code| match source {
            HmdSource::Rates => {
                let t = read_table(dir, code, TableKind::Rates)?;
                build_surface(code, &t, None, year_range, age_max, policy)
            }
            HmdSource::DeathsExposures => {
                let d = read_table(dir, code, TableKind::Deaths)?;
                let e = read_table(dir, code, TableKind::Exposures)?;
                build_surface(code, &d, Some(&e), year_range, age_max, policy)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterDataset::new(surfaces)
}

/// Surfaces of one cluster, in country-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDataset {
    pub surfaces: Vec<MortalitySurface>,
}

impl ClusterDataset {
    pub fn new(surfaces: Vec<MortalitySurface>) -> Result<Self> {
        if surfaces.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a cluster needs at least 2 countries, got {}",
                surfaces.len()
            )));
        }
        let first = &surfaces[0];
        for s in &surfaces[1..] {
            if s.ages != first.ages || s.years != first.years {
                return Err(Error::Dimension(format!(
                    "country {} grid differs from {}",
                    s.country, first.country
                )));
            }
        }
        Ok(Self { surfaces })
    }

    pub fn countries(&self) -> Vec<String> {
        self.surfaces.iter().map(|s| s.country.clone()).collect()
    }

    pub fn ages(&self) -> &[u32] {
        &self.surfaces[0].ages
    }

    pub fn years(&self) -> &[i32] {
        &self.surfaces[0].years
    }

    pub fn year_range(&self) -> (i32, i32) {
        let y = self.years();
        (y[0], y[y.len() - 1])
    }

    pub fn n_countries(&self) -> usize {
        self.surfaces.len()
    }

    /// Reorders surfaces to match `order`; every country must be present.
    pub fn reordered(&self, order: &[String]) -> Result<Self> {
        let surfaces = order
            .iter()
            .map(|c| {
                self.surfaces
                    .iter()
                    .find(|s| &s.country == c)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("country {c} not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(surfaces)
    }

    /// Restricts every surface to `years` (inclusive range).
    pub fn slice_years(&self, first: i32, last: i32) -> Result<Self> {
        let years = self.years();
        let i0 = years
            .iter()
            .position(|&y| y == first)
            .ok_or_else(|| Error::InvalidArgument(format!("year {first} outside data")))?;
        let i1 = years
            .iter()
            .position(|&y| y == last)
            .ok_or_else(|| Error::InvalidArgument(format!("year {last} outside data")))?;
        if i1 < i0 {
            return Err(Error::InvalidArgument("empty year slice".into()));
        }
        let surfaces = self
            .surfaces
            .iter()
            .map(|s| {
                let m = s.m.slice(ndarray::s![.., i0..=i1]).to_owned();
                let mut out = MortalitySurface::from_rates(&s.country, s.ages.clone(), years[i0..=i1].to_vec(), m)?;
                out.log_m = s.log_m.slice(ndarray::s![.., i0..=i1]).to_owned();
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(surfaces)
    }
}

/// Generates a cluster whose log rates follow
/// `alpha + B K + b k + N(0, noise_sd^2)` exactly. Rates are stored as
/// `exp(y) - LOG_EPSILON` so that `log_m` reproduces `y`.
pub fn synthesize_cluster(params: &LiLeeParams, noise_sd: f64, seed: u64) -> Result<ClusterDataset> {
    params.check_dims()?;
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n_ages = params.ages.len();
    let n_years = params.years.len();
    let mut surfaces = Vec::with_capacity(params.countries.len());
    for (i, country) in params.countries.iter().enumerate() {
        let mut log_m = Array2::zeros((n_ages, n_years));
        let mut m = Array2::zeros((n_ages, n_years));
        for x in 0..n_ages {
            for t in 0..n_years {
                let mut y = params.alpha[[i, x]]
                    + params.common_age[x] * params.common_index[t]
                    + params.specific_age[[i, x]] * params.specific_index[[t, i]];
                if noise_sd > 0.0 {
                    y += noise_sd * normal.sample(&mut rng);
                }
                let rate = (y.exp() - LOG_EPSILON).max(0.0);
                m[[x, t]] = rate;
                log_m[[x, t]] = (rate + LOG_EPSILON).ln();
            }
        }
        surfaces.push(MortalitySurface {
            country: country.clone(),
            ages: params.ages.clone(),
            years: params.years.clone(),
            m,
            log_m,
            imputed: Vec::new(),
        });
    }
    ClusterDataset::new(surfaces)
}

/// Writes a cluster as `country,year,age,m` rows.
pub fn write_cluster_csv<W: Write>(data: &ClusterDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Structure(e.to_string());
    w.write_record(["country", "year", "age", "m"]).map_err(io)?;
    for s in &data.surfaces {
        for (yi, year) in s.years.iter().enumerate() {
            for (ai, age) in s.ages.iter().enumerate() {
                w.write_record([
                    s.country.clone(),
                    year.to_string(),
                    age.to_string(),
                    format!("{:?}", s.m[[ai, yi]]),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Structure(e.to_string()))?;
    Ok(())
}

/// Reads the `country,year,age,m` layout. Countries keep first-appearance
/// order; ages above `age_max` are dropped.
pub fn read_cluster_csv<R: Read>(input: R, age_max: u32) -> Result<ClusterDataset> {
    #[derive(Deserialize)]
    struct Row {
        country: String,
        year: i32,
        age: u32,
        m: f64,
    }
    let mut rdr = csv::Reader::from_reader(input);
    let mut order: Vec<String> = Vec::new();
    let mut cells: std::collections::HashMap<String, std::collections::BTreeMap<(i32, u32), f64>> =
        Default::default();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        if row.age > age_max {
            continue;
        }
        if !cells.contains_key(&row.country) {
            order.push(row.country.clone());
        }
        cells.entry(row.country).or_default().insert((row.year, row.age), row.m);
    }
    let mut surfaces = Vec::new();
    for c in &order {
        let map = &cells[c];
        let y0 = map.keys().map(|k| k.0).min().unwrap();
        let y1 = map.keys().map(|k| k.0).max().unwrap();
        let ages: Vec<u32> = (0..=age_max).collect();
        let years: Vec<i32> = (y0..=y1).collect();
        let mut m = Array2::zeros((ages.len(), years.len()));
        for (ai, &age) in ages.iter().enumerate() {
            for (yi, &year) in years.iter().enumerate() {
                m[[ai, yi]] = *map.get(&(year, age)).ok_or_else(|| Error::DataGap {
                    country: c.clone(),
                    year,
                    age,
                })?;
            }
        }
        surfaces.push(MortalitySurface::from_rates(c, ages, years, m)?);
    }
    ClusterDataset::new(surfaces)
}
