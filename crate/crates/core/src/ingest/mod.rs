//! Input-file loading, validation, and serialization.
//!
//! All tables are CSV with a header row except the distance index, which is
//! JSON. Loaders validate the documented invariants and keep raw values;
//! probability rows are used as relative weights downstream, which makes the
//! load -> save cycle byte-exact.

pub mod synth;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;

use crate::error::{Error, Result};
use crate::world::{
    bin_age, AgeGroup, BedCounts, County, Facility, FacilityCategory, FacilityId, COMMUNITY,
    N_COUNTIES,
};

pub const FACILITIES_FILE: &str = "facilities.csv";
pub const POPULATION_FILE: &str = "population.csv";
pub const COMMUNITY_TRANSITIONS_FILE: &str = "community_transitions.csv";
pub const LOCATION_TRANSITIONS_FILE: &str = "location_transitions.csv";
pub const COUNTY_DISCHARGES_FILE: &str = "county_discharges.csv";
pub const DISTANCES_FILE: &str = "county_distances.json";
pub const NH_LOS_FILE: &str = "nh_los.csv";
pub const NH_REMAINING_FILE: &str = "nh_time_until_leaving.csv";
pub const CASES_FILE: &str = "covid_cases.csv";
pub const HOSPITAL_CENSUS_FILE: &str = "hospital_census.csv";
pub const PARAMS_FILE: &str = "params.toml";

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// First reported-case date anchoring every case series.
pub fn epidemic_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 3).expect("valid date")
}

fn parse_county(s: &str, file: &str, line: u64) -> Result<County> {
    let c: u32 = s.trim().parse().map_err(|e| Error::Parse {
        file: file.into(),
        line,
        msg: format!("county: {e}"),
    })?;
    if !(1..=N_COUNTIES as u32).contains(&c) {
        return Err(Error::validation(
            file,
            format!("line {line}: county {c} outside 1-{N_COUNTIES}"),
        ));
    }
    Ok(c as County)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => Error::Csv(e),
        })
}

// ---------------------------------------------------------------------------
// Facility registry
// ---------------------------------------------------------------------------

pub fn load_facilities(path: &Path) -> Result<Vec<Facility>> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut facilities: Vec<Facility> = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let get = |i: usize, name: &str| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::Parse {
                file: file.clone(),
                line,
                msg: format!("missing column {name}"),
            })
        };
        let id: FacilityId = get(0, "facility_id")?.parse().map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            msg: format!("facility_id: {e}"),
        })?;
        let name = get(1, "name")?.to_string();
        let category = FacilityCategory::parse(get(2, "category")?)?;
        let county_field = get(3, "county")?;
        let county = if county_field.is_empty() {
            None
        } else {
            Some(parse_county(county_field, &file, line)?)
        };
        let parse_beds = |i: usize, name: &str| -> Result<u32> {
            get(i, name)?.parse().map_err(|e| Error::Parse {
                file: file.clone(),
                line,
                msg: format!("{name}: {e}"),
            })
        };
        let beds = BedCounts {
            non_icu: parse_beds(4, "non_icu_beds")?,
            icu: parse_beds(5, "icu_beds")?,
            ventilator: parse_beds(6, "ventilator_beds")?,
        };
        if beds.ventilator > beds.icu {
            return Err(Error::validation(
                &file,
                format!("line {line}: ventilator beds exceed ICU beds"),
            ));
        }
        if category.is_stach() && county.is_none() {
            return Err(Error::validation(
                &file,
                format!("line {line}: STACH facility {id} is missing a county"),
            ));
        }
        facilities.push(Facility::new(id, name, category, county, beds));
    }
    facilities.sort_by_key(|f| f.id);
    // IDs must be dense 0..N with 0 = community.
    for (i, f) in facilities.iter().enumerate() {
        if f.id as usize != i {
            return Err(Error::validation(
                &file,
                format!("facility ids are not dense at id {}", f.id),
            ));
        }
    }
    match facilities.first() {
        Some(f) if f.category == FacilityCategory::Community && f.id == COMMUNITY => {}
        _ => {
            return Err(Error::validation(
                &file,
                "facility id 0 must be the community node",
            ))
        }
    }
    Ok(facilities)
}

pub fn save_facilities(facilities: &[Facility], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(
        out,
        "facility_id,name,category,county,non_icu_beds,icu_beds,ventilator_beds"
    )
    .unwrap();
    for f in facilities {
        let county = f.county.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.id,
            f.name,
            f.category.label(),
            county,
            f.beds.non_icu,
            f.beds.icu,
            f.beds.ventilator
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Synthetic population
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonRow {
    pub county: County,
    pub sex: char,
    pub age: u8,
}

#[derive(Debug, Clone, Default)]
pub struct PopulationTable {
    pub rows: Vec<PersonRow>,
}

impl PopulationTable {
    pub fn county_counts(&self) -> [u64; N_COUNTIES] {
        let mut counts = [0u64; N_COUNTIES];
        for r in &self.rows {
            counts[r.county as usize - 1] += 1;
        }
        counts
    }

    /// Duplicate uniformly sampled rows until the table reaches `target_size`.
    pub fn expand(&mut self, target_size: usize, rng: &mut impl Rng) -> Result<()> {
        if target_size < self.rows.len() {
            return Err(Error::Input(format!(
                "target size {target_size} below source row count {}",
                self.rows.len()
            )));
        }
        let source = self.rows.len();
        for _ in source..target_size {
            let idx = rng.gen_range(0..source);
            self.rows.push(self.rows[idx]);
        }
        Ok(())
    }
}

pub fn load_population(path: &Path) -> Result<PopulationTable> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut rows = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let county = parse_county(
            row.get(0).ok_or_else(|| Error::Parse {
                file: file.clone(),
                line,
                msg: "missing county".into(),
            })?,
            &file,
            line,
        )?;
        let sex_field = row.get(1).unwrap_or("");
        let sex = match sex_field {
            "F" | "f" => 'F',
            "M" | "m" => 'M',
            other => {
                return Err(Error::Parse {
                    file,
                    line,
                    msg: format!("sex '{other}' is not F or M"),
                })
            }
        };
        let age_raw: i64 = row
            .get(2)
            .ok_or_else(|| Error::Parse {
                file: file.clone(),
                line,
                msg: "missing age".into(),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                file: file.clone(),
                line,
                msg: format!("age: {e}"),
            })?;
        bin_age(age_raw)?;
        if age_raw > u8::MAX as i64 {
            return Err(Error::Parse {
                file,
                line,
                msg: format!("age {age_raw} is implausibly large"),
            });
        }
        rows.push(PersonRow {
            county,
            sex,
            age: age_raw as u8,
        });
    }
    Ok(PopulationTable { rows })
}

/// Load and expand the population table in one step.
pub fn load_population_expanded(
    path: &Path,
    target_size: usize,
    rng: &mut impl Rng,
) -> Result<PopulationTable> {
    let mut table = load_population(path)?;
    table.expand(target_size, rng)?;
    Ok(table)
}

pub fn save_population(table: &PopulationTable, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "county,sex,age").unwrap();
    for r in &table.rows {
        writeln!(out, "{},{},{}", r.county, r.sex, r.age).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Community transitions
// ---------------------------------------------------------------------------

/// Facility-type order used in all five-way probability rows.
pub const TYPE_ORDER: [FacilityCategory; 5] = [
    FacilityCategory::Unc,
    FacilityCategory::LargeNonUnc,
    FacilityCategory::SmallNonUnc,
    FacilityCategory::Ltach,
    FacilityCategory::Nh,
];

#[derive(Debug, Clone, Copy)]
pub struct CommunityRow {
    pub daily_probability: f64,
    /// Destination-type weights in `TYPE_ORDER`.
    pub type_probs: [f64; 5],
}

#[derive(Debug, Clone, Default)]
pub struct CommunityTransitions {
    pub rows: BTreeMap<(County, AgeGroup), CommunityRow>,
}

impl CommunityTransitions {
    pub fn row(&self, county: County, age: AgeGroup) -> Result<&CommunityRow> {
        self.rows.get(&(county, age)).ok_or_else(|| {
            Error::Config(format!(
                "no community transition row for county {county}, age {}",
                age.label()
            ))
        })
    }
}

pub fn load_community_transitions(path: &Path) -> Result<CommunityTransitions> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut rows = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let county = parse_county(row.get(0).unwrap_or(""), &file, line)?;
        let age = AgeGroup::parse(row.get(1).unwrap_or(""))?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .ok_or_else(|| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("missing column {i}"),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("column {i}: {e}"),
                })
        };
        let daily_probability = parse(2)?;
        if !(0.0..=1.0).contains(&daily_probability) {
            return Err(Error::validation(
                &file,
                format!("line {line}: daily probability {daily_probability} outside [0, 1]"),
            ));
        }
        let mut type_probs = [0.0; 5];
        for (k, p) in type_probs.iter_mut().enumerate() {
            *p = parse(3 + k)?;
            if *p < 0.0 {
                return Err(Error::validation(
                    &file,
                    format!("line {line}: negative probability"),
                ));
            }
        }
        let sum: f64 = type_probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::validation(
                &file,
                format!("line {line}: facility-type probabilities sum to {sum}, not 1"),
            ));
        }
        if age != AgeGroup::Over65 && type_probs[4] > 0.0 {
            return Err(Error::validation(
                &file,
                format!("line {line}: NH probability must be 0 for under-65 rows"),
            ));
        }
        rows.insert((county, age), CommunityRow {
            daily_probability,
            type_probs,
        });
    }
    Ok(CommunityTransitions { rows })
}

pub fn save_community_transitions(t: &CommunityTransitions, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(
        out,
        "county,age_group,daily_probability,unc,large_non_unc,small_non_unc,ltach,nh"
    )
    .unwrap();
    for ((county, age), row) in &t.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            county,
            age.label(),
            row.daily_probability,
            row.type_probs[0],
            row.type_probs[1],
            row.type_probs[2],
            row.type_probs[3],
            row.type_probs[4]
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Location transitions
// ---------------------------------------------------------------------------

/// Where a location-transition row applies: one row per STACH, or one row per
/// other facility type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SourceKey {
    Stach(FacilityId),
    Ltach,
    Nh,
}

impl SourceKey {
    pub fn label(&self) -> String {
        match self {
            SourceKey::Stach(id) => id.to_string(),
            SourceKey::Ltach => "LTACH".into(),
            SourceKey::Nh => "NH".into(),
        }
    }

    pub fn parse(s: &str) -> Result<SourceKey> {
        match s.trim() {
            "LTACH" => Ok(SourceKey::Ltach),
            "NH" => Ok(SourceKey::Nh),
            other => other
                .parse::<FacilityId>()
                .map(SourceKey::Stach)
                .map_err(|e| Error::Input(format!("bad source key '{other}': {e}"))),
        }
    }
}

/// Destination order in all six-way probability rows.
pub const DEST_ORDER: [&str; 6] = ["community", "unc", "large_non_unc", "small_non_unc", "ltach", "nh"];

#[derive(Debug, Clone, Default)]
pub struct LocationTransitions {
    /// (county, age, source) -> [community, unc, large, small, ltach, nh]
    pub rows: BTreeMap<(County, AgeGroup, SourceKey), [f64; 6]>,
}

impl LocationTransitions {
    pub fn row(&self, county: County, age: AgeGroup, source: SourceKey) -> Result<&[f64; 6]> {
        self.rows.get(&(county, age, source)).ok_or_else(|| {
            Error::Config(format!(
                "no location transition row for county {county}, age {}, source {}",
                age.label(),
                source.label()
            ))
        })
    }
}

pub fn load_location_transitions(path: &Path) -> Result<LocationTransitions> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut rows = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let county = parse_county(row.get(0).unwrap_or(""), &file, line)?;
        let age = AgeGroup::parse(row.get(1).unwrap_or(""))?;
        let source = SourceKey::parse(row.get(2).unwrap_or(""))?;
        let mut probs = [0.0; 6];
        for (k, p) in probs.iter_mut().enumerate() {
            *p = row
                .get(3 + k)
                .ok_or_else(|| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("missing column {}", DEST_ORDER[k]),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("{}: {e}", DEST_ORDER[k]),
                })?;
            if *p < 0.0 {
                return Err(Error::validation(
                    &file,
                    format!("line {line}: negative probability"),
                ));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::validation(
                &file,
                format!("line {line}: transition probabilities sum to {sum}, not 1"),
            ));
        }
        if age != AgeGroup::Over65 && probs[5] > 0.0 {
            return Err(Error::validation(
                &file,
                format!("line {line}: NH probability must be 0 for under-65 rows"),
            ));
        }
        rows.insert((county, age, source), probs);
    }
    Ok(LocationTransitions { rows })
}

pub fn save_location_transitions(t: &LocationTransitions, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(
        out,
        "county,age_group,source,community,unc,large_non_unc,small_non_unc,ltach,nh"
    )
    .unwrap();
    for ((county, age, source), p) in &t.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            county,
            age.label(),
            source.label(),
            p[0],
            p[1],
            p[2],
            p[3],
            p[4],
            p[5]
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Facility discharge data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct DischargeTable {
    /// facility -> county -> discharge count
    pub per_facility: BTreeMap<FacilityId, BTreeMap<County, u32>>,
}

impl DischargeTable {
    pub fn counties_of(&self, facility: FacilityId) -> Vec<County> {
        self.per_facility
            .get(&facility)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn contains_county(&self, facility: FacilityId, county: County) -> bool {
        self.per_facility
            .get(&facility)
            .map(|m| m.contains_key(&county))
            .unwrap_or(false)
    }

    /// Weight of `facility` for agents from `county`.
    pub fn weight(&self, facility: FacilityId, county: County) -> u32 {
        self.per_facility
            .get(&facility)
            .and_then(|m| m.get(&county))
            .copied()
            .unwrap_or(0)
    }
}

pub fn load_discharges(path: &Path) -> Result<DischargeTable> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut per_facility: BTreeMap<FacilityId, BTreeMap<County, u32>> = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let facility: FacilityId = row
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Parse {
                file: file.clone(),
                line,
                msg: format!("facility_id: {e}"),
            })?;
        let county = parse_county(row.get(1).unwrap_or(""), &file, line)?;
        let count: u32 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Parse {
                file: file.clone(),
                line,
                msg: format!("discharges: {e}"),
            })?;
        if count == 0 {
            return Err(Error::validation(
                &file,
                format!("line {line}: zero-share county listed for facility {facility}"),
            ));
        }
        per_facility.entry(facility).or_default().insert(county, count);
    }
    // Listed counties must each hold at least 1% of the facility's discharges.
    for (facility, counties) in &per_facility {
        let total: u64 = counties.values().map(|&c| c as u64).sum();
        for (county, &count) in counties {
            let share = count as f64 / total as f64;
            if share < 0.01 - 1e-9 {
                return Err(Error::validation(
                    &file,
                    format!(
                        "facility {facility}: county {county} share {share:.4} is below 1%"
                    ),
                ));
            }
        }
    }
    Ok(DischargeTable { per_facility })
}

pub fn save_discharges(t: &DischargeTable, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "facility_id,county,discharges").unwrap();
    for (facility, counties) in &t.per_facility {
        for (county, count) in counties {
            writeln!(out, "{facility},{county},{count}").unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// County-to-facility distances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct DistanceIndex {
    /// Indexed by county - 1; each list sorted ascending by miles, ties broken
    /// by facility id.
    pub per_county: Vec<Vec<(FacilityId, f64)>>,
}

impl DistanceIndex {
    pub fn sorted(&self, county: County) -> &[(FacilityId, f64)] {
        &self.per_county[county as usize - 1]
    }

    pub fn distance(&self, county: County, facility: FacilityId) -> Option<f64> {
        self.sorted(county)
            .iter()
            .find(|(f, _)| *f == facility)
            .map(|(_, d)| *d)
    }

    /// Facility ids within `radius` miles, nearest first.
    pub fn within(&self, county: County, radius: f64) -> impl Iterator<Item = (FacilityId, f64)> + '_ {
        self.sorted(county)
            .iter()
            .take_while(move |(_, d)| *d <= radius)
            .copied()
    }
}

pub fn load_distances(path: &Path) -> Result<DistanceIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let raw: BTreeMap<String, Vec<(FacilityId, f64)>> = serde_json::from_str(&text)?;
    let file = path.display().to_string();
    let mut per_county = vec![Vec::new(); N_COUNTIES];
    for (county_str, mut list) in raw {
        let county: usize = county_str
            .parse()
            .map_err(|e| Error::validation(&file, format!("bad county key '{county_str}': {e}")))?;
        if !(1..=N_COUNTIES).contains(&county) {
            return Err(Error::validation(
                &file,
                format!("county {county} outside 1-{N_COUNTIES}"),
            ));
        }
        for (fid, miles) in &list {
            if *miles < 0.0 || !miles.is_finite() {
                return Err(Error::validation(
                    &file,
                    format!("negative distance {miles} for county {county}, facility {fid}"),
                ));
            }
        }
        // Re-sort regardless of input order; ties break by facility id.
        list.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        per_county[county - 1] = list;
    }
    Ok(DistanceIndex { per_county })
}

pub fn save_distances(index: &DistanceIndex, path: &Path) -> Result<()> {
    let map: BTreeMap<String, &Vec<(FacilityId, f64)>> = index
        .per_county
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| ((i + 1).to_string(), v))
        .collect();
    let text = serde_json::to_string_pretty(&map)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// NH length-of-stay pools
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct NhLosPools {
    /// Pool sampled for newly admitted NH agents.
    pub admission: Vec<u32>,
    /// Pool of remaining days, used only when seeding NH occupants on day 0.
    pub remaining: Vec<u32>,
}

fn load_count_pool(path: &Path) -> Result<Vec<u32>> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut pool = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let days: u32 = row.get(0).unwrap_or("").parse().map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            msg: format!("days: {e}"),
        })?;
        let count: u32 = row.get(1).unwrap_or("").parse().map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            msg: format!("count: {e}"),
        })?;
        for _ in 0..count {
            pool.push(days);
        }
    }
    if pool.is_empty() {
        return Err(Error::validation(&file, "empty length-of-stay pool"));
    }
    Ok(pool)
}

pub fn load_nh_los(path_counts: &Path, path_remaining: &Path) -> Result<NhLosPools> {
    Ok(NhLosPools {
        admission: load_count_pool(path_counts)?,
        remaining: load_count_pool(path_remaining)?,
    })
}

fn save_count_pool(pool: &[u32], header: &str, path: &Path) -> Result<()> {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for &d in pool {
        *counts.entry(d).or_insert(0) += 1;
    }
    let mut out = Vec::new();
    writeln!(out, "{header}").unwrap();
    for (days, count) in counts {
        writeln!(out, "{days},{count}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn save_nh_los(pools: &NhLosPools, path_counts: &Path, path_remaining: &Path) -> Result<()> {
    save_count_pool(&pools.admission, "los_days,count", path_counts)?;
    save_count_pool(&pools.remaining, "days_remaining,count", path_remaining)
}

// ---------------------------------------------------------------------------
// Reported COVID-19 cases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CaseSeries {
    pub start_date: NaiveDate,
    pub n_days: usize,
    /// Indexed by county - 1, then day. Gaps are zero-filled.
    pub per_county: Vec<Vec<u32>>,
}

impl CaseSeries {
    pub fn counties(&self) -> impl Iterator<Item = County> {
        (1..=N_COUNTIES as u8).map(|c| c as County)
    }

    pub fn daily(&self, county: County) -> &[u32] {
        &self.per_county[county as usize - 1]
    }

    pub fn cumulative(&self, county: County) -> u64 {
        self.daily(county).iter().map(|&c| c as u64).sum()
    }

    /// Statewide daily series.
    pub fn statewide(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.n_days];
        for series in &self.per_county {
            for (d, &c) in series.iter().enumerate() {
                out[d] += c;
            }
        }
        out
    }

    /// The last date with data; forecast day 0.
    pub fn day0_date(&self) -> NaiveDate {
        self.start_date + chrono::Duration::days(self.n_days as i64 - 1)
    }
}

pub fn load_case_series(path: &Path) -> Result<CaseSeries> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut raw: Vec<(County, NaiveDate, u32)> = Vec::new();
    let mut last_date_per_county: BTreeMap<County, NaiveDate> = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let county = parse_county(row.get(0).unwrap_or(""), &file, line)?;
        let date = NaiveDate::parse_from_str(row.get(1).unwrap_or(""), "%Y-%m-%d").map_err(|e| {
            Error::Parse {
                file: file.clone(),
                line,
                msg: format!("date: {e}"),
            }
        })?;
        let count: u32 = row.get(2).unwrap_or("").parse().map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            msg: format!("new_cases: {e}"),
        })?;
        if let Some(prev) = last_date_per_county.get(&county) {
            if date <= *prev {
                return Err(Error::validation(
                    &file,
                    format!("line {line}: dates for county {county} are not strictly increasing"),
                ));
            }
        }
        last_date_per_county.insert(county, date);
        raw.push((county, date, count));
    }
    if raw.is_empty() {
        return Err(Error::validation(&file, "empty case series"));
    }
    let start = raw.iter().map(|r| r.1).min().unwrap().min(epidemic_start_date());
    let end = raw.iter().map(|r| r.1).max().unwrap();
    let n_days = (end - start).num_days() as usize + 1;
    let mut per_county = vec![vec![0u32; n_days]; N_COUNTIES];
    for (county, date, count) in raw {
        let day = (date - start).num_days() as usize;
        per_county[county as usize - 1][day] = count;
    }
    Ok(CaseSeries {
        start_date: start,
        n_days,
        per_county,
    })
}

pub fn save_case_series(series: &CaseSeries, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "county,date,new_cases").unwrap();
    for county in 1..=N_COUNTIES {
        for (d, &count) in series.per_county[county - 1].iter().enumerate() {
            let date = series.start_date + chrono::Duration::days(d as i64);
            writeln!(out, "{county},{date},{count}").unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Optional hospital census overrides
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct CensusRow {
    pub occupied_non_icu: u32,
    pub occupied_icu: u32,
    pub covid_non_icu: u32,
    pub covid_icu: u32,
}

#[derive(Debug, Clone, Default)]
pub struct HospitalCensus {
    pub rows: BTreeMap<FacilityId, CensusRow>,
}

pub fn load_hospital_census(path: &Path) -> Result<HospitalCensus> {
    let file = path.display().to_string();
    let mut rdr = open_reader(path)?;
    let mut rows = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let parse = |i: usize, name: &str| -> Result<u32> {
            row.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("{name}: {e}"),
                })
        };
        let facility = parse(0, "facility_id")? as FacilityId;
        let census = CensusRow {
            occupied_non_icu: parse(1, "occupied_non_icu")?,
            occupied_icu: parse(2, "occupied_icu")?,
            covid_non_icu: parse(3, "covid_non_icu")?,
            covid_icu: parse(4, "covid_icu")?,
        };
        if census.covid_non_icu > census.occupied_non_icu
            || census.covid_icu > census.occupied_icu
        {
            return Err(Error::validation(
                &file,
                format!("line {line}: COVID census exceeds occupied beds"),
            ));
        }
        rows.insert(facility, census);
    }
    Ok(HospitalCensus { rows })
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Everything loaded from one input directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub facilities: Vec<Facility>,
    pub population: PopulationTable,
    pub community: CommunityTransitions,
    pub location: LocationTransitions,
    pub discharges: DischargeTable,
    pub distances: DistanceIndex,
    pub nh_los: NhLosPools,
    pub cases: CaseSeries,
    pub census_override: Option<HospitalCensus>,
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Bundle> {
        let facilities = load_facilities(&dir.join(FACILITIES_FILE))?;
        let population = load_population(&dir.join(POPULATION_FILE))?;
        let community = load_community_transitions(&dir.join(COMMUNITY_TRANSITIONS_FILE))?;
        let location = load_location_transitions(&dir.join(LOCATION_TRANSITIONS_FILE))?;
        let discharges = load_discharges(&dir.join(COUNTY_DISCHARGES_FILE))?;
        let distances = load_distances(&dir.join(DISTANCES_FILE))?;
        let nh_los = load_nh_los(&dir.join(NH_LOS_FILE), &dir.join(NH_REMAINING_FILE))?;
        let cases = load_case_series(&dir.join(CASES_FILE))?;
        let census_path = dir.join(HOSPITAL_CENSUS_FILE);
        let census_override = if census_path.exists() {
            Some(load_hospital_census(&census_path)?)
        } else {
            None
        };
        // Discharge tables and distance entries must refer to known STACHs.
        for fid in discharges.per_facility.keys() {
            match facilities.get(*fid as usize) {
                Some(f) if f.category.is_stach() => {}
                _ => {
                    return Err(Error::validation(
                        COUNTY_DISCHARGES_FILE,
                        format!("facility {fid} is not a known STACH"),
                    ))
                }
            }
        }
        Ok(Bundle {
            facilities,
            population,
            community,
            location,
            discharges,
            distances,
            nh_los,
            cases,
            census_override,
        })
    }

    /// Save every table back to `dir` in the canonical format.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        save_facilities(&self.facilities, &dir.join(FACILITIES_FILE))?;
        save_population(&self.population, &dir.join(POPULATION_FILE))?;
        save_community_transitions(&self.community, &dir.join(COMMUNITY_TRANSITIONS_FILE))?;
        save_location_transitions(&self.location, &dir.join(LOCATION_TRANSITIONS_FILE))?;
        save_discharges(&self.discharges, &dir.join(COUNTY_DISCHARGES_FILE))?;
        save_distances(&self.distances, &dir.join(DISTANCES_FILE))?;
        save_nh_los(
            &self.nh_los,
            &dir.join(NH_LOS_FILE),
            &dir.join(NH_REMAINING_FILE),
        )?;
        save_case_series(&self.cases, &dir.join(CASES_FILE))?;
        Ok(())
    }

    /// Model-population county counts divided by the scale factor, i.e. the
    /// real-world county populations the bundle represents.
    pub fn real_county_populations(&self, scale: f64) -> [u64; N_COUNTIES] {
        let counts = self.population.county_counts();
        let mut out = [0u64; N_COUNTIES];
        for (i, &c) in counts.iter().enumerate() {
            out[i] = ((c as f64) / scale).round() as u64;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn expand_identity_when_target_equals_size() {
        let mut t = PopulationTable {
            rows: (0..100)
                .map(|i| PersonRow {
                    county: (i % 100 + 1) as County,
                    sex: 'F',
                    age: 30,
                })
                .collect(),
        };
        let before = t.rows.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        t.expand(100, &mut rng).unwrap();
        assert_eq!(t.rows, before);
    }

    #[test]
    fn expand_is_deterministic() {
        let base: Vec<PersonRow> = (0..100)
            .map(|i| PersonRow {
                county: (i % 100 + 1) as County,
                sex: 'M',
                age: (i % 90) as u8,
            })
            .collect();
        let mut a = PopulationTable { rows: base.clone() };
        let mut b = PopulationTable { rows: base };
        let mut rng_a = ChaCha12Rng::seed_from_u64(7);
        let mut rng_b = ChaCha12Rng::seed_from_u64(7);
        a.expand(130, &mut rng_a).unwrap();
        b.expand(130, &mut rng_b).unwrap();
        assert_eq!(a.rows.len(), 130);
        assert_eq!(a.rows[100..], b.rows[100..]);
    }

    #[test]
    fn expand_rejects_shrinking() {
        let mut t = PopulationTable {
            rows: vec![PersonRow {
                county: 1,
                sex: 'F',
                age: 30,
            }; 10],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(t.expand(5, &mut rng).is_err());
    }

    #[test]
    fn community_row_sum_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ct.csv");
        std::fs::write(
            &path,
            "county,age_group,daily_probability,unc,large_non_unc,small_non_unc,ltach,nh\n\
             1,0-49,0.001,0.05,0.03,0.90,0.0,0.0\n",
        )
        .unwrap();
        // sums to 0.98: rejected, naming the row
        let err = load_community_transitions(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        std::fs::write(
            &path,
            "county,age_group,daily_probability,unc,large_non_unc,small_non_unc,ltach,nh\n\
             1,0-49,0.001,0.05,0.01,0.935,0.005,0.0\n\
             1,65+,0.004,0.05,0.01,0.925,0.005,0.01\n",
        )
        .unwrap();
        let t = load_community_transitions(&path).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn under_65_nh_probability_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ct.csv");
        std::fs::write(
            &path,
            "county,age_group,daily_probability,unc,large_non_unc,small_non_unc,ltach,nh\n\
             1,0-49,0.001,0.05,0.03,0.90,0.0,0.02\n",
        )
        .unwrap();
        assert!(load_community_transitions(&path).is_err());
    }

    #[test]
    fn distances_resorted_and_ties_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        std::fs::write(&path, r#"{"1": [[3, 9.0], [2, 4.0], [5, 4.0], [1, 0.0]]}"#).unwrap();
        let index = load_distances(&path).unwrap();
        let sorted = index.sorted(1);
        assert_eq!(
            sorted,
            &[(1, 0.0), (2, 4.0), (5, 4.0), (3, 9.0)],
            "sorted ascending with ties by facility id"
        );
        // county with a single facility at distance zero
        std::fs::write(&path, r#"{"2": [[4, 0.0]]}"#).unwrap();
        let index = load_distances(&path).unwrap();
        assert_eq!(index.sorted(2), &[(4, 0.0)]);
    }

    #[test]
    fn negative_distance_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        std::fs::write(&path, r#"{"1": [[3, -1.0]]}"#).unwrap();
        assert!(load_distances(&path).is_err());
    }

    #[test]
    fn nh_pool_expansion() {
        let dir = tempfile::tempdir().unwrap();
        let counts = dir.path().join("nh.csv");
        let remaining = dir.path().join("rem.csv");
        std::fs::write(&counts, "los_days,count\n3,2\n10,1\n").unwrap();
        std::fs::write(&remaining, "days_remaining,count\n5,1\n").unwrap();
        let pools = load_nh_los(&counts, &remaining).unwrap();
        assert_eq!(pools.admission, vec![3, 3, 10]);
        assert_eq!(pools.remaining, vec![5]);
    }

    #[test]
    fn nh_pool_sample_mean_matches_exact_pool_mean() {
        use rand::Rng;
        let pool = vec![3u32, 3, 10];
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += pool[rng.gen_range(0..pool.len())] as u64;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 16.0 / 3.0).abs() < 0.1, "mean = {mean}");
    }

    #[test]
    fn empty_nh_pool_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let counts = dir.path().join("nh.csv");
        std::fs::write(&counts, "los_days,count\n").unwrap();
        assert!(load_count_pool(&counts).is_err());
    }

    #[test]
    fn case_series_zero_fill_and_cumulative() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.csv");
        std::fs::write(
            &path,
            "county,date,new_cases\n1,2020-03-03,2\n1,2020-03-06,5\n2,2020-03-04,1\n",
        )
        .unwrap();
        let series = load_case_series(&path).unwrap();
        assert_eq!(series.n_days, 4);
        assert_eq!(series.daily(1), &[2, 0, 0, 5]);
        assert_eq!(series.daily(2), &[0, 1, 0, 0]);
        // county with no rows at all: all zero
        assert!(series.daily(50).iter().all(|&c| c == 0));
        assert_eq!(series.cumulative(1), 7);
        let state = series.statewide();
        assert_eq!(state.iter().map(|&c| c as u64).sum::<u64>(), 8);
    }

    #[test]
    fn case_series_rejects_non_monotone_dates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.csv");
        std::fs::write(
            &path,
            "county,date,new_cases\n1,2020-03-05,2\n1,2020-03-04,5\n",
        )
        .unwrap();
        assert!(load_case_series(&path).is_err());
    }

    #[test]
    fn discharge_share_below_one_percent_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(
            &path,
            "facility_id,county,discharges\n1,1,1000\n1,2,5\n",
        )
        .unwrap();
        assert!(load_discharges(&path).is_err());
        std::fs::write(&path, "facility_id,county,discharges\n1,1,90\n1,2,10\n").unwrap();
        let t = load_discharges(&path).unwrap();
        assert_eq!(t.weight(1, 2), 10);
        assert!(t.contains_county(1, 1));
        assert!(!t.contains_county(1, 3));
    }
}
