//! Schema-exact synthetic input bundles.
//!
//! Real statewide inputs are not redistributable, so desk-scale runs use a
//! generated world: counties laid out on a plane with Euclidean "miles",
//! facilities with full-scale bed counts, and transition tables that embed the
//! published transfer proportions. The same spec and seed always produce a
//! byte-identical bundle.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Poisson;

use super::*;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::world::{AgeGroup, BedCounts, Facility, FacilityCategory, FacilityId, N_COUNTIES};

/// Statewide population the synthetic world is a scale model of.
pub const FULL_SCALE_POPULATION: f64 = 10_500_000.0;

/// Counties sit on a 10x10 grid with this spacing in miles. The plane is
/// small enough that every facility is within 200 miles of every county,
/// while the 60-mile day-0 radius stays a real constraint.
const COUNTY_GRID_SPACING: f64 = 15.0;

/// Counties served by the referral (UNC) network.
const CATCHMENT_SIZE: usize = 41;

/// Counties covered by large-hospital discharge data; the rest exercise the
/// bed-count-vs-distance fallback.
const LARGE_COVERAGE_RADIUS: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_agents: usize,
    pub n_unc: usize,
    pub n_large: usize,
    pub n_small: usize,
    pub n_ltach: usize,
    pub n_nh: usize,
    pub seed: u64,
    pub case_days: usize,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            n_agents: 100_000,
            n_unc: 2,
            n_large: 2,
            n_small: 5,
            n_ltach: 1,
            n_nh: 10,
            seed: 7,
            case_days: 150,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1000 {
            return Err(Error::Input("synthetic bundle needs at least 1000 agents".into()));
        }
        if self.n_unc < 2 || self.n_small < 2 {
            return Err(Error::Input(
                "synthetic bundle needs at least 2 UNC and 2 small STACHs".into(),
            ));
        }
        if self.n_large < 1 || self.n_ltach < 1 || self.n_nh < 1 {
            return Err(Error::Input(
                "synthetic bundle needs at least 1 facility per category".into(),
            ));
        }
        if self.case_days < 30 {
            return Err(Error::Input("case series needs at least 30 days".into()));
        }
        Ok(())
    }

    pub fn scale_factor(&self) -> f64 {
        (self.n_agents as f64 / FULL_SCALE_POPULATION).min(1.0)
    }
}

fn county_centroid(county: County) -> (f64, f64) {
    let idx = county as usize - 1;
    let row = idx / 10;
    let col = idx % 10;
    (col as f64 * COUNTY_GRID_SPACING, row as f64 * COUNTY_GRID_SPACING)
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

struct FacilityDraft {
    facility: Facility,
    position: (f64, f64),
}

/// Allocate `total` rows across counties proportionally to `weights` by
/// largest remainder, with a floor so no county is empty.
fn allocate_rows(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut rows: Vec<usize> = weights
        .iter()
        .map(|w| ((w / sum) * total as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (i, (w / sum) * total as f64 - rows[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut assigned: usize = rows.iter().sum();
    for (i, _) in remainders {
        if assigned == total {
            break;
        }
        rows[i] += 1;
        assigned += 1;
    }
    // Floor of 4 rows per county; steal from the largest counties.
    for i in 0..rows.len() {
        while rows[i] < 4 {
            let largest = (0..rows.len()).max_by_key(|&j| rows[j]).unwrap();
            rows[largest] -= 1;
            rows[i] += 1;
        }
    }
    rows
}

fn draw_age(rng: &mut ChaCha12Rng) -> u8 {
    let u: f64 = rng.gen();
    if u < 0.55 {
        rng.gen_range(0..=49)
    } else if u < 0.72 {
        rng.gen_range(50..=64)
    } else {
        rng.gen_range(65..=90)
    }
}

fn build_population(spec: &SynthSpec, rng: &mut ChaCha12Rng) -> PopulationTable {
    let weights: Vec<f64> = (0..N_COUNTIES)
        .map(|_| {
            let z: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            (z * 1.2).exp()
        })
        .collect();
    let rows_per_county = allocate_rows(spec.n_agents, &weights);
    let mut rows = Vec::with_capacity(spec.n_agents);
    for (idx, &count) in rows_per_county.iter().enumerate() {
        let county = (idx + 1) as County;
        for _ in 0..count {
            let sex = if rng.gen::<bool>() { 'F' } else { 'M' };
            let age = draw_age(rng);
            rows.push(PersonRow { county, sex, age });
        }
    }
    PopulationTable { rows }
}

fn build_facilities(
    spec: &SynthSpec,
    county_pop: &[u64],
    rng: &mut ChaCha12Rng,
) -> Vec<FacilityDraft> {
    let mut drafts = Vec::new();
    drafts.push(FacilityDraft {
        facility: Facility::new(
            0,
            "Community".into(),
            FacilityCategory::Community,
            None,
            BedCounts::default(),
        ),
        position: (0.0, 0.0),
    });
    let weights: Vec<f64> = county_pop.iter().map(|&p| p as f64 + 1.0).collect();
    let county_picker = WeightedIndex::new(&weights).expect("positive weights");
    let mut next_id: FacilityId = 1;
    let place = |category: FacilityCategory,
                     count: usize,
                     name: &str,
                     beds_fn: &mut dyn FnMut(&mut ChaCha12Rng) -> BedCounts,
                     rng: &mut ChaCha12Rng,
                     drafts: &mut Vec<FacilityDraft>,
                     next_id: &mut FacilityId| {
        for k in 0..count {
            let county = (county_picker.sample(rng) + 1) as County;
            let centroid = county_centroid(county);
            let position = (
                centroid.0 + rng.gen_range(-3.0..3.0),
                centroid.1 + rng.gen_range(-3.0..3.0),
            );
            let beds = beds_fn(rng);
            let facility_county = if category.is_stach() { Some(county) } else { None };
            drafts.push(FacilityDraft {
                facility: Facility::new(
                    *next_id,
                    format!("{name} {}", k + 1),
                    category,
                    facility_county,
                    beds,
                ),
                position,
            });
            *next_id += 1;
        }
    };

    let mut unc_beds = |rng: &mut ChaCha12Rng| {
        let icu = rng.gen_range(250..=350);
        BedCounts {
            non_icu: rng.gen_range(1000..=1400),
            icu,
            ventilator: (icu as f64 * 0.75).round() as u32,
        }
    };
    let mut large_beds = |rng: &mut ChaCha12Rng| {
        let icu = rng.gen_range(200..=300);
        BedCounts {
            non_icu: rng.gen_range(800..=1200),
            icu,
            ventilator: (icu as f64 * 0.75).round() as u32,
        }
    };
    let mut small_beds = |rng: &mut ChaCha12Rng| {
        let icu = rng.gen_range(30..=80);
        BedCounts {
            non_icu: rng.gen_range(150..=380),
            icu,
            ventilator: (icu as f64 * 0.75).round() as u32,
        }
    };
    let mut ltach_beds = |rng: &mut ChaCha12Rng| BedCounts {
        non_icu: rng.gen_range(60..=120),
        icu: 0,
        ventilator: 0,
    };
    let mut nh_beds = |rng: &mut ChaCha12Rng| BedCounts {
        non_icu: rng.gen_range(80..=160),
        icu: 0,
        ventilator: 0,
    };

    place(FacilityCategory::Unc, spec.n_unc, "Referral Hospital", &mut unc_beds, rng, &mut drafts, &mut next_id);
    place(FacilityCategory::LargeNonUnc, spec.n_large, "Regional Hospital", &mut large_beds, rng, &mut drafts, &mut next_id);
    place(FacilityCategory::SmallNonUnc, spec.n_small, "Community Hospital", &mut small_beds, rng, &mut drafts, &mut next_id);
    place(FacilityCategory::Ltach, spec.n_ltach, "Extended Care Hospital", &mut ltach_beds, rng, &mut drafts, &mut next_id);
    place(FacilityCategory::Nh, spec.n_nh, "Nursing Home", &mut nh_beds, rng, &mut drafts, &mut next_id);
    drafts
}

fn build_distances(drafts: &[FacilityDraft]) -> DistanceIndex {
    let mut per_county = Vec::with_capacity(N_COUNTIES);
    for county in 1..=N_COUNTIES {
        let centroid = county_centroid(county as County);
        let mut list: Vec<(FacilityId, f64)> = drafts
            .iter()
            .filter(|d| d.facility.id != 0)
            .map(|d| {
                // Two decimal places keep the file readable and round-trippable.
                let miles = (euclid(centroid, d.position) * 100.0).round() / 100.0;
                (d.facility.id, miles)
            })
            .collect();
        list.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        per_county.push(list);
    }
    DistanceIndex { per_county }
}

/// Counties with the smallest distance to any referral hospital.
fn catchment_counties(drafts: &[FacilityDraft]) -> Vec<County> {
    let unc_positions: Vec<(f64, f64)> = drafts
        .iter()
        .filter(|d| d.facility.category == FacilityCategory::Unc)
        .map(|d| d.position)
        .collect();
    let mut by_distance: Vec<(County, f64)> = (1..=N_COUNTIES as u8)
        .map(|county| {
            let centroid = county_centroid(county);
            let d = unc_positions
                .iter()
                .map(|&p| euclid(centroid, p))
                .fold(f64::INFINITY, f64::min);
            (county, d)
        })
        .collect();
    by_distance.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut counties: Vec<County> = by_distance
        .into_iter()
        .take(CATCHMENT_SIZE)
        .map(|(c, _)| c)
        .collect();
    counties.sort_unstable();
    counties
}

/// Raw discharge weights for one facility from its nearest counties.
fn discharge_weights(
    facility: &FacilityDraft,
    county_pop: &[u64],
    allowed: Option<&[County]>,
    rng: &mut ChaCha12Rng,
) -> Vec<(County, f64)> {
    let k = rng.gen_range(8..=15usize);
    let mut by_distance: Vec<(County, f64)> = (1..=N_COUNTIES as u8)
        .filter(|c| allowed.map_or(true, |a| a.contains(c)))
        .map(|c| (c, euclid(county_centroid(c), facility.position)))
        .collect();
    by_distance.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    by_distance
        .into_iter()
        .take(k)
        .map(|(c, d)| {
            let w = (county_pop[c as usize - 1] as f64 + 1.0) / (1.0 + d);
            (c, w)
        })
        .collect()
}

/// Share floor applied to every listed county; comfortably above the 1%
/// loader requirement so integer rounding cannot cross it.
const DISCHARGE_SHARE_FLOOR: f64 = 0.015;

/// Convert raw weights into integer discharge counts: shares below the floor
/// are raised to it (re-normalizing the rest), then scaled and rounded.
fn finalize_discharge_counts(weights: &[(County, f64)]) -> BTreeMap<County, u32> {
    let n = weights.len();
    let mut floored = vec![false; n];
    loop {
        let mut changed = false;
        let floored_mass = floored.iter().filter(|&&b| b).count() as f64 * DISCHARGE_SHARE_FLOOR;
        let free_weight: f64 = weights
            .iter()
            .zip(&floored)
            .filter(|(_, &f)| !f)
            .map(|((_, w), _)| w)
            .sum();
        if free_weight <= 0.0 || floored_mass >= 1.0 {
            // Everything at the floor: equal shares.
            return weights
                .iter()
                .map(|&(c, _)| (c, (20_000.0 / n as f64).round() as u32))
                .collect();
        }
        for i in 0..n {
            if floored[i] {
                continue;
            }
            let share = weights[i].1 / free_weight * (1.0 - floored_mass);
            if share < DISCHARGE_SHARE_FLOOR {
                floored[i] = true;
                changed = true;
            }
        }
        if !changed {
            let mut out = BTreeMap::new();
            for i in 0..n {
                let share = if floored[i] {
                    DISCHARGE_SHARE_FLOOR
                } else {
                    weights[i].1 / free_weight * (1.0 - floored_mass)
                };
                out.insert(weights[i].0, ((share * 20_000.0).round() as u32).max(1));
            }
            return out;
        }
    }
}

fn build_discharges(
    drafts: &[FacilityDraft],
    county_pop: &[u64],
    catchment: &[County],
    distances: &DistanceIndex,
    rng: &mut ChaCha12Rng,
) -> DischargeTable {
    let mut weights: BTreeMap<FacilityId, Vec<(County, f64)>> = BTreeMap::new();
    for draft in drafts.iter().filter(|d| d.facility.category.is_stach()) {
        let allowed = match draft.facility.category {
            FacilityCategory::Unc => Some(catchment),
            _ => None,
        };
        weights.insert(
            draft.facility.id,
            discharge_weights(draft, county_pop, allowed, rng),
        );
    }

    // Coverage repair: every county in a category's intended coverage set
    // appears in at least one table of that category, at the share floor.
    let mut ensure_coverage = |category: FacilityCategory, counties: &[County]| {
        for &county in counties {
            let covered = weights.iter().any(|(fid, w)| {
                drafts[*fid as usize].facility.category == category
                    && w.iter().any(|(c, _)| *c == county)
            });
            if covered {
                continue;
            }
            let nearest = distances
                .sorted(county)
                .iter()
                .find(|(fid, _)| drafts[*fid as usize].facility.category == category)
                .map(|(fid, _)| *fid);
            if let Some(fid) = nearest {
                // Near-zero weight lands exactly on the share floor.
                weights.get_mut(&fid).expect("table exists").push((county, 1e-9));
            }
        }
    };
    let all_counties: Vec<County> = (1..=N_COUNTIES as u8).collect();
    ensure_coverage(FacilityCategory::SmallNonUnc, &all_counties);
    ensure_coverage(FacilityCategory::Unc, catchment);
    let large_covered: Vec<County> = all_counties
        .iter()
        .copied()
        .filter(|&c| {
            distances.sorted(c).iter().any(|(fid, d)| {
                drafts[*fid as usize].facility.category == FacilityCategory::LargeNonUnc
                    && *d <= LARGE_COVERAGE_RADIUS
            })
        })
        .collect();
    ensure_coverage(FacilityCategory::LargeNonUnc, &large_covered);

    let per_facility = weights
        .into_iter()
        .map(|(fid, w)| (fid, finalize_discharge_counts(&w)))
        .collect();
    DischargeTable { per_facility }
}

fn normalize(mut probs: Vec<f64>) -> Vec<f64> {
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    probs
}

fn build_community_transitions(
    catchment: &[County],
    rng: &mut ChaCha12Rng,
) -> CommunityTransitions {
    let mut rows = BTreeMap::new();
    for county in 1..=N_COUNTIES as u8 {
        let in_catchment = catchment.contains(&county);
        for age in AgeGroup::ALL {
            let base_daily = match age {
                AgeGroup::Under50 => 0.0008,
                AgeGroup::From50To64 => 0.0015,
                AgeGroup::Over65 => 0.004,
            };
            let daily_probability = base_daily * rng.gen_range(0.85..1.15);
            let jitter = |rng: &mut ChaCha12Rng| rng.gen_range(0.9..1.1);
            let unc = if in_catchment { 0.28 * jitter(rng) } else { 0.0 };
            let large = 0.22 * jitter(rng);
            let small = 0.40 * jitter(rng);
            let ltach = 0.02 * jitter(rng);
            let nh = if age == AgeGroup::Over65 { 0.10 * jitter(rng) } else { 0.0 };
            let probs = normalize(vec![unc, large, small, ltach, nh]);
            rows.insert(
                (county, age),
                CommunityRow {
                    daily_probability,
                    type_probs: [probs[0], probs[1], probs[2], probs[3], probs[4]],
                },
            );
        }
    }
    CommunityTransitions { rows }
}

/// Six-way destination row for a STACH source with the published transfer
/// proportions embedded: the UNC share of STACH-bound mass, and the
/// large/small split of the non-UNC remainder.
fn stach_row(
    category: FacilityCategory,
    age: AgeGroup,
    params: &Parameters,
    rng: &mut ChaCha12Rng,
) -> [f64; 6] {
    let m = &params.movement;
    let community = 0.86 * rng.gen_range(0.95..1.05);
    let stach = 0.08 * rng.gen_range(0.9..1.1);
    let ltach = 0.01;
    let nh = if age == AgeGroup::Over65 { 0.05 } else { 0.0 };
    let (unc_share, large_split) = match category {
        FacilityCategory::Unc => (m.unc_to_unc, 0.5),
        FacilityCategory::LargeNonUnc => (m.non_unc_to_unc, m.large_to_large),
        FacilityCategory::SmallNonUnc => (m.non_unc_to_unc, m.small_to_large),
        _ => unreachable!("stach_row is only called for STACH categories"),
    };
    let unc = stach * unc_share;
    let large = stach * (1.0 - unc_share) * large_split;
    let small = stach * (1.0 - unc_share) * (1.0 - large_split);
    let probs = normalize(vec![community, unc, large, small, ltach, nh]);
    [probs[0], probs[1], probs[2], probs[3], probs[4], probs[5]]
}

fn build_location_transitions(
    drafts: &[FacilityDraft],
    catchment: &[County],
    params: &Parameters,
    rng: &mut ChaCha12Rng,
) -> LocationTransitions {
    let mut rows = BTreeMap::new();
    for county in 1..=N_COUNTIES as u8 {
        let in_catchment = catchment.contains(&county);
        for age in AgeGroup::ALL {
            for draft in drafts.iter().filter(|d| d.facility.category.is_stach()) {
                rows.insert(
                    (county, age, SourceKey::Stach(draft.facility.id)),
                    stach_row(draft.facility.category, age, params, rng),
                );
            }
            let unc_m = if in_catchment { 0.01 } else { 0.0 };
            let nh_m = if age == AgeGroup::Over65 { 0.01 } else { 0.0 };
            let ltach_probs = normalize(vec![0.90, unc_m, 0.04, 0.04, 0.0, nh_m]);
            rows.insert(
                (county, age, SourceKey::Ltach),
                [
                    ltach_probs[0],
                    ltach_probs[1],
                    ltach_probs[2],
                    ltach_probs[3],
                    ltach_probs[4],
                    ltach_probs[5],
                ],
            );
            let unc_m = if in_catchment { 0.004 } else { 0.0 };
            let nh_probs = normalize(vec![0.95, unc_m, 0.016, 0.025, 0.005, 0.0]);
            rows.insert(
                (county, age, SourceKey::Nh),
                [
                    nh_probs[0],
                    nh_probs[1],
                    nh_probs[2],
                    nh_probs[3],
                    nh_probs[4],
                    nh_probs[5],
                ],
            );
        }
    }
    LocationTransitions { rows }
}

fn build_nh_los_pools() -> NhLosPools {
    let mut admission = Vec::new();
    for days in 1..=200u32 {
        let count = (400.0 * (-(days as f64) / 45.0).exp()).round() as u32;
        for _ in 0..count {
            admission.push(days);
        }
    }
    let mut remaining = Vec::new();
    for days in 1..=120u32 {
        let count = (300.0 * (-(days as f64) / 40.0).exp()).round() as u32;
        for _ in 0..count {
            remaining.push(days);
        }
    }
    NhLosPools { admission, remaining }
}

fn build_case_series(
    spec: &SynthSpec,
    county_pop_real: &[u64],
    rng: &mut ChaCha12Rng,
) -> CaseSeries {
    let n_days = spec.case_days;
    let mut per_county = vec![vec![0u32; n_days]; N_COUNTIES];
    for county in 0..N_COUNTIES {
        let pop = county_pop_real[county] as f64;
        for day in 0..n_days {
            let ramp = 0.3 + 0.9 * day as f64 / (n_days - 1) as f64;
            let mean = pop * 6.0e-5 * ramp;
            per_county[county][day] = if mean > 1e-9 {
                Poisson::new(mean).expect("positive mean").sample(rng) as u32
            } else {
                0
            };
        }
    }
    CaseSeries {
        start_date: epidemic_start_date(),
        n_days,
        per_county,
    }
}

/// Generate every input file under `dir`. Returns the parameters written
/// alongside the data (defaults plus the bundle's scale factor).
pub fn generate_bundle(spec: &SynthSpec, dir: &Path) -> Result<Parameters> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut params = Parameters::default();
    params.run.scale_factor = spec.scale_factor();

    let population = build_population(spec, &mut rng);
    let county_pop = population.county_counts();
    let scale = params.run.scale_factor;
    let county_pop_real: Vec<u64> = county_pop
        .iter()
        .map(|&c| ((c as f64) / scale).round() as u64)
        .collect();

    let drafts = build_facilities(spec, &county_pop, &mut rng);
    let distances = build_distances(&drafts);
    let catchment = catchment_counties(&drafts);
    let discharges = build_discharges(&drafts, &county_pop, &catchment, &distances, &mut rng);
    let community = build_community_transitions(&catchment, &mut rng);
    let location = build_location_transitions(&drafts, &catchment, &params, &mut rng);
    let nh_los = build_nh_los_pools();
    let cases = build_case_series(spec, &county_pop_real, &mut rng);

    let facilities: Vec<Facility> = drafts.into_iter().map(|d| d.facility).collect();
    let bundle = Bundle {
        facilities,
        population,
        community,
        location,
        discharges,
        distances,
        nh_los,
        cases,
        census_override: None,
    };
    bundle.save(dir)?;
    params.save(&dir.join(PARAMS_FILE))?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            n_agents: 5000,
            n_unc: 2,
            n_large: 2,
            n_small: 3,
            n_ltach: 1,
            n_nh: 3,
            seed: 7,
            case_days: 60,
        }
    }

    #[test]
    fn bundle_loads_without_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        assert_eq!(bundle.population.rows.len(), 5000);
        assert_eq!(bundle.facilities.len(), 1 + 2 + 2 + 3 + 1 + 3);
    }

    #[test]
    fn same_spec_and_seed_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir_a.path()).unwrap();
        generate_bundle(&tiny_spec(), dir_b.path()).unwrap();
        for entry in std::fs::read_dir(dir_a.path()).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name();
            let a = std::fs::read(entry.path()).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identical generations");
        }
    }

    #[test]
    fn large_rows_embed_transfer_splits() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let large_id = bundle
            .facilities
            .iter()
            .find(|f| f.category == FacilityCategory::LargeNonUnc)
            .unwrap()
            .id;
        let row = bundle
            .location
            .row(1, AgeGroup::Under50, SourceKey::Stach(large_id))
            .unwrap();
        // non-UNC STACH mass splits 0.8 large / 0.2 small
        let large_share = row[2] / (row[2] + row[3]);
        assert!((large_share - 0.8).abs() < 1e-9, "share = {large_share}");
        // 0.0322 of STACH-bound mass routes to UNC
        let unc_share = row[1] / (row[1] + row[2] + row[3]);
        assert!((unc_share - 0.0322).abs() < 1e-9, "share = {unc_share}");
    }

    #[test]
    fn unc_rows_embed_unc_share() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let unc_id = bundle
            .facilities
            .iter()
            .find(|f| f.category == FacilityCategory::Unc)
            .unwrap()
            .id;
        let row = bundle
            .location
            .row(5, AgeGroup::Over65, SourceKey::Stach(unc_id))
            .unwrap();
        let unc_share = row[1] / (row[1] + row[2] + row[3]);
        assert!((unc_share - 0.90).abs() < 1e-9, "share = {unc_share}");
    }

    #[test]
    fn round_trip_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let redir = tempfile::tempdir().unwrap();
        bundle.save(redir.path()).unwrap();
        for name in [
            FACILITIES_FILE,
            POPULATION_FILE,
            COMMUNITY_TRANSITIONS_FILE,
            LOCATION_TRANSITIONS_FILE,
            COUNTY_DISCHARGES_FILE,
            DISTANCES_FILE,
            NH_LOS_FILE,
            NH_REMAINING_FILE,
            CASES_FILE,
        ] {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            let b = std::fs::read(redir.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} is not idempotent under load/save");
        }
    }

    #[test]
    fn every_county_has_a_small_stach_option() {
        let dir = tempfile::tempdir().unwrap();
        generate_bundle(&tiny_spec(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let small_ids: Vec<FacilityId> = bundle
            .facilities
            .iter()
            .filter(|f| f.category == FacilityCategory::SmallNonUnc)
            .map(|f| f.id)
            .collect();
        for county in 1..=N_COUNTIES as u8 {
            let covered = small_ids
                .iter()
                .any(|&fid| bundle.discharges.contains_county(fid, county));
            assert!(covered, "county {county} lacks small-STACH discharge data");
        }
    }
}
