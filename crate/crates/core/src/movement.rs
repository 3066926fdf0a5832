//! The location submodel: community departures, facility routing, length of
//! stay, ICU determination for non-COVID admissions, readmission scheduling,
//! and the admission/turn-away fallback chain.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::ingest::{
    CommunityRow, DischargeTable, DistanceIndex, LocationTransitions, SourceKey,
};
use crate::params::Parameters;
use crate::world::{
    Agent, AgentId, BedKind, County, Day, Facility, FacilityCategory, FacilityId,
};

/// Radius for the last admission fallback stage.
pub const FALLBACK_RADIUS_MILES: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TurnAwayStage {
    FirstChoice,
    Catchment,
    Radius200,
    CompletelyTurnedAway,
}

impl TurnAwayStage {
    pub fn label(self) -> &'static str {
        match self {
            TurnAwayStage::FirstChoice => "first_choice",
            TurnAwayStage::Catchment => "catchment",
            TurnAwayStage::Radius200 => "radius_200",
            TurnAwayStage::CompletelyTurnedAway => "completely_turned_away",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TurnAwayRecord {
    pub day: Day,
    pub agent: AgentId,
    pub county: County,
    pub facility: FacilityId,
    pub need: BedKind,
    pub stage: TurnAwayStage,
    /// Not exported in the ledger file; used to split Table-5 counters.
    pub covid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionResult {
    Admitted(FacilityId),
    CompletelyTurnedAway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferResult {
    Admitted,
    ReturnedToCommunity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDestination {
    Community,
    Facility(FacilityCategory),
}

#[derive(Debug, Clone, Copy)]
pub enum RouteContext {
    NewAdmission,
    Transfer { from: FacilityId },
}

/// Pick an index proportionally to `weights`. Returns None when all weights
/// are zero.
pub fn weighted_pick(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = Some(i);
        if u < w {
            return Some(i);
        }
        u -= w;
    }
    last_positive
}

/// Per-facility length-of-stay model: gamma draws for STACH/LTACH stays,
/// the empirical pool for NH stays.
pub struct LosModel {
    gamma: Vec<Gamma<f64>>,
    nh_pool: Vec<u32>,
}

impl LosModel {
    pub fn build(facilities: &[Facility], params: &Parameters, nh_pool: Vec<u32>) -> Result<LosModel> {
        let overrides = &params.movement.gamma_los;
        let mut gamma = Vec::with_capacity(facilities.len());
        for f in facilities {
            let (shape, scale) = overrides
                .iter()
                .find(|(fid, _, _)| *fid == f.id)
                .map(|&(_, sh, sc)| (sh, sc))
                .unwrap_or((
                    params.movement.default_gamma_shape,
                    params.movement.default_gamma_scale,
                ));
            let dist = Gamma::new(shape, scale)
                .map_err(|e| Error::Config(format!("gamma LOS for facility {}: {e}", f.id)))?;
            gamma.push(dist);
        }
        if nh_pool.is_empty() {
            return Err(Error::Config("empty NH length-of-stay pool".into()));
        }
        Ok(LosModel { gamma, nh_pool })
    }

    /// Integer LOS in days: ceiling of a gamma draw (minimum one day) for
    /// hospitals, a uniform draw from the empirical pool for NHs.
    pub fn sample(&self, facility: &Facility, rng: &mut impl Rng) -> u32 {
        match facility.category {
            FacilityCategory::Nh => {
                let v = self.nh_pool[rng.gen_range(0..self.nh_pool.len())];
                v.max(1)
            }
            _ => {
                let draw = self.gamma[facility.id as usize].sample(rng);
                (draw.ceil() as u32).max(1)
            }
        }
    }

    /// Raw continuous gamma draw, used by the remaining-stay mini-simulation.
    pub fn sample_gamma_raw(&self, facility_id: FacilityId, rng: &mut impl Rng) -> f64 {
        self.gamma[facility_id as usize].sample(rng)
    }
}

/// Decide whether a community agent departs today and, if so, which facility
/// type it heads to (index into `TYPE_ORDER`).
pub fn departure_draw(row: &CommunityRow, rng: &mut impl Rng) -> Option<usize> {
    if row.daily_probability <= 0.0 || rng.gen::<f64>() >= row.daily_probability {
        return None;
    }
    weighted_pick(&row.type_probs, rng)
}

/// Probability of ICU-level care for a non-COVID admission.
pub fn icu_probability(params: &Parameters, agent: &Agent, los: u32) -> f64 {
    let c = &params.movement.icu_logistic;
    let z = c.intercept
        + c.age_group[agent.age_group.index()]
        + if agent.comorbidity { c.comorbidity } else { 0.0 }
        + c.los * los as f64;
    1.0 / (1.0 + (-z).exp())
}

/// With readmission enabled, schedule a return to the discharging STACH with
/// probability `readmission_probability`, 1 to 30 days out.
pub fn schedule_readmission(
    params: &Parameters,
    current_day: Day,
    facility: FacilityId,
    rng: &mut impl Rng,
) -> Option<(Day, FacilityId)> {
    let m = &params.movement;
    if !m.readmission_enabled {
        return None;
    }
    if rng.gen::<f64>() >= m.readmission_probability {
        return None;
    }
    let offset = rng.gen_range(1..=m.readmission_window_days);
    Some((current_day + offset, facility))
}

pub struct Router<'a> {
    pub locations: &'a LocationTransitions,
    pub discharges: &'a DischargeTable,
    pub distances: &'a DistanceIndex,
    pub params: &'a Parameters,
}

impl<'a> Router<'a> {
    /// Former NH residents return to their previous NH about 80% of the time
    /// when their hospital stay ends; the rest follow the ordinary transition
    /// flow.
    pub fn resolve_nh_return(&self, previous: FacilityId, rng: &mut impl Rng) -> Option<FacilityId> {
        if rng.gen::<f64>() < self.params.movement.nh_return_probability {
            Some(previous)
        } else {
            None
        }
    }

    /// Draw the destination type for an agent whose LOS ends today. When a
    /// non-UNC STACH routes to a non-UNC STACH, the large/small choice is
    /// re-split with the published conditional proportions.
    pub fn choose_transfer_type(
        &self,
        agent: &Agent,
        source: SourceKey,
        source_category: FacilityCategory,
        rng: &mut impl Rng,
    ) -> Result<TransferDestination> {
        let row = self.locations.row(agent.county, agent.age_group, source)?;
        let idx = weighted_pick(row, rng)
            .ok_or_else(|| Error::Config("transition row has no positive mass".into()))?;
        let dest = match idx {
            0 => return Ok(TransferDestination::Community),
            1 => FacilityCategory::Unc,
            2 => FacilityCategory::LargeNonUnc,
            3 => FacilityCategory::SmallNonUnc,
            4 => FacilityCategory::Ltach,
            5 => FacilityCategory::Nh,
            _ => unreachable!(),
        };
        let non_unc_source = matches!(
            source_category,
            FacilityCategory::LargeNonUnc | FacilityCategory::SmallNonUnc
        );
        if non_unc_source
            && matches!(
                dest,
                FacilityCategory::LargeNonUnc | FacilityCategory::SmallNonUnc
            )
        {
            let large_share = match source_category {
                FacilityCategory::LargeNonUnc => self.params.movement.large_to_large,
                _ => self.params.movement.small_to_large,
            };
            let dest = if rng.gen::<f64>() < large_share {
                FacilityCategory::LargeNonUnc
            } else {
                FacilityCategory::SmallNonUnc
            };
            return Ok(TransferDestination::Facility(dest));
        }
        Ok(TransferDestination::Facility(dest))
    }

    fn facilities_of<'f>(
        &self,
        facilities: &'f [Facility],
        category: FacilityCategory,
    ) -> impl Iterator<Item = &'f Facility> {
        facilities.iter().filter(move |f| f.category == category)
    }

    /// Discharge-weighted candidates of one STACH category for a county.
    fn discharge_candidates(
        &self,
        facilities: &[Facility],
        county: County,
        category: FacilityCategory,
        exclude: Option<FacilityId>,
    ) -> Vec<(FacilityId, f64)> {
        self.facilities_of(facilities, category)
            .filter(|f| Some(f.id) != exclude)
            .filter_map(|f| {
                let w = self.discharges.weight(f.id, county);
                (w > 0).then_some((f.id, w as f64))
            })
            .collect()
    }

    fn uniform_over(
        &self,
        facilities: &[Facility],
        category: FacilityCategory,
        exclude: Option<FacilityId>,
        rng: &mut impl Rng,
    ) -> Result<FacilityId> {
        let ids: Vec<FacilityId> = self
            .facilities_of(facilities, category)
            .filter(|f| Some(f.id) != exclude)
            .map(|f| f.id)
            .collect();
        if ids.is_empty() {
            return Err(Error::Routing(format!(
                "no facility of category {} available",
                category.label()
            )));
        }
        Ok(ids[rng.gen_range(0..ids.len())])
    }

    /// The two largest UNC STACHs by total bed count.
    fn two_largest_unc(&self, facilities: &[Facility]) -> Vec<FacilityId> {
        let mut unc: Vec<&Facility> = self
            .facilities_of(facilities, FacilityCategory::Unc)
            .collect();
        unc.sort_by_key(|f| std::cmp::Reverse(f.beds.non_icu + f.beds.icu));
        unc.iter().take(2).map(|f| f.id).collect()
    }

    /// Bed-count-vs-distance weighted draw over large non-UNC STACHs, for
    /// counties with no large-STACH discharge data.
    fn large_weighted_fallback(
        &self,
        facilities: &[Facility],
        county: County,
        exclude: Option<FacilityId>,
        rng: &mut impl Rng,
    ) -> Option<FacilityId> {
        let m = &self.params.movement;
        let candidates: Vec<(FacilityId, f64)> = self
            .facilities_of(facilities, FacilityCategory::LargeNonUnc)
            .filter(|f| Some(f.id) != exclude)
            .map(|f| {
                let beds = (f.beds.non_icu + f.beds.icu) as f64;
                let dist = self.distances.distance(county, f.id).unwrap_or(1e9);
                let w = beds.powf(m.bed_weight_exponent)
                    / (1.0 + dist).powf(m.distance_weight_exponent);
                (f.id, w)
            })
            .collect();
        let weights: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        weighted_pick(&weights, rng).map(|i| candidates[i].0)
    }

    /// Inverse-distance weighted draw, used for NH and LTACH selection.
    fn inverse_distance_pick(
        &self,
        facilities: &[Facility],
        county: County,
        category: FacilityCategory,
        rng: &mut impl Rng,
    ) -> Result<FacilityId> {
        let candidates: Vec<(FacilityId, f64)> = self
            .facilities_of(facilities, category)
            .map(|f| {
                let dist = self.distances.distance(county, f.id).unwrap_or(1e9);
                (f.id, 1.0 / (1.0 + dist))
            })
            .collect();
        let weights: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        weighted_pick(&weights, rng)
            .map(|i| candidates[i].0)
            .ok_or_else(|| {
                Error::Routing(format!("no facility of category {}", category.label()))
            })
    }

    /// Pick the specific facility of `category` for an agent, applying the
    /// category-specific fallbacks for counties missing discharge data and
    /// for self-transfers.
    pub fn choose_specific_facility(
        &self,
        facilities: &[Facility],
        agent: &Agent,
        category: FacilityCategory,
        context: RouteContext,
        rng: &mut impl Rng,
    ) -> Result<FacilityId> {
        match category {
            FacilityCategory::Nh | FacilityCategory::Ltach => {
                self.inverse_distance_pick(facilities, agent.county, category, rng)
            }
            FacilityCategory::Community => Err(Error::Routing(
                "community is not a facility destination".into(),
            )),
            FacilityCategory::SmallNonUnc => {
                // Agents may not stay at the same small STACH; a county with
                // data for only that one falls back to a uniform pick over
                // the others.
                let exclude = match context {
                    RouteContext::Transfer { from }
                        if facilities[from as usize].category == category =>
                    {
                        Some(from)
                    }
                    _ => None,
                };
                let candidates =
                    self.discharge_candidates(facilities, agent.county, category, exclude);
                if candidates.is_empty() {
                    return self.uniform_over(facilities, category, exclude, rng);
                }
                let weights: Vec<f64> = candidates.iter().map(|c| c.1).collect();
                let idx = weighted_pick(&weights, rng).expect("non-empty candidates");
                Ok(candidates[idx].0)
            }
            FacilityCategory::LargeNonUnc => {
                let candidates =
                    self.discharge_candidates(facilities, agent.county, category, None);
                if !candidates.is_empty() {
                    let weights: Vec<f64> = candidates.iter().map(|c| c.1).collect();
                    let idx = weighted_pick(&weights, rng).expect("non-empty candidates");
                    return Ok(candidates[idx].0);
                }
                if let Some(id) = self.large_weighted_fallback(facilities, agent.county, None, rng)
                {
                    return Ok(id);
                }
                self.uniform_over(facilities, category, None, rng)
            }
            FacilityCategory::Unc => {
                let exclude_self = match context {
                    RouteContext::Transfer { from }
                        if facilities[from as usize].category == category =>
                    {
                        Some(from)
                    }
                    _ => None,
                };
                let all = self.discharge_candidates(facilities, agent.county, category, None);
                // A self-transfer from the county's only UNC option goes to
                // one of the two largest UNC STACHs instead.
                if let Some(from) = exclude_self {
                    let only_self = all.len() == 1 && all[0].0 == from;
                    if only_self || all.is_empty() {
                        let two = self.two_largest_unc(facilities);
                        if two.is_empty() {
                            return Err(Error::Routing("no UNC STACH available".into()));
                        }
                        return Ok(two[rng.gen_range(0..two.len())]);
                    }
                    let weights: Vec<f64> = all.iter().map(|c| c.1).collect();
                    let idx = weighted_pick(&weights, rng).expect("non-empty candidates");
                    return Ok(all[idx].0);
                }
                if all.is_empty() {
                    // County outside the referral catchment: route to one of
                    // the two largest referral hospitals.
                    let two = self.two_largest_unc(facilities);
                    if two.is_empty() {
                        return Err(Error::Routing("no UNC STACH available".into()));
                    }
                    return Ok(two[rng.gen_range(0..two.len())]);
                }
                let weights: Vec<f64> = all.iter().map(|c| c.1).collect();
                let idx = weighted_pick(&weights, rng).expect("non-empty candidates");
                Ok(all[idx].0)
            }
        }
    }

    /// STACHs whose discharge tables include the agent's county (the
    /// catchment fallback pool), nearest first.
    fn catchment_pool(
        &self,
        facilities: &[Facility],
        county: County,
        tried: &[FacilityId],
    ) -> Vec<FacilityId> {
        let mut pool: Vec<(FacilityId, f64)> = facilities
            .iter()
            .filter(|f| f.category.is_stach() && !tried.contains(&f.id))
            .filter(|f| self.discharges.contains_county(f.id, county))
            .map(|f| (f.id, self.distances.distance(county, f.id).unwrap_or(1e9)))
            .collect();
        pool.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        pool.into_iter().map(|(id, _)| id).collect()
    }

    /// STACHs within the 200-mile fallback radius, nearest first.
    fn radius_pool(
        &self,
        facilities: &[Facility],
        county: County,
        tried: &[FacilityId],
    ) -> Vec<FacilityId> {
        self.distances
            .within(county, FALLBACK_RADIUS_MILES)
            .filter(|(id, _)| {
                facilities[*id as usize].category.is_stach() && !tried.contains(id)
            })
            .map(|(id, _)| id)
            .collect()
    }

    /// Full admission chain for an agent seeking an STACH bed: first choice,
    /// second choice by the same discharge probabilities, any STACH serving
    /// the agent's county, then any STACH within 200 miles. Turn-aways are
    /// recorded per failed attempt; exhausting every stage records a
    /// completely-turned-away entry.
    #[allow(clippy::too_many_arguments)]
    pub fn attempt_admission(
        &self,
        facilities: &mut [Facility],
        agent: &Agent,
        need: BedKind,
        first_choice: FacilityId,
        day: Day,
        covid: bool,
        rng: &mut impl Rng,
        ledger: &mut Vec<TurnAwayRecord>,
    ) -> Result<AdmissionResult> {
        let mut tried: Vec<FacilityId> = Vec::new();
        let try_facility = |facilities: &mut [Facility],
                                id: FacilityId,
                                stage: TurnAwayStage,
                                tried: &mut Vec<FacilityId>,
                                ledger: &mut Vec<TurnAwayRecord>|
         -> Result<bool> {
            tried.push(id);
            match facilities[id as usize].assign_bed(agent.id, need)? {
                crate::world::AssignOutcome::Assigned => Ok(true),
                crate::world::AssignOutcome::Full => {
                    ledger.push(TurnAwayRecord {
                        day,
                        agent: agent.id,
                        county: agent.county,
                        facility: id,
                        need,
                        stage,
                        covid,
                    });
                    Ok(false)
                }
            }
        };

        if try_facility(facilities, first_choice, TurnAwayStage::FirstChoice, &mut tried, ledger)? {
            return Ok(AdmissionResult::Admitted(first_choice));
        }

        // Second choice: another draw, without replacement, from the same
        // category's discharge distribution.
        let category = facilities[first_choice as usize].category;
        let second_candidates =
            self.discharge_candidates(facilities, agent.county, category, Some(first_choice));
        if !second_candidates.is_empty() {
            let weights: Vec<f64> = second_candidates.iter().map(|c| c.1).collect();
            let idx = weighted_pick(&weights, rng).expect("non-empty candidates");
            let second = second_candidates[idx].0;
            if try_facility(facilities, second, TurnAwayStage::FirstChoice, &mut tried, ledger)? {
                return Ok(AdmissionResult::Admitted(second));
            }
        }

        for id in self.catchment_pool(facilities, agent.county, &tried) {
            if try_facility(facilities, id, TurnAwayStage::Catchment, &mut tried, ledger)? {
                return Ok(AdmissionResult::Admitted(id));
            }
        }

        for id in self.radius_pool(facilities, agent.county, &tried) {
            if try_facility(facilities, id, TurnAwayStage::Radius200, &mut tried, ledger)? {
                return Ok(AdmissionResult::Admitted(id));
            }
        }

        ledger.push(TurnAwayRecord {
            day,
            agent: agent.id,
            county: agent.county,
            facility: first_choice,
            need,
            stage: TurnAwayStage::CompletelyTurnedAway,
            covid,
        });
        Ok(AdmissionResult::CompletelyTurnedAway)
    }

    /// Transfers try their single destination only; a full facility sends the
    /// agent to the community.
    #[allow(clippy::too_many_arguments)]
    pub fn attempt_transfer(
        &self,
        facilities: &mut [Facility],
        agent: &Agent,
        need: BedKind,
        destination: FacilityId,
        day: Day,
        covid: bool,
        ledger: &mut Vec<TurnAwayRecord>,
    ) -> Result<TransferResult> {
        match facilities[destination as usize].assign_bed(agent.id, need)? {
            crate::world::AssignOutcome::Assigned => Ok(TransferResult::Admitted),
            crate::world::AssignOutcome::Full => {
                ledger.push(TurnAwayRecord {
                    day,
                    agent: agent.id,
                    county: agent.county,
                    facility: destination,
                    need,
                    stage: TurnAwayStage::FirstChoice,
                    covid,
                });
                Ok(TransferResult::ReturnedToCommunity)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgeGroup, BedCounts};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::BTreeMap;

    fn agent(county: County, age: u8) -> Agent {
        Agent::new(1, age, county, false)
    }

    fn facility(id: FacilityId, category: FacilityCategory, beds: u32) -> Facility {
        Facility::new(
            id,
            format!("f{id}"),
            category,
            if category.is_stach() { Some(1) } else { None },
            BedCounts {
                non_icu: beds,
                icu: beds,
                ventilator: beds,
            },
        )
    }

    struct Fixture {
        facilities: Vec<Facility>,
        discharges: DischargeTable,
        distances: DistanceIndex,
        locations: LocationTransitions,
        params: Parameters,
    }

    impl Fixture {
        /// Community + 2 UNC + 2 large + 3 small, all in a line.
        fn new() -> Fixture {
            let facilities = vec![
                Facility::new(0, "community".into(), FacilityCategory::Community, None, BedCounts::default()),
                facility(1, FacilityCategory::Unc, 100),
                facility(2, FacilityCategory::Unc, 50),
                facility(3, FacilityCategory::LargeNonUnc, 80),
                facility(4, FacilityCategory::LargeNonUnc, 40),
                facility(5, FacilityCategory::SmallNonUnc, 20),
                facility(6, FacilityCategory::SmallNonUnc, 20),
                facility(7, FacilityCategory::SmallNonUnc, 20),
            ];
            let mut per_facility: BTreeMap<FacilityId, BTreeMap<County, u32>> = BTreeMap::new();
            per_facility.insert(1, BTreeMap::from([(1, 80), (2, 20)]));
            per_facility.insert(2, BTreeMap::from([(2, 100)]));
            per_facility.insert(3, BTreeMap::from([(1, 50), (2, 50)]));
            per_facility.insert(5, BTreeMap::from([(1, 100)]));
            per_facility.insert(6, BTreeMap::from([(2, 60), (1, 40)]));
            // facility 4 (large) and 7 (small) have no discharge data
            let discharges = DischargeTable { per_facility };
            let mut per_county = vec![Vec::new(); crate::world::N_COUNTIES];
            per_county[0] = vec![
                (1, 5.0),
                (2, 10.0),
                (3, 15.0),
                (4, 20.0),
                (5, 25.0),
                (6, 30.0),
                (7, 35.0),
            ];
            per_county[1] = vec![
                (2, 4.0),
                (1, 9.0),
                (4, 14.0),
                (3, 19.0),
                (6, 24.0),
                (7, 29.0),
                (5, 34.0),
            ];
            // county 3 has no discharge data anywhere
            per_county[2] = vec![
                (1, 50.0),
                (2, 60.0),
                (3, 70.0),
                (4, 80.0),
                (5, 90.0),
                (6, 95.0),
                (7, 99.0),
            ];
            let distances = DistanceIndex { per_county };
            let locations = LocationTransitions { rows: BTreeMap::new() };
            Fixture {
                facilities,
                discharges,
                distances,
                locations,
                params: Parameters::default(),
            }
        }

        fn router(&self) -> Router<'_> {
            Router {
                locations: &self.locations,
                discharges: &self.discharges,
                distances: &self.distances,
                params: &self.params,
            }
        }
    }

    #[test]
    fn departure_probability_zero_never_departs() {
        let row = CommunityRow {
            daily_probability: 0.0,
            type_probs: [0.2, 0.2, 0.2, 0.2, 0.2],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            assert!(departure_draw(&row, &mut rng).is_none());
        }
    }

    #[test]
    fn departure_point_mass_goes_to_unc() {
        let row = CommunityRow {
            daily_probability: 1.0,
            type_probs: [1.0, 0.0, 0.0, 0.0, 0.0],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(departure_draw(&row, &mut rng), Some(0));
        }
    }

    #[test]
    fn departures_match_binomial_rate() {
        // a million agent-days at p = 0.01
        let row = CommunityRow {
            daily_probability: 0.01,
            type_probs: [0.2, 0.2, 0.2, 0.2, 0.2],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 1_000_000;
        let departures = (0..n)
            .filter(|_| departure_draw(&row, &mut rng).is_some())
            .count() as f64;
        assert!(
            (departures - 10_000.0).abs() < 300.0,
            "departures = {departures}"
        );
    }

    #[test]
    fn icu_probability_closed_form() {
        let mut params = Parameters::default();
        params.movement.icu_logistic = IcuLogisticZero();
        let a = agent(1, 30);
        assert!((icu_probability(&params, &a, 0) - 0.5).abs() < 1e-12);

        params.movement.icu_logistic.intercept = -50.0;
        assert!(icu_probability(&params, &a, 0) < 1e-10);

        params.movement.icu_logistic.intercept = 0.0;
        params.movement.icu_logistic.los = 0.1;
        let p = icu_probability(&params, &a, 10);
        assert!((p - 0.7310585786300049).abs() < 1e-12);
    }

    #[allow(non_snake_case)]
    fn IcuLogisticZero() -> crate::params::IcuLogistic {
        crate::params::IcuLogistic {
            intercept: 0.0,
            age_group: [0.0, 0.0, 0.0],
            comorbidity: 0.0,
            los: 0.0,
        }
    }

    #[test]
    fn readmission_disabled_never_schedules() {
        let params = Parameters::default();
        assert!(!params.movement.readmission_enabled);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(schedule_readmission(&params, 10, 3, &mut rng).is_none());
        }
    }

    #[test]
    fn readmission_rate_and_window() {
        let mut params = Parameters::default();
        params.movement.readmission_enabled = true;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 100_000;
        let mut scheduled = 0;
        for _ in 0..n {
            if let Some((day, fid)) = schedule_readmission(&params, 100, 9, &mut rng) {
                scheduled += 1;
                assert_eq!(fid, 9);
                assert!((101..=130).contains(&day));
            }
        }
        let share = scheduled as f64 / n as f64;
        assert!((share - 0.10).abs() < 0.005, "share = {share}");
    }

    #[test]
    fn nh_return_frequency() {
        let fx = Fixture::new();
        let router = fx.router();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 100_000;
        let returns = (0..n)
            .filter(|_| router.resolve_nh_return(42, &mut rng) == Some(42))
            .count() as f64;
        let share = returns / n as f64;
        assert!((share - 0.80).abs() < 0.01, "share = {share}");
    }

    #[test]
    fn point_mass_discharge_row_always_selected() {
        let fx = Fixture::new();
        let router = fx.router();
        let a = agent(2, 70); // county 2: UNC data only for facility 2
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..200 {
            let id = router
                .choose_specific_facility(
                    &fx.facilities,
                    &a,
                    FacilityCategory::Unc,
                    RouteContext::NewAdmission,
                    &mut rng,
                )
                .unwrap();
            assert_eq!(id, 2);
        }
    }

    #[test]
    fn small_self_transfer_single_county_goes_elsewhere_uniformly() {
        let fx = Fixture::new();
        let router = fx.router();
        let a = agent(1, 40); // county 1 small data: facility 5 only
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut seen = std::collections::BTreeMap::new();
        for _ in 0..40_000 {
            let id = router
                .choose_specific_facility(
                    &fx.facilities,
                    &a,
                    FacilityCategory::SmallNonUnc,
                    RouteContext::Transfer { from: 5 },
                    &mut rng,
                )
                .unwrap();
            assert_ne!(id, 5, "may not stay at the same small STACH");
            *seen.entry(id).or_insert(0u32) += 1;
        }
        // uniform over the other two small STACHs
        let f6 = seen[&6] as f64;
        let f7 = seen[&7] as f64;
        assert!((f6 / (f6 + f7) - 0.5).abs() < 0.02);
    }

    #[test]
    fn unc_self_transfer_single_county_uses_two_largest() {
        let fx = Fixture::new();
        let router = fx.router();
        let a = agent(2, 40); // county 2 UNC data: facility 2 only
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..500 {
            let id = router
                .choose_specific_facility(
                    &fx.facilities,
                    &a,
                    FacilityCategory::Unc,
                    RouteContext::Transfer { from: 2 },
                    &mut rng,
                )
                .unwrap();
            // facilities 1 and 2 are the two largest UNC STACHs
            assert!(id == 1 || id == 2);
        }
    }

    #[test]
    fn large_gap_county_uses_weighted_fallback() {
        let fx = Fixture::new();
        let router = fx.router();
        let a = agent(3, 40); // county 3: no large discharge data
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut seen = std::collections::BTreeMap::new();
        for _ in 0..50_000 {
            let id = router
                .choose_specific_facility(
                    &fx.facilities,
                    &a,
                    FacilityCategory::LargeNonUnc,
                    RouteContext::NewAdmission,
                    &mut rng,
                )
                .unwrap();
            *seen.entry(id).or_insert(0u32) += 1;
        }
        // facility 3: 160 beds at 70 miles; facility 4: 80 beds at 80 miles.
        // weights 160/71 vs 80/81 -> shares ~0.695/0.305
        let f3 = seen[&3] as f64;
        let f4 = seen[&4] as f64;
        let expected = (160.0 / 71.0) / (160.0 / 71.0 + 80.0 / 81.0);
        assert!(
            (f3 / (f3 + f4) - expected).abs() < 0.01,
            "share = {}, expected = {expected}",
            f3 / (f3 + f4)
        );
    }

    #[test]
    fn transfer_split_conditional_frequencies() {
        // from a large STACH, conditioned on a non-UNC STACH destination,
        // the large/small split follows the published 0.8/0.2
        let mut fx = Fixture::new();
        let mut rows = BTreeMap::new();
        // all mass on non-UNC STACH destinations
        rows.insert(
            (1, AgeGroup::Under50, SourceKey::Stach(3)),
            [0.0, 0.0, 0.5, 0.5, 0.0, 0.0],
        );
        fx.locations = LocationTransitions { rows };
        let router = fx.router();
        let a = agent(1, 30);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let n = 100_000;
        let mut large = 0u32;
        for _ in 0..n {
            match router
                .choose_transfer_type(&a, SourceKey::Stach(3), FacilityCategory::LargeNonUnc, &mut rng)
                .unwrap()
            {
                TransferDestination::Facility(FacilityCategory::LargeNonUnc) => large += 1,
                TransferDestination::Facility(FacilityCategory::SmallNonUnc) => {}
                other => panic!("unexpected destination {other:?}"),
            }
        }
        let share = large as f64 / n as f64;
        assert!((share - 0.8).abs() < 0.01, "share = {share}");
    }

    #[test]
    fn community_point_mass_row_always_community() {
        let mut fx = Fixture::new();
        let mut rows = BTreeMap::new();
        rows.insert(
            (1, AgeGroup::Under50, SourceKey::Stach(3)),
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        fx.locations = LocationTransitions { rows };
        let router = fx.router();
        let a = agent(1, 30);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            assert_eq!(
                router
                    .choose_transfer_type(&a, SourceKey::Stach(3), FacilityCategory::LargeNonUnc, &mut rng)
                    .unwrap(),
                TransferDestination::Community
            );
        }
    }

    #[test]
    fn admission_first_choice_free_no_records() {
        let fx = Fixture::new();
        let router = fx.router();
        let mut facilities = fx.facilities.clone();
        let a = agent(1, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut ledger = Vec::new();
        let result = router
            .attempt_admission(&mut facilities, &a, BedKind::NonIcu, 1, 3, false, &mut rng, &mut ledger)
            .unwrap();
        assert_eq!(result, AdmissionResult::Admitted(1));
        assert!(ledger.is_empty());
    }

    #[test]
    fn admission_second_choice_after_first_full() {
        let fx = Fixture::new();
        let router = fx.router();
        let mut facilities = fx.facilities.clone();
        // saturate facility 1's non-ICU beds
        for i in 0..100 {
            facilities[1].assign_bed(1000 + i, BedKind::NonIcu).unwrap();
        }
        let a = agent(1, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut ledger = Vec::new();
        let result = router
            .attempt_admission(&mut facilities, &a, BedKind::NonIcu, 1, 3, false, &mut rng, &mut ledger)
            .unwrap();
        // county 1 UNC candidates are {1, 2}; second choice must be 2
        assert_eq!(result, AdmissionResult::Admitted(2));
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger[0].stage, TurnAwayStage::FirstChoice);
        assert_eq!(ledger[0].facility, 1);
    }

    #[test]
    fn admission_exhaustion_records_complete_ladder() {
        let fx = Fixture::new();
        let router = fx.router();
        // zero-bed copies of every facility
        let mut facilities: Vec<Facility> = fx
            .facilities
            .iter()
            .map(|f| {
                Facility::new(f.id, f.name.clone(), f.category, f.county, BedCounts::default())
            })
            .collect();
        let a = agent(1, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut ledger = Vec::new();
        let result = router
            .attempt_admission(&mut facilities, &a, BedKind::Icu, 1, 5, true, &mut rng, &mut ledger)
            .unwrap();
        assert_eq!(result, AdmissionResult::CompletelyTurnedAway);
        let stages: std::collections::BTreeSet<TurnAwayStage> =
            ledger.iter().map(|r| r.stage).collect();
        assert!(stages.contains(&TurnAwayStage::FirstChoice));
        assert!(stages.contains(&TurnAwayStage::Catchment));
        assert!(stages.contains(&TurnAwayStage::Radius200));
        assert!(stages.contains(&TurnAwayStage::CompletelyTurnedAway));
        // every STACH within 200 miles was tried
        let tried: std::collections::BTreeSet<FacilityId> =
            ledger.iter().map(|r| r.facility).collect();
        assert_eq!(tried.len(), 7);
    }

    #[test]
    fn transfer_full_returns_to_community_first_choice_only() {
        let fx = Fixture::new();
        let router = fx.router();
        let mut facilities = fx.facilities.clone();
        for i in 0..80 {
            facilities[3].assign_bed(2000 + i, BedKind::NonIcu).unwrap();
        }
        let a = agent(1, 40);
        let mut ledger = Vec::new();
        let result = router
            .attempt_transfer(&mut facilities, &a, BedKind::NonIcu, 3, 4, false, &mut ledger)
            .unwrap();
        assert_eq!(result, TransferResult::ReturnedToCommunity);
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger[0].stage, TurnAwayStage::FirstChoice);

        let mut ledger2 = Vec::new();
        let ok = router
            .attempt_transfer(&mut facilities, &a, BedKind::Icu, 3, 4, false, &mut ledger2)
            .unwrap();
        assert_eq!(ok, TransferResult::Admitted);
        assert!(ledger2.is_empty());
    }

    #[test]
    fn gamma_los_mean_matches_exponential() {
        // shape 1, scale 5 is Exp(1/5): mean 5 before the ceiling
        let mut params = Parameters::default();
        params.movement.default_gamma_shape = 1.0;
        params.movement.default_gamma_scale = 5.0;
        let facilities = vec![
            Facility::new(0, "c".into(), FacilityCategory::Community, None, BedCounts::default()),
            facility(1, FacilityCategory::SmallNonUnc, 10),
        ];
        let model = LosModel::build(&facilities, &params, vec![3, 3, 10]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| model.sample_gamma_raw(1, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "mean = {mean}");
    }

    #[test]
    fn nh_pool_support_and_floor() {
        let params = Parameters::default();
        let facilities = vec![
            Facility::new(0, "c".into(), FacilityCategory::Community, None, BedCounts::default()),
            facility(1, FacilityCategory::Nh, 10),
        ];
        let model = LosModel::build(&facilities, &params, vec![3, 3, 10]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..10_000 {
            let v = model.sample(&facilities[1], &mut rng);
            assert!(v == 3 || v == 10);
        }
        // zero entries are clamped to one day
        let model = LosModel::build(&facilities, &params, vec![0]).unwrap();
        assert_eq!(model.sample(&facilities[1], &mut rng), 1);
    }

    #[test]
    fn all_los_draws_at_least_one_day() {
        let params = Parameters::default();
        let facilities = vec![
            Facility::new(0, "c".into(), FacilityCategory::Community, None, BedCounts::default()),
            facility(1, FacilityCategory::SmallNonUnc, 10),
        ];
        let model = LosModel::build(&facilities, &params, vec![1]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            assert!(model.sample(&facilities[1], &mut rng) >= 1);
        }
    }
}
