//! The COVID-19 submodel: infection seeding from SEIR targets, testing,
//! Bayesian severity and hospitalization, COVID length of stay, recovery
//! bookkeeping, and day-0 initialization.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{CaseSeries, DistanceIndex, HospitalCensus};
use crate::params::{CovidParams, Parameters};
use crate::seir::ForecastSet;
use crate::world::{
    Agent, AgentId, AssignOutcome, BedKind, County, CovidStatus, Facility, FacilityId,
    TestStatus, N_COUNTIES,
};

/// Hospitals considered for a day-0 COVID bed must be within this distance of
/// the agent's county center.
pub const DAY0_RADIUS_MILES: f64 = 60.0;

/// Selection weights over age groups for new infections, normalized to one.
pub type InfectionAgeWeights = [f64; 3];

/// Bayes: P(infection | age) proportional to P(age | infection) / P(age).
/// The P(infection) factor cancels in the normalization.
pub fn infection_age_weights(
    case_age_dist: [f64; 3],
    pop_age_dist: [f64; 3],
) -> Result<InfectionAgeWeights> {
    let mut weights = [0.0; 3];
    for g in 0..3 {
        if pop_age_dist[g] <= 0.0 {
            if case_age_dist[g] > 0.0 {
                return Err(Error::Domain(format!(
                    "age group {g} has zero population share but nonzero case share"
                )));
            }
            weights[g] = 0.0;
        } else {
            weights[g] = case_age_dist[g] / pop_age_dist[g];
        }
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Domain("all infection age weights are zero".into()));
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(weights)
}

/// Hospitalization probability table indexed by (tested, comorbidity, age).
#[derive(Debug, Clone, PartialEq)]
pub struct HospProbTable {
    /// cells[tested as usize][comorbidity as usize][age index]
    pub cells: [[[f64; 3]; 2]; 2],
}

impl HospProbTable {
    pub fn cell(&self, tested: bool, comorbidity: bool, age_index: usize) -> f64 {
        self.cells[tested as usize][comorbidity as usize][age_index]
    }
}

/// Bayes: P(hosp | age, cc) = P(age | hosp) * P(cc | hosp) * P(hosp) / P(age, cc),
/// assuming conditional independence of age and comorbidities given
/// hospitalization. Under-50 agents are never eligible for comorbidities, so
/// those cells are forced to zero.
pub fn compute_hosp_prob_table(
    p_age_given_hosp: [f64; 3],
    p_cc_given_hosp: [f64; 2],
    p_hosp_tested: f64,
    p_hosp_untested: f64,
    joint_age_cc_pop: [[f64; 3]; 2],
) -> Result<HospProbTable> {
    let mut cells = [[[0.0; 3]; 2]; 2];
    for (t, &p_hosp) in [p_hosp_untested, p_hosp_tested].iter().enumerate() {
        for cc in 0..2 {
            for g in 0..3 {
                if cc == 1 && g == 0 {
                    cells[t][cc][g] = 0.0;
                    continue;
                }
                let numerator = p_age_given_hosp[g] * p_cc_given_hosp[cc] * p_hosp;
                let joint = joint_age_cc_pop[cc][g];
                if joint <= 0.0 {
                    if numerator > 0.0 {
                        return Err(Error::Domain(format!(
                            "zero joint population share for age {g}, cc {cc} with nonzero numerator"
                        )));
                    }
                    cells[t][cc][g] = 0.0;
                    continue;
                }
                let cell = numerator / joint;
                if cell > 1.0 {
                    return Err(Error::Domain(format!(
                        "hospitalization probability {cell} exceeds 1 for age {g}, cc {cc}"
                    )));
                }
                cells[t][cc][g] = cell;
            }
        }
    }
    Ok(HospProbTable { cells })
}

/// Tested with probability `p_tested`, untested otherwise.
pub fn assign_test_status(p_tested: f64, rng: &mut impl Rng) -> TestStatus {
    if rng.gen::<f64>() < p_tested {
        TestStatus::Tested
    } else {
        TestStatus::Untested
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeverityDecision {
    pub status: CovidStatus,
    pub hospital_bound: bool,
    /// Bed kind sought when hospital-bound.
    pub need: Option<BedKind>,
}

/// Severity derives from the hospitalization decision: hospital-bound agents
/// split critical/severe by `prop_hospitalized_to_icu`, critical agents draw
/// a ventilator flag, everyone else is mild or asymptomatic.
pub fn assign_severity(
    c: &CovidParams,
    tested: bool,
    comorbidity: bool,
    age_index: usize,
    rng: &mut impl Rng,
) -> SeverityDecision {
    let p_hosp = c.hospitalization_probability(tested, comorbidity, age_index);
    if rng.gen::<f64>() < p_hosp {
        if rng.gen::<f64>() < c.prop_hospitalized_to_icu {
            let need = if rng.gen::<f64>() < c.icu_with_ventilator_p {
                BedKind::IcuVentilator
            } else {
                BedKind::Icu
            };
            SeverityDecision {
                status: CovidStatus::Critical,
                hospital_bound: true,
                need: Some(need),
            }
        } else {
            SeverityDecision {
                status: CovidStatus::Severe,
                hospital_bound: true,
                need: Some(BedKind::NonIcu),
            }
        }
    } else {
        // Mild agents seek a non-ICU bed only when the parameters allow it.
        let seeks = c.ratio_to_hospital > 0.0 && rng.gen::<f64>() < c.ratio_to_hospital;
        SeverityDecision {
            status: CovidStatus::MildAsymptomatic,
            hospital_bound: seeks,
            need: seeks.then_some(BedKind::NonIcu),
        }
    }
}

/// Truncated-normal COVID LOS on [los_min, los_max], rounded to whole days.
pub fn sample_covid_los(c: &CovidParams, rng: &mut impl Rng) -> u32 {
    let normal = Normal::new(c.los_mean, c.los_std).expect("validated parameters");
    loop {
        let x = normal.sample(rng);
        if x >= c.los_min && x <= c.los_max {
            return x.round() as u32;
        }
    }
}

/// NH step-down decision after a COVID hospital discharge.
pub fn nh_step_down(c: &CovidParams, was_icu: bool, rng: &mut impl Rng) -> bool {
    let p = if was_icu {
        c.hospital_to_nh_icu
    } else {
        c.hospital_to_nh_non_icu
    };
    rng.gen::<f64>() < p
}

/// Sample exactly `target` agents without replacement from per-age-group
/// pools, each agent weighted by its group's weight. Pools are consumed.
/// When fewer agents are eligible than requested, everyone is selected.
pub fn select_weighted_without_replacement(
    pools: &mut [Vec<AgentId>; 3],
    weights: InfectionAgeWeights,
    target: usize,
    rng: &mut impl Rng,
) -> Vec<AgentId> {
    let mut selected = Vec::with_capacity(target);
    while selected.len() < target {
        let group_weights = [
            weights[0] * pools[0].len() as f64,
            weights[1] * pools[1].len() as f64,
            weights[2] * pools[2].len() as f64,
        ];
        let Some(g) = crate::movement::weighted_pick(&group_weights, rng) else {
            break; // all pools exhausted
        };
        let idx = rng.gen_range(0..pools[g].len());
        selected.push(pools[g].swap_remove(idx));
    }
    selected
}

/// One facility's day-0 COVID bed allocation.
#[derive(Debug, Clone, Copy)]
pub struct Day0Allocation {
    pub facility: FacilityId,
    pub non_icu: u32,
    pub icu: u32,
    /// Unrounded proportional shares, kept for rounding audits.
    pub share_non_icu: f64,
    pub share_icu: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Day0Admission {
    pub agent: AgentId,
    pub facility: FacilityId,
    pub bed: BedKind,
}

/// Day-0 infection assignment for one county.
#[derive(Debug, Clone, Copy)]
pub struct Day0CountyRow {
    pub county: County,
    /// Cumulative infections to assign (reported x multiplier, scaled).
    pub target: u32,
    pub eligible: u32,
    pub assigned: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Day0Outcome {
    /// Statewide hospitalization target after scaling.
    pub target_total: u32,
    pub allocations: Vec<Day0Allocation>,
    pub admissions: Vec<Day0Admission>,
    pub active_assigned: u32,
    pub recovered_assigned: u32,
    /// Allocated beds that could not be filled by nearby infected agents.
    pub shortfall: u32,
    /// Per-county infection assignment (active + already recovered).
    pub counties: Vec<Day0CountyRow>,
}

/// Proportional allocation of `target` beds over facilities by free capacity,
/// largest-remainder rounded, capped at each facility's free beds.
fn allocate_beds(free: &[(FacilityId, u32)], target: u32) -> Vec<(FacilityId, u32, f64)> {
    let total_free: u64 = free.iter().map(|&(_, f)| f as u64).sum();
    if total_free == 0 || target == 0 {
        return free.iter().map(|&(id, _)| (id, 0, 0.0)).collect();
    }
    let target = target.min(total_free as u32);
    let shares: Vec<f64> = free
        .iter()
        .map(|&(_, f)| target as f64 * f as f64 / total_free as f64)
        .collect();
    let mut alloc: Vec<u32> = shares.iter().map(|s| s.floor() as u32).collect();
    let mut remainders: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s - s.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut assigned: u32 = alloc.iter().sum();
    for (i, _) in remainders {
        if assigned >= target {
            break;
        }
        if alloc[i] < free[i].1 {
            alloc[i] += 1;
            assigned += 1;
        }
    }
    free.iter()
        .zip(alloc)
        .zip(shares)
        .map(|((&(id, _), a), s)| (id, a, s))
        .collect()
}

/// Day-0 initialization: assign cumulative infections (split into active and
/// recovered via the SEIR day-0 compartments), then fill the scaled COVID
/// hospital census at hospitals within 60 miles of each agent's county,
/// nearest hospital first.
#[allow(clippy::too_many_arguments)]
pub fn day0_covid_init(
    agents: &mut [Agent],
    facilities: &mut [Facility],
    cases: &CaseSeries,
    forecasts: &ForecastSet,
    distances: &DistanceIndex,
    census_override: Option<&HospitalCensus>,
    params: &Parameters,
    rng: &mut impl Rng,
) -> Result<Day0Outcome> {
    let scale = params.run.scale_factor;
    let c = &params.covid;
    let mut outcome = Day0Outcome::default();

    // Population age distribution feeds the Bayes selection weights.
    let mut group_counts = [0u64; 3];
    for a in agents.iter().filter(|a| a.alive) {
        group_counts[a.age_group.index()] += 1;
    }
    let total = group_counts.iter().sum::<u64>().max(1) as f64;
    let pop_dist = [
        group_counts[0] as f64 / total,
        group_counts[1] as f64 / total,
        group_counts[2] as f64 / total,
    ];
    let weights = infection_age_weights(c.ages_get_covid, pop_dist)?;

    // Eligible pools: susceptible community agents by county and age group.
    let mut pools: Vec<[Vec<AgentId>; 3]> = (0..N_COUNTIES)
        .map(|_| [Vec::new(), Vec::new(), Vec::new()])
        .collect();
    for a in agents.iter() {
        if a.alive && a.in_community() && a.covid == CovidStatus::Susceptible {
            pools[a.county as usize - 1][a.age_group.index()].push(a.id);
        }
    }

    let mut actives: Vec<AgentId> = Vec::new();
    for county in 1..=N_COUNTIES as u8 {
        let reported = cases.cumulative(county);
        let cumulative = ((reported as f64) * c.initial_case_multiplier * scale).round() as u64;
        if cumulative == 0 {
            continue;
        }
        let (day0_active, day0_recovered) = forecasts
            .get(county)
            .map(|f| (f.day0_active, f.day0_recovered))
            .unwrap_or((0.0, 0.0));
        let active_frac = if day0_active + day0_recovered > 0.0 {
            day0_active / (day0_active + day0_recovered)
        } else {
            0.0
        };
        let pool = &mut pools[county as usize - 1];
        let eligible = (pool[0].len() + pool[1].len() + pool[2].len()) as u32;
        let selected =
            select_weighted_without_replacement(pool, weights, cumulative as usize, rng);
        let n_active = ((selected.len() as f64) * active_frac).round() as usize;
        outcome.counties.push(Day0CountyRow {
            county,
            target: cumulative as u32,
            eligible,
            assigned: selected.len() as u32,
        });
        for (i, id) in selected.iter().enumerate() {
            let agent = &mut agents[*id as usize];
            agent.test_status = assign_test_status(c.p_tested, rng);
            if i < n_active {
                actives.push(*id);
            } else {
                agent.covid = CovidStatus::Recovered;
                outcome.recovered_assigned += 1;
            }
        }
        outcome.active_assigned += n_active as u32;
    }

    // Hospital census targets, scaled to the model population and capped by
    // the beds still free after non-COVID seeding.
    let stach_ids: Vec<FacilityId> = facilities
        .iter()
        .filter(|f| f.category.is_stach())
        .map(|f| f.id)
        .collect();
    let (mut alloc_non, mut alloc_icu) = match census_override {
        Some(census) => {
            let mut non = Vec::new();
            let mut icu = Vec::new();
            for &id in &stach_ids {
                let row = census.rows.get(&id).copied().unwrap_or_default();
                let want_non = ((row.covid_non_icu as f64) * scale).round() as u32;
                let want_icu = ((row.covid_icu as f64) * scale).round() as u32;
                let f = &facilities[id as usize];
                non.push((
                    id,
                    want_non.min(f.free_for(BedKind::NonIcu)),
                    want_non as f64,
                ));
                icu.push((id, want_icu.min(f.free_for(BedKind::Icu)), want_icu as f64));
            }
            (non, icu)
        }
        None => {
            let target_total = (c.day0_census_target * scale).round() as u32;
            // Even split between bed kinds, odd bed to non-ICU.
            let target_icu = target_total / 2;
            let target_non = target_total - target_icu;
            let free_non: Vec<(FacilityId, u32)> = stach_ids
                .iter()
                .map(|&id| (id, facilities[id as usize].free_for(BedKind::NonIcu)))
                .collect();
            let free_icu: Vec<(FacilityId, u32)> = stach_ids
                .iter()
                .map(|&id| (id, facilities[id as usize].free_for(BedKind::Icu)))
                .collect();
            (
                allocate_beds(&free_non, target_non),
                allocate_beds(&free_icu, target_icu),
            )
        }
    };
    outcome.target_total = alloc_non.iter().map(|a| a.1).sum::<u32>()
        + alloc_icu.iter().map(|a| a.1).sum::<u32>();
    outcome.allocations = alloc_non
        .iter()
        .zip(&alloc_icu)
        .map(|(&(id, non, share_non), &(_, icu, share_icu))| Day0Allocation {
            facility: id,
            non_icu: non,
            icu,
            share_non_icu: share_non,
            share_icu,
        })
        .collect();

    // Agent-driven fill: nearest hospital within 60 miles with an unfilled
    // COVID bed takes the agent.
    actives.shuffle(rng);
    let mut remaining: u32 = outcome.target_total;
    for &id in &actives {
        let agent_county = agents[id as usize].county;
        let mut admitted = false;
        if remaining > 0 {
            for (fid, _) in distances.within(agent_county, DAY0_RADIUS_MILES) {
                if !facilities[fid as usize].category.is_stach() {
                    continue;
                }
                let non_left = alloc_non.iter().find(|a| a.0 == fid).map_or(0, |a| a.1);
                let icu_left = alloc_icu.iter().find(|a| a.0 == fid).map_or(0, |a| a.1);
                if non_left == 0 && icu_left == 0 {
                    continue;
                }
                // Draw the bed kind proportionally to what the hospital still needs.
                let use_non = if non_left > 0 && icu_left > 0 {
                    rng.gen_range(0..non_left + icu_left) < non_left
                } else {
                    non_left > 0
                };
                let agent = &mut agents[id as usize];
                let (need, status) = if use_non {
                    (BedKind::NonIcu, CovidStatus::Severe)
                } else {
                    let want_vent = rng.gen::<f64>() < c.icu_with_ventilator_p;
                    let kind = if want_vent
                        && facilities[fid as usize].free_for(BedKind::IcuVentilator) > 0
                    {
                        BedKind::IcuVentilator
                    } else {
                        BedKind::Icu
                    };
                    (kind, CovidStatus::Critical)
                };
                match facilities[fid as usize].assign_bed(id, need)? {
                    AssignOutcome::Assigned => {
                        agent.covid = status;
                        agent.location = fid;
                        agent.icu_flag = need.is_icu();
                        agent.ventilator_flag = need == BedKind::IcuVentilator;
                        agent.covid_admission = true;
                        let los = sample_covid_los(c, rng);
                        agent.leave_day = Some(los.max(1));
                        let slot = if use_non {
                            alloc_non.iter_mut().find(|a| a.0 == fid)
                        } else {
                            alloc_icu.iter_mut().find(|a| a.0 == fid)
                        };
                        slot.expect("allocation exists").1 -= 1;
                        remaining -= 1;
                        outcome.admissions.push(Day0Admission {
                            agent: id,
                            facility: fid,
                            bed: need,
                        });
                        admitted = true;
                    }
                    AssignOutcome::Full => continue,
                }
                break;
            }
        }
        if !admitted {
            let agent = &mut agents[id as usize];
            agent.covid = CovidStatus::MildAsymptomatic;
            agent.covid_recovery_day = Some(c.infection_duration);
        }
    }
    outcome.shortfall = remaining;
    if remaining > 0 {
        log::warn!("day-0 COVID census shortfall: {remaining} beds unfilled");
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn age_weights_uniform_population() {
        let w = infection_age_weights([0.396, 0.328, 0.276], [1.0 / 3.0; 3]).unwrap();
        assert!((w[0] - 0.396).abs() < 1e-12);
        assert!((w[1] - 0.328).abs() < 1e-12);
        assert!((w[2] - 0.276).abs() < 1e-12);
    }

    #[test]
    fn age_weights_matching_distributions_are_uniform() {
        let d = [0.5, 0.3, 0.2];
        let w = infection_age_weights(d, d).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn age_weights_hand_normalization() {
        // [0.396/0.5, 0.328/0.3, 0.276/0.2] normalized
        let w = infection_age_weights([0.396, 0.328, 0.276], [0.5, 0.3, 0.2]).unwrap();
        let raw = [0.792, 1.0933333333333333, 1.38];
        let sum: f64 = raw.iter().sum();
        for g in 0..3 {
            assert!((w[g] - raw[g] / sum).abs() < 1e-12, "w[{g}] = {}", w[g]);
        }
        assert!((w[0] - 0.2426).abs() < 1e-4);
        assert!((w[1] - 0.3349).abs() < 1e-4);
        assert!((w[2] - 0.4226).abs() < 1e-4);
    }

    #[test]
    fn age_weights_zero_pop_nonzero_cases_rejected() {
        assert!(infection_age_weights([0.5, 0.5, 0.0], [0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn hosp_table_degenerate_point_mass() {
        let t = compute_hosp_prob_table(
            [0.0, 0.0, 1.0],
            [1.0, 0.0],
            0.085,
            0.012,
            [[0.0, 0.0, 1.0], [0.0, 0.5, 0.5]],
        )
        .unwrap();
        assert!((t.cell(true, false, 2) - 0.085).abs() < 1e-15);
    }

    #[test]
    fn hosp_table_tested_untested_ratio() {
        let t = compute_hosp_prob_table(
            [0.2, 0.3, 0.5],
            [0.6, 0.4],
            0.085,
            0.012,
            [[0.3, 0.2, 0.1], [0.0, 0.2, 0.2]],
        )
        .unwrap();
        let ratio = 0.012 / 0.085;
        for cc in 0..2 {
            for g in 0..3 {
                if cc == 1 && g == 0 {
                    assert_eq!(t.cells[0][cc][g], 0.0);
                    assert_eq!(t.cells[1][cc][g], 0.0);
                    continue;
                }
                let tested = t.cells[1][cc][g];
                let untested = t.cells[0][cc][g];
                assert!(
                    (untested - tested * ratio).abs() < 1e-12,
                    "cc {cc} g {g}: {untested} vs {}",
                    tested * ratio
                );
            }
        }
    }

    #[test]
    fn hosp_table_under50_comorbid_is_zero() {
        let t = compute_hosp_prob_table(
            [0.9, 0.05, 0.05],
            [0.1, 0.9],
            0.085,
            0.012,
            [[0.3, 0.2, 0.1], [0.1, 0.2, 0.1]],
        )
        .unwrap();
        assert_eq!(t.cell(true, true, 0), 0.0);
        assert_eq!(t.cell(false, true, 0), 0.0);
    }

    #[test]
    fn test_status_rates() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(assign_test_status(0.0, &mut rng), TestStatus::Untested);
        assert_eq!(assign_test_status(1.0, &mut rng), TestStatus::Tested);
        let n = 100_000;
        let tested = (0..n)
            .filter(|_| assign_test_status(0.1, &mut rng) == TestStatus::Tested)
            .count() as f64;
        let share = tested / n as f64;
        assert!((share - 0.10).abs() < 0.005, "share = {share}");
    }

    #[test]
    fn severity_probabilities() {
        let c = CovidParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        // untested, no comorbidity, under 50: hospital-bound p = 0.0052
        let n = 200_000;
        let bound = (0..n)
            .filter(|_| assign_severity(&c, false, false, 0, &mut rng).hospital_bound)
            .count() as f64;
        let share = bound / n as f64;
        assert!((share - 0.0052).abs() < 0.001, "share = {share}");
        // tested, comorbid, under 50 is never hospital-bound
        for _ in 0..10_000 {
            let d = assign_severity(&c, true, true, 0, &mut rng);
            assert!(!d.hospital_bound);
            assert_eq!(d.status, CovidStatus::MildAsymptomatic);
        }
    }

    #[test]
    fn severity_split_among_hospitalized() {
        // force hospitalization to measure the critical and ventilator splits
        let mut c = CovidParams::default();
        c.hosp_tested_not_concurrent = [1.0, 1.0, 1.0];
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 100_000;
        let mut critical = 0u32;
        let mut vent = 0u32;
        for _ in 0..n {
            let d = assign_severity(&c, true, false, 1, &mut rng);
            assert!(d.hospital_bound);
            match d.status {
                CovidStatus::Critical => {
                    critical += 1;
                    if d.need == Some(BedKind::IcuVentilator) {
                        vent += 1;
                    }
                }
                CovidStatus::Severe => assert_eq!(d.need, Some(BedKind::NonIcu)),
                other => panic!("unexpected status {other:?}"),
            }
        }
        let critical_share = critical as f64 / n as f64;
        let vent_share = vent as f64 / critical as f64;
        assert!((critical_share - 0.25).abs() < 0.01, "critical = {critical_share}");
        assert!((vent_share - 0.75).abs() < 0.01, "vent = {vent_share}");
    }

    #[test]
    fn covid_los_support_and_degenerate() {
        let c = CovidParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let v = sample_covid_los(&c, &mut rng);
            assert!(v <= 50);
        }
        let mut tight = CovidParams::default();
        tight.los_std = 1e-9;
        for _ in 0..100 {
            assert_eq!(sample_covid_los(&tight, &mut rng), 3);
        }
    }

    #[test]
    fn nh_step_down_rates() {
        let c = CovidParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100_000;
        let icu = (0..n).filter(|_| nh_step_down(&c, true, &mut rng)).count() as f64;
        let non = (0..n).filter(|_| nh_step_down(&c, false, &mut rng)).count() as f64;
        assert!((icu / n as f64 - 0.20).abs() < 0.01);
        assert!((non / n as f64 - 0.10).abs() < 0.01);
    }

    #[test]
    fn selection_target_zero_is_empty() {
        let mut pools = [vec![1, 2], vec![3], vec![4]];
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let s = select_weighted_without_replacement(&mut pools, [0.4, 0.3, 0.3], 0, &mut rng);
        assert!(s.is_empty());
    }

    #[test]
    fn selection_caps_at_eligible() {
        let mut pools = [vec![1, 2], vec![3], vec![4, 5]];
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let s = select_weighted_without_replacement(&mut pools, [0.4, 0.3, 0.3], 9, &mut rng);
        assert_eq!(s.len(), 5);
        let mut sorted = s.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn selection_age_shares_follow_weights() {
        // equal-size pools, weights [0.396, 0.328, 0.276]
        let n_per_group = 1_000_000u32;
        let mut pools = [
            (0..n_per_group).collect::<Vec<u32>>(),
            (n_per_group..2 * n_per_group).collect(),
            (2 * n_per_group..3 * n_per_group).collect(),
        ];
        let weights = [0.396, 0.328, 0.276];
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let s = select_weighted_without_replacement(&mut pools, weights, 100_000, &mut rng);
        let mut counts = [0u32; 3];
        for id in s {
            counts[(id / n_per_group) as usize] += 1;
        }
        for g in 0..3 {
            let share = counts[g] as f64 / 100_000.0;
            assert!(
                (share - weights[g]).abs() < 0.01,
                "group {g} share {share} vs {}",
                weights[g]
            );
        }
    }

    #[test]
    fn bed_allocation_proportional_with_caps() {
        let free = vec![(1, 10u32), (2, 30), (3, 60)];
        let alloc = allocate_beds(&free, 50);
        let total: u32 = alloc.iter().map(|a| a.1).sum();
        assert_eq!(total, 50);
        for (i, &(_, a, share)) in alloc.iter().enumerate() {
            assert!(a <= free[i].1);
            assert!((a as f64 - share).abs() <= 1.0, "allocation within 1 of share");
        }
        // capacity cap: target exceeding free beds fills everything
        let alloc = allocate_beds(&free, 1000);
        let total: u32 = alloc.iter().map(|a| a.1).sum();
        assert_eq!(total, 100);
    }
}
