//! Deterministic daily scheduler: initialization, the life and location
//! substeps, agent recreation, and full runs.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::covid::{self, Day0Outcome};
use crate::error::{Error, Result};
use crate::ingest::{Bundle, SourceKey, TYPE_ORDER};
use crate::metrics::{
    fnv1a, InfectAuditRow, Manifest, Recorder, ReleaseReason, RunResult, Substep, WorldSnapshot,
};
use crate::movement::{
    departure_draw, icu_probability, schedule_readmission, AdmissionResult, LosModel,
    RouteContext, Router, TransferDestination, TransferResult, TurnAwayRecord,
};
use crate::params::Parameters;
use crate::rng::RngStreams;
use crate::seir::{self, ForecastSet};
use crate::world::{
    Agent, AgentId, AssignOutcome, BedKind, County, CovidStatus, Day, Facility, FacilityCategory,
    FacilityId, COMMUNITY, N_COUNTIES,
};

/// Starting occupancancy fractions.
const NH_LTACH_INIT_OCCUPANCY: f64 = 0.70;
const STACH_NON_ICU_INIT_OCCUPANCY: f64 = 0.65;
const STACH_ICU_INIT_OCCUPANCY: f64 = 0.54;

/// Age weighting of non-COVID hospital seeds (under 50 / 50-64 / 65+).
const SEED_AGE_WEIGHTS: [f64; 3] = [0.40, 0.20, 0.40];

/// Cohort size for the remaining-stay mini-simulation.
const REMAINING_LOS_COHORT: usize = 1000;

/// Recreate deceased agents every this many days.
const RECREATE_INTERVAL: Day = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forecast,
    Pattern,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Forecast => "forecast",
            Mode::Pattern => "pattern",
        }
    }
}

/// How the input effective reproduction number is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReSpec {
    Fixed(f64),
    /// Sample uniformly within one of the configured bands (0 = low).
    Band(usize),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub horizon: Day,
    pub seed: u64,
    pub no_covid: bool,
    pub re: ReSpec,
    pub external_forecast: Option<PathBuf>,
    pub collect_events: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            mode: Mode::Forecast,
            horizon: 30,
            seed: 0,
            no_covid: false,
            re: ReSpec::Fixed(1.2),
            external_forecast: None,
            collect_events: true,
        }
    }
}

impl RunConfig {
    pub fn covid_enabled(&self) -> bool {
        self.mode == Mode::Forecast && !self.no_covid
    }
}

/// Borrow a `Router` from the simulation's table fields only, leaving
/// facilities, streams, and the recorder free for mutation.
macro_rules! router {
    ($sim:expr) => {
        Router {
            locations: &$sim.bundle.location,
            discharges: &$sim.bundle.discharges,
            distances: &$sim.bundle.distances,
            params: &$sim.params,
        }
    };
}

/// Scale a full-scale bed count down to the model population; facilities keep
/// at least one bed of any kind they had.
pub fn scale_beds(count: u32, scale: f64) -> u32 {
    if count == 0 {
        0
    } else {
        (((count as f64) * scale).round() as u32).max(1)
    }
}

/// Remaining-stay pool via the admission-cohort mini-simulation: draw a
/// cohort of full stays, advance day by day (decrementing and replacing
/// completed stays), for the 95th percentile of the initial sample plus a
/// per-slot phase offset that brings the cohort to its renewal equilibrium.
/// Returns (pool, base simulation length).
pub fn remaining_los_pool(
    draw: &mut dyn FnMut(&mut ChaCha12Rng) -> u32,
    cohort: usize,
    rng: &mut ChaCha12Rng,
) -> (Vec<u32>, u32) {
    let initial: Vec<u32> = (0..cohort).map(|_| draw(rng).max(1)).collect();
    let mut sorted = initial.clone();
    sorted.sort_unstable();
    let idx = ((0.95 * cohort as f64).ceil() as usize).clamp(1, cohort) - 1;
    let base_days = sorted[idx].max(1);
    let mut pool = Vec::with_capacity(cohort);
    for &v0 in &initial {
        let days = base_days + rng.gen_range(0..base_days);
        let mut v = v0;
        for _ in 0..days {
            v -= 1;
            if v == 0 {
                v = draw(rng).max(1);
            }
        }
        pool.push(v);
    }
    (pool, base_days)
}

/// Per-county, per-age-group pools of agents available for facility seeding.
struct SeedPools {
    by_county: Vec<[Vec<AgentId>; 3]>,
}

impl SeedPools {
    fn build(agents: &[Agent]) -> SeedPools {
        let mut by_county: Vec<[Vec<AgentId>; 3]> = (0..N_COUNTIES)
            .map(|_| [Vec::new(), Vec::new(), Vec::new()])
            .collect();
        for a in agents {
            if a.alive && a.in_community() {
                by_county[a.county as usize - 1][a.age_group.index()].push(a.id);
            }
        }
        SeedPools { by_county }
    }

    fn available(&self, county: County, group: Option<usize>) -> usize {
        let pools = &self.by_county[county as usize - 1];
        match group {
            Some(g) => pools[g].len(),
            None => pools.iter().map(|p| p.len()).sum(),
        }
    }

    fn pop(&mut self, county: County, group: usize, rng: &mut ChaCha12Rng) -> Option<AgentId> {
        let pool = &mut self.by_county[county as usize - 1][group];
        if pool.is_empty() {
            return None;
        }
        let idx = rng.gen_range(0..pool.len());
        Some(pool.swap_remove(idx))
    }

    /// Pop a random member of any age group, proportionally to pool sizes.
    fn pop_any(&mut self, county: County, rng: &mut ChaCha12Rng) -> Option<AgentId> {
        let sizes = {
            let pools = &self.by_county[county as usize - 1];
            [pools[0].len() as f64, pools[1].len() as f64, pools[2].len() as f64]
        };
        let g = crate::movement::weighted_pick(&sizes, rng)?;
        self.pop(county, g, rng)
    }
}

pub struct Simulation {
    pub params: Parameters,
    pub config: RunConfig,
    config_hash: String,
    bundle: Bundle,
    agents: Vec<Agent>,
    facilities: Vec<Facility>,
    streams: RngStreams,
    los_model: LosModel,
    day: Day,
    /// Integer new-infection targets per county (index county-1) and day.
    targets: Vec<Vec<u32>>,
    forecast: Option<ForecastSet>,
    day0: Option<Day0Outcome>,
    dead_awaiting: Vec<AgentId>,
    initial_population: u64,
    county_agents: Vec<Vec<AgentId>>,
    infection_weights: [f64; 3],
    recorder: Recorder,
    input_re: f64,
}

impl Simulation {
    pub fn new(bundle: Bundle, params: Parameters, config: RunConfig) -> Result<Simulation> {
        params.validate()?;
        let mut streams = RngStreams::new(config.seed);
        let scale = params.run.scale_factor;

        // Agents from the synthetic population; comorbidity by age-group
        // prevalence, never for under-50s.
        let mut agents: Vec<Agent> = Vec::with_capacity(bundle.population.rows.len());
        for (i, row) in bundle.population.rows.iter().enumerate() {
            let group = crate::world::bin_age(row.age as i64).expect("non-negative");
            let comorbidity = group != crate::world::AgeGroup::Under50
                && streams.init.gen::<f64>() < params.life.comorbidity_prevalence[group.index()];
            agents.push(Agent::new(i as AgentId, row.age, row.county, comorbidity));
        }
        let initial_population = agents.len() as u64;

        // Facilities with bed counts scaled to the model population.
        let facilities: Vec<Facility> = bundle
            .facilities
            .iter()
            .map(|f| {
                let beds = crate::world::BedCounts {
                    non_icu: scale_beds(f.beds.non_icu, scale),
                    icu: scale_beds(f.beds.icu, scale),
                    ventilator: scale_beds(f.beds.ventilator, scale)
                        .min(scale_beds(f.beds.icu, scale)),
                };
                Facility::new(f.id, f.name.clone(), f.category, f.county, beds)
            })
            .collect();

        let los_model = LosModel::build(&facilities, &params, bundle.nh_los.admission.clone())?;

        let mut county_agents: Vec<Vec<AgentId>> = vec![Vec::new(); N_COUNTIES];
        for a in &agents {
            county_agents[a.county as usize - 1].push(a.id);
        }

        let mut group_counts = [0u64; 3];
        for a in &agents {
            group_counts[a.age_group.index()] += 1;
        }
        let total = agents.len().max(1) as f64;
        let pop_dist = [
            group_counts[0] as f64 / total,
            group_counts[1] as f64 / total,
            group_counts[2] as f64 / total,
        ];
        let infection_weights = covid::infection_age_weights(params.covid.ages_get_covid, pop_dist)?;

        let config_hash = {
            let params_text =
                toml::to_string(&params).map_err(|e| Error::Toml(e.to_string()))?;
            let mut desc = params_text.into_bytes();
            desc.extend_from_slice(config.mode.label().as_bytes());
            desc.extend_from_slice(&config.horizon.to_le_bytes());
            desc.extend_from_slice(&[config.no_covid as u8]);
            if let ReSpec::Fixed(re) = config.re {
                desc.extend_from_slice(&re.to_le_bytes());
            }
            format!("{:016x}", fnv1a(&desc))
        };

        let mut sim = Simulation {
            recorder: Recorder::new(config.collect_events),
            input_re: 0.0,
            params,
            config,
            config_hash,
            bundle,
            agents,
            facilities,
            streams,
            los_model,
            day: 0,
            targets: vec![Vec::new(); N_COUNTIES],
            forecast: None,
            day0: None,
            dead_awaiting: Vec::new(),
            initial_population,
            county_agents,
            infection_weights,
        };
        sim.recorder.begin_day(0);
        sim.seed_facilities()?;
        if sim.config.covid_enabled() {
            sim.prepare_forecast()?;
            sim.day0_covid()?;
        }
        sim.record_current_day();
        Ok(sim)
    }

    fn seed_facilities(&mut self) -> Result<()> {
        let mut pools = SeedPools::build(&self.agents);

        // NH and LTACH first: fill to 70% by inverse-distance county pull.
        let nh_ltach: Vec<FacilityId> = self
            .facilities
            .iter()
            .filter(|f| {
                matches!(f.category, FacilityCategory::Nh | FacilityCategory::Ltach)
            })
            .map(|f| f.id)
            .collect();
        for fid in nh_ltach {
            let category = self.facilities[fid as usize].category;
            let target =
                ((self.facilities[fid as usize].beds.non_icu as f64) * NH_LTACH_INIT_OCCUPANCY)
                    .round() as u32;
            let group_filter = (category == FacilityCategory::Nh).then_some(2usize);
            for _ in 0..target {
                let weights: Vec<f64> = (1..=N_COUNTIES as u8)
                    .map(|county| {
                        if pools.available(county, group_filter) == 0 {
                            return 0.0;
                        }
                        let d = self
                            .bundle
                            .distances
                            .distance(county, fid)
                            .unwrap_or(1e9);
                        1.0 / (1.0 + d)
                    })
                    .collect();
                let Some(idx) = crate::movement::weighted_pick(&weights, &mut self.streams.init)
                else {
                    return Err(Error::Initialization(format!(
                        "not enough eligible agents to seed facility {fid} ({})",
                        self.facilities[fid as usize].name
                    )));
                };
                let county = (idx + 1) as County;
                let agent_id = match group_filter {
                    Some(g) => pools.pop(county, g, &mut self.streams.init),
                    None => pools.pop_any(county, &mut self.streams.init),
                }
                .expect("county had availability");
                self.place_seed(agent_id, fid, BedKind::NonIcu)?;
            }
        }

        // STACHs: 65% non-ICU / 54% ICU (or census overrides), agents drawn
        // from the discharge-table counties with equal county weight and the
        // published 40/20/40 age weighting.
        let stachs: Vec<FacilityId> = self
            .facilities
            .iter()
            .filter(|f| f.category.is_stach())
            .map(|f| f.id)
            .collect();
        let scale = self.params.run.scale_factor;
        for fid in stachs {
            let beds = self.facilities[fid as usize].beds;
            let (target_non, target_icu) = match self
                .bundle
                .census_override
                .as_ref()
                .and_then(|c| c.rows.get(&fid))
            {
                Some(row) => {
                    let non = row.occupied_non_icu.saturating_sub(row.covid_non_icu);
                    let icu = row.occupied_icu.saturating_sub(row.covid_icu);
                    (
                        (((non as f64) * scale).round() as u32).min(beds.non_icu),
                        (((icu as f64) * scale).round() as u32).min(beds.icu),
                    )
                }
                None => (
                    ((beds.non_icu as f64) * STACH_NON_ICU_INIT_OCCUPANCY).round() as u32,
                    ((beds.icu as f64) * STACH_ICU_INIT_OCCUPANCY).round() as u32,
                ),
            };
            let mut counties = self.bundle.discharges.counties_of(fid);
            if counties.is_empty() {
                counties = (1..=N_COUNTIES as u8).collect();
            }
            for (kind, target) in [(BedKind::NonIcu, target_non), (BedKind::Icu, target_icu)] {
                for _ in 0..target {
                    let group_weights: [f64; 3] = std::array::from_fn(|g| {
                        let any = counties.iter().any(|&c| pools.available(c, Some(g)) > 0);
                        if any {
                            SEED_AGE_WEIGHTS[g]
                        } else {
                            0.0
                        }
                    });
                    let Some(g) =
                        crate::movement::weighted_pick(&group_weights, &mut self.streams.init)
                    else {
                        return Err(Error::Initialization(format!(
                            "not enough eligible agents to seed facility {fid} ({})",
                            self.facilities[fid as usize].name
                        )));
                    };
                    let candidates: Vec<County> = counties
                        .iter()
                        .copied()
                        .filter(|&c| pools.available(c, Some(g)) > 0)
                        .collect();
                    let county = candidates[self.streams.init.gen_range(0..candidates.len())];
                    let agent_id = pools
                        .pop(county, g, &mut self.streams.init)
                        .expect("county had availability");
                    self.place_seed(agent_id, fid, kind)?;
                }
            }
        }

        // Seeded occupants carry a remaining stay, not a fresh LOS.
        self.assign_remaining_stays()?;
        Ok(())
    }

    fn place_seed(&mut self, agent_id: AgentId, fid: FacilityId, kind: BedKind) -> Result<()> {
        match self.facilities[fid as usize].assign_bed(agent_id, kind)? {
            AssignOutcome::Assigned => {
                let a = &mut self.agents[agent_id as usize];
                a.location = fid;
                a.icu_flag = kind.is_icu();
                a.ventilator_flag = kind == BedKind::IcuVentilator;
                Ok(())
            }
            AssignOutcome::Full => Err(Error::Initialization(format!(
                "facility {fid} filled beyond capacity during seeding"
            ))),
        }
    }

    fn assign_remaining_stays(&mut self) -> Result<()> {
        let facility_ids: Vec<FacilityId> =
            self.facilities.iter().map(|f| f.id).collect();
        let mut remaining: Vec<Option<Vec<u32>>> = vec![None; self.facilities.len()];
        for fid in facility_ids {
            let category = self.facilities[fid as usize].category;
            match category {
                FacilityCategory::Community => {}
                FacilityCategory::Nh => {
                    remaining[fid as usize] = Some(
                        self.bundle
                            .nh_los
                            .remaining
                            .iter()
                            .map(|&v| v.max(1))
                            .collect(),
                    );
                }
                _ => {
                    let los_model = &self.los_model;
                    let mut draw = |rng: &mut ChaCha12Rng| {
                        (los_model.sample_gamma_raw(fid, rng).ceil() as u32).max(1)
                    };
                    let (pool, _) =
                        remaining_los_pool(&mut draw, REMAINING_LOS_COHORT, &mut self.streams.init);
                    remaining[fid as usize] = Some(pool);
                }
            }
        }
        for i in 0..self.agents.len() {
            let loc = self.agents[i].location;
            if loc == COMMUNITY {
                continue;
            }
            let pool = remaining[loc as usize]
                .as_ref()
                .ok_or_else(|| Error::Initialization(format!("no remaining pool for {loc}")))?;
            let days = pool[self.streams.init.gen_range(0..pool.len())];
            self.agents[i].leave_day = Some(days);
        }
        Ok(())
    }

    fn prepare_forecast(&mut self) -> Result<()> {
        let scale = self.params.run.scale_factor;
        self.input_re = match self.config.re {
            ReSpec::Fixed(re) => re,
            ReSpec::Band(idx) => {
                let bands = self.params.seir.re_bands;
                let band = bands.get(idx).copied().ok_or_else(|| {
                    Error::Config(format!("R_e band index {idx} out of range"))
                })?;
                self.streams.init.gen_range(band[0]..=band[1])
            }
        };
        let populations = self.bundle.real_county_populations(scale);
        let internal = seir::build_forecast_from_cases(
            &self.bundle.cases,
            &populations,
            self.input_re,
            self.config.horizon.max(30) as usize,
            &self.params.seir,
        )?;
        let target_source = match &self.config.external_forecast {
            Some(path) => seir::read_forecast_csv(path)?,
            None => internal.clone(),
        };
        for (county, series) in target_source.integer_targets(scale) {
            self.targets[county as usize - 1] = series;
        }
        self.forecast = Some(internal);
        Ok(())
    }

    fn day0_covid(&mut self) -> Result<()> {
        let forecast = self.forecast.as_ref().expect("forecast prepared");
        let outcome = covid::day0_covid_init(
            &mut self.agents,
            &mut self.facilities,
            &self.bundle.cases,
            forecast,
            &self.bundle.distances,
            self.bundle.census_override.as_ref(),
            &self.params,
            &mut self.streams.init,
        )?;
        // Day-0 assignments enter the infection metrics; admissions are part
        // of the day-0 baseline census rather than the day's flow counters.
        let mut day0_target_total = 0u64;
        for row in &outcome.counties {
            day0_target_total += row.target as u64;
            self.recorder.infect_audit(InfectAuditRow {
                day: 0,
                county: row.county,
                target: row.target,
                eligible: row.eligible,
                infected: row.assigned,
            });
        }
        self.recorder.set_day_target(day0_target_total);
        for i in 0..self.agents.len() {
            if self.agents[i].test_status != crate::world::TestStatus::NotApplicable {
                let tested = self.agents[i].test_status == crate::world::TestStatus::Tested;
                self.recorder.infect(Substep::Init, i as AgentId, tested);
            }
        }
        for adm in &outcome.admissions {
            let tested =
                self.agents[adm.agent as usize].test_status == crate::world::TestStatus::Tested;
            self.recorder.covid_hospitalized(tested);
        }
        self.day0 = Some(outcome);
        Ok(())
    }

    /// Advance one day: life substep, location substep, periodic agent
    /// recreation, then metrics.
    pub fn step_day(&mut self) -> Result<()> {
        self.day += 1;
        self.recorder.begin_day(self.day);
        self.life_substep();
        self.location_substep()?;
        if self.day % RECREATE_INTERVAL == 0 {
            self.recreate_agents();
        }
        self.record_current_day();
        Ok(())
    }

    pub fn run(mut self) -> Result<RunResult> {
        for _ in 0..self.config.horizon {
            self.step_day()?;
        }
        Ok(self.into_result())
    }

    pub fn into_result(self) -> RunResult {
        let manifest = Manifest {
            seed: self.config.seed,
            config_hash: self.config_hash.clone(),
            mode: self.config.mode.label().into(),
            horizon: self.config.horizon,
            scale: self.params.run.scale_factor,
        };
        self.recorder.finish(manifest)
    }

    fn life_substep(&mut self) {
        let mut order: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| a.alive)
            .map(|a| a.id)
            .collect();
        order.shuffle(&mut self.streams.death);
        for id in order {
            let (group_idx, location) = {
                let a = &self.agents[id as usize];
                (a.age_group.index(), a.location)
            };
            let category = self.facilities[location as usize].category;
            let p = self.params.life.death_probability[group_idx]
                * self.params.life.multiplier(category);
            if p <= 0.0 || self.streams.death.gen::<f64>() >= p {
                continue;
            }
            // Death frees the bed the same day.
            self.recorder.death(Substep::Life, id, location, category);
            if location != COMMUNITY {
                let kind = self.facilities[location as usize]
                    .release_bed(id)
                    .expect("occupant bookkeeping");
                let covid = self.agents[id as usize].covid.is_active();
                self.recorder
                    .release(Substep::Life, id, location, category, kind, covid, ReleaseReason::Death);
            }
            let a = &mut self.agents[id as usize];
            a.alive = false;
            a.location = COMMUNITY;
            a.icu_flag = false;
            a.ventilator_flag = false;
            a.leave_day = None;
            a.readmission = None;
            a.unmet_covid_need = None;
            self.dead_awaiting.push(id);
        }
    }

    fn location_substep(&mut self) -> Result<()> {
        self.covid_recovery_stage()?;
        self.los_end_stage()?;
        if self.config.covid_enabled() {
            self.covid_update_stage()?;
        }
        self.community_departure_stage()?;
        self.readmission_stage()?;
        Ok(())
    }

    /// Stage 1: COVID recoveries run first so freed beds are available to the
    /// rest of the day.
    fn covid_recovery_stage(&mut self) -> Result<()> {
        let day = self.day;
        let mut due: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| {
                a.alive
                    && a.covid.is_active()
                    && if a.covid_admission {
                        a.leave_day.is_some_and(|d| d <= day)
                    } else {
                        a.covid_recovery_day.is_some_and(|d| d <= day)
                    }
            })
            .map(|a| a.id)
            .collect();
        due.shuffle(&mut self.streams.covid);
        for id in due {
            let (location, was_admitted) = {
                let a = &self.agents[id as usize];
                (a.location, a.covid_admission)
            };
            self.recorder.recover(id);
            if was_admitted && location != COMMUNITY {
                let category = self.facilities[location as usize].category;
                let kind = self.facilities[location as usize].release_bed(id)?;
                self.recorder.release(
                    Substep::CovidRecovery,
                    id,
                    location,
                    category,
                    kind,
                    true,
                    ReleaseReason::Recovery,
                );
                {
                    let a = &mut self.agents[id as usize];
                    a.covid = CovidStatus::Recovered;
                    a.previous_location = Some(location);
                    a.location = COMMUNITY;
                    a.covid_admission = false;
                    a.icu_flag = false;
                    a.ventilator_flag = false;
                    a.leave_day = None;
                    a.covid_recovery_day = None;
                    a.unmet_covid_need = None;
                }
                // Step down to a nursing home for the rest of the run.
                if covid::nh_step_down(&self.params.covid, kind.is_icu(), &mut self.streams.covid)
                {
                    let agent_copy = self.agents[id as usize].clone();
                    let router = router!(self);
                    let nh = router.choose_specific_facility(
                        &self.facilities,
                        &agent_copy,
                        FacilityCategory::Nh,
                        RouteContext::NewAdmission,
                        &mut self.streams.covid,
                    )?;
                    if self.facilities[nh as usize].assign_bed(id, BedKind::NonIcu)?
                        == AssignOutcome::Assigned
                    {
                        let a = &mut self.agents[id as usize];
                        a.location = nh;
                        a.leave_day = Some(self.config.horizon + 1);
                        self.recorder.step_down(id, nh);
                        self.recorder.admit(
                            Substep::CovidRecovery,
                            id,
                            nh,
                            FacilityCategory::Nh,
                            BedKind::NonIcu,
                            false,
                        );
                    }
                }
            } else {
                let a = &mut self.agents[id as usize];
                a.covid = CovidStatus::Recovered;
                a.covid_recovery_day = None;
                a.unmet_covid_need = None;
            }
        }
        Ok(())
    }

    /// Stage 2: location updates for agents whose LOS ends today.
    fn los_end_stage(&mut self) -> Result<()> {
        let day = self.day;
        let mut due: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| {
                a.alive
                    && a.location != COMMUNITY
                    && !(a.covid.is_active() && a.covid_admission)
                    && a.leave_day.is_some_and(|d| d <= day)
            })
            .map(|a| a.id)
            .collect();
        due.shuffle(&mut self.streams.routing);
        for id in due {
            let (source, prior_location, covid_active) = {
                let a = &self.agents[id as usize];
                (a.location, a.previous_location, a.covid.is_active())
            };
            let source_cat = self.facilities[source as usize].category;
            let source_key = match source_cat {
                FacilityCategory::Ltach => SourceKey::Ltach,
                FacilityCategory::Nh => SourceKey::Nh,
                _ => SourceKey::Stach(source),
            };
            let kind = self.facilities[source as usize].release_bed(id)?;
            self.recorder.release(
                Substep::LosMove,
                id,
                source,
                source_cat,
                kind,
                covid_active,
                ReleaseReason::LosEnd,
            );
            {
                let a = &mut self.agents[id as usize];
                a.previous_location = Some(source);
                a.location = COMMUNITY;
                a.icu_flag = false;
                a.ventilator_flag = false;
                a.leave_day = None;
            }

            // Former NH residents usually return to the same NH after a
            // hospital stay.
            if source_cat.is_stach() {
                if let Some(prev) = prior_location {
                    if self.facilities[prev as usize].category == FacilityCategory::Nh {
                        let router = router!(self);
                        if let Some(nh) = router.resolve_nh_return(prev, &mut self.streams.routing)
                        {
                            self.recorder.transfer(source_cat);
                            let los = self
                                .los_model
                                .sample(&self.facilities[nh as usize], &mut self.streams.routing);
                            self.transfer_to(id, source_cat, nh, BedKind::NonIcu, los, covid_active)?;
                            continue;
                        }
                    }
                }
            }

            let agent_copy = self.agents[id as usize].clone();
            let router = router!(self);
            let destination = router.choose_transfer_type(
                &agent_copy,
                source_key,
                source_cat,
                &mut self.streams.routing,
            )?;
            match destination {
                TransferDestination::Community => {
                    if source_cat.is_stach() {
                        let pending = schedule_readmission(
                            &self.params,
                            day,
                            source,
                            &mut self.streams.routing,
                        );
                        self.agents[id as usize].readmission = pending;
                    }
                }
                TransferDestination::Facility(dest_cat) => {
                    self.recorder.transfer(source_cat);
                    let dest = router.choose_specific_facility(
                        &self.facilities,
                        &agent_copy,
                        dest_cat,
                        RouteContext::Transfer { from: source },
                        &mut self.streams.routing,
                    )?;
                    let los = self
                        .los_model
                        .sample(&self.facilities[dest as usize], &mut self.streams.routing);
                    let need = if dest_cat.is_stach() {
                        let p = icu_probability(&self.params, &agent_copy, los);
                        if self.streams.routing.gen::<f64>() < p {
                            BedKind::Icu
                        } else {
                            BedKind::NonIcu
                        }
                    } else {
                        BedKind::NonIcu
                    };
                    if dest_cat.is_stach() {
                        self.recorder.seek(Substep::LosMove, id, covid_active, need);
                    }
                    self.transfer_to(id, source_cat, dest, need, los, covid_active)?;
                }
            }
        }
        Ok(())
    }

    /// Single-attempt move into `dest`; a full facility returns the agent to
    /// the community.
    fn transfer_to(
        &mut self,
        id: AgentId,
        _source_cat: FacilityCategory,
        dest: FacilityId,
        need: BedKind,
        los: u32,
        covid_active: bool,
    ) -> Result<()> {
        let agent_copy = self.agents[id as usize].clone();
        let router = router!(self);
        let mut records: Vec<TurnAwayRecord> = Vec::new();
        let dest_cat = self.facilities[dest as usize].category;
        let outcome = if dest_cat.is_stach() {
            router.attempt_transfer(
                &mut self.facilities,
                &agent_copy,
                need,
                dest,
                self.day,
                covid_active,
                &mut records,
            )?
        } else {
            // NH/LTACH rejections are not hospital turn-aways.
            match self.facilities[dest as usize].assign_bed(id, need)? {
                AssignOutcome::Assigned => TransferResult::Admitted,
                AssignOutcome::Full => TransferResult::ReturnedToCommunity,
            }
        };
        for r in records {
            self.recorder.turn_away(r);
        }
        if outcome == TransferResult::Admitted {
            let a = &mut self.agents[id as usize];
            a.location = dest;
            a.icu_flag = need.is_icu();
            a.ventilator_flag = need == BedKind::IcuVentilator;
            a.leave_day = Some(self.day + los);
            if dest_cat.is_stach() {
                a.readmission = None;
            }
            a.unmet_covid_need = None;
            self.recorder
                .admit(Substep::LosMove, id, dest, dest_cat, need, covid_active);
        }
        Ok(())
    }

    /// Stage 3: seed today's infections from the SEIR targets, then test,
    /// assign severity, and hospitalize.
    fn covid_update_stage(&mut self) -> Result<()> {
        let day = self.day;
        let day_idx = (day - 1) as usize;
        let mut day_target_total = 0u64;
        for county in 1..=N_COUNTIES as u8 {
            let target = self.targets[county as usize - 1]
                .get(day_idx)
                .copied()
                .unwrap_or(0);
            day_target_total += target as u64;
            if target == 0 {
                continue;
            }
            let mut pools: [Vec<AgentId>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for &id in &self.county_agents[county as usize - 1] {
                let a = &self.agents[id as usize];
                if a.alive && a.in_community() && a.covid == CovidStatus::Susceptible {
                    pools[a.age_group.index()].push(id);
                }
            }
            let eligible = (pools[0].len() + pools[1].len() + pools[2].len()) as u32;
            let selected = covid::select_weighted_without_replacement(
                &mut pools,
                self.infection_weights,
                target as usize,
                &mut self.streams.covid,
            );
            self.recorder.infect_audit(InfectAuditRow {
                day,
                county,
                target,
                eligible,
                infected: selected.len() as u32,
            });
            for id in selected {
                self.infect_agent(id)?;
            }
        }
        self.recorder.set_day_target(day_target_total);
        Ok(())
    }

    fn infect_agent(&mut self, id: AgentId) -> Result<()> {
        let day = self.day;
        let (comorbidity, group_idx) = {
            let a = &self.agents[id as usize];
            (a.comorbidity, a.age_group.index())
        };
        let test_status = covid::assign_test_status(self.params.covid.p_tested, &mut self.streams.covid);
        let tested = test_status == crate::world::TestStatus::Tested;
        self.recorder.infect(Substep::CovidUpdate, id, tested);
        let decision = covid::assign_severity(
            &self.params.covid,
            tested,
            comorbidity,
            group_idx,
            &mut self.streams.covid,
        );
        {
            let a = &mut self.agents[id as usize];
            a.covid = decision.status;
            a.test_status = test_status;
        }
        if !decision.hospital_bound {
            self.agents[id as usize].covid_recovery_day =
                Some(day + self.params.covid.infection_duration);
            return Ok(());
        }
        let need = decision.need.expect("hospital-bound agents have a need");
        let agent_copy = self.agents[id as usize].clone();
        let router = router!(self);
        // First choice drawn like any community admission, restricted to the
        // STACH types.
        let row = self
            .bundle
            .community
            .row(agent_copy.county, agent_copy.age_group)?;
        let stach_weights = [row.type_probs[0], row.type_probs[1], row.type_probs[2]];
        let type_idx = crate::movement::weighted_pick(&stach_weights, &mut self.streams.covid)
            .ok_or_else(|| {
                Error::Config(format!(
                    "county {} has no STACH mass in its community row",
                    agent_copy.county
                ))
            })?;
        let first_choice = router.choose_specific_facility(
            &self.facilities,
            &agent_copy,
            TYPE_ORDER[type_idx],
            RouteContext::NewAdmission,
            &mut self.streams.covid,
        )?;
        self.recorder.seek(Substep::CovidUpdate, id, true, need);
        let mut records = Vec::new();
        let outcome = router.attempt_admission(
            &mut self.facilities,
            &agent_copy,
            need,
            first_choice,
            day,
            true,
            &mut self.streams.covid,
            &mut records,
        )?;
        for r in records {
            self.recorder.turn_away(r);
        }
        match outcome {
            AdmissionResult::Admitted(fid) => {
                let los = covid::sample_covid_los(&self.params.covid, &mut self.streams.covid);
                let category = self.facilities[fid as usize].category;
                let a = &mut self.agents[id as usize];
                a.location = fid;
                a.icu_flag = need.is_icu();
                a.ventilator_flag = need == BedKind::IcuVentilator;
                a.covid_admission = true;
                a.leave_day = Some(day + los);
                a.readmission = None;
                self.recorder
                    .admit(Substep::CovidUpdate, id, fid, category, need, true);
                self.recorder.covid_hospitalized(tested);
            }
            AdmissionResult::CompletelyTurnedAway => {
                let a = &mut self.agents[id as usize];
                a.unmet_covid_need = Some(need);
                a.covid_recovery_day = Some(day + self.params.covid.infection_duration);
            }
        }
        Ok(())
    }

    /// Stage 4: community agents leave for facilities by their daily
    /// county/age probabilities.
    fn community_departure_stage(&mut self) -> Result<()> {
        let day = self.day;
        let mut candidates: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| a.alive && a.in_community())
            .map(|a| a.id)
            .collect();
        candidates.shuffle(&mut self.streams.community);
        for id in candidates {
            let (county, age_group, covid_active) = {
                let a = &self.agents[id as usize];
                (a.county, a.age_group, a.covid.is_active())
            };
            let row = self.bundle.community.row(county, age_group)?;
            let Some(type_idx) = departure_draw(row, &mut self.streams.community) else {
                continue;
            };
            let category = TYPE_ORDER[type_idx];
            let agent_copy = self.agents[id as usize].clone();
            let router = router!(self);
            let destination = router.choose_specific_facility(
                &self.facilities,
                &agent_copy,
                category,
                RouteContext::NewAdmission,
                &mut self.streams.community,
            )?;
            let los = self
                .los_model
                .sample(&self.facilities[destination as usize], &mut self.streams.community);
            if category.is_stach() {
                let p = icu_probability(&self.params, &agent_copy, los);
                let need = if self.streams.community.gen::<f64>() < p {
                    BedKind::Icu
                } else {
                    BedKind::NonIcu
                };
                self.recorder
                    .seek(Substep::CommunityDeparture, id, covid_active, need);
                let mut records = Vec::new();
                let outcome = router.attempt_admission(
                    &mut self.facilities,
                    &agent_copy,
                    need,
                    destination,
                    day,
                    covid_active,
                    &mut self.streams.community,
                    &mut records,
                )?;
                for r in records {
                    self.recorder.turn_away(r);
                }
                if let AdmissionResult::Admitted(fid) = outcome {
                    let dest_cat = self.facilities[fid as usize].category;
                    let a = &mut self.agents[id as usize];
                    a.location = fid;
                    a.icu_flag = need.is_icu();
                    a.ventilator_flag = false;
                    a.leave_day = Some(day + los);
                    a.readmission = None;
                    a.unmet_covid_need = None;
                    self.recorder
                        .admit(Substep::CommunityDeparture, id, fid, dest_cat, need, covid_active);
                }
            } else {
                // NH and LTACH admissions are single attempts with no ledger.
                if self.facilities[destination as usize].assign_bed(id, BedKind::NonIcu)?
                    == AssignOutcome::Assigned
                {
                    let a = &mut self.agents[id as usize];
                    a.location = destination;
                    a.icu_flag = false;
                    a.ventilator_flag = false;
                    a.leave_day = Some(day + los);
                    self.recorder.admit(
                        Substep::CommunityDeparture,
                        id,
                        destination,
                        category,
                        BedKind::NonIcu,
                        covid_active,
                    );
                }
            }
        }
        Ok(())
    }

    /// Stage 5: scheduled readmissions due today try their stored facility
    /// once.
    fn readmission_stage(&mut self) -> Result<()> {
        let day = self.day;
        let mut due: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| a.alive && a.readmission.is_some_and(|(d, _)| d == day))
            .map(|a| a.id)
            .collect();
        due.shuffle(&mut self.streams.routing);
        for id in due {
            let (_, facility) = self.agents[id as usize].readmission.take().expect("due");
            if !self.agents[id as usize].in_community() {
                continue;
            }
            let covid_active = self.agents[id as usize].covid.is_active();
            let agent_copy = self.agents[id as usize].clone();
            let los = self
                .los_model
                .sample(&self.facilities[facility as usize], &mut self.streams.routing);
            let p = icu_probability(&self.params, &agent_copy, los);
            let need = if self.streams.routing.gen::<f64>() < p {
                BedKind::Icu
            } else {
                BedKind::NonIcu
            };
            self.recorder.seek(Substep::Readmission, id, covid_active, need);
            let router = router!(self);
            let mut records = Vec::new();
            let outcome = router.attempt_transfer(
                &mut self.facilities,
                &agent_copy,
                need,
                facility,
                day,
                covid_active,
                &mut records,
            )?;
            for r in records {
                self.recorder.turn_away(r);
            }
            if outcome == TransferResult::Admitted {
                let category = self.facilities[facility as usize].category;
                let a = &mut self.agents[id as usize];
                a.location = facility;
                a.icu_flag = need.is_icu();
                a.ventilator_flag = false;
                a.leave_day = Some(day + los);
                self.recorder
                    .admit(Substep::Readmission, id, facility, category, need, covid_active);
            }
        }
        Ok(())
    }

    /// Deceased agents are replaced by demographic copies starting in the
    /// community; they become eligible for events the next day.
    fn recreate_agents(&mut self) {
        let dead = std::mem::take(&mut self.dead_awaiting);
        for old_id in dead {
            let (age, county, comorbidity) = {
                let a = &self.agents[old_id as usize];
                (a.age_years, a.county, a.comorbidity)
            };
            let new_id = self.agents.len() as AgentId;
            self.agents.push(Agent::new(new_id, age, county, comorbidity));
            self.county_agents[county as usize - 1].push(new_id);
            self.recorder.recreate(new_id);
        }
    }

    fn snapshot(&self) -> WorldSnapshot {
        let mut s = WorldSnapshot::default();
        for a in &self.agents {
            if !a.alive {
                continue;
            }
            s.living += 1;
            if let Some(kind) = a.unmet_covid_need {
                if a.covid.is_active() {
                    if kind.is_icu() {
                        s.unmet_covid_icu += 1;
                    } else {
                        s.unmet_covid_non_icu += 1;
                    }
                }
            }
            if a.location == COMMUNITY {
                continue;
            }
            let category = self.facilities[a.location as usize].category;
            s.occupancy_by_category[category.index()] += 1;
            let kind = a.held_bed_kind();
            if kind.is_icu() {
                s.occupancy_icu += 1;
            } else {
                s.occupancy_non_icu += 1;
            }
            if category.is_stach() {
                match (a.covid.is_active(), kind.is_icu()) {
                    (true, false) => s.census_covid_non_icu += 1,
                    (true, true) => s.census_covid_icu += 1,
                    (false, false) => s.census_noncovid_non_icu += 1,
                    (false, true) => s.census_noncovid_icu += 1,
                }
            }
        }
        s.awaiting_recreation = self.dead_awaiting.len() as u64;
        s
    }

    fn record_current_day(&mut self) {
        let snapshot = self.snapshot();
        self.recorder.record_day(snapshot);
    }

    // Accessors used by integration tests and the CLI.

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn day0_outcome(&self) -> Option<&Day0Outcome> {
        self.day0.as_ref()
    }

    pub fn forecast(&self) -> Option<&ForecastSet> {
        self.forecast.as_ref()
    }

    pub fn targets(&self) -> &[Vec<u32>] {
        &self.targets
    }

    pub fn input_re(&self) -> f64 {
        self.input_re
    }

    pub fn initial_population(&self) -> u64 {
        self.initial_population
    }
}

/// Build and run a simulation in one call.
pub fn run(bundle: Bundle, params: Parameters, config: RunConfig) -> Result<RunResult> {
    Simulation::new(bundle, params, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn scale_beds_rounds_with_floor() {
        assert_eq!(scale_beds(0, 0.01), 0);
        assert_eq!(scale_beds(1000, 0.01), 10);
        assert_eq!(scale_beds(20, 0.01), 1, "nonzero counts keep at least one bed");
        assert_eq!(scale_beds(1000, 1.0), 1000);
    }

    #[test]
    fn remaining_pool_constant_one_is_all_ones() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut draw = |_: &mut ChaCha12Rng| 1u32;
        let (pool, days) = remaining_los_pool(&mut draw, 500, &mut rng);
        assert_eq!(days, 1);
        assert!(pool.iter().all(|&v| v == 1));
    }

    #[test]
    fn remaining_pool_constant_ten_is_uniform() {
        // renewal equilibrium of a deterministic 10-day stay: residuals
        // uniform on 1..=10
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut draw = |_: &mut ChaCha12Rng| 10u32;
        let n = 100_000;
        let (pool, days) = remaining_los_pool(&mut draw, n, &mut rng);
        assert_eq!(days, 10);
        let mut counts = [0u32; 10];
        for v in pool {
            assert!((1..=10).contains(&v));
            counts[v as usize - 1] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let share = c as f64 / n as f64;
            assert!(
                (share - 0.1).abs() < 0.003,
                "residual {} share {share}",
                i + 1
            );
        }
    }

    #[test]
    fn remaining_pool_length_is_p95() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let gamma: rand_distr::Gamma<f64> = rand_distr::Gamma::new(2.0, 2.5).unwrap();
        let mut draw = |rng: &mut ChaCha12Rng| {
            use rand_distr::Distribution;
            (gamma.sample(rng).ceil() as u32).max(1)
        };
        let mut check_rng = ChaCha12Rng::seed_from_u64(3);
        let initial: Vec<u32> = (0..1000).map(|_| draw(&mut check_rng)).collect();
        let mut sorted = initial.clone();
        sorted.sort_unstable();
        let expected = sorted[((0.95_f64 * 1000.0).ceil() as usize) - 1];
        let (_, days) = remaining_los_pool(&mut draw, 1000, &mut rng);
        assert_eq!(days, expected);
    }
}
