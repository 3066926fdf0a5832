//! Per-day output collection, turn-away ledgers, and pattern-validation
//! reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::movement::{TurnAwayRecord, TurnAwayStage};
use crate::world::{AgentId, BedKind, County, Day, FacilityCategory, FacilityId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Substep {
    Init,
    Life,
    CovidRecovery,
    LosMove,
    CovidUpdate,
    CommunityDeparture,
    Readmission,
    Recreate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Death,
    Admit,
    Release,
    Seek,
    Infect,
    Recover,
    StepDownToNh,
    Recreate,
}

/// One entry in the per-run event log, used by audits and tests.
#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub day: Day,
    pub seq: u64,
    pub substep: Substep,
    pub kind: EventKind,
    pub agent: AgentId,
    pub facility: FacilityId,
    pub bed: Option<BedKind>,
    pub covid: bool,
}

/// Table-5 output categories for one simulation day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DailyMetrics {
    pub day: Day,
    pub new_infections: u32,
    pub cumulative_infections: u64,
    pub seeking_all_non_icu: u32,
    pub seeking_all_icu: u32,
    pub seeking_covid_non_icu: u32,
    pub seeking_covid_icu: u32,
    pub census_covid_non_icu: u32,
    pub census_covid_icu: u32,
    pub census_noncovid_non_icu: u32,
    pub census_noncovid_icu: u32,
    pub turned_away_covid_non_icu: u32,
    pub turned_away_covid_icu: u32,
    pub turned_away_noncovid_non_icu: u32,
    pub turned_away_noncovid_icu: u32,
    pub demand_total_non_icu: u32,
    pub demand_total_icu: u32,
    pub demand_covid_non_icu: u32,
    pub demand_covid_icu: u32,
    /// Bed-kind admissions and releases across every facility, for the
    /// census-reconciliation audit.
    pub admissions_non_icu: u32,
    pub admissions_icu: u32,
    pub releases_non_icu: u32,
    pub releases_icu: u32,
    /// Occupancy of every facility by bed kind at end of day.
    pub occupancy_non_icu: u32,
    pub occupancy_icu: u32,
    /// Population accounting at end of day.
    pub living: u64,
    pub awaiting_recreation: u64,
}

/// End-of-day state scan supplied by the engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct WorldSnapshot {
    pub census_covid_non_icu: u32,
    pub census_covid_icu: u32,
    pub census_noncovid_non_icu: u32,
    pub census_noncovid_icu: u32,
    pub occupancy_non_icu: u32,
    pub occupancy_icu: u32,
    pub occupancy_by_category: [u32; 6],
    pub unmet_covid_non_icu: u32,
    pub unmet_covid_icu: u32,
    pub living: u64,
    pub awaiting_recreation: u64,
}

/// Model-side quantities for the validation patterns: deaths by facility
/// category, patient movement by location type, infections vs input, and
/// hospitalization proportions by testing status.
#[derive(Debug, Clone, Default)]
pub struct PatternReport {
    pub deaths_by_category: [u64; 6],
    pub admissions_by_category: [u64; 6],
    pub transfers_by_category: [u64; 6],
    pub discharges_by_category: [u64; 6],
    pub mean_census_by_category: [f64; 6],
    pub infection_target_total: u64,
    pub infection_model_total: u64,
    pub infection_days_matched: u64,
    pub infection_days_short: u64,
    pub infections_tested: u64,
    pub infections_untested: u64,
    pub hospitalized_tested: u64,
    pub hospitalized_untested: u64,
}

impl PatternReport {
    pub fn hospitalization_proportion(&self, tested: bool) -> f64 {
        let (hosp, inf) = if tested {
            (self.hospitalized_tested, self.infections_tested)
        } else {
            (self.hospitalized_untested, self.infections_untested)
        };
        if inf == 0 {
            0.0
        } else {
            hosp as f64 / inf as f64
        }
    }
}

/// Per-county-day infection seeding audit row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfectAuditRow {
    pub day: Day,
    pub county: County,
    pub target: u32,
    pub eligible: u32,
    pub infected: u32,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub mode: String,
    pub horizon: u32,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub days: Vec<DailyMetrics>,
    pub turn_aways: Vec<TurnAwayRecord>,
    pub pattern: PatternReport,
    pub manifest: Manifest,
    pub infect_audit: Vec<InfectAuditRow>,
    pub events: Vec<Event>,
}

#[derive(Debug, Default)]
struct DayTally {
    new_infections: u32,
    seeking_all_non_icu: u32,
    seeking_all_icu: u32,
    seeking_covid_non_icu: u32,
    seeking_covid_icu: u32,
    turned_away: [u32; 4],
    admissions_non_icu: u32,
    admissions_icu: u32,
    releases_non_icu: u32,
    releases_icu: u32,
    target_total: u64,
}

#[derive(Debug, Default)]
struct PatternAccum {
    deaths: [u64; 6],
    admissions: [u64; 6],
    transfers: [u64; 6],
    discharges: [u64; 6],
    census_sum: [u64; 6],
    days_counted: u64,
    infections_tested: u64,
    infections_untested: u64,
    hospitalized_tested: u64,
    hospitalized_untested: u64,
    target_total: u64,
    model_total: u64,
    days_matched: u64,
    days_short: u64,
}

/// Why a bed was released.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseReason {
    Death,
    Recovery,
    LosEnd,
}

/// Collects events, daily tallies, and pattern aggregates during a run.
pub struct Recorder {
    pub collect_events: bool,
    events: Vec<Event>,
    seq: u64,
    day: Day,
    tally: DayTally,
    days: Vec<DailyMetrics>,
    turnaways: Vec<TurnAwayRecord>,
    pattern: PatternAccum,
    cumulative_infections: u64,
    infect_audit: Vec<InfectAuditRow>,
}

impl Recorder {
    pub fn new(collect_events: bool) -> Recorder {
        Recorder {
            collect_events,
            events: Vec::new(),
            seq: 0,
            day: 0,
            tally: DayTally::default(),
            days: Vec::new(),
            turnaways: Vec::new(),
            pattern: PatternAccum::default(),
            cumulative_infections: 0,
            infect_audit: Vec::new(),
        }
    }

    fn push_event(
        &mut self,
        substep: Substep,
        kind: EventKind,
        agent: AgentId,
        facility: FacilityId,
        bed: Option<BedKind>,
        covid: bool,
    ) {
        if self.collect_events {
            self.events.push(Event {
                day: self.day,
                seq: self.seq,
                substep,
                kind,
                agent,
                facility,
                bed,
                covid,
            });
        }
        self.seq += 1;
    }

    pub fn begin_day(&mut self, day: Day) {
        self.day = day;
        self.tally = DayTally::default();
    }

    pub fn set_day_target(&mut self, total: u64) {
        self.tally.target_total = total;
    }

    pub fn death(&mut self, substep: Substep, agent: AgentId, facility: FacilityId, category: FacilityCategory) {
        self.pattern.deaths[category.index()] += 1;
        self.push_event(substep, EventKind::Death, agent, facility, None, false);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn admit(
        &mut self,
        substep: Substep,
        agent: AgentId,
        facility: FacilityId,
        category: FacilityCategory,
        bed: BedKind,
        covid: bool,
    ) {
        self.pattern.admissions[category.index()] += 1;
        if bed.is_icu() {
            self.tally.admissions_icu += 1;
        } else {
            self.tally.admissions_non_icu += 1;
        }
        self.push_event(substep, EventKind::Admit, agent, facility, Some(bed), covid);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn release(
        &mut self,
        substep: Substep,
        agent: AgentId,
        facility: FacilityId,
        category: FacilityCategory,
        bed: BedKind,
        covid: bool,
        reason: ReleaseReason,
    ) {
        if reason != ReleaseReason::Death {
            self.pattern.discharges[category.index()] += 1;
        }
        if bed.is_icu() {
            self.tally.releases_icu += 1;
        } else {
            self.tally.releases_non_icu += 1;
        }
        self.push_event(substep, EventKind::Release, agent, facility, Some(bed), covid);
    }

    pub fn transfer(&mut self, from_category: FacilityCategory) {
        self.pattern.transfers[from_category.index()] += 1;
    }

    pub fn seek(&mut self, substep: Substep, agent: AgentId, covid: bool, need: BedKind) {
        if need.is_icu() {
            self.tally.seeking_all_icu += 1;
            if covid {
                self.tally.seeking_covid_icu += 1;
            }
        } else {
            self.tally.seeking_all_non_icu += 1;
            if covid {
                self.tally.seeking_covid_non_icu += 1;
            }
        }
        self.push_event(substep, EventKind::Seek, agent, 0, Some(need), covid);
    }

    pub fn infect(&mut self, substep: Substep, agent: AgentId, tested: bool) {
        self.tally.new_infections += 1;
        self.cumulative_infections += 1;
        if tested {
            self.pattern.infections_tested += 1;
        } else {
            self.pattern.infections_untested += 1;
        }
        self.push_event(substep, EventKind::Infect, agent, 0, None, true);
    }

    pub fn covid_hospitalized(&mut self, tested: bool) {
        if tested {
            self.pattern.hospitalized_tested += 1;
        } else {
            self.pattern.hospitalized_untested += 1;
        }
    }

    pub fn recover(&mut self, agent: AgentId) {
        self.push_event(Substep::CovidRecovery, EventKind::Recover, agent, 0, None, true);
    }

    pub fn step_down(&mut self, agent: AgentId, nh: FacilityId) {
        self.push_event(Substep::CovidRecovery, EventKind::StepDownToNh, agent, nh, None, true);
    }

    pub fn recreate(&mut self, agent: AgentId) {
        self.push_event(Substep::Recreate, EventKind::Recreate, agent, 0, None, false);
    }

    pub fn turn_away(&mut self, record: TurnAwayRecord) {
        if record.stage == TurnAwayStage::CompletelyTurnedAway {
            let idx = match (record.covid, record.need.is_icu()) {
                (true, false) => 0,
                (true, true) => 1,
                (false, false) => 2,
                (false, true) => 3,
            };
            self.tally.turned_away[idx] += 1;
        }
        self.turnaways.push(record);
    }

    pub fn infect_audit(&mut self, row: InfectAuditRow) {
        if row.target >= row.eligible {
            if row.infected == row.eligible {
                self.pattern.days_short += 1;
            }
        } else if row.infected == row.target {
            self.pattern.days_matched += 1;
        }
        self.infect_audit.push(row);
    }

    /// Finalize the day's metrics from the tallies and the end-of-day scan.
    pub fn record_day(&mut self, snapshot: WorldSnapshot) {
        let t = &self.tally;
        self.pattern.target_total += t.target_total;
        self.pattern.model_total += t.new_infections as u64;
        self.pattern.days_counted += 1;
        for (i, &occ) in snapshot.occupancy_by_category.iter().enumerate() {
            self.pattern.census_sum[i] += occ as u64;
        }
        let census_all_non = snapshot.census_covid_non_icu + snapshot.census_noncovid_non_icu;
        let census_all_icu = snapshot.census_covid_icu + snapshot.census_noncovid_icu;
        self.days.push(DailyMetrics {
            day: self.day,
            new_infections: t.new_infections,
            cumulative_infections: self.cumulative_infections,
            seeking_all_non_icu: t.seeking_all_non_icu,
            seeking_all_icu: t.seeking_all_icu,
            seeking_covid_non_icu: t.seeking_covid_non_icu,
            seeking_covid_icu: t.seeking_covid_icu,
            census_covid_non_icu: snapshot.census_covid_non_icu,
            census_covid_icu: snapshot.census_covid_icu,
            census_noncovid_non_icu: snapshot.census_noncovid_non_icu,
            census_noncovid_icu: snapshot.census_noncovid_icu,
            turned_away_covid_non_icu: t.turned_away[0],
            turned_away_covid_icu: t.turned_away[1],
            turned_away_noncovid_non_icu: t.turned_away[2],
            turned_away_noncovid_icu: t.turned_away[3],
            demand_covid_non_icu: snapshot.census_covid_non_icu + snapshot.unmet_covid_non_icu,
            demand_covid_icu: snapshot.census_covid_icu + snapshot.unmet_covid_icu,
            demand_total_non_icu: census_all_non
                + snapshot.unmet_covid_non_icu
                + t.turned_away[2],
            demand_total_icu: census_all_icu + snapshot.unmet_covid_icu + t.turned_away[3],
            admissions_non_icu: t.admissions_non_icu,
            admissions_icu: t.admissions_icu,
            releases_non_icu: t.releases_non_icu,
            releases_icu: t.releases_icu,
            occupancy_non_icu: snapshot.occupancy_non_icu,
            occupancy_icu: snapshot.occupancy_icu,
            living: snapshot.living,
            awaiting_recreation: snapshot.awaiting_recreation,
        });
    }

    pub fn finish(self, manifest: Manifest) -> RunResult {
        let p = self.pattern;
        let days_counted = p.days_counted.max(1) as f64;
        let mut mean_census = [0.0; 6];
        for i in 0..6 {
            mean_census[i] = p.census_sum[i] as f64 / days_counted;
        }
        RunResult {
            days: self.days,
            turn_aways: self.turnaways,
            pattern: PatternReport {
                deaths_by_category: p.deaths,
                admissions_by_category: p.admissions,
                transfers_by_category: p.transfers,
                discharges_by_category: p.discharges,
                mean_census_by_category: mean_census,
                infection_target_total: p.target_total,
                infection_model_total: p.model_total,
                infection_days_matched: p.days_matched,
                infection_days_short: p.days_short,
                infections_tested: p.infections_tested,
                infections_untested: p.infections_untested,
                hospitalized_tested: p.hospitalized_tested,
                hospitalized_untested: p.hospitalized_untested,
            },
            manifest,
            infect_audit: self.infect_audit,
            events: self.events,
        }
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

pub const METRICS_FILE: &str = "metrics.csv";
pub const TURNAWAYS_FILE: &str = "turnaways.csv";
pub const PATTERN_FILE: &str = "pattern.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// FNV-1a, used to fingerprint configuration in the run manifest.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

const METRICS_HEADER: &str = "day,new_infections,cumulative_infections,\
seeking_all_non_icu,seeking_all_icu,seeking_covid_non_icu,seeking_covid_icu,\
census_covid_non_icu,census_covid_icu,census_noncovid_non_icu,census_noncovid_icu,\
turned_away_covid_non_icu,turned_away_covid_icu,turned_away_noncovid_non_icu,turned_away_noncovid_icu,\
demand_total_non_icu,demand_total_icu,demand_covid_non_icu,demand_covid_icu,\
admissions_non_icu,admissions_icu,releases_non_icu,releases_icu,\
occupancy_non_icu,occupancy_icu,living,awaiting_recreation";

pub fn write_metrics_csv(days: &[DailyMetrics], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{METRICS_HEADER}").unwrap();
    for m in days {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.day,
            m.new_infections,
            m.cumulative_infections,
            m.seeking_all_non_icu,
            m.seeking_all_icu,
            m.seeking_covid_non_icu,
            m.seeking_covid_icu,
            m.census_covid_non_icu,
            m.census_covid_icu,
            m.census_noncovid_non_icu,
            m.census_noncovid_icu,
            m.turned_away_covid_non_icu,
            m.turned_away_covid_icu,
            m.turned_away_noncovid_non_icu,
            m.turned_away_noncovid_icu,
            m.demand_total_non_icu,
            m.demand_total_icu,
            m.demand_covid_non_icu,
            m.demand_covid_icu,
            m.admissions_non_icu,
            m.admissions_icu,
            m.releases_non_icu,
            m.releases_icu,
            m.occupancy_non_icu,
            m.occupancy_icu,
            m.living,
            m.awaiting_recreation
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<DailyMetrics>> {
    let mut rdr = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut days = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| -> Result<u64> {
            row.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Input(format!("metrics column {i}: {e}")))
        };
        days.push(DailyMetrics {
            day: get(0)? as Day,
            new_infections: get(1)? as u32,
            cumulative_infections: get(2)?,
            seeking_all_non_icu: get(3)? as u32,
            seeking_all_icu: get(4)? as u32,
            seeking_covid_non_icu: get(5)? as u32,
            seeking_covid_icu: get(6)? as u32,
            census_covid_non_icu: get(7)? as u32,
            census_covid_icu: get(8)? as u32,
            census_noncovid_non_icu: get(9)? as u32,
            census_noncovid_icu: get(10)? as u32,
            turned_away_covid_non_icu: get(11)? as u32,
            turned_away_covid_icu: get(12)? as u32,
            turned_away_noncovid_non_icu: get(13)? as u32,
            turned_away_noncovid_icu: get(14)? as u32,
            demand_total_non_icu: get(15)? as u32,
            demand_total_icu: get(16)? as u32,
            demand_covid_non_icu: get(17)? as u32,
            demand_covid_icu: get(18)? as u32,
            admissions_non_icu: get(19)? as u32,
            admissions_icu: get(20)? as u32,
            releases_non_icu: get(21)? as u32,
            releases_icu: get(22)? as u32,
            occupancy_non_icu: get(23)? as u32,
            occupancy_icu: get(24)? as u32,
            living: get(25)?,
            awaiting_recreation: get(26)?,
        });
    }
    Ok(days)
}

pub fn write_turnaways_csv(records: &[TurnAwayRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "day,agent,county,facility,need,stage").unwrap();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.day,
            r.agent,
            r.county,
            r.facility,
            r.need.label(),
            r.stage.label()
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn pattern_rows(report: &PatternReport) -> Vec<(String, String, String, f64)> {
    let mut rows = Vec::new();
    for cat in FacilityCategory::ALL {
        if cat != FacilityCategory::Community {
            rows.push((
                "pattern1".into(),
                cat.label().into(),
                "deaths".into(),
                report.deaths_by_category[cat.index()] as f64,
            ));
        }
    }
    for cat in FacilityCategory::ALL {
        if cat == FacilityCategory::Community {
            continue;
        }
        let i = cat.index();
        rows.push(("pattern2".into(), cat.label().into(), "admissions".into(), report.admissions_by_category[i] as f64));
        rows.push(("pattern2".into(), cat.label().into(), "transfers".into(), report.transfers_by_category[i] as f64));
        rows.push(("pattern2".into(), cat.label().into(), "discharges".into(), report.discharges_by_category[i] as f64));
        rows.push(("pattern2".into(), cat.label().into(), "mean_census".into(), report.mean_census_by_category[i]));
    }
    rows.push(("pattern3".into(), "statewide".into(), "input_infections".into(), report.infection_target_total as f64));
    rows.push(("pattern3".into(), "statewide".into(), "model_infections".into(), report.infection_model_total as f64));
    rows.push(("pattern3".into(), "statewide".into(), "days_matched".into(), report.infection_days_matched as f64));
    rows.push(("pattern3".into(), "statewide".into(), "days_eligibility_short".into(), report.infection_days_short as f64));
    rows.push((
        "pattern4".into(),
        "tested".into(),
        "hospitalization_proportion".into(),
        report.hospitalization_proportion(true),
    ));
    rows.push((
        "pattern4".into(),
        "untested".into(),
        "hospitalization_proportion".into(),
        report.hospitalization_proportion(false),
    ));
    rows
}

pub fn write_pattern_csv(report: &PatternReport, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "pattern,category,metric,value").unwrap();
    for (pattern, category, metric, value) in pattern_rows(report) {
        writeln!(out, "{pattern},{category},{metric},{value}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Compare a pattern report against an observed-data file of the same shape.
/// Returns (comparison rows, max absolute delta).
pub fn compare_pattern(
    report: &PatternReport,
    observed_path: &Path,
) -> Result<(Vec<(String, String, String, f64, f64, f64)>, f64)> {
    let mut rdr = csv::Reader::from_path(observed_path).map_err(Error::Csv)?;
    let mut observed: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx as u64 + 2;
        let value: f64 = row
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Parse {
                file: observed_path.display().to_string(),
                line,
                msg: format!("value: {e}"),
            })?;
        observed.insert(
            (
                row.get(0).unwrap_or("").to_string(),
                row.get(1).unwrap_or("").to_string(),
                row.get(2).unwrap_or("").to_string(),
            ),
            value,
        );
    }
    let mut rows = Vec::new();
    let mut max_delta = 0.0_f64;
    for (pattern, category, metric, value) in pattern_rows(report) {
        let key = (pattern.clone(), category.clone(), metric.clone());
        let obs = observed.get(&key).copied().ok_or_else(|| {
            Error::validation(
                observed_path.display().to_string(),
                format!("missing observed row {key:?}"),
            )
        })?;
        let delta = value - obs;
        max_delta = max_delta.max(delta.abs());
        rows.push((pattern, category, metric, value, obs, delta));
    }
    Ok((rows, max_delta))
}

pub fn write_comparison_csv(
    rows: &[(String, String, String, f64, f64, f64)],
    path: &Path,
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "pattern,category,metric,model,observed,delta").unwrap();
    for (pattern, category, metric, model, observed, delta) in rows {
        writeln!(out, "{pattern},{category},{metric},{model},{observed},{delta}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = format!(
        "config_hash={}\nhorizon={}\nmode={}\nscale={}\nseed={}\n",
        manifest.config_hash, manifest.horizon, manifest.mode, manifest.scale, manifest.seed
    );
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write the full result set: per-day metrics, turn-away ledger, pattern
/// report, and the run manifest.
pub fn export(result: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_metrics_csv(&result.days, &dir.join(METRICS_FILE))?;
    write_turnaways_csv(&result.turn_aways, &dir.join(TURNAWAYS_FILE))?;
    write_pattern_csv(&result.pattern, &dir.join(PATTERN_FILE))?;
    write_manifest(&result.manifest, &dir.join(MANIFEST_FILE))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let days = vec![
            DailyMetrics {
                day: 0,
                new_infections: 5,
                cumulative_infections: 5,
                census_covid_icu: 2,
                occupancy_icu: 2,
                living: 100,
                ..Default::default()
            },
            DailyMetrics {
                day: 1,
                new_infections: 3,
                cumulative_infections: 8,
                demand_total_non_icu: 7,
                living: 99,
                awaiting_recreation: 1,
                ..Default::default()
            },
        ];
        write_metrics_csv(&days, &path).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(days, back);
    }

    #[test]
    fn manifest_differs_only_in_seed() {
        let a = Manifest {
            seed: 1,
            config_hash: "abc".into(),
            mode: "forecast".into(),
            horizon: 30,
            scale: 0.01,
        };
        let b = Manifest { seed: 2, ..a.clone() };
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a.txt");
        let pb = dir.path().join("b.txt");
        write_manifest(&a, &pa).unwrap();
        write_manifest(&b, &pb).unwrap();
        let ta = std::fs::read_to_string(&pa).unwrap();
        let tb = std::fs::read_to_string(&pb).unwrap();
        let diff: Vec<(&str, &str)> = ta
            .lines()
            .zip(tb.lines())
            .filter(|(x, y)| x != y)
            .collect();
        assert_eq!(diff.len(), 1);
        assert!(diff[0].0.starts_with("seed="));
    }

    #[test]
    fn pattern_comparison_identical_is_zero() {
        let report = PatternReport {
            deaths_by_category: [1, 2, 3, 4, 5, 0],
            admissions_by_category: [10, 20, 30, 4, 5, 0],
            infections_tested: 10,
            hospitalized_tested: 2,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pattern.csv");
        write_pattern_csv(&report, &path).unwrap();
        let (rows, max_delta) = compare_pattern(&report, &path).unwrap();
        assert_eq!(max_delta, 0.0);
        assert!(rows.iter().all(|r| r.5 == 0.0));
    }

    #[test]
    fn fnv1a_is_stable() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), fnv1a(b"a"));
        assert_ne!(fnv1a(b"a"), fnv1a(b"b"));
    }
}
