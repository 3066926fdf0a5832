//! Core domain types: agents, facilities, and bed-inventory mechanics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type AgentId = u32;
pub type FacilityId = u16;
pub type County = u8;
pub type Day = u32;

/// Facility id 0 is always the community node.
pub const COMMUNITY: FacilityId = 0;

pub const N_COUNTIES: usize = 100;

/// Three-bin age grouping used everywhere an age enters a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    Under50,
    From50To64,
    Over65,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Under50, AgeGroup::From50To64, AgeGroup::Over65];

    pub fn index(self) -> usize {
        match self {
            AgeGroup::Under50 => 0,
            AgeGroup::From50To64 => 1,
            AgeGroup::Over65 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Under50 => "0-49",
            AgeGroup::From50To64 => "50-64",
            AgeGroup::Over65 => "65+",
        }
    }

    pub fn parse(s: &str) -> Result<AgeGroup> {
        match s.trim() {
            "0-49" => Ok(AgeGroup::Under50),
            "50-64" => Ok(AgeGroup::From50To64),
            "65+" => Ok(AgeGroup::Over65),
            other => Err(Error::Input(format!("unknown age group '{other}'"))),
        }
    }
}

/// Bin an age in whole years into its age group.
pub fn bin_age(age_years: i64) -> Result<AgeGroup> {
    if age_years < 0 {
        return Err(Error::Input(format!("negative age {age_years}")));
    }
    Ok(match age_years {
        0..=49 => AgeGroup::Under50,
        50..=64 => AgeGroup::From50To64,
        _ => AgeGroup::Over65,
    })
}

/// COVID-19 disease state. Five states are modeled; the legacy sixth
/// status code is reserved and never assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovidStatus {
    Susceptible,
    MildAsymptomatic,
    Severe,
    Critical,
    Recovered,
}

impl CovidStatus {
    /// True for agents carrying an active infection.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            CovidStatus::MildAsymptomatic | CovidStatus::Severe | CovidStatus::Critical
        )
    }
}

/// Whether an infection was detected. `NotApplicable` for never-infected agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestStatus {
    NotApplicable,
    Tested,
    Untested,
}

/// The kind of bed an agent needs or occupies. Ventilator-capable beds are a
/// flagged subset of ICU beds: an `IcuVentilator` request consumes an ICU bed
/// that carries the ventilator flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BedKind {
    NonIcu,
    Icu,
    IcuVentilator,
}

impl BedKind {
    pub fn is_icu(self) -> bool {
        matches!(self, BedKind::Icu | BedKind::IcuVentilator)
    }

    pub fn label(self) -> &'static str {
        match self {
            BedKind::NonIcu => "non_icu",
            BedKind::Icu => "icu",
            BedKind::IcuVentilator => "icu_ventilator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FacilityCategory {
    Unc,
    LargeNonUnc,
    SmallNonUnc,
    Ltach,
    Nh,
    Community,
}

impl FacilityCategory {
    pub const ALL: [FacilityCategory; 6] = [
        FacilityCategory::Unc,
        FacilityCategory::LargeNonUnc,
        FacilityCategory::SmallNonUnc,
        FacilityCategory::Ltach,
        FacilityCategory::Nh,
        FacilityCategory::Community,
    ];

    pub fn is_stach(self) -> bool {
        matches!(
            self,
            FacilityCategory::Unc | FacilityCategory::LargeNonUnc | FacilityCategory::SmallNonUnc
        )
    }

    pub fn index(self) -> usize {
        match self {
            FacilityCategory::Unc => 0,
            FacilityCategory::LargeNonUnc => 1,
            FacilityCategory::SmallNonUnc => 2,
            FacilityCategory::Ltach => 3,
            FacilityCategory::Nh => 4,
            FacilityCategory::Community => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FacilityCategory::Unc => "UNC",
            FacilityCategory::LargeNonUnc => "LARGE",
            FacilityCategory::SmallNonUnc => "SMALL",
            FacilityCategory::Ltach => "LTACH",
            FacilityCategory::Nh => "NH",
            FacilityCategory::Community => "COMMUNITY",
        }
    }

    pub fn parse(s: &str) -> Result<FacilityCategory> {
        match s.trim().to_ascii_uppercase().as_str() {
            "UNC" => Ok(FacilityCategory::Unc),
            "LARGE" => Ok(FacilityCategory::LargeNonUnc),
            "SMALL" => Ok(FacilityCategory::SmallNonUnc),
            "LTACH" => Ok(FacilityCategory::Ltach),
            "NH" => Ok(FacilityCategory::Nh),
            "COMMUNITY" => Ok(FacilityCategory::Community),
            other => Err(Error::Input(format!("unknown facility category '{other}'"))),
        }
    }
}

/// One simulated person.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: AgentId,
    pub age_years: u8,
    pub age_group: AgeGroup,
    pub county: County,
    pub comorbidity: bool,
    pub location: FacilityId,
    pub alive: bool,
    pub covid: CovidStatus,
    pub test_status: TestStatus,
    pub icu_flag: bool,
    pub ventilator_flag: bool,
    /// Day the agent's current facility stay ends.
    pub leave_day: Option<Day>,
    /// Recovery day for COVID agents not holding a bed.
    pub covid_recovery_day: Option<Day>,
    pub previous_location: Option<FacilityId>,
    /// Pending scheduled readmission (day, facility).
    pub readmission: Option<(Day, FacilityId)>,
    /// Whether the current admission was a COVID hospitalization.
    pub covid_admission: bool,
    /// Bed kind still needed by a turned-away COVID agent.
    pub unmet_covid_need: Option<BedKind>,
}

impl Agent {
    pub fn new(id: AgentId, age_years: u8, county: County, comorbidity: bool) -> Agent {
        let age_group = bin_age(age_years as i64).expect("u8 age is non-negative");
        Agent {
            id,
            age_years,
            age_group,
            county,
            comorbidity,
            location: COMMUNITY,
            alive: true,
            covid: CovidStatus::Susceptible,
            test_status: TestStatus::NotApplicable,
            icu_flag: false,
            ventilator_flag: false,
            leave_day: None,
            covid_recovery_day: None,
            previous_location: None,
            readmission: None,
            covid_admission: false,
            unmet_covid_need: None,
        }
    }

    pub fn in_community(&self) -> bool {
        self.location == COMMUNITY
    }

    /// Bed kind currently held, derived from the ICU/ventilator flags.
    pub fn held_bed_kind(&self) -> BedKind {
        if self.ventilator_flag {
            BedKind::IcuVentilator
        } else if self.icu_flag {
            BedKind::Icu
        } else {
            BedKind::NonIcu
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BedCounts {
    pub non_icu: u32,
    pub icu: u32,
    /// Ventilator-capable subset of `icu`.
    pub ventilator: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOutcome {
    Assigned,
    Full,
}

/// A location node with typed bed inventory. The community node has no
/// capacity constraints and does not track occupants.
#[derive(Debug, Clone)]
pub struct Facility {
    pub id: FacilityId,
    pub name: String,
    pub category: FacilityCategory,
    pub county: Option<County>,
    pub beds: BedCounts,
    occupants: std::collections::HashMap<AgentId, BedKind>,
    non_icu_occupied: u32,
    icu_occupied: u32,
    ventilator_occupied: u32,
}

impl Facility {
    pub fn new(
        id: FacilityId,
        name: String,
        category: FacilityCategory,
        county: Option<County>,
        beds: BedCounts,
    ) -> Facility {
        Facility {
            id,
            name,
            category,
            county,
            beds,
            occupants: std::collections::HashMap::new(),
            non_icu_occupied: 0,
            icu_occupied: 0,
            ventilator_occupied: 0,
        }
    }

    pub fn occupied(&self, kind: BedKind) -> u32 {
        match kind {
            BedKind::NonIcu => self.non_icu_occupied,
            BedKind::Icu => self.icu_occupied,
            BedKind::IcuVentilator => self.ventilator_occupied,
        }
    }

    pub fn occupant_count(&self) -> usize {
        self.occupants.len()
    }

    pub fn is_occupant(&self, agent: AgentId) -> bool {
        self.occupants.contains_key(&agent)
    }

    /// Free beds able to satisfy `need` right now.
    pub fn free_for(&self, need: BedKind) -> u32 {
        match need {
            BedKind::NonIcu => self.beds.non_icu.saturating_sub(self.non_icu_occupied),
            // Plain ICU occupants may use any ICU bed.
            BedKind::Icu => self.beds.icu.saturating_sub(self.icu_occupied),
            // Ventilator patients need a ventilator-capable ICU bed.
            BedKind::IcuVentilator => std::cmp::min(
                self.beds
                    .ventilator
                    .saturating_sub(self.ventilator_occupied),
                self.beds.icu.saturating_sub(self.icu_occupied),
            ),
        }
    }

    /// Try to place `agent` in a bed of the requested kind.
    pub fn assign_bed(&mut self, agent: AgentId, need: BedKind) -> Result<AssignOutcome> {
        if self.category == FacilityCategory::Community {
            return Ok(AssignOutcome::Assigned);
        }
        if self.occupants.contains_key(&agent) {
            return Err(Error::State(format!(
                "agent {agent} already occupies a bed at facility {}",
                self.id
            )));
        }
        if self.free_for(need) == 0 {
            return Ok(AssignOutcome::Full);
        }
        match need {
            BedKind::NonIcu => self.non_icu_occupied += 1,
            BedKind::Icu => self.icu_occupied += 1,
            BedKind::IcuVentilator => {
                self.icu_occupied += 1;
                self.ventilator_occupied += 1;
            }
        }
        self.occupants.insert(agent, need);
        Ok(AssignOutcome::Assigned)
    }

    /// Release the bed held by `agent`, returning its kind.
    pub fn release_bed(&mut self, agent: AgentId) -> Result<BedKind> {
        let kind = self.occupants.remove(&agent).ok_or_else(|| {
            Error::State(format!(
                "agent {agent} is not an occupant of facility {}",
                self.id
            ))
        })?;
        match kind {
            BedKind::NonIcu => self.non_icu_occupied -= 1,
            BedKind::Icu => self.icu_occupied -= 1,
            BedKind::IcuVentilator => {
                self.icu_occupied -= 1;
                self.ventilator_occupied -= 1;
            }
        }
        Ok(kind)
    }

    /// Capacity check: occupants never exceed beds of any kind.
    pub fn within_capacity(&self) -> bool {
        self.non_icu_occupied <= self.beds.non_icu
            && self.icu_occupied <= self.beds.icu
            && self.ventilator_occupied <= self.beds.ventilator
    }
}
