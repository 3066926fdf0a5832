//! Model parameters: disease, movement, mortality, SEIR, and run settings.
//!
//! Every value can be overridden from a TOML config file; missing keys fall
//! back to the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::FacilityCategory;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovidParams {
    /// Truncated-normal LOS for admitted COVID agents.
    pub los_mean: f64,
    pub los_std: f64,
    pub los_min: f64,
    pub los_max: f64,
    /// Days from infection to recovery for agents never admitted.
    pub infection_duration: u32,
    /// Share of mild/asymptomatic agents that seek hospitalization.
    pub ratio_to_hospital: f64,
    /// Share of infections that are tested and reported.
    pub p_tested: f64,
    /// Ventilator probability among critical ICU agents.
    pub icu_with_ventilator_p: f64,
    /// Unreported-to-reported multiplier applied to cumulative cases on day 0.
    pub initial_case_multiplier: f64,
    /// NH step-down probabilities after hospital discharge.
    pub hospital_to_nh_non_icu: f64,
    pub hospital_to_nh_icu: f64,
    /// Critical share among hospitalized COVID agents.
    pub prop_hospitalized_to_icu: f64,
    /// Age distribution of reported cases (0-49, 50-64, 65+), normalized.
    pub ages_get_covid: [f64; 3],
    /// Hospitalization probability by age for each (tested, comorbidity) cell.
    pub hosp_tested_concurrent: [f64; 3],
    pub hosp_tested_not_concurrent: [f64; 3],
    pub hosp_untested_concurrent: [f64; 3],
    pub hosp_untested_not_concurrent: [f64; 3],
    /// P(hospitalization) components feeding the Bayesian table computation.
    pub p_hosp_tested: f64,
    pub p_hosp_untested: f64,
    /// Statewide default COVID hospital census on day 0, pre-scaling.
    pub day0_census_target: f64,
}

impl Default for CovidParams {
    fn default() -> CovidParams {
        CovidParams {
            los_mean: 3.0,
            los_std: 5.0,
            los_min: 0.0,
            los_max: 50.0,
            infection_duration: 14,
            ratio_to_hospital: 0.0,
            p_tested: 0.1,
            icu_with_ventilator_p: 0.75,
            initial_case_multiplier: 10.0,
            hospital_to_nh_non_icu: 0.1,
            hospital_to_nh_icu: 0.2,
            prop_hospitalized_to_icu: 0.25,
            ages_get_covid: [0.396, 0.328, 0.276],
            hosp_tested_concurrent: [0.0, 0.4609, 0.411],
            hosp_tested_not_concurrent: [0.0367, 0.035, 0.1213],
            hosp_untested_concurrent: [0.0, 0.0651, 0.058],
            hosp_untested_not_concurrent: [0.0052, 0.0049, 0.0171],
            p_hosp_tested: 0.085,
            p_hosp_untested: 0.012,
            day0_census_target: 1000.0,
        }
    }
}

impl CovidParams {
    /// Hospitalization probability for a (tested, comorbidity, age group) cell.
    pub fn hospitalization_probability(
        &self,
        tested: bool,
        comorbidity: bool,
        age_index: usize,
    ) -> f64 {
        match (tested, comorbidity) {
            (true, true) => self.hosp_tested_concurrent[age_index],
            (true, false) => self.hosp_tested_not_concurrent[age_index],
            (false, true) => self.hosp_untested_concurrent[age_index],
            (false, false) => self.hosp_untested_not_concurrent[age_index],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeirParams {
    /// Total-to-reported infection multiplier.
    pub case_multiplier: f64,
    /// Susceptible proportion forced at forecast start.
    pub percent_susceptible: f64,
    /// Mean infectious period in days (1/gamma).
    pub length_of_infection: f64,
    /// Mean latent period in days (1/sigma).
    pub length_of_exposure: f64,
    /// Admissible bands for a sampled effective reproduction number.
    pub re_bands: [[f64; 2]; 3],
    /// Days of case history used by the growth-rate estimator.
    pub re_window_days: usize,
    /// Swap numerator/denominator in the county correction ratio.
    pub invert_county_correction: bool,
}

impl Default for SeirParams {
    fn default() -> SeirParams {
        SeirParams {
            case_multiplier: 10.0,
            percent_susceptible: 0.90,
            length_of_infection: 6.0,
            length_of_exposure: 5.0,
            re_bands: [[1.0, 1.2], [1.2, 1.4], [1.4, 1.6]],
            re_window_days: 14,
            invert_county_correction: false,
        }
    }
}

impl SeirParams {
    pub fn gamma(&self) -> f64 {
        1.0 / self.length_of_infection
    }

    pub fn sigma(&self) -> f64 {
        1.0 / self.length_of_exposure
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifeParams {
    /// Daily probability of death from natural causes, by age group.
    pub death_probability: [f64; 3],
    /// Death-rate multipliers by facility category, calibration knobs.
    pub multiplier_unc: f64,
    pub multiplier_large: f64,
    pub multiplier_small: f64,
    pub multiplier_ltach: f64,
    pub multiplier_nh: f64,
    pub multiplier_community: f64,
    /// Comorbidity prevalence by age group; under-50 agents are never eligible.
    pub comorbidity_prevalence: [f64; 3],
}

impl Default for LifeParams {
    fn default() -> LifeParams {
        LifeParams {
            death_probability: [2.7e-6, 1.64e-5, 1.1e-4],
            multiplier_unc: 7.0,
            multiplier_large: 7.0,
            multiplier_small: 7.0,
            multiplier_ltach: 12.0,
            multiplier_nh: 20.0,
            multiplier_community: 1.0,
            comorbidity_prevalence: [0.0, 0.35, 0.55],
        }
    }
}

impl LifeParams {
    pub fn multiplier(&self, category: FacilityCategory) -> f64 {
        match category {
            FacilityCategory::Unc => self.multiplier_unc,
            FacilityCategory::LargeNonUnc => self.multiplier_large,
            FacilityCategory::SmallNonUnc => self.multiplier_small,
            FacilityCategory::Ltach => self.multiplier_ltach,
            FacilityCategory::Nh => self.multiplier_nh,
            FacilityCategory::Community => self.multiplier_community,
        }
    }
}

/// Coefficients of the logistic model deciding ICU need at non-COVID admission.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcuLogistic {
    pub intercept: f64,
    pub age_group: [f64; 3],
    pub comorbidity: f64,
    pub los: f64,
}

impl Default for IcuLogistic {
    fn default() -> IcuLogistic {
        IcuLogistic {
            intercept: -2.4,
            age_group: [0.0, 0.35, 0.65],
            comorbidity: 0.5,
            los: 0.06,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovementParams {
    /// Fallback gamma LOS used when a facility has no fitted distribution.
    pub default_gamma_shape: f64,
    pub default_gamma_scale: f64,
    /// Per-facility (facility_id, shape, scale) overrides.
    pub gamma_los: Vec<(u16, f64, f64)>,
    pub icu_logistic: IcuLogistic,
    /// Conditional transfer splits between STACH types.
    pub large_to_large: f64,
    pub small_to_large: f64,
    pub non_unc_to_unc: f64,
    pub unc_to_unc: f64,
    /// Probability that a former NH resident returns to the same NH.
    pub nh_return_probability: f64,
    pub readmission_enabled: bool,
    pub readmission_probability: f64,
    pub readmission_window_days: u32,
    /// Relative importance of bed count vs distance in the large-STACH fallback.
    pub bed_weight_exponent: f64,
    pub distance_weight_exponent: f64,
}

impl Default for MovementParams {
    fn default() -> MovementParams {
        MovementParams {
            default_gamma_shape: 2.0,
            default_gamma_scale: 2.5,
            gamma_los: Vec::new(),
            icu_logistic: IcuLogistic::default(),
            large_to_large: 0.8,
            small_to_large: 0.9,
            non_unc_to_unc: 0.0322,
            unc_to_unc: 0.90,
            nh_return_probability: 0.8,
            readmission_enabled: false,
            readmission_probability: 0.10,
            readmission_window_days: 30,
            bed_weight_exponent: 1.0,
            distance_weight_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    /// Model population as a fraction of the statewide population. Facility
    /// bed counts and day-0 census targets are scaled by this factor.
    pub scale_factor: f64,
}

impl Default for RunParams {
    fn default() -> RunParams {
        RunParams { scale_factor: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    pub covid: CovidParams,
    pub seir: SeirParams,
    pub life: LifeParams,
    pub movement: MovementParams,
    pub run: RunParams,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Config(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

impl Parameters {
    pub fn validate(&self) -> Result<()> {
        let c = &self.covid;
        check_prob("covid.ratio_to_hospital", c.ratio_to_hospital)?;
        check_prob("covid.p_tested", c.p_tested)?;
        check_prob("covid.icu_with_ventilator_p", c.icu_with_ventilator_p)?;
        check_prob("covid.hospital_to_nh_non_icu", c.hospital_to_nh_non_icu)?;
        check_prob("covid.hospital_to_nh_icu", c.hospital_to_nh_icu)?;
        check_prob("covid.prop_hospitalized_to_icu", c.prop_hospitalized_to_icu)?;
        check_prob("covid.p_hosp_tested", c.p_hosp_tested)?;
        check_prob("covid.p_hosp_untested", c.p_hosp_untested)?;
        for (name, triple) in [
            ("covid.ages_get_covid", &c.ages_get_covid),
            ("covid.hosp_tested_concurrent", &c.hosp_tested_concurrent),
            (
                "covid.hosp_tested_not_concurrent",
                &c.hosp_tested_not_concurrent,
            ),
            ("covid.hosp_untested_concurrent", &c.hosp_untested_concurrent),
            (
                "covid.hosp_untested_not_concurrent",
                &c.hosp_untested_not_concurrent,
            ),
        ] {
            for p in triple.iter() {
                check_prob(name, *p)?;
            }
        }
        if !(c.los_min <= c.los_mean && c.los_mean <= c.los_max) {
            return Err(Error::Config(format!(
                "covid LOS bounds violated: min {} <= mean {} <= max {}",
                c.los_min, c.los_mean, c.los_max
            )));
        }
        if c.los_std <= 0.0 {
            return Err(Error::Config("covid.los_std must be > 0".into()));
        }
        check_prob("seir.percent_susceptible", self.seir.percent_susceptible)?;
        if self.seir.case_multiplier < 1.0 {
            return Err(Error::Config("seir.case_multiplier must be >= 1".into()));
        }
        for p in self.life.death_probability.iter() {
            check_prob("life.death_probability", *p)?;
        }
        for p in self.life.comorbidity_prevalence.iter() {
            check_prob("life.comorbidity_prevalence", *p)?;
        }
        let m = &self.movement;
        check_prob("movement.large_to_large", m.large_to_large)?;
        check_prob("movement.small_to_large", m.small_to_large)?;
        check_prob("movement.non_unc_to_unc", m.non_unc_to_unc)?;
        check_prob("movement.unc_to_unc", m.unc_to_unc)?;
        check_prob("movement.nh_return_probability", m.nh_return_probability)?;
        check_prob("movement.readmission_probability", m.readmission_probability)?;
        if m.default_gamma_shape <= 0.0 || m.default_gamma_scale <= 0.0 {
            return Err(Error::Config("gamma LOS parameters must be > 0".into()));
        }
        let s = self.run.scale_factor;
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Config(format!(
                "run.scale_factor = {s} is not in (0, 1]"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Parameters> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let params: Parameters =
            toml::from_str(&text).map_err(|e| Error::Toml(format!("{}: {e}", path.display())))?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Toml(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Parameters::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let p = Parameters::default();
        let text = toml::to_string_pretty(&p).unwrap();
        let q: Parameters = toml::from_str(&text).unwrap();
        assert_eq!(p.covid.hosp_tested_concurrent, q.covid.hosp_tested_concurrent);
        assert_eq!(p.seir.re_bands, q.seir.re_bands);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let q: Parameters = toml::from_str("[run]\nscale_factor = 0.01\n").unwrap();
        assert_eq!(q.run.scale_factor, 0.01);
        assert_eq!(q.covid.p_tested, 0.1);
    }

    #[test]
    fn bad_scale_rejected() {
        let mut p = Parameters::default();
        p.run.scale_factor = 0.0;
        assert!(p.validate().is_err());
        p.run.scale_factor = 1.5;
        assert!(p.validate().is_err());
    }
}
