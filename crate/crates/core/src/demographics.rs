//! Patient sex and age, canonicalized to months.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DemographicsError {
    #[error("age {value} {unit:?} is outside 1..=1440 months")]
    AgeOutOfRange { value: u32, unit: AgeUnit },
    #[error("unrecognized sex {0:?} (expected male or female)")]
    UnknownSex(String),
    #[error("unrecognized age unit {0:?} (expected months or years)")]
    UnknownAgeUnit(String),
    #[error("could not read an age from {0:?}")]
    UnparsableAge(String),
}

/// Upper bound on a patient's age, in months (120 years).
pub const MAX_AGE_MONTHS: u32 = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = DemographicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "man" | "boy" => Ok(Sex::Male),
            "female" | "f" | "woman" | "girl" => Ok(Sex::Female),
            _ => Err(DemographicsError::UnknownSex(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeUnit {
    Months,
    Years,
}

impl AgeUnit {
    fn months_per_unit(self) -> u32 {
        match self {
            AgeUnit::Months => 1,
            AgeUnit::Years => 12,
        }
    }

    /// Unit label as rendered for a given value ("1 month", "3 months").
    pub fn label(self, value: u32) -> &'static str {
        match (self, value) {
            (AgeUnit::Months, 1) => "month",
            (AgeUnit::Months, _) => "months",
            (AgeUnit::Years, 1) => "year",
            (AgeUnit::Years, _) => "years",
        }
    }
}

impl FromStr for AgeUnit {
    type Err = DemographicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "month" | "months" | "mo" | "mos" => Ok(AgeUnit::Months),
            "year" | "years" | "yr" | "yrs" | "y" => Ok(AgeUnit::Years),
            _ => Err(DemographicsError::UnknownAgeUnit(s.to_string())),
        }
    }
}

/// Sex and age of the person the conversation is about.
///
/// Ages are accepted in months or years and compared in months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDemographics")]
pub struct Demographics {
    pub sex: Sex,
    pub age_value: u32,
    pub age_unit: AgeUnit,
}

#[derive(Deserialize)]
struct RawDemographics {
    sex: Sex,
    age_value: u32,
    age_unit: AgeUnit,
}

impl TryFrom<RawDemographics> for Demographics {
    type Error = DemographicsError;

    fn try_from(raw: RawDemographics) -> Result<Self, Self::Error> {
        Demographics::new(raw.sex, raw.age_value, raw.age_unit)
    }
}

impl Demographics {
    pub fn new(sex: Sex, age_value: u32, age_unit: AgeUnit) -> Result<Self, DemographicsError> {
        let months = u64::from(age_value) * u64::from(age_unit.months_per_unit());
        if months == 0 || months > u64::from(MAX_AGE_MONTHS) {
            return Err(DemographicsError::AgeOutOfRange { value: age_value, unit: age_unit });
        }
        Ok(Self { sex, age_value, age_unit })
    }

    pub fn years(sex: Sex, years: u32) -> Result<Self, DemographicsError> {
        Self::new(sex, years, AgeUnit::Years)
    }

    pub fn months(sex: Sex, months: u32) -> Result<Self, DemographicsError> {
        Self::new(sex, months, AgeUnit::Months)
    }

    pub fn age_months(&self) -> u32 {
        self.age_value * self.age_unit.months_per_unit()
    }

    /// "35 years", "1 month".
    pub fn age_phrase(&self) -> String {
        format!("{} {}", self.age_value, self.age_unit.label(self.age_value))
    }
}

/// Parses an age phrase such as "35 years", "8 months" or "2yrs".
pub fn parse_age(text: &str) -> Result<(u32, AgeUnit), DemographicsError> {
    let text = text.trim();
    let digits_end = text.find(|c: char| !c.is_ascii_digit()).unwrap_or(text.len());
    if digits_end == 0 {
        return Err(DemographicsError::UnparsableAge(text.to_string()));
    }
    let value: u32 = text[..digits_end]
        .parse()
        .map_err(|_| DemographicsError::UnparsableAge(text.to_string()))?;
    let rest = text[digits_end..].trim().trim_end_matches(['.', ',']);
    let unit = if rest.is_empty() {
        AgeUnit::Years
    } else {
        let word = rest.split_whitespace().next().unwrap_or_default();
        word.parse()?
    };
    Ok((value, unit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn months_canonicalization() {
        assert_eq!(Demographics::years(Sex::Male, 35).unwrap().age_months(), 420);
        assert_eq!(Demographics::months(Sex::Female, 3).unwrap().age_months(), 3);
    }

    #[test]
    fn zero_and_too_old_rejected() {
        assert!(Demographics::months(Sex::Male, 0).is_err());
        assert!(Demographics::years(Sex::Male, 121).is_err());
        assert!(Demographics::years(Sex::Male, 120).is_ok());
    }

    #[test]
    fn parse_age_phrases() {
        assert_eq!(parse_age("35 years").unwrap(), (35, AgeUnit::Years));
        assert_eq!(parse_age("1 month").unwrap(), (1, AgeUnit::Months));
        assert_eq!(parse_age("2yrs").unwrap(), (2, AgeUnit::Years));
        assert_eq!(parse_age("40").unwrap(), (40, AgeUnit::Years));
        assert!(parse_age("old").is_err());
        assert!(parse_age("3 fortnights").is_err());
    }

    #[test]
    fn deserialize_validates() {
        let bad = r#"{"sex":"Male","age_value":0,"age_unit":"Months"}"#;
        assert!(serde_json::from_str::<Demographics>(bad).is_err());
    }
}
