//! Reading sex and age from short intake messages.

use crate::demographics::{parse_age, AgeUnit, DemographicsError, Sex};

/// What one intake message supplied. Either field may be absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntakeFields {
    pub sex: Option<Sex>,
    pub age: Option<(u32, AgeUnit)>,
}

/// Extracts a sex word and an age phrase such as "35 years" or "8 months".
///
/// A bare number is read as years. An unknown unit after the number is an error.
pub fn read_intake(text: &str) -> Result<IntakeFields, DemographicsError> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let mut fields = IntakeFields::default();
    for (i, w) in words.iter().enumerate() {
        if fields.sex.is_none() {
            if let Ok(sex) = w.parse::<Sex>() {
                // Single letters count only when they stand alone in the message.
                if w.len() > 1 || words.len() <= 2 {
                    fields.sex = Some(sex);
                    continue;
                }
            }
        }
        if fields.age.is_none() {
            let digits = w.find(|c: char| !c.is_ascii_digit()).unwrap_or(w.len());
            if digits > 0 {
                let phrase = if digits < w.len() {
                    w.to_string()
                } else {
                    match words.get(i + 1) {
                        Some(next) if next.parse::<AgeUnit>().is_ok() => format!("{w} {next}"),
                        Some(next) if looks_like_unit(next) => return Err(DemographicsError::UnknownAgeUnit(next.to_string())),
                        _ => w.to_string(),
                    }
                };
                fields.age = Some(parse_age(&phrase)?);
            }
        }
    }
    Ok(fields)
}

fn looks_like_unit(word: &str) -> bool {
    ["day", "days", "week", "weeks", "wk", "wks", "decade", "decades", "fortnight", "fortnights"].contains(&word)
}
