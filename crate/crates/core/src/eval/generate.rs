//! Synthetic dataset generation through a text generator.

use crate::demographics::{parse_age, AgeUnit, Demographics, Sex};
use crate::flowchart::{Answer, Flowchart, FlowchartLibrary, Node};
use crate::gateway::prompts::{render_with, TemplateId};
use crate::gateway::{GenerationRequest, TextGenerator, GENERATION_TEMPERATURE};

use super::records::{word_count, AnswerLabel, OpeningStatementRecord, OpeningStyle, Pattern, PatientResponseRecord};
use super::EvalError;

/// Extra requests allowed after the first when a reply falls short.
pub const MAX_REGENERATIONS: u32 = 3;

/// Charts whose upper age bound is below this many months are phrased by a caregiver.
pub const PEDIATRIC_BELOW_MONTHS: u32 = 144;

pub fn is_pediatric(chart: &Flowchart) -> bool {
    chart.applicability.age_max_months.is_some_and(|m| m < PEDIATRIC_BELOW_MONTHS)
}

/// The chart summary shown to the generator.
pub fn flowchart_blurb(chart: &Flowchart) -> String {
    format!("{} - {} - {}", chart.name, chart.applicability.phrase(), chart.description)
}

pub fn opening_prompt(chart: &Flowchart, num: usize, style: OpeningStyle) -> Result<String, EvalError> {
    let (id, base_rules) = match style {
        OpeningStyle::Brief => (TemplateId::GenBriefOpening, 2),
        OpeningStyle::Detailed => (TemplateId::GenDetailedOpening, 3),
    };
    let mut extra = vec![format!("Sex and age must fit the flowchart's intended users ({}).", chart.applicability.phrase())];
    if is_pediatric(chart) {
        extra.push("The patient is a child, so write each opening statement from the perspective of a parent or caregiver.".into());
    }
    let extra_rules: String = extra.iter().enumerate().map(|(i, r)| format!(" {}. {r}", base_rules + 1 + i)).collect();
    Ok(render_with(id, &[("num", num.to_string()), ("flowchart", flowchart_blurb(chart)), ("extra_rules", extra_rules)])?)
}

pub fn response_prompt(question: &str, num: usize, pattern: Pattern, answer: Option<Answer>) -> Result<String, EvalError> {
    let answer_phrase = answer.map(|a| format!("\"{a}\" ")).unwrap_or_default();
    Ok(render_with(
        TemplateId::GenPatientResponse,
        &[
            ("num", num.to_string()),
            ("answer_phrase", answer_phrase),
            ("question", question.to_string()),
            ("pattern", pattern.summary().to_string()),
            ("pattern_definition", pattern.definition().to_string()),
        ],
    )?)
}

/// One demographics-plus-statement set as written by the generator, unvalidated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningSet {
    pub sex: String,
    pub age: String,
    pub statement: String,
}

#[derive(Default)]
struct Partial {
    sex: Option<String>,
    age: Option<String>,
    statement: Option<String>,
}

impl Partial {
    fn is_empty(&self) -> bool {
        self.sex.is_none() && self.age.is_none() && self.statement.is_none()
    }
}

fn clean_value(v: &str) -> String {
    v.trim()
        .trim_matches(|c: char| c == '*' || c.is_whitespace())
        .trim_matches(|c: char| matches!(c, '"' | '\u{201c}' | '\u{201d}'))
        .trim()
        .to_string()
}

/// Splits a generator reply into `Sex:` / `Age:` / `Opening Statement:` sets.
pub fn parse_opening_sets(reply: &str) -> Result<Vec<OpeningSet>, EvalError> {
    let mut partials: Vec<Partial> = Vec::new();
    let mut cur = Partial::default();
    let mut in_statement = false;
    for raw in reply.lines() {
        let line = raw.trim_start_matches(|c: char| !c.is_alphabetic() && c != '"');
        let lower = line.to_lowercase();
        let field = ["sex", "age", "opening statement"].into_iter().find_map(|label| {
            let rest = lower.strip_prefix(label)?;
            let rest = rest.trim_start_matches('*');
            rest.starts_with(':').then(|| (label, line.len() - rest.len() + 1))
        });
        match field {
            Some((label, at)) => {
                let value = clean_value(&line[at..]);
                in_statement = label == "opening statement";
                let slot = match label {
                    "sex" => &mut cur.sex,
                    "age" => &mut cur.age,
                    _ => &mut cur.statement,
                };
                if slot.is_some() {
                    partials.push(std::mem::take(&mut cur));
                }
                let slot = match label {
                    "sex" => &mut cur.sex,
                    "age" => &mut cur.age,
                    _ => &mut cur.statement,
                };
                *slot = Some(value);
            }
            None if raw.trim().is_empty() => in_statement = false,
            None if in_statement => {
                let s = cur.statement.get_or_insert_with(String::new);
                let more = clean_value(raw);
                if !more.is_empty() {
                    if !s.is_empty() {
                        s.push(' ');
                    }
                    s.push_str(&more);
                }
            }
            None => {}
        }
    }
    if !cur.is_empty() {
        partials.push(cur);
    }
    if partials.is_empty() {
        return Err(EvalError::UnparsableGeneration("no demographic sets found".into()));
    }
    partials
        .into_iter()
        .enumerate()
        .map(|(i, p)| match p {
            Partial { sex: Some(sex), age: Some(age), statement: Some(statement) } => Ok(OpeningSet { sex, age, statement }),
            p => {
                let missing = [("Sex", p.sex.is_none()), ("Age", p.age.is_none()), ("Opening Statement", p.statement.is_none())]
                    .into_iter()
                    .filter(|(_, m)| *m)
                    .map(|(n, _)| n)
                    .collect::<Vec<_>>()
                    .join(", ");
                Err(EvalError::UnparsableGeneration(format!("set {} lacks {missing}", i + 1)))
            }
        })
        .collect()
}

/// Checks one set against the chart and style; the error says why it was rejected.
pub fn accept_opening(set: &OpeningSet, chart: &Flowchart, style: OpeningStyle) -> Result<(Sex, u32, AgeUnit), String> {
    let sex: Sex = set.sex.parse().map_err(|e| format!("{e}"))?;
    let (value, unit) = parse_age(&set.age).map_err(|e| format!("{e}"))?;
    let d = Demographics::new(sex, value, unit).map_err(|e| format!("{e}"))?;
    if !chart.applicability.admits(d.sex, d.age_months()) {
        return Err(format!("{} {} is outside the chart's applicability", sex, d.age_phrase()));
    }
    if set.statement.is_empty() {
        return Err("empty statement".into());
    }
    if !style.admits(&set.statement) {
        return Err(format!("{style} statement has {} words", word_count(&set.statement)));
    }
    Ok((sex, value, unit))
}

/// Asks for `want` items, re-asking for the shortfall up to `MAX_REGENERATIONS` times.
fn collect_with_retries<T>(
    want: usize,
    what: &str,
    mut request: impl FnMut(usize) -> Result<Vec<Result<T, String>>, EvalError>,
) -> Result<Vec<T>, EvalError> {
    let mut kept = Vec::with_capacity(want);
    for attempt in 0..=MAX_REGENERATIONS {
        let need = want - kept.len();
        if need == 0 {
            break;
        }
        if attempt > 0 {
            log::info!("{what}: regenerating {need} item(s), attempt {attempt}");
        }
        for item in request(need)? {
            match item {
                Ok(t) if kept.len() < want => kept.push(t),
                Ok(_) => {}
                Err(why) => log::warn!("{what}: rejected generated item: {why}"),
            }
        }
    }
    if kept.len() < want {
        log::warn!("{what}: dropped {} item(s) after {MAX_REGENERATIONS} regenerations", want - kept.len());
    }
    Ok(kept)
}

/// `per_chart` opening statements of one style for every chart, in library order.
pub fn generate_opening_statements(
    lib: &FlowchartLibrary,
    generator: &dyn TextGenerator,
    per_chart: usize,
    style: OpeningStyle,
) -> Result<Vec<OpeningStatementRecord>, EvalError> {
    let mut out = Vec::new();
    for chart in lib.iter() {
        let what = format!("{} {style} openings", chart.id);
        let accepted = collect_with_retries(per_chart, &what, |need| {
            let reply = generator.generate(&GenerationRequest::new(opening_prompt(chart, need, style)?).with_temperature(GENERATION_TEMPERATURE))?;
            Ok(parse_opening_sets(&reply)?
                .into_iter()
                .map(|set| accept_opening(&set, chart, style).map(|demo| (demo, set.statement)))
                .collect())
        })?;
        out.extend(accepted.into_iter().enumerate().map(|(k, ((sex, age_value, age_unit), text))| OpeningStatementRecord {
            id: format!("{}:{}:{}:{:03}", generator.name(), chart.id, style, k + 1),
            label_flowchart_id: chart.id.clone(),
            sex,
            age_value,
            age_unit,
            style,
            text,
            generator: generator.name().to_string(),
        }));
    }
    Ok(out)
}

/// Items of a numbered list (`1. ...` or `1) ...`), in order.
pub fn parse_numbered_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter_map(|line| {
            let line = line.trim().trim_start_matches(['*', '-']).trim_start();
            let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')'])?;
            let text = clean_value(rest);
            (!text.is_empty()).then_some(text)
        })
        .collect()
}

/// The (pattern, label) cells generated for every question node.
pub fn response_cells() -> Vec<(Pattern, AnswerLabel)> {
    Pattern::ALL.into_iter().flat_map(|p| p.labels().iter().map(move |l| (p, *l))).collect()
}

fn responses_for_node(
    chart: &Flowchart,
    node: &Node,
    generator: &dyn TextGenerator,
    per_cell: usize,
) -> Result<Vec<PatientResponseRecord>, EvalError> {
    let mut out = Vec::new();
    for (pattern, label) in response_cells() {
        let what = format!("{}/{} {pattern} {label:?}", chart.id, node.id);
        let texts = collect_with_retries(per_cell, &what, |need| {
            let reply = generator.generate(&GenerationRequest::new(response_prompt(node.text(), need, pattern, label.answer())?).with_temperature(GENERATION_TEMPERATURE))?;
            let items = parse_numbered_lines(&reply);
            if items.is_empty() {
                return Err(EvalError::UnparsableGeneration(format!("{what}: no numbered responses")));
            }
            Ok(items.into_iter().map(Ok).collect())
        })?;
        out.extend(texts.into_iter().enumerate().map(|(k, text)| PatientResponseRecord {
            id: format!("{}:{}:{}:{pattern}:{label:?}:{:02}", generator.name(), chart.id, node.id, k + 1),
            flowchart_id: chart.id.clone(),
            node_id: node.id.clone(),
            question: node.text().to_string(),
            pattern,
            answer_label: label,
            text,
            generator: generator.name().to_string(),
        }));
    }
    Ok(out)
}

/// For every question node: `per_cell` responses per (pattern, label) cell, 8 cells in all.
pub fn generate_responses(lib: &FlowchartLibrary, generator: &dyn TextGenerator, per_cell: usize) -> Result<Vec<PatientResponseRecord>, EvalError> {
    let mut out = Vec::new();
    for chart in lib.iter() {
        for node in chart.questions() {
            out.extend(responses_for_node(chart, node, generator, per_cell)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_marked_up_sets() {
        let reply = "1.\n**Sex:** Male\n**Age:** 35 years\n**Opening Statement:** \"My stomach hurts.\"\n\n2. Sex: Female\nAge: 8 months\nOpening Statement: \"She has been\ncoughing all night.\"\n";
        let sets = parse_opening_sets(reply).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0], OpeningSet { sex: "Male".into(), age: "35 years".into(), statement: "My stomach hurts.".into() });
        assert_eq!(sets[1].statement, "She has been coughing all night.");
    }

    #[test]
    fn missing_fields_are_unparsable() {
        assert!(matches!(parse_opening_sets("hello"), Err(EvalError::UnparsableGeneration(_))));
        let err = parse_opening_sets("Sex: Male\nOpening Statement: \"x\"").unwrap_err();
        assert!(err.to_string().contains("Age"));
    }

    #[test]
    fn numbered_lines() {
        let items = parse_numbered_lines("Sure!\n1. \"Nope.\"\n2) No way\n\n3. Not at all.\nThanks");
        assert_eq!(items, vec!["Nope.", "No way", "Not at all."]);
    }

    #[test]
    fn eight_cells() {
        let cells = response_cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells.iter().filter(|(p, _)| p.takes_answer()).count(), 6);
    }

    #[test]
    fn response_prompt_carries_answer_and_definition() {
        let p = response_prompt("Do you have a fever?", 5, Pattern::Weak, Some(Answer::Yes)).unwrap();
        assert!(p.contains("Provide 5 distinct ways to respond \"Yes\" to the following question."));
        assert!(p.contains("Responses should be Vague or partially conclusive: Responses that lean towards"));
        let p = response_prompt("Do you have a fever?", 5, Pattern::OffTopic, None).unwrap();
        assert!(p.contains("ways to respond to the following"));
    }
}
