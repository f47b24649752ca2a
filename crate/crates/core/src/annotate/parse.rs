use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty reply")]
    Empty,
    #[error("line {line}: unexpected text `{text}`")]
    UnexpectedLine { line: usize, text: String },
    #[error("line {line}: unknown body part `{part}`")]
    UnknownPart { line: usize, part: String },
    #[error("line {line}: expected exactly one sentence")]
    NotOneSentence { line: usize },
    #[error("found {found} description(s), need {needed}")]
    TooFew { found: usize, needed: usize },
    #[error("descriptions {0} and {1} are identical")]
    Duplicate(usize, usize),
}

macro_rules! body_parts {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// The closed list of body parts the first stage may mention.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum BodyPart { $($variant),* }

        impl BodyPart {
            pub const ALL: [BodyPart; 23] = [$(BodyPart::$variant),*];

            /// Lower-case name, e.g. `left shoulder`.
            pub fn name(self) -> &'static str {
                match self { $(BodyPart::$variant => $name),* }
            }
        }
    };
}

body_parts! {
    Head => "head",
    Neck => "neck",
    LeftShoulder => "left shoulder",
    RightShoulder => "right shoulder",
    LeftArm => "left arm",
    RightArm => "right arm",
    LeftElbow => "left elbow",
    RightElbow => "right elbow",
    LeftWrist => "left wrist",
    RightWrist => "right wrist",
    LeftHand => "left hand",
    RightHand => "right hand",
    Torso => "torso",
    LeftHip => "left hip",
    RightHip => "right hip",
    LeftLeg => "left leg",
    RightLeg => "right leg",
    LeftKnee => "left knee",
    RightKnee => "right knee",
    LeftAnkle => "left ankle",
    RightAnkle => "right ankle",
    LeftFoot => "left foot",
    RightFoot => "right foot",
}

impl BodyPart {
    /// Case- and whitespace-insensitive lookup.
    pub fn parse(s: &str) -> Option<BodyPart> {
        let norm = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        BodyPart::ALL.into_iter().find(|p| p.name() == norm)
    }
}

impl fmt::Display for BodyPart {
    /// Title case, as the model is asked to write it.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<String> = self
            .name()
            .split(' ')
            .map(|w| {
                let mut c = w.chars();
                c.next().map(|h| h.to_uppercase().chain(c).collect()).unwrap_or_default()
            })
            .collect();
        f.write_str(&words.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyPartDelta {
    pub part: BodyPart,
    pub sentence: String,
}

impl BodyPartDelta {
    /// `Right Arm: sentence`, the bullet form fed to the second stage.
    pub fn bullet(&self) -> String {
        format!("{}: {}", self.part, self.sentence)
    }
}

fn strip_decoration(s: &str) -> &str {
    s.trim().trim_matches(|c: char| c == '*' || c == '"' || c == '\u{201c}' || c == '\u{201d}').trim()
}

/// `12. rest` -> `rest`.
fn strip_ordinal(line: &str) -> Option<&str> {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    line[digits..].strip_prefix('.').map(str::trim_start)
}

/// One sentence with a single terminal period; a missing period is added.
fn one_sentence(s: &str, line: usize) -> Result<String, ParseError> {
    let body = s.trim().trim_end_matches('.').trim_end();
    if body.is_empty() || body.contains(". ") || body.ends_with(['!', '?']) {
        return Err(ParseError::NotOneSentence { line });
    }
    Ok(format!("{body}."))
}

/// Parses `N. Part: sentence` lines. Blank lines are skipped, anything else
/// fails the whole reply.
pub fn parse_body_parts(reply: &str) -> Result<Vec<BodyPartDelta>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in reply.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_decoration(raw);
        if line.is_empty() {
            continue;
        }
        let unexpected = || ParseError::UnexpectedLine { line: line_no, text: raw.trim().to_string() };
        let rest = strip_ordinal(line).ok_or_else(unexpected)?;
        let (part, sentence) = rest.split_once(':').ok_or_else(unexpected)?;
        let part_text = strip_decoration(part);
        let part = BodyPart::parse(part_text)
            .ok_or_else(|| ParseError::UnknownPart { line: line_no, part: part_text.to_string() })?;
        let sentence = one_sentence(strip_decoration(sentence), line_no)?;
        out.push(BodyPartDelta { part, sentence });
    }
    if out.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDescriptions {
    pub descriptions: Vec<String>,
    /// Extra descriptions beyond the requested count that were discarded.
    pub truncated: usize,
}

fn description_body(line: &str) -> Option<&str> {
    let head = line.get(..11)?;
    if !head.eq_ignore_ascii_case("description") {
        return None;
    }
    let rest = line[11..].trim_start();
    let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    rest[digits..].trim_start().strip_prefix(':').map(strip_decoration)
}

/// Parses `Description N: text` lines and keeps the first `count`.
///
/// Fewer than `count` or a repeated text among the kept ones is an error.
pub fn parse_descriptions(reply: &str, count: usize) -> Result<ParsedDescriptions, ParseError> {
    let mut all = Vec::new();
    for (i, raw) in reply.lines().enumerate() {
        let line = strip_decoration(raw);
        if line.is_empty() {
            continue;
        }
        let body = description_body(line)
            .ok_or_else(|| ParseError::UnexpectedLine { line: i + 1, text: raw.trim().to_string() })?;
        if body.is_empty() {
            return Err(ParseError::UnexpectedLine { line: i + 1, text: raw.trim().to_string() });
        }
        all.push(body.to_string());
    }
    if all.len() < count {
        return Err(if all.is_empty() { ParseError::Empty } else { ParseError::TooFew { found: all.len(), needed: count } });
    }
    let truncated = all.len() - count;
    all.truncate(count);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if all[i] == all[j] {
                return Err(ParseError::Duplicate(i + 1, j + 1));
            }
        }
    }
    Ok(ParsedDescriptions { descriptions: all, truncated })
}

/// The single `Description: text` line of a whole-transition reply.
pub fn parse_whole_transition(reply: &str) -> Result<String, ParseError> {
    let mut found = None;
    for (i, raw) in reply.lines().enumerate() {
        let line = strip_decoration(raw);
        if line.is_empty() {
            continue;
        }
        match description_body(line) {
            Some(body) if !body.is_empty() && found.is_none() => found = Some(body.to_string()),
            _ => return Err(ParseError::UnexpectedLine { line: i + 1, text: raw.trim().to_string() }),
        }
    }
    found.ok_or(ParseError::Empty)
}

/// `Some(true)` for yes, `Some(false)` for no, `None` otherwise.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    let word = reply.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_body_part_line() {
        let d = parse_body_parts(
            "1. Right Arm: Lift the right arm above the head, transitioning smoothly from its resting position.",
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].part, BodyPart::RightArm);
        assert_eq!(d[0].sentence, "Lift the right arm above the head, transitioning smoothly from its resting position.");
    }

    #[test]
    fn quoted_and_bold_lines_are_accepted_in_order() {
        let reply = "\"1. Right Arm: Raise it.\"\n\n2. **left knee**: Bend the left knee slightly\n3. TORSO: Lean forward.";
        let d = parse_body_parts(reply).unwrap();
        let parts: Vec<BodyPart> = d.iter().map(|x| x.part).collect();
        assert_eq!(parts, [BodyPart::RightArm, BodyPart::LeftKnee, BodyPart::Torso]);
        assert_eq!(d[1].sentence, "Bend the left knee slightly.");
        assert_eq!(d[1].bullet(), "Left Knee: Bend the left knee slightly.");
    }

    #[test]
    fn body_part_failures() {
        assert_eq!(parse_body_parts(""), Err(ParseError::Empty));
        assert_eq!(parse_body_parts("\n  \n"), Err(ParseError::Empty));
        assert!(matches!(parse_body_parts("1. Tail: wag"), Err(ParseError::UnknownPart { line: 1, .. })));
        assert!(matches!(
            parse_body_parts("Here you go:\n1. Head: Tilt it."),
            Err(ParseError::UnexpectedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_body_parts("1. Head: Tilt it. Then nod."),
            Err(ParseError::NotOneSentence { line: 1 })
        ));
        assert!(matches!(parse_body_parts("1. Head:"), Err(ParseError::NotOneSentence { .. })));
    }

    #[test]
    fn all_parts_round_trip_through_display() {
        for p in BodyPart::ALL {
            assert_eq!(BodyPart::parse(&p.to_string()), Some(p));
        }
        assert_eq!(BodyPart::RightShoulder.to_string(), "Right Shoulder");
    }

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("Description {i}: Variant number {i}.\n")).collect()
    }

    #[test]
    fn descriptions_happy_path_and_truncation() {
        let p = parse_descriptions(&numbered(3), 3).unwrap();
        assert_eq!(p.descriptions, ["Variant number 1.", "Variant number 2.", "Variant number 3."]);
        assert_eq!(p.truncated, 0);
        let p = parse_descriptions(&numbered(5), 3).unwrap();
        assert_eq!(p.descriptions.len(), 3);
        assert_eq!(p.truncated, 2);
        let p = parse_descriptions("\"Description 1: Raise your arm.\"", 1).unwrap();
        assert_eq!(p.descriptions, ["Raise your arm."]);
    }

    #[test]
    fn description_failures() {
        assert_eq!(parse_descriptions(&numbered(2), 3), Err(ParseError::TooFew { found: 2, needed: 3 }));
        assert_eq!(parse_descriptions("", 1), Err(ParseError::Empty));
        let dup = "Description 1: Same.\nDescription 2: Other.\nDescription 3: Same.";
        assert_eq!(parse_descriptions(dup, 3), Err(ParseError::Duplicate(1, 3)));
        // a duplicate beyond the kept prefix is harmless
        assert!(parse_descriptions(dup, 2).is_ok());
        assert!(matches!(parse_descriptions("Sure!\nDescription 1: x.", 1), Err(ParseError::UnexpectedLine { .. })));
    }

    #[test]
    fn whole_transition_and_yes_no() {
        assert_eq!(parse_whole_transition("Description: Raise both arms.").unwrap(), "Raise both arms.");
        assert!(parse_whole_transition("").is_err());
        assert!(parse_whole_transition("Description: a.\nDescription: b.").is_err());
        assert_eq!(parse_yes_no("Yes."), Some(true));
        assert_eq!(parse_yes_no(" no "), Some(false));
        assert_eq!(parse_yes_no("\"No.\""), Some(false));
        assert_eq!(parse_yes_no("Maybe"), None);
        assert_eq!(parse_yes_no("Yes, because"), None);
    }
}
