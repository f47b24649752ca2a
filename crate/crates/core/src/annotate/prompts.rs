use std::fs;
use std::path::Path;

use super::AnnotateError;

/// The five templates, keyed by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    EnvironmentFilter,
    BodyParts,
    Integrate,
    WholeTransition,
    IntegrateWhole,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::EnvironmentFilter,
        PromptKind::BodyParts,
        PromptKind::Integrate,
        PromptKind::WholeTransition,
        PromptKind::IntegrateWhole,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::EnvironmentFilter => "environment_filter.txt",
            PromptKind::BodyParts => "body_parts.txt",
            PromptKind::Integrate => "integrate.txt",
            PromptKind::WholeTransition => "whole_transition.txt",
            PromptKind::IntegrateWhole => "integrate_whole.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptKind::EnvironmentFilter => include_str!("../../prompts/environment_filter.txt"),
            PromptKind::BodyParts => include_str!("../../prompts/body_parts.txt"),
            PromptKind::Integrate => include_str!("../../prompts/integrate.txt"),
            PromptKind::WholeTransition => include_str!("../../prompts/whole_transition.txt"),
            PromptKind::IntegrateWhole => include_str!("../../prompts/integrate_whole.txt"),
        }
    }
}

/// Literal phrase in the integration templates that carries the count.
const COUNT_PHRASE: &str = "five distinct";
/// Explicit slot for user-supplied templates.
const COUNT_SLOT: &str = "{count}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    texts: [String; 5],
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        PromptSet { texts: PromptKind::ALL.map(|k| k.builtin().to_string()) }
    }

    /// Reads every template from `dir`; files that are absent keep the
    /// built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, AnnotateError> {
        let mut set = Self::builtin();
        for (i, kind) in PromptKind::ALL.into_iter().enumerate() {
            let path = dir.join(kind.file_name());
            match fs::read_to_string(&path) {
                Ok(text) => set.texts[i] = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(AnnotateError::io(path, e)),
            }
        }
        Ok(set)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), AnnotateError> {
        fs::create_dir_all(dir).map_err(|e| AnnotateError::io(dir, e))?;
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            fs::write(&path, self.get(kind)).map_err(|e| AnnotateError::io(path, e))?;
        }
        Ok(())
    }

    pub fn get(&self, kind: PromptKind) -> &str {
        &self.texts[PromptKind::ALL.iter().position(|k| *k == kind).unwrap()]
    }

    /// Prompt text sent alongside a composite image.
    pub fn image_prompt(&self, kind: PromptKind) -> String {
        self.get(kind).to_string()
    }

    pub fn environment_filter(&self, description: &str) -> String {
        format!("{}\n\nInstruction: {}", self.get(PromptKind::EnvironmentFilter), description)
    }

    /// Integration prompt with the count substituted and one `- ` bullet
    /// per line of `bullets`.
    pub fn integrate(&self, bullets: &[String], count: usize) -> String {
        let list: Vec<String> = bullets.iter().map(|b| format!("- {b}")).collect();
        format!("{}\n\n{}", with_count(self.get(PromptKind::Integrate), count), list.join("\n"))
    }

    pub fn integrate_whole(&self, description: &str, count: usize) -> String {
        format!("{}\n\n{}", with_count(self.get(PromptKind::IntegrateWhole), count), description)
    }
}

fn with_count(template: &str, count: usize) -> String {
    let word = count_word(count);
    template.replace(COUNT_SLOT, &word).replace(COUNT_PHRASE, &format!("{word} distinct"))
}

/// English number word for 1 to 10, digits beyond.
pub fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_have_no_trailing_newline() {
        let set = PromptSet::builtin();
        for kind in PromptKind::ALL {
            let t = set.get(kind);
            assert!(!t.is_empty());
            assert!(!t.ends_with('\n'), "{kind:?}");
        }
        assert!(set.get(PromptKind::BodyParts).contains("left shoulder, right shoulder"));
        assert!(set.get(PromptKind::EnvironmentFilter).ends_with("no additional text before or after."));
    }

    #[test]
    fn count_substitution() {
        let set = PromptSet::builtin();
        let five = set.integrate(&["Right Arm: Lift it.".into()], 5);
        assert!(five.starts_with(set.get(PromptKind::Integrate)));
        let three = set.integrate(&["Right Arm: Lift it.".into(), "Head: Tilt it.".into()], 3);
        assert!(three.contains("write three distinct, concise descriptions"));
        assert!(!three.contains("five distinct"));
        assert!(three.ends_with("\n\n- Right Arm: Lift it.\n- Head: Tilt it."));
        assert!(set.integrate_whole("Raise both arms.", 1).contains("write one distinct"));
        assert_eq!(count_word(12), "12");
    }

    #[test]
    fn directory_round_trip_and_override() {
        let dir = tempfile::tempdir().unwrap();
        PromptSet::builtin().write_dir(dir.path()).unwrap();
        assert_eq!(PromptSet::load_dir(dir.path()).unwrap(), PromptSet::builtin());
        std::fs::write(dir.path().join("integrate.txt"), "Give {count} lines.").unwrap();
        std::fs::remove_file(dir.path().join("body_parts.txt")).unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.integrate(&[], 4), "Give four lines.\n\n");
        assert_eq!(set.get(PromptKind::BodyParts), PromptSet::builtin().get(PromptKind::BodyParts));
    }
}
