use std::fmt;

use serde::{Deserialize, Serialize};

use crate::textproc::tokenize;

/// Facts shorter than this many tokens are not admitted for training.
pub const MIN_FACT_TOKENS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Procedure,
    Fact,
    Reasoning,
    Decision,
    Tail,
}

impl Section {
    /// Canonical document order.
    pub const ALL: [Section; 5] = [
        Section::Procedure,
        Section::Fact,
        Section::Reasoning,
        Section::Decision,
        Section::Tail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section::Procedure => "procedure",
            Section::Fact => "fact",
            Section::Reasoning => "reasoning",
            Section::Decision => "decision",
            Section::Tail => "tail",
        }
    }

    pub fn parse(s: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|sec| sec.name() == s)
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One case split into its five canonical sections plus the decision labels
/// (law articles, charge, term of penalty).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseDocument {
    pub id: String,
    pub procedure: String,
    pub fact: String,
    pub reasoning: String,
    pub decision: String,
    pub tail: String,
    pub charge_label: Option<String>,
    pub law_ids: Option<Vec<u32>>,
    pub term_months: Option<u32>,
}

impl CaseDocument {
    pub fn section(&self, section: Section) -> &str {
        match section {
            Section::Procedure => &self.procedure,
            Section::Fact => &self.fact,
            Section::Reasoning => &self.reasoning,
            Section::Decision => &self.decision,
            Section::Tail => &self.tail,
        }
    }

    pub fn section_mut(&mut self, section: Section) -> &mut String {
        match section {
            Section::Procedure => &mut self.procedure,
            Section::Fact => &mut self.fact,
            Section::Reasoning => &mut self.reasoning,
            Section::Decision => &mut self.decision,
            Section::Tail => &mut self.tail,
        }
    }

    /// Sections concatenated in canonical order.
    pub fn render(&self) -> String {
        Section::ALL.iter().map(|s| self.section(*s)).collect()
    }

    pub fn is_trainable(&self) -> bool {
        tokenize(&self.fact).len() >= MIN_FACT_TOKENS
    }
}
