use serde::{Deserialize, Serialize};

use super::{CaseDocument, Section};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// No fact marker: the whole text becomes the fact.
    #[default]
    Lenient,
    Strict,
}

/// Start markers per section, in canonical section order.
///
/// The procedure always starts at offset 0 and takes no markers. Matching is
/// literal and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationRules {
    pub markers: Vec<(Section, Vec<String>)>,
    pub fallback: Fallback,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        let m = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        SegmentationRules {
            markers: vec![
                (Section::Procedure, vec![]),
                (
                    Section::Fact,
                    m(&["after identification", "After identification", "It was found that"]),
                ),
                (
                    Section::Reasoning,
                    m(&["The court held that", "the court held that"]),
                ),
                (Section::Decision, m(&["According to law", "Sentenced"])),
                (Section::Tail, m(&["Presiding judge", "[tail]"])),
            ],
            fallback: Fallback::Lenient,
        }
    }
}

impl SegmentationRules {
    pub fn validate(&self) -> Result<()> {
        let names: Vec<Section> = self.markers.iter().map(|(s, _)| *s).collect();
        if names != Section::ALL {
            return Err(Error::InvalidConfig(format!(
                "segmentation rules must list the five sections in canonical order, got {names:?}"
            )));
        }
        for (section, markers) in &self.markers {
            if markers.iter().any(|m| m.is_empty()) {
                return Err(Error::InvalidConfig(format!("empty marker for {section}")));
            }
            match section {
                Section::Procedure if !markers.is_empty() => {
                    return Err(Error::InvalidConfig(
                        "procedure starts the document and takes no markers".into(),
                    ))
                }
                Section::Fact | Section::Reasoning if markers.is_empty() => {
                    return Err(Error::InvalidConfig(format!("{section} needs at least one marker")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn markers_for(&self, section: Section) -> &[String] {
        self.markers
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, m)| m.as_slice())
            .unwrap_or(&[])
    }
}

/// Earliest occurrence at or after `from` of any marker; returns (offset, marker length).
fn earliest(raw: &str, from: usize, markers: &[String]) -> Option<(usize, usize)> {
    markers
        .iter()
        .filter_map(|m| raw[from..].find(m.as_str()).map(|p| (from + p, m.len())))
        .min_by_key(|&(pos, len)| (pos, std::cmp::Reverse(len)))
}

/// Splits raw case text into the five sections. The result is a partition of
/// `raw`: concatenating the sections in canonical order gives `raw` back.
pub fn segment_document(raw: &str, rules: &SegmentationRules) -> Result<CaseDocument> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    rules.validate()?;

    let mut starts: Vec<(Section, usize)> = Vec::with_capacity(4);
    let mut cursor = 0;
    for section in &Section::ALL[1..] {
        if let Some((pos, len)) = earliest(raw, cursor, rules.markers_for(*section)) {
            starts.push((*section, pos));
            cursor = pos + len;
        }
    }

    let mut doc = CaseDocument::default();
    if !starts.iter().any(|(s, _)| *s == Section::Fact) {
        return match rules.fallback {
            Fallback::Strict => Err(Error::NoFactFound),
            Fallback::Lenient => {
                doc.fact = raw.to_string();
                Ok(doc)
            }
        };
    }

    let first = starts[0].1;
    doc.procedure = raw[..first].to_string();
    for (i, (section, start)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(raw.len(), |(_, s)| *s);
        *doc.section_mut(*section) = raw[*start..end].to_string();
    }
    Ok(doc)
}
