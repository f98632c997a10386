//! The analyst's mapping from top-level clusters to intent names.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{LandscapeError, OTHER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    /// `None` until the analyst names the cluster.
    pub intent: Option<String>,
    pub representative_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MappingOp {
    /// Folds `from` into `into`; `from` disappears.
    Merge { into: usize, from: usize },
    Rename { id: usize, intent: String },
    SetOther { id: usize },
}

/// Live top-level clusters and the log of edits that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntentMapping {
    pub entries: BTreeMap<usize, MappingEntry>,
    pub merge_log: Vec<MappingOp>,
}

impl IntentMapping {
    /// Unnamed entries for each top cluster, with an empty log.
    pub fn initial<I, S>(taxonomy: I) -> Self
    where
        I: IntoIterator<Item = (usize, S)>,
        S: Into<String>,
    {
        IntentMapping {
            entries: taxonomy
                .into_iter()
                .map(|(id, span)| {
                    (
                        id,
                        MappingEntry {
                            intent: None,
                            representative_span: span.into(),
                        },
                    )
                })
                .collect(),
            merge_log: Vec::new(),
        }
    }

    /// Applies `ops` in order, appending them to the log. The first invalid
    /// op aborts with its position in the full log.
    pub fn apply_ops(&self, ops: &[MappingOp]) -> Result<IntentMapping, LandscapeError> {
        let mut next = self.clone();
        for op in ops {
            let position = next.merge_log.len();
            let live = |id: usize, m: &IntentMapping| {
                if m.entries.contains_key(&id) {
                    Ok(())
                } else {
                    Err(LandscapeError::UnknownCluster { position, id })
                }
            };
            match op {
                MappingOp::Merge { into, from } => {
                    live(*into, &next)?;
                    live(*from, &next)?;
                    if into == from {
                        return Err(LandscapeError::SelfMerge { position, id: *into });
                    }
                    next.entries.remove(from);
                }
                MappingOp::Rename { id, intent } => {
                    live(*id, &next)?;
                    let intent = intent.trim();
                    if intent.is_empty() {
                        return Err(LandscapeError::EmptyIntent { position });
                    }
                    next.entries.get_mut(id).expect("checked live").intent = Some(intent.to_string());
                }
                MappingOp::SetOther { id } => {
                    live(*id, &next)?;
                    next.entries.get_mut(id).expect("checked live").intent = Some(OTHER.to_string());
                }
            }
            next.merge_log.push(op.clone());
        }
        Ok(next)
    }

    /// Rebuilds a mapping from the initial taxonomy and a log.
    pub fn replay(initial: &IntentMapping, log: &[MappingOp]) -> Result<IntentMapping, LandscapeError> {
        let base = IntentMapping {
            entries: initial.entries.clone(),
            merge_log: Vec::new(),
        };
        base.apply_ops(log)
    }

    /// The live cluster that now holds `id`, following merges in log order.
    pub fn resolve(&self, id: usize) -> Option<usize> {
        let mut current = id;
        for op in &self.merge_log {
            if let MappingOp::Merge { into, from } = op {
                if *from == current {
                    current = *into;
                }
            }
        }
        self.entries.contains_key(&current).then_some(current)
    }

    pub fn intent_of(&self, top_cluster: usize) -> Option<&str> {
        self.resolve(top_cluster)
            .and_then(|id| self.entries[&id].intent.as_deref())
    }

    pub fn unmapped(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(_, e)| e.intent.is_none())
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.unmapped().is_empty()
    }

    /// Distinct non-OTHER intents carried by live clusters.
    pub fn found_intents(&self) -> BTreeSet<&str> {
        self.entries
            .values()
            .filter_map(|e| e.intent.as_deref())
            .filter(|i| *i != OTHER)
            .collect()
    }

    /// Reconciles an edited mapping with this engine-side initial mapping.
    ///
    /// The edited log is replayed first; entries whose intent still differs
    /// afterwards (hand edits of the file) become explicit rename or
    /// set-other ops so that replay keeps reproducing the entries. Entry ids
    /// that are not live after replay are reported as dangling.
    pub fn reconcile(initial: &IntentMapping, edited: &IntentMapping) -> Result<IntentMapping, LandscapeError> {
        let mut mapping = IntentMapping::replay(initial, &edited.merge_log)?;
        let dangling: Vec<usize> = edited
            .entries
            .keys()
            .filter(|id| !mapping.entries.contains_key(id))
            .copied()
            .collect();
        if !dangling.is_empty() {
            return Err(LandscapeError::Dangling(dangling));
        }
        let mut extra = Vec::new();
        for (id, entry) in &edited.entries {
            if mapping.entries[id].intent == entry.intent {
                continue;
            }
            match entry.intent.as_deref() {
                Some(OTHER) => extra.push(MappingOp::SetOther { id: *id }),
                Some(name) => extra.push(MappingOp::Rename {
                    id: *id,
                    intent: name.to_string(),
                }),
                None => {
                    return Err(LandscapeError::Unnamed {
                        id: *id,
                    })
                }
            }
        }
        if !extra.is_empty() {
            mapping = mapping.apply_ops(&extra)?;
        }
        Ok(mapping)
    }
}
