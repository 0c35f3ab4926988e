use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use convtest::pipeline::ArtifactIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// One annotator's judgement of one artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub artifact_id: String,
    pub annotator_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Seconds since the Unix epoch, set by the service.
    #[serde(default)]
    pub timestamp: u64,
}

impl Verdict {
    /// Same annotator, decision and note.
    pub fn same_as(&self, other: &Verdict) -> bool {
        self.artifact_id == other.artifact_id
            && self.annotator_id == other.annotator_id
            && self.decision == other.decision
            && self.note == other.note
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Accepted,
    Removed,
}

impl Status {
    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "pending" => Some(Status::Pending),
            "accepted" => Some(Status::Accepted),
            "removed" => Some(Status::Removed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStatus {
    pub artifact_id: String,
    pub status: Status,
    pub accepts: usize,
    pub rejects: usize,
    /// Set when the artifact was removed because an ancestor was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_via: Option<String>,
}

/// Latest verdict per (artifact, annotator), in first-submission order.
pub fn latest_verdicts(history: &[Verdict]) -> IndexMap<(String, String), &Verdict> {
    let mut out = IndexMap::new();
    for v in history {
        out.insert((v.artifact_id.clone(), v.annotator_id.clone()), v);
    }
    out
}

/// Status of every artifact in `index`.
///
/// An artifact is removed if any annotator's latest verdict rejects it or if
/// one of its ancestors is removed. It is accepted once `required` distinct
/// annotators accept it and nothing removes it. Otherwise it is pending.
pub fn compute_statuses(index: &ArtifactIndex, history: &[Verdict], required: usize) -> IndexMap<String, CurationStatus> {
    let mut counts: IndexMap<&str, (usize, usize)> = IndexMap::new();
    for v in latest_verdicts(history).values() {
        let c = counts.entry(v.artifact_id.as_str()).or_default();
        match v.decision {
            Decision::Accept => c.0 += 1,
            Decision::Reject => c.1 += 1,
        }
    }
    let own = |id: &str| counts.get(id).copied().unwrap_or_default();
    let mut out = IndexMap::new();
    let mut ids: Vec<&String> = index.entries.keys().collect();
    ids.sort();
    for id in ids {
        let (accepts, rejects) = own(id);
        let removed_via = index.ancestors(id).into_iter().find(|a| own(a).1 > 0);
        let status = if rejects > 0 || removed_via.is_some() {
            Status::Removed
        } else if accepts >= required {
            Status::Accepted
        } else {
            Status::Pending
        };
        out.insert(
            id.clone(),
            CurationStatus {
                artifact_id: id.clone(),
                status,
                accepts,
                rejects,
                removed_via: if rejects > 0 { None } else { removed_via },
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use convtest::generators::Stage;

    fn v(a: &str, who: &str, d: Decision) -> Verdict {
        Verdict {
            artifact_id: a.into(),
            annotator_id: who.into(),
            decision: d,
            note: None,
            timestamp: 0,
        }
    }

    #[test]
    fn last_write_wins() {
        let mut idx = ArtifactIndex::default();
        idx.insert("x".into(), Stage::Procedures, None);
        let h = vec![v("x", "a", Decision::Reject), v("x", "a", Decision::Accept), v("x", "b", Decision::Accept)];
        assert_eq!(compute_statuses(&idx, &h, 2)["x"].status, Status::Accepted);
    }
}
