use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::matcher::MatcherKind;
use crate::{Error, Result};

/// One scored caption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub scene_id: usize,
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub caption: String,
    pub score: f64,
    pub matcher: MatcherKind,
    /// The edit left the caption unchanged (nothing to replace).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unchanged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub condition: String,
    pub k: Option<usize>,
    pub matcher: MatcherKind,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub seed: u64,
    pub note: String,
    pub groups: Vec<GroupStat>,
    pub items: Vec<ProbeItem>,
}

impl ProbeReport {
    /// Builds group statistics from items; groups keep first-seen order.
    pub fn from_items(probe: &str, seed: u64, note: &str, items: Vec<ProbeItem>) -> Self {
        let mut keys: Vec<(String, Option<usize>, MatcherKind)> = Vec::new();
        for it in &items {
            let key = (it.condition.clone(), it.k, it.matcher);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let groups = keys
            .into_iter()
            .map(|(condition, k, matcher)| {
                let scores: Vec<f64> = items
                    .iter()
                    .filter(|i| i.condition == condition && i.k == k && i.matcher == matcher)
                    .map(|i| i.score)
                    .collect();
                let n = scores.len() as f64;
                let mean = scores.iter().sum::<f64>() / n;
                let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
                GroupStat { condition, k, matcher, count: scores.len(), mean, std: var.sqrt() }
            })
            .collect();
        Self { probe: probe.to_string(), seed, note: note.to_string(), groups, items }
    }

    pub fn group(&self, condition: &str, k: Option<usize>, matcher: MatcherKind) -> Option<&GroupStat> {
        self.groups
            .iter()
            .find(|g| g.condition == condition && g.k == k && g.matcher == matcher)
    }

    pub fn mean(&self, condition: &str, matcher: MatcherKind) -> Option<f64> {
        self.group(condition, None, matcher).map(|g| g.mean)
    }

    pub fn matchers(&self) -> Vec<MatcherKind> {
        let mut m: Vec<MatcherKind> = self.groups.iter().map(|g| g.matcher).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Per-item records, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
            .collect()
    }

    pub fn items_from_jsonl(text: &str) -> Result<Vec<ProbeItem>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse("probe dump", n + 1, e.to_string())))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("probe,condition,k,matcher,count,mean,std\n");
        for g in &self.groups {
            let k = g.k.map(|k| k.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{k},{},{},{:.6},{:.6}", self.probe, g.condition, g.matcher, g.count, g.mean, g.std).unwrap();
        }
        s
    }

    /// Markdown table; rows are conditions (and k), columns matcher kinds.
    pub fn to_markdown(&self) -> String {
        let matchers = self.matchers();
        let mut s = format!("### {} probe\n\n{}\n\n| condition | k |", self.probe, self.note);
        for m in &matchers {
            write!(s, " {m} ({:?}) |", m.score_kind()).unwrap();
        }
        s.push_str(" n |\n|---|---|");
        s.push_str(&"---|".repeat(matchers.len() + 1));
        s.push('\n');
        let mut rows: Vec<(String, Option<usize>)> = Vec::new();
        for g in &self.groups {
            if !rows.contains(&(g.condition.clone(), g.k)) {
                rows.push((g.condition.clone(), g.k));
            }
        }
        for (cond, k) in rows {
            let k_text = k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
            write!(s, "| {cond} | {k_text} |").unwrap();
            let mut n = 0;
            for &m in &matchers {
                match self.group(&cond, k, m) {
                    Some(g) => {
                        n = g.count;
                        write!(s, " {:.4} |", g.mean).unwrap();
                    }
                    None => s.push_str(" - |"),
                }
            }
            writeln!(s, " {n} |").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(cond: &str, score: f64) -> ProbeItem {
        ProbeItem {
            scene_id: 0,
            condition: cond.into(),
            k: None,
            caption: "a dog".into(),
            score,
            matcher: MatcherKind::Bag,
            unchanged: false,
        }
    }

    #[test]
    fn means_and_dump() {
        let r = ProbeReport::from_items("t", 3, "", vec![item("a", 1.0), item("b", 0.0), item("a", 0.0)]);
        assert_eq!(r.mean("a", MatcherKind::Bag), Some(0.5));
        assert_eq!(r.group("a", None, MatcherKind::Bag).unwrap().std, 0.5);
        assert_eq!(ProbeReport::items_from_jsonl(&r.to_jsonl()).unwrap(), r.items);
        assert!(r.to_markdown().contains("| a | - | 0.5000 | 2 |"));
    }
}
