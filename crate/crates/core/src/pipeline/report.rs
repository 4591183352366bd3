use std::fmt::Write as _;
use std::path::PathBuf;

use super::paths::{read_artifact, write_atomic};
use super::stages::{AnalysisSummary, Run};
use crate::captioner::Vocabulary;
use crate::matcher::MatcherKind;
use crate::probes::ProbeReport;
use crate::Result;

/// The template a matcher scores highest in a template probe: the analog
/// of giving each scorer the template built from its own patterns.
pub fn matched_template(report: &ProbeReport, kind: MatcherKind) -> Option<(String, f64)> {
    report
        .groups
        .iter()
        .filter(|g| g.matcher == kind && g.condition != "ce" && g.k.is_none())
        .max_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| b.condition.cmp(&a.condition)))
        .map(|g| (g.condition.clone(), g.mean))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub(crate) fn stats_csv(a: &AnalysisSummary) -> String {
    let mut s = String::from("captions,count,ppl,length,nouns,distinct_nouns\n");
    for r in &a.rows {
        let t = &r.stats;
        writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            r.label, t.captions, t.mean_ppl, t.mean_length, t.mean_nouns, t.mean_distinct_nouns
        )
        .unwrap();
    }
    s
}

fn scores_csv(a: &AnalysisSummary) -> String {
    let mut s = String::from("captions,bag,sequence,bleu1,bleu4,cider\n");
    for r in &a.rows {
        let m = r.metrics.as_ref();
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.label,
            opt(r.scores.get(&MatcherKind::Bag).copied()),
            opt(r.scores.get(&MatcherKind::Sequence).copied()),
            opt(m.map(|m| m.bleu1)),
            opt(m.map(|m| m.bleu4)),
            opt(m.map(|m| m.cider)),
        )
        .unwrap();
    }
    s
}

pub(crate) fn patterns_markdown(a: &AnalysisSummary) -> String {
    let mut s = String::from(
        "Patterns are chosen greedily by the number of captions they newly cover, \
         until 90% are covered or five rules are taken.\n",
    );
    for r in &a.rows {
        writeln!(s, "\n#### {}\n\n| top prefix | ratio |\n|---|---|", r.label).unwrap();
        for p in r.prefixes.iter().take(3) {
            writeln!(s, "| {} | {:.3} |", p.rendering(), p.ratio).unwrap();
        }
        s.push_str("\n| pattern | short form | coverage |\n|---|---|---|\n");
        for p in &r.patterns {
            writeln!(s, "| `{}` | `{}` | {:.3} |", p.rendering, p.short_rendering, p.coverage).unwrap();
        }
    }
    s
}

fn table_md(csv: &str) -> String {
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut s = format!("| {} |\n|{}\n", head.join(" | "), "---|".repeat(head.len()));
    for l in lines {
        writeln!(s, "| {} |", l.split(',').collect::<Vec<_>>().join(" | ")).unwrap();
    }
    s
}

fn replacement_section(r: &ProbeReport) -> (String, String) {
    let mut csv = String::from("condition,matcher,mean,count\n");
    for g in &r.groups {
        writeln!(csv, "{},{},{:.6},{}", g.condition, g.matcher, g.mean, g.count).unwrap();
    }
    let mut md = String::from("## Replacement probe\n\n");
    md.push_str("Visual nouns are swapped for other visual nouns; other words for words of the same POS.\n\n");
    md.push_str("| matcher | original | visual-replaced | other-replaced | drop (visual) | drop (other) |\n|---|---|---|---|---|---|\n");
    for kind in r.matchers() {
        let m = |c: &str| r.mean(c, kind).unwrap_or(f64::NAN);
        let (o, v, t) = (m("original"), m("visual-replaced"), m("other-replaced"));
        writeln!(md, "| {kind} | {o:.4} | {v:.4} | {t:.4} | {:.4} | {:.4} |", o - v, o - t).unwrap();
    }
    (md, csv)
}

fn template_section(r: &ProbeReport) -> (String, String) {
    let mut csv = String::from("template,matcher,ce,reconstructed,count\n");
    let mut md = String::from("## Template probe\n\n| template | matcher | CE | reconstructed | n |\n|---|---|---|---|---|\n");
    for kind in r.matchers() {
        let ce = r.mean("ce", kind).unwrap_or(f64::NAN);
        for g in r.groups.iter().filter(|g| g.matcher == kind && g.condition != "ce") {
            writeln!(csv, "{},{kind},{ce:.6},{:.6},{}", g.condition, g.mean, g.count).unwrap();
            writeln!(md, "| {} | {kind} | {ce:.4} | {:.4} | {} |", g.condition, g.mean, g.count).unwrap();
        }
    }
    md.push('\n');
    for kind in r.matchers() {
        if let Some((t, m)) = matched_template(r, kind) {
            writeln!(md, "- matched template for {kind}: `{t}` ({m:.4})").unwrap();
        }
    }
    (md, csv)
}

fn scaling_section(r: &ProbeReport) -> (String, String) {
    let mut csv = String::from("template,matcher,k,mean,count\n");
    for g in &r.groups {
        writeln!(csv, "{},{},{},{:.6},{}", g.condition, g.matcher, g.k.unwrap_or(0), g.mean, g.count).unwrap();
    }
    let md = format!("## Noun-scaling probe\n\nSeries in `noun_scaling.csv`.\n\n{}", table_md(&csv));
    (md, csv)
}

/// Renders `report/report.md` and its CSV series from the run's artifacts.
pub(crate) fn write_report(run: &Run) -> Result<PathBuf> {
    let p = &run.paths;
    let c = &run.config;
    let analysis = run.read_analysis()?;
    let vocab = Vocabulary::parse(&read_artifact(&p.vocab())?)?;
    let scst = run.read_scst_summary()?;
    let matchers = run.read_matcher_logs()?;

    let mut md = String::from("# Alignment probe report\n\n");
    writeln!(md, "- seed: {}", c.seed).unwrap();
    writeln!(md, "- scenes: {} ({} references each)", c.world.num_scenes, c.world.references_per_scene).unwrap();
    writeln!(md, "- vocabulary: {} tokens, hash `{}`", vocab.len(), vocab.hash()).unwrap();
    for (kind, log) in &matchers {
        writeln!(md, "- {kind} matcher dev accuracy: {:.4}", log.dev_accuracy).unwrap();
    }
    writeln!(
        md,
        "- SCST reward: {} matcher, dev score {:.4} (CE) -> {:.4} (SCST)",
        scst.reward,
        scst.initial_score,
        scst.final_score()
    )
    .unwrap();
    md.push_str("\nScores of the two matcher families live on different scales and are reported side by side.\n");

    let scores = scores_csv(&analysis);
    md.push_str("\n## Scores and caption metrics\n\n");
    md.push_str(&table_md(&scores));
    let stats = stats_csv(&analysis);
    md.push_str("\n## Sentence statistics\n\n");
    md.push_str(&table_md(&stats));
    md.push_str("\n## Prefixes and patterns\n\n");
    md.push_str(&patterns_markdown(&analysis));
    md.push_str("\n## Top unigrams\n\n");
    for r in &analysis.rows {
        let words: Vec<String> = r.unigrams.iter().map(|(w, n)| format!("{w} ({n})")).collect();
        writeln!(md, "- {}: {}", r.label, words.join(", ")).unwrap();
    }
    write_atomic(&p.report_csv("scores"), &scores)?;
    write_atomic(&p.report_csv("statistics"), &stats)?;

    let names = run.probe_names();
    if names.is_empty() {
        md.push_str("\n## Probes\n\nNo probes were selected for this run; probe sections are omitted.\n");
    }
    for name in names {
        let r = run.read_probe(name)?;
        let (section, csv, file) = match name {
            "replacement" => {
                let (a, b) = replacement_section(&r);
                (a, b, "replacement")
            }
            "template" => {
                let (a, b) = template_section(&r);
                (a, b, "templates")
            }
            _ => {
                let (a, b) = scaling_section(&r);
                (a, b, "noun_scaling")
            }
        };
        md.push('\n');
        md.push_str(&section);
        write_atomic(&p.report_csv(file), &csv)?;
    }
    write_atomic(&p.report(), &md)?;
    Ok(p.report())
}
