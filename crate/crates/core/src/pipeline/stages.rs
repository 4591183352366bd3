use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::paths::{read_artifact, write_atomic, RunPaths};
use crate::captioner::{build_vocabulary, decode_greedy, CaptionerParams, Vocabulary};
use crate::corpus::{ConceptLexicon, Dataset, SceneRecord, Split};
use crate::forensics::{mine_prefixes, pos_tag, sentence_stats, summarize_patterns, top_unigrams, PatternRule, PrefixRow, StatsReport};
use crate::matcher::{train_matcher, Matcher, MatcherKind, MatcherParams, MatcherTrainLog};
use crate::probes::{run_noun_scaling_probe, run_replacement_probe, run_template_probe, ProbeInput, ProbeReport, WordPools};
use crate::rng::stage_rng;
use crate::textmetrics::{train_ngram_lm, MetricReport};
use crate::trainer::{train_ce, train_scst, Checkpoint, LogRecord, Stage};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageName {
    GenData,
    TrainMatcher,
    TrainCe,
    TrainScst,
    Caption,
    Analyze,
    Probe,
    Report,
}

impl StageName {
    pub const ALL: [StageName; 8] = [
        StageName::GenData,
        StageName::TrainMatcher,
        StageName::TrainCe,
        StageName::TrainScst,
        StageName::Caption,
        StageName::Analyze,
        StageName::Probe,
        StageName::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::GenData => "gen-data",
            StageName::TrainMatcher => "train-matcher",
            StageName::TrainCe => "train-ce",
            StageName::TrainScst => "train-scst",
            StageName::Caption => "caption",
            StageName::Analyze => "analyze",
            StageName::Probe => "probe",
            StageName::Report => "report",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// One line of `captions/captions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub scene_id: usize,
    pub stage: Stage,
    pub caption: String,
    pub logprob: f64,
    /// Keyed by matcher kind; the scales differ and are never mixed.
    pub scores: BTreeMap<MatcherKind, f64>,
}

impl CaptionRecord {
    pub fn tokens(&self) -> Vec<String> {
        self.caption.split_whitespace().map(str::to_string).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeSummary {
    pub epoch_losses: Vec<f64>,
    pub sanity_gate: bool,
    pub best_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScstSummary {
    pub reward: MatcherKind,
    /// Mean dev score of the CE checkpoint under the reward matcher.
    pub initial_score: f64,
    pub epoch_scores: Vec<f64>,
}

impl ScstSummary {
    pub fn final_score(&self) -> f64 {
        self.epoch_scores.last().copied().unwrap_or(self.initial_score)
    }
}

/// Forensics of one caption set (test split).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionAnalysis {
    pub label: String,
    pub stats: StatsReport,
    /// Absent for the reference row.
    pub metrics: Option<MetricReport>,
    pub scores: BTreeMap<MatcherKind, f64>,
    pub prefixes: Vec<PrefixRow>,
    pub patterns: Vec<PatternRule>,
    pub unigrams: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub rows: Vec<CaptionAnalysis>,
}

impl AnalysisSummary {
    pub fn row(&self, label: &str) -> Option<&CaptionAnalysis> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// A run directory bound to its configuration.
#[derive(Clone, Debug)]
pub struct Run {
    pub config: ExperimentConfig,
    pub paths: RunPaths,
}

/// Stages executed by one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub ran: Vec<StageName>,
}

struct World {
    lexicon: ConceptLexicon,
    dataset: Dataset,
    vocab: Vocabulary,
}

impl World {
    fn split(&self, s: Split) -> Vec<&SceneRecord> {
        self.dataset.split(s).collect()
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_artifact(path)?).map_err(|e| Error::parse(&path.display().to_string(), e.line(), e.to_string()))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let name = path.display().to_string();
    read_artifact(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(&name, i + 1, e.to_string())))
        .collect()
}

const REFERENCES: &str = "references";

impl Run {
    /// Prepares `config.output_dir`. An existing directory must hold the
    /// same configuration.
    pub fn create(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let paths = RunPaths::new(&config.output_dir);
        std::fs::create_dir_all(&paths.root)?;
        let text = config.to_toml();
        match std::fs::read_to_string(paths.config()) {
            Ok(existing) => {
                let previous = ExperimentConfig::from_toml(&existing)?;
                if previous != config {
                    return Err(Error::Config(format!(
                        "{} holds a run with a different configuration",
                        paths.root.display()
                    )));
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_atomic(&paths.config(), &text)?,
            Err(e) => return Err(e.into()),
        }
        Ok(Self { config, paths })
    }

    /// Opens an existing run directory through its `config.toml`.
    pub fn open(dir: &Path) -> Result<Self> {
        let paths = RunPaths::new(dir);
        let mut config = ExperimentConfig::from_toml(&read_artifact(&paths.config())?)?;
        config.output_dir = dir.to_path_buf();
        Ok(Self { config, paths })
    }

    pub fn outputs(&self, stage: StageName) -> Vec<PathBuf> {
        let p = &self.paths;
        match stage {
            StageName::GenData => vec![p.lexicon(), p.dataset(), p.vocab()],
            StageName::TrainMatcher => vec![p.matcher(MatcherKind::Bag), p.matcher(MatcherKind::Sequence), p.matcher_log()],
            StageName::TrainCe => vec![p.captioner(Stage::Ce), p.train_log(Stage::Ce), p.train_summary(Stage::Ce)],
            StageName::TrainScst => vec![p.captioner(Stage::Scst), p.train_log(Stage::Scst), p.train_summary(Stage::Scst)],
            StageName::Caption => vec![p.captions()],
            StageName::Analyze => vec![p.analysis(), p.stats_csv(), p.patterns_md()],
            StageName::Probe => self
                .probe_names()
                .into_iter()
                .flat_map(|n| [p.probe_dump(n), p.probe_csv(n)])
                .collect(),
            StageName::Report => vec![p.report()],
        }
    }

    pub(crate) fn probe_names(&self) -> Vec<&'static str> {
        let c = &self.config.probes;
        [(c.replacement, "replacement"), (c.template, "template"), (c.noun_scaling, "noun-scaling")]
            .into_iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| n)
            .collect()
    }

    pub fn is_done(&self, stage: StageName) -> bool {
        self.outputs(stage).iter().all(|p| p.exists())
    }

    /// Runs one stage, failures wrapped with the stage name.
    pub fn run_stage(&self, stage: StageName) -> Result<()> {
        let result = match stage {
            StageName::GenData => self.gen_data(),
            StageName::TrainMatcher => self.train_matchers(),
            StageName::TrainCe => self.train_ce(),
            StageName::TrainScst => self.train_scst(),
            StageName::Caption => self.caption(),
            StageName::Analyze => self.analyze(),
            StageName::Probe => self.probe(),
            StageName::Report => super::report::write_report(self).map(|_| ()),
        };
        result.map_err(|e| Error::Stage { stage: stage.as_str().into(), source: Box::new(e) })
    }

    fn world(&self) -> Result<World> {
        let lexicon = ConceptLexicon::parse(&read_artifact(&self.paths.lexicon())?)?;
        let dataset = Dataset::read_jsonl(std::io::BufReader::new(
            std::fs::File::open(self.paths.dataset()).map_err(|_| Error::MissingArtifact(self.paths.dataset()))?,
        ))?;
        let vocab = Vocabulary::parse(&read_artifact(&self.paths.vocab())?)?;
        Ok(World { lexicon, dataset, vocab })
    }

    fn matcher(&self, kind: MatcherKind, vocab: &Vocabulary) -> Result<MatcherParams> {
        Ok(MatcherParams::parse(&read_artifact(&self.paths.matcher(kind))?, vocab)?.0)
    }

    fn checkpoint(&self, stage: Stage, vocab: &Vocabulary) -> Result<Checkpoint> {
        Checkpoint::parse(&read_artifact(&self.paths.captioner(stage))?, vocab)
    }

    fn gen_data(&self) -> Result<()> {
        let c = &self.config;
        let lexicon = ConceptLexicon::builtin();
        let dataset = Dataset::generate(&c.world, &c.grammar, &lexicon, c.seed)?;
        let vocab = build_vocabulary(dataset.split(Split::Train).flat_map(|r| r.references.iter()), c.vocab_threshold)?;
        let mut buf = Vec::new();
        dataset.write_jsonl(&mut buf)?;
        write_atomic(&self.paths.lexicon(), &lexicon.to_text())?;
        write_atomic(&self.paths.dataset(), &String::from_utf8(buf).expect("JSON is UTF-8"))?;
        write_atomic(&self.paths.vocab(), &vocab.to_text())
    }

    fn train_matchers(&self) -> Result<()> {
        let w = self.world()?;
        let (train, dev) = (w.split(Split::Train), w.split(Split::Dev));
        let mut logs: BTreeMap<MatcherKind, MatcherTrainLog> = BTreeMap::new();
        for kind in MatcherKind::ALL {
            let (m, log) = train_matcher(kind, &train, &dev, &w.vocab, &self.config.matcher, self.config.seed)?;
            write_atomic(&self.paths.matcher(kind), &m.to_text(&w.vocab, Some(log.dev_accuracy))?)?;
            logs.insert(kind, log);
        }
        write_atomic(&self.paths.matcher_log(), &to_json(&logs))
    }

    fn train_ce(&self) -> Result<()> {
        let w = self.world()?;
        let c = &self.config;
        let mut rng = stage_rng(c.seed, "captioner-init");
        let init = CaptionerParams::random(w.vocab.len(), c.captioner.hidden, w.lexicon.dim(), w.vocab.specials(), &mut rng);
        let out = train_ce(init, &w.split(Split::Train), &w.split(Split::Dev), &w.vocab, &c.train, c.seed)?;
        let summary = CeSummary { epoch_losses: out.epoch_losses, sanity_gate: out.sanity_gate, best_metric: out.best.metric };
        write_atomic(&self.paths.captioner(Stage::Ce), &out.best.to_text(&w.vocab)?)?;
        write_atomic(&self.paths.train_log(Stage::Ce), &jsonl::<LogRecord>(&out.log))?;
        write_atomic(&self.paths.train_summary(Stage::Ce), &to_json(&summary))
    }

    fn train_scst(&self) -> Result<()> {
        let w = self.world()?;
        let c = &self.config;
        let ce = self.checkpoint(Stage::Ce, &w.vocab)?;
        let reward = self.matcher(c.reward, &w.vocab)?;
        let out = train_scst(&ce, &reward, &w.split(Split::Train), &w.split(Split::Dev), &c.train, c.seed)?;
        let summary = ScstSummary { reward: c.reward, initial_score: out.initial_score, epoch_scores: out.epoch_scores };
        write_atomic(&self.paths.captioner(Stage::Scst), &out.checkpoint.to_text(&w.vocab)?)?;
        write_atomic(&self.paths.train_log(Stage::Scst), &jsonl::<LogRecord>(&out.log))?;
        write_atomic(&self.paths.train_summary(Stage::Scst), &to_json(&summary))
    }

    fn caption(&self) -> Result<()> {
        let w = self.world()?;
        let matchers = MatcherKind::ALL
            .into_iter()
            .map(|k| self.matcher(k, &w.vocab))
            .collect::<Result<Vec<_>>>()?;
        let test = w.split(Split::Test);
        let mut rows = Vec::new();
        for stage in [Stage::Ce, Stage::Scst] {
            let ck = self.checkpoint(stage, &w.vocab)?;
            let part: Vec<CaptionRecord> = test
                .par_iter()
                .map(|r| {
                    let image = r.image();
                    let out = decode_greedy(&ck.params, &image, self.config.train.max_len)?;
                    let scores = matchers.iter().map(|m| (m.kind(), m.score(&image, &out.caption).value)).collect();
                    Ok(CaptionRecord {
                        scene_id: r.scene.id,
                        stage,
                        caption: w.vocab.decode(&out.caption).join(" "),
                        logprob: out.total_logprob,
                        scores,
                    })
                })
                .collect::<Result<_>>()?;
            rows.extend(part);
        }
        write_atomic(&self.paths.captions(), &jsonl(&rows))
    }

    pub fn read_captions(&self) -> Result<Vec<CaptionRecord>> {
        read_jsonl(&self.paths.captions())
    }

    pub fn read_analysis(&self) -> Result<AnalysisSummary> {
        from_json(&self.paths.analysis())
    }

    pub fn read_ce_summary(&self) -> Result<CeSummary> {
        from_json(&self.paths.train_summary(Stage::Ce))
    }

    pub fn read_scst_summary(&self) -> Result<ScstSummary> {
        from_json(&self.paths.train_summary(Stage::Scst))
    }

    pub fn read_matcher_logs(&self) -> Result<BTreeMap<MatcherKind, MatcherTrainLog>> {
        from_json(&self.paths.matcher_log())
    }

    /// Re-aggregates a probe from its per-item dump.
    pub fn read_probe(&self, probe: &str) -> Result<ProbeReport> {
        let items = ProbeReport::items_from_jsonl(&read_artifact(&self.paths.probe_dump(probe))?)?;
        Ok(ProbeReport::from_items(probe, self.config.seed, "", items))
    }

    fn analyze(&self) -> Result<()> {
        let w = self.world()?;
        let a = &self.config.analysis;
        let captions = self.read_captions()?;
        let train_refs: Vec<Vec<String>> = w.dataset.split(Split::Train).flat_map(|r| r.references.clone()).collect();
        let lm = train_ngram_lm(&train_refs, a.lm_order)?;
        let by_id = w.dataset.by_id();
        let exclude: HashSet<&str> = a.unigram_exclude.iter().map(String::as_str).collect();

        let mut sets: Vec<(String, Vec<(usize, Vec<String>, BTreeMap<MatcherKind, f64>)>)> = Vec::new();
        let test = w.split(Split::Test);
        sets.push((REFERENCES.into(), test.iter().map(|r| (r.scene.id, r.references[0].clone(), BTreeMap::new())).collect()));
        for stage in [Stage::Ce, Stage::Scst] {
            let rows = captions
                .iter()
                .filter(|c| c.stage == stage)
                .map(|c| (c.scene_id, c.tokens(), c.scores.clone()))
                .collect();
            sets.push((stage.as_str().into(), rows));
        }

        let mut out = Vec::new();
        for (label, rows) in sets {
            let tagged: Vec<_> = rows.iter().map(|(_, t, _)| pos_tag(t, &w.lexicon)).collect();
            let tokens: Vec<Vec<String>> = rows.iter().map(|(_, t, _)| t.clone()).collect();
            let metrics = if label == REFERENCES {
                None
            } else {
                let refs = rows
                    .iter()
                    .map(|(id, _, _)| {
                        by_id.get(id).map(|r| r.references.clone()).ok_or_else(|| Error::Input(format!("unknown scene {id}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(MetricReport::evaluate(&tokens, &refs)?)
            };
            let mut scores = BTreeMap::new();
            for kind in MatcherKind::ALL {
                let vals: Vec<f64> = rows.iter().filter_map(|(_, _, s)| s.get(&kind).copied()).collect();
                if !vals.is_empty() {
                    scores.insert(kind, vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            let mut prefixes = mine_prefixes(&tagged, a.prefix_len);
            prefixes.truncate(a.top_k);
            out.push(CaptionAnalysis {
                stats: sentence_stats(&tagged, &lm, &label)?,
                label,
                metrics,
                scores,
                prefixes,
                patterns: summarize_patterns(&tagged)?,
                unigrams: top_unigrams(&tokens, a.top_k, &exclude),
            });
        }
        let summary = AnalysisSummary { rows: out };
        write_atomic(&self.paths.analysis(), &to_json(&summary))?;
        write_atomic(&self.paths.stats_csv(), &super::report::stats_csv(&summary))?;
        write_atomic(&self.paths.patterns_md(), &super::report::patterns_markdown(&summary))
    }

    fn probe(&self) -> Result<()> {
        let names = self.probe_names();
        if names.is_empty() {
            return Ok(());
        }
        let w = self.world()?;
        let c = &self.config;
        let bag = self.matcher(MatcherKind::Bag, &w.vocab)?;
        let seq = self.matcher(MatcherKind::Sequence, &w.vocab)?;
        let matchers = [&bag, &seq];
        let by_id = w.dataset.by_id();
        let inputs: Vec<ProbeInput> = self
            .read_captions()?
            .into_iter()
            .filter(|r| r.stage == Stage::Ce)
            .map(|r| {
                let rec = by_id.get(&r.scene_id).ok_or_else(|| Error::Input(format!("unknown scene {}", r.scene_id)))?;
                Ok(ProbeInput { scene_id: r.scene_id, image: rec.image(), caption: r.tokens() })
            })
            .collect::<Result<_>>()?;
        let templates = c.probes.parsed_templates()?;
        for name in names {
            let report = match name {
                "replacement" => run_replacement_probe(&matchers, &w.vocab, &WordPools::within(&w.lexicon, &w.vocab), &inputs, c.seed)?,
                "template" => run_template_probe(&matchers, &w.vocab, &w.lexicon, &inputs, &templates)?,
                _ => run_noun_scaling_probe(
                    &matchers,
                    &w.vocab,
                    &w.lexicon,
                    &w.split(Split::Test),
                    &templates,
                    c.probes.k_min..=c.probes.k_max,
                    c.seed,
                )?,
            };
            write_atomic(&self.paths.probe_dump(name), &report.to_jsonl())?;
            write_atomic(&self.paths.probe_csv(name), &report.to_csv())?;
        }
        Ok(())
    }
}

/// Runs every stage whose artifacts are missing, plus everything after the
/// first stage that runs.
pub fn run_pipeline(config: ExperimentConfig) -> Result<RunSummary> {
    let run = Run::create(config)?;
    let mut ran = Vec::new();
    for stage in StageName::ALL {
        if ran.is_empty() && run.is_done(stage) {
            continue;
        }
        run.run_stage(stage)?;
        ran.push(stage);
    }
    Ok(RunSummary { dir: run.paths.root.clone(), ran })
}

/// Regenerates the report of an existing run directory.
pub fn emit_report(dir: &Path) -> Result<PathBuf> {
    let run = Run::open(dir)?;
    super::report::write_report(&run)
}
