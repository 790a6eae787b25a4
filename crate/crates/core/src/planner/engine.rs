use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use super::memory::{Frontier, Memory, PoolEntry, SubObjectiveStatus, Subgraph};
use super::path::{PathStep, ReasoningPath};
use super::prompts::TemplateId;
use super::{
    decode_sufficiency, is_schema_relation, Backends, PlannerConfig, PlannerError, Question,
    ReflectionDecision, RunFailure, SubObjectives, Verdict,
};
use crate::kg::{Direction, EntityId, RelationId};
use crate::llm::parse::{extract_json_object, parse_json_object, parse_list, ParseError};
use crate::llm::{normalize_bool, usage_total, UsageSummary};
use crate::trace::{EventKind, RunTrace};

const REPROMPT_SUFFIX: &str =
    "\n\nThe previous output could not be parsed. Reply again in exactly the required format.";
const FORCED_SUFFIX: &str = "\nThe exploration limit has been reached. Give your best answer from the information above instead of \"insufficient\".";

/// A path extended with a selected relation, awaiting entity selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBranch {
    pub path: ReasoningPath,
    pub relation: RelationId,
    pub direction: Direction,
}

/// Points in the loop where an observer sees the session state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Checkpoint {
    Decomposed,
    RelationsExplored,
    EntitiesExplored,
    MemoryUpdated,
    Evaluated,
    Reflected,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The returned answer; on depth exhaustion this is the forced answer
    /// even when it is hedged.
    pub answer: Option<String>,
    pub verdict: Verdict,
    pub exhausted: bool,
    pub iterations: u32,
    pub sub_objectives: SubObjectives,
    pub memory: Memory,
    pub frontier: Frontier,
    pub usage: UsageSummary,
    pub elapsed: Duration,
    pub trace: RunTrace,
}

pub struct Planner {
    backends: Backends,
    config: PlannerConfig,
}

impl Planner {
    pub fn new(backends: Backends, config: PlannerConfig) -> Result<Self, PlannerError> {
        config.validate()?;
        Ok(Self { backends, config })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn session(&self, question: &Question) -> Result<Session<'_>, PlannerError> {
        Session::new(self, question.clone())
    }

    pub fn run_question(&self, question: &Question) -> Result<RunOutcome, RunFailure> {
        self.run_question_observed(question, &mut |_, _| {})
    }

    /// Run the full loop, calling `observer` after every stage.
    pub fn run_question_observed(
        &self,
        question: &Question,
        observer: &mut dyn FnMut(Checkpoint, &Session<'_>),
    ) -> Result<RunOutcome, RunFailure> {
        let start = Instant::now();
        let mut session = self.session(question).map_err(|error| RunFailure {
            error,
            trace: RunTrace::new(),
        })?;
        match session.drive(observer, start) {
            Ok(outcome) => Ok(outcome),
            Err(error) => Err(RunFailure {
                error,
                trace: session.trace,
            }),
        }
    }
}

/// State of one question run. The individual stages are public so they can
/// be driven one at a time.
pub struct Session<'p> {
    planner: &'p Planner,
    question: Question,
    sub_objectives: SubObjectives,
    memory: Memory,
    frontier: Frontier,
    /// Paths ending at the current tail entities.
    active: Vec<ReasoningPath>,
    trace: RunTrace,
}

impl<'p> Session<'p> {
    fn new(planner: &'p Planner, question: Question) -> Result<Self, PlannerError> {
        question.validate()?;
        let mut memory = Memory::default();
        let mut frontier = Frontier::default();
        let mut active = Vec::new();
        for topic in &question.topic_entities {
            let root = ReasoningPath::new(topic.mid.clone());
            memory
                .subgraph
                .entities
                .insert(topic.mid.clone(), topic.label.clone());
            frontier.candidate_pool.insert(
                topic.mid.clone(),
                PoolEntry {
                    label: topic.label.clone(),
                    via: root.clone(),
                },
            );
            if !frontier.has_tail(&topic.mid) {
                frontier
                    .tail_entities
                    .push((topic.mid.clone(), topic.label.clone()));
                active.push(root.clone());
                memory.paths.push(root);
            }
        }
        Ok(Self {
            planner,
            sub_objectives: SubObjectives {
                items: vec![question.text.clone()],
            },
            question,
            memory,
            frontier,
            active,
            trace: RunTrace::new(),
        })
    }

    pub fn question(&self) -> &Question {
        &self.question
    }

    pub fn sub_objectives(&self) -> &SubObjectives {
        &self.sub_objectives
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn frontier(&self) -> &Frontier {
        &self.frontier
    }

    pub fn active_paths(&self) -> &[ReasoningPath] {
        &self.active
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }

    fn config(&self) -> &PlannerConfig {
        &self.planner.config
    }

    fn backends(&self) -> &Backends {
        &self.planner.backends
    }

    fn iteration(&self) -> u32 {
        self.frontier.iteration
    }

    fn drive(
        &mut self,
        observer: &mut dyn FnMut(Checkpoint, &Session<'_>),
        start: Instant,
    ) -> Result<RunOutcome, PlannerError> {
        self.decompose()?;
        observer(Checkpoint::Decomposed, self);
        let max_depth = self.config().max_depth;
        for depth in 1..=max_depth {
            self.begin_iteration(depth);
            let branches = self.explore_relations()?;
            observer(Checkpoint::RelationsExplored, self);
            let new_paths = self.explore_entities(branches)?;
            observer(Checkpoint::EntitiesExplored, self);
            self.update_memory(&new_paths)?;
            observer(Checkpoint::MemoryUpdated, self);
            let verdict = self.evaluate()?;
            observer(Checkpoint::Evaluated, self);
            if verdict.sufficient {
                let answer = verdict.answer.clone();
                return Ok(self.finish(verdict, answer, depth, false, start));
            }
            if depth < max_depth {
                self.reflect()?;
                observer(Checkpoint::Reflected, self);
            }
            self.record_frontier();
        }
        let (verdict, answer) = self.forced_answer()?;
        Ok(self.finish(verdict, answer, max_depth, true, start))
    }

    /// Advance the iteration counter. Without memory, the subgraph and the
    /// candidate pool restart empty each iteration.
    pub fn begin_iteration(&mut self, depth: u32) {
        self.frontier.iteration = depth;
        if self.config().ablations.no_memory {
            self.memory.subgraph = Subgraph::default();
            self.frontier.candidate_pool.clear();
        }
    }

    fn finish(
        &mut self,
        verdict: Verdict,
        answer: Option<String>,
        iterations: u32,
        exhausted: bool,
        start: Instant,
    ) -> RunOutcome {
        let elapsed = start.elapsed();
        let recall = self.backends().recall.config().clone();
        self.trace.push(
            EventKind::Final,
            iterations,
            json!({
                "answer": answer,
                "sufficient": verdict.sufficient,
                "reason": verdict.reason,
                "exhausted": exhausted,
                "iterations": iterations,
                "max_depth": self.config().max_depth,
                "ablations": self.config().ablations,
                "recall": {"threshold": recall.threshold, "k": recall.k},
                "seconds": elapsed.as_secs_f64(),
            }),
            None,
        );
        RunOutcome {
            answer,
            verdict,
            exhausted,
            iterations,
            sub_objectives: self.sub_objectives.clone(),
            memory: self.memory.clone(),
            frontier: self.frontier.clone(),
            usage: usage_total(&self.trace),
            elapsed,
            trace: self.trace.clone(),
        }
    }

    fn record_frontier(&mut self) {
        let payload = json!({
            "stage": "frontier",
            "tail_entities": self.frontier.tail_entities.iter()
                .map(|(e, l)| json!({"id": e, "label": l})).collect::<Vec<_>>(),
            "candidate_pool": self.frontier.candidate_pool.keys().collect::<Vec<_>>(),
        });
        self.trace
            .push(EventKind::Selection, self.iteration(), payload, None);
    }

    /// Render, call, and parse, with one re-prompt on a parse failure.
    /// Recoverable model errors give `Ok(None)`; fatal ones abort.
    fn ask<T>(
        &mut self,
        stage: &str,
        template: TemplateId,
        bindings: &[(&str, &str)],
        suffix: Option<&str>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Option<T>, PlannerError> {
        let mut prompt = self.backends().prompts.render(template, bindings)?;
        if let Some(suffix) = suffix {
            prompt.push_str(suffix);
        }
        let llm = self.backends().llm.clone();
        let generation = self.config().generation.clone();
        for attempt in 0..2 {
            let text = if attempt == 0 {
                prompt.clone()
            } else {
                format!("{prompt}{REPROMPT_SUFFIX}")
            };
            match llm.complete(&text, &generation) {
                Ok(completion) => {
                    let parsed = parse(&completion.text);
                    let mut payload = json!({
                        "stage": stage,
                        "template": template.as_str(),
                        "attempt": attempt,
                        "prompt": text,
                        "response": completion.text,
                        "latency_ms": completion.latency.as_millis() as u64,
                    });
                    if let Err(e) = &parsed {
                        payload["parse_error"] = json!(e.to_string());
                    }
                    self.trace.push(
                        EventKind::LlmCall,
                        self.iteration(),
                        payload,
                        Some(completion.usage),
                    );
                    if let Ok(value) = parsed {
                        return Ok(Some(value));
                    }
                }
                Err(err) => {
                    self.trace.push(
                        EventKind::LlmCall,
                        self.iteration(),
                        json!({
                            "stage": stage,
                            "template": template.as_str(),
                            "attempt": attempt,
                            "prompt": text,
                            "error": err.to_string(),
                        }),
                        None,
                    );
                    if err.is_fatal() {
                        return Err(err.into());
                    }
                    log::warn!("{stage}: model call failed: {err}");
                    return Ok(None);
                }
            }
        }
        Ok(None)
    }

    /// Split the question into sub-objectives; degrade to the question
    /// itself when guidance is off or the output never parses.
    pub fn decompose(&mut self) -> Result<&SubObjectives, PlannerError> {
        let question = self.question.text.clone();
        let items = if self.config().ablations.no_guidance {
            self.trace.push(
                EventKind::Selection,
                0,
                json!({"stage": "decompose", "guidance": false, "selected": [question]}),
                None,
            );
            vec![question]
        } else {
            let parsed = self.ask(
                "decompose",
                TemplateId::Decompose,
                &[("Q", &question)],
                None,
                |t| {
                    let items: Vec<String> = parse_list(t)?
                        .into_iter()
                        .filter(|s| !s.is_empty())
                        .collect();
                    if items.is_empty() {
                        Err(ParseError::NoListFound)
                    } else {
                        Ok(items)
                    }
                },
            )?;
            match parsed {
                Some(items) => {
                    self.trace.push(
                        EventKind::Selection,
                        0,
                        json!({"stage": "decompose", "selected": items}),
                        None,
                    );
                    items
                }
                None => {
                    self.trace.push(
                        EventKind::Selection,
                        0,
                        json!({
                            "stage": "decompose",
                            "degraded": true,
                            "warning": "decomposition output unusable; using the question as the only sub-objective",
                            "selected": [question],
                        }),
                        None,
                    );
                    vec![question]
                }
            }
        };
        self.sub_objectives = SubObjectives { items };
        self.memory.status = SubObjectiveStatus::unknown(self.sub_objectives.len());
        Ok(&self.sub_objectives)
    }

    fn kg_event(&mut self, payload: Value) {
        self.trace
            .push(EventKind::KgQuery, self.iteration(), payload, None);
    }

    fn label(&mut self, entity: &EntityId) -> Result<String, PlannerError> {
        if let Some(label) = self.memory.subgraph.entities.get(entity) {
            return Ok(label.clone());
        }
        let resolved = self.backends().kg.resolve_label(entity)?;
        self.kg_event(json!({"query": "label", "entity": entity, "label": resolved.label}));
        Ok(resolved.label)
    }

    /// Relation exploration: one prompt per tail entity over the relations
    /// not yet followed from it. Selections outside the candidate set are
    /// dropped.
    pub fn explore_relations(&mut self) -> Result<Vec<PathBranch>, PlannerError> {
        let tails = self.frontier.tail_entities.clone();
        let mut branches = Vec::new();
        let mut tail_relations = Vec::new();
        let subs = self.sub_objectives.render();
        for (tail, label) in tails {
            let mut candidates: Vec<(RelationId, Direction)> = Vec::new();
            for direction in Direction::BOTH {
                let found = self.backends().kg.search_relations(&tail, direction)?;
                self.kg_event(json!({
                    "query": "relations",
                    "entity": tail,
                    "direction": direction,
                    "results": found,
                }));
                for relation in found {
                    if is_schema_relation(relation.as_str()) {
                        continue;
                    }
                    let key = (tail.clone(), relation.clone(), direction);
                    if self.memory.subgraph.expanded.contains(&key) {
                        continue;
                    }
                    self.memory.subgraph.relations.insert(key);
                    candidates.push((relation, direction));
                }
            }
            candidates.sort();
            let names: Vec<String> = candidates
                .iter()
                .map(|(r, _)| r.as_str().to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if names.is_empty() {
                self.trace.push(
                    EventKind::Selection,
                    self.iteration(),
                    json!({"stage": "relations", "entity": tail, "candidates": [], "selected": [], "note": "no candidate relations"}),
                    None,
                );
                continue;
            }
            let relations = names.join("; ");
            let picked = self.ask(
                "relations",
                TemplateId::SelectRelations,
                &[
                    ("Q", &self.question.text.clone()),
                    ("Sub-Objectives", &subs),
                    ("Topic Entity", &label),
                    ("Relations", &relations),
                ],
                None,
                parse_list,
            )?;
            let Some(picked) = picked else {
                self.trace.push(
                    EventKind::Selection,
                    self.iteration(),
                    json!({"stage": "relations", "entity": tail, "candidates": names, "selected": [], "warning": "selection unusable"}),
                    None,
                );
                continue;
            };
            let mut selected: Vec<String> = Vec::new();
            let mut dropped: Vec<String> = Vec::new();
            for item in picked {
                let item = item.trim().to_string();
                if names.contains(&item) {
                    if !selected.contains(&item) {
                        selected.push(item);
                    }
                } else {
                    dropped.push(item);
                }
            }
            if let Some(n) = self.config().ablations.fixed_breadth {
                selected.truncate(n);
            }
            self.trace.push(
                EventKind::Selection,
                self.iteration(),
                json!({"stage": "relations", "entity": tail, "candidates": names, "selected": selected, "dropped": dropped}),
                None,
            );
            for name in &selected {
                for (relation, direction) in candidates.iter().filter(|(r, _)| r.as_str() == name) {
                    self.memory.subgraph.expanded.insert((
                        tail.clone(),
                        relation.clone(),
                        *direction,
                    ));
                    for path in self.active.iter().filter(|p| p.tail() == &tail) {
                        branches.push(PathBranch {
                            path: path.clone(),
                            relation: relation.clone(),
                            direction: *direction,
                        });
                        tail_relations.push((relation.clone(), *direction));
                    }
                }
            }
        }
        self.frontier.tail_relations = tail_relations;
        Ok(branches)
    }

    /// Entity exploration: gather candidates for every branch, recall-filter
    /// oversized sets, and let one prompt pick the new tail entities.
    pub fn explore_entities(
        &mut self,
        branches: Vec<PathBranch>,
    ) -> Result<Vec<ReasoningPath>, PlannerError> {
        let mut shown: Vec<(PathBranch, Vec<(EntityId, String)>)> = Vec::new();
        for branch in branches {
            let tail = branch.path.tail().clone();
            let found =
                self.backends()
                    .kg
                    .search_entities(&tail, &branch.relation, branch.direction)?;
            self.kg_event(json!({
                "query": "entities",
                "entity": tail,
                "relation": branch.relation,
                "direction": branch.direction,
                "results": found,
            }));
            let mut labeled = Vec::with_capacity(found.len());
            for entity in found {
                let label = self.label(&entity)?;
                let step = PathStep {
                    from: tail.clone(),
                    relation: branch.relation.clone(),
                    to: entity.clone(),
                    direction: branch.direction,
                };
                self.memory.subgraph.triples.insert(step.triplet());
                self.memory
                    .subgraph
                    .entities
                    .insert(entity.clone(), label.clone());
                if !self.frontier.candidate_pool.contains_key(&entity) {
                    if let Ok(via) = branch.path.extended(step) {
                        self.frontier.candidate_pool.insert(
                            entity.clone(),
                            PoolEntry {
                                label: label.clone(),
                                via,
                            },
                        );
                    }
                }
                labeled.push((entity, label));
            }
            let total = labeled.len();
            let kept = self
                .backends()
                .recall
                .filter(&self.question.text, labeled)?;
            if kept.len() < total {
                self.trace.push(
                    EventKind::Selection,
                    self.iteration(),
                    json!({
                        "stage": "recall",
                        "entity": tail,
                        "relation": branch.relation,
                        "candidates": total,
                        "kept": kept.iter().map(|(e, _)| e).collect::<Vec<_>>(),
                    }),
                    None,
                );
            }
            if !kept.is_empty() {
                shown.push((branch, kept));
            }
        }

        let parents: Vec<ReasoningPath> = shown.iter().map(|(b, _)| b.path.clone()).collect();
        let new_paths = if shown.is_empty() {
            Vec::new()
        } else {
            self.select_entities(&shown)?
        };

        let mut tails: Vec<(EntityId, String)> = Vec::new();
        for path in &new_paths {
            let tail = path.tail();
            if !tails.iter().any(|(e, _)| e == tail) {
                tails.push((tail.clone(), self.memory.subgraph.label_of(tail)));
            }
        }
        self.frontier.tail_entities = tails;
        self.active = new_paths.clone();

        if self.config().ablations.no_memory {
            self.memory.paths = new_paths.clone();
        } else {
            let extended: Vec<&ReasoningPath> = parents
                .iter()
                .filter(|p| new_paths.iter().any(|n| p.is_prefix_of(n)))
                .collect();
            self.memory.paths.retain(|p| !extended.contains(&p));
            for path in &new_paths {
                if !self.memory.paths.contains(path) {
                    self.memory.paths.push(path.clone());
                }
            }
        }
        Ok(new_paths)
    }

    fn select_entities(
        &mut self,
        shown: &[(PathBranch, Vec<(EntityId, String)>)],
    ) -> Result<Vec<ReasoningPath>, PlannerError> {
        let mut lines: Vec<String> = Vec::new();
        for line in shown.iter().map(|(branch, cands)| {
            let list = cands
                .iter()
                .map(|(_, l)| l.as_str())
                .collect::<Vec<_>>()
                .join(", ");
            let anchor = self.memory.subgraph.label_of(branch.path.tail());
            match branch.direction {
                Direction::Outgoing => format!("({anchor}, {}, [{list}])", branch.relation),
                Direction::Incoming => format!("([{list}], {}, {anchor})", branch.relation),
            }
        }) {
            // Paths that meet at the same tail yield identical lines.
            if !lines.contains(&line) {
                lines.push(line);
            }
        }
        let triplets = lines.join("\n");
        let question = self.question.text.clone();
        let picked = self.ask(
            "entities",
            TemplateId::SelectEntities,
            &[("Q", &question), ("Triplets", &triplets)],
            None,
            parse_list,
        )?;
        let all: Vec<(EntityId, String)> =
            shown.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
        let Some(picked) = picked else {
            self.trace.push(
                EventKind::Selection,
                self.iteration(),
                json!({"stage": "entities", "selected": [], "warning": "selection unusable"}),
                None,
            );
            return Ok(Vec::new());
        };
        let (mut selected, dropped) = match_selection(&picked, &all);
        if let Some(n) = self.config().ablations.fixed_breadth {
            selected.truncate(n);
        }
        let mut new_paths = Vec::new();
        let mut cycles = Vec::new();
        for entity in &selected {
            for (branch, cands) in shown {
                if !cands.iter().any(|(e, _)| e == entity) {
                    continue;
                }
                let step = PathStep {
                    from: branch.path.tail().clone(),
                    relation: branch.relation.clone(),
                    to: entity.clone(),
                    direction: branch.direction,
                };
                match branch.path.extended(step) {
                    Ok(path) => {
                        if !new_paths.contains(&path) {
                            new_paths.push(path);
                        }
                    }
                    Err(_) => cycles.push(entity.clone()),
                }
            }
        }
        self.trace.push(
            EventKind::Selection,
            self.iteration(),
            json!({
                "stage": "entities",
                "candidates": all.iter().map(|(e, _)| e).collect::<Vec<_>>(),
                "selected": selected,
                "dropped": dropped,
                "cycle_dropped": cycles,
            }),
            None,
        );
        Ok(new_paths)
    }

    /// Distinct triples along the known paths, one per line, in path order.
    fn render_triplets(&self) -> String {
        let mut seen = BTreeSet::new();
        let mut lines = Vec::new();
        for path in &self.memory.paths {
            for step in &path.steps {
                let t = step.triplet();
                if seen.insert(t.clone()) {
                    lines.push(format!(
                        "({}, {}, {})",
                        self.memory.subgraph.label_of(&t.subject),
                        t.relation,
                        self.memory.subgraph.label_of(&t.object)
                    ));
                }
            }
        }
        lines.join("\n")
    }

    /// Refresh sub-objective status from the current paths. Keys the model
    /// leaves out keep their previous value.
    pub fn update_memory(&mut self, new_paths: &[ReasoningPath]) -> Result<&Memory, PlannerError> {
        let n = self.sub_objectives.len();
        if self.config().ablations.no_memory {
            self.memory.status = SubObjectiveStatus::unknown(n);
            self.trace.push(
                EventKind::MemoryUpdate,
                self.iteration(),
                json!({"status": self.memory.status.entries, "ablated": true}),
                None,
            );
            return Ok(&self.memory);
        }
        if new_paths.is_empty() {
            self.trace.push(
                EventKind::MemoryUpdate,
                self.iteration(),
                json!({"status": self.memory.status.entries, "skipped": "no new paths"}),
                None,
            );
            return Ok(&self.memory);
        }
        let question = self.question.text.clone();
        let subs = self.sub_objectives.render();
        let status = self.memory.status.render();
        let triplets = self.render_triplets();
        let parsed = self.ask(
            "memory",
            TemplateId::UpdateMemory,
            &[
                ("Q", &question),
                ("Sub-Objectives", &subs),
                ("Memory", &status),
                ("Knowledge Triplets", &triplets),
            ],
            None,
            extract_json_object,
        )?;
        let mut updated = Vec::new();
        let mut warning = None;
        match parsed {
            Some(map) => {
                for (key, value) in map {
                    let Some(index) = status_index(&key).filter(|i| (1..=n).contains(i)) else {
                        continue;
                    };
                    self.memory.status.entries[index - 1] = value_text(&value);
                    updated.push(index);
                }
            }
            None => warning = Some("status output unusable; keeping previous status"),
        }
        updated.sort_unstable();
        self.trace.push(
            EventKind::MemoryUpdate,
            self.iteration(),
            json!({"status": self.memory.status.entries, "updated": updated, "warning": warning}),
            None,
        );
        Ok(&self.memory)
    }

    fn answer_prompt(
        &mut self,
        suffix: Option<&str>,
    ) -> Result<Option<Map<String, Value>>, PlannerError> {
        let question = self.question.text.clone();
        let status = self.memory.status.render();
        let triplets = self.render_triplets();
        self.ask(
            if suffix.is_some() {
                "forced_answer"
            } else {
                "answer"
            },
            TemplateId::Answer,
            &[
                ("Q", &question),
                ("Memory", &status),
                ("Knowledge Triplets", &triplets),
            ],
            suffix,
            |t| parse_json_object(t, &["A", "R"]),
        )
    }

    /// Ask whether the collected facts answer the question.
    pub fn evaluate(&mut self) -> Result<Verdict, PlannerError> {
        let verdict = match self.answer_prompt(None)? {
            Some(map) => {
                let answer = answer_text(&map["A"]);
                let reason = value_text(&map["R"]);
                if decode_sufficiency(&answer) {
                    Verdict {
                        sufficient: true,
                        answer: Some(answer),
                        reason,
                    }
                } else {
                    Verdict::insufficient(reason)
                }
            }
            None => Verdict::insufficient("answer output unusable"),
        };
        self.trace.push(
            EventKind::Verdict,
            self.iteration(),
            serde_json::to_value(&verdict).expect("verdict serializes"),
            None,
        );
        Ok(verdict)
    }

    fn forced_answer(&mut self) -> Result<(Verdict, Option<String>), PlannerError> {
        let (verdict, answer) = match self.answer_prompt(Some(FORCED_SUFFIX))? {
            Some(map) => {
                let answer = answer_text(&map["A"]);
                let reason = value_text(&map["R"]);
                let returned = (!answer.trim().is_empty()).then(|| answer.clone());
                let verdict = if decode_sufficiency(&answer) {
                    Verdict {
                        sufficient: true,
                        answer: Some(answer),
                        reason,
                    }
                } else {
                    Verdict::insufficient(reason)
                };
                (verdict, returned)
            }
            None => (Verdict::insufficient("answer output unusable"), None),
        };
        let mut payload = serde_json::to_value(&verdict).expect("verdict serializes");
        payload["forced"] = json!(true);
        payload["exhausted"] = json!(true);
        self.trace
            .push(EventKind::Verdict, self.iteration(), payload, None);
        Ok((verdict, answer))
    }

    /// Decide whether to add backtracked entities to the next frontier, and
    /// which ones. Backtrack targets come from the candidate pool and never
    /// include current tail entities.
    pub fn reflect(&mut self) -> Result<ReflectionDecision, PlannerError> {
        let decision = if self.config().ablations.no_reflection {
            ReflectionDecision {
                add: false,
                reason: "reflection disabled".into(),
                backtrack_entities: Vec::new(),
            }
        } else {
            self.reflect_with_model()?
        };
        let mut added = Vec::new();
        for entity in &decision.backtrack_entities {
            let entry = &self.frontier.candidate_pool[entity];
            self.frontier
                .tail_entities
                .push((entity.clone(), entry.label.clone()));
            self.active.push(entry.via.clone());
            added.push(json!({"id": entity, "label": entry.label}));
        }
        self.trace.push(
            EventKind::Reflection,
            self.iteration(),
            json!({
                "add": decision.add,
                "reason": decision.reason,
                "backtrack": added,
                "ablated": self.config().ablations.no_reflection,
            }),
            None,
        );
        Ok(decision)
    }

    fn reflect_with_model(&mut self) -> Result<ReflectionDecision, PlannerError> {
        let question = self.question.text.clone();
        let tails = serde_json::to_string(&self.frontier.tail_labels()).expect("labels serialize");
        let status = self.memory.status.render();
        let triplets = self.render_triplets();
        let first = self.ask(
            "reflect",
            TemplateId::Reflect,
            &[
                ("Q", &question),
                ("Entities set to be retrieved", &tails),
                ("Memory", &status),
                ("Knowledge Triplets", &triplets),
            ],
            None,
            |t| parse_json_object(t, &["Add", "Reason"]),
        )?;
        let Some(first) = first else {
            return Ok(ReflectionDecision {
                add: false,
                reason: "reflection output unusable".into(),
                backtrack_entities: Vec::new(),
            });
        };
        let reason = value_text(&first["Reason"]);
        if !normalize_bool(&first["Add"]).unwrap_or(false) {
            return Ok(ReflectionDecision {
                add: false,
                reason,
                backtrack_entities: Vec::new(),
            });
        }

        let candidates: Vec<(EntityId, String)> = self
            .frontier
            .candidate_pool
            .iter()
            .filter(|(e, _)| !self.frontier.has_tail(e))
            .map(|(e, entry)| (e.clone(), entry.label.clone()))
            .collect();
        if candidates.is_empty() {
            return Ok(ReflectionDecision {
                add: false,
                reason: format!("{reason} (no backtrack candidates)"),
                backtrack_entities: Vec::new(),
            });
        }
        let listed = serde_json::to_string(
            &candidates
                .iter()
                .map(|(_, l)| l.as_str())
                .collect::<Vec<_>>(),
        )
        .expect("labels serialize");
        let picked = self.ask(
            "backtrack",
            TemplateId::SelectBacktrack,
            &[
                ("Q", &question),
                ("Reason", &reason),
                ("Candidate Entities", &listed),
                ("Memory", &status),
            ],
            None,
            parse_list,
        )?;
        let (selected, dropped) = match picked {
            Some(p) => match_selection(&p, &candidates),
            None => (Vec::new(), Vec::new()),
        };
        if selected.is_empty() {
            log::warn!("reflection asked to backtrack but named no retrievable entity");
            return Ok(ReflectionDecision {
                add: false,
                reason: format!("{reason} (no valid backtrack entity; dropped {dropped:?})"),
                backtrack_entities: Vec::new(),
            });
        }
        Ok(ReflectionDecision {
            add: true,
            reason,
            backtrack_entities: selected,
        })
    }
}

/// Map model-chosen labels (or raw ids) onto candidates. Returns the matched
/// ids in selection order, deduplicated, and the items that matched nothing.
fn match_selection(
    picked: &[String],
    candidates: &[(EntityId, String)],
) -> (Vec<EntityId>, Vec<String>) {
    let mut selected: Vec<EntityId> = Vec::new();
    let mut dropped = Vec::new();
    for item in picked {
        let item = item.trim();
        let hit = candidates
            .iter()
            .find(|(_, l)| l == item)
            .or_else(|| {
                candidates
                    .iter()
                    .find(|(_, l)| l.eq_ignore_ascii_case(item))
            })
            .or_else(|| candidates.iter().find(|(e, _)| e.as_str() == item));
        match hit {
            Some((entity, _)) => {
                if !selected.contains(entity) {
                    selected.push(entity.clone());
                }
            }
            None => dropped.push(item.to_string()),
        }
    }
    (selected, dropped)
}

/// `"1"`, `"#1"`, `"s1"`, `"Sub-objective 1"` all name status entry 1.
fn status_index(key: &str) -> Option<usize> {
    let digits: String = key
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

fn value_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// The answer field; a list-valued answer yields its first element.
fn answer_text(value: &Value) -> String {
    match value {
        Value::Array(items) => items.first().map(value_text).unwrap_or_default(),
        other => value_text(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    #[test]
    fn selection_matching() {
        let cands = vec![
            (e("m.1"), "Panama".to_string()),
            (e("m.2"), "Panama City".to_string()),
        ];
        let picked = vec![
            "panama city".to_string(),
            "Panama".to_string(),
            "m.2".to_string(),
            "Atlantis".to_string(),
        ];
        let (sel, dropped) = match_selection(&picked, &cands);
        assert_eq!(sel, vec![e("m.2"), e("m.1")]);
        assert_eq!(dropped, vec!["Atlantis"]);
    }

    #[test]
    fn status_keys() {
        assert_eq!(status_index("1"), Some(1));
        assert_eq!(status_index("#2"), Some(2));
        assert_eq!(status_index("Sub-objective 10"), Some(10));
        assert_eq!(status_index("A"), None);
    }

    #[test]
    fn answer_values() {
        assert_eq!(answer_text(&json!(["a", "b"])), "a");
        assert_eq!(answer_text(&json!([])), "");
        assert_eq!(answer_text(&json!(null)), "");
        assert_eq!(answer_text(&json!(1999)), "1999");
        assert_eq!(answer_text(&json!(" x ")), "x");
    }
}
