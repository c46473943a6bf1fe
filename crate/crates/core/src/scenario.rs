//! Scripted stub scenarios: given what each pair "should" produce, build the
//! stub fixtures that make the agents produce exactly that.
//!
//! Every rule is keyed on the pair's title lines as they appear in the user
//! prompt, so scripts for different pairs never answer each other's prompts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::grammar::render_record;
use crate::agents::{
    TAG_ANSWER, TAG_FEW_SHOT, TAG_QUESTIONS, TAG_SUFFICIENCY, TAG_VERDICT, TAG_WEB_SEARCH,
    TAG_ZERO_SHOT,
};
use crate::clock::LogicalClock;
use crate::eval::shipped_exemplars;
use crate::model::{MatchDimension, MatchLabel};
use crate::pipeline::Engine;
use crate::provider::{
    CompletionFixture, FixtureHit, HashEmbedder, Providers, SearchFixture, StubMode, StubRule,
    StubScript,
};
use crate::review::ReviewQueue;
use crate::traces::{StoreMeta, TraceStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedQuestion {
    pub dimension: MatchDimension,
    pub text: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPair {
    pub base: String,
    pub compared: String,
    pub questions: Vec<ScriptedQuestion>,
    /// Verdict of the q2k synthesizer.
    pub label: MatchLabel,
    pub confidence: f64,
    /// What the sufficiency judge says when asked on behalf of this pair.
    pub reuse_ok: bool,
    /// Labels of the zero-shot, few-shot and web-search baselines.
    pub zero_shot: MatchLabel,
    pub few_shot: MatchLabel,
    pub web_search: MatchLabel,
}

impl ScriptedPair {
    /// A pair whose every scripted verdict is `label` with confidence 0.9.
    pub fn agreeing(base: &str, compared: &str, label: MatchLabel) -> Self {
        Self {
            base: base.to_string(),
            compared: compared.to_string(),
            questions: Vec::new(),
            label,
            confidence: 0.9,
            reuse_ok: true,
            zero_shot: label,
            few_shot: label,
            web_search: label,
        }
    }

    pub fn question(mut self, dimension: MatchDimension, text: &str, answer: &str) -> Self {
        self.questions.push(ScriptedQuestion {
            dimension,
            text: text.to_string(),
            answer: answer.to_string(),
        });
        self
    }
}

/// The two title lines every pair-level prompt carries.
pub fn pair_needle(base: &str, compared: &str) -> String {
    format!("Base product: {base}\nCompared product: {compared}\n")
}

pub fn questions_record<S: AsRef<str>>(items: &[(MatchDimension, S)]) -> String {
    let mut fields = vec![("count".to_string(), items.len().to_string())];
    for (i, (d, t)) in items.iter().enumerate() {
        fields.push((format!("q{}.dimension", i + 1), d.token().to_string()));
        fields.push((format!("q{}.text", i + 1), t.as_ref().to_string()));
    }
    render_record(fields.iter().map(|(k, v)| (k.as_str(), v.clone())))
}

/// A verdict record. Non-equivalent verdicts mark `mismatch_on` as the
/// differing dimension; everything else matches.
pub fn verdict_record(label: MatchLabel, confidence: f64, mismatch_on: Option<MatchDimension>) -> String {
    let mut fields = vec![(
        "label",
        match label {
            MatchLabel::Equivalent => "equivalent",
            MatchLabel::NonEquivalent => "non_equivalent",
        }
        .to_string(),
    )];
    for d in MatchDimension::ALL {
        let status = if label == MatchLabel::NonEquivalent && Some(d) == mismatch_on {
            "mismatch"
        } else {
            "match"
        };
        fields.push((d.token(), status.to_string()));
    }
    fields.push(("confidence", format!("{confidence}")));
    fields.push((
        "rationale",
        match label {
            MatchLabel::Equivalent => "all attributes agree".to_string(),
            MatchLabel::NonEquivalent => format!(
                "listings differ on {}",
                mismatch_on.map_or("an attribute", |d| d.label())
            ),
        },
    ));
    render_record(fields)
}

pub fn sufficiency_record(ok: bool) -> String {
    render_record([
        ("sufficient", if ok { "yes" } else { "no" }.to_string()),
        (
            "reason",
            if ok {
                "stored answers settle every current question"
            } else {
                "stored answers do not cover the current questions"
            }
            .to_string(),
        ),
    ])
}

fn rule(tag: &str, needles: Vec<String>, response: String) -> CompletionFixture {
    CompletionFixture {
        digest: None,
        rule: StubRule {
            tag: Some(tag.to_string()),
            contains: needles,
            response,
        },
    }
}

/// Search result every lenient stub search returns.
pub fn default_hit() -> FixtureHit {
    FixtureHit {
        url: "https://catalog.example/search".into(),
        title: "Product catalog".into(),
        snippet: "Manufacturer catalog entry for the listed product.".into(),
    }
}

/// Build a stub script for `pairs`. Searches are lenient and always return
/// [`default_hit`].
pub fn stub_script(pairs: &[ScriptedPair]) -> StubScript {
    let mut completion = Vec::new();
    for p in pairs {
        let needle = pair_needle(&p.base, &p.compared);
        let items: Vec<(MatchDimension, &str)> =
            p.questions.iter().map(|q| (q.dimension, q.text.as_str())).collect();
        completion.push(rule(TAG_QUESTIONS, vec![needle.clone()], questions_record(&items)));
        for q in &p.questions {
            completion.push(rule(
                TAG_ANSWER,
                vec![format!("Question: {}\n", q.text), needle.clone()],
                render_record([("answer", q.answer.clone())]),
            ));
        }
        let mismatch = p.questions.first().map(|q| q.dimension);
        completion.push(rule(
            TAG_VERDICT,
            vec![needle.clone()],
            verdict_record(p.label, p.confidence, mismatch),
        ));
        completion.push(rule(TAG_SUFFICIENCY, vec![needle.clone()], sufficiency_record(p.reuse_ok)));
        for (tag, label) in [
            (TAG_ZERO_SHOT, p.zero_shot),
            (TAG_FEW_SHOT, p.few_shot),
            (TAG_WEB_SEARCH, p.web_search),
        ] {
            completion.push(rule(tag, vec![needle.clone()], verdict_record(label, 0.8, mismatch)));
        }
    }
    StubScript {
        search_mode: StubMode::Lenient,
        completion,
        search: vec![SearchFixture {
            query: None,
            results: vec![default_hit()],
        }],
    }
}

pub const STUB_DIM: usize = 64;
pub const STUB_SEED: u64 = 42;

/// Providers answering from `script`, with deterministic hash embeddings.
pub fn stub_providers(script: &StubScript) -> Providers {
    Providers::new(
        Arc::new(script.chat()),
        Arc::new(HashEmbedder::new(STUB_DIM, STUB_SEED)),
        Arc::new(script.search_engine()),
    )
}

/// Engine over an in-memory store and queue with a logical clock.
pub fn in_memory_engine(providers: Providers) -> Engine {
    let clock = Arc::new(LogicalClock::new());
    let store = Arc::new(TraceStore::in_memory(StoreMeta::for_providers(&providers), clock.clone()));
    let queue = Arc::new(ReviewQueue::in_memory(clock));
    Engine::new(providers, store, queue).with_exemplars(shipped_exemplars())
}
