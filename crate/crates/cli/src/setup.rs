//! Resolving settings and wiring providers, stores and the engine.

use std::sync::Arc;
use std::time::Duration;

use skumap_core::agents::{Agents, PromptSet};
use skumap_core::clock::{Clock, LogicalClock, SystemClock};
use skumap_core::eval::{load_dataset, shipped_exemplars};
use skumap_core::pipeline::{Engine, EngineConfig};
use skumap_core::provider::{
    HashEmbedder, HttpSearch, OpenAiChat, OpenAiEmbedder, Providers, StubScript,
};
use skumap_core::review::ReviewQueue;
use skumap_core::rules::{BrandDictionary, NormalizationConfig};
use skumap_core::settings::Settings;
use skumap_core::traces::{StoreMeta, TraceStore};

use crate::{runtime, usage, CliResult, GlobalOpts};

/// Settings after layering flags and environment over the config file.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub settings: Settings,
    pub live: bool,
}

impl Runtime {
    pub fn resolve(g: &GlobalOpts) -> CliResult<Self> {
        let mut s = Settings::load_or_default(g.config.as_deref()).map_err(usage)?;
        if let Some(v) = &g.fixtures {
            s.paths.fixtures = Some(v.clone());
        }
        if let Some(v) = &g.traces {
            s.paths.traces = v.clone();
        }
        if let Some(v) = &g.review {
            s.paths.review = v.clone();
        }
        if let Some(v) = &g.exemplars {
            s.paths.exemplars = Some(v.clone());
        }
        if let Some(v) = g.workers {
            s.engine.workers = v;
        }
        if let Some(v) = g.k {
            s.engine.k = v;
        }
        if let Some(v) = g.tau_sim {
            s.engine.tau_sim = v;
        }
        if let Some(v) = g.theta {
            s.engine.theta = v;
        }
        s.validate().map_err(usage)?;
        Ok(Self { settings: s, live: g.live })
    }

    /// Stub runs use a logical clock so stored timestamps are reproducible.
    pub fn clock(&self) -> Arc<dyn Clock> {
        if self.live {
            Arc::new(SystemClock)
        } else {
            Arc::new(LogicalClock::new())
        }
    }
}

/// Live adapters, or the stub script. `need_fixtures` makes a missing stub
/// script an error; otherwise an empty script is used and every model call
/// fails as unscripted.
pub fn build_providers(rt: &Runtime, need_fixtures: bool) -> CliResult<Providers> {
    let p = &rt.settings.provider;
    if rt.live {
        let cfg = p.live_config(|k| std::env::var(k).ok()).map_err(usage)?;
        return Ok(Providers::new(
            Arc::new(OpenAiChat::new(&cfg).map_err(runtime)?),
            Arc::new(OpenAiEmbedder::new(&cfg).map_err(runtime)?),
            Arc::new(HttpSearch::new(&cfg).map_err(runtime)?),
        ));
    }
    let script = match &rt.settings.paths.fixtures {
        Some(path) => StubScript::load(path).map_err(usage)?,
        None if need_fixtures => {
            return Err(usage("stub mode needs --fixtures (or pass --live to call real providers)"))
        }
        None => StubScript::default(),
    };
    let mut chat = script.chat();
    if p.stub_latency_ms > 0 {
        chat = chat.with_latency(Duration::from_millis(p.stub_latency_ms));
    }
    Ok(Providers::new(
        Arc::new(chat),
        Arc::new(HashEmbedder::new(p.stub_dim, p.stub_seed)),
        Arc::new(script.search_engine()),
    ))
}

pub fn open_store(rt: &Runtime, providers: &Providers, clock: Arc<dyn Clock>) -> CliResult<TraceStore> {
    TraceStore::open(&rt.settings.paths.traces, StoreMeta::for_providers(providers), clock).map_err(usage)
}

pub fn build_engine(rt: &Runtime, providers: Providers) -> CliResult<Engine> {
    let s = &rt.settings;
    let clock = rt.clock();
    let store = open_store(rt, &providers, clock.clone())?;
    if let Some(dir) = s.paths.review.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    let queue = ReviewQueue::open(&s.paths.review, clock).map_err(usage)?;

    let prompts = match &s.paths.templates {
        Some(dir) => PromptSet::load_dir(dir).map_err(usage)?,
        None => PromptSet::shipped(),
    };
    let exemplars = match &s.paths.exemplars {
        Some(path) => load_dataset(path).map_err(usage)?.iter().map(|r| r.to_exemplar()).collect(),
        None => shipped_exemplars(),
    };
    let mut engine = Engine::new(providers, Arc::new(store), Arc::new(queue))
        .with_config(EngineConfig {
            // Stub runs are meant to be reproducible byte for byte.
            record_wall_time: rt.live,
            ..s.engine_config()
        })
        .with_agents(Agents::new(prompts))
        .with_exemplars(exemplars);
    if let Some(dir) = &s.paths.rules {
        let cfg = NormalizationConfig::load(&dir.join("stopwords.txt"), &dir.join("units.tsv"), None)
            .map_err(usage)?;
        let brands = BrandDictionary::load(&dir.join("brands.txt"), &cfg).map_err(usage)?;
        engine = engine.with_rules(cfg, brands);
    }
    Ok(engine)
}
