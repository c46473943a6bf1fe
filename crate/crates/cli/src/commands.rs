use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use skumap_core::eval::synth::{generate, SynthOptions};
use skumap_core::eval::{emit_report, emit_reports, evaluate, load_dataset, write_dataset};
use skumap_core::model::{DimensionStatus, MappingResult};
use skumap_core::pipeline::{Engine, MappingMode, PipelineError};
use skumap_core::provider::CallScope;
use skumap_core::review::ReviewItem;
use skumap_core::traces::{read_meta, read_traces, sidecar_path, StoreMeta};

use crate::setup::{build_engine, build_providers, open_store, Runtime};
use crate::{
    runtime, usage, CliResult, Cli, Command, EvalArgs, Failure, MatchArgs, ServeArgs, SynthArgs,
    TracesCmd,
};

pub fn dispatch(cli: Cli) -> CliResult {
    let rt = Runtime::resolve(&cli.global)?;
    match cli.command {
        Command::Match(a) => cmd_match(&rt, a),
        Command::Eval(a) => cmd_eval(&rt, a),
        Command::Traces { action } => cmd_traces(&rt, action),
        Command::Serve(a) => cmd_serve(&rt, a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn parse_mode(s: &str) -> CliResult<MappingMode> {
    s.parse().map_err(usage)
}

/// Provider trouble is a runtime failure; everything else is the input's fault.
fn classify(e: PipelineError) -> Failure {
    match e {
        PipelineError::Agent(_) | PipelineError::Trace(_) | PipelineError::Review(_) => runtime(e),
        other => usage(other),
    }
}

fn write_file(path: &Path, body: &str) -> CliResult {
    fs::write(path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn render_result(r: &MappingResult, review: Option<&ReviewItem>) -> String {
    let v = &r.verdict;
    let mut out = format!(
        "Verdict: {:?} (confidence {:.2}, {})\n",
        v.label,
        v.confidence,
        serde_json::to_value(v.provenance).unwrap_or_default().as_str().unwrap_or_default()
    );
    out.push_str(&format!("Rationale: {}\n", v.rationale));
    let dims: Vec<String> = v
        .dimension_status
        .iter()
        .map(|(d, s)| {
            let s = match s {
                DimensionStatus::Match => "match",
                DimensionStatus::Mismatch => "mismatch",
                DimensionStatus::Unknown => "unknown",
            };
            format!("{}={s}", d.token())
        })
        .collect();
    out.push_str(&format!("Dimensions: {}\n", dims.join(" ")));
    if !r.questions.is_empty() {
        out.push_str("Questions:\n");
        for (i, q) in r.questions.iter().enumerate() {
            out.push_str(&format!("  {}. [{}] {}\n", i + 1, q.dimension.token(), q.text));
            if let Some(a) = r.answers.iter().find(|a| a.question_id == q.question_id) {
                out.push_str(&format!("     -> {}\n", a.answer_text));
                for s in &a.sources {
                    out.push_str(&format!("        source: {}\n", s.url));
                }
            }
        }
    }
    out.push_str(&format!(
        "Web queries: {}  Reused trace: {}\n",
        r.web_queries_issued,
        if r.dedup_activated { "yes" } else { "no" }
    ));
    if let Some(item) = review {
        out.push_str(&format!("Queued for review as item {}\n", item.item_id));
    }
    out
}

fn cmd_match(rt: &Runtime, a: MatchArgs) -> CliResult {
    let mode = parse_mode(&a.mode)?;
    if a.format != "text" && a.format != "record" {
        return Err(usage(format!("--format must be text or record, got {:?}", a.format)));
    }
    let engine = build_engine(rt, build_providers(rt, mode.uses_providers())?)?;
    let pair = engine.new_pair(&a.base, &a.compared).map_err(usage)?;
    let out = engine.map_pair(&pair, mode).map_err(classify)?;
    if a.format == "record" {
        println!("{}", serde_json::to_string(&out.result).expect("result serializes"));
    } else {
        print!("{}", render_result(&out.result, out.review_item.as_ref()));
    }
    Ok(())
}

fn eval_modes(names: &[String]) -> CliResult<Vec<MappingMode>> {
    let mut modes = Vec::new();
    for n in names {
        if n == "all" {
            modes.extend(MappingMode::ALL);
        } else {
            modes.push(parse_mode(n)?);
        }
    }
    modes.dedup();
    Ok(modes)
}

fn cmd_eval(rt: &Runtime, a: EvalArgs) -> CliResult {
    let modes = eval_modes(&a.modes)?;
    let dataset = load_dataset(&a.dataset).map_err(usage)?;
    if dataset.is_empty() {
        return Err(usage(format!("{}: dataset has no rows", a.dataset.display())));
    }
    let need_fixtures = modes.iter().any(|m| m.uses_providers());
    let engine = build_engine(rt, build_providers(rt, need_fixtures)?)?;
    create_dir(&a.out)?;
    let pairs = dataset
        .iter()
        .map(|r| engine.new_pair(&r.base_product, &r.compared_product))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        tracing::warn!("cannot install interrupt handler: {e}");
    }

    let workers = rt.settings.engine.workers;
    let mut reports = Vec::new();
    let mut failures = 0;
    for mode in modes {
        let batch = engine
            .run_batch_with(&pairs, mode, workers, Some(&cancel), &|_| {})
            .map_err(classify)?;
        let report = evaluate(mode, &dataset, &batch.results, &batch.log).map_err(usage)?;
        emit_report(&report, &a.out.join(format!("{mode}.report.txt"))).map_err(runtime)?;
        write_file(&a.out.join(format!("{mode}.runlog.jsonl")), &batch.log.to_jsonl())?;
        println!("{}", report.table_row());
        failures += report.failures;
        reports.push(report);
        if cancel.load(Ordering::SeqCst) {
            break;
        }
    }
    if reports.len() > 1 {
        emit_reports(&reports, &a.out.join("summary.txt")).map_err(runtime)?;
    }
    if cancel.load(Ordering::SeqCst) {
        return Err(runtime("interrupted; partial reports written"));
    }
    if failures > 0 {
        return Err(runtime(format!("{failures} pairs failed; see the run logs in {}", a.out.display())));
    }
    Ok(())
}

fn cmd_traces(rt: &Runtime, action: TracesCmd) -> CliResult {
    let path = rt.settings.paths.traces.clone();
    match action {
        TracesCmd::Search { q, top } => {
            if q.trim().is_empty() {
                return Err(usage("query must not be empty"));
            }
            if !path.exists() {
                println!("0 hits");
                return Ok(());
            }
            let providers = build_providers(rt, false)?;
            let store = open_store(rt, &providers, rt.clock())?;
            let hits = store
                .retrieve_topk(&providers, &CallScope::detached(), &q, top)
                .map_err(|e| match e {
                    skumap_core::traces::TraceError::ZeroK => usage(e),
                    other => runtime(other),
                })?;
            println!("{} hits", hits.len());
            for (i, h) in hits.iter().enumerate() {
                let s = h.summary(i + 1);
                println!(
                    "{:>3}  {:.4}  #{}  {}  {}",
                    s.rank,
                    s.similarity,
                    s.trace_id,
                    serde_json::to_value(s.validation_status).unwrap_or_default().as_str().unwrap_or_default(),
                    s.concat_key
                );
            }
            Ok(())
        }
        TracesCmd::Export { to } => {
            let meta = read_meta(&path).map_err(usage)?;
            let (traces, complete, _) = read_traces(&path, &meta).map_err(usage)?;
            let bytes = fs::read(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if let Some(dir) = to.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            fs::write(&to, &bytes[..complete as usize]).map_err(|e| runtime(format!("{}: {e}", to.display())))?;
            fs::copy(sidecar_path(&path), sidecar_path(&to)).map_err(|e| runtime(format!("{}: {e}", to.display())))?;
            println!("exported {} traces to {}", traces.len(), to.display());
            Ok(())
        }
        TracesCmd::Import { from } => {
            let found = read_meta(&from).map_err(usage)?;
            let expected = StoreMeta::for_providers(&build_providers(rt, false)?);
            expected.check_compatible(&found).map_err(|e| usage(format!("refusing import: {e}")))?;
            let (traces, complete, torn) = read_traces(&from, &found).map_err(usage)?;
            if torn {
                return Err(usage(format!("{}: incomplete final record", from.display())));
            }
            if fs::metadata(&path).is_ok_and(|m| m.len() > 0) {
                return Err(usage(format!("{} already holds traces; import needs an empty store", path.display())));
            }
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            let bytes = fs::read(&from).map_err(|e| usage(format!("{}: {e}", from.display())))?;
            fs::copy(sidecar_path(&from), sidecar_path(&path)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            fs::write(&path, &bytes[..complete as usize]).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            println!("imported {} traces into {}", traces.len(), path.display());
            Ok(())
        }
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn cmd_serve(rt: &Runtime, a: ServeArgs) -> CliResult {
    let s = &rt.settings;
    if !rt.live && s.paths.fixtures.is_none() {
        tracing::warn!("no stub fixtures configured; only rule mode will answer");
    }
    let engine: Arc<Engine> = Arc::new(build_engine(rt, build_providers(rt, false)?)?);
    let addr = format!(
        "{}:{}",
        a.bind.unwrap_or_else(|| s.service.bind.clone()),
        a.port.unwrap_or(s.service.port)
    );
    let workers = s.engine.workers;
    let tokio_rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    tokio_rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| usage(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{local}");
        skumap_service::serve(listener, engine, workers, shutdown_signal())
            .await
            .map_err(runtime)?;
        println!("shut down cleanly");
        Ok(())
    })
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.label_noise) {
        return Err(usage("--label-noise must be in [0, 1]"));
    }
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let corpus = generate(&SynthOptions {
        n_pairs: a.n,
        seed: a.seed,
        label_noise: a.label_noise,
    });
    create_dir(&a.out)?;
    write_dataset(&corpus.records(), &a.out.join("dataset.tsv")).map_err(runtime)?;
    write_file(&a.out.join("fixtures.toml"), &corpus.stub_script().to_toml())?;
    println!("wrote {} pairs to {}", corpus.pairs.len(), a.out.display());
    Ok(())
}
