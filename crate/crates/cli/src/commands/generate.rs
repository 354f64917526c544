//! `colloquy generate`: run the pipeline over a record stream and write the
//! dialogue corpus, trace stream, and rejects stream.

use crate::config::RunConfig;
use crate::{io, CliError, GenerateArgs};
use colloquy::agents::{run_pipeline, PipelineDeps};
use colloquy::corpus::parse_epcr_stream;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

#[derive(Serialize)]
struct ResumeMarker {
    completed_records: usize,
    total_records: usize,
    seed: u64,
}

pub fn run(args: GenerateArgs) -> Result<i32, CliError> {
    let config = RunConfig::load(Some(&args.config))?;
    let seed = config.seed(args.seed);
    let workers = config.workers(args.workers);

    let raw_records = io::read_file(&args.records)?;
    let label_set = config.label_set()?;
    let records = parse_epcr_stream(&raw_records, &label_set)
        .map_err(|e| CliError::usage(format!("records {}: {e}", args.records.display())))?;

    let lexicon = config.lexicon()?;
    let ontology = config.ontology()?;
    let agent_config = config.agent_config()?;
    let provider = config.generator_provider()?;
    let embedder = config.embedder()?;

    // ctrl-c drains in-flight records; partial outputs flush below with a
    // resumability marker.
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst));
    }

    let deps = PipelineDeps {
        chat: provider.as_ref(),
        embedder: embedder.as_ref(),
        lexicon: &lexicon,
        ontology: &ontology,
        config: &agent_config,
    };
    let outcome = run_pipeline(&records, &deps, workers, Some(&stop));

    io::write_jsonl(&args.out, &outcome.dialogues)?;
    let traces_path = args
        .traces
        .clone()
        .unwrap_or_else(|| derive_path(&args.out, ".traces.jsonl"));
    io::write_jsonl(&traces_path, &outcome.traces)?;
    let rejects_path = args
        .rejects
        .clone()
        .unwrap_or_else(|| derive_path(&args.out, ".rejects.jsonl"));
    io::write_jsonl(&rejects_path, &outcome.rejects)?;

    let interrupted = stop.load(Ordering::SeqCst) && outcome.traces.len() < records.len();
    if interrupted {
        io::write_json(
            &derive_path(&args.out, ".resume.json"),
            &ResumeMarker {
                completed_records: outcome.traces.len(),
                total_records: records.len(),
                seed,
            },
        )?;
    }

    let processed = outcome.traces.len();
    let mean_plan_generate = if processed == 0 {
        0.0
    } else {
        outcome.traces.iter().map(|t| t.plan_generate_iterations() as f64).sum::<f64>() / processed as f64
    };
    let mean_total = if processed == 0 {
        0.0
    } else {
        outcome.traces.iter().map(|t| t.total_iterations() as f64).sum::<f64>() / processed as f64
    };
    println!("seed: {seed}");
    println!("records: {} (processed {processed})", records.len());
    println!("accepted: {}", outcome.dialogues.len());
    println!("rejected: {}", outcome.rejects.len());
    println!("mean plan+generate iterations: {mean_plan_generate:.4}");
    println!("mean total iterations: {mean_total:.4}");
    if interrupted {
        println!("interrupted: resumability marker written");
    }

    // a run that could not reach the backend at all is an infrastructure
    // failure, not a data outcome
    let backend_down = !outcome.traces.is_empty()
        && outcome
            .traces
            .iter()
            .all(|t| t.error.as_deref().map(|e| e.contains("backend error after")).unwrap_or(false));
    if backend_down {
        return Err(CliError::backend("generator backend unreachable for every record"));
    }
    Ok(0)
}

fn derive_path(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}
