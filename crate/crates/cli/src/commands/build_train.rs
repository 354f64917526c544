//! `colloquy eval build-train`: emit fine-tuning examples from a labeled
//! corpus.

use crate::{io, CliError, BuildTrainArgs};
use colloquy::corpus::parse_dialogue_corpus;
use colloquy::forecast::{build_dynamic_examples, build_static_example, TrainingExample, UnrollConfig};

pub fn run(args: BuildTrainArgs) -> Result<i32, CliError> {
    let corpus = parse_dialogue_corpus(&io::read_file(&args.corpus)?)
        .map_err(|e| CliError::usage(format!("corpus {}: {e}", args.corpus.display())))?;

    let mut examples: Vec<TrainingExample> = Vec::new();
    for dialogue in &corpus {
        match args.mode.as_str() {
            "static" => {
                examples.push(build_static_example(dialogue).map_err(|e| CliError::usage(e.to_string()))?)
            }
            "dynamic" => examples.extend(
                build_dynamic_examples(dialogue, &UnrollConfig { k: args.k })
                    .map_err(|e| CliError::usage(e.to_string()))?,
            ),
            other => return Err(CliError::usage(format!("unknown mode {other:?}"))),
        }
    }
    io::write_jsonl(&args.out, &examples)?;
    println!("dialogues: {}", corpus.len());
    println!("examples: {}", examples.len());
    Ok(0)
}
