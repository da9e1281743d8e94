use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use cradle_core::io::DEFAULT_DURATION_CEILING;
use cradle_core::memory::SkillStore;
use cradle_core::pipeline::default_store;
use cradle_core::provider::ScriptedProvider;
use cradle_core::skill::{parse_many, validate, Registry, Skill};

use super::{config, failed, CliError, CmdResult};
use crate::StoreArgs;

fn open_store(args: &StoreArgs) -> Result<SkillStore, CliError> {
    match &args.store {
        Some(path) => SkillStore::load(path).map_err(config),
        // Embeddings are not shown, so the offline hash embedder is enough.
        None => default_store(&args.preset, &ScriptedProvider::new(), DEFAULT_DURATION_CEILING).map_err(config),
    }
}

pub fn list(args: &StoreArgs) -> CmdResult {
    let store = open_store(args)?;
    let mut out = std::io::stdout().lock();
    for e in store.entries() {
        // Stop quietly when the reader goes away, as with `| head`.
        if writeln!(out, "{:<28} {}", e.name(), e.doc).is_err() {
            break;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn show(name: &str, args: &StoreArgs) -> CmdResult {
    let store = open_store(args)?;
    let entry = store.get(name).ok_or_else(|| failed(format!("NotFound: no skill named `{name}`")))?;
    match &entry.skill {
        Skill::Script(s) => print!("{s}"),
        Skill::Native(_) => {
            let params: Vec<String> = entry.skill.as_ref().params().iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
            println!("{}({})  (built in)\n{}", name, params.join(", "), entry.doc);
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Variant name of an error, such as `DuplicateName`.
fn kind(e: &impl std::fmt::Debug) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

pub fn lint(path: &Path) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let scripts = parse_many(&text).map_err(|e| failed(format!("SyntaxError: {e}")))?;
    let mut registry = Registry::with_natives();
    let mut problems = 0;
    for s in scripts {
        if let Err(errs) = validate(&s, &registry, DEFAULT_DURATION_CEILING) {
            for e in &errs {
                println!("{}: {}: {e}", s.name, kind(e));
            }
            problems += errs.len();
        } else {
            println!("{}: ok", s.name);
            registry.insert(Skill::Script(s));
        }
    }
    if problems > 0 {
        return Err(failed(format!("{problems} problem(s) in {}", path.display())));
    }
    Ok(ExitCode::SUCCESS)
}
