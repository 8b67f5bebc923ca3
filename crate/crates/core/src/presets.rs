//! A ready-made synthetic task: base repository, seed solver, seed guidance,
//! and a run configuration driving the mock agent over the two-phase landscape.

use std::path::{Path, PathBuf};

use crate::adapters::{AgentSpec, Directive, EvaluatorSpec, LandscapeConfig, MockConfig, SolverParams};
use crate::error::Result;
use crate::fsutil::{to_json_bytes, write_file};
use crate::model::RunConfig;

pub const ALLOWLIST: [&str; 2] = ["solver/params.json", "solver/notes.md"];

#[derive(Debug, Clone)]
pub struct SeedPaths {
    pub base: PathBuf,
    pub seed_solver: PathBuf,
    pub seed_guidance: PathBuf,
}

pub fn synthetic_config() -> RunConfig {
    let landscape = LandscapeConfig::default();
    RunConfig {
        allowlist: ALLOWLIST.iter().map(|s| s.to_string()).collect(),
        agent: AgentSpec::Mock(MockConfig {
            landscape: landscape.clone(),
            ..MockConfig::default()
        }),
        evaluator: EvaluatorSpec::Synthetic(landscape),
        ..RunConfig::default()
    }
}

fn seed_params() -> SolverParams {
    SolverParams {
        x: [0.0, 0.0],
        tag: "VanillaSeed".into(),
    }
}

const NOTES: &str = "# Solver notes\n\nStarting point: both knobs at zero.\n";

fn write_solver_files(root: &Path) -> Result<()> {
    write_file(&root.join(ALLOWLIST[0]), &to_json_bytes(&seed_params()))?;
    write_file(&root.join(ALLOWLIST[1]), NOTES.as_bytes())
}

/// Writes a guidance tree whose mock directive is `directive`.
pub fn write_guidance(dir: &Path, directive: Directive) -> Result<()> {
    let files: [(&str, String); 5] = [
        (
            "problem.md",
            "# Task\n\nLower the mean error reported by the evaluator for the two-knob solver in \
             `solver/params.json`. The error is averaged over ten metrics e_1..e_10.\n"
                .into(),
        ),
        (
            "directions.md",
            format!(
                "# Directions\n\nAdjust one knob per session in small increments and keep the \
                 change that lowers the error. If the local probe stops improving, say so here \
                 and pick the other knob.\n\n{}\n",
                directive.marker()
            ),
        ),
        (
            "mutation_surface.md",
            format!(
                "# Editable files\n\n{}\n\nEverything else in the repository is read-only. \
                 Files under `.eve/` are for reports back to the orchestrator.\n",
                ALLOWLIST.map(|p| format!("- `{p}`")).join("\n")
            ),
        ),
        (
            "literature_notes.md",
            "# Background\n\nThe two knobs interact: the second one only starts to pay off once \
             the first is near its useful limit. Pushing the first knob past that limit costs \
             error again.\n"
                .into(),
        ),
        (
            "skills/read-eval/SKILL.md",
            "# Reading evaluator output\n\nEach reference solver under \
             `.eve/references/solvers/` has an `eval.log` listing e_1..e_10 and their mean. \
             Compare the means before copying ideas from a reference.\n"
                .into(),
        ),
    ];
    for (rel, text) in files {
        write_file(&dir.join(rel), text.as_bytes())?;
    }
    Ok(())
}

/// Lays out `base/`, `seed-solver/` and `seed-guidance/` under `dir`.
pub fn write_synthetic_preset(dir: &Path) -> Result<SeedPaths> {
    let base = dir.join("base");
    write_file(
        &base.join("README.md"),
        b"# Toy model\n\nA two-knob model scored by a synthetic evaluator.\n",
    )?;
    write_file(
        &base.join("src/model.py"),
        b"import json\n\n\ndef load(path='solver/params.json'):\n    with open(path) as f:\n        return json.load(f)['x']\n",
    )?;
    write_file(&base.join("configs/task.yaml"), b"metrics: 10\nreduction: mean\n")?;
    write_solver_files(&base)?;
    let seed_solver = dir.join("seed-solver");
    write_solver_files(&seed_solver)?;
    let seed_guidance = dir.join("seed-guidance");
    write_guidance(&seed_guidance, Directive::default())?;
    Ok(SeedPaths {
        base,
        seed_solver,
        seed_guidance,
    })
}
