//! `eve pe eval`: inspect one encoded position.
//!
//! Tables load from JSON of the form
//! `{"demo": [[..], ..], "role": [[..], [..], [..]], "type": [[..], ..], "gates": {"g_d": 1.0, ..}}`
//! where `demo` has `m_train + 1` rows, `role` and the optional `type` have 3,
//! all rows share one width, and any omitted gate keeps its default.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use eve_pe::{decompose, pe_overflow_gated, CompressionParams, EmbeddingTables, Gates, Matrix, PeVariant};

#[derive(Debug, Subcommand)]
pub enum PeCommand {
    /// Print the demo coordinate and encoding vector of position `p` as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One of the six variant names, or `overflow-gated`.
    #[arg(long)]
    variant: String,
    #[arg(long)]
    p: i64,
    #[arg(long)]
    m_train: usize,
    /// Furthest demo index of the sequence (defaults to the demo index of `p`).
    #[arg(long)]
    m_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Width of the built-in fixture tables.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    slope: f64,
    #[arg(long)]
    anchor_max: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GateFile {
    g_d: Option<f64>,
    g_r: Option<f64>,
    lambda: Option<f64>,
    sigma: Option<f64>,
    gate_param: Option<f64>,
    overflow_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    demo: Vec<Vec<f64>>,
    role: Vec<Vec<f64>>,
    #[serde(rename = "type", default)]
    type_table: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    gates: GateFile,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    variant: String,
    p: i64,
    demo_index: usize,
    role: usize,
    coordinate: Option<f64>,
    vector: Vec<f64>,
}

fn load_tables(args: &EvalArgs) -> Result<EmbeddingTables, String> {
    let Some(path) = &args.tables else {
        return Ok(EmbeddingTables::fixture(args.m_train, args.dim));
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: TableFile = serde_json::from_str(&text).map_err(|e| format!("invalid tables {}: {e}", path.display()))?;
    let d = Gates::default();
    let g = file.gates;
    let gates = Gates {
        g_d: g.g_d.unwrap_or(d.g_d),
        g_r: g.g_r.unwrap_or(d.g_r),
        lambda: g.lambda.unwrap_or(d.lambda),
        sigma: g.sigma.unwrap_or(d.sigma),
        gate_param: g.gate_param.unwrap_or(d.gate_param),
        overflow_scale: g.overflow_scale.unwrap_or(d.overflow_scale),
    };
    let matrix = |rows: Vec<Vec<f64>>| Matrix::from_rows(rows).map_err(|e| e.to_string());
    let type_table = file.type_table.map(matrix).transpose()?;
    EmbeddingTables::new(matrix(file.demo)?, matrix(file.role)?, type_table, gates).map_err(|e| e.to_string())
}

fn eval(args: EvalArgs) -> Result<Evaluation, String> {
    let params = CompressionParams {
        m_train: args.m_train,
        alpha: args.alpha,
        delta: args.delta,
        tau: args.tau,
        linear_slope: args.slope,
        anchor_max: args.anchor_max,
    };
    params.validate().map_err(|e| e.to_string())?;
    let tables = load_tables(&args)?;
    let idx = decompose(args.p).map_err(|e| e.to_string())?;
    let m_max = args.m_max.unwrap_or(idx.m as f64);
    let (coordinate, vector) = if args.variant == "overflow-gated" {
        let v = pe_overflow_gated(args.p, m_max, &tables, &params).map_err(|e| e.to_string())?;
        (None, v)
    } else {
        let variant = PeVariant::from_name(&args.variant).ok_or_else(|| {
            let names: Vec<_> = PeVariant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant {:?}; expected one of {}, overflow-gated", args.variant, names.join(", "))
        })?;
        let c = variant.demo_coordinate(idx.m as f64, Some(m_max), &params);
        let v = variant
            .encode(args.p, m_max, args.offset, &tables, &params)
            .map_err(|e| e.to_string())?;
        (Some(c), v)
    };
    Ok(Evaluation {
        variant: args.variant,
        p: args.p,
        demo_index: idx.m,
        role: idx.r,
        coordinate,
        vector,
    })
}

pub fn run(command: PeCommand) -> Result<(), String> {
    match command {
        PeCommand::Eval(args) => {
            let out = eval(args)?;
            say!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
            Ok(())
        }
    }
}
