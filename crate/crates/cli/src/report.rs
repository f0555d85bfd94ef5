use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use cocycle_spectra::numeric::{CMatrix, C64};

pub const SCHEMA: &str = "cocycle-spectra/report/v1";
pub const CSV_SCHEMA: &str = "cocycle-spectra/csv/v1";

/// Process outcome, mapped onto the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Ran to completion; includes negative conclusions.
    Success,
    /// A definitive criterion failed.
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed => 1,
        }
    }
}

pub struct CommandResult {
    pub outcome: Outcome,
    pub result: Value,
    /// Rows for `--format csv`: header then records.
    pub table: Vec<Vec<String>>,
}

pub fn envelope(command: &str, config: &Value, res: &CommandResult, wall_time: f64) -> Value {
    json!({
        "schema": SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "outcome": res.outcome,
        "exit_code": res.outcome.exit_code(),
        "result": res.result,
        "wall_time": wall_time,
    })
}

pub fn error_envelope(command: &str, config: &Value, message: &str) -> Value {
    json!({
        "schema": SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "outcome": "error",
        "exit_code": 2,
        "error": message,
    })
}

pub fn render_csv(command: &str, table: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in table {
        w.write_record(row)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(format!("# {CSV_SCHEMA} {command}\n{body}"))
}

pub fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())?;
            o.flush()?;
        }
    }
    Ok(())
}

fn entry(z: &C64) -> Value {
    if z.im == 0.0 {
        json!(z.re)
    } else {
        json!([z.re, z.im])
    }
}

/// Rows of entries; complex entries as [re, im].
pub fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| entry(&m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}
