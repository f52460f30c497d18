use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use rydcav::{PhysicalParams, Result};

/// Provenance written ahead of every data file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub params_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(command: &'static str, params: &PhysicalParams, seed: u64) -> Self {
        let canonical = serde_json::to_string(params).expect("parameters always serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        Meta {
            tool: "rydcav",
            version: env!("CARGO_PKG_VERSION"),
            command,
            params_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    pub fn write_comment_lines<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# {} {} {}", self.tool, self.version, self.command)?;
        writeln!(out, "# params_sha256={}", self.params_sha256)?;
        writeln!(out, "# seed={}", self.seed)
    }
}

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Metadata comments, then the body produced by `body`.
pub fn write_csv<F>(path: Option<&Path>, meta: &Meta, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let mut out = open(path)?;
    meta.write_comment_lines(&mut out)?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

pub fn write_json<T: Serialize>(path: Option<&Path>, meta: &Meta, result: &T) -> Result<()> {
    let mut out = open(path)?;
    let text =
        serde_json::to_string_pretty(&Envelope { meta, result }).expect("results always serialize");
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = open(path)?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}
