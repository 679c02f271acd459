//! Run manifests: every command records its fully resolved configuration so
//! outputs can be reproduced bitwise. No timestamps, no host state.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a T,
}

pub fn write(path: &Path, command: &str, config: &impl Serialize) -> Result<()> {
    let manifest = Manifest {
        tool: "stipple",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(path, json)?;
    Ok(())
}
