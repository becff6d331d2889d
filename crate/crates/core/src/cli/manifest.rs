use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run, Cli, Command};
use crate::error::{Error, Result};

/// What a command was run with and what it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    /// SHA-256 of every file read, by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, by path.
    pub outputs: BTreeMap<String, String>,
    /// False when outputs hold measurements (timings) that cannot repeat.
    pub deterministic: bool,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn key(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

impl Manifest {
    pub fn new(command: &str, args: &[String], seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            args: args.to_vec(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            deterministic: true,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(key(path), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(key(path), sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }
}

/// Reruns the command recorded in a manifest after checking its inputs are
/// unchanged, then checks every output is byte-identical to the recorded
/// run.
pub fn rerun(path: &Path) -> Result<()> {
    let m = Manifest::load(path)?;
    for (p, sum) in &m.inputs {
        if sha256_file(Path::new(p))? != *sum {
            return Err(Error::Manifest(format!("input {p} changed since the recorded run")));
        }
    }
    let argv = std::iter::once("docsimp".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Manifest(format!("recorded arguments: {}", e.kind())))?;
    if matches!(cli.command, Command::RerunFromManifest(_)) {
        return Err(Error::Manifest("a manifest cannot replay a rerun".into()));
    }
    run(&cli.command, &m.args)?;
    if m.deterministic {
        for (p, sum) in &m.outputs {
            if sha256_file(Path::new(p))? != *sum {
                return Err(Error::Manifest(format!("output {p} differs from the recorded run")));
            }
        }
    }
    Ok(())
}
