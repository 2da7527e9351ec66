//! Output directories and manifests.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::commands::RunOutput;
use crate::config::Scenario;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest";

/// The manifest is itself a valid config for the scenario's command: the
/// resolved keys, with the command and output hashes as comments.
pub fn manifest(sc: &Scenario, files: &[(String, Vec<u8>)]) -> String {
    let mut text = format!("# fwlab manifest\n# command = {}\n", sc.command);
    text.push_str(&sc.render());
    for (name, bytes) in files {
        text.push_str(&format!("# sha256 {} {name}\n", hex::encode(Sha256::digest(bytes))));
    }
    text
}

/// Writes every output file and the manifest into `dir`.
pub fn write_outputs(dir: &Path, sc: &Scenario, out: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(dir.join(MANIFEST), manifest(sc, &out.files))?;
    Ok(())
}
