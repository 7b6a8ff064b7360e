use std::path::Path;

use super::Mdp;
use crate::error::Result;
use crate::json;

pub fn mdp_to_json(mdp: &Mdp) -> Result<String> {
    json::to_string(mdp)
}

/// Parse and check an MDP document.
pub fn mdp_from_json(text: &str) -> Result<Mdp> {
    let mdp: Mdp = json::from_str(text)?;
    mdp.check()?;
    Ok(mdp)
}

pub fn save_mdp(mdp: &Mdp, path: impl AsRef<Path>) -> Result<()> {
    json::write_file(path, mdp)
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    mdp_from_json(&std::fs::read_to_string(path)?)
}
