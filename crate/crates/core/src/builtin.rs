//! Bundled models. The `.dpomdp` sources live under `models/` and are
//! documented there.

use crate::error::{Error, Result};
use crate::format::parse_model_with_discount;
use crate::model::DecPomdpModel;

const CHAIN2: &str = include_str!("../models/chain2.dpomdp");
const TOY2AGENT: &str = include_str!("../models/toy2agent.dpomdp");

pub const NAMES: [&str; 2] = ["chain2", "toy2agent"];

/// Source text of a builtin model.
pub fn source(name: &str) -> Result<&'static str> {
    match name {
        "chain2" => Ok(CHAIN2),
        "toy2agent" => Ok(TOY2AGENT),
        other => Err(Error::InvalidArgument(format!(
            "unknown builtin '{other}' (available: {})",
            NAMES.join(", ")
        ))),
    }
}

pub fn load(name: &str) -> Result<DecPomdpModel> {
    load_with_discount(name, None)
}

pub fn load_with_discount(name: &str, discount: Option<f64>) -> Result<DecPomdpModel> {
    parse_model_with_discount(source(name)?, discount)
}

pub fn chain2() -> DecPomdpModel {
    load("chain2").expect("bundled chain2 parses")
}

pub fn toy2agent() -> DecPomdpModel {
    load("toy2agent").expect("bundled toy2agent parses")
}
