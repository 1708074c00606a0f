use anyhow::Result;
use kbc_core::verify::{run_oracles, VerifyOptions};

use crate::failure::{Invalid, OracleFailed};

pub fn cmd_verify(json: bool, seed: u64, restarts: usize) -> Result<()> {
    if restarts == 0 {
        return Err(Invalid("--restarts must be at least 1".into()).into());
    }
    let opts = VerifyOptions {
        seed,
        restarts,
        ..VerifyOptions::default()
    };
    let report = run_oracles(&opts)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    if report.passed {
        Ok(())
    } else {
        Err(OracleFailed.into())
    }
}
