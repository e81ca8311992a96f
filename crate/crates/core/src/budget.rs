use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides every default budget.
pub const BUDGET_ENV: &str = "RIGIDLAB_BUDGET";

/// Upper bound on the number of scalar entries a single operation may
/// allocate or enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_entries: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_entries: 1 << 28 }
    }
}

impl Budget {
    pub const fn new(max_entries: u64) -> Self {
        Budget { max_entries }
    }

    pub const fn unlimited() -> Self {
        Budget { max_entries: u64::MAX }
    }

    /// The default budget, or the value of `RIGIDLAB_BUDGET` when it is set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BUDGET_ENV) {
            Ok(v) => parse_budget(&v).map(Budget::new),
            Err(_) => Ok(Budget::default()),
        }
    }

    pub fn check(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_entries as u128 {
            Err(Error::Budget { what: what.to_string(), needed, budget: self.max_entries })
        } else {
            Ok(())
        }
    }
}

/// Accepts a plain integer or a power of two written `2^k`.
pub fn parse_budget(s: &str) -> Result<u64> {
    let t = s.trim();
    let bad = || Error::Parse(format!("invalid budget '{s}' (expected an integer or 2^k)"));
    if let Some(exp) = t.strip_prefix("2^") {
        let e: u32 = exp.parse().map_err(|_| bad())?;
        return 1u64.checked_shl(e).filter(|_| e < 64).ok_or_else(bad);
    }
    let v: u64 = t.parse().map_err(|_| bad())?;
    if v == 0 {
        return Err(bad());
    }
    Ok(v)
}
