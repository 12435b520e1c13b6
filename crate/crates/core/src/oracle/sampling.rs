//! Monte Carlo for the single-sampler abstraction: one agent with
//! unbounded memory draws inputs with replacement and outputs the
//! majority of its draws.

use rand::Rng;

use crate::error::{Error, Result};

/// Draw `s` inputs from an `n`-agent population with the given majority
/// margin and report whether the sample majority is the true majority.
///
/// Ties count as wrong.
pub fn sample_majority_trial<R: Rng + ?Sized>(
    n: u64,
    margin: u64,
    s: u64,
    rng: &mut R,
) -> Result<bool> {
    if margin == 0 || margin > n || !(n - margin).is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "margin {margin} is not a valid majority margin for {n} inputs"
        )));
    }
    if s == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let majority = (n + margin) / 2;
    let hits = (0..s).filter(|_| rng.random_range(0..n) < majority).count() as u64;
    Ok(2 * hits > s)
}
