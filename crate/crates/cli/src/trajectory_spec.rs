//! Parser for visible records written as
//! `g0; 4@0.9; 1@1.5; 4@2.4; e1; T=3`: initial basis label, jumps as
//! `id@time`, final basis label, horizon.

use hidden_entropy::unravel::{JumpEvent, VisibleTrajectory};
use hidden_entropy::LindbladModel;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("trajectory spec needs at least `initial; final; T=..`")]
    TooShort,
    #[error("unknown basis label `{0}`")]
    UnknownLabel(String),
    #[error("cannot parse jump `{0}`, expected id@time")]
    BadJump(String),
    #[error("cannot parse horizon `{0}`, expected T=value")]
    BadHorizon(String),
}

/// Labels resolved against the model's basis; consistency with the model
/// (visibility, ordering, times within the horizon) is left to
/// `VisibleTrajectory::check`.
pub fn parse_trajectory(spec: &str, m: &LindbladModel) -> Result<VisibleTrajectory, SpecError> {
    let parts: Vec<&str> = spec.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.len() < 3 {
        return Err(SpecError::TooShort);
    }
    let label = |s: &str| m.basis_index(s).ok_or_else(|| SpecError::UnknownLabel(s.to_owned()));
    let initial = label(parts[0])?;
    let final_state = label(parts[parts.len() - 2])?;
    let horizon_text = parts[parts.len() - 1];
    let horizon = horizon_text
        .strip_prefix("T=")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| SpecError::BadHorizon(horizon_text.to_owned()))?;
    let events = parts[1..parts.len() - 2]
        .iter()
        .map(|p| {
            let (k, t) = p.split_once('@').ok_or_else(|| SpecError::BadJump((*p).to_owned()))?;
            let k = k.trim().parse().map_err(|_| SpecError::BadJump((*p).to_owned()))?;
            let t = t.trim().parse().map_err(|_| SpecError::BadJump((*p).to_owned()))?;
            Ok(JumpEvent::new(k, t))
        })
        .collect::<Result<Vec<_>, SpecError>>()?;
    Ok(VisibleTrajectory::new(initial, events, final_state, horizon))
}
