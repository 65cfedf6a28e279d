//! Lagrangian choice of the affine combination mask: `J = D + λ·R` with `R`
//! the motion payload bytes of a P-frame and `D` its prediction distortion.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::affine::CombinationMask;
use crate::codec::motion::{encode_pframe, EncodedPFrame, MotionConfig, MotionState};
use crate::codec::BLOCK_OVERHEAD;
use crate::keynodes::KeyNodeSet;
use crate::mesh::{prediction_distortion, Mesh};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 2e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub mask: CombinationMask,
    pub rate: u64,
    pub distortion: f64,
    pub cost: f64,
}

impl RdPoint {
    pub fn new(mask: CombinationMask, rate: u64, distortion: f64, lambda: f64) -> RdPoint {
        RdPoint {
            mask,
            rate,
            distortion,
            cost: distortion + lambda * rate as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Select on the first P-frame of a GoF and reuse the mask for the rest.
    #[default]
    FirstP,
    /// Select independently for every P-frame.
    PerFrame,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::FirstP => "first-p",
            Strategy::PerFrame => "per-frame",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first-p" | "firstp" => Ok(Strategy::FirstP),
            "per-frame" | "perframe" => Ok(Strategy::PerFrame),
            _ => Err(Error::Config(format!("unknown RD strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdConfig {
    pub lambda: f64,
    pub strategy: Strategy,
}

impl Default for RdConfig {
    fn default() -> Self {
        RdConfig {
            lambda: DEFAULT_LAMBDA,
            strategy: Strategy::FirstP,
        }
    }
}

impl RdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || self.lambda.is_infinite() {
            return Err(Error::Config(format!("lambda must be a non-negative number, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Index of the lowest-cost point; exact ties go to fewer enabled
/// components, then to the lower mask code.
pub fn argmin(points: &[RdPoint]) -> Option<usize> {
    (0..points.len()).min_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.cost
            .total_cmp(&pb.cost)
            .then(pa.mask.enabled_count().cmp(&pb.mask.enabled_count()))
            .then(pa.mask.bits().cmp(&pb.mask.bits()))
    })
}

/// Rate and distortion of coding `target` from `state` under `mask`.
pub fn evaluate_in_state(
    state: &MotionState,
    target: &Mesh,
    mask: CombinationMask,
    motion: &MotionConfig,
    lambda: f64,
) -> Result<(RdPoint, EncodedPFrame)> {
    if !mask.is_legal() {
        return Err(Error::Config(format!("mask {} does not enable translation", mask.name())));
    }
    let frame = encode_pframe(state, target, mask, motion)?;
    let rate = (frame.payload.len() + BLOCK_OVERHEAD) as u64;
    let distortion = prediction_distortion(&frame.decoded, target);
    Ok((RdPoint::new(mask, rate, distortion, lambda), frame))
}

/// Evaluates all legal masks (concurrently) and returns the index of the
/// winner, every point in [`CombinationMask::LEGAL`] order, and the coded
/// frames.
pub fn select_in_state(
    state: &MotionState,
    target: &Mesh,
    motion: &MotionConfig,
    lambda: f64,
) -> Result<(usize, Vec<RdPoint>, Vec<EncodedPFrame>)> {
    let results: Vec<Result<(RdPoint, EncodedPFrame)>> = CombinationMask::LEGAL
        .par_iter()
        .map(|&m| evaluate_in_state(state, target, m, motion, lambda))
        .collect();
    let mut points = Vec::with_capacity(results.len());
    let mut frames = Vec::with_capacity(results.len());
    for r in results {
        let (p, f) = r?;
        points.push(p);
        frames.push(f);
    }
    let best = argmin(&points).expect("eight candidates");
    assert!(
        points.iter().all(|p| p.cost >= points[best].cost),
        "selected mask is not the cost minimum"
    );
    Ok((best, points, frames))
}

/// Rate-distortion point of a first P-frame: `source` is the decoded
/// reference, `nodes` the decoded key nodes.
pub fn evaluate_mask(
    mask: CombinationMask,
    source: &Mesh,
    target: &Mesh,
    nodes: &KeyNodeSet,
    motion: &MotionConfig,
    rd: &RdConfig,
) -> Result<RdPoint> {
    rd.validate()?;
    let state = MotionState::new(source.clone(), nodes.clone());
    Ok(evaluate_in_state(&state, target, mask, motion, rd.lambda)?.0)
}

/// Best mask for a first P-frame and all eight evaluated points.
pub fn select_mask(
    source: &Mesh,
    target: &Mesh,
    nodes: &KeyNodeSet,
    motion: &MotionConfig,
    rd: &RdConfig,
) -> Result<(CombinationMask, Vec<RdPoint>)> {
    rd.validate()?;
    let state = MotionState::new(source.clone(), nodes.clone());
    let (best, points, _) = select_in_state(&state, target, motion, rd.lambda)?;
    Ok((points[best].mask, points))
}
