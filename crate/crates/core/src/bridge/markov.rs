//! Nested Monte Carlo test of the bridge's time-inhomogeneous Markov property.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BridgePath, BridgeSpec, ExactSampler, Functional};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::Moments;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub s: f64,
    pub phi: String,
    pub psi: String,
    /// `|E[Φ Ψ] - E[Φ E'[Ψ]]|`.
    pub defect: f64,
    pub se: f64,
    pub n_out: usize,
    pub m_in: usize,
    pub pass: bool,
}

/// Estimates `|E[Φ Ψ(X_{S+·})] - E[Φ E'[Ψ]]|`, where `E'` averages `m_in`
/// fresh exact sub-bridges from `X_S` to `y` over the remaining grid.
///
/// `phi` may only read indices `≤ s_index`, `psi` only indices `≥ s_index`.
/// The estimator uses the paired differences `Φ_i (Ψ_i - mean_k Ψ_{i,k})`.
pub fn markov_defect(
    paths: &[BridgePath],
    s_index: usize,
    phi: &Functional,
    psi: &Functional,
    m_in: usize,
    budget: u64,
    seed: u64,
) -> Result<MarkovReport> {
    let first = paths.first().ok_or_else(|| Error::Precondition("empty ensemble".into()))?;
    let grid = &first.grid;
    let model = first.spec.model;
    if s_index == 0 || s_index >= grid.steps() {
        return Err(Error::Grid(format!("S index {s_index} must be interior to a grid of {} steps", grid.steps())));
    }
    if phi.max_index() > s_index || psi.max_index() > grid.steps() {
        return Err(Error::Grid("test functional reads outside its window".into()));
    }
    let psi_tail = psi.shifted(s_index)?;
    if paths.iter().any(|p| p.grid != *grid || p.spec != first.spec) {
        return Err(Error::Precondition("ensemble paths must share spec and grid".into()));
    }
    let requested = paths.len() as u64 * m_in as u64;
    if requested > budget {
        return Err(Error::Budget { requested, budget });
    }
    let tail = grid.tail_from(s_index)?;
    let diffs: Vec<f64> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let f = phi.eval(&model, &path.points);
            if f == 0.0 {
                return Ok(0.0);
            }
            let own = psi.eval(&model, &path.points);
            let sub = BridgeSpec::new(model, path.points[s_index].clone(), first.spec.y.clone(), tail.horizon())?;
            let sampler = ExactSampler::new(sub, tail.clone())?;
            let mut stream = RngStream::new(seed, "markov-inner", i as u64);
            let mut inner = Moments::default();
            for _ in 0..m_in {
                inner.push(psi_tail.eval(&model, &sampler.sample(&mut stream)?.points));
            }
            Ok(f * (own - inner.mean()))
        })
        .collect::<Result<_>>()?;
    let mom: Moments = diffs.into_iter().collect();
    let defect = mom.mean().abs();
    let se = mom.se();
    Ok(MarkovReport {
        s: grid.times()[s_index],
        phi: phi.id(),
        psi: psi.id(),
        defect,
        se,
        n_out: paths.len(),
        m_in,
        pass: defect <= 4.0 * se,
    })
}
