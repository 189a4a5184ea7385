//! Perceived-state maps.
//!
//! A perception turns the raw observation stream into the index the learner
//! treats as its state. It may report `None` while it is not ready (a window
//! that is still filling); the learner then explores without updating.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::ExplorationPolicy;

pub trait Perception<O> {
    /// Number of perceived states.
    fn n_states(&self) -> usize;

    /// Resets internal memory from the initial observation.
    fn start(&mut self, obs: &O) -> Result<Option<usize>>;

    /// Folds in the action just taken and the observation it produced.
    fn advance(&mut self, action: usize, obs: &O) -> Result<Option<usize>>;
}

impl<O, P: Perception<O> + ?Sized> Perception<O> for Box<P> {
    fn n_states(&self) -> usize {
        (**self).n_states()
    }

    fn start(&mut self, obs: &O) -> Result<Option<usize>> {
        (**self).start(obs)
    }

    fn advance(&mut self, action: usize, obs: &O) -> Result<Option<usize>> {
        (**self).advance(action, obs)
    }
}

/// The observation is the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity {
    n_states: usize,
}

impl Identity {
    pub fn new(n_states: usize) -> Self {
        Self { n_states }
    }

    fn check(&self, obs: usize) -> Result<Option<usize>> {
        if obs >= self.n_states {
            return Err(Error::dim(format!("observation {obs} of {}", self.n_states)));
        }
        Ok(Some(obs))
    }
}

impl Perception<usize> for Identity {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn start(&mut self, obs: &usize) -> Result<Option<usize>> {
        self.check(*obs)
    }

    fn advance(&mut self, _action: usize, obs: &usize) -> Result<Option<usize>> {
        self.check(*obs)
    }
}

/// Uniform partition of `[lo, hi]` into `M` cells. Cells are left-closed
/// and right-open except the last, which also holds `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantizer {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Quantizer {
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::validation("cells", "need at least one cell"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation("range", format!("[{lo}, {hi}] is not a proper interval")));
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn quantize(&self, x: f64) -> Result<usize> {
        if !(self.lo..=self.hi).contains(&x) {
            return Err(Error::domain(format!("{x} outside [{}, {}]", self.lo, self.hi)));
        }
        let idx = ((x - self.lo) / self.width()) as usize;
        Ok(idx.min(self.cells - 1))
    }

    pub fn bounds(&self, cell: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + cell as f64 * w, self.lo + (cell + 1) as f64 * w)
    }

    pub fn representative(&self, cell: usize) -> f64 {
        let (a, b) = self.bounds(cell);
        0.5 * (a + b)
    }

    pub fn diameter(&self, _cell: usize) -> f64 {
        self.width()
    }

    /// Largest cell diameter.
    pub fn l_bar(&self) -> f64 {
        self.width()
    }
}

impl Perception<f64> for Quantizer {
    fn n_states(&self) -> usize {
        self.cells
    }

    fn start(&mut self, obs: &f64) -> Result<Option<usize>> {
        self.quantize(*obs).map(Some)
    }

    fn advance(&mut self, _action: usize, obs: &f64) -> Result<Option<usize>> {
        self.quantize(*obs).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowContents {
    /// Oldest first, `N + 1` entries.
    pub observations: Vec<usize>,
    /// Oldest first, `N` entries, or none for an observation-only window.
    pub actions: Vec<usize>,
}

/// The last `N + 1` observations and, optionally, the `N` actions between
/// them, encoded in mixed radix with the oldest observation most
/// significant and the actions after all observations.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    len: usize,
    n_obs: usize,
    n_actions: usize,
    include_actions: bool,
    n_states: usize,
    observations: VecDeque<usize>,
    actions: VecDeque<usize>,
}

impl WindowBuffer {
    pub fn new(len: usize, n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::with_actions(len, n_obs, n_actions, true)
    }

    /// Window over observations only, `S_t = Y_{[t−N, t]}`.
    pub fn observations_only(len: usize, n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::with_actions(len, n_obs, n_actions, false)
    }

    pub fn with_actions(len: usize, n_obs: usize, n_actions: usize, include_actions: bool) -> Result<Self> {
        if n_obs == 0 || n_actions == 0 {
            return Err(Error::dim("window over empty alphabets"));
        }
        let too_big = || Error::Size(format!("window of length {len} over {n_obs} observations"));
        let mut n_states = n_obs.checked_pow(len as u32 + 1).ok_or_else(too_big)?;
        if include_actions {
            n_states = n_states
                .checked_mul(n_actions.checked_pow(len as u32).ok_or_else(too_big)?)
                .ok_or_else(too_big)?;
        }
        Ok(Self {
            len,
            n_obs,
            n_actions,
            include_actions,
            n_states,
            observations: VecDeque::with_capacity(len + 1),
            actions: VecDeque::with_capacity(len),
        })
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn is_ready(&self) -> bool {
        self.observations.len() == self.len + 1
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
    }

    pub fn push_observation(&mut self, y: usize) -> Result<()> {
        if y >= self.n_obs {
            return Err(Error::dim(format!("observation {y} of {}", self.n_obs)));
        }
        self.observations.push_back(y);
        if self.observations.len() > self.len + 1 {
            self.observations.pop_front();
        }
        Ok(())
    }

    pub fn push_action(&mut self, u: usize) -> Result<()> {
        if u >= self.n_actions {
            return Err(Error::dim(format!("action {u} of {}", self.n_actions)));
        }
        if self.include_actions && self.len > 0 {
            self.actions.push_back(u);
            if self.actions.len() > self.len {
                self.actions.pop_front();
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<usize> {
        if !self.is_ready() {
            return Err(Error::NotReady(format!(
                "window holds {} of {} observations",
                self.observations.len(),
                self.len + 1
            )));
        }
        let mut idx = 0;
        for &y in &self.observations {
            idx = idx * self.n_obs + y;
        }
        for &u in &self.actions {
            idx = idx * self.n_actions + u;
        }
        Ok(idx)
    }

    pub fn decode(&self, mut idx: usize) -> Result<WindowContents> {
        if idx >= self.n_states {
            return Err(Error::dim(format!("window index {idx} of {}", self.n_states)));
        }
        let n_act = if self.include_actions { self.len } else { 0 };
        let mut actions = vec![0; n_act];
        for slot in actions.iter_mut().rev() {
            *slot = idx % self.n_actions;
            idx /= self.n_actions;
        }
        let mut observations = vec![0; self.len + 1];
        for slot in observations.iter_mut().rev() {
            *slot = idx % self.n_obs;
            idx /= self.n_obs;
        }
        Ok(WindowContents { observations, actions })
    }

    fn state(&self) -> Option<usize> {
        self.encode().ok()
    }
}

impl Perception<usize> for WindowBuffer {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn start(&mut self, obs: &usize) -> Result<Option<usize>> {
        self.clear();
        self.push_observation(*obs)?;
        Ok(self.state())
    }

    fn advance(&mut self, action: usize, obs: &usize) -> Result<Option<usize>> {
        self.push_action(action)?;
        self.push_observation(*obs)?;
        Ok(self.state())
    }
}

/// Action used while the window fills: a draw from the exploration
/// policy's state-independent mixture.
pub fn warmup_policy<R: rand::Rng + ?Sized>(
    window: &WindowBuffer,
    explore: &ExplorationPolicy,
    rng: &mut R,
) -> Result<usize> {
    if window.is_ready() {
        return Err(Error::domain("window is already filled"));
    }
    Ok(explore.sample_mixture(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_cells() {
        let q = Quantizer::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(q.quantize(0.3).unwrap(), 1);
        assert_eq!(q.quantize(0.25).unwrap(), 1);
        assert_eq!(q.quantize(1.0).unwrap(), 3);
        assert_eq!(q.quantize(0.0).unwrap(), 0);
        assert_eq!(q.l_bar(), 0.25);
        assert_eq!(Quantizer::uniform(0.0, 1.0, 8).unwrap().l_bar(), 0.125);
        assert!(matches!(q.quantize(1.01), Err(Error::Domain(_))));
        assert!(matches!(q.quantize(f64::NAN), Err(Error::Domain(_))));
        assert_eq!(q.representative(1), 0.375);
    }

    #[test]
    fn window_sizes() {
        assert_eq!(WindowBuffer::new(1, 2, 2).unwrap().n_states(), 8);
        assert_eq!(WindowBuffer::new(0, 3, 2).unwrap().n_states(), 3);
        assert_eq!(WindowBuffer::observations_only(1, 2, 2).unwrap().n_states(), 4);
        assert!(matches!(WindowBuffer::new(200, 3, 3), Err(Error::Size(_))));
    }

    #[test]
    fn window_round_trip_all_states() {
        let mut w = WindowBuffer::new(1, 2, 2).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for y0 in 0..2 {
            for u in 0..2 {
                for y1 in 0..2 {
                    w.start(&y0).unwrap();
                    let s = w.advance(u, &y1).unwrap().unwrap();
                    let back = w.decode(s).unwrap();
                    assert_eq!(back.observations, vec![y0, y1]);
                    assert_eq!(back.actions, vec![u]);
                    seen.insert(s);
                }
            }
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn window_readiness() {
        let mut w = WindowBuffer::new(1, 2, 2).unwrap();
        assert_eq!(w.start(&1).unwrap(), None);
        assert!(matches!(w.encode(), Err(Error::NotReady(_))));
        assert!(w.advance(0, &0).unwrap().is_some());
        let mut w0 = WindowBuffer::new(0, 2, 2).unwrap();
        assert_eq!(w0.start(&1).unwrap(), Some(1));
    }

    #[test]
    fn warmup_draws_only_before_ready() {
        let explore = ExplorationPolicy::uniform(1, 2).unwrap();
        let mut rng = crate::rng::stream(0, 0);
        let mut w = WindowBuffer::new(1, 2, 2).unwrap();
        w.start(&0).unwrap();
        assert!(warmup_policy(&w, &explore, &mut rng).unwrap() < 2);
        w.advance(1, &1).unwrap();
        assert!(warmup_policy(&w, &explore, &mut rng).is_err());
    }
}
