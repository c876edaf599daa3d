//! Discrete state space: the surplus grid `x_n = n p delta`, the intensity
//! grid `lambda_m = lambda_floor + m Delta`, their projections, and the
//! schedule at which the decaying intensity crosses intensity levels.

use serde::Serialize;

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// Result of projecting a real state onto a grid.
///
/// `index` is the projected index even when it lies beyond the explicit
/// grid; `overflow` tells the caller to apply its boundary rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub index: usize,
    pub overflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurplusGrid {
    delta: f64,
    step: f64,
    n_max: usize,
}

impl SurplusGrid {
    /// Grid with step `premium * delta`, kept up to the first point at or
    /// above `premium / discount`.
    pub fn new(premium: f64, discount: f64, delta: f64) -> Result<Self> {
        Self::with_headroom(premium, discount, delta, 0)
    }

    /// Same as [`SurplusGrid::new`] with `extra` points kept above the
    /// payout threshold.
    pub fn with_headroom(premium: f64, discount: f64, delta: f64, extra: usize) -> Result<Self> {
        ensure_positive("premium", premium)?;
        ensure_positive("discount", discount)?;
        ensure_positive("delta", delta)?;
        let step = premium * delta;
        let threshold = premium / discount;
        let mut n = (threshold / step).ceil().max(0.0) as usize;
        while n > 0 && (n - 1) as f64 * step >= threshold {
            n -= 1;
        }
        while (n as f64) * step < threshold {
            n += 1;
        }
        Ok(Self {
            delta,
            step,
            n_max: n + extra,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }
    pub fn len(&self) -> usize {
        self.n_max + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point `x_n`; computed as a product so it is reproducible.
    pub fn x(&self, n: usize) -> f64 {
        n as f64 * self.step
    }

    /// Floor projection: largest `n` with `x_n <= x`.
    pub fn rho(&self, x: f64) -> Result<Projection> {
        if !(x >= 0.0) || x.is_infinite() {
            return Err(Error::Domain(format!("surplus must be finite and >= 0, got {x}")));
        }
        let index = self.floor_index(x);
        Ok(Projection {
            index,
            overflow: index > self.n_max,
        })
    }

    pub(crate) fn floor_index(&self, x: f64) -> usize {
        let mut n = (x / self.step).floor() as usize;
        while self.x(n + 1) <= x {
            n += 1;
        }
        while n > 0 && self.x(n) > x {
            n -= 1;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityGrid {
    floor: f64,
    delta_lambda: f64,
    m_max: usize,
}

impl IntensityGrid {
    pub fn new(floor: f64, delta_lambda: f64, m_max: usize) -> Result<Self> {
        ensure_non_negative("lambda_floor", floor)?;
        ensure_positive("delta_lambda", delta_lambda)?;
        Ok(Self {
            floor,
            delta_lambda,
            m_max,
        })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
    pub fn delta_lambda(&self) -> f64 {
        self.delta_lambda
    }
    pub fn m_max(&self) -> usize {
        self.m_max
    }
    pub fn len(&self) -> usize {
        self.m_max + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lambda(&self, m: usize) -> f64 {
        self.floor + m as f64 * self.delta_lambda
    }

    /// Ceiling projection: smallest `m` with `lambda_m >= lam`.
    pub fn sigma(&self, lam: f64) -> Result<Projection> {
        if !(lam >= self.floor) || lam.is_infinite() {
            return Err(Error::Domain(format!(
                "intensity must be finite and >= {}, got {lam}",
                self.floor
            )));
        }
        let index = self.ceil_index(lam);
        Ok(Projection {
            index,
            overflow: index > self.m_max,
        })
    }

    pub(crate) fn ceil_index(&self, lam: f64) -> usize {
        let mut m = ((lam - self.floor) / self.delta_lambda).ceil().max(0.0) as usize;
        while m > 0 && self.lambda(m - 1) >= lam {
            m -= 1;
        }
        while self.lambda(m) < lam {
            m += 1;
        }
        m
    }

    /// Times in `(0, horizon]` at which the deterministic decay started at
    /// `lambda_{m_start}` reaches successive lower grid levels.
    ///
    /// Entry `(t_j, m_start - j)` means the ceiling projection of the decayed
    /// intensity equals `m_start - j` from `t_j` until the next entry. The
    /// floor level itself is only approached asymptotically, so the index
    /// never drops below 1 when `m_start >= 1`.
    pub fn decay_crossings(&self, m_start: usize, decay: f64, horizon: f64) -> Vec<Crossing> {
        let mut out = Vec::new();
        if m_start == 0 {
            return out;
        }
        for j in 1..m_start {
            let level = m_start - j;
            // (lambda_{m_start} - floor) / (lambda_level - floor) = m_start / level.
            let time = (m_start as f64 / level as f64).ln() / decay;
            if time > horizon {
                break;
            }
            out.push(Crossing { time, index: level });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub time: f64,
    pub index: usize,
}

/// The product grid the solver works on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateGrid {
    pub surplus: SurplusGrid,
    pub intensity: IntensityGrid,
}

impl StateGrid {
    pub fn new(surplus: SurplusGrid, intensity: IntensityGrid) -> Self {
        Self { surplus, intensity }
    }

    pub fn cells(&self) -> usize {
        self.surplus.len() * self.intensity.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_intensity() -> IntensityGrid {
        IntensityGrid::new(0.25, 23.0 / 240.0, 60).unwrap()
    }

    fn example1_surplus() -> SurplusGrid {
        SurplusGrid::new(141.0 / 700.0, 0.2, 28.0 / 423.0).unwrap()
    }

    #[test]
    fn surplus_grid_covers_payout_threshold() {
        let g = example1_surplus();
        let threshold = 141.0 / 700.0 / 0.2;
        assert!(g.x(g.n_max()) >= threshold);
        assert!(g.x(g.n_max() - 1) < threshold);
        assert!((g.step() - 1.0 / 75.0).abs() < 1e-15);
        assert_eq!(g.n_max(), 76);
    }

    #[test]
    fn rho_examples() {
        let g = example1_surplus();
        let x3 = g.x(3);
        assert_eq!(g.rho(x3).unwrap().index, 3);
        assert_eq!(g.rho(x3 + 0.5 * g.step()).unwrap().index, 3);
        let below = f64::from_bits(x3.to_bits() - 1);
        assert_eq!(g.rho(below).unwrap().index, 2);
        assert!(g.rho(-1e-12).is_err());
        let top = g.rho(g.x(g.n_max()) + 2.5 * g.step()).unwrap();
        assert!(top.overflow);
        assert_eq!(top.index, g.n_max() + 2);
    }

    #[test]
    fn sigma_examples() {
        let h = example1_intensity();
        assert_eq!(h.sigma(0.25).unwrap().index, 0);
        assert_eq!(h.sigma(h.lambda(4)).unwrap().index, 4);
        assert_eq!(h.sigma(h.lambda(4) + h.delta_lambda() / 2.0).unwrap().index, 5);
        assert!(h.sigma(0.2).is_err());
        assert!(h.sigma(h.lambda(60) + 1e-9).unwrap().overflow);
        assert!(!h.sigma(h.lambda(60)).unwrap().overflow);
    }

    #[test]
    fn decay_crossing_examples() {
        let h = example1_intensity();
        assert!(h.decay_crossings(0, 0.7, 10.0).is_empty());
        let t1 = (2.0f64).ln() / 0.7;
        assert!(h.decay_crossings(1, 0.7, 0.5).is_empty());
        let c = h.decay_crossings(2, 0.7, 5.0);
        assert_eq!(c.len(), 1);
        assert!((c[0].time - t1).abs() < 1e-12);
        assert!((c[0].time - 0.9902).abs() < 1e-4);
        assert_eq!(c[0].index, 1);
        // the ceiling projection flips exactly there
        let lam = |t: f64| 0.25 + (-0.7 * t).exp() * (h.lambda(2) - 0.25);
        assert_eq!(h.sigma(lam(t1 - 1e-9)).unwrap().index, 2);
        assert_eq!(h.sigma(lam(t1 + 1e-9)).unwrap().index, 1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn projections_are_idempotent(x in 0.0f64..5.0, lam in 0.25f64..9.0) {
                let g = SurplusGrid::new(141.0 / 700.0, 0.2, 28.0 / 423.0).unwrap();
                let h = IntensityGrid::new(0.25, 23.0 / 240.0, 60).unwrap();
                let n = g.rho(x).unwrap().index;
                prop_assert_eq!(g.rho(g.x(n)).unwrap().index, n);
                prop_assert!(g.x(n) <= x && x < g.x(n + 1));
                let m = h.sigma(lam).unwrap().index;
                prop_assert_eq!(h.sigma(h.lambda(m)).unwrap().index, m);
                let gap = h.lambda(m) - lam;
                prop_assert!(gap >= 0.0 && gap < h.delta_lambda());
            }

            #[test]
            fn crossings_agree_with_projection(m_start in 0usize..60, t in 0.0f64..6.0) {
                let h = IntensityGrid::new(0.25, 23.0 / 240.0, 60).unwrap();
                let d = 0.7;
                let crossings = h.decay_crossings(m_start, d, 6.0);
                for w in crossings.windows(2) {
                    prop_assert!(w[1].time > w[0].time);
                    prop_assert_eq!(w[0].index, w[1].index + 1);
                }
                let segment_index = crossings
                    .iter()
                    .take_while(|c| c.time <= t)
                    .last()
                    .map_or(m_start, |c| c.index);
                let lam = 0.25 + (-d * t).exp() * (h.lambda(m_start) - 0.25);
                let near_crossing = crossings.iter().any(|c| (c.time - t).abs() < 1e-9);
                prop_assume!(!near_crossing);
                prop_assert_eq!(h.sigma(lam).unwrap().index, segment_index);
            }
        }
    }
}
