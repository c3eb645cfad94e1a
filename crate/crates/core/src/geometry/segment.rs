use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cost::{check_pair, solve_y_from_gradient, Cost, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    pub t: f64,
    pub y: Point,
    /// `p_t = t·p₁ + (1 − t)·p₀`
    pub p: DVector<f64>,
}

/// Targets `y_t` with `D_x c(anchor, y_t)` on the straight segment between
/// the endpoint gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSegment {
    pub anchor: Point,
    pub y0: Point,
    pub y1: Point,
    pub samples: Vec<SegmentSample>,
}

impl CSegment {
    /// Largest `|D_x c(anchor, y_t) − p_t|` over the samples.
    pub fn max_residual<C: Cost + ?Sized>(&self, cost: &C) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in &self.samples {
            let g = cost.grad_x(self.anchor.as_slice(), s.y.as_slice())?;
            worst = worst.max((g - &s.p).norm());
        }
        Ok(worst)
    }

    pub fn p0(&self) -> &DVector<f64> {
        &self.samples[0].p
    }

    pub fn p1(&self) -> &DVector<f64> {
        &self.samples[self.samples.len() - 1].p
    }
}

/// `m + 1` samples of the c-segment from `y0` to `y1` relative to `anchor`,
/// each solved by Newton warm-started at the previous sample.
pub fn c_segment<C: Cost + ?Sized>(cost: &C, anchor: &Point, y0: &Point, y1: &Point, m: usize) -> Result<CSegment> {
    if m == 0 {
        return Err(Error::InvalidInput("c-segment needs m ≥ 1".into()));
    }
    check_pair(cost, anchor.as_slice(), y0.as_slice())?;
    check_pair(cost, anchor.as_slice(), y1.as_slice())?;
    let p0 = cost.grad_x(anchor.as_slice(), y0.as_slice())?;
    let p1 = cost.grad_x(anchor.as_slice(), y1.as_slice())?;
    let mut samples = Vec::with_capacity(m + 1);
    let mut prev = y0.clone();
    for k in 0..=m {
        let t = k as f64 / m as f64;
        let p = &p1 * t + &p0 * (1.0 - t);
        let y = if k == 0 {
            y0.clone()
        } else if k == m {
            y1.clone()
        } else {
            solve_y_from_gradient(cost, anchor, &p, &prev)?
        };
        prev = y.clone();
        samples.push(SegmentSample { t, y, p });
    }
    Ok(CSegment {
        anchor: anchor.clone(),
        y0: y0.clone(),
        y1: y1.clone(),
        samples,
    })
}

/// The target `y(x, p_t)` for a single `t`, warm-started at `guess`.
pub(crate) fn segment_point<C: Cost + ?Sized>(
    cost: &C,
    anchor: &Point,
    p0: &DVector<f64>,
    p1: &DVector<f64>,
    t: f64,
    guess: &Point,
) -> Result<Point> {
    let p = p1 * t + p0 * (1.0 - t);
    solve_y_from_gradient(cost, anchor, &p, guess)
}
