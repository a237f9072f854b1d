//! Point-mass process on the unit box, optionally observed as rendered images.

use super::{GoalProcess, PixelSpec, PointMassDynamics, ProcessKind, SuccessCriterion};
use crate::error::{Error, Result};

fn validate(dim: usize, max_step: f64) -> Result<()> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::invalid("point-mass dim must be 1 or 2"));
    }
    if max_step <= 0.0 {
        return Err(Error::invalid("max_step must be positive"));
    }
    Ok(())
}

/// Continuous process on `[0,1]^dim` with actions in `[-1,1]^dim`:
/// `s' = clamp(s + a * max_step + eps)`, `eps ~ N(0, noise_std^2 I)`.
pub fn make_pointmass(dim: usize, max_step: f64, noise_std: f64) -> Result<GoalProcess> {
    validate(dim, max_step)?;
    Ok(GoalProcess {
        kind: ProcessKind::PointMass(PointMassDynamics {
            dim,
            max_step,
            noise_std,
        }),
        horizon: 100,
        success: SuccessCriterion::L2Ball { radius: 0.05 },
        pixel: None,
        name: format!("pointmass{dim}d"),
    })
}

/// Point-mass whose observations are rendered discs instead of coordinates.
pub fn make_pointmass_pixel(
    dim: usize,
    max_step: f64,
    noise_std: f64,
    pixel: PixelSpec,
) -> Result<GoalProcess> {
    let mut p = make_pointmass(dim, max_step, noise_std)?;
    if pixel.h < 2 * pixel.radius || pixel.w < 2 * pixel.radius {
        return Err(Error::invalid("image too small for the disc radius"));
    }
    p.pixel = Some(pixel);
    p.name = format!("pointmass{dim}d-pixel{}x{}", pixel.h, pixel.w);
    Ok(p)
}
