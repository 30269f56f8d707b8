use serde::{Deserialize, Serialize};

use super::{NoiseSpec, DEFAULT_FOCAL_PX};
use crate::error::{Error, Result};

/// Cartesian product of noise levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub point_sigma_px: Vec<f64>,
    pub affine_sigma: Vec<f64>,
    pub normal_sigma_deg: Vec<f64>,
    pub focal_px: f64,
}

fn steps(stop: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| stop * i as f64 / (count - 1) as f64).collect()
}

impl NoiseGrid {
    /// Point noise 0–10 px against affine noise 0–0.05, normal noise 1°.
    pub fn point_affine() -> Self {
        Self {
            point_sigma_px: steps(10.0, 11),
            affine_sigma: steps(0.05, 6),
            normal_sigma_deg: vec![1.0],
            focal_px: DEFAULT_FOCAL_PX,
        }
    }

    /// Point noise 0–10 px against normal noise 0–10°, affine noise 0.01.
    pub fn point_normal() -> Self {
        Self {
            point_sigma_px: steps(10.0, 11),
            affine_sigma: vec![0.01],
            normal_sigma_deg: steps(10.0, 11),
            focal_px: DEFAULT_FOCAL_PX,
        }
    }

    pub fn single(spec: NoiseSpec) -> Self {
        Self {
            point_sigma_px: vec![spec.point_sigma_px],
            affine_sigma: vec![spec.affine_sigma],
            normal_sigma_deg: vec![spec.normal_sigma_deg],
            focal_px: spec.focal_px,
        }
    }

    /// Cells in row-major order (point, then affine, then normal).
    pub fn cells(&self) -> Result<Vec<NoiseSpec>> {
        let mut out = Vec::new();
        for &p in &self.point_sigma_px {
            for &a in &self.affine_sigma {
                for &n in &self.normal_sigma_deg {
                    out.push(NoiseSpec::new(p, a, n, self.focal_px)?);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("noise grid has no cells".into()));
        }
        Ok(out)
    }
}

/// Parses `v1,v2,...` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("malformed grid '{text}'"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad());
        };
        let (start, stop) = (parse(start)?, parse(stop)?);
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        match count {
            0 => return Err(bad()),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        text.split(',').map(parse).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(bad());
    }
    Ok(values)
}
