//! Phosphene grid: receptive-field sampling, 8-level quantization, overlay
//! forcing and Gaussian dot rendering.

pub mod wire;

use serde::{Deserialize, Serialize};

pub use wire::{decode_frame, encode_frame, WireError, HEADER_LEN, WIRE_VERSION};

pub const LEVELS: u8 = 8;
pub const MAX_LEVEL: u8 = LEVELS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhospheneParams {
    pub rows: usize,
    pub cols: usize,
    /// Dot sigma at full level, as a fraction of the grid pitch.
    pub sigma_factor: f64,
}

impl Default for PhospheneParams {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            sigma_factor: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("phosphene grid needs at least 2x2, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("phosphene grid {rows}x{cols} is denser than the {width}x{height} image")]
    TooDense {
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
    },
}

/// Regular grid of phosphene centers over an image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhospheneLayout {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub centers: Vec<(f64, f64)>,
    pub pitch: f64,
    pub receptive_radius: f64,
    pub sigma_base: f64,
    /// Pixel indices whose centers fall inside each receptive disc.
    members: Vec<Vec<u32>>,
}

impl PhospheneLayout {
    pub fn build(rows: usize, cols: usize, width: usize, height: usize, sigma_factor: f64) -> Result<Self, LayoutError> {
        if rows < 2 || cols < 2 {
            return Err(LayoutError::TooSmall { rows, cols });
        }
        if cols > width || rows > height {
            return Err(LayoutError::TooDense { rows, cols, width, height });
        }
        let px = width as f64 / cols as f64;
        let py = height as f64 / rows as f64;
        let pitch = px.min(py);
        let radius = pitch / 2.0;
        let mut centers = Vec::with_capacity(rows * cols);
        let mut members = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let (x, y) = ((c as f64 + 0.5) * px, (r as f64 + 0.5) * py);
                centers.push((x, y));
                let mut m = Vec::new();
                let (u0, u1) = ((x - radius).floor().max(0.0) as usize, ((x + radius).ceil() as usize).min(width));
                let (v0, v1) = ((y - radius).floor().max(0.0) as usize, ((y + radius).ceil() as usize).min(height));
                for v in v0..v1 {
                    for u in u0..u1 {
                        let (dx, dy) = (u as f64 + 0.5 - x, v as f64 + 0.5 - y);
                        if dx * dx + dy * dy <= radius * radius {
                            m.push((v * width + u) as u32);
                        }
                    }
                }
                if m.is_empty() {
                    let (u, v) = ((x as usize).min(width - 1), (y as usize).min(height - 1));
                    m.push((v * width + u) as u32);
                }
                members.push(m);
            }
        }
        Ok(Self {
            rows,
            cols,
            width,
            height,
            centers,
            pitch,
            receptive_radius: radius,
            sigma_base: sigma_factor * pitch,
            members,
        })
    }

    pub fn from_params(params: &PhospheneParams, width: usize, height: usize) -> Result<Self, LayoutError> {
        Self::build(params.rows, params.cols, width, height, params.sigma_factor)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Pixel indices sampled by phosphene `i`.
    pub fn receptive_pixels(&self, i: usize) -> &[u32] {
        &self.members[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhospheneFrame {
    pub tick: u64,
    pub rows: u16,
    pub cols: u16,
    /// Row-major levels in `0..=7`.
    pub levels: Vec<u8>,
}

impl PhospheneFrame {
    pub fn blank(layout: &PhospheneLayout, tick: u64) -> Self {
        Self {
            tick,
            rows: layout.rows as u16,
            cols: layout.cols as u16,
            levels: vec![0; layout.len()],
        }
    }
}

/// Uniform 8-bin quantization of a mean intensity.
pub fn quantize_level(mean: f64) -> u8 {
    let l = (mean.max(0.0) * LEVELS as f64).floor();
    if l >= MAX_LEVEL as f64 {
        MAX_LEVEL
    } else {
        l as u8
    }
}

/// Mean intensity over each receptive disc, quantized.
pub fn sample_and_quantize(intensity: &[f64], layout: &PhospheneLayout, tick: u64) -> PhospheneFrame {
    assert_eq!(intensity.len(), layout.width * layout.height, "image size does not match layout");
    let levels = layout
        .members
        .iter()
        .map(|m| {
            let sum: f64 = m.iter().map(|&i| intensity[i as usize]).sum();
            quantize_level(sum / m.len() as f64)
        })
        .collect();
    PhospheneFrame {
        tick,
        rows: layout.rows as u16,
        cols: layout.cols as u16,
        levels,
    }
}

/// Phosphenes whose receptive disc contains any set mask pixel.
pub fn touched(mask: &[bool], layout: &PhospheneLayout) -> Vec<bool> {
    layout.members.iter().map(|m| m.iter().any(|&i| mask[i as usize])).collect()
}

/// Forces every phosphene touched by any mask to the top level.
pub fn apply_overlays(frame: &PhospheneFrame, layout: &PhospheneLayout, masks: &[&[bool]]) -> PhospheneFrame {
    let mut out = frame.clone();
    for mask in masks {
        assert_eq!(mask.len(), layout.width * layout.height, "mask size does not match layout");
        for (level, hit) in out.levels.iter_mut().zip(touched(mask, layout)) {
            if hit {
                *level = MAX_LEVEL;
            }
        }
    }
    out
}

/// Dot sigma in pixels for a level.
pub fn dot_sigma(layout: &PhospheneLayout, level: u8) -> f64 {
    layout.sigma_base * (0.5 + 0.5 * level as f64 / MAX_LEVEL as f64)
}

/// Additive Gaussian dots, clamped to `[0, 1]`. Each dot is cut off at 4 sigma.
pub fn render_dots(frame: &PhospheneFrame, layout: &PhospheneLayout) -> Vec<f64> {
    let (w, h) = (layout.width, layout.height);
    let mut img = vec![0.0; w * h];
    for (&(cx, cy), &level) in layout.centers.iter().zip(&frame.levels) {
        if level == 0 {
            continue;
        }
        let peak = level as f64 / MAX_LEVEL as f64;
        let sigma = dot_sigma(layout, level);
        let reach = 4.0 * sigma;
        let (u0, u1) = ((cx - reach).floor().max(0.0) as usize, ((cx + reach).ceil() as usize).min(w));
        let (v0, v1) = ((cy - reach).floor().max(0.0) as usize, ((cy + reach).ceil() as usize).min(h));
        for v in v0..v1 {
            for u in u0..u1 {
                let (dx, dy) = (u as f64 + 0.5 - cx, v as f64 + 0.5 - cy);
                let r2 = dx * dx + dy * dy;
                if r2 <= reach * reach {
                    img[v * w + u] += peak * (-r2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }
    for p in &mut img {
        *p = p.clamp(0.0, 1.0);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_centers() {
        let l = PhospheneLayout::build(2, 2, 100, 100, 0.35).unwrap();
        assert_eq!(l.centers, vec![(25.0, 25.0), (75.0, 25.0), (25.0, 75.0), (75.0, 75.0)]);
    }

    #[test]
    fn default_grid() {
        let l = PhospheneLayout::from_params(&PhospheneParams::default(), 256, 256).unwrap();
        assert_eq!(l.len(), 1024);
        assert_eq!(l.pitch, 8.0);
        assert_eq!(l.receptive_radius, 4.0);
    }

    #[test]
    fn too_dense() {
        assert!(matches!(
            PhospheneLayout::build(300, 300, 256, 256, 0.35),
            Err(LayoutError::TooDense { .. })
        ));
    }

    #[test]
    fn level_bins() {
        assert_eq!(quantize_level(0.0), 0);
        assert_eq!(quantize_level(0.124), 0);
        assert_eq!(quantize_level(0.125), 1);
        assert_eq!(quantize_level(0.5), 4);
        assert_eq!(quantize_level(0.99), 7);
        assert_eq!(quantize_level(1.0), 7);
        assert_eq!(quantize_level(3.0), 7);
    }
}
