//! Synthetic tunnel: two vertical walls and a flat ceiling swept along a 2D
//! centerline, sampled into a static point set.

use std::collections::BTreeMap;

use mrio_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::profile::TruthSample;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunnelConfig {
    pub half_width: f64,
    pub wall_point_spacing: f64,
    pub ceiling_height: f64,
    /// Straight extension of the centerline past both path ends, meters.
    pub extension: f64,
}

impl Default for TunnelConfig {
    fn default() -> Self {
        Self {
            half_width: 1.5,
            wall_point_spacing: 0.3,
            ceiling_height: 2.5,
            extension: 10.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Surface {
    LeftWall,
    RightWall,
    Ceiling,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct WorldPoint {
    pub position: Vec3,
    pub surface: Surface,
}

const CELL: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct TunnelWorld {
    pub centerline: Vec<[f64; 2]>,
    pub half_width: f64,
    pub wall_point_spacing: f64,
    pub ceiling_height: f64,
    points: Vec<WorldPoint>,
    grid: BTreeMap<(i64, i64), Vec<usize>>,
}

impl TunnelWorld {
    /// Builds the tunnel around an explicit centerline polyline.
    pub fn new(centerline: Vec<[f64; 2]>, cfg: &TunnelConfig) -> Result<Self, String> {
        if !(cfg.half_width > 0.0 && cfg.wall_point_spacing > 0.0 && cfg.ceiling_height > 0.0) {
            return Err("tunnel half_width, spacing and ceiling must be positive".into());
        }
        if centerline.len() < 2 {
            return Err("centerline needs at least two waypoints".into());
        }
        let mut world = Self {
            centerline,
            half_width: cfg.half_width,
            wall_point_spacing: cfg.wall_point_spacing,
            ceiling_height: cfg.ceiling_height,
            points: Vec::new(),
            grid: BTreeMap::new(),
        };
        world.sample_surfaces();
        Ok(world)
    }

    /// Centerline resampled from a truth trace, extended straight past both
    /// ends.
    pub fn along_path(truth: &[TruthSample], cfg: &TunnelConfig) -> Result<Self, String> {
        let s = cfg.wall_point_spacing;
        let mut line: Vec<[f64; 2]> = Vec::new();
        for p in truth {
            match line.last() {
                Some(last) if (p.x - last[0]).hypot(p.y - last[1]) < s => {}
                _ => line.push([p.x, p.y]),
            }
        }
        let (first, last) = match (truth.first(), truth.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err("empty truth trace".into()),
        };
        let n_ext = (cfg.extension / s).ceil() as usize;
        let head: Vec<[f64; 2]> = (1..=n_ext)
            .rev()
            .map(|i| {
                let d = i as f64 * s;
                [first.x - d * first.theta.cos(), first.y - d * first.theta.sin()]
            })
            .collect();
        let tail = (1..=n_ext).map(|i| {
            let d = i as f64 * s;
            [last.x + d * last.theta.cos(), last.y + d * last.theta.sin()]
        });
        let mut centerline = head;
        centerline.extend(line);
        centerline.extend(tail);
        Self::new(centerline, cfg)
    }

    fn sample_surfaces(&mut self) {
        let s = self.wall_point_spacing;
        let hw = self.half_width;
        let n_up = ((self.ceiling_height - s / 2.0) / s).floor().max(0.0) as usize + 1;
        let n_across = ((2.0 * hw) / s).floor().max(1.0) as usize;
        for i in 0..self.centerline.len() {
            let [cx, cy] = self.centerline[i];
            let (a, b) = if i + 1 < self.centerline.len() {
                (self.centerline[i], self.centerline[i + 1])
            } else {
                (self.centerline[i - 1], self.centerline[i])
            };
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            let norm = tx.hypot(ty);
            if norm == 0.0 {
                continue;
            }
            let (nx, ny) = (-ty / norm, tx / norm);
            for k in 0..n_up {
                let z = s / 2.0 + k as f64 * s;
                if z >= self.ceiling_height {
                    break;
                }
                self.points.push(WorldPoint {
                    position: Vec3::new(cx + nx * hw, cy + ny * hw, z),
                    surface: Surface::LeftWall,
                });
                self.points.push(WorldPoint {
                    position: Vec3::new(cx - nx * hw, cy - ny * hw, z),
                    surface: Surface::RightWall,
                });
            }
            for k in 0..n_across {
                let off = -hw + (k as f64 + 0.5) * (2.0 * hw / n_across as f64);
                self.points.push(WorldPoint {
                    position: Vec3::new(cx + nx * off, cy + ny * off, self.ceiling_height),
                    surface: Surface::Ceiling,
                });
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            self.grid.entry(cell_of(p.position.x, p.position.y)).or_default().push(i);
        }
    }

    pub fn points(&self) -> &[WorldPoint] {
        &self.points
    }

    /// Indices of points whose xy lies within `radius` of `(x, y)`, in a
    /// deterministic order.
    pub fn near(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        let (lo_i, lo_j) = cell_of(x - radius, y - radius);
        let (hi_i, hi_j) = cell_of(x + radius, y + radius);
        let mut out = Vec::new();
        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                if let Some(ids) = self.grid.get(&(i, j)) {
                    out.extend(ids.iter().copied().filter(|&k| {
                        let p = self.points[k].position;
                        (p.x - x).hypot(p.y - y) <= radius
                    }));
                }
            }
        }
        out
    }

    /// Distance from `p` to the closest sampled surface point.
    pub fn nearest_distance(&self, p: &Vec3) -> f64 {
        let mut r = CELL;
        loop {
            let best = self
                .near(p.x, p.y, r)
                .into_iter()
                .map(|k| (self.points[k].position - p).norm())
                .fold(f64::INFINITY, f64::min);
            if best <= r || r > 1e4 {
                return best;
            }
            r *= 2.0;
        }
    }
}

fn cell_of(x: f64, y: f64) -> (i64, i64) {
    ((x / CELL).floor() as i64, (y / CELL).floor() as i64)
}
