//! Trajectory accuracy against ground truth.

use mrio_core::wrap_angle;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tum::TumPose;

pub const DEFAULT_MAX_DT: f64 = 0.05;
/// Path length of one relative-error window, meters.
pub const RTE_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("only {matched} poses matched within {max_dt} s; need at least 2")]
    InsufficientOverlap { matched: usize, max_dt: f64 },
    #[error("invalid max_dt {0}")]
    InvalidMaxDt(f64),
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub rmse_2d: f64,
    pub rmse_x: f64,
    pub rmse_y: f64,
    /// Degrees.
    pub rmse_yaw: f64,
    /// Mean translation drift per meter travelled over consecutive 1 m
    /// windows; 0 when ground truth covers less than one window.
    pub rel_trans_err: f64,
    pub n_matched_poses: usize,
}

/// Pairs each estimate with the nearest ground-truth stamp within `max_dt`.
/// Ground truth must be sorted by time.
pub fn associate<'a>(est: &'a [TumPose], gt: &'a [TumPose], max_dt: f64) -> Vec<(&'a TumPose, &'a TumPose)> {
    let mut out = Vec::new();
    for e in est {
        let i = gt.partition_point(|g| g.t < e.t);
        let best = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|k| gt.get(k))
            .min_by(|a, b| (a.t - e.t).abs().total_cmp(&(b.t - e.t).abs()));
        if let Some(g) = best {
            if (g.t - e.t).abs() <= max_dt {
                out.push((e, g));
            }
        }
    }
    out
}

pub fn evaluate(est: &[TumPose], gt: &[TumPose], max_dt: f64) -> Result<MetricsReport, MetricsError> {
    if !(max_dt >= 0.0) {
        return Err(MetricsError::InvalidMaxDt(max_dt));
    }
    let mut gt_sorted = gt.to_vec();
    gt_sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let pairs = associate(est, &gt_sorted, max_dt);
    let n = pairs.len();
    if n < 2 {
        return Err(MetricsError::InsufficientOverlap { matched: n, max_dt });
    }
    let mean = |f: &dyn Fn(&TumPose, &TumPose) -> f64| pairs.iter().map(|(e, g)| f(e, g)).sum::<f64>() / n as f64;
    let ex2 = mean(&|e, g| (e.x - g.x).powi(2));
    let ey2 = mean(&|e, g| (e.y - g.y).powi(2));
    let eyaw2 = mean(&|e, g| wrap_angle(e.yaw - g.yaw).powi(2));
    Ok(MetricsReport {
        rmse_2d: (ex2 + ey2).sqrt(),
        rmse_x: ex2.sqrt(),
        rmse_y: ey2.sqrt(),
        rmse_yaw: eyaw2.sqrt().to_degrees(),
        rel_trans_err: relative_translation_error(&pairs, RTE_WINDOW),
        n_matched_poses: n,
    })
}

/// Consecutive windows of at least `window` meters of ground-truth path. In
/// each, both displacements are expressed in their own trajectory's frame at
/// the window start; the norm of their difference divided by the window's
/// path length is that window's drift rate.
fn relative_translation_error(pairs: &[(&TumPose, &TumPose)], window: f64) -> f64 {
    let local = |a: &TumPose, b: &TumPose| {
        let (s, c) = a.yaw.sin_cos();
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let mut rates = Vec::new();
    let mut start = 0;
    let mut travelled = 0.0;
    for k in 1..pairs.len() {
        let (g0, g1) = (pairs[k - 1].1, pairs[k].1);
        travelled += (g1.x - g0.x).hypot(g1.y - g0.y);
        if travelled >= window {
            let (es, gs) = pairs[start];
            let (ee, ge) = pairs[k];
            let d_est = local(es, ee);
            let d_gt = local(gs, ge);
            rates.push((d_est.0 - d_gt.0).hypot(d_est.1 - d_gt.1) / travelled);
            start = k;
            travelled = 0.0;
        }
    }
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circle(n: usize) -> Vec<TumPose> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.1;
                let th = 0.05 * t;
                TumPose {
                    t,
                    x: 20.0 * th.sin(),
                    y: 20.0 * (1.0 - th.cos()),
                    yaw: th,
                }
            })
            .collect()
    }

    #[test]
    fn identical_traces_score_zero() {
        let gt = circle(500);
        let r = evaluate(&gt, &gt, DEFAULT_MAX_DT).unwrap();
        assert_eq!(
            r,
            MetricsReport {
                rmse_2d: 0.0,
                rmse_x: 0.0,
                rmse_y: 0.0,
                rmse_yaw: 0.0,
                rel_trans_err: 0.0,
                n_matched_poses: 500,
            }
        );
    }

    #[test]
    fn constant_offset_in_x() {
        let gt = circle(300);
        let est: Vec<_> = gt.iter().map(|p| TumPose { x: p.x + 1.0, ..*p }).collect();
        let r = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        assert_abs_diff_eq!(r.rmse_2d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rmse_x, 1.0, epsilon = 1e-12);
        assert_eq!(r.rmse_y, 0.0);
        assert_abs_diff_eq!(r.rel_trans_err, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_yaw_offset() {
        let gt = circle(300);
        let est: Vec<_> = gt
            .iter()
            .map(|p| TumPose {
                yaw: p.yaw + 2f64.to_radians(),
                ..*p
            })
            .collect();
        let r = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        assert_abs_diff_eq!(r.rmse_yaw, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn yaw_error_wraps() {
        let gt = vec![
            TumPose {
                t: 0.0,
                x: 0.0,
                y: 0.0,
                yaw: 3.1,
            };
            2
        ];
        let mut est = gt.clone();
        est[1].t = 0.01;
        for p in &mut est {
            p.yaw = -3.1;
        }
        let r = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        assert_abs_diff_eq!(r.rmse_yaw, (2.0 * std::f64::consts::PI - 6.2).to_degrees(), epsilon = 1e-9);
    }

    #[test]
    fn offsets_applied_to_either_side_match() {
        let gt = circle(200);
        let est: Vec<_> = gt
            .iter()
            .enumerate()
            .map(|(k, p)| TumPose {
                x: p.x + 0.01 * k as f64,
                y: p.y - 0.3,
                ..*p
            })
            .collect();
        let shift = |v: &[TumPose]| -> Vec<TumPose> {
            v.iter()
                .map(|p| TumPose {
                    x: p.x + 5.0,
                    y: p.y - 2.0,
                    ..*p
                })
                .collect()
        };
        let base = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        let both = evaluate(&shift(&est), &shift(&gt), DEFAULT_MAX_DT).unwrap();
        assert_abs_diff_eq!(base.rmse_2d, both.rmse_2d, epsilon = 1e-9);
        assert_abs_diff_eq!(base.rel_trans_err, both.rel_trans_err, epsilon = 1e-9);
    }

    #[test]
    fn straight_line_scale_error_gives_relative_error() {
        let gt: Vec<_> = (0..=100)
            .map(|k| TumPose {
                t: k as f64 * 0.1,
                x: k as f64 * 0.1,
                y: 0.0,
                yaw: 0.0,
            })
            .collect();
        let est: Vec<_> = gt.iter().map(|p| TumPose { x: p.x * 1.01, ..*p }).collect();
        let r = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        assert_abs_diff_eq!(r.rel_trans_err, 0.01, epsilon = 1e-9);
    }

    #[test]
    fn association_respects_max_dt() {
        // ground truth every 0.2 s, estimates 0.07 s after each
        let gt: Vec<_> = circle(20).into_iter().step_by(2).collect();
        let est: Vec<_> = gt.iter().map(|p| TumPose { t: p.t + 0.07, ..*p }).collect();
        assert!(matches!(
            evaluate(&est, &gt, DEFAULT_MAX_DT),
            Err(MetricsError::InsufficientOverlap { matched: 0, .. })
        ));
        let r = evaluate(&est, &gt, 0.08).unwrap();
        assert_eq!(r.n_matched_poses, 10);
    }

    #[test]
    fn report_json_round_trip_is_exact() {
        let gt = circle(100);
        let est: Vec<_> = gt
            .iter()
            .map(|p| TumPose {
                x: p.x + (p.t * 7.3).sin() / 3.0,
                yaw: p.yaw + 0.01,
                ..*p
            })
            .collect();
        let r = evaluate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        let back: MetricsReport = serde_json::from_str(&serde_json::to_string_pretty(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
