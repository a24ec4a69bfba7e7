//! Body-frame ego-velocity from Doppler returns.
//!
//! Every static target contributes one row `uᵀ v = -doppler`, with `u` the
//! unit line of sight. The overdetermined system `H v = y` is solved in the
//! least-squares sense with a Householder QR factorization of `H`, which gives
//! the same minimizer as the normal equations `(HᵀH)⁻¹Hᵀy` without squaring
//! the condition number.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::radar::BodyTarget;

/// Stacked line-of-sight rows and negated Dopplers.
#[derive(Clone, Debug, PartialEq)]
pub struct DopplerSystem {
    pub los_rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl DopplerSystem {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    fn select(&self, rows: &[usize]) -> DopplerSystem {
        DopplerSystem {
            los_rows: self.los_rows.select_rows(rows),
            rhs: self.rhs.select_rows(rows),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EgoVelocity {
    pub v: Vec3,
    pub residual_rms: f64,
    /// Condition number of `HᵀH`.
    pub condition: f64,
    pub n_targets: usize,
}

impl EgoVelocity {
    /// Component along the body forward axis.
    pub fn forward_speed(&self) -> f64 {
        self.v.x
    }

    pub fn lateral_speed(&self) -> f64 {
        self.v.y
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoVelocityConfig {
    pub min_targets: usize,
    pub max_condition: f64,
    /// Floor on the radar speed variance handed to the filters, (m/s)².
    pub variance_floor: f64,
    pub outlier_rejection: OutlierRejection,
    pub ransac_iterations: usize,
    pub ransac_threshold: f64,
    pub ransac_seed: u64,
}

impl Default for EgoVelocityConfig {
    fn default() -> Self {
        Self {
            min_targets: 3,
            max_condition: 1e4,
            // 3 cm/s Doppler resolution of the IWR6843AOP
            variance_floor: 0.03 * 0.03,
            outlier_rejection: OutlierRejection::RangeGate,
            ransac_iterations: 50,
            ransac_threshold: 0.1,
            ransac_seed: 0,
        }
    }
}

/// How outliers are removed before the least-squares solve. The range gate
/// runs in both modes; `Ransac` additionally keeps only the largest consensus
/// set and exists as a comparison baseline.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRejection {
    #[default]
    RangeGate,
    Ransac,
}

impl EgoVelocityConfig {
    /// Radar speed variance used by both filter stages.
    pub fn measurement_variance(&self, ego: &EgoVelocity) -> f64 {
        (ego.residual_rms * ego.residual_rms).max(self.variance_floor)
    }
}

/// Rows `uⱼᵀ`, right-hand side `-dopplerⱼ`.
pub fn build_system(targets: &[BodyTarget]) -> DopplerSystem {
    let n = targets.len();
    let los_rows = DMatrix::from_fn(n, 3, |i, j| targets[i].los[j]);
    let rhs = DVector::from_iterator(n, targets.iter().map(|t| -t.doppler));
    DopplerSystem { los_rows, rhs }
}

/// Condition number of the 3×3 Gram matrix `HᵀH`, `+∞` when singular.
pub fn gram_condition(h: &DMatrix<f64>) -> f64 {
    let gram: Matrix3<f64> = {
        let g = h.transpose() * h;
        Matrix3::from_fn(|i, j| g[(i, j)])
    };
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if max <= 0.0 || min <= max * f64::EPSILON * 16.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares ego-velocity.
pub fn solve(sys: &DopplerSystem, min_targets: usize, max_condition: f64) -> Result<EgoVelocity> {
    let n = sys.len();
    if n < min_targets.max(3) {
        return Err(Error::InsufficientTargets {
            found: n,
            needed: min_targets.max(3),
        });
    }
    let condition = gram_condition(&sys.los_rows);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::DegenerateGeometry { condition });
    }

    let qr = sys.los_rows.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &sys.rhs;
    let x = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::DegenerateGeometry {
            condition: f64::INFINITY,
        })?;
    let v = Vec3::new(x[0], x[1], x[2]);
    let residual = &sys.los_rows * &x - &sys.rhs;
    let residual_rms = residual.norm() / (n as f64).sqrt();
    Ok(EgoVelocity {
        v,
        residual_rms,
        condition,
        n_targets: n,
    })
}

/// Consensus-set variant: repeatedly fits minimal 3-row subsets, keeps the
/// subset with the most rows within `threshold` m/s, then refits on it.
pub fn solve_ransac(sys: &DopplerSystem, cfg: &EgoVelocityConfig) -> Result<EgoVelocity> {
    let n = sys.len();
    if n < cfg.min_targets.max(3) {
        return Err(Error::InsufficientTargets {
            found: n,
            needed: cfg.min_targets.max(3),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ransac_seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..cfg.ransac_iterations {
        let picks = sample(&mut rng, n, 3).into_vec();
        let Ok(fit) = solve(&sys.select(&picks), 3, cfg.max_condition) else {
            continue;
        };
        let pred = &sys.los_rows * DVector::from_column_slice(fit.v.as_slice());
        let inliers: Vec<usize> = (0..n)
            .filter(|&i| (pred[i] - sys.rhs[i]).abs() <= cfg.ransac_threshold)
            .collect();
        if inliers.len() > best.len() {
            best = inliers;
        }
    }
    if best.is_empty() {
        return solve(sys, cfg.min_targets, cfg.max_condition);
    }
    solve(&sys.select(&best), cfg.min_targets, cfg.max_condition)
}

/// Dispatches on the configured outlier rejection mode.
pub fn estimate(targets: &[BodyTarget], cfg: &EgoVelocityConfig) -> Result<EgoVelocity> {
    let sys = build_system(targets);
    match cfg.outlier_rejection {
        OutlierRejection::RangeGate => solve(&sys, cfg.min_targets, cfg.max_condition),
        OutlierRejection::Ransac => solve_ransac(&sys, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn target(los: Vec3, doppler: f64) -> BodyTarget {
        BodyTarget {
            position: los * 3.0,
            doppler,
            los,
            radar_id: 1,
        }
    }

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if v.norm() > 1e-6 {
                return v.normalize();
            }
        }
    }

    /// Normal equations solved by Cramer's rule, independent of the QR path.
    fn normal_equations(sys: &DopplerSystem) -> Vec3 {
        let g = sys.los_rows.transpose() * &sys.los_rows;
        let b = sys.los_rows.transpose() * &sys.rhs;
        let m = Matrix3::from_fn(|i, j| g[(i, j)]);
        let det = m.determinant();
        let col = |k: usize| {
            let mut mk = m;
            for i in 0..3 {
                mk[(i, k)] = b[i];
            }
            mk.determinant() / det
        };
        Vec3::new(col(0), col(1), col(2))
    }

    #[test]
    fn build_system_sign_convention() {
        let sys = build_system(&[target(Vec3::x(), -1.0)]);
        assert_eq!(sys.los_rows.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert_eq!(sys.rhs[0], 1.0);
        let empty = build_system(&[]);
        assert!(empty.is_empty());
    }

    #[test]
    fn build_system_rows_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let targets: Vec<_> = (0..50)
            .map(|_| {
                let u = random_unit(&mut rng);
                target(u, rng.random_range(-1.0..1.0))
            })
            .collect();
        let sys = build_system(&targets);
        for row in sys.los_rows.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_rows_recover_velocity() {
        let targets = [
            target(Vec3::x(), -1.0),
            target(Vec3::y(), 0.0),
            target(Vec3::z(), 0.0),
        ];
        let ego = solve(&build_system(&targets), 3, 1e4).unwrap();
        assert!((ego.v - Vec3::new(1.0, 0.0, 0.0)).amax() < 1e-15);
        assert!(ego.residual_rms < 1e-15);
        assert!((ego.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_line_of_sight_is_degenerate() {
        let targets: Vec<_> = (0..10).map(|_| target(Vec3::x(), -1.0)).collect();
        assert!(matches!(
            solve(&build_system(&targets), 3, 1e4),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn too_few_targets() {
        let targets = [target(Vec3::x(), -1.0), target(Vec3::y(), 0.0)];
        assert_eq!(
            solve(&build_system(&targets), 3, 1e4),
            Err(Error::InsufficientTargets { found: 2, needed: 3 })
        );
    }

    #[test]
    fn random_consistent_system_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = Vec3::new(0.7, -0.1, 0.05);
        let targets: Vec<_> = (0..200)
            .map(|_| {
                let u = random_unit(&mut rng);
                target(u, -u.dot(&truth))
            })
            .collect();
        let sys = build_system(&targets);
        let ego = solve(&sys, 3, 1e4).unwrap();
        assert!((ego.v - truth).amax() < 1e-9);
        // matches the normal-equation closed form
        assert!((ego.v - normal_equations(&sys)).amax() < 1e-9);
    }

    #[test]
    fn forward_speed_projection() {
        let mk = |v: Vec3| EgoVelocity {
            v,
            residual_rms: 0.0,
            condition: 1.0,
            n_targets: 3,
        };
        assert_eq!(mk(Vec3::new(1.2, 0.05, 0.0)).forward_speed(), 1.2);
        assert_eq!(mk(Vec3::zeros()).forward_speed(), 0.0);
        assert_eq!(mk(Vec3::new(-0.5, 0.0, 0.0)).forward_speed(), -0.5);
    }

    #[test]
    fn variance_has_floor() {
        let cfg = EgoVelocityConfig::default();
        let mut ego = EgoVelocity {
            v: Vec3::zeros(),
            residual_rms: 0.0,
            condition: 1.0,
            n_targets: 3,
        };
        assert_eq!(cfg.measurement_variance(&ego), 0.03 * 0.03);
        ego.residual_rms = 0.1;
        assert!((cfg.measurement_variance(&ego) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn noise_consistency_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma = 0.03;
        let n = 30;
        let noise = Normal::new(0.0, sigma).unwrap();
        let truth = Vec3::new(1.0, 0.2, -0.1);
        let mut total = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let targets: Vec<_> = (0..n)
                .map(|_| {
                    let u = random_unit(&mut rng);
                    target(u, -u.dot(&truth) + noise.sample(&mut rng))
                })
                .collect();
            let ego = solve(&build_system(&targets), 3, 1e4).unwrap();
            total += (ego.v - truth).norm();
        }
        let n_eff = n as f64 / 3.0;
        assert!(total / trials as f64 <= 5.0 * sigma / n_eff.sqrt());
    }

    #[test]
    fn ransac_drops_gross_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = Vec3::new(1.0, 0.0, 0.0);
        let mut targets: Vec<_> = (0..40)
            .map(|_| {
                let u = random_unit(&mut rng);
                target(u, -u.dot(&truth))
            })
            .collect();
        for _ in 0..8 {
            let u = random_unit(&mut rng);
            targets.push(target(u, rng.random_range(2.0..4.0)));
        }
        let cfg = EgoVelocityConfig {
            outlier_rejection: OutlierRejection::Ransac,
            ..Default::default()
        };
        let ego = estimate(&targets, &cfg).unwrap();
        assert!((ego.v - truth).amax() < 1e-9);
        assert_eq!(ego.n_targets, 40);
    }

    proptest! {
        #[test]
        fn exact_recovery_and_normal_equations(
            truth in prop::array::uniform3(-3.0..3.0f64),
            seed in any::<u64>(),
            n in 3usize..60,
        ) {
            let truth = Vec3::from(truth);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let targets: Vec<_> = (0..n)
                .map(|_| {
                    let u = random_unit(&mut rng);
                    target(u, -u.dot(&truth))
                })
                .collect();
            let sys = build_system(&targets);
            match solve(&sys, 3, 1e4) {
                Ok(ego) => {
                    prop_assert!((ego.v - truth).amax() < 1e-9);
                    let x = DVector::from_column_slice(ego.v.as_slice());
                    let grad = sys.los_rows.transpose() * (&sys.los_rows * x - &sys.rhs);
                    prop_assert!(grad.amax() < 1e-8);
                }
                Err(Error::DegenerateGeometry { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn range_scaling_does_not_change_solution(seed in any::<u64>(), exp in -4i32..5, c in 0.1..20.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<(Vec3, f64)> = (0..20)
                .map(|_| (random_unit(&mut rng) * rng.random_range(0.5..8.0), rng.random_range(-1.0..1.0)))
                .collect();
            let targets_at = |scale: f64| -> Vec<BodyTarget> {
                raw.iter()
                    .map(|(p, d)| {
                        let p = p * scale;
                        target(p / p.norm(), *d)
                    })
                    .collect()
            };
            let base = solve(&build_system(&targets_at(1.0)), 3, 1e6).unwrap();
            // power-of-two scaling is exact in binary floating point
            let pow2 = solve(&build_system(&targets_at(2f64.powi(exp))), 3, 1e6).unwrap();
            prop_assert_eq!(base.v, pow2.v);
            let other = solve(&build_system(&targets_at(c)), 3, 1e6).unwrap();
            prop_assert!((base.v - other.v).amax() < 1e-12);
        }
    }
}
