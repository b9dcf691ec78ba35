//! Extended Kalman filter over a constant-velocity state.
//!
//! State layout is `[positions.., velocities..]`; the planar tracker uses
//! `(x, y, vx, vy)`. Every dense product goes through the counted kernels so
//! the cost of each stage can be read back per routine name:
//!
//! | routine            | stage                               |
//! |--------------------|-------------------------------------|
//! | `ekf_predict_mean` | `F x`                               |
//! | `ekf_predict_cov`  | `F P F^T + Q`                       |
//! | `ekf_gain`         | `S = H P H^T + R`, `K = P H^T S^-1` |
//! | `ekf_state_mean`   | `x + K y`                           |
//! | `ekf_state_cov`    | Joseph-form covariance              |

use nalgebra::{DMatrix, DVector, Matrix2};

use super::linalg::{add_assign, invert, matmul, matmul_bt, matvec, symmetrize};
use crate::error::{Error, Result};
use crate::ops::{self, OpCounts};
use crate::sensing::RangeMeasurement;
use crate::sim::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} entries, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let belief = Self { mean, cov };
        belief.validate("construction")?;
        Ok(belief)
    }

    /// Planar `(x, y, vx, vy)` belief with a diagonal covariance.
    pub fn planar(position: Vec2, velocity: Vec2, position_var: f64, velocity_var: f64) -> Result<Self> {
        Self::new(
            DVector::from_vec(vec![position.x, position.y, velocity.x, velocity.y]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![position_var, position_var, velocity_var, velocity_var])),
        )
    }

    pub fn validate(&self, stage: &'static str) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(stage));
        }
        let tol = 1e-9 * self.cov.amax().max(1.0);
        let n = self.cov.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > tol {
                    return Err(Error::NotPositiveDefinite(stage));
                }
            }
        }
        if self.cov.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(stage));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.mean[0], self.mean[1])
    }

    /// Planar velocity; assumes the `(x, y, vx, vy)` layout.
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.mean[2], self.mean[3])
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[(0, 0)], self.cov[(0, 1)], self.cov[(1, 0)], self.cov[(1, 1)])
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.trace()
    }
}

/// Constant-velocity transition `p' = p + v`, `v' = v + w` with
/// `w ~ N(0, accel_std^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    transition: DMatrix<f64>,
    process_noise: DMatrix<f64>,
}

impl MotionModel {
    pub fn constant_velocity(dims: usize, accel_std: f64) -> Self {
        let n = 2 * dims;
        let mut f = DMatrix::identity(n, n);
        let mut q = DMatrix::zeros(n, n);
        for i in 0..dims {
            f[(i, dims + i)] = 1.0;
            q[(dims + i, dims + i)] = accel_std * accel_std;
        }
        Self { transition: f, process_noise: q }
    }

    pub fn planar(accel_std: f64) -> Self {
        Self::constant_velocity(2, accel_std)
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }
}

pub fn ekf_predict(belief: &GaussianBelief, model: &MotionModel) -> Result<GaussianBelief> {
    if belief.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!("belief {} vs model {}", belief.dim(), model.dim())));
    }
    let f = model.transition();
    let mut t_mean = OpCounts::default();
    let mean = matvec(f, &belief.mean, &mut t_mean);
    ops::record("ekf_predict_mean", t_mean);

    let mut t_cov = OpCounts::default();
    let fp = matmul(f, &belief.cov, &mut t_cov);
    let mut cov = matmul_bt(&fp, f, &mut t_cov);
    add_assign(&mut cov, model.process_noise(), &mut t_cov);
    ops::record("ekf_predict_cov", t_cov);

    symmetrize(&mut cov);
    let out = GaussianBelief { mean, cov };
    out.validate("prediction")?;
    Ok(out)
}

/// A scalar observation that is linear in the state: `z = row . x + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub row: DVector<f64>,
    pub value: f64,
    pub noise_var: f64,
}

/// Exact Kalman update for linear observations.
pub fn kf_update(belief: &GaussianBelief, observations: &[LinearObservation]) -> Result<GaussianBelief> {
    let mut rows = Vec::with_capacity(observations.len());
    let mut innovations = Vec::with_capacity(observations.len());
    let mut noise = Vec::with_capacity(observations.len());
    for o in observations {
        check_noise(o.noise_var)?;
        innovations.push(o.value - o.row.dot(&belief.mean));
        rows.push(o.row.clone());
        noise.push(o.noise_var);
    }
    fuse(belief, &rows, &innovations, &noise)
}

/// Batch EKF update with range measurements `h = |uav - (x, y)|`.
///
/// A measurement taken from exactly the estimated position has no defined
/// Jacobian and is skipped.
pub fn ekf_update(belief: &GaussianBelief, measurements: &[RangeMeasurement]) -> Result<GaussianBelief> {
    let n = belief.dim();
    let p = belief.position();
    let mut rows = Vec::with_capacity(measurements.len());
    let mut innovations = Vec::with_capacity(measurements.len());
    let mut noise = Vec::with_capacity(measurements.len());
    for m in measurements {
        check_noise(m.noise_var)?;
        let delta = p - m.uav_position;
        let predicted = delta.norm();
        if predicted < 1e-9 {
            log::debug!("skipping range from UAV {} at the estimated target position", m.uav_id);
            continue;
        }
        let mut row = DVector::zeros(n);
        row[0] = delta.x / predicted;
        row[1] = delta.y / predicted;
        rows.push(row);
        innovations.push(m.range - predicted);
        noise.push(m.noise_var);
    }
    fuse(belief, &rows, &innovations, &noise)
}

fn check_noise(var: f64) -> Result<()> {
    if var > 0.0 && var.is_finite() {
        Ok(())
    } else {
        Err(Error::param("noise_var", format!("must be positive, got {var}")))
    }
}

fn fuse(belief: &GaussianBelief, rows: &[DVector<f64>], innovations: &[f64], noise: &[f64]) -> Result<GaussianBelief> {
    let m = rows.len();
    if m == 0 {
        return Ok(belief.clone());
    }
    let n = belief.dim();
    let h = DMatrix::from_fn(m, n, |i, j| rows[i][j]);

    let mut t_gain = OpCounts::default();
    let hp = matmul(&h, &belief.cov, &mut t_gain);
    let mut s = matmul_bt(&hp, &h, &mut t_gain);
    for i in 0..m {
        s[(i, i)] += noise[i];
    }
    t_gain.adds += m as u64;
    let s_inv = invert(&s, &mut t_gain)?;
    let pht = hp.transpose();
    let gain = matmul(&pht, &s_inv, &mut t_gain);
    ops::record("ekf_gain", t_gain);

    let mut t_mean = OpCounts::default();
    let y = DVector::from_column_slice(innovations);
    let mut mean = matvec(&gain, &y, &mut t_mean);
    mean += &belief.mean;
    t_mean.adds += n as u64;
    ops::record("ekf_state_mean", t_mean);

    // Joseph form: (I - K H) P (I - K H)^T + K R K^T
    let mut t_cov = OpCounts::default();
    let kh = matmul(&gain, &h, &mut t_cov);
    let i_kh = DMatrix::identity(n, n) - kh;
    t_cov.adds += (n * n) as u64;
    let left = matmul(&i_kh, &belief.cov, &mut t_cov);
    let mut cov = matmul_bt(&left, &i_kh, &mut t_cov);
    let kr = DMatrix::from_fn(n, m, |i, j| gain[(i, j)] * noise[j]);
    t_cov.multiplies += (n * m) as u64;
    let krk = matmul_bt(&kr, &gain, &mut t_cov);
    add_assign(&mut cov, &krk, &mut t_cov);
    ops::record("ekf_state_cov", t_cov);

    symmetrize(&mut cov);
    let out = GaussianBelief { mean, cov };
    out.validate("update")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{counters_report, loglog_exponent, CountingScope};
    use crate::sim::RngStream;

    fn meas(uav: Vec2, range: f64, var: f64) -> RangeMeasurement {
        RangeMeasurement { uav_id: 1, timestamp: 0, range, uav_position: uav, noise_var: var }
    }

    #[test]
    fn cv_propagation_without_noise() {
        let b = GaussianBelief::planar(Vec2::ZERO, Vec2::new(1.0, 0.0), 1.0, 1.0).unwrap();
        let out = ekf_predict(&b, &MotionModel::planar(0.0)).unwrap();
        assert_eq!(out.mean().as_slice(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn identity_covariance_propagates_to_f_ft() {
        let b = GaussianBelief::planar(Vec2::ZERO, Vec2::ZERO, 1.0, 1.0).unwrap();
        let model = MotionModel::planar(0.0);
        let out = ekf_predict(&b, &model).unwrap();
        // Oracle: F F^T written out for the planar CV model.
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        );
        assert_eq!(out.cov(), &expected);
    }

    #[test]
    fn empty_update_is_identity() {
        let b = GaussianBelief::planar(Vec2::new(3.0, 2.0), Vec2::ZERO, 5.0, 1.0).unwrap();
        assert_eq!(ekf_update(&b, &[]).unwrap(), b);
    }

    #[test]
    fn coincident_uav_is_skipped() {
        let b = GaussianBelief::planar(Vec2::new(3.0, 2.0), Vec2::ZERO, 5.0, 1.0).unwrap();
        assert_eq!(ekf_update(&b, &[meas(Vec2::new(3.0, 2.0), 1.0, 1.0)]).unwrap(), b);
    }

    #[test]
    fn rejects_non_positive_noise() {
        let b = GaussianBelief::planar(Vec2::new(3.0, 2.0), Vec2::ZERO, 5.0, 1.0).unwrap();
        assert!(ekf_update(&b, &[meas(Vec2::ZERO, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn collinear_range_matches_scalar_kalman_filter() {
        // Target on the x axis ahead of the UAV: h(x) = x - xu is exactly linear in x.
        let (m0, p0, r, xu, z) = (10.0, 4.0, 0.5, -5.0, 15.7);
        let mut cov = DMatrix::from_diagonal(&DVector::from_vec(vec![p0, 2.0, 1.0, 1.0]));
        cov[(0, 2)] = 0.3;
        cov[(2, 0)] = 0.3;
        let b = GaussianBelief::new(DVector::from_vec(vec![m0, 0.0, 1.0, 0.0]), cov).unwrap();
        let out = ekf_update(&b, &[meas(Vec2::new(xu, 0.0), z, r)]).unwrap();
        // Scalar KF on the x marginal.
        let k = p0 / (p0 + r);
        let mean = m0 + k * (z - (m0 - xu));
        let var = (1.0 - k) * p0;
        assert!((out.mean()[0] - mean).abs() < 1e-10);
        assert!((out.cov()[(0, 0)] - var).abs() < 1e-10);
        assert!((out.mean()[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn linear_update_equals_information_form() {
        let mut rng = RngStream::new(12, 0);
        let n = 4;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gaussian());
        let p = &a * a.transpose() + DMatrix::identity(n, n);
        let mean = DVector::from_fn(n, |_, _| rng.gaussian());
        let b = GaussianBelief::new(mean.clone(), p.clone()).unwrap();
        let obs: Vec<LinearObservation> = (0..3)
            .map(|_| LinearObservation { row: DVector::from_fn(n, |_, _| rng.gaussian()), value: rng.gaussian(), noise_var: 0.5 })
            .collect();
        let out = kf_update(&b, &obs).unwrap();
        let h = DMatrix::from_fn(3, n, |i, j| obs[i].row[j]);
        let z = DVector::from_fn(3, |i, _| obs[i].value);
        let r_inv = DMatrix::identity(3, 3) * 2.0;
        let info = p.clone().try_inverse().unwrap() + h.transpose() * &r_inv * &h;
        let post = info.try_inverse().unwrap();
        let post_mean = &post * (p.try_inverse().unwrap() * mean + h.transpose() * r_inv * z);
        assert!((out.cov() - &post).amax() < 1e-10);
        assert!((out.mean() - post_mean).amax() < 1e-10);
    }

    #[test]
    fn predict_cov_count_scales_cubically() {
        let _scope = CountingScope::new();
        let mut pts = Vec::new();
        for dims in [2usize, 4, 8, 16] {
            crate::ops::reset();
            let model = MotionModel::constant_velocity(dims, 0.1);
            let n = 2 * dims;
            let b = GaussianBelief::new(DVector::zeros(n), DMatrix::identity(n, n)).unwrap();
            ekf_predict(&b, &model).unwrap();
            pts.push((n as f64, counters_report("ekf_predict_cov").unwrap().multiplies as f64));
        }
        let ratio = pts[1].1 / pts[0].1;
        assert!((ratio / 8.0 - 1.0).abs() < 0.15, "ratio {ratio}");
        let e = loglog_exponent(&pts);
        assert!((2.5..=3.5).contains(&e), "{e}");
    }

    #[test]
    fn covariance_stays_spd_over_long_runs() {
        let mut rng = RngStream::new(77, 0);
        let model = MotionModel::planar(0.05);
        let mut b = GaussianBelief::planar(Vec2::new(10.0, -5.0), Vec2::ZERO, 1e4, 10.0).unwrap();
        for _ in 0..10_000 {
            b = ekf_predict(&b, &model).unwrap();
            let k = rng.index(4);
            let ms: Vec<RangeMeasurement> = (0..k)
                .map(|_| {
                    let u = Vec2::new(rng.gaussian(), rng.gaussian()) * 300.0;
                    let var = 0.01 + 10.0 * rng.uniform();
                    meas(u, (u.distance(b.position()) + var.sqrt() * rng.gaussian()).max(0.0), var)
                })
                .collect();
            b = ekf_update(&b, &ms).unwrap();
        }
        b.validate("long run").unwrap();
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn small_innovation_batch_matches_sequential(seed in 0u64..1000) {
                let mut rng = RngStream::new(seed, 0);
                let target = Vec2::new(rng.gaussian() * 50.0, rng.gaussian() * 50.0);
                let b = GaussianBelief::planar(target + Vec2::new(0.01, -0.01), Vec2::ZERO, 1e-2, 1.0).unwrap();
                let ms: Vec<RangeMeasurement> = (0..3).map(|k| {
                    let u = Vec2::from_angle(k as f64 * 2.1 + rng.uniform()) * (200.0 + 100.0 * rng.uniform());
                    meas(u, u.distance(target) + 1e-3 * rng.gaussian(), 1.0)
                }).collect();
                let batch = ekf_update(&b, &ms).unwrap();
                let mut seq = b.clone();
                for m in ms.iter().rev() {
                    seq = ekf_update(&seq, std::slice::from_ref(m)).unwrap();
                }
                prop_assert!((batch.mean() - seq.mean()).amax() < 1e-6);
                prop_assert!((batch.cov() - seq.cov()).amax() < 1e-6);
            }
        }
    }
}
