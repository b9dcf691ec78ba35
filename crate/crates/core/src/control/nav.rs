use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ekf_predict, GaussianBelief, MotionModel};
use crate::sensing::RangeNoise;
use crate::sim::{clamped_displacement, MobilityLimits, Vec2};

const FEASIBILITY_TOL: f64 = 1e-6;
const MAX_PROJECTION_ROUNDS: usize = 20;
const MAX_CORRECTION_ROUNDS: usize = 20;
const REPAIR_HEADINGS: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConstraints {
    pub limits: MobilityLimits,
    /// Minimum inter-UAV separation (m).
    pub d_min_uav: f64,
    /// Minimum distance to the estimated target position (m).
    pub d_safe_target: f64,
}

impl Default for NavConstraints {
    fn default() -> Self {
        Self { limits: MobilityLimits::default(), d_min_uav: 10.0, d_safe_target: 5.0 }
    }
}

impl NavConstraints {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if !(self.d_min_uav > 0.0) {
            return Err(Error::param("d_min_uav", format!("must be positive, got {}", self.d_min_uav)));
        }
        if !(self.d_safe_target >= 0.0) {
            return Err(Error::param("d_safe_target", format!("must be non-negative, got {}", self.d_safe_target)));
        }
        Ok(())
    }
}

/// Trace of the target position covariance after one prediction step and a
/// range measurement from each candidate UAV position.
///
/// With `P` the predicted position covariance and `u_i` the unit vector from
/// the predicted mean to UAV `i` at distance `d_i`, the posterior position
/// covariance is `S = (P^-1 + sum_i w(d_i) u_i u_i^T)^-1` with
/// `w(d) = 1 / var(d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavCost {
    mean: Vec2,
    prior_info: Matrix2<f64>,
    noise: RangeNoise,
}

impl NavCost {
    pub fn new(belief: &GaussianBelief, model: &MotionModel, noise: RangeNoise) -> Result<Self> {
        let predicted = ekf_predict(belief, model)?;
        Self::from_predicted(predicted.position(), predicted.position_cov(), noise)
    }

    pub fn from_predicted(mean: Vec2, position_cov: Matrix2<f64>, noise: RangeNoise) -> Result<Self> {
        let prior_info = position_cov.try_inverse().ok_or(Error::Singular("navigation prior"))?;
        Ok(Self { mean, prior_info, noise })
    }

    pub fn predicted_mean(&self) -> Vec2 {
        self.mean
    }

    fn posterior(&self, positions: &[Vec2]) -> Result<Matrix2<f64>> {
        let mut info = self.prior_info;
        for p in positions {
            if let Some((u, d)) = self.bearing(*p) {
                info += (u * u.transpose()) / self.noise.variance_at(d);
            }
        }
        info.try_inverse().ok_or(Error::Singular("navigation posterior"))
    }

    fn bearing(&self, p: Vec2) -> Option<(Vector2<f64>, f64)> {
        let delta = p - self.mean;
        let d = delta.norm();
        (d > 1e-9).then(|| (Vector2::new(delta.x / d, delta.y / d), d))
    }

    pub fn cost(&self, positions: &[Vec2]) -> Result<f64> {
        Ok(self.posterior(positions)?.trace())
    }

    pub fn gradient(&self, positions: &[Vec2]) -> Result<Vec<Vec2>> {
        let s = self.posterior(positions)?;
        let m = s * s;
        Ok(positions
            .iter()
            .map(|p| match self.bearing(*p) {
                None => Vec2::ZERO,
                Some((u, d)) => {
                    let w = 1.0 / self.noise.variance_at(d);
                    let w_prime = -w * w * self.noise.variance_slope(d);
                    let mu = m * u;
                    let q = u.dot(&mu);
                    let tangential = mu - u * q;
                    let g = -(u * (w_prime * q) + tangential * (2.0 * w / d));
                    Vec2::new(g.x, g.y)
                }
            })
            .collect())
    }
}

pub fn nav_cost(positions: &[Vec2], belief: &GaussianBelief, model: &MotionModel, noise: RangeNoise) -> Result<f64> {
    NavCost::new(belief, model, noise)?.cost(positions)
}

pub fn nav_gradient(
    positions: &[Vec2],
    belief: &GaussianBelief,
    model: &MotionModel,
    noise: RangeNoise,
) -> Result<Vec<Vec2>> {
    NavCost::new(belief, model, noise)?.gradient(positions)
}

/// `I - A^T (A A^T)^-1 A` after dropping rows of `a` that are linearly
/// dependent on earlier ones. Also returns the indices of the rows kept.
pub fn projection_matrix(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = a.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for r in 0..a.nrows() {
        let row: DVector<f64> = a.row(r).transpose();
        let scale = row.norm();
        if scale == 0.0 {
            continue;
        }
        let mut resid = row.clone();
        for b in &basis {
            resid -= b * b.dot(&resid);
        }
        let rn = resid.norm();
        if rn > 1e-9 * scale {
            basis.push(resid / rn);
            kept.push(r);
        }
    }
    if kept.is_empty() {
        return Ok((DMatrix::identity(n, n), kept));
    }
    let ak = a.select_rows(&kept);
    let gram = &ak * ak.transpose();
    let gram_inv = gram.try_inverse().ok_or(Error::Singular("projection"))?;
    Ok((DMatrix::identity(n, n) - ak.transpose() * gram_inv * &ak, kept))
}

/// Projects `raw` onto the null space of the active constraint rows `a`.
/// A degenerate active set yields a zero step.
pub fn project_step(raw: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return raw.clone();
    }
    match projection_matrix(a) {
        Ok((p, _)) => p * raw,
        Err(e) => {
            log::warn!("holding position: {e}");
            DVector::zeros(raw.len())
        }
    }
}

/// A distance constraint `|x_i - x_j| >= bound` (or `|x_i - c| >= bound`).
#[derive(Debug, Clone, Copy)]
enum Constraint {
    Pair(usize, usize),
    Standoff(usize),
}

struct Problem<'a> {
    start: &'a [Vec2],
    target: Vec2,
    c: &'a NavConstraints,
}

impl Problem<'_> {
    fn next(&self, s: &DVector<f64>) -> Vec<Vec2> {
        self.start.iter().enumerate().map(|(i, p)| *p + Vec2::new(s[2 * i], s[2 * i + 1])).collect()
    }

    fn slack(&self, k: Constraint, q: &[Vec2]) -> f64 {
        match k {
            Constraint::Pair(i, j) => q[i].distance(q[j]) - self.c.d_min_uav,
            Constraint::Standoff(i) => q[i].distance(self.target) - self.c.d_safe_target,
        }
    }

    fn violated(&self, q: &[Vec2], tol: f64) -> Vec<Constraint> {
        let n = q.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.slack(Constraint::Pair(i, j), q) < -tol {
                    out.push(Constraint::Pair(i, j));
                }
            }
        }
        for i in 0..n {
            if self.slack(Constraint::Standoff(i), q) < -tol {
                out.push(Constraint::Standoff(i));
            }
        }
        out
    }

    /// Gradient rows of the active distances w.r.t. the stacked positions `at`.
    fn rows(&self, active: &[Constraint], at: &[Vec2], fallback: &[Vec2]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(active.len(), 2 * at.len());
        let unit = |d: Vec2, alt: Vec2| d.normalized().or(alt.normalized()).unwrap_or(Vec2::new(1.0, 0.0));
        for (r, k) in active.iter().enumerate() {
            match *k {
                Constraint::Pair(i, j) => {
                    let e = unit(at[i] - at[j], fallback[i] - fallback[j]);
                    a[(r, 2 * i)] = e.x;
                    a[(r, 2 * i + 1)] = e.y;
                    a[(r, 2 * j)] = -e.x;
                    a[(r, 2 * j + 1)] = -e.y;
                }
                Constraint::Standoff(i) => {
                    let e = unit(at[i] - self.target, fallback[i] - self.target);
                    a[(r, 2 * i)] = e.x;
                    a[(r, 2 * i + 1)] = e.y;
                }
            }
        }
        a
    }

    /// Minimum-norm Newton steps along the constraint normals until the
    /// violated distances are restored.
    fn correct(&self, s: &mut DVector<f64>) {
        for _ in 0..MAX_CORRECTION_ROUNDS {
            let q = self.next(s);
            let active = self.violated(&q, FEASIBILITY_TOL * 0.1);
            if active.is_empty() {
                return;
            }
            let j = self.rows(&active, &q, self.start);
            let Ok((_, kept)) = projection_matrix(&j) else { return };
            let jk = j.select_rows(&kept);
            let deficit = DVector::from_iterator(kept.len(), kept.iter().map(|&r| -self.slack(active[r], &q)));
            let Some(g) = (&jk * jk.transpose()).try_inverse() else { return };
            *s += jk.transpose() * (g * deficit);
        }
    }

    fn rescale_speeds(&self, s: &mut DVector<f64>, directions: &[Vec2]) {
        let lim = self.c.limits;
        for i in 0..self.start.len() {
            let v = Vec2::new(s[2 * i], s[2 * i + 1]);
            let len = v.norm();
            let v = if len < 1e-12 { directions[i] * lim.v_min } else { v * (lim.clamp(len) / len) };
            s[2 * i] = v.x;
            s[2 * i + 1] = v.y;
        }
    }

    fn speeds_ok(&self, s: &DVector<f64>) -> bool {
        let lim = self.c.limits;
        (0..self.start.len()).all(|i| {
            let v = Vector2::new(s[2 * i], s[2 * i + 1]).norm();
            v >= lim.v_min - FEASIBILITY_TOL && v <= lim.v_max + FEASIBILITY_TOL
        })
    }

    /// Moves each UAV still in violation to the best sampled feasible step,
    /// holding the others fixed.
    fn repair(&self, s: &mut DVector<f64>, cost: &NavCost) -> Result<()> {
        let n = self.start.len();
        let lim = self.c.limits;
        let speeds = [lim.v_min, 0.5 * (lim.v_min + lim.v_max), lim.v_max];
        for i in 0..n {
            let q = self.next(s);
            let mine = |k: &Constraint| matches!(*k, Constraint::Pair(a, b) if a == i || b == i)
                || matches!(*k, Constraint::Standoff(a) if a == i);
            if !self.violated(&q, FEASIBILITY_TOL).iter().any(mine) {
                continue;
            }
            let mut best: Option<(bool, f64, Vec2)> = None;
            for h in 0..REPAIR_HEADINGS {
                let dir = Vec2::from_angle(h as f64 * std::f64::consts::TAU / REPAIR_HEADINGS as f64);
                for &v in &speeds {
                    let mut trial = q.clone();
                    trial[i] = self.start[i] + dir * v;
                    let min_slack = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| self.slack(Constraint::Pair(i, j), &trial))
                        .chain(std::iter::once(self.slack(Constraint::Standoff(i), &trial)))
                        .fold(f64::INFINITY, f64::min);
                    let feasible = min_slack >= 0.0;
                    let score = if feasible { -cost.cost(&trial)? } else { min_slack };
                    if best.is_none_or(|(bf, bs, _)| (feasible, score) > (bf, bs)) {
                        best = Some((feasible, score, dir * v));
                    }
                }
            }
            let (feasible, _, step) = best.expect("at least one candidate");
            if !feasible {
                log::warn!("no feasible step for UAV index {i}; taking the least violating one");
            }
            s[2 * i] = step.x;
            s[2 * i + 1] = step.y;
        }
        Ok(())
    }
}

/// Projected steepest descent on the navigation cost for every UAV in
/// `positions`, returning the next waypoint of each.
///
/// Each UAV first steps at `v_max` against its gradient. Constraints violated
/// by that step (inter-UAV spacing, standoff from the predicted target
/// position) are linearized at the current positions and the step is
/// projected onto their null space, then corrected along the constraint
/// normals and rescaled into the speed interval. Anything still infeasible
/// after a few rounds is repaired by sampling.
pub fn navigate(positions: &[Vec2], cost: &NavCost, constraints: &NavConstraints) -> Result<Vec<Vec2>> {
    let n = positions.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let grad = cost.gradient(positions)?;
    let target = cost.predicted_mean();
    let directions: Vec<Vec2> = positions
        .iter()
        .zip(&grad)
        .map(|(p, g)| {
            (-*g).normalized().filter(|_| g.norm() > 1e-15).or((target - *p).normalized()).unwrap_or(Vec2::new(1.0, 0.0))
        })
        .collect();
    let mut s = DVector::from_iterator(
        2 * n,
        directions.iter().flat_map(|d| {
            let v = *d * constraints.limits.v_max;
            [v.x, v.y]
        }),
    );
    let problem = Problem { start: positions, target, c: constraints };
    for _ in 0..MAX_PROJECTION_ROUNDS {
        let q = problem.next(&s);
        let active = problem.violated(&q, FEASIBILITY_TOL);
        if active.is_empty() && problem.speeds_ok(&s) {
            break;
        }
        if !active.is_empty() {
            let a = problem.rows(&active, positions, &q);
            s = project_step(&s, &a);
            problem.correct(&mut s);
        }
        problem.rescale_speeds(&mut s, &directions);
    }
    problem.rescale_speeds(&mut s, &directions);
    problem.repair(&mut s, cost)?;
    Ok(problem.next(&s))
}

/// Final anti-collision pass over commanded waypoints, using the UAVs' actual
/// positions. UAVs are handled in the given order; each keeps its commanded
/// step when it clears every earlier UAV's committed next position by
/// `d_min_uav`, and otherwise takes the sampled admissible step closest to it.
pub fn deconflict(positions: &[Vec2], waypoints: &[Vec2], constraints: &NavConstraints) -> Vec<Vec2> {
    let lim = constraints.limits;
    let mut committed: Vec<Vec2> = Vec::with_capacity(positions.len());
    for (p, w) in positions.iter().zip(waypoints) {
        let desired = *p + clamped_displacement(*p, *w, &lim).unwrap_or(Vec2::new(lim.v_min, 0.0));
        let clearance = |q: Vec2| committed.iter().map(|c| q.distance(*c) - constraints.d_min_uav).fold(f64::INFINITY, f64::min);
        if clearance(desired) >= 0.0 {
            committed.push(desired);
            continue;
        }
        let speeds = [lim.v_min, 0.5 * (lim.v_min + lim.v_max), lim.v_max];
        let mut best: Option<(bool, f64, Vec2)> = None;
        for h in 0..REPAIR_HEADINGS {
            let dir = Vec2::from_angle(h as f64 * std::f64::consts::TAU / REPAIR_HEADINGS as f64);
            for &v in &speeds {
                let q = *p + dir * v;
                let slack = clearance(q);
                let feasible = slack >= 0.0;
                let score = if feasible { -q.distance(desired) } else { slack };
                if best.is_none_or(|(bf, bs, _)| (feasible, score) > (bf, bs)) {
                    best = Some((feasible, score, q));
                }
            }
        }
        let (feasible, _, q) = best.expect("at least one candidate");
        if !feasible {
            log::warn!("anti-collision repair found no clear step");
        }
        committed.push(q);
    }
    committed
}

/// Next waypoint on a counter-clockwise circle of `radius` about `center`,
/// one `v_max` chord ahead of the bearing of `pose`. A pose at the center
/// starts from the east.
pub fn fallback_orbit(pose: Vec2, center: Vec2, radius: f64, limits: &MobilityLimits) -> Result<Vec2> {
    if !(radius > 0.0) {
        return Err(Error::param("orbit_radius", format!("must be positive, got {radius}")));
    }
    let offset = pose - center;
    let bearing = if offset.norm() < 1e-9 { 0.0 } else { offset.angle() };
    let half = (limits.v_max / (2.0 * radius)).min(1.0);
    let dtheta = 2.0 * half.asin();
    Ok(center + Vec2::from_angle(bearing + dtheta) * radius)
}
