//! Gaussian belief over object locations in information form.
//!
//! Each object carries an independent 2-D Gaussian `N(mean, info⁻¹)`. The
//! range-gated isotropic sensor measures objects independently, so the joint
//! belief is exactly block-diagonal and every update touches one 2×2 block.
//! Measurement updates are additive in the information matrix:
//!
//! ```text
//! Λ' = Λ + Σ_β σ⁻² I
//! ô' = Λ'⁻¹ (Λ ô + Σ_β σ⁻² y_β)
//! ```

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::{Error, Point, Result};

/// Hidden object positions; only the simulator sees these.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthObjects {
    pub positions: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Sensing radius `R_S`, m.
    pub range: f64,
    /// Isotropic noise variance `σ²`, m².
    pub noise_var: f64,
}

impl SensorParams {
    pub fn new(range: f64, noise_var: f64) -> Result<Self> {
        let s = Self { range, noise_var };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::invalid(format!("sensor range must be > 0, got {}", self.range)));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return Err(Error::invalid(format!(
                "sensor noise variance must be > 0, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.noise_var
    }

    /// Strict range gate `‖o − x‖ < R_S`.
    pub fn in_range(&self, sensor: &RobotState, point: &Point) -> bool {
        sensor.distance_to(point) < self.range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub object_id: usize,
    pub value: Point,
    pub sensor_pose: RobotState,
    pub tick: usize,
}

/// Draws one noisy position per object strictly inside the sensing radius.
pub fn simulate_measurements<R: Rng + ?Sized>(
    truth: &GroundTruthObjects,
    sensor_state: &RobotState,
    sensor: &SensorParams,
    tick: usize,
    rng: &mut R,
) -> Vec<Measurement> {
    let sd = sensor.noise_var.sqrt();
    truth
        .positions
        .iter()
        .enumerate()
        .filter(|(_, o)| sensor.in_range(sensor_state, o))
        .map(|(object_id, o)| {
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            Measurement {
                object_id,
                value: o + Point::new(ex, ey) * sd,
                sensor_pose: *sensor_state,
                tick,
            }
        })
        .collect()
}

/// Lower-triangular Cholesky factor of a 2×2 SPD matrix, or `None`.
pub(crate) fn cholesky2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let a = m[(0, 0)];
    if !(a > 0.0) {
        return None;
    }
    let l00 = a.sqrt();
    let l10 = m[(1, 0)] / l00;
    let d = m[(1, 1)] - l10 * l10;
    if !(d > 0.0) {
        return None;
    }
    Some(Matrix2::new(l00, 0.0, l10, d.sqrt()))
}

fn is_spd(m: &Matrix2<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
        && (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.abs().max().max(1.0)
        && cholesky2(m).is_some()
}

/// One object's Gaussian: mean and 2×2 information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEstimate {
    pub mean: Point,
    pub info: Matrix2<f64>,
}

impl ObjectEstimate {
    pub fn isotropic(mean: Point, variance: f64) -> Self {
        Self {
            mean,
            info: Matrix2::identity() / variance,
        }
    }

    pub fn covariance(&self) -> Option<Matrix2<f64>> {
        self.info.try_inverse()
    }

    /// Cholesky factor of the covariance; maps standard normals to samples.
    pub fn covariance_factor(&self) -> Option<Matrix2<f64>> {
        self.covariance().and_then(|c| cholesky2(&c))
    }

    /// Moves a standard-normal draw into this object's distribution.
    pub fn realize(&self, factor: &Matrix2<f64>, z: &Point) -> Point {
        self.mean + factor * z
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectBelief {
    pub objects: Vec<ObjectEstimate>,
}

impl ObjectBelief {
    pub fn new(objects: Vec<ObjectEstimate>) -> Result<Self> {
        let b = Self { objects };
        b.validate()?;
        Ok(b)
    }

    /// Every object gets `variance · I` covariance around its mean.
    pub fn isotropic(means: &[Point], variance: f64) -> Self {
        Self {
            objects: means
                .iter()
                .map(|m| ObjectEstimate::isotropic(*m, variance))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            if !is_spd(&o.info) {
                return Err(Error::NotPositiveDefinite(i));
            }
            if !(o.mean.x.is_finite() && o.mean.y.is_finite()) {
                return Err(Error::invalid(format!("object {i} mean is not finite")));
            }
        }
        Ok(())
    }

    pub fn means(&self) -> Vec<Point> {
        self.objects.iter().map(|o| o.mean).collect()
    }

    /// Per-object marginal variances `(var_x, var_y)`.
    pub fn marginal_variances(&self) -> Vec<[f64; 2]> {
        self.objects
            .iter()
            .map(|o| match o.covariance() {
                Some(c) => [c[(0, 0)], c[(1, 1)]],
                None => [f64::INFINITY, f64::INFINITY],
            })
            .collect()
    }

    /// Information-form Kalman update.
    ///
    /// A measurement contributes `σ⁻² I` when its value lies inside the
    /// sensing radius of the pose it was taken from, and nothing otherwise.
    pub fn update(&self, measurements: &[Measurement], sensor: &SensorParams) -> Result<Self> {
        let n = self.objects.len();
        let precision = sensor.precision();
        // (count, Σ y) per object
        let mut acc: Vec<(u32, Point)> = vec![(0, Point::zeros()); n];
        for m in measurements {
            if m.object_id >= n {
                return Err(Error::UnknownObject { id: m.object_id, count: n });
            }
            if !(m.value.x.is_finite() && m.value.y.is_finite()) {
                return Err(Error::invalid(format!(
                    "measurement of object {} is not finite",
                    m.object_id
                )));
            }
            if !sensor.in_range(&m.sensor_pose, &m.value) {
                continue;
            }
            let slot = &mut acc[m.object_id];
            slot.0 += 1;
            slot.1 += m.value;
        }

        let mut objects = Vec::with_capacity(n);
        for (i, (o, (count, sum))) in self.objects.iter().zip(acc).enumerate() {
            if count == 0 {
                objects.push(o.clone());
                continue;
            }
            let info = o.info + Matrix2::identity() * (precision * count as f64);
            let eta = o.info * o.mean + sum * precision;
            let cov = info.try_inverse().ok_or(Error::NotPositiveDefinite(i))?;
            objects.push(ObjectEstimate {
                mean: cov * eta,
                info,
            });
        }
        Ok(Self { objects })
    }

    /// Number of predicted in-range sensing events per object along the
    /// escorts' planned trajectories (poses after the first), using the
    /// current means as object locations.
    pub fn predicted_measurement_counts(
        &self,
        escort_trajectories: &[&[RobotState]],
        sensor: &SensorParams,
    ) -> Vec<u32> {
        let r2 = sensor.range * sensor.range;
        self.objects
            .iter()
            .map(|o| {
                escort_trajectories
                    .iter()
                    .flat_map(|traj| traj.iter().skip(1))
                    .filter(|s| {
                        let dx = s.x - o.mean.x;
                        let dy = s.y - o.mean.y;
                        dx * dx + dy * dy < r2
                    })
                    .count() as u32
            })
            .collect()
    }

    /// Adds `counts[i] · σ⁻² I` to each object's information; means kept.
    pub fn with_added_information(&self, counts: &[u32], sensor: &SensorParams) -> Self {
        let precision = sensor.precision();
        Self {
            objects: self
                .objects
                .iter()
                .zip(counts)
                .map(|(o, &c)| {
                    if c == 0 {
                        o.clone()
                    } else {
                        ObjectEstimate {
                            mean: o.mean,
                            info: o.info + Matrix2::identity() * (precision * c as f64),
                        }
                    }
                })
                .collect(),
        }
    }

    /// Predicted belief after the escorts fly the given trajectories.
    pub fn predict_information(
        &self,
        escort_trajectories: &[&[RobotState]],
        sensor: &SensorParams,
    ) -> Self {
        let counts = self.predicted_measurement_counts(escort_trajectories, sensor);
        self.with_added_information(&counts, sensor)
    }

    /// Mutual information `½ Σ_i (log det Λ'_i − log det Λ_i)` in nats.
    pub fn information_gain(&self, predicted: &ObjectBelief) -> Result<f64> {
        if predicted.len() != self.len() {
            return Err(Error::invalid(format!(
                "belief sizes differ: {} vs {}",
                self.len(),
                predicted.len()
            )));
        }
        let mut gain = 0.0;
        for (i, (a, b)) in self.objects.iter().zip(&predicted.objects).enumerate() {
            if a.info == b.info {
                continue;
            }
            if !is_spd(&a.info) || !is_spd(&b.info) {
                return Err(Error::NotPositiveDefinite(i));
            }
            gain += 0.5 * (b.info.determinant().ln() - a.info.determinant().ln());
        }
        Ok(gain)
    }

    /// Covariance Cholesky factors for every object.
    pub fn covariance_factors(&self) -> Result<Vec<Matrix2<f64>>> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| o.covariance_factor().ok_or(Error::NotPositiveDefinite(i)))
            .collect()
    }

    /// Draws `n` joint samples of all object locations.
    pub fn sample_objects<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<Point>>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        let draws = StandardDraws::sample(n, self.len(), rng);
        draws.realize(self)
    }
}

/// Fixed standard-normal draws `z[m][i]` for `m` joint samples of `i`
/// objects. Realizing the same draws under two beliefs gives common random
/// numbers for differences between them.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardDraws {
    n_samples: usize,
    n_objects: usize,
    z: Vec<Point>,
}

impl StandardDraws {
    pub fn sample<R: Rng + ?Sized>(n_samples: usize, n_objects: usize, rng: &mut R) -> Self {
        let z = (0..n_samples * n_objects)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Point::new(a, b)
            })
            .collect();
        Self {
            n_samples,
            n_objects,
            z,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn get(&self, sample: usize, object: usize) -> &Point {
        &self.z[sample * self.n_objects + object]
    }

    pub fn realize(&self, belief: &ObjectBelief) -> Result<Vec<Vec<Point>>> {
        if belief.len() != self.n_objects {
            return Err(Error::invalid("draws and belief disagree on object count"));
        }
        let factors = belief.covariance_factors()?;
        Ok((0..self.n_samples)
            .map(|m| {
                self.z[m * self.n_objects..(m + 1) * self.n_objects]
                    .iter()
                    .zip(&belief.objects)
                    .zip(&factors)
                    .map(|((z, o), l)| o.realize(l, z))
                    .collect()
            })
            .collect())
    }
}
