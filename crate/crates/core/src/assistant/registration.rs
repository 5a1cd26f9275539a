//! Rigid SE(2) registration of two point sets: a coarse rotation sweep seeds
//! nearest-neighbour correspondences, RANSAC over minimal two-point samples
//! picks the best hypothesis, and point-to-point ICP refines it.

use rand::Rng;

use crate::error::RegistrationError;
use crate::geometry::{Point2, PointSet, Pose2};
use crate::math::{self, normalize_angle, TAU};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RegistrationConfig {
    pub rotation_bins: usize,
    pub hypotheses: usize,
    pub inlier_threshold: f64,
    pub icp_max_iters: usize,
    pub icp_tolerance: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            rotation_bins: 36,
            hypotheses: 200,
            inlier_threshold: 0.01,
            icp_max_iters: 50,
            icp_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegistrationResult {
    /// Maps demo-frame points onto the observed points.
    pub transform: Pose2,
    pub inliers: usize,
    pub rmse: f64,
}

#[derive(Clone, Copy, Debug)]
struct Score {
    inliers: usize,
    rmse: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.inliers > other.inliers || (self.inliers == other.inliers && self.rmse < other.rmse)
    }
}

fn score(t: &Pose2, src: &PointSet, dst: &PointSet, threshold: f64) -> Score {
    let thr_sq = threshold * threshold;
    let (mut inliers, mut sum) = (0, 0.0);
    for &p in src.iter() {
        let (_, d) = dst.nearest(t.transform_point(p)).expect("non-empty");
        if d < thr_sq {
            inliers += 1;
        }
        sum += d;
    }
    Score {
        inliers,
        rmse: math::sqrt(sum / src.len() as f64),
    }
}

fn is_degenerate(points: &PointSet, threshold: f64) -> bool {
    let c = points.centroid();
    points.iter().all(|p| p.distance(c) <= threshold)
}

/// Closed-form least-squares rigid transform taking `src[i]` onto `dst[i]`.
pub fn procrustes(src: &[Point2], dst: &[Point2]) -> Pose2 {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let cs = src.iter().fold(Point2::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let cd = dst.iter().fold(Point2::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let (mut c, mut s) = (0.0, 0.0);
    for (&p, &q) in src.iter().zip(dst) {
        let (p, q) = (p - cs, q - cd);
        c += p.dot(q);
        s += p.cross(q);
    }
    let theta = math::atan2(s, c);
    let t = cd - cs.rotated(theta);
    Pose2::new(t.x, t.y, theta)
}

fn two_point_hypothesis(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Option<Pose2> {
    let (dp, dq) = (p2 - p1, q2 - q1);
    if dp.norm_sq() < 1e-18 || dq.norm_sq() < 1e-18 {
        return None;
    }
    let theta = math::atan2(dp.cross(dq), dp.dot(dq));
    let mid_p = (p1 + p2) * 0.5;
    let mid_q = (q1 + q2) * 0.5;
    let t = mid_q - mid_p.rotated(theta);
    Some(Pose2::new(t.x, t.y, theta))
}

/// Estimate the transform that maps `demo_points` onto `obs_points`.
pub fn estimate_transform<R: Rng + ?Sized>(
    demo_points: &PointSet,
    obs_points: &PointSet,
    cfg: &RegistrationConfig,
    rng: &mut R,
) -> Result<RegistrationResult, RegistrationError> {
    if demo_points.is_empty() || obs_points.is_empty() {
        return Err(RegistrationError::EmptyPointSet);
    }
    let thr = cfg.inlier_threshold;
    if is_degenerate(demo_points, thr) || is_degenerate(obs_points, thr) {
        return Err(RegistrationError::DegenerateGeometry { threshold: thr });
    }
    let (cd, co) = (demo_points.centroid(), obs_points.centroid());
    let bins = cfg.rotation_bins.max(1);

    // Coarse sweep: rotate about the demo centroid, align centroids, pair
    // each demo point with its nearest observed point.
    let mut correspondences: alloc::vec::Vec<alloc::vec::Vec<usize>> = alloc::vec::Vec::with_capacity(bins);
    let mut best_t = Pose2::IDENTITY;
    let mut best = Score {
        inliers: 0,
        rmse: f64::INFINITY,
    };
    for b in 0..bins {
        let theta = normalize_angle(TAU * b as f64 / bins as f64);
        let t0 = co - cd.rotated(theta);
        let coarse = Pose2::new(t0.x, t0.y, theta);
        let pairs = demo_points
            .iter()
            .map(|&p| obs_points.nearest(coarse.transform_point(p)).expect("non-empty").0)
            .collect();
        correspondences.push(pairs);
        let s = score(&coarse, demo_points, obs_points, thr);
        if s.better_than(&best) {
            best = s;
            best_t = coarse;
        }
    }

    let n = demo_points.len();
    if n >= 2 {
        for h in 0..cfg.hypotheses {
            let pairs = &correspondences[h % bins];
            let i1 = rng.random_range(0..n);
            let mut i2 = rng.random_range(0..n - 1);
            if i2 >= i1 {
                i2 += 1;
            }
            let (p1, p2) = (demo_points.0[i1], demo_points.0[i2]);
            let (q1, q2) = (obs_points.0[pairs[i1]], obs_points.0[pairs[i2]]);
            if let Some(t) = two_point_hypothesis(p1, p2, q1, q2) {
                let s = score(&t, demo_points, obs_points, thr);
                if s.better_than(&best) {
                    best = s;
                    best_t = t;
                }
            }
        }
    }

    let (transform, final_score) = icp(demo_points, obs_points, best_t, cfg);
    Ok(RegistrationResult {
        transform,
        inliers: final_score.inliers,
        rmse: final_score.rmse,
    })
}

fn icp(src: &PointSet, dst: &PointSet, init: Pose2, cfg: &RegistrationConfig) -> (Pose2, Score) {
    let thr = cfg.inlier_threshold;
    let mut t = init;
    let mut current = score(&t, src, dst, thr);
    let mut matched = alloc::vec![Point2::ORIGIN; src.len()];
    for _ in 0..cfg.icp_max_iters {
        for (m, &p) in matched.iter_mut().zip(src.iter()) {
            let (j, _) = dst.nearest(t.transform_point(p)).expect("non-empty");
            *m = dst.0[j];
        }
        let next = procrustes(src.as_slice(), &matched);
        let s = score(&next, src, dst, thr);
        let delta = (current.rmse - s.rmse).abs();
        t = next;
        current = s;
        if delta < cfg.icp_tolerance {
            break;
        }
    }
    (t, current)
}
