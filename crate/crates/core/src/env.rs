//! Deterministic planar pick-and-place.
//!
//! The robot end-effector (EE) is a planar pose with a one-dimensional
//! gripper. An asymmetric L-shaped object must be grasped and released
//! within tolerance of a goal pose. The workspace is the unit square,
//! split into bottleneck disks around the object (before the grasp) or the
//! goal (while holding) and free space everywhere else.
//!
//! [`EnvState`] is privileged ground truth, the human's perception;
//! [`Observation`] is what the sensors report: exact proprioception plus
//! noisy boundary samples of the object.

use alloc::vec::Vec;

use rand::Rng;

use crate::geometry::{Point2, PointSet, Pose2};
use crate::math::{clamp, PI};
use crate::rng::{self, Stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum SourceLabel {
    Human,
    Assistant,
    Novice,
}

impl SourceLabel {
    pub fn is_expert(self) -> bool {
        !matches!(self, SourceLabel::Novice)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceLabel::Human => "HUMAN",
            SourceLabel::Assistant => "ASSISTANT",
            SourceLabel::Novice => "NOVICE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum RegionLabel {
    Free,
    Bottleneck,
}

/// Normalized command, every component in `[-1, 1]`: translation and
/// rotation deltas plus a gripper target, where `-1` is closed and `+1`
/// open. Grip commands inside the deadband leave the gripper as it is.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub grip: f64,
    pub source: SourceLabel,
}

impl Action {
    pub fn new(dx: f64, dy: f64, dtheta: f64, grip: f64, source: SourceLabel) -> Self {
        Self {
            dx: clamp(dx, -1.0, 1.0),
            dy: clamp(dy, -1.0, 1.0),
            dtheta: clamp(dtheta, -1.0, 1.0),
            grip: clamp(grip, -1.0, 1.0),
            source,
        }
    }

    pub fn zero(source: SourceLabel) -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, source)
    }

    pub fn from_components(c: [f64; 4], source: SourceLabel) -> Self {
        Self::new(c[0], c[1], c[2], c[3], source)
    }

    pub fn components(&self) -> [f64; 4] {
        [self.dx, self.dy, self.dtheta, self.grip]
    }

    pub fn with_source(mut self, source: SourceLabel) -> Self {
        self.source = source;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point2::new(x0, y0),
            max: Point2::new(x1, y1),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let (u, v) = (rng::uniform(rng), rng::uniform(rng));
        Point2::new(
            self.min.x + u * (self.max.x - self.min.x),
            self.min.y + v * (self.max.y - self.min.y),
        )
    }
}

/// L-shaped outline: a long arm along +x and a short arm along +y, both of
/// the given thickness. The object frame sits at the centroid of the
/// boundary samples.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectShape {
    pub long_arm: f64,
    pub short_arm: f64,
    pub thickness: f64,
}

impl Default for ObjectShape {
    fn default() -> Self {
        Self {
            long_arm: 0.30,
            short_arm: 0.20,
            thickness: 0.06,
        }
    }
}

impl ObjectShape {
    fn vertices(&self) -> [Point2; 6] {
        let (a, b, t) = (self.long_arm, self.short_arm, self.thickness);
        [
            Point2::new(0.0, 0.0),
            Point2::new(a, 0.0),
            Point2::new(a, t),
            Point2::new(t, t),
            Point2::new(t, b),
            Point2::new(0.0, b),
        ]
    }

    /// `n` points equally spaced by arc length along the outline, expressed
    /// in the object frame.
    pub fn boundary_samples(&self, n: usize) -> Vec<Point2> {
        let v = self.vertices();
        let edges: Vec<(Point2, Point2)> = (0..v.len()).map(|i| (v[i], v[(i + 1) % v.len()])).collect();
        let lengths: Vec<f64> = edges.iter().map(|(a, b)| (*b - *a).norm()).collect();
        let perimeter: f64 = lengths.iter().sum();
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = perimeter * i as f64 / n as f64;
            let mut k = 0;
            while k + 1 < edges.len() && s >= lengths[k] {
                s -= lengths[k];
                k += 1;
            }
            let (a, b) = edges[k];
            pts.push(a + (b - a) * (s / lengths[k]));
        }
        let c = PointSet(pts.clone()).centroid();
        pts.into_iter().map(|p| p - c).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EnvConfig {
    /// Translation per unit action component, workspace units.
    pub max_step: f64,
    /// Rotation per unit action component, radians.
    pub max_rot: f64,
    pub grasp_threshold: f64,
    /// `|grip|` below this holds the gripper where it is.
    pub grip_deadband: f64,
    pub grasp_radius: f64,
    pub goal_tolerance: f64,
    pub bottleneck_radius: f64,
    pub boundary_margin: f64,
    pub fail_deviation: f64,
    pub horizon: u32,
    pub n_points: usize,
    pub sensor_sigma: f64,
    pub home: Pose2,
    pub object_region: Rect,
    pub goal_region: Rect,
    /// Headings are drawn uniformly from `[-range, range]`.
    pub heading_range: f64,
    pub min_separation: f64,
    /// Distance behind the grasp point from which the scripted expert
    /// starts its final straight approach.
    pub approach_offset: f64,
    /// Fraction of the remaining offset the scripted expert covers per step.
    pub oracle_gain: f64,
    /// Distance at which the scripted expert treats a target as reached.
    pub oracle_tolerance: f64,
    /// Speed cap of the scripted expert inside bottlenecks, as a fraction
    /// of `max_step`.
    pub oracle_fine_speed: f64,
    pub shape: ObjectShape,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_step: 0.02,
            max_rot: 0.1,
            grasp_threshold: 0.5,
            grip_deadband: 0.5,
            grasp_radius: 0.03,
            goal_tolerance: 0.04,
            bottleneck_radius: 0.12,
            boundary_margin: 0.05,
            fail_deviation: 0.08,
            horizon: 160,
            n_points: 32,
            sensor_sigma: 0.005,
            home: Pose2::new(0.5, 0.85, 0.0),
            object_region: Rect::new(0.20, 0.27, 0.35, 0.48),
            goal_region: Rect::new(0.63, 0.27, 0.72, 0.48),
            heading_range: PI / 6.0,
            min_separation: 0.2,
            approach_offset: 0.06,
            oracle_gain: 0.5,
            oracle_tolerance: 0.01,
            oracle_fine_speed: 0.3,
            shape: ObjectShape::default(),
        }
    }
}

/// Object and goal placement for one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scene {
    pub object: Pose2,
    pub goal: Pose2,
}

impl Scene {
    /// Move the whole scene rigidly.
    pub fn transformed(&self, t: &Pose2) -> Scene {
        Scene {
            object: t.compose(&self.object),
            goal: t.compose(&self.goal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvState {
    pub ee: Pose2,
    /// 0 closed, 1 open.
    pub gripper: f64,
    pub object: Pose2,
    pub held: bool,
    /// Object pose in the EE frame, fixed at grasp time.
    pub grasp_offset: Pose2,
    pub goal: Pose2,
    pub step_index: u32,
    pub failed: bool,
    pub success: bool,
    /// EE translation applied by the last step.
    pub last_motion: Point2,
    /// The last step released the object outside the goal tolerance.
    pub dropped: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Observation {
    pub ee: Pose2,
    pub gripper: f64,
    pub object_points: PointSet,
    pub goal: Pose2,
    pub region: RegionLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub obs: Observation,
    pub done: bool,
    pub success: bool,
}

/// The simulator. It owns only its configuration, the object template and
/// the sensor-noise stream; all task state travels in [`EnvState`].
#[derive(Clone, Debug)]
pub struct Env {
    cfg: EnvConfig,
    template: Vec<Point2>,
    noise: StreamRng,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Self {
        let template = cfg.shape.boundary_samples(cfg.n_points);
        Self {
            cfg,
            template,
            noise: rng::stream(0, Stream::SensorNoise),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Object outline in its own frame.
    pub fn template(&self) -> &[Point2] {
        &self.template
    }

    pub fn sample_scene(&self, seed: u64) -> Scene {
        let mut r = rng::stream(seed, Stream::Scene);
        let h = self.cfg.heading_range;
        let heading = |r: &mut StreamRng| (2.0 * rng::uniform(r) - 1.0) * h;
        let mut scene = None;
        // The sub-rectangles are disjoint, so this terminates quickly; the
        // bound only guards against a misconfigured overlap.
        for _ in 0..1000 {
            let o = self.cfg.object_region.sample(&mut r);
            let g = self.cfg.goal_region.sample(&mut r);
            let (ho, hg) = (heading(&mut r), heading(&mut r));
            let candidate = Scene {
                object: Pose2::from_parts(o, ho),
                goal: Pose2::from_parts(g, hg),
            };
            scene = Some(candidate);
            if o.distance(g) >= self.cfg.min_separation {
                break;
            }
        }
        scene.expect("at least one scene sample")
    }

    pub fn reset(&mut self, seed: u64) -> (EnvState, Observation) {
        let scene = self.sample_scene(seed);
        self.reset_scene(scene, seed)
    }

    pub fn reset_scene(&mut self, scene: Scene, seed: u64) -> (EnvState, Observation) {
        self.noise = rng::stream(seed, Stream::SensorNoise);
        let state = EnvState {
            ee: self.cfg.home,
            gripper: 1.0,
            object: scene.object,
            held: false,
            grasp_offset: Pose2::IDENTITY,
            goal: scene.goal,
            step_index: 0,
            failed: false,
            success: false,
            last_motion: Point2::ORIGIN,
            dropped: false,
        };
        let obs = self.observe_with(&state);
        (state, obs)
    }

    pub fn is_done(&self, state: &EnvState) -> bool {
        state.success || state.failed || state.step_index >= self.cfg.horizon
    }

    /// Pure dynamics: the successor state, without an observation.
    pub fn transition(&self, state: &EnvState, action: &Action) -> EnvState {
        let c = &self.cfg;
        let a = Action::new(action.dx, action.dy, action.dtheta, action.grip, action.source);
        let mut next = *state;
        next.step_index = state.step_index + 1;
        next.dropped = false;

        let intended = Point2::new(state.ee.x + a.dx * c.max_step, state.ee.y + a.dy * c.max_step);
        let inside = (0.0..=1.0).contains(&intended.x) && (0.0..=1.0).contains(&intended.y);
        if !inside {
            next.failed = true;
        }
        let clamped = Point2::new(clamp(intended.x, 0.0, 1.0), clamp(intended.y, 0.0, 1.0));
        next.ee = Pose2::from_parts(clamped, state.ee.theta + a.dtheta * c.max_rot);
        next.last_motion = clamped - state.ee.position();

        let g_before = state.gripper;
        if a.grip.abs() >= c.grip_deadband {
            next.gripper = clamp(0.5 * (a.grip + 1.0), 0.0, 1.0);
        }
        let thr = c.grasp_threshold;

        if !state.held
            && g_before >= thr
            && next.gripper < thr
            && next.ee.position().distance(state.object.position()) <= c.grasp_radius
        {
            next.held = true;
            next.grasp_offset = next.ee.between(&state.object);
        }
        if next.held {
            next.object = next.ee.compose(&next.grasp_offset);
        }
        if state.held && next.gripper >= thr {
            next.held = false;
            if next.object.position().distance(next.goal.position()) <= c.goal_tolerance {
                next.success = true;
            } else {
                next.failed = true;
                next.dropped = true;
            }
        }
        if next.success {
            next.failed = false;
        }
        next
    }

    pub fn step(&mut self, state: &EnvState, action: &Action) -> StepResult {
        let next = self.transition(state, action);
        let obs = self.observe_with(&next);
        StepResult {
            done: self.is_done(&next),
            success: next.success,
            state: next,
            obs,
        }
    }

    fn observe_with(&mut self, state: &EnvState) -> Observation {
        let Env { cfg, template, noise } = self;
        observe_impl(cfg, template, state, noise)
    }

    /// Noiseless outline of the object at `pose`.
    pub fn object_points(&self, pose: &Pose2) -> PointSet {
        PointSet(self.template.iter().map(|&p| pose.transform_point(p)).collect())
    }

    pub fn observe<R: Rng + ?Sized>(&self, state: &EnvState, noise: &mut R) -> Observation {
        observe_impl(&self.cfg, &self.template, state, noise)
    }

    /// Bottleneck iff the EE is within the bottleneck radius (inclusive) of
    /// the object before the grasp, or of the goal while holding.
    pub fn in_bottleneck(&self, state: &EnvState) -> RegionLabel {
        region_of(&self.cfg, state)
    }

    /// Scripted stand-in for the human's judgement that the task is about
    /// to fail.
    pub fn near_failure(&self, state: &EnvState, reference: Option<&[Pose2]>) -> bool {
        let c = &self.cfg;
        let (p, v) = (state.ee.position(), state.last_motion);
        let m = c.boundary_margin;
        let outward = (p.x >= 1.0 - m && v.x > 0.0)
            || (p.x <= m && v.x < 0.0)
            || (p.y >= 1.0 - m && v.y > 0.0)
            || (p.y <= m && v.y < 0.0);
        // A grasp that closed on nothing next to the object.
        let missed = !state.held
            && !state.success
            && state.gripper < c.grasp_threshold
            && self.in_bottleneck(state) == RegionLabel::Bottleneck;
        if outward || state.dropped || missed {
            return true;
        }
        match reference {
            Some(wps) if !wps.is_empty() && self.in_bottleneck(state) == RegionLabel::Bottleneck => {
                let nearest = wps
                    .iter()
                    .map(|w| w.position().distance(p))
                    .fold(f64::INFINITY, f64::min);
                nearest > c.fail_deviation
            }
            _ => false,
        }
    }

    /// Proportional move toward `target`: a fixed fraction of the remaining
    /// offset, saturating per axis while keeping the direction of travel.
    /// `fine` lowers the saturation for careful motion near contact.
    fn move_toward(&self, ee: &Pose2, target: &Pose2, fine: bool, grip: f64, source: SourceLabel) -> Action {
        let c = &self.cfg;
        let d = (target.position() - ee.position()) * c.oracle_gain;
        let cheb = d.norm_inf();
        let cap = if fine { c.max_step * c.oracle_fine_speed } else { c.max_step };
        let scale = if cheb > cap { cap / cheb } else { 1.0 };
        Action::new(
            d.x * scale / c.max_step,
            d.y * scale / c.max_step,
            c.oracle_gain * ee.heading_to(target) / c.max_rot,
            grip,
            source,
        )
    }

    /// Privileged scripted expert: approach behind the object, slide in,
    /// close, carry to the goal, release.
    pub fn oracle_action(&self, state: &EnvState) -> Action {
        let c = &self.cfg;
        let tol = c.oracle_tolerance;
        let src = SourceLabel::Human;
        if state.success || state.failed {
            return Action::zero(src);
        }
        let ee = state.ee;
        if !state.held {
            if state.gripper < c.grasp_threshold {
                return Action::new(0.0, 0.0, 0.0, 1.0, src);
            }
            let object = state.object;
            if ee.position().distance(object.position()) <= tol {
                return Action::new(0.0, 0.0, 0.0, -1.0, src);
            }
            let local = object.between(&ee);
            let on_approach = local.y.abs() <= tol && local.x >= -c.approach_offset - tol && local.x <= tol;
            let target = if on_approach {
                object
            } else {
                object.compose(&Pose2::new(-c.approach_offset, 0.0, 0.0))
            };
            self.move_toward(&ee, &target, region_of(c, state) == RegionLabel::Bottleneck, 1.0, src)
        } else {
            if state.object.position().distance(state.goal.position()) <= tol {
                return Action::new(0.0, 0.0, 0.0, 1.0, src);
            }
            let target = state.goal.compose(&state.grasp_offset.inverse());
            self.move_toward(&ee, &target, region_of(c, state) == RegionLabel::Bottleneck, -1.0, src)
        }
    }

    /// Roll the scripted expert forward from `state` without noise,
    /// returning the visited EE poses. Used as the human's mental model of
    /// the nominal path when no assistant trajectory is available.
    pub fn nominal_path(&self, state: &EnvState) -> Vec<Pose2> {
        let mut s = *state;
        let mut path = alloc::vec![s.ee];
        while !self.is_done(&s) {
            let a = self.oracle_action(&s);
            s = self.transition(&s, &a);
            path.push(s.ee);
        }
        path
    }
}

fn region_of(cfg: &EnvConfig, state: &EnvState) -> RegionLabel {
    let anchor = if state.held { state.goal } else { state.object };
    if state.ee.position().distance(anchor.position()) <= cfg.bottleneck_radius {
        RegionLabel::Bottleneck
    } else {
        RegionLabel::Free
    }
}

fn observe_impl<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    template: &[Point2],
    state: &EnvState,
    noise: &mut R,
) -> Observation {
    let sigma = cfg.sensor_sigma;
    let points = template
        .iter()
        .map(|&p| {
            let q = state.object.transform_point(p);
            if sigma > 0.0 {
                let (nx, ny) = (rng::standard_normal(noise), rng::standard_normal(noise));
                q + Point2::new(sigma * nx, sigma * ny)
            } else {
                q
            }
        })
        .collect();
    Observation {
        ee: state.ee,
        gripper: state.gripper,
        object_points: PointSet(points),
        goal: state.goal,
        region: region_of(cfg, state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env::new(EnvConfig::default())
    }

    fn rollout_oracle(env: &mut Env, seed: u64) -> (EnvState, u32) {
        let (mut s, _) = env.reset(seed);
        while !env.is_done(&s) {
            let a = env.oracle_action(&s);
            s = env.step(&s, &a).state;
        }
        (s, s.step_index)
    }

    #[test]
    fn reset_is_deterministic_and_homes_ee() {
        let mut e = env();
        let (s1, o1) = e.reset(0);
        let (s2, o2) = e.reset(0);
        assert_eq!(s1, s2);
        assert_eq!(o1, o2);
        assert_eq!(s1.ee, EnvConfig::default().home);
        assert_eq!(o1.object_points.len(), 32);
    }

    #[test]
    fn scenes_respect_min_separation() {
        let e = env();
        for seed in 0..100 {
            let s = e.sample_scene(seed);
            assert!(s.object.position().distance(s.goal.position()) >= 0.2, "seed {seed}");
        }
    }

    #[test]
    fn grip_deadband_holds() {
        let mut e = env();
        let (s, _) = e.reset(3);
        let half_closed = e.step(&s, &Action::new(0.0, 0.0, 0.0, -0.6, SourceLabel::Novice)).state;
        assert!((half_closed.gripper - 0.2).abs() < 1e-12);
        let held = e.step(&half_closed, &Action::new(0.0, 0.0, 0.0, 0.49, SourceLabel::Novice)).state;
        assert_eq!(held.gripper, half_closed.gripper);
    }

    #[test]
    fn zero_action_only_advances_clock() {
        let mut e = env();
        let (s, _) = e.reset(3);
        let next = e.step(&s, &Action::zero(SourceLabel::Novice)).state;
        let mut expected = s;
        expected.step_index += 1;
        assert_eq!(next, expected);
    }

    #[test]
    fn closing_at_object_grasps() {
        let mut e = env();
        let (mut s, _) = e.reset(1);
        s.ee = s.object;
        let next = e.step(&s, &Action::new(0.0, 0.0, 0.0, -1.0, SourceLabel::Human)).state;
        assert!(next.held);
        assert!(next.gripper < e.config().grasp_threshold);
    }

    #[test]
    fn oracle_succeeds_from_seed_zero() {
        let mut e = env();
        let (s, steps) = rollout_oracle(&mut e, 0);
        assert!(s.success, "oracle failed on seed 0 after {steps} steps");
        assert!(!s.failed);
    }

    #[test]
    fn oracle_succeeds_on_nearly_all_seeds() {
        let mut e = env();
        let ok = (0..100).filter(|&seed| rollout_oracle(&mut e, seed).0.success).count();
        assert!(ok >= 99, "{ok}/100");
    }

    #[test]
    fn oracle_never_leaves_unit_range_and_pushes_right() {
        let mut e = env();
        for seed in 0..20 {
            let (mut s, _) = e.reset(seed);
            while !e.is_done(&s) {
                let a = e.oracle_action(&s);
                for v in a.components() {
                    assert!((-1.0..=1.0).contains(&v));
                }
                s = e.step(&s, &a).state;
            }
        }
        let (mut s, _) = e.reset(0);
        s.ee = Pose2::new(s.object.x - 0.3, s.object.y, s.object.theta);
        assert!(e.oracle_action(&s).dx > 0.0);
    }

    #[test]
    fn converged_oracle_idles() {
        let mut e = env();
        let (s, _) = rollout_oracle(&mut e, 5);
        assert!(s.success);
        let a = e.oracle_action(&s);
        assert_eq!(a.components(), [0.0; 4]);
    }

    #[test]
    fn bottleneck_is_inclusive_disk() {
        let e = env();
        let mut s = env().reset(2).0;
        s.ee = s.object;
        assert_eq!(e.in_bottleneck(&s), RegionLabel::Bottleneck);
        let r = e.config().bottleneck_radius;
        s.ee = Pose2::new(s.object.x + r, s.object.y, 0.0);
        assert_eq!(e.in_bottleneck(&s), RegionLabel::Bottleneck);
        s.ee = Pose2::new(s.object.x + r + 1e-9, s.object.y, 0.0);
        assert_eq!(e.in_bottleneck(&s), RegionLabel::Free);
        s.object = Pose2::new(0.0, 0.0, 0.0);
        s.goal = Pose2::new(1.0, 0.0, 0.0);
        s.ee = Pose2::new(0.3, 0.4, 0.0);
        assert_eq!(e.in_bottleneck(&s), RegionLabel::Free);
    }

    #[test]
    fn boundary_push_is_near_failure() {
        let mut e = env();
        let (mut s, _) = e.reset(0);
        assert!(!e.near_failure(&s, None));
        s.ee = Pose2::new(0.999, 0.5, 0.0);
        s.last_motion = Point2::new(0.01, 0.0);
        assert!(e.near_failure(&s, None));
        s.last_motion = Point2::new(-0.01, 0.0);
        assert!(!e.near_failure(&s, None));
    }

    #[test]
    fn push_out_of_workspace_fails() {
        let mut e = env();
        let (mut s, _) = e.reset(0);
        s.ee = Pose2::new(0.995, 0.5, 0.0);
        let r = e.step(&s, &Action::new(1.0, 0.0, 0.0, 0.0, SourceLabel::Novice));
        assert!(r.state.failed && r.done);
        assert_eq!(r.state.ee.x, 1.0);
    }

    #[test]
    fn drop_outside_goal_fails_and_flags() {
        let mut e = env();
        let (mut s, _) = e.reset(0);
        s.ee = s.object;
        s = e.step(&s, &Action::new(0.0, 0.0, 0.0, -1.0, SourceLabel::Human)).state;
        assert!(s.held);
        let r = e.step(&s, &Action::new(0.0, 0.0, 0.0, 1.0, SourceLabel::Human));
        assert!(r.state.failed && r.state.dropped && !r.state.success);
        assert!(e.near_failure(&r.state, None));
    }

    #[test]
    fn deviation_in_bottleneck_is_near_failure() {
        let mut e = env();
        let (mut s, _) = e.reset(0);
        let reference = [s.object];
        s.ee = Pose2::new(s.object.x + 0.1, s.object.y, 0.0);
        assert!(e.near_failure(&s, Some(&reference)));
        s.ee = Pose2::new(s.object.x + 0.05, s.object.y, 0.0);
        assert!(!e.near_failure(&s, Some(&reference)));
    }

    #[test]
    fn closing_on_nothing_is_near_failure() {
        let mut e = env();
        let (mut s, _) = e.reset(0);
        // Far from the object a closed gripper is harmless.
        let r = e.step(&s, &Action::new(0.0, 0.0, 0.0, -1.0, SourceLabel::Novice));
        assert!(!r.state.held && !e.near_failure(&r.state, None));
        s.ee = Pose2::new(s.object.x + 1.5 * e.config().grasp_radius, s.object.y, 0.0);
        assert_eq!(e.in_bottleneck(&s), RegionLabel::Bottleneck);
        let r = e.step(&s, &Action::new(0.0, 0.0, 0.0, -1.0, SourceLabel::Novice));
        assert!(!r.state.held && !r.state.failed);
        assert!(e.near_failure(&r.state, None));
        let r = e.step(&r.state, &e.oracle_action(&r.state));
        assert!(!e.near_failure(&r.state, None));
    }

    /// A drifting random walk stands in for a badly trained novice: a per-
    /// episode random heading plus uniform jitter on every component.
    #[test]
    fn adversarial_rollouts_trigger_near_failure() {
        let mut e = env();
        let mut triggered = 0;
        for seed in 0..100u64 {
            let (mut s, _) = e.reset(seed);
            let mut r = rng::stream(seed, Stream::Exploration);
            let heading = 2.0 * PI * rng::uniform(&mut r);
            let reference = e.nominal_path(&s);
            for _ in 0..50 {
                let j = |r: &mut StreamRng| rng::uniform(r) - 0.5;
                let a = Action::new(
                    crate::math::cos(heading) + j(&mut r),
                    crate::math::sin(heading) + j(&mut r),
                    2.0 * j(&mut r),
                    2.0 * j(&mut r),
                    SourceLabel::Novice,
                );
                s = e.step(&s, &a).state;
                if e.near_failure(&s, Some(&reference)) || s.failed {
                    triggered += 1;
                    break;
                }
            }
        }
        assert!(triggered >= 95, "{triggered}/100");
    }

    #[test]
    fn noiseless_points_lie_on_outline() {
        let mut cfg = EnvConfig::default();
        cfg.sensor_sigma = 0.0;
        let mut e = Env::new(cfg);
        let (s, o) = e.reset(4);
        assert_eq!(o.object_points, e.object_points(&s.object));
    }

    #[test]
    fn observe_is_deterministic_per_stream_position() {
        let e = env();
        let (s, _) = env().reset(9);
        let mut a = rng::stream(1, Stream::SensorNoise);
        let mut b = rng::stream(1, Stream::SensorNoise);
        assert_eq!(e.observe(&s, &mut a), e.observe(&s, &mut b));
    }

    #[test]
    fn sensor_noise_is_zero_mean() {
        let e = env();
        let (s, _) = env().reset(9);
        let clean = e.object_points(&s.object);
        let mut r = rng::stream(2, Stream::SensorNoise);
        let draws = 10_000 / clean.len() + 1;
        let (mut sum, mut n) = (Point2::ORIGIN, 0usize);
        for _ in 0..draws {
            let o = e.observe(&s, &mut r);
            for (p, q) in o.object_points.iter().zip(clean.iter()) {
                sum = sum + (*p - *q);
                n += 1;
            }
        }
        let mean = sum * (1.0 / n as f64);
        let bound = 3.0 * 0.005 / (n as f64).sqrt();
        assert!(mean.x.abs() <= bound && mean.y.abs() <= bound, "{mean:?} vs {bound}");
    }

    #[test]
    fn success_and_failure_exclusive() {
        let mut e = env();
        for seed in 0..30 {
            let (mut s, _) = e.reset(seed);
            let mut r = rng::stream(seed, Stream::Exploration);
            while !e.is_done(&s) {
                let a = if rng::uniform(&mut r) < 0.7 {
                    e.oracle_action(&s)
                } else {
                    Action::new(
                        2.0 * rng::uniform(&mut r) - 1.0,
                        2.0 * rng::uniform(&mut r) - 1.0,
                        0.0,
                        2.0 * rng::uniform(&mut r) - 1.0,
                        SourceLabel::Novice,
                    )
                };
                s = e.step(&s, &a).state;
                assert!(!(s.success && s.failed));
                if s.held {
                    assert!(s.gripper < e.config().grasp_threshold);
                }
            }
        }
    }
}
