//! One-shot assistant expert: register the observed object against the
//! single demonstration, carry the demo trajectory over rigidly, replan
//! free space and follow it waypoint by waypoint.

pub mod registration;
pub mod trajectory;

use alloc::vec::Vec;

pub use registration::{estimate_transform, procrustes, RegistrationConfig, RegistrationResult};
pub use trajectory::{
    deviation, plan_into, recovery_check, replan_free, transfer_anchored, transfer_trajectory, DemoWaypoint,
    Demonstration, StepLimits, TransferredTrajectory,
};

use crate::env::{Action, EnvConfig, Observation, RegionLabel, SourceLabel};
use crate::error::AssistantError;
use crate::geometry::Pose2;
use crate::math::clamp;
use crate::rng::{self, Stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AssistantConfig {
    pub waypoint_tol: f64,
    pub grip_tol: f64,
    /// Recovery fires when the EE is strictly farther than this from the
    /// waypoint under the cursor.
    pub recovery_threshold: f64,
    /// Gripper closed with the object centroid this close to the EE counts
    /// as holding.
    pub hold_radius: f64,
    pub max_step: f64,
    pub max_rot: f64,
    pub grasp_threshold: f64,
    pub registration: RegistrationConfig,
}

impl Default for AssistantConfig {
    fn default() -> Self {
        Self::for_env(&EnvConfig::default())
    }
}

impl AssistantConfig {
    pub fn for_env(env: &EnvConfig) -> Self {
        Self {
            waypoint_tol: 0.015,
            grip_tol: 0.1,
            recovery_threshold: 0.05,
            hold_radius: 0.05,
            max_step: env.max_step,
            max_rot: env.max_rot,
            grasp_threshold: env.grasp_threshold,
            registration: RegistrationConfig::default(),
        }
    }

    pub fn limits(&self) -> StepLimits {
        StepLimits {
            max_step: self.max_step,
            max_rot: self.max_rot,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssistantExpert {
    demo: Demonstration,
    cfg: AssistantConfig,
    rng: StreamRng,
    traj: Option<TransferredTrajectory>,
    last_registration: Option<RegistrationResult>,
    recoveries: usize,
}

impl AssistantExpert {
    pub fn activate(demo: Demonstration, cfg: AssistantConfig) -> Result<Self, AssistantError> {
        demo.validate()?;
        Ok(Self {
            demo,
            cfg,
            rng: rng::stream(0, Stream::Registration),
            traj: None,
            last_registration: None,
            recoveries: 0,
        })
    }

    pub fn demonstration(&self) -> &Demonstration {
        &self.demo
    }

    pub fn config(&self) -> &AssistantConfig {
        &self.cfg
    }

    pub fn trajectory(&self) -> Option<&TransferredTrajectory> {
        self.traj.as_ref()
    }

    pub fn last_registration(&self) -> Option<&RegistrationResult> {
        self.last_registration.as_ref()
    }

    /// Recoveries triggered since the episode began.
    pub fn recoveries(&self) -> usize {
        self.recoveries
    }

    /// Poses of the current transferred trajectory, the human's picture of
    /// where the robot should be.
    pub fn reference_poses(&self) -> Vec<Pose2> {
        self.traj.as_ref().map(TransferredTrajectory::poses).unwrap_or_default()
    }

    /// Register against the first observation of an episode and build the
    /// trajectory to follow.
    pub fn begin_episode(&mut self, obs: &Observation, seed: u64) -> Result<(), AssistantError> {
        self.rng = rng::stream(seed, Stream::Registration);
        self.recoveries = 0;
        let full = self.register(obs)?;
        self.traj = Some(replan_free(&obs.ee, &full, self.cfg.limits()));
        Ok(())
    }

    pub fn end_episode(&mut self) {
        self.traj = None;
    }

    fn register(&mut self, obs: &Observation) -> Result<TransferredTrajectory, AssistantError> {
        let res = estimate_transform(
            &self.demo.demo_object_points,
            &obs.object_points,
            &self.cfg.registration,
            &mut self.rng,
        )?;
        self.last_registration = Some(res);
        let t_goal = obs.goal.compose(&self.demo.demo_goal.inverse());
        Ok(transfer_anchored(&self.demo, &res.transform, &t_goal))
    }

    fn arrived(&self, obs: &Observation, w: &DemoWaypoint) -> bool {
        deviation(&obs.ee, w) <= self.cfg.waypoint_tol && (obs.gripper - w.grip).abs() <= self.cfg.grip_tol
    }

    fn holding(&self, obs: &Observation) -> bool {
        obs.gripper < self.cfg.grasp_threshold
            && !obs.object_points.is_empty()
            && obs.object_points.centroid().distance(obs.ee.position()) <= self.cfg.hold_radius
    }

    /// Re-register and plan from the current pose into the right phase of
    /// the task: the grasp approach with the gripper open, the placement
    /// while holding, or reopen first after a missed grasp.
    fn recover(&mut self, obs: &Observation) -> Result<(), AssistantError> {
        self.recoveries += 1;
        let full = self.register(obs)?;
        let split = self.demo.grasp_index().unwrap_or(full.len());
        let ws = &full.waypoints;
        let first_b_from = |from: usize| ws[from.min(ws.len())..].iter().position(|w| w.is_bottleneck()).map(|i| i + from);
        let limits = self.cfg.limits();
        let plan = if obs.gripper >= self.cfg.grasp_threshold {
            let i = first_b_from(0).unwrap_or(0);
            plan_into(&obs.ee, &ws[i..], limits)
        } else if self.holding(obs) {
            let i = first_b_from(split + 1).unwrap_or(split + 1).min(ws.len());
            plan_into(&obs.ee, &ws[i..], limits)
        } else {
            let i = first_b_from(0).unwrap_or(0);
            let reopen = DemoWaypoint {
                pose: obs.ee,
                grip: 1.0,
                region: RegionLabel::Free,
            };
            let mut p = plan_into(&obs.ee, &ws[i..], limits);
            p.waypoints.insert(0, reopen);
            p
        };
        self.traj = Some(plan);
        Ok(())
    }

    /// Next assistant action for `obs`. Registers lazily if the episode was
    /// not begun explicitly.
    pub fn next_action(&mut self, obs: &Observation) -> Result<Action, AssistantError> {
        if self.traj.is_none() {
            let full = self.register(obs)?;
            self.traj = Some(replan_free(&obs.ee, &full, self.cfg.limits()));
        }
        self.advance(obs);
        let needs_recovery = {
            let traj = self.traj.as_ref().expect("trajectory set");
            match traj.current() {
                Some(w) => deviation(&obs.ee, w) > self.cfg.recovery_threshold,
                None => return Err(AssistantError::TrajectoryExhausted),
            }
        };
        if needs_recovery {
            self.recover(obs)?;
            self.advance(obs);
        }
        let traj = self.traj.as_ref().expect("trajectory set");
        let w = traj.current().ok_or(AssistantError::TrajectoryExhausted)?;
        Ok(self.action_toward(obs, w))
    }

    /// One waypoint per call at most, so the demo's pacing carries over.
    fn advance(&mut self, obs: &Observation) {
        let traj = self.traj.as_ref().expect("trajectory set");
        let c = traj.cursor;
        if c < traj.len() && self.arrived(obs, &traj.waypoints[c]) {
            self.traj.as_mut().expect("trajectory set").cursor = c + 1;
        }
    }

    fn action_toward(&self, obs: &Observation, w: &DemoWaypoint) -> Action {
        let d = w.pose.position() - obs.ee.position();
        Action::new(
            d.x / self.cfg.max_step,
            d.y / self.cfg.max_step,
            obs.ee.heading_to(&w.pose) / self.cfg.max_rot,
            clamp(2.0 * w.grip - 1.0, -1.0, 1.0),
            SourceLabel::Assistant,
        )
    }

    /// Geometric recovery test against the current trajectory, without
    /// re-registering.
    pub fn check_recovery(&self, current: &Pose2) -> Option<TransferredTrajectory> {
        let traj = self.traj.as_ref()?;
        recovery_check(current, traj, self.cfg.recovery_threshold, self.cfg.limits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DeployLabel, Episode, Partition, StepRecord};
    use crate::env::{Env, Scene};
    use crate::geometry::PointSet;

    fn record_oracle(env: &mut Env, scene: Scene, seed: u64) -> Episode {
        let (mut s, mut o) = env.reset_scene(scene, seed);
        let mut steps = Vec::new();
        while !env.is_done(&s) {
            let a = env.oracle_action(&s);
            let r = env.step(&s, &a);
            steps.push(StepRecord {
                k: steps.len() as u64,
                j: 0,
                x: 0.0,
                h: true,
                g: None,
                region: o.region,
                state: s,
                obs: o,
                action: a,
                weight: 1.0,
            });
            s = r.state;
            o = r.obs;
        }
        Episode {
            id: 0,
            partition: Partition::One,
            label: DeployLabel::OneDemo,
            env_seed: seed,
            beta: None,
            success: s.success,
            final_state: s,
            steps,
            exhausted: false,
        }
    }

    fn rollout(env: &mut Env, expert: &mut AssistantExpert, scene: Scene, seed: u64) -> (bool, Vec<Pose2>) {
        let (mut s, mut o) = env.reset_scene(scene, seed);
        expert.begin_episode(&o, seed).unwrap();
        let mut poses = Vec::new();
        while !env.is_done(&s) {
            let a = match expert.next_action(&o) {
                Ok(a) => a,
                Err(_) => break,
            };
            let r = env.step(&s, &a);
            s = r.state;
            o = r.obs;
            poses.push(s.ee);
        }
        (s.success, poses)
    }

    fn setup() -> (Env, Scene, AssistantExpert) {
        let mut env = Env::new(EnvConfig::default());
        let scene = env.sample_scene(0);
        let ep = record_oracle(&mut env, scene, 0);
        assert!(ep.success);
        let demo = Demonstration::from_episode(&ep, &env).unwrap();
        let expert = AssistantExpert::activate(demo, AssistantConfig::default()).unwrap();
        (env, scene, expert)
    }

    #[test]
    fn activation_preconditions() {
        let w = DemoWaypoint {
            pose: Pose2::new(0.5, 0.5, 0.0),
            grip: 1.0,
            region: RegionLabel::Free,
        };
        let two = Demonstration {
            waypoints: alloc::vec![w, w],
            demo_object_points: PointSet::default(),
            demo_goal: Pose2::IDENTITY,
        };
        let exp = AssistantExpert::activate(two.clone(), AssistantConfig::default()).unwrap();
        assert!(exp.trajectory().is_none());
        let one = Demonstration {
            waypoints: alloc::vec![w],
            ..two
        };
        assert_eq!(
            AssistantExpert::activate(one, AssistantConfig::default()).err(),
            Some(AssistantError::TooFewWaypoints(1))
        );
    }

    #[test]
    fn unchanged_scene_replays_demo() {
        let (mut env, scene, mut expert) = setup();
        let (ok, poses) = rollout(&mut env, &mut expert, scene, 1);
        assert!(ok);
        let tol = expert.config().waypoint_tol;
        for w in &expert.demonstration().waypoints {
            let nearest = poses
                .iter()
                .map(|p| p.position().distance(w.pose.position()))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= tol, "waypoint {:?} missed by {nearest}", w.pose);
        }
        assert_eq!(expert.recoveries(), 0);
    }

    #[test]
    fn arrival_advances_cursor() {
        let (mut env, scene, mut expert) = setup();
        let (_, o) = env.reset_scene(scene, 1);
        expert.begin_episode(&o, 1).unwrap();
        let first = *expert.trajectory().unwrap().current().unwrap();
        let mut at = o.clone();
        at.ee = first.pose;
        at.gripper = first.grip;
        expert.next_action(&at).unwrap();
        assert_eq!(expert.trajectory().unwrap().cursor, 1);
    }

    #[test]
    fn translated_scene_succeeds() {
        let (mut env, scene, mut expert) = setup();
        let moved = scene.transformed(&Pose2::new(0.15, -0.1, 0.0));
        let (ok, _) = rollout(&mut env, &mut expert, moved, 2);
        assert!(ok);
    }

    #[test]
    fn generalizes_over_random_scenes() {
        let (mut env, _, mut expert) = setup();
        let ok = (100..200u64)
            .filter(|&seed| {
                let scene = env.sample_scene(seed);
                rollout(&mut env, &mut expert, scene, seed).0
            })
            .count();
        assert!(ok >= 95, "{ok}/100");
    }

    #[test]
    fn recovers_after_displacement() {
        let (mut env, scene, mut expert) = setup();
        let (mut s, mut o) = env.reset_scene(scene, 3);
        expert.begin_episode(&o, 3).unwrap();
        // Shove the EE sideways mid-approach, as a novice might.
        for _ in 0..5 {
            let a = expert.next_action(&o).unwrap();
            let r = env.step(&s, &a);
            s = r.state;
            o = r.obs;
        }
        for _ in 0..6 {
            let r = env.step(&s, &Action::new(1.0, 0.0, 0.0, 0.0, SourceLabel::Novice));
            s = r.state;
            o = r.obs;
        }
        let dev = {
            let t = expert.trajectory().unwrap();
            deviation(&s.ee, t.current().unwrap())
        };
        assert!(dev > expert.config().recovery_threshold);
        let plan = expert.check_recovery(&s.ee).expect("recovery");
        assert!((plan.waypoints[0].pose.position() - s.ee.position()).norm_inf() <= 0.02 + 1e-12);
        while !env.is_done(&s) {
            let a = expert.next_action(&o).unwrap();
            let r = env.step(&s, &a);
            s = r.state;
            o = r.obs;
        }
        assert!(s.success);
        assert!(expert.recoveries() >= 1);
    }
}
