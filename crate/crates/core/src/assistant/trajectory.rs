//! Demonstration waypoints, rigid transfer into the current scene, and
//! free-space replanning.

use alloc::vec::Vec;

use crate::dataset::Episode;
use crate::env::{Env, RegionLabel};
use crate::error::AssistantError;
use crate::geometry::{interpolate_pose, PointSet, Pose2};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DemoWaypoint {
    pub pose: Pose2,
    /// Absolute gripper opening in `[0, 1]`.
    pub grip: f64,
    pub region: RegionLabel,
}

impl DemoWaypoint {
    pub fn is_bottleneck(&self) -> bool {
        self.region == RegionLabel::Bottleneck
    }
}

/// The single stored demonstration the assistant is built from.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Demonstration {
    pub waypoints: Vec<DemoWaypoint>,
    /// Noiseless outline of the object at its demo-time pose.
    pub demo_object_points: PointSet,
    /// Goal pose as observed during the demo.
    pub demo_goal: Pose2,
}

impl Demonstration {
    pub fn new(waypoints: Vec<DemoWaypoint>, demo_object_points: PointSet, demo_goal: Pose2) -> Result<Self, AssistantError> {
        let d = Self {
            waypoints,
            demo_object_points,
            demo_goal,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), AssistantError> {
        if self.waypoints.len() < 2 {
            return Err(AssistantError::TooFewWaypoints(self.waypoints.len()));
        }
        if self.waypoints[0].is_bottleneck() {
            return Err(AssistantError::FirstWaypointNotFree);
        }
        Ok(())
    }

    /// Waypoint `i` is the EE pose and gripper after step `i`, labelled with
    /// the region the step started from.
    pub fn from_episode(episode: &Episode, env: &Env) -> Result<Self, AssistantError> {
        let first = episode.steps.first().ok_or(AssistantError::TooFewWaypoints(0))?;
        let waypoints = episode
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let after = episode.steps.get(i + 1).map_or(&episode.final_state, |n| &n.state);
                DemoWaypoint {
                    pose: after.ee,
                    grip: after.gripper,
                    region: s.region,
                }
            })
            .collect();
        Self::new(waypoints, env.object_points(&first.state.object), first.obs.goal)
    }

    /// Index of the first waypoint that closes the gripper, if any.
    pub fn grasp_index(&self) -> Option<usize> {
        let mut prev = 1.0;
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.grip < prev {
                return Some(i);
            }
            prev = w.grip;
        }
        None
    }
}

/// Compose every waypoint pose with `t`; grips and regions are copied.
pub fn transfer_trajectory(demo: &Demonstration, t: &Pose2) -> TransferredTrajectory {
    transfer_anchored(demo, t, t)
}

/// Waypoints up to and including the grasp move with the object transform,
/// later ones with the goal transform. Without a grasp everything follows
/// the object.
pub fn transfer_anchored(demo: &Demonstration, t_obj: &Pose2, t_goal: &Pose2) -> TransferredTrajectory {
    let split = demo.grasp_index().unwrap_or(demo.waypoints.len());
    let waypoints = demo
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| DemoWaypoint {
            pose: if i <= split { t_obj } else { t_goal }.compose(&w.pose),
            ..*w
        })
        .collect();
    TransferredTrajectory::new(waypoints)
}

/// Per-step motion limits; an interpolated path never asks for more than
/// one step between consecutive waypoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLimits {
    pub max_step: f64,
    pub max_rot: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferredTrajectory {
    pub waypoints: Vec<DemoWaypoint>,
    /// Index of the first unvisited waypoint; everything before it has been
    /// visited.
    pub cursor: usize,
}

impl TransferredTrajectory {
    pub fn new(waypoints: Vec<DemoWaypoint>) -> Self {
        Self { waypoints, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn current(&self) -> Option<&DemoWaypoint> {
        self.waypoints.get(self.cursor)
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.waypoints.len()
    }

    pub fn remaining(&self) -> &[DemoWaypoint] {
        &self.waypoints[self.cursor.min(self.waypoints.len())..]
    }

    pub fn is_visited(&self, i: usize) -> bool {
        i < self.cursor
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.waypoints.iter().map(|w| w.pose).collect()
    }
}

/// Waypoints strictly between `from` and `to`, spaced so that each hop is
/// within one step in both translation (per axis) and rotation. `to` itself
/// is not included.
pub fn interpolate_between(from: &Pose2, to: &Pose2, grip: f64, limits: StepLimits) -> Vec<DemoWaypoint> {
    let d = to.position() - from.position();
    let rot = from.heading_to(to).abs();
    // The slack keeps an exact multiple of the step from gaining a hop to
    // rounding.
    let hops = |len: f64, step: f64| math::ceil(len / step - 1e-9);
    let hops = hops(d.norm_inf(), limits.max_step).max(hops(rot, limits.max_rot)).max(1.0) as usize;
    (1..hops)
        .map(|i| DemoWaypoint {
            pose: interpolate_pose(from, to, i as f64 / hops as f64),
            grip,
            region: RegionLabel::Free,
        })
        .collect()
}

/// Rebuild every free-space run of `waypoints` as a straight interpolated
/// path between the bottleneck waypoints around it. Leading free waypoints
/// are rebuilt from `start`; a trailing free run with no bottleneck after
/// it is kept as is. Bottleneck waypoints are copied verbatim.
fn rebuild_free_runs(start: &Pose2, waypoints: &[DemoWaypoint], limits: StepLimits) -> Vec<DemoWaypoint> {
    let mut out = Vec::with_capacity(waypoints.len());
    let mut anchor = *start;
    let mut i = 0;
    while i < waypoints.len() {
        if waypoints[i].is_bottleneck() {
            out.push(waypoints[i]);
            anchor = waypoints[i].pose;
            i += 1;
            continue;
        }
        let run_start = i;
        while i < waypoints.len() && !waypoints[i].is_bottleneck() {
            i += 1;
        }
        if i == waypoints.len() {
            out.extend_from_slice(&waypoints[run_start..]);
            break;
        }
        let grip = waypoints[run_start].grip;
        out.extend(interpolate_between(&anchor, &waypoints[i].pose, grip, limits));
    }
    out
}

/// Replace the free-space prefix (from `current` up to the first unvisited
/// bottleneck waypoint) and the later free-space runs with interpolated
/// waypoints. The result starts fresh at cursor 0.
pub fn replan_free(current: &Pose2, traj: &TransferredTrajectory, limits: StepLimits) -> TransferredTrajectory {
    let rest = traj.remaining();
    match rest.first() {
        None => TransferredTrajectory::new(Vec::new()),
        Some(w) if w.is_bottleneck() => {
            // Nothing to rebuild before the bottleneck; later runs still are.
            let mut out = alloc::vec![*w];
            out.extend(rebuild_free_runs(&w.pose, &rest[1..], limits));
            TransferredTrajectory::new(out)
        }
        Some(_) => TransferredTrajectory::new(rebuild_free_runs(current, rest, limits)),
    }
}

/// A fresh plan from `current` into `targets`, whose first element is the
/// bottleneck waypoint to head for.
pub fn plan_into(current: &Pose2, targets: &[DemoWaypoint], limits: StepLimits) -> TransferredTrajectory {
    let Some(first) = targets.first() else {
        return TransferredTrajectory::new(Vec::new());
    };
    let mut out = Vec::new();
    if first.is_bottleneck() {
        out.extend(interpolate_between(current, &first.pose, first.grip, limits));
    }
    out.extend(rebuild_free_runs(current, targets, limits));
    TransferredTrajectory::new(out)
}

/// Deviation used by recovery: Euclidean EE position error.
pub fn deviation(current: &Pose2, target: &DemoWaypoint) -> f64 {
    current.position().distance(target.pose.position())
}

/// If `current` has strayed more than `threshold` from the waypoint under
/// the cursor, return a new plan heading for the first unvisited bottleneck
/// waypoint. The boundary is strict: a deviation equal to the threshold
/// does not trigger.
pub fn recovery_check(
    current: &Pose2,
    traj: &TransferredTrajectory,
    threshold: f64,
    limits: StepLimits,
) -> Option<TransferredTrajectory> {
    let target = traj.current()?;
    if deviation(current, target) <= threshold {
        return None;
    }
    let rest = traj.remaining();
    let first_b = rest.iter().position(DemoWaypoint::is_bottleneck).unwrap_or(0);
    Some(plan_into(current, &rest[first_b..], limits))
}
