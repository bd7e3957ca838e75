//! Scores a session trace against intended end states and aggregates the
//! errors by prompt granularity.

mod render;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bridge::{Granularity, GranularityLabel, RobotCommand};
use crate::gateway::{EventBody, RobotState, SessionEvent};
use crate::model::{deg_to_rad, rad_to_deg, wrap_angle, ArmPose, BasePose2D, JointVector};
use crate::sim::Robot;

pub use render::{parse_csv, render_report, render_report_named, CsvRow, ReportFormat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace and fixture disagree: {0}")]
    FixtureMismatch(String),
    #[error("unknown report format `{0}` (expected csv or md)")]
    UnknownFormat(String),
    #[error("cannot load fixture: {0}")]
    Fixture(String),
}

/// L∞ distance between two joint vectors, rad.
pub fn joint_error(intended: &JointVector, achieved: &JointVector) -> f64 {
    intended
        .iter()
        .map(|(j, a)| (a - achieved.get(j)).abs())
        .fold(0.0, f64::max)
}

/// (Euclidean distance in the plane, wrapped absolute heading difference).
pub fn planar_error(intended: &BasePose2D, achieved: &BasePose2D) -> (f64, f64) {
    let d = (intended.x - achieved.x).hypot(intended.y - achieved.y);
    let h = wrap_angle(intended.theta - achieved.theta).abs();
    (d, h)
}

/// (position distance, orientation angle) between two end-effector poses.
pub fn pose_error(intended: &ArmPose, achieved: &ArmPose) -> (f64, f64) {
    (
        intended.distance_to(achieved),
        intended.orientation.angle_to(&achieved.orientation),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub joint_rad: f64,
    pub position_m: f64,
    pub angle_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            joint_rad: 0.01,
            position_m: 0.01,
            angle_deg: 1.0,
        }
    }
}

/// Target end state of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Intended {
    Joints { joints: JointVector },
    Pose { pose: ArmPose },
    Base { x: f64, y: f64, theta_deg: f64 },
}

impl Intended {
    pub fn robot(&self) -> Robot {
        match self {
            Intended::Joints { .. } | Intended::Pose { .. } => Robot::Arm,
            Intended::Base { .. } => Robot::Base,
        }
    }
}

/// One fixture entry. Only `prompt_id` and `robot` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    pub robot: Robot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intended: Option<Intended>,
    /// Expected prompt text, checked against the trace when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Where this backend knowingly differs from the reference recording.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Reference measurements, carried along for the reader only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Value>,
}

pub fn load_fixture(path: &Path) -> Result<Vec<Expectation>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Fixture(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Fixture(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricValue {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub success: bool,
}

/// How the turn ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Moved,
    Halted,
    Clarification,
    Error(String),
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub session: String,
    pub prompt_id: String,
    pub prompt: String,
    pub label: GranularityLabel,
    #[serde(skip)]
    pub command: Option<RobotCommand>,
    pub intended: Option<Intended>,
    pub achieved: Option<RobotState>,
    /// Present iff `intended` is.
    pub errors: Vec<MetricValue>,
    pub outcome: Outcome,
    pub note: Option<String>,
}

impl TrialRecord {
    pub fn is_scored(&self) -> bool {
        self.intended.is_some()
    }

    pub fn succeeded(&self) -> bool {
        self.is_scored() && self.errors.iter().all(|m| m.success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub label: Granularity,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub label: Granularity,
    pub trials: usize,
    pub scored: usize,
    pub succeeded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceNote {
    pub prompt_id: String,
    pub prompt: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EvalReport {
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub summaries: Vec<LabelSummary>,
    pub notes: Vec<DivergenceNote>,
}

fn trials_from_events(events: &[SessionEvent]) -> Vec<TrialRecord> {
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for ev in events {
        let Some(pid) = ev.body.prompt_id() else {
            continue;
        };
        let key = (ev.session.clone(), pid.to_string());
        if let EventBody::Prompt { text, .. } = &ev.body {
            index.insert(key.clone(), trials.len());
            trials.push(TrialRecord {
                session: ev.session.clone(),
                prompt_id: pid.to_string(),
                prompt: text.clone(),
                label: GranularityLabel {
                    label: Granularity::Qualitative,
                    quantities: Vec::new(),
                },
                command: None,
                intended: None,
                achieved: None,
                errors: Vec::new(),
                outcome: Outcome::Incomplete,
                note: None,
            });
            continue;
        }
        let Some(&i) = index.get(&key) else {
            continue;
        };
        let t = &mut trials[i];
        match &ev.body {
            EventBody::Granularity { label, .. } => t.label = label.clone(),
            EventBody::ToolCall { call, .. } => t.command = Some(call.command),
            EventBody::ToolResult {
                achieved, halted, ..
            } => {
                t.achieved = Some(*achieved);
                t.outcome = if *halted {
                    Outcome::Halted
                } else {
                    Outcome::Moved
                };
            }
            EventBody::Clarification { .. } => t.outcome = Outcome::Clarification,
            EventBody::Error { error, .. } if t.outcome == Outcome::Incomplete => {
                t.outcome = Outcome::Error(format!("{error:?}"))
            }
            _ => {}
        }
    }
    trials
}

fn score(
    intended: &Intended,
    achieved: Option<&RobotState>,
    th: &Thresholds,
) -> Result<Vec<MetricValue>, String> {
    let metric = |name: &str, value: f64, threshold: f64| MetricValue {
        metric: name.to_string(),
        value,
        threshold,
        success: value <= threshold,
    };
    let angle_th = th.angle_deg;
    Ok(match (intended, achieved) {
        (Intended::Joints { joints }, Some(RobotState::Arm { joints: got, .. })) => {
            vec![metric(
                "joint_linf_rad",
                joint_error(joints, got),
                th.joint_rad,
            )]
        }
        (Intended::Pose { pose }, Some(RobotState::Arm { pose: got, .. })) => {
            let (d, a) = pose_error(pose, got);
            vec![
                metric("position_m", d, th.position_m),
                metric("orientation_deg", rad_to_deg(a), angle_th),
            ]
        }
        (Intended::Base { x, y, theta_deg }, Some(RobotState::Base(odom))) => {
            let want = BasePose2D {
                x: *x,
                y: *y,
                theta: wrap_angle(deg_to_rad(*theta_deg)),
            };
            let (d, h) = planar_error(&want, &odom.pose());
            vec![
                metric("planar_m", d, th.position_m),
                metric("heading_deg", rad_to_deg(h), angle_th),
            ]
        }
        (i, Some(got)) => {
            return Err(format!(
                "intended {:?} state but trace reports {} state",
                i.robot(),
                got.robot()
            ))
        }
        // Never reached: the turn failed before any motion.
        (Intended::Joints { .. }, None) => {
            vec![metric("joint_linf_rad", f64::INFINITY, th.joint_rad)]
        }
        (Intended::Pose { .. }, None) => vec![
            metric("position_m", f64::INFINITY, th.position_m),
            metric("orientation_deg", f64::INFINITY, angle_th),
        ],
        (Intended::Base { .. }, None) => vec![
            metric("planar_m", f64::INFINITY, th.position_m),
            metric("heading_deg", f64::INFINITY, angle_th),
        ],
    })
}

/// Builds the report. Every fixture entry must name a prompt in the trace.
pub fn evaluate(
    events: &[SessionEvent],
    fixture: &[Expectation],
    thresholds: &Thresholds,
) -> Result<EvalReport, EvalError> {
    let mut trials = trials_from_events(events);
    for exp in fixture {
        let matches: Vec<usize> = trials
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                t.prompt_id == exp.prompt_id && exp.session.as_ref().is_none_or(|s| *s == t.session)
            })
            .map(|(i, _)| i)
            .collect();
        let i = match matches.as_slice() {
            [i] => *i,
            [] => {
                return Err(EvalError::FixtureMismatch(format!(
                    "prompt {} is not in the trace",
                    exp.prompt_id
                )))
            }
            _ => {
                return Err(EvalError::FixtureMismatch(format!(
                    "prompt {} occurs in several sessions; give a session",
                    exp.prompt_id
                )))
            }
        };
        let t = &mut trials[i];
        if let Some(p) = &exp.prompt {
            if *p != t.prompt {
                return Err(EvalError::FixtureMismatch(format!(
                    "prompt {}: fixture says {p:?}, trace says {:?}",
                    exp.prompt_id, t.prompt
                )));
            }
        }
        if let Some(cmd) = &t.command {
            if cmd.robot() != exp.robot {
                return Err(EvalError::FixtureMismatch(format!(
                    "prompt {}: fixture robot {} but the call drove the {}",
                    exp.prompt_id,
                    exp.robot,
                    cmd.robot()
                )));
            }
        }
        t.note = exp.note.clone();
        if let Some(intended) = exp.intended {
            if intended.robot() != exp.robot {
                return Err(EvalError::FixtureMismatch(format!(
                    "prompt {}: intended state is for the {}",
                    exp.prompt_id,
                    intended.robot()
                )));
            }
            t.errors = score(&intended, t.achieved.as_ref(), thresholds).map_err(|m| {
                EvalError::FixtureMismatch(format!("prompt {}: {m}", exp.prompt_id))
            })?;
            t.intended = Some(intended);
        }
    }
    Ok(summarize(trials))
}

fn summarize(trials: Vec<TrialRecord>) -> EvalReport {
    // (label, metric) -> (count, sum, max, successes), in first-seen order.
    let mut order: Vec<(Granularity, String)> = Vec::new();
    let mut acc: BTreeMap<(Granularity, String), (usize, f64, f64, usize)> = BTreeMap::new();
    let mut summaries: BTreeMap<Granularity, LabelSummary> = BTreeMap::new();
    for t in &trials {
        let s = summaries.entry(t.label.label).or_insert(LabelSummary {
            label: t.label.label,
            trials: 0,
            scored: 0,
            succeeded: 0,
        });
        s.trials += 1;
        if t.is_scored() {
            s.scored += 1;
        }
        if t.succeeded() {
            s.succeeded += 1;
        }
        for m in &t.errors {
            let key = (t.label.label, m.metric.clone());
            let e = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (0, 0.0, 0.0, 0)
            });
            e.0 += 1;
            e.1 += m.value;
            e.2 = f64::max(e.2, m.value);
            e.3 += usize::from(m.success);
        }
    }
    let aggregates = order
        .into_iter()
        .map(|key| {
            let (count, sum, max, ok) = acc[&key];
            Aggregate {
                label: key.0,
                metric: key.1,
                count,
                mean: sum / count as f64,
                max,
                success_rate: ok as f64 / count as f64,
            }
        })
        .collect();
    let notes = trials
        .iter()
        .filter_map(|t| {
            t.note.as_ref().map(|n| DivergenceNote {
                prompt_id: t.prompt_id.clone(),
                prompt: t.prompt.clone(),
                note: n.clone(),
            })
        })
        .collect();
    EvalReport {
        trials,
        aggregates,
        summaries: summaries.into_values().collect(),
        notes,
    }
}
