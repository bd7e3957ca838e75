//! A small latched publish/subscribe bus over named topics.
//!
//! Semantics follow ROS latched publishers: each topic remembers its last
//! message and replays it to new subscribers before anything else. Ordering
//! is guaranteed per topic only. Each subscriber owns a bounded queue; a
//! subscriber that falls too far behind is dropped instead of stalling
//! publishers, and its next receive reports [`BusError::SubscriberOverflow`].

mod bridge;
mod frame;

pub use bridge::{BridgeClient, TcpBridge};
pub use frame::{decode_frame, encode_frame, read_frame, FrameError};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError, TrySendError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Default per-subscriber queue depth.
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

pub mod topics {
    pub const ARM_JOINT_COMMAND: &str = "/arm/joint_command";
    pub const ARM_JOINT_STATES: &str = "/arm/joint_states";
    pub const ARM_POSE_COMMAND: &str = "/arm/pose_command";
    pub const ARM_POSE: &str = "/arm/pose";
    pub const BASE_CMD_VEL: &str = "/base/cmd_vel";
    pub const BASE_ODOM: &str = "/base/odom";
    pub const SAFETY_ESTOP: &str = "/safety/estop";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("invalid topic name `{0}`")]
    InvalidTopicName(String),
    #[error("topic `{0}` already advertised with a different schema")]
    SchemaConflict(TopicName),
    #[error("topic `{0}` is not advertised")]
    UnknownTopic(TopicName),
    #[error("payload rejected on `{topic}`: {reason}")]
    PayloadInvalid { topic: TopicName, reason: String },
    #[error("subscriber on `{0}` overflowed its queue and was dropped")]
    SubscriberOverflow(TopicName),
    #[error("bus closed")]
    Closed,
}

/// A validated topic path such as `/base/cmd_vel`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicName(String);

impl TopicName {
    pub fn new(path: &str) -> Result<Self, BusError> {
        let valid = path.starts_with('/')
            && path[1..].split('/').all(|seg| {
                !seg.is_empty()
                    && seg
                        .bytes()
                        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
            });
        if valid {
            Ok(TopicName(path.to_string()))
        } else {
            Err(BusError::InvalidTopicName(path.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<&str> for TopicName {
    type Error = BusError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        TopicName::new(value)
    }
}

impl Serialize for TopicName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TopicName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        TopicName::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Structural payload schema. Objects list required fields; extra fields
/// are tolerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schema {
    Number,
    Bool,
    String,
    Object { fields: BTreeMap<String, Schema> },
}

impl Schema {
    pub fn object<'a>(fields: impl IntoIterator<Item = (&'a str, Schema)>) -> Schema {
        Schema::Object {
            fields: fields
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    pub fn joint_vector() -> Schema {
        Schema::object(
            crate::model::Joint::ALL
                .iter()
                .map(|j| (j.name(), Schema::Number)),
        )
    }

    pub fn quaternion() -> Schema {
        Schema::object(["x", "y", "z", "w"].map(|k| (k, Schema::Number)))
    }

    pub fn arm_pose() -> Schema {
        Schema::object([
            ("position_x", Schema::Number),
            ("position_y", Schema::Number),
            ("position_z", Schema::Number),
            ("orientation", Schema::quaternion()),
        ])
    }

    pub fn velocity_command() -> Schema {
        Schema::object(["v_x", "omega", "duration"].map(|k| (k, Schema::Number)))
    }

    /// Base odometry: the planar pose plus heading in degrees for display.
    pub fn base_odom() -> Schema {
        Schema::object(["x", "y", "theta", "theta_deg"].map(|k| (k, Schema::Number)))
    }

    pub fn estop() -> Schema {
        Schema::object([("engaged", Schema::Bool)])
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        self.validate_at(value, "$")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), String> {
        match (self, value) {
            (Schema::Number, Value::Number(_)) => Ok(()),
            (Schema::Bool, Value::Bool(_)) => Ok(()),
            (Schema::String, Value::String(_)) => Ok(()),
            (Schema::Object { fields }, Value::Object(map)) => {
                for (name, schema) in fields {
                    let child = map
                        .get(name)
                        .ok_or_else(|| format!("{path}.{name} is missing"))?;
                    schema.validate_at(child, &format!("{path}.{name}"))?;
                }
                Ok(())
            }
            (expected, _) => Err(format!("{path} is not a {}", expected.kind())),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Schema::Number => "number",
            Schema::Bool => "bool",
            Schema::String => "string",
            Schema::Object { .. } => "object",
        }
    }
}

/// One message as seen by subscribers. `seq` starts at 1 per topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage {
    pub topic: TopicName,
    pub seq: u64,
    pub payload: Value,
}

struct Slot {
    tx: SyncSender<BusMessage>,
    overflowed: Arc<AtomicBool>,
}

struct TopicState {
    schema: Schema,
    seq: u64,
    latched: Option<BusMessage>,
    subscribers: Vec<Slot>,
}

struct Inner {
    topics: HashMap<TopicName, TopicState>,
}

/// Cloneable handle to a shared bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Mutex<Inner>>,
    queue_capacity: usize,
    dropped: Arc<AtomicU64>,
}

impl Default for Bus {
    fn default() -> Self {
        Bus::new()
    }
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("topics", &self.topics())
            .field("queue_capacity", &self.queue_capacity)
            .finish()
    }
}

impl Bus {
    pub fn new() -> Self {
        Bus::with_queue_capacity(DEFAULT_QUEUE_CAPACITY)
    }

    pub fn with_queue_capacity(queue_capacity: usize) -> Self {
        Bus {
            inner: Arc::new(Mutex::new(Inner {
                topics: HashMap::new(),
            })),
            queue_capacity: queue_capacity.max(1),
            dropped: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Declares a topic. Re-advertising with the same schema is a no-op.
    pub fn advertise(&self, topic: &TopicName, schema: Schema) -> Result<(), BusError> {
        let mut inner = self.inner.lock().unwrap();
        match inner.topics.get(topic) {
            Some(state) if state.schema == schema => Ok(()),
            Some(_) => Err(BusError::SchemaConflict(topic.clone())),
            None => {
                inner.topics.insert(
                    topic.clone(),
                    TopicState {
                        schema,
                        seq: 0,
                        latched: None,
                        subscribers: Vec::new(),
                    },
                );
                Ok(())
            }
        }
    }

    /// Publishes a payload and returns its sequence number on that topic.
    pub fn publish(&self, topic: &TopicName, payload: Value) -> Result<u64, BusError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.clone()))?;
        state
            .schema
            .validate(&payload)
            .map_err(|reason| BusError::PayloadInvalid {
                topic: topic.clone(),
                reason,
            })?;
        state.seq += 1;
        let msg = BusMessage {
            topic: topic.clone(),
            seq: state.seq,
            payload,
        };
        let mut dropped = 0;
        state
            .subscribers
            .retain(|slot| match slot.tx.try_send(msg.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    slot.overflowed.store(true, Ordering::SeqCst);
                    dropped += 1;
                    false
                }
                Err(TrySendError::Disconnected(_)) => false,
            });
        if dropped > 0 {
            log::warn!("dropped {dropped} slow subscriber(s) on {topic}");
            self.dropped.fetch_add(dropped, Ordering::Relaxed);
        }
        state.latched = Some(msg.clone());
        Ok(msg.seq)
    }

    /// Subscribes to a topic. The latched message, if any, is queued first.
    pub fn subscribe(&self, topic: &TopicName) -> Result<Subscription, BusError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.clone()))?;
        let (tx, rx) = mpsc::sync_channel(self.queue_capacity);
        if let Some(latched) = &state.latched {
            tx.try_send(latched.clone())
                .expect("fresh queue has room for the latched message");
        }
        let overflowed = Arc::new(AtomicBool::new(false));
        state.subscribers.push(Slot {
            tx,
            overflowed: overflowed.clone(),
        });
        Ok(Subscription {
            topic: topic.clone(),
            rx,
            overflowed,
        })
    }

    pub fn latest(&self, topic: &TopicName) -> Result<Option<Value>, BusError> {
        let inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.clone()))?;
        Ok(state.latched.as_ref().map(|m| m.payload.clone()))
    }

    pub fn schema(&self, topic: &TopicName) -> Option<Schema> {
        let inner = self.inner.lock().unwrap();
        inner.topics.get(topic).map(|s| s.schema.clone())
    }

    /// Snapshot of all advertised topics and their schemas.
    pub fn schemas(&self) -> BTreeMap<TopicName, Schema> {
        let inner = self.inner.lock().unwrap();
        inner
            .topics
            .iter()
            .map(|(k, v)| (k.clone(), v.schema.clone()))
            .collect()
    }

    pub fn topics(&self) -> Vec<TopicName> {
        self.schemas().into_keys().collect()
    }

    /// Number of subscribers dropped for overflow since the bus was created.
    pub fn dropped_subscribers(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// Receiving end of a subscription. Messages arrive in per-topic publish order.
pub struct Subscription {
    topic: TopicName,
    rx: Receiver<BusMessage>,
    overflowed: Arc<AtomicBool>,
}

impl fmt::Debug for Subscription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subscription")
            .field("topic", &self.topic)
            .finish()
    }
}

impl Subscription {
    pub fn topic(&self) -> &TopicName {
        &self.topic
    }

    fn disconnected(&self) -> BusError {
        if self.overflowed.load(Ordering::SeqCst) {
            BusError::SubscriberOverflow(self.topic.clone())
        } else {
            BusError::Closed
        }
    }

    /// Blocks until the next message arrives.
    pub fn recv(&self) -> Result<BusMessage, BusError> {
        self.rx.recv().map_err(|_| self.disconnected())
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<BusMessage>, BusError> {
        match self.rx.recv_timeout(timeout) {
            Ok(msg) => Ok(Some(msg)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(self.disconnected()),
        }
    }

    pub fn try_recv(&self) -> Result<Option<BusMessage>, BusError> {
        match self.rx.try_recv() {
            Ok(msg) => Ok(Some(msg)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(self.disconnected()),
        }
    }

    /// Everything currently queued, without blocking.
    pub fn drain(&self) -> Result<Vec<BusMessage>, BusError> {
        let mut out = Vec::new();
        while let Some(msg) = self.try_recv()? {
            out.push(msg);
        }
        Ok(out)
    }
}

impl Iterator for Subscription {
    type Item = BusMessage;

    fn next(&mut self) -> Option<BusMessage> {
        self.rx.recv().ok()
    }
}

/// Advertises the fixed gateway topic set with its schemas.
pub fn advertise_gateway_topics(bus: &Bus) -> Result<(), BusError> {
    let table = [
        (topics::ARM_JOINT_COMMAND, Schema::joint_vector()),
        (topics::ARM_JOINT_STATES, Schema::joint_vector()),
        (topics::ARM_POSE_COMMAND, Schema::arm_pose()),
        (topics::ARM_POSE, Schema::arm_pose()),
        (topics::BASE_CMD_VEL, Schema::velocity_command()),
        (topics::BASE_ODOM, Schema::base_odom()),
        (topics::SAFETY_ESTOP, Schema::estop()),
    ];
    for (name, schema) in table {
        bus.advertise(&TopicName::new(name)?, schema)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cmd_vel() -> TopicName {
        TopicName::new(topics::BASE_CMD_VEL).unwrap()
    }

    #[test]
    fn topic_names() {
        assert!(TopicName::new("/arm/joint_states").is_ok());
        assert!(TopicName::new("/a1_b/c").is_ok());
        for bad in ["", "/", "arm", "/Arm", "/arm/", "//x", "/a-b"] {
            assert!(TopicName::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn advertise_is_idempotent_but_checks_schema() {
        let bus = Bus::new();
        bus.advertise(&cmd_vel(), Schema::velocity_command())
            .unwrap();
        bus.advertise(&cmd_vel(), Schema::velocity_command())
            .unwrap();
        assert_eq!(
            bus.advertise(&cmd_vel(), Schema::joint_vector()),
            Err(BusError::SchemaConflict(cmd_vel()))
        );
    }

    #[test]
    fn publish_sequence_and_errors() {
        let bus = Bus::new();
        let unknown = TopicName::new("/nowhere").unwrap();
        assert!(matches!(
            bus.publish(&unknown, json!({})),
            Err(BusError::UnknownTopic(_))
        ));
        bus.advertise(&cmd_vel(), Schema::velocity_command())
            .unwrap();
        let seq = bus
            .publish(&cmd_vel(), json!({"v_x":0.05,"omega":0.0,"duration":5.0}))
            .unwrap();
        assert_eq!(seq, 1);
        let seq = bus
            .publish(&cmd_vel(), json!({"v_x":0.05,"omega":0.0,"duration":5.0}))
            .unwrap();
        assert_eq!(seq, 2);
        assert!(matches!(
            bus.publish(&cmd_vel(), json!({"v_x":0.05,"omega":0.0})),
            Err(BusError::PayloadInvalid { .. })
        ));
        assert!(matches!(
            bus.publish(&cmd_vel(), json!({"v_x":"fast","omega":0.0,"duration":1})),
            Err(BusError::PayloadInvalid { .. })
        ));
    }

    #[test]
    fn subscribe_order_and_latching() {
        let bus = Bus::new();
        let t = TopicName::new("/t").unwrap();
        bus.advertise(&t, Schema::Number).unwrap();
        assert_eq!(bus.latest(&t).unwrap(), None);
        let early = bus.subscribe(&t).unwrap();
        bus.publish(&t, json!(1)).unwrap();
        bus.publish(&t, json!(2)).unwrap();
        let got: Vec<_> = early
            .drain()
            .unwrap()
            .into_iter()
            .map(|m| m.payload)
            .collect();
        assert_eq!(got, vec![json!(1), json!(2)]);
        assert_eq!(bus.latest(&t).unwrap(), Some(json!(2)));

        let late = bus.subscribe(&t).unwrap();
        let first = late.try_recv().unwrap().unwrap();
        assert_eq!(first.payload, json!(2));
        assert_eq!(first.seq, 2);

        assert!(matches!(
            bus.subscribe(&TopicName::new("/missing").unwrap()),
            Err(BusError::UnknownTopic(_))
        ));
    }

    #[test]
    fn slow_subscriber_is_dropped_not_blocking() {
        let bus = Bus::with_queue_capacity(4);
        let t = TopicName::new("/t").unwrap();
        bus.advertise(&t, Schema::Number).unwrap();
        let slow = bus.subscribe(&t).unwrap();
        for i in 0..10 {
            bus.publish(&t, json!(i)).unwrap();
        }
        assert_eq!(bus.dropped_subscribers(), 1);
        assert_eq!(slow.drain(), Err(BusError::SubscriberOverflow(t.clone())));
    }

    #[test]
    fn missing_nested_field_rejected() {
        let schema = Schema::arm_pose();
        let v =
            json!({"position_x":0,"position_y":0,"position_z":0,"orientation":{"x":0,"y":0,"z":0}});
        let err = schema.validate(&v).unwrap_err();
        assert!(err.contains("orientation.w"), "{err}");
    }
}
