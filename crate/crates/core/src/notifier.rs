//! Alert dispatch: voice alerts for danger-notice events and debounced
//! social-media webhook messages for photo-link events.
//!
//! The pipeline thread only gates and enqueues commands; delivery runs on a
//! worker thread consuming a bounded queue (overflow drops the oldest entry
//! with a count), so a stalled transport never holds up frame processing.
//! Every outcome is appended to `notify.log` as
//! `<event_ts>\t<kind>\t<status>\t<attempts>`.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

use crate::engine::{EventKind, TriggeredEvent};

/// Commands waiting for the delivery worker; beyond this the oldest is dropped.
pub const PENDING_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertKind {
    VoiceAlert,
    SocialMessage,
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertKind::VoiceAlert => "VoiceAlert",
            AlertKind::SocialMessage => "SocialMessage",
        })
    }
}

/// A gated alert awaiting delivery.
#[derive(Debug, Clone)]
pub struct AlertCommand {
    pub kind: AlertKind,
    pub event_ts_ms: u64,
    pub roi_id: u32,
    pub message: String,
    /// Snapshot file attached to social messages.
    pub snapshot: Option<PathBuf>,
    /// Delivery-clock time the command was created; the deadline counts
    /// from here.
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NotificationPolicy {
    /// Delivery must finish within this much time of the event.
    pub deadline_ms: u64,
    /// Minimum gap between social messages, keyed on event timestamps.
    pub social_window_ms: u64,
    /// Minimum gap between voice alerts.
    pub voice_window_ms: u64,
    /// Retries after the first failed attempt.
    pub max_retries: u32,
    /// Sleep before retry 1, 2, ... (the last entry repeats).
    pub backoff_ms: Vec<u64>,
}

impl Default for NotificationPolicy {
    fn default() -> Self {
        NotificationPolicy {
            deadline_ms: 300_000,
            social_window_ms: 300_000,
            voice_window_ms: 30_000,
            max_retries: 3,
            backoff_ms: vec![1_000, 4_000, 16_000],
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("delivery failed: {0}")]
pub struct DeliveryError(pub String);

/// Posts one encoded request body somewhere.
pub trait Transport: Send {
    fn send(&self, body: &[u8]) -> Result<(), DeliveryError>;
}

/// Plays (or records) a voice alert.
pub trait VoiceSink: Send {
    fn alert(&self, event_ts_ms: u64, message: &str) -> Result<(), DeliveryError>;
}

/// Time source for delivery pacing; swap in [`MockClock`] for tests.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_ms(&self, ms: u64) {
        thread::sleep(Duration::from_millis(ms));
    }
}

/// Virtual clock: sleeping advances time instantly and records the request.
#[derive(Default)]
pub struct MockClock {
    now: AtomicU64,
    sleeps: Mutex<Vec<u64>>,
}

impl MockClock {
    pub fn new() -> Arc<Self> {
        Arc::new(MockClock::default())
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn sleeps(&self) -> Vec<u64> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for MockClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        self.sleeps.lock().unwrap().push(ms);
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

/// Scripted transport: pops one outcome per send (`true` = accepted), then
/// accepts everything; bodies are kept for inspection.
#[derive(Default)]
pub struct MockTransport {
    script: Mutex<VecDeque<bool>>,
    bodies: Mutex<Vec<Vec<u8>>>,
}

impl MockTransport {
    pub fn accepting() -> Arc<Self> {
        Arc::new(MockTransport::default())
    }

    pub fn scripted(outcomes: &[bool]) -> Arc<Self> {
        Arc::new(MockTransport {
            script: Mutex::new(outcomes.iter().copied().collect()),
            bodies: Mutex::new(Vec::new()),
        })
    }

    pub fn bodies(&self) -> Vec<Vec<u8>> {
        self.bodies.lock().unwrap().clone()
    }
}

impl Transport for MockTransport {
    fn send(&self, body: &[u8]) -> Result<(), DeliveryError> {
        self.bodies.lock().unwrap().push(body.to_vec());
        let ok = self.script.lock().unwrap().pop_front().unwrap_or(true);
        if ok {
            Ok(())
        } else {
            Err(DeliveryError("scripted failure".into()))
        }
    }
}

impl<T: Transport + Sync + ?Sized> Transport for Arc<T> {
    fn send(&self, body: &[u8]) -> Result<(), DeliveryError> {
        (**self).send(body)
    }
}

/// Voice sink that records invocations.
#[derive(Default)]
pub struct RecordingVoiceSink {
    invocations: Mutex<Vec<(u64, String)>>,
    fail: bool,
}

impl RecordingVoiceSink {
    pub fn new() -> Arc<Self> {
        Arc::new(RecordingVoiceSink::default())
    }

    pub fn failing() -> Arc<Self> {
        Arc::new(RecordingVoiceSink { invocations: Mutex::new(Vec::new()), fail: true })
    }

    pub fn invocations(&self) -> Vec<(u64, String)> {
        self.invocations.lock().unwrap().clone()
    }
}

impl VoiceSink for RecordingVoiceSink {
    fn alert(&self, event_ts_ms: u64, message: &str) -> Result<(), DeliveryError> {
        self.invocations.lock().unwrap().push((event_ts_ms, message.to_string()));
        if self.fail {
            Err(DeliveryError("sink exited nonzero".into()))
        } else {
            Ok(())
        }
    }
}

impl<T: VoiceSink + Sync + ?Sized> VoiceSink for Arc<T> {
    fn alert(&self, event_ts_ms: u64, message: &str) -> Result<(), DeliveryError> {
        (**self).alert(event_ts_ms, message)
    }
}

/// Voice sink that runs an external command hook, appending the event
/// timestamp and message to the configured arguments.
pub struct CommandVoiceSink {
    pub program: String,
    pub args: Vec<String>,
}

impl VoiceSink for CommandVoiceSink {
    fn alert(&self, event_ts_ms: u64, message: &str) -> Result<(), DeliveryError> {
        let status = std::process::Command::new(&self.program)
            .args(&self.args)
            .arg(event_ts_ms.to_string())
            .arg(message)
            .status()
            .map_err(|e| DeliveryError(format!("cannot run {}: {e}", self.program)))?;
        if status.success() {
            Ok(())
        } else {
            Err(DeliveryError(format!("{} exited with {status}", self.program)))
        }
    }
}

/// Webhook request body: `{"event_ts": ms, "image": base64, "message": text}`
/// with sorted keys; the byte encoding is stable for golden tests.
pub fn social_body(message: &str, image: &[u8], event_ts_ms: u64) -> Vec<u8> {
    serde_json::json!({
        "event_ts": event_ts_ms,
        "image": BASE64.encode(image),
        "message": message,
    })
    .to_string()
    .into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Delivered,
    Failed,
    DeadlineMissed,
}

impl fmt::Display for DeliveryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeliveryStatus::Delivered => "delivered",
            DeliveryStatus::Failed => "failed",
            DeliveryStatus::DeadlineMissed => "deadline_missed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryResult {
    pub status: DeliveryStatus,
    pub attempts: u32,
}

/// Sends a social message with retry and backoff. The deadline is checked
/// before every attempt against the command's creation time.
pub fn deliver_social(
    command: &AlertCommand,
    transport: &dyn Transport,
    clock: &dyn Clock,
    policy: &NotificationPolicy,
) -> DeliveryResult {
    let image = match &command.snapshot {
        Some(path) => match fs::read(path) {
            Ok(bytes) => bytes,
            Err(_) => {
                return DeliveryResult { status: DeliveryStatus::Failed, attempts: 0 };
            }
        },
        None => Vec::new(),
    };
    let body = social_body(&command.message, &image, command.event_ts_ms);
    let mut attempts = 0u32;
    loop {
        if clock.now_ms().saturating_sub(command.created_at_ms) > policy.deadline_ms {
            return DeliveryResult { status: DeliveryStatus::DeadlineMissed, attempts };
        }
        attempts += 1;
        match transport.send(&body) {
            Ok(()) => return DeliveryResult { status: DeliveryStatus::Delivered, attempts },
            Err(_) if attempts <= policy.max_retries => {
                let i = (attempts as usize - 1).min(policy.backoff_ms.len().saturating_sub(1));
                let backoff = policy.backoff_ms.get(i).copied().unwrap_or(0);
                clock.sleep_ms(backoff);
            }
            Err(_) => return DeliveryResult { status: DeliveryStatus::Failed, attempts },
        }
    }
}

/// Invokes the voice sink exactly once; failures are non-fatal.
pub fn emit_voice(command: &AlertCommand, sink: &dyn VoiceSink) -> DeliveryResult {
    let status = match sink.alert(command.event_ts_ms, &command.message) {
        Ok(()) => DeliveryStatus::Delivered,
        Err(_) => DeliveryStatus::Failed,
    };
    DeliveryResult { status, attempts: 1 }
}

/// Per-kind suppression keyed on event timestamps: a command is created
/// unless a same-kind command was created within the window. Watch-dog
/// events are record-only and never produce a command.
pub struct AlertGate {
    policy: NotificationPolicy,
    last_voice_event_ts: Option<u64>,
    last_social_event_ts: Option<u64>,
}

impl AlertGate {
    pub fn new(policy: NotificationPolicy) -> Self {
        AlertGate { policy, last_voice_event_ts: None, last_social_event_ts: None }
    }

    pub fn policy(&self) -> &NotificationPolicy {
        &self.policy
    }

    pub fn enqueue(
        &mut self,
        event: &TriggeredEvent,
        snapshot: Option<&Path>,
        message: &str,
        created_at_ms: u64,
    ) -> Option<AlertCommand> {
        let (kind, last, window) = match event.kind {
            EventKind::WatchDog => return None,
            EventKind::DangerNotice => (
                AlertKind::VoiceAlert,
                &mut self.last_voice_event_ts,
                self.policy.voice_window_ms,
            ),
            EventKind::PhotoLink => (
                AlertKind::SocialMessage,
                &mut self.last_social_event_ts,
                self.policy.social_window_ms,
            ),
        };
        if let Some(prev) = *last {
            if event.timestamp_ms.saturating_sub(prev) < window {
                return None;
            }
        }
        *last = Some(event.timestamp_ms);
        Some(AlertCommand {
            kind,
            event_ts_ms: event.timestamp_ms,
            roi_id: event.roi_id,
            message: message.to_string(),
            snapshot: snapshot.map(Path::to_path_buf),
            created_at_ms,
        })
    }
}

struct QueueInner {
    items: VecDeque<AlertCommand>,
    closed: bool,
    dropped: u64,
}

struct AlertQueue {
    inner: Mutex<QueueInner>,
    ready: Condvar,
}

impl AlertQueue {
    fn new() -> Self {
        AlertQueue {
            inner: Mutex::new(QueueInner { items: VecDeque::new(), closed: false, dropped: 0 }),
            ready: Condvar::new(),
        }
    }

    fn push(&self, command: AlertCommand) {
        let mut inner = self.inner.lock().unwrap();
        if inner.items.len() == PENDING_CAPACITY {
            inner.items.pop_front();
            inner.dropped += 1;
        }
        inner.items.push_back(command);
        drop(inner);
        self.ready.notify_one();
    }

    fn pop(&self) -> Option<AlertCommand> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if let Some(cmd) = inner.items.pop_front() {
                return Some(cmd);
            }
            if inner.closed {
                return None;
            }
            inner = self.ready.wait(inner).unwrap();
        }
    }

    fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    fn dropped(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }
}

/// Delivery tallies returned by [`Notifier::finish`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NotifyStats {
    pub social_delivered: u64,
    pub social_failed: u64,
    pub social_deadline_missed: u64,
    pub voice_delivered: u64,
    pub voice_failed: u64,
}

/// Front end used by the pipeline: gate on the caller thread, deliver on a
/// worker thread. Dropping without [`Notifier::finish`] closes the queue and
/// detaches the worker so a stalled transport cannot hang the caller.
pub struct Notifier {
    gate: AlertGate,
    queue: Arc<AlertQueue>,
    clock: Arc<dyn Clock>,
    worker: Option<JoinHandle<NotifyStats>>,
}

impl Notifier {
    pub fn start(
        policy: NotificationPolicy,
        transport: Box<dyn Transport>,
        voice: Box<dyn VoiceSink>,
        clock: Arc<dyn Clock>,
        log_path: Option<PathBuf>,
    ) -> Self {
        let queue = Arc::new(AlertQueue::new());
        let worker_queue = Arc::clone(&queue);
        let worker_clock = Arc::clone(&clock);
        let worker_policy = policy.clone();
        let worker = thread::spawn(move || {
            run_worker(worker_queue, transport, voice, worker_clock, worker_policy, log_path)
        });
        Notifier { gate: AlertGate::new(policy), queue, clock, worker: Some(worker) }
    }

    /// Gates the event and queues its command; returns whether a command was
    /// queued. Never blocks on delivery.
    pub fn notify(
        &mut self,
        event: &TriggeredEvent,
        snapshot: Option<&Path>,
        message: &str,
    ) -> bool {
        let created = self.clock.now_ms();
        match self.gate.enqueue(event, snapshot, message, created) {
            Some(command) => {
                self.queue.push(command);
                true
            }
            None => false,
        }
    }

    /// Commands dropped to queue overflow so far.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped()
    }

    /// Closes the queue, waits for in-flight deliveries, and returns tallies.
    pub fn finish(mut self) -> NotifyStats {
        self.queue.close();
        match self.worker.take() {
            Some(handle) => handle.join().unwrap_or_default(),
            None => NotifyStats::default(),
        }
    }
}

impl Drop for Notifier {
    fn drop(&mut self) {
        self.queue.close();
    }
}

fn run_worker(
    queue: Arc<AlertQueue>,
    transport: Box<dyn Transport>,
    voice: Box<dyn VoiceSink>,
    clock: Arc<dyn Clock>,
    policy: NotificationPolicy,
    log_path: Option<PathBuf>,
) -> NotifyStats {
    let mut stats = NotifyStats::default();
    let mut log = log_path.and_then(|p| {
        fs::OpenOptions::new().create(true).append(true).open(p).ok()
    });
    while let Some(command) = queue.pop() {
        let result = match command.kind {
            AlertKind::SocialMessage => {
                let r = deliver_social(&command, transport.as_ref(), clock.as_ref(), &policy);
                match r.status {
                    DeliveryStatus::Delivered => stats.social_delivered += 1,
                    DeliveryStatus::Failed => stats.social_failed += 1,
                    DeliveryStatus::DeadlineMissed => stats.social_deadline_missed += 1,
                }
                r
            }
            AlertKind::VoiceAlert => {
                let r = emit_voice(&command, voice.as_ref());
                match r.status {
                    DeliveryStatus::Delivered => stats.voice_delivered += 1,
                    _ => stats.voice_failed += 1,
                }
                r
            }
        };
        if let Some(file) = log.as_mut() {
            let line = format!(
                "{}\t{}\t{}\t{}\n",
                command.event_ts_ms, command.kind, result.status, result.attempts
            );
            let _ = file.write_all(line.as_bytes());
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(kind: EventKind, ts: u64) -> TriggeredEvent {
        TriggeredEvent { kind, roi_id: 1, timestamp_ms: ts, metric: 10, rectangles: Vec::new() }
    }

    fn command(kind: AlertKind, event_ts: u64, created: u64) -> AlertCommand {
        AlertCommand {
            kind,
            event_ts_ms: event_ts,
            roi_id: 1,
            message: "hello".into(),
            snapshot: None,
            created_at_ms: created,
        }
    }

    #[test]
    fn gate_maps_kinds_and_suppresses_within_window() {
        let mut gate = AlertGate::new(NotificationPolicy::default());
        let first = gate.enqueue(&event(EventKind::PhotoLink, 0), None, "m", 0).unwrap();
        assert_eq!(first.kind, AlertKind::SocialMessage);
        // 60 s later, inside the 300 s window.
        assert!(gate.enqueue(&event(EventKind::PhotoLink, 60_000), None, "m", 0).is_none());
        // Danger and photo are independently keyed.
        let voice = gate.enqueue(&event(EventKind::DangerNotice, 61_000), None, "m", 0).unwrap();
        assert_eq!(voice.kind, AlertKind::VoiceAlert);
        // Watch dog is record-only.
        assert!(gate.enqueue(&event(EventKind::WatchDog, 62_000), None, "m", 0).is_none());
        // Past the window the next photo goes through.
        assert!(gate.enqueue(&event(EventKind::PhotoLink, 300_000), None, "m", 0).is_some());
    }

    #[test]
    fn gate_voice_window_is_thirty_seconds() {
        let mut gate = AlertGate::new(NotificationPolicy::default());
        assert!(gate.enqueue(&event(EventKind::DangerNotice, 0), None, "m", 0).is_some());
        assert!(gate.enqueue(&event(EventKind::DangerNotice, 5_000), None, "m", 0).is_none());
        assert!(gate.enqueue(&event(EventKind::DangerNotice, 30_000), None, "m", 0).is_some());
    }

    #[test]
    fn delivery_first_attempt_accepted() {
        let transport = MockTransport::accepting();
        let clock = MockClock::new();
        let r = deliver_social(
            &command(AlertKind::SocialMessage, 0, 0),
            &*transport,
            &*clock,
            &NotificationPolicy::default(),
        );
        assert_eq!(r, DeliveryResult { status: DeliveryStatus::Delivered, attempts: 1 });
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn delivery_retries_with_backoff_then_succeeds() {
        let transport = MockTransport::scripted(&[false, false, true]);
        let clock = MockClock::new();
        let r = deliver_social(
            &command(AlertKind::SocialMessage, 0, 0),
            &*transport,
            &*clock,
            &NotificationPolicy::default(),
        );
        assert_eq!(r, DeliveryResult { status: DeliveryStatus::Delivered, attempts: 3 });
        assert_eq!(clock.sleeps(), vec![1_000, 4_000]);
    }

    #[test]
    fn delivery_fails_after_exhausting_retries() {
        let transport = MockTransport::scripted(&[false; 8]);
        let clock = MockClock::new();
        let r = deliver_social(
            &command(AlertKind::SocialMessage, 0, 0),
            &*transport,
            &*clock,
            &NotificationPolicy::default(),
        );
        assert_eq!(r.status, DeliveryStatus::Failed);
        assert_eq!(r.attempts, 4); // initial attempt + 3 retries
        assert_eq!(clock.sleeps(), vec![1_000, 4_000, 16_000]);
    }

    #[test]
    fn delivery_misses_deadline() {
        let transport = MockTransport::scripted(&[false; 8]);
        let clock = MockClock::new();
        let policy = NotificationPolicy {
            deadline_ms: 10_000,
            backoff_ms: vec![20_000],
            ..NotificationPolicy::default()
        };
        let r = deliver_social(
            &command(AlertKind::SocialMessage, 0, 0),
            &*transport,
            &*clock,
            &policy,
        );
        assert_eq!(r.status, DeliveryStatus::DeadlineMissed);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn voice_sink_invoked_once_and_failure_is_nonfatal() {
        let sink = RecordingVoiceSink::new();
        let r = emit_voice(&command(AlertKind::VoiceAlert, 777, 0), &*sink);
        assert_eq!(r, DeliveryResult { status: DeliveryStatus::Delivered, attempts: 1 });
        assert_eq!(sink.invocations(), vec![(777, "hello".to_string())]);

        let failing = RecordingVoiceSink::failing();
        let r = emit_voice(&command(AlertKind::VoiceAlert, 778, 0), &*failing);
        assert_eq!(r.status, DeliveryStatus::Failed);
        assert_eq!(failing.invocations().len(), 1);
    }

    #[test]
    fn social_body_is_stable() {
        assert_eq!(
            social_body("hi", b"IMG", 5),
            br#"{"event_ts":5,"image":"SU1H","message":"hi"}"#.to_vec()
        );
    }

    #[test]
    fn queue_drops_oldest_past_capacity() {
        let queue = AlertQueue::new();
        for i in 0..(PENDING_CAPACITY as u64 + 6) {
            queue.push(command(AlertKind::SocialMessage, i, 0));
        }
        assert_eq!(queue.dropped(), 6);
        // The oldest six are gone; the head is now event 6.
        assert_eq!(queue.pop().unwrap().event_ts_ms, 6);
    }

    #[test]
    fn notifier_worker_delivers_and_logs() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("notify.log");
        let transport = MockTransport::accepting();
        let sink = RecordingVoiceSink::new();
        let clock: Arc<dyn Clock> = MockClock::new();
        let mut notifier = Notifier::start(
            NotificationPolicy::default(),
            Box::new(Arc::clone(&transport)),
            Box::new(Arc::clone(&sink)),
            clock,
            Some(log.clone()),
        );
        assert!(notifier.notify(&event(EventKind::PhotoLink, 100), None, "photo"));
        assert!(notifier.notify(&event(EventKind::DangerNotice, 200), None, "steps"));
        assert!(!notifier.notify(&event(EventKind::WatchDog, 300), None, "x"));
        let stats = notifier.finish();
        assert_eq!(stats.social_delivered, 1);
        assert_eq!(stats.voice_delivered, 1);
        assert_eq!(sink.invocations().len(), 1);
        let text = fs::read_to_string(log).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("100\tSocialMessage\tdelivered\t1"));
        assert!(text.contains("200\tVoiceAlert\tdelivered\t1"));
    }

    #[test]
    fn at_most_one_social_message_per_window_on_scripted_stream() {
        let mut gate = AlertGate::new(NotificationPolicy::default());
        let stamps = [0u64, 1_000, 100_000, 200_000, 310_000, 400_000, 650_000];
        let mut commands = Vec::new();
        for ts in stamps {
            if let Some(c) = gate.enqueue(&event(EventKind::PhotoLink, ts), None, "m", 0) {
                commands.push(c.event_ts_ms);
            }
        }
        assert_eq!(commands, vec![0, 310_000, 650_000]);
        // Every adjacent pair respects the window.
        for pair in commands.windows(2) {
            assert!(pair[1] - pair[0] >= 300_000);
        }
    }
}
