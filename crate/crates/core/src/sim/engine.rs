//! Event loop. Time is integer microseconds. Between events every running
//! worker progresses at the fluid rate its pod's cgroup grant allows; rates
//! are recomputed whenever the set of running workers on a node changes.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::events::EventQueue;
use super::node::{NodeCpu, DONE_EPS_US};
use super::{
    ResponseSample, RunCounts, RunReport, Unfinished, METRIC_NODE_MILLICORES, METRIC_QUEUE_DEPTH,
    METRIC_REPLICAS,
};
use crate::autoscale::{apply_actions, hpa_step, node_policy_step, ScalingEvent};
use crate::cluster::ClusterState;
use crate::config::{PolicyConfig, ScenarioConfig};
use crate::demand::{sample_actual_ms, VariabilityModel};
use crate::error::Result;
use crate::model::{ms_to_us, Message, MetricSample, NodeSpec, PodSpec, QosClass, SimTime, Stage, StageStamp};
use crate::stats::round_significant;
use crate::workload::{generate_arrivals, Arrival, ArrivalStream};

const WORKLOAD_STREAM: u64 = 1;
const DEMAND_STREAM: u64 = 2;

/// Runs the scenario with its configured seed.
pub fn run(config: &ScenarioConfig) -> Result<RunReport> {
    Ok(run_detailed(config)?.0)
}

/// Like [`run`], also returning every generated message with its stage
/// timestamps.
pub fn run_detailed(config: &ScenarioConfig) -> Result<(RunReport, Vec<Message>)> {
    config.validate()?;
    let mut engine = Engine::new(config)?;
    engine.run()?;
    Ok(engine.finish())
}

enum Event {
    Arrival(Arrival),
    Enqueue { msg: u64, stage: Stage },
    IoDone { pod: usize, worker: usize },
    PodReady,
    Sample,
    Control,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Idle,
    Cpu { msg: u64, remaining: f64 },
    Io { msg: u64, then_cpu: Option<f64> },
}

struct PodRt {
    spec: PodSpec,
    stage: Stage,
    qos: QosClass,
    node: usize,
    seq: u64,
    workers: Vec<Phase>,
    ready_at: SimTime,
    terminating: bool,
    gone: bool,
    grant_rate: f64,
    worker_rate: f64,
    usage_cum: f64,
    usage_mark: f64,
    window: VecDeque<f64>,
}

impl PodRt {
    fn occupied(&self) -> usize {
        self.workers.iter().filter(|w| !matches!(w, Phase::Idle)).count()
    }

    fn on_cpu(&self) -> u32 {
        self.workers.iter().filter(|w| matches!(w, Phase::Cpu { .. })).count() as u32
    }
}

struct NodeRt {
    spec: NodeSpec,
    pods: Vec<usize>,
    cpu: Option<NodeCpu>,
    dirty: bool,
    used_rate: f64,
    used_cum: f64,
    used_mark: f64,
    window: VecDeque<f64>,
    gone: bool,
}

struct MsgRt {
    msg: Message,
    span_done: bool,
    dropped: bool,
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    model: VariabilityModel,
    demand_rng: ChaCha8Rng,
    arrivals: ArrivalStream<ChaCha8Rng>,
    queue: EventQueue<Event>,
    now: SimTime,
    horizon: SimTime,
    period_us: u64,
    sample_us: SimTime,
    control_us: Option<SimTime>,
    window_len: usize,
    broker_us: SimTime,
    db_read_us: SimTime,
    db_write_us: SimTime,
    provisioning_us: SimTime,
    cluster: ClusterState,
    nodes: Vec<NodeRt>,
    pods: Vec<PodRt>,
    pod_index: HashMap<String, usize>,
    stage_queues: [VecDeque<u64>; 3],
    messages: Vec<MsgRt>,
    responses: Vec<ResponseSample>,
    scaling_events: Vec<ScalingEvent>,
    metrics: Vec<MetricSample>,
    counts: RunCounts,
    last_sample: SimTime,
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig) -> Result<Self> {
        let mut workload_rng = ChaCha8Rng::seed_from_u64(config.seed);
        workload_rng.set_stream(WORKLOAD_STREAM);
        let mut demand_rng = ChaCha8Rng::seed_from_u64(config.seed);
        demand_rng.set_stream(DEMAND_STREAM);
        let sample_us = ms_to_us(config.sample_interval_s * 1000.0).max(1);
        let window_len = ((config.utilization_window_s / config.sample_interval_s).round() as usize).max(1);
        let mut engine = Self {
            config,
            model: config.variability_model()?,
            demand_rng,
            arrivals: generate_arrivals(&config.load_profile()?, workload_rng),
            queue: EventQueue::new(),
            now: 0,
            horizon: ms_to_us(config.horizon_s * 1000.0),
            period_us: config.topology.period_us,
            sample_us,
            control_us: config.policy.control_period_s().map(|s| ms_to_us(s * 1000.0).max(1)),
            window_len,
            broker_us: ms_to_us(config.delays.broker_ms),
            db_read_us: ms_to_us(config.delays.db_read_ms),
            db_write_us: ms_to_us(config.delays.db_write_ms),
            provisioning_us: ms_to_us(config.provisioning_delay_s * 1000.0),
            cluster: config.initial_cluster()?,
            nodes: Vec::new(),
            pods: Vec::new(),
            pod_index: HashMap::new(),
            stage_queues: Default::default(),
            messages: Vec::new(),
            responses: Vec::new(),
            scaling_events: Vec::new(),
            metrics: Vec::new(),
            counts: RunCounts::default(),
            last_sample: 0,
        };
        engine.reconcile(true)?;
        Ok(engine)
    }

    fn run(&mut self) -> Result<()> {
        self.schedule_next_arrival();
        if self.sample_us <= self.horizon {
            self.queue.schedule(self.sample_us, Event::Sample);
        }
        if let Some(c) = self.control_us.filter(|c| *c <= self.horizon) {
            self.queue.schedule(c, Event::Control);
        }
        self.refresh_rates()?;
        loop {
            let next_event = self.queue.peek_time().unwrap_or(SimTime::MAX);
            let next_cpu = self.next_completion();
            let t = next_event.min(next_cpu);
            if t > self.horizon {
                break;
            }
            self.advance(t);
            if next_cpu <= next_event {
                self.complete_cpu_work();
            } else {
                let (_, event) = self.queue.pop().expect("peeked");
                self.handle(event)?;
            }
            self.dispatch();
            self.refresh_rates()?;
        }
        self.advance(self.horizon);
        Ok(())
    }

    fn finish(self) -> (RunReport, Vec<Message>) {
        let mut counts = self.counts;
        let mut unfinished = Vec::new();
        for m in &self.messages {
            if !m.span_done {
                unfinished.push(Unfinished {
                    msg_id: m.msg.id,
                    created: m.msg.created_at,
                    dropped: m.dropped,
                });
                if !m.dropped {
                    counts.in_flight += 1;
                }
            }
        }
        let report = RunReport {
            seed: self.config.seed,
            span: self.config.slo.span,
            horizon: self.horizon,
            responses: self.responses,
            unfinished,
            scaling_events: self.scaling_events,
            metrics: self.metrics,
            counts,
        };
        (report, self.messages.into_iter().map(|m| m.msg).collect())
    }

    fn schedule_next_arrival(&mut self) {
        if let Some(a) = self.arrivals.next() {
            if a.time < self.horizon {
                self.queue.schedule(a.time, Event::Arrival(a));
            }
        }
    }

    fn advance(&mut self, t: SimTime) {
        self.queue.advance_to(t);
        let dt = (t - self.now) as f64;
        self.now = t;
        if dt == 0.0 {
            return;
        }
        for node in self.nodes.iter_mut().filter(|n| !n.gone) {
            node.used_cum += node.used_rate * dt;
        }
        for pod in self.pods.iter_mut().filter(|p| !p.gone) {
            pod.usage_cum += pod.grant_rate * dt;
            let rate = pod.worker_rate;
            for w in &mut pod.workers {
                if let Phase::Cpu { remaining, .. } = w {
                    *remaining -= rate * dt;
                }
            }
        }
    }

    fn is_done(remaining: f64, rate: f64) -> bool {
        remaining <= DONE_EPS_US || remaining <= rate * 1e-3
    }

    fn next_completion(&self) -> SimTime {
        let mut best = SimTime::MAX;
        for pod in self.pods.iter().filter(|p| !p.gone && p.worker_rate > 0.0) {
            for w in &pod.workers {
                if let Phase::Cpu { remaining, .. } = *w {
                    let t = if Self::is_done(remaining, pod.worker_rate) {
                        self.now
                    } else {
                        self.now + (remaining / pod.worker_rate).ceil() as SimTime
                    };
                    best = best.min(t);
                }
            }
        }
        best
    }

    fn complete_cpu_work(&mut self) {
        let mut done = Vec::new();
        for (p, pod) in self.pods.iter().enumerate().filter(|(_, p)| !p.gone) {
            for (w, phase) in pod.workers.iter().enumerate() {
                if let Phase::Cpu { msg, remaining } = *phase {
                    if Self::is_done(remaining, pod.worker_rate) {
                        done.push((p, w, msg));
                    }
                }
            }
        }
        for (p, w, msg) in done {
            self.cpu_done(p, w, msg);
        }
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Arrival(a) => {
                let id = self.messages.len() as u64;
                self.messages.push(MsgRt {
                    msg: Message::new(id, a.time, a.payload_bytes, a.device),
                    span_done: false,
                    dropped: false,
                });
                self.counts.generated += 1;
                self.enqueue(id, Stage::DeviceComm);
                self.schedule_next_arrival();
            }
            Event::Enqueue { msg, stage } => self.enqueue(msg, stage),
            Event::IoDone { pod, worker } => {
                let Phase::Io { msg, then_cpu } = self.pods[pod].workers[worker] else {
                    unreachable!("I/O completion for a worker not doing I/O");
                };
                match then_cpu {
                    Some(work) => self.begin_cpu(pod, worker, msg, work),
                    None => self.finish_stage(pod, worker, msg),
                }
            }
            Event::PodReady => {}
            Event::Sample => {
                self.take_sample();
                let next = self.now + self.sample_us;
                if next <= self.horizon {
                    self.queue.schedule(next, Event::Sample);
                }
            }
            Event::Control => {
                self.control_tick()?;
                let next = self.now + self.control_us.expect("control period");
                if next <= self.horizon {
                    self.queue.schedule(next, Event::Control);
                }
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, msg: u64, stage: Stage) {
        self.messages[msg as usize].msg.stage_timestamps.push(StageStamp {
            stage,
            enqueue: self.now,
            start: None,
            end: None,
        });
        let queue = &mut self.stage_queues[stage.index()];
        if let Some(cap) = self.config.queue_capacity {
            if queue.len() >= cap {
                let victim = queue.pop_front().expect("non-empty at capacity");
                let m = &mut self.messages[victim as usize];
                m.dropped = true;
                if !m.span_done {
                    self.counts.dropped += 1;
                }
            }
        }
        queue.push_back(msg);
    }

    /// Hands queued messages to free workers. The replica with the fewest
    /// occupied workers wins; ties go to the older pod.
    fn dispatch(&mut self) {
        for stage in Stage::PIPELINE {
            while !self.stage_queues[stage.index()].is_empty() {
                let now = self.now;
                let chosen = self
                    .pods
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| {
                        p.stage == stage && !p.gone && !p.terminating && p.ready_at <= now && p.occupied() < p.workers.len()
                    })
                    .min_by_key(|(_, p)| (p.occupied(), p.seq))
                    .map(|(i, _)| i);
                let Some(p) = chosen else { break };
                let msg = self.stage_queues[stage.index()].pop_front().expect("non-empty");
                let w = self.pods[p]
                    .workers
                    .iter()
                    .position(|w| matches!(w, Phase::Idle))
                    .expect("free worker");
                self.start_service(p, w, msg);
            }
        }
    }

    fn start_service(&mut self, p: usize, w: usize, msg: u64) {
        let now = self.now;
        let stage = self.pods[p].stage;
        let m = &mut self.messages[msg as usize].msg;
        m.stage_timestamps.last_mut().expect("enqueued").start = Some(now);
        let nominal = self.config.deployment(stage).demand.nominal_ms(m.payload_bytes);
        let node = &self.nodes[self.pods[p].node];
        let pods_on_node = node.spec.background_pods + node.pods.len() as u32;
        let actual_ms = sample_actual_ms(nominal, pods_on_node, self.pods[p].qos, &self.model, &mut self.demand_rng);
        let work = actual_ms * 1000.0;
        if stage == Stage::DataProcessing && self.db_read_us > 0 {
            self.pods[p].workers[w] = Phase::Io {
                msg,
                then_cpu: Some(work),
            };
            self.queue.schedule(now + self.db_read_us, Event::IoDone { pod: p, worker: w });
        } else {
            self.begin_cpu(p, w, msg, work);
        }
    }

    fn begin_cpu(&mut self, p: usize, w: usize, msg: u64, work: f64) {
        if work <= DONE_EPS_US {
            self.cpu_done(p, w, msg);
            return;
        }
        self.pods[p].workers[w] = Phase::Cpu { msg, remaining: work };
        let n = self.pods[p].node;
        self.nodes[n].dirty = true;
    }

    fn cpu_done(&mut self, p: usize, w: usize, msg: u64) {
        let n = self.pods[p].node;
        self.nodes[n].dirty = true;
        if self.pods[p].stage == Stage::DataProvider && self.db_write_us > 0 {
            self.pods[p].workers[w] = Phase::Io { msg, then_cpu: None };
            self.queue.schedule(self.now + self.db_write_us, Event::IoDone { pod: p, worker: w });
        } else {
            self.finish_stage(p, w, msg);
        }
    }

    fn finish_stage(&mut self, p: usize, w: usize, msg: u64) {
        let now = self.now;
        let stage = self.pods[p].stage;
        self.pods[p].workers[w] = Phase::Idle;
        let n = self.pods[p].node;
        self.nodes[n].dirty = true;

        let m = &mut self.messages[msg as usize];
        m.msg.stage_timestamps.last_mut().expect("in service").end = Some(now);
        if stage == self.config.slo.span.final_stage() {
            m.span_done = true;
            self.counts.completed += 1;
            self.responses.push(ResponseSample {
                msg_id: msg,
                created: m.msg.created_at,
                completed: now,
            });
        }
        match stage.next() {
            Some(next) if self.broker_us > 0 => {
                self.queue.schedule(now + self.broker_us, Event::Enqueue { msg, stage: next })
            }
            Some(next) => self.enqueue(msg, next),
            None => self.counts.pipeline_completed += 1,
        }
        if self.pods[p].terminating && self.pods[p].occupied() == 0 {
            self.retire_pod(p);
        }
    }

    fn retire_pod(&mut self, p: usize) {
        self.pods[p].gone = true;
        self.pods[p].grant_rate = 0.0;
        self.pods[p].worker_rate = 0.0;
        self.pod_index.remove(&self.pods[p].spec.id);
        let n = self.pods[p].node;
        let node = &mut self.nodes[n];
        node.pods.retain(|&q| q != p);
        node.cpu = None;
        node.dirty = true;
        if node.pods.is_empty() && self.cluster.node(&node.spec.name).is_none() {
            node.gone = true;
            node.used_rate = 0.0;
        }
    }

    fn refresh_rates(&mut self) -> Result<()> {
        let period = self.period_us as f64;
        for n in 0..self.nodes.len() {
            if self.nodes[n].gone || !self.nodes[n].dirty {
                continue;
            }
            if self.nodes[n].cpu.is_none() {
                let specs: Vec<&PodSpec> = self.nodes[n].pods.iter().map(|&p| &self.pods[p].spec).collect();
                let cpu = NodeCpu::new(&self.nodes[n].spec, &specs, self.period_us, self.config.topology.static_policy)?;
                self.nodes[n].cpu = Some(cpu);
            }
            let busy: Vec<u32> = self.nodes[n].pods.iter().map(|&p| self.pods[p].on_cpu()).collect();
            let (grants, background) = self.nodes[n].cpu.as_mut().expect("built").grants(&busy);
            let mut used = background;
            for ((&p, g), b) in self.nodes[n].pods.iter().zip(&grants).zip(&busy) {
                let pod = &mut self.pods[p];
                pod.grant_rate = *g as f64 / period;
                pod.worker_rate = if *b > 0 { pod.grant_rate / f64::from(*b) } else { 0.0 };
                used += g;
            }
            self.nodes[n].used_rate = used as f64 / period;
            self.nodes[n].dirty = false;
        }
        Ok(())
    }

    fn take_sample(&mut self) {
        let interval = (self.now - self.last_sample) as f64;
        self.last_sample = self.now;
        if interval <= 0.0 {
            return;
        }
        let now = self.now;
        let window_len = self.window_len;
        for node in self.nodes.iter_mut().filter(|n| !n.gone) {
            let cap = f64::from(node.spec.vcpus) * 1000.0;
            let mc = ((node.used_cum - node.used_mark) / interval * 1000.0).min(cap);
            node.used_mark = node.used_cum;
            node.window.push_back(mc);
            if node.window.len() > window_len {
                node.window.pop_front();
            }
            self.metrics.push(MetricSample::new(
                now,
                METRIC_NODE_MILLICORES,
                round_significant(mc, 6),
                &[("node", &node.spec.name)],
            ));
        }
        for pod in self.pods.iter_mut().filter(|p| !p.gone) {
            let mc = (pod.usage_cum - pod.usage_mark) / interval * 1000.0;
            pod.usage_mark = pod.usage_cum;
            pod.window.push_back(mc);
            if pod.window.len() > window_len {
                pod.window.pop_front();
            }
        }
        for stage in Stage::PIPELINE {
            self.metrics.push(MetricSample::new(
                now,
                METRIC_QUEUE_DEPTH,
                self.stage_queues[stage.index()].len() as f64,
                &[("stage", stage.name())],
            ));
            self.metrics.push(MetricSample::new(
                now,
                METRIC_REPLICAS,
                f64::from(self.cluster.replicas(stage.name())),
                &[("deployment", stage.name())],
            ));
        }
    }

    fn window_mean(window: &VecDeque<f64>) -> Option<f64> {
        if window.is_empty() {
            None
        } else {
            Some(window.iter().sum::<f64>() / window.len() as f64)
        }
    }

    fn control_tick(&mut self) -> Result<()> {
        let actions = match &self.config.policy {
            PolicyConfig::None => return Ok(()),
            PolicyConfig::NodeBased(policy) => {
                let utils: Vec<f64> = self
                    .cluster
                    .app_nodes()
                    .filter_map(|cn| {
                        let node = self.nodes.iter().find(|n| !n.gone && n.spec.name == cn.spec.name)?;
                        Some(Self::window_mean(&node.window)? / (f64::from(node.spec.vcpus) * 1000.0))
                    })
                    .collect();
                if utils.is_empty() {
                    return Ok(());
                }
                let avg = (utils.iter().sum::<f64>() / utils.len() as f64).clamp(0.0, 1.0);
                node_policy_step(&self.cluster, avg, policy)
            }
            PolicyConfig::Hpa(policy) => {
                let mut per_deployment: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for pod in self.pods.iter().filter(|p| !p.gone && !p.terminating) {
                    if let Some(mc) = Self::window_mean(&pod.window) {
                        let request = pod.spec.resources.cpu_request.get();
                        let base = if request > 0 { f64::from(request) } else { 1000.0 };
                        per_deployment.entry(pod.spec.deployment.clone()).or_default().push(mc / base);
                    }
                }
                let metrics = per_deployment
                    .into_iter()
                    .map(|(d, v)| (d, v.iter().sum::<f64>() / v.len() as f64))
                    .collect();
                hpa_step(&self.cluster, &metrics, policy)?
            }
        };
        if actions.is_empty() {
            return Ok(());
        }
        let events = apply_actions(&mut self.cluster, &actions, self.config.policy.name(), self.now);
        self.scaling_events.extend(events);
        self.reconcile(false)
    }

    /// Brings runtime pods and nodes in line with the control plane. Pods
    /// that left the control plane finish their current messages first.
    fn reconcile(&mut self, initial: bool) -> Result<()> {
        let wanted: HashSet<String> = self.cluster.pods().iter().map(|p| p.spec.id.clone()).collect();
        for p in 0..self.pods.len() {
            let pod = &self.pods[p];
            if pod.gone || pod.terminating || wanted.contains(&pod.spec.id) {
                continue;
            }
            self.pods[p].terminating = true;
            if self.pods[p].occupied() == 0 {
                self.retire_pod(p);
            }
        }
        let placed: Vec<_> = self.cluster.pods().to_vec();
        for placed in placed {
            if self.pod_index.contains_key(&placed.spec.id) {
                continue;
            }
            let n = match self.nodes.iter().position(|n| !n.gone && n.spec.name == placed.node) {
                Some(n) => n,
                None => {
                    let spec = self.cluster.node(&placed.node).expect("placed on a known node").spec.clone();
                    self.nodes.push(NodeRt {
                        spec,
                        pods: Vec::new(),
                        cpu: None,
                        dirty: true,
                        used_rate: 0.0,
                        used_cum: 0.0,
                        used_mark: 0.0,
                        window: VecDeque::new(),
                        gone: false,
                    });
                    self.nodes.len() - 1
                }
            };
            let stage = Stage::from_name(&placed.spec.deployment).expect("pipeline deployment");
            let workers = self.config.deployment(stage).workers as usize;
            let ready_at = if initial { 0 } else { self.now + self.provisioning_us };
            if ready_at > self.now {
                self.queue.schedule(ready_at, Event::PodReady);
            }
            let idx = self.pods.len();
            self.pod_index.insert(placed.spec.id.clone(), idx);
            self.pods.push(PodRt {
                qos: placed.spec.qos(),
                spec: placed.spec,
                stage,
                node: n,
                seq: placed.seq,
                workers: vec![Phase::Idle; workers],
                ready_at,
                terminating: false,
                gone: false,
                grant_rate: 0.0,
                worker_rate: 0.0,
                usage_cum: 0.0,
                usage_mark: 0.0,
                window: VecDeque::new(),
            });
            let node = &mut self.nodes[n];
            node.pods.push(idx);
            node.cpu = None;
            node.dirty = true;
        }
        // Empty app nodes still receive background load; make sure every
        // control-plane app node has a runtime counterpart.
        let names: Vec<NodeSpec> = self.cluster.app_nodes().map(|n| n.spec.clone()).collect();
        for spec in names {
            if !self.nodes.iter().any(|n| !n.gone && n.spec.name == spec.name) {
                self.nodes.push(NodeRt {
                    spec,
                    pods: Vec::new(),
                    cpu: None,
                    dirty: true,
                    used_rate: 0.0,
                    used_cum: 0.0,
                    used_mark: 0.0,
                    window: VecDeque::new(),
                    gone: false,
                });
            }
        }
        for node in self.nodes.iter_mut().filter(|n| !n.gone) {
            if node.pods.is_empty() && self.cluster.node(&node.spec.name).is_none() {
                node.gone = true;
                node.used_rate = 0.0;
            }
        }
        Ok(())
    }
}
