//! Request/reply transport between handlers and device models.
//!
//! A dispatched request gets a correlation id. Its reply becomes visible once
//! the simulated clock reaches the end of the device's service time; a
//! request with no reply by `service + timeout_ticks` times out. Timed
//! safety stops delay requests that would overlap them.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use super::scenario::{FaultKind, FaultSpec, Scenario, Trigger};
use super::{request_rng, Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{PluginError, Registry, RegistryError, WorkflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Health {
    pub operational: bool,
    pub safety_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Poll {
    Pending,
    Ready(DeviceReply),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("no device '{0}' on the bus")]
    UnknownDevice(String),
    #[error("device '{0}' is not operational")]
    NotOperational(String),
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

struct Endpoint {
    device: Box<dyn Device>,
    operational: bool,
    /// Replies by idempotency key; a repeated key is answered from here.
    cache: BTreeMap<String, DeviceReply>,
    executions: u64,
}

struct Pending {
    device: String,
    reply: Option<DeviceReply>,
    due: u64,
    deadline: u64,
}

pub struct Bus {
    endpoints: BTreeMap<String, Endpoint>,
    pending: BTreeMap<u64, Pending>,
    next_corr: u64,
    seed: u64,
    run: u32,
    faults: Vec<FaultSpec>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus")
            .field("devices", &self.endpoints.keys().collect::<Vec<_>>())
            .field("in_flight", &self.pending.len())
            .finish()
    }
}

impl Bus {
    /// `run` selects run-restricted faults and is mixed into the seed.
    pub fn new(seed: u64, run: u32, faults: Vec<FaultSpec>) -> Self {
        Self {
            endpoints: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_corr: 1,
            seed: seed.wrapping_add(u64::from(run)),
            run,
            faults: faults.into_iter().filter(|f| f.applies_to_run(run)).collect(),
        }
    }

    /// One device per configured station and robot, built by its plugin with
    /// the scenario's physics for its type. Replies already recorded in the
    /// state's histories are preloaded, so replays are not executed twice.
    pub fn for_state(state: &WorkflowState, registry: &Registry, scenario: &Scenario, run: u32) -> Result<Self, BusError> {
        let mut bus = Bus::new(scenario.seed, run, scenario.faults.clone());
        let devices = state
            .stations
            .values()
            .map(|s| (&s.id, &s.type_name, s.operational))
            .chain(state.robots.values().map(|r| (&r.id, &r.type_name, r.operational)));
        for (id, type_name, operational) in devices {
            let device = registry.get(type_name)?.build_device(id, &scenario.physics_for(type_name))?;
            bus.attach(id, device, operational);
        }
        bus.preload(state);
        Ok(bus)
    }

    pub fn attach(&mut self, id: &str, device: Box<dyn Device>, operational: bool) {
        self.endpoints.insert(
            id.to_string(),
            Endpoint {
                device,
                operational,
                cache: BTreeMap::new(),
                executions: 0,
            },
        );
    }

    fn preload(&mut self, state: &WorkflowState) {
        for sample in state.samples.values() {
            for o in &sample.history {
                if let Some(ep) = self.endpoints.get_mut(&o.actor) {
                    ep.cache.insert(
                        o.key.clone(),
                        DeviceReply {
                            success: o.success,
                            readings: o.readings.clone(),
                            reason: o.reason.clone(),
                            service_ticks: 0,
                        },
                    );
                }
            }
        }
    }

    /// Times the device's model actually ran (cache hits excluded).
    pub fn executions(&self, device: &str) -> u64 {
        self.endpoints.get(device).map_or(0, |e| e.executions)
    }

    pub fn run(&self) -> u32 {
        self.run
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    fn stop_windows<'a>(&'a self, device: &'a str) -> impl Iterator<Item = (u64, u64)> + 'a {
        self.faults
            .iter()
            .filter(move |f| f.device == device)
            .filter_map(FaultSpec::stop_window)
    }

    pub fn health(&self, device: &str, tick: u64) -> Option<Health> {
        let ep = self.endpoints.get(device)?;
        Some(Health {
            operational: ep.operational,
            safety_stop: self.stop_windows(device).any(|(a, b)| (a..b).contains(&tick)),
        })
    }

    /// First tick at or after `tick` where `service` ticks fit between stops.
    fn start_after_stops(&self, device: &str, tick: u64, service: u64) -> u64 {
        let windows: Vec<(u64, u64)> = self.stop_windows(device).collect();
        let mut start = tick;
        loop {
            let end = start + service.max(1);
            match windows.iter().filter(|(a, b)| start < *b && *a < end).map(|(_, b)| *b).max() {
                Some(b) => start = b,
                None => return start,
            }
        }
    }

    fn triggered_fault(&self, req: &OperationRequest, state: &WorkflowState) -> Option<FaultKind> {
        let done = state
            .samples
            .values()
            .flat_map(|s| &s.history)
            .filter(|o| o.actor == req.device)
            .count() as u64;
        self.faults.iter().filter(|f| f.device == req.device).find_map(|f| {
            let hit = match f.trigger {
                Trigger::Nth(n) => u64::from(n) == done + 1,
                Trigger::Probability(p) => request_rng(self.seed, &req.device, &req.key, "fault").gen::<f64>() < p,
                Trigger::AtTick(_) => false,
            };
            hit.then_some(f.kind)
        })
    }

    /// Sends `req`; `state` is the state at dispatch, with the target sample
    /// held by the device.
    pub fn dispatch(
        &mut self,
        req: &OperationRequest,
        state: &WorkflowState,
        tick: u64,
        timeout_ticks: u64,
    ) -> Result<u64, DispatchError> {
        let health = self
            .health(&req.device, tick)
            .ok_or_else(|| DispatchError::UnknownDevice(req.device.clone()))?;
        if !health.operational {
            return Err(DispatchError::NotOperational(req.device.clone()));
        }
        let corr = self.next_corr;
        self.next_corr += 1;

        let cached = self.endpoints[&req.device].cache.get(&req.key).cloned();
        let pending = match cached {
            Some(reply) => Pending {
                device: req.device.clone(),
                reply: Some(reply),
                due: tick,
                deadline: tick + timeout_ticks,
            },
            None => {
                let fault = self.triggered_fault(req, state);
                let ep = self.endpoints.get_mut(&req.device).expect("checked");
                let mut ctx = DeviceCtx {
                    state,
                    rng: request_rng(self.seed, &req.device, &req.key, "noise"),
                    tick,
                };
                let mut reply = ep.device.execute(req, &mut ctx);
                ep.executions += 1;
                let service = reply.service_ticks;
                let reply = match fault {
                    Some(FaultKind::TaringTimeout) => None,
                    Some(FaultKind::MisplaceVial) => {
                        reply = DeviceReply::failed("misplace_vial", service);
                        Some(reply)
                    }
                    _ => Some(reply),
                };
                if let Some(r) = &reply {
                    ep.cache.insert(req.key.clone(), r.clone());
                }
                let start = self.start_after_stops(&req.device, tick, service);
                Pending {
                    device: req.device.clone(),
                    reply,
                    due: start + service,
                    deadline: start + service + timeout_ticks,
                }
            }
        };
        self.pending.insert(corr, pending);
        Ok(corr)
    }

    pub fn poll(&mut self, corr: u64, tick: u64) -> Poll {
        let Some(p) = self.pending.get(&corr) else {
            return Poll::TimedOut;
        };
        let outcome = match &p.reply {
            Some(reply) if tick >= p.due => Poll::Ready(reply.clone()),
            _ if tick >= p.deadline => Poll::TimedOut,
            _ => return Poll::Pending,
        };
        self.pending.remove(&corr);
        outcome
    }

    /// Forgets a request whose handler gave up on it.
    pub fn cancel(&mut self, corr: u64) {
        self.pending.remove(&corr);
    }

    pub fn device_of(&self, corr: u64) -> Option<&str> {
        self.pending.get(&corr).map(|p| p.device.as_str())
    }
}
