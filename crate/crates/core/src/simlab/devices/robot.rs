//! Mobile and fixed arms moving vials along the lab topology.

use serde::{Deserialize, Serialize};

use super::{parse_params, unsupported};
use crate::simlab::{Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{JobKind, OperationDescriptor, PluginError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Ticks to pick up or to put down a vial.
    pub handling_ticks: u64,
}

pub(super) fn operations() -> Vec<OperationDescriptor> {
    [JobKind::Transport, JobKind::Manipulate]
        .into_iter()
        .map(|k| OperationDescriptor::new(k.as_str()))
        .collect()
}

fn build_with(id: &str, params: &serde_json::Value, handling_ticks: u64) -> Result<Box<dyn Device>, PluginError> {
    let params = if params.is_null() {
        RobotParams { handling_ticks }
    } else {
        parse_params(id, params)?
    };
    Ok(Box::new(Robot(params)))
}

pub(super) fn build_kmr(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    build_with(id, params, 20)
}

pub(super) fn build_panda(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    build_with(id, params, 5)
}

impl Default for RobotParams {
    fn default() -> Self {
        Self { handling_ticks: 20 }
    }
}

struct Robot(RobotParams);

impl Device for Robot {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply {
        let Some(job) = req.job.as_ref().filter(|j| j.kind.as_str() == req.op) else {
            return unsupported(req);
        };
        let h = self.0.handling_ticks;
        let Some(robot) = ctx.state.robots.get(&req.device) else {
            return DeviceReply::failed("unknown robot", 1);
        };
        let topo = &ctx.state.topology;
        let (Some(approach), Some(carry)) = (topo.distance(&robot.location, &job.from), topo.distance(&job.from, &job.to)) else {
            return DeviceReply::failed("unreachable", 1);
        };
        let service = approach + h + carry + h;
        let at_source = ctx.state.samples.get(&job.sample).is_some_and(|s| s.location == job.from);
        if !at_source {
            return DeviceReply::failed("vial_not_at_source", approach + h);
        }
        DeviceReply::ok(service)
    }
}
