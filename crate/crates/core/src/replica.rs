//! Resource model, schedule feasibility and replica planning.
//!
//! A microservice placed on a resource runs for `MT = workload / speed`
//! seconds per call. Serving `MCR` calls per second therefore keeps
//! `MCR * MT` instances busy, and the replica count is that product rounded
//! up.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{mape, Mape};
use crate::model::{predict, TrainedModel};
use crate::stats::ceil_snapped;

/// Version of the plan document written by [`emit_plan`].
pub const PLAN_FORMAT_VERSION: u32 = 1;

const MB_PER_GB: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub id: String,
    pub cores: u32,
    /// GB.
    pub mem: f64,
    /// Processing speed, MI/s.
    pub cpu_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceReq {
    pub id: String,
    pub cores: u32,
    /// MB.
    pub mem: f64,
    /// Seconds.
    pub deadline: f64,
    /// Million instructions per call.
    pub workload: f64,
}

/// Seconds per call of `req` on `res`.
pub fn microservice_time(req: &MicroserviceReq, res: &ResourceSpec) -> Result<f64> {
    if !(res.cpu_speed > 0.0 && res.cpu_speed.is_finite()) {
        return Err(Error::data(format!(
            "resource `{}` has non-positive speed {}",
            res.id, res.cpu_speed
        )));
    }
    Ok(req.workload / res.cpu_speed)
}

/// Whether `res` meets the core, memory and deadline requirements of a
/// single replica of `req`.
pub fn feasible(req: &MicroserviceReq, res: &ResourceSpec) -> bool {
    let Ok(mt) = microservice_time(req, res) else {
        return false;
    };
    req.cores <= res.cores && req.mem <= res.mem * MB_PER_GB && mt <= req.deadline
}

/// Microservice times for a placement, checking feasibility of each pair.
pub fn placement_times(
    reqs: &[MicroserviceReq],
    resources: &[ResourceSpec],
    placements: &HashMap<String, String>,
) -> Result<HashMap<String, f64>> {
    reqs.iter()
        .map(|req| {
            let res_id = placements
                .get(&req.id)
                .ok_or_else(|| Error::data(format!("microservice `{}` has no placement", req.id)))?;
            let res = resources
                .iter()
                .find(|r| &r.id == res_id)
                .ok_or_else(|| Error::data(format!("unknown resource `{res_id}`")))?;
            if !feasible(req, res) {
                return Err(Error::data(format!(
                    "microservice `{}` is not schedulable on `{}`",
                    req.id, res.id
                )));
            }
            Ok((req.id.clone(), microservice_time(req, res)?))
        })
        .collect()
}

/// One producer-to-microservice dataflow, reduced to its call rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataflow {
    pub producer: String,
    pub microservice: String,
    /// Observed calls/s.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workload {
    entries: Vec<Dataflow>,
}

impl Workload {
    /// Rejects negative rates and repeated (producer, microservice) pairs.
    pub fn new(entries: Vec<Dataflow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !(e.rate >= 0.0 && e.rate.is_finite()) {
                return Err(Error::data(format!(
                    "dataflow {} -> {} has invalid rate {}",
                    e.producer, e.microservice, e.rate
                )));
            }
            if !seen.insert((e.producer.as_str(), e.microservice.as_str())) {
                return Err(Error::data(format!(
                    "duplicate dataflow {} -> {}",
                    e.producer, e.microservice
                )));
            }
        }
        Ok(Workload { entries })
    }

    pub fn entries(&self) -> &[Dataflow] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub microservice: String,
    pub resource: String,
    pub mt_s: f64,
    pub mcr_pred: f64,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPlan {
    pub version: u32,
    /// RFC 3339 UTC creation time.
    pub generated_at: String,
    pub rows: Vec<PlanRow>,
}

impl ReplicaPlan {
    pub fn new(rows: Vec<PlanRow>) -> Self {
        ReplicaPlan {
            version: PLAN_FORMAT_VERSION,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            rows,
        }
    }

    pub fn replicas(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.replicas).collect()
    }
}

/// `ceil(rate * mt)`, zero for zero traffic.
pub fn replica_count(rate: f64, mt: f64) -> u64 {
    let load = rate * mt;
    if load > 0.0 {
        ceil_snapped(load) as u64
    } else {
        0
    }
}

/// One plan row per dataflow. With a model the rate is predicted from the
/// measured microservice time; otherwise the observed rate is used.
pub fn plan_replicas(
    workload: &Workload,
    placements: &HashMap<String, String>,
    mts: &HashMap<String, f64>,
    model: Option<&TrainedModel>,
) -> Result<ReplicaPlan> {
    let rows = workload
        .entries
        .iter()
        .map(|e| {
            let resource = placements.get(&e.microservice).ok_or_else(|| {
                Error::data(format!("microservice `{}` has no placement", e.microservice))
            })?;
            let mt = *mts.get(&e.microservice).ok_or_else(|| {
                Error::data(format!("microservice `{}` has no microservice time", e.microservice))
            })?;
            if !(mt > 0.0 && mt.is_finite()) {
                return Err(Error::data(format!(
                    "microservice `{}` has invalid time {mt}",
                    e.microservice
                )));
            }
            let rate = match model {
                Some(m) => predict(m, mt)?,
                None => e.rate,
            };
            Ok(PlanRow {
                microservice: e.microservice.clone(),
                resource: resource.clone(),
                mt_s: mt,
                mcr_pred: rate,
                replicas: replica_count(rate, mt),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ReplicaPlan::new(rows))
}

/// MAPE between replica counts implied by actual and by predicted rates.
/// Rows whose actual replica count is zero are excluded and counted.
pub fn replica_error(actual_rates: &[f64], predicted_rates: &[f64], mts: &[f64]) -> Result<Mape> {
    if actual_rates.len() != predicted_rates.len() || actual_rates.len() != mts.len() {
        return Err(Error::data("replica error inputs must have equal lengths"));
    }
    let count = |rates: &[f64]| -> Vec<f64> {
        rates
            .iter()
            .zip(mts)
            .map(|(r, mt)| replica_count(*r, *mt) as f64)
            .collect()
    };
    mape(&count(actual_rates), &count(predicted_rates))
}

/// Writes the plan as canonical pretty JSON followed by a newline.
pub fn emit_plan<W: Write>(plan: &ReplicaPlan, mut sink: W) -> Result<()> {
    let mut text = serde_json::to_string_pretty(plan)
        .map_err(|e| Error::data(format!("serializing plan: {e}")))?;
    text.push('\n');
    sink.write_all(text.as_bytes())
        .and_then(|_| sink.flush())
        .map_err(|e| Error::io("<plan sink>", e))
}

pub fn parse_plan<R: Read>(source: R) -> Result<ReplicaPlan> {
    let plan: ReplicaPlan = serde_json::from_reader(source)
        .map_err(|e| Error::data(format!("malformed plan document: {e}")))?;
    if plan.version != PLAN_FORMAT_VERSION {
        return Err(Error::data(format!("unsupported plan version {}", plan.version)));
    }
    Ok(plan)
}

/// Same columns as the JSON rows.
pub fn write_plan_csv<W: Write>(plan: &ReplicaPlan, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in &plan.rows {
        w.serialize(row)?;
    }
    if plan.rows.is_empty() {
        w.write_record(["microservice", "resource", "mt_s", "mcr_pred", "replicas"])?;
    }
    w.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}
