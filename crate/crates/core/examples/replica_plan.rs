//! Replica planning: derive microservice times from a placement, size each
//! microservice from its call rate, and emit the plan document.

use std::collections::HashMap;

use callscale::replica::{
    emit_plan, feasible, placement_times, plan_replicas, replica_count, Dataflow,
    MicroserviceReq, ResourceSpec, Workload,
};

fn main() -> callscale::Result<()> {
    // Three microservices with known times and rates.
    for (rate, mt) in [(2.0, 0.7), (2.0, 1.5), (3.0, 2.0)] {
        println!("{rate} calls/s x {mt} s/call -> {} replicas", replica_count(rate, mt));
    }

    let resources = vec![
        ResourceSpec { id: "edge".into(), cores: 2, mem: 2.0, cpu_speed: 400.0 },
        ResourceSpec { id: "cloud".into(), cores: 16, mem: 64.0, cpu_speed: 2000.0 },
    ];
    let reqs = vec![
        MicroserviceReq { id: "decode".into(), cores: 1, mem: 512.0, deadline: 0.5, workload: 120.0 },
        MicroserviceReq { id: "detect".into(), cores: 4, mem: 8192.0, deadline: 1.0, workload: 1500.0 },
    ];
    for req in &reqs {
        for res in &resources {
            println!("{} on {}: feasible = {}", req.id, res.id, feasible(req, res));
        }
    }

    let placements: HashMap<String, String> = [("decode", "edge"), ("detect", "cloud")]
        .into_iter()
        .map(|(m, r)| (m.to_string(), r.to_string()))
        .collect();
    let mts = placement_times(&reqs, &resources, &placements)?;
    let workload = Workload::new(vec![
        Dataflow { producer: "camera".into(), microservice: "decode".into(), rate: 12.0 },
        Dataflow { producer: "decode".into(), microservice: "detect".into(), rate: 12.0 },
    ])?;
    let plan = plan_replicas(&workload, &placements, &mts, None)?;
    emit_plan(&plan, std::io::stdout().lock())
}
