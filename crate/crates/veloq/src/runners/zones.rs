use anyhow::Result;
use serde_json::json;
use veloq_core::compiler::compare_architectures;

use super::Context;
use crate::report::{Check, FigureOutput};

/// Velocity-zone transfer against a spatial shuttle at the same jerk.
pub fn run(ctx: &Context) -> Result<FigureOutput> {
    let p = &ctx.cfg.physics;
    let r = compare_architectures(p.shuttle_distance, p.shuttle_time, p.zone_dv)?;
    let mut out = FigureOutput::new("zones");
    out.tables.push(("zones.csv".into(), r.to_csv()));
    out.summary = json!({
        "jerk_m_per_s3": r.jerk,
        "transfer_time_s": r.velocity_time,
        "transfer_distance_m": r.velocity_distance,
        "time_ratio": r.time_ratio,
        "distance_ratio": r.distance_ratio,
    });
    out.checks.push(Check::relative("transfer_time", r.velocity_time, 25.8e-6, 0.01));
    out.checks.push(Check::relative("transfer_distance", r.velocity_distance, 860e-9, 0.01));
    Ok(out)
}
