//! JSON schemas of every payload the API accepts or returns.

use chaoscope_core::boundary::{BoxcountResult, FdimResult, InitRegion};
use chaoscope_core::store::{RunManifest, RunSummary};
use chaoscope_core::workflow::JobRequest;
use schemars::schema_for;

use crate::jobs::JobView;
use crate::{ErrorBody, Health, Projection, RunDetail};

/// `(file name, schema)` pairs, as committed under `docs/schemas`.
pub fn all() -> Vec<(&'static str, serde_json::Value)> {
    let v = |s: schemars::Schema| s.to_value();
    vec![
        ("job_request.json", v(schema_for!(JobRequest))),
        ("job.json", v(schema_for!(JobView))),
        ("job_list.json", v(schema_for!(Vec<JobView>))),
        ("run_list.json", v(schema_for!(Vec<RunSummary>))),
        ("run_manifest.json", v(schema_for!(RunManifest))),
        ("run_detail.json", v(schema_for!(RunDetail))),
        ("projection.json", v(schema_for!(Projection))),
        ("init_region.json", v(schema_for!(InitRegion))),
        ("boxcount_result.json", v(schema_for!(BoxcountResult))),
        ("fdim_result.json", v(schema_for!(FdimResult))),
        ("health.json", v(schema_for!(Health))),
        ("error.json", v(schema_for!(ErrorBody))),
    ]
}
