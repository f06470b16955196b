//! The two quantitative protocols: the residual-correlation quality `ρ` of
//! a signal estimator, and patch degradation driven by an explanation,
//! together with their random baselines and CSV output.

mod baseline;
mod degrade;
mod rho;

pub use baseline::{random_patch_order, random_patterns, RESAMPLE_TOL};
pub use degrade::{
    degradation_run, patch_grid, rank_patches, DegradationCurve, DegradationOptions, PatchOrdering,
};
pub use rho::{measure_rho, LayerRho, NeuronRho, ProbeStats, RhoReport, RHO_LAMBDA_SCALE};

use std::io::Write;

use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `layer,neuron,estimator,rho` rows for each labelled report.
pub fn write_rho_csv<W: Write>(out: W, reports: &[(&str, &RhoReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "neuron", "estimator", "rho"])
        .map_err(csv_err)?;
    for (label, report) in reports {
        for layer in &report.layers {
            for (o, n) in layer.neurons.iter().enumerate() {
                w.write_record([
                    layer.layer.to_string(),
                    o.to_string(),
                    label.to_string(),
                    format!("{:.17e}", n.rho),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `method,step,mean_confidence` rows for each curve.
pub fn write_curve_csv<W: Write>(out: W, curves: &[DegradationCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "step", "mean_confidence"])
        .map_err(csv_err)?;
    for c in curves {
        for (step, v) in c.confidence.iter().enumerate() {
            w.write_record([c.ordering.clone(), step.to_string(), format!("{v:.17e}")])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
