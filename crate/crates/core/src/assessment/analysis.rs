//! One row of network metrics: exact R_ECO plus structure and flow metrics.

use serde::Serialize;

use super::explore::dc_r_eco;
use super::graph::{graph_properties, NetworkProperties};
use crate::eco::{build_efm, eco_metrics_exact};
use crate::error::Result;
use crate::grid::Network;
use crate::powerflow::{solve_ac, solve_dc, Model};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkAnalysis {
    pub case: String,
    /// Exact R_ECO of the DC solution with the case setpoints.
    pub r_eco: f64,
    /// Exact R_ECO of the AC solution, losses in the dissipation column.
    pub r_eco_ac: Option<f64>,
    /// Flows behind R_CF and the flow statistics.
    pub flow_model: Model,
    #[serde(flatten)]
    pub properties: NetworkProperties,
}

/// R_CF and flow statistics use AC flows, or DC flows when the AC solve does
/// not converge.
pub fn analyze(net: &Network) -> Result<NetworkAnalysis> {
    let r_eco = dc_r_eco(net)?;
    let ac = solve_ac(net)?;
    let (sol, r_eco_ac) = if ac.converged {
        let r = eco_metrics_exact(&build_efm(net, &ac, None)?)?.r_eco;
        (ac, Some(r))
    } else {
        log::warn!("{}: AC power flow did not converge, using DC flows", net.name);
        (solve_dc(net)?, None)
    };
    Ok(NetworkAnalysis {
        case: net.name.clone(),
        r_eco,
        r_eco_ac,
        flow_model: sol.model,
        properties: graph_properties(net, &sol)?,
    })
}
