// SPDX-License-Identifier: Apache-2.0

//! Deterministic network simulation of a full deployment and the adversary
//! scenarios run against it.

pub mod fleet;
pub mod net;
pub mod scenarios;

pub use fleet::{FleetOptions, SimFleet};
pub use net::{Endpoint, Hook, HookAction, MessageKind, Service, SimMessage, SimNet};
pub use scenarios::{run_all, run_scenario, ScenarioKind, ScenarioReport, Topology};
