// SPDX-License-Identifier: Apache-2.0

//! Real-socket facades for the simulated components. The protocol logic is
//! the same as under [`revelio_core::sim::SimNet`]; only the transport
//! differs.

mod client;
mod deploy;
mod server;

pub use client::HttpTransport;
pub use deploy::LocalDeployment;
pub use server::{bind, kds_router, node_router, serve, ServerHandle};
