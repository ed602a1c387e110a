// SPDX-License-Identifier: Apache-2.0

//! SP node: runs certificate rounds against a served fleet.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use revelio_cli::manifest::{load_ca_log, save_ca_log, DeploymentManifest};
use revelio_core::clock::Clock;
use revelio_core::protocol::{AttestationContext, SpNode};
use revelio_core::transport::{Addr, RemoteKds};
use revelio_core::verification::TrustedRegistry;
use revelio_net::HttpTransport;

#[derive(Parser)]
#[command(name = "revelio-sp", version, about = "Service provider node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate every node's bundle, obtain one certificate and install it.
    RunRound {
        /// deployment.json written by `revelio-sim serve`.
        #[arg(long)]
        deployment: PathBuf,
        /// Comma-separated node addresses; defaults to the deployment's nodes.
        #[arg(long, value_delimiter = ',')]
        fleet: Vec<String>,
        /// Registry whose entry for the domain supplies expected and revoked
        /// measurements.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// CA issuance log; defaults to ca-log.json next to the deployment.
        #[arg(long)]
        ca_log: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        timeout_ms: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("revelio-sp: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let Command::RunRound {
        deployment,
        fleet,
        registry,
        ca_log,
        timeout_ms,
    } = cli.command;
    let manifest = DeploymentManifest::load(&deployment)?;
    let registry = registry
        .map(|p| TrustedRegistry::load(&p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let fleet: Vec<Addr> = if fleet.is_empty() {
        manifest.nodes.clone()
    } else {
        fleet.into_iter().map(Addr::from).collect()
    };
    let ca_log = ca_log.unwrap_or_else(|| deployment.with_file_name("ca-log.json"));
    let ca = Arc::new(Mutex::new(manifest.ca(load_ca_log(&ca_log)?)?));

    let sp = SpNode {
        domain: manifest.domain.clone(),
        policy: manifest.policy(&fleet, registry.as_ref()),
        fleet,
        ca: ca.clone(),
        ca_credential: manifest.credential()?,
    };
    let http = HttpTransport::new(Duration::from_millis(timeout_ms));
    let kds = RemoteKds {
        transport: &http,
        kds: manifest.kds.clone(),
    };
    let ctx = AttestationContext {
        kds: &kds,
        trusted_ark: manifest.ark,
        now: Clock::System.now(),
    };
    let result = sp.run_certificate_round(&http, &ctx);
    let ca = ca.lock().map_err(|_| anyhow::anyhow!("ca lock poisoned"))?;
    save_ca_log(&ca_log, ca.issued())?;

    match result {
        Ok(outcome) => {
            revelio_cli::outln!(
                "{}",
                serde_json::to_string_pretty(&json!({ "status": "ok", "outcome": outcome }))?
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(failure) => {
            revelio_cli::outln!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "status": "failed",
                    "reason": failure.reason(),
                    "failure": failure,
                }))?
            );
            Ok(ExitCode::FAILURE)
        }
    }
}
