// SPDX-License-Identifier: Apache-2.0

//! Attesting client. Exit status is 0 only when every verdict is Trusted,
//! 1 on any other verdict and 2 when no verdict could be reached.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use revelio_cli::manifest::DeploymentManifest;
use revelio_core::clock::Clock;
use revelio_core::crypto::PublicKey;
use revelio_core::transport::{Addr, Request};
use revelio_core::verification::{AttestingClient, TrustedRegistry, VerifyError};
use revelio_core::wire::INDEX_PATH;
use revelio_net::HttpTransport;

#[derive(Parser)]
#[command(name = "revelio-attest", version, about = "Attest a domain before talking to it")]
struct Cli {
    #[arg(long)]
    domain: String,
    #[arg(long)]
    registry: PathBuf,
    /// Attest once and exit (default).
    #[arg(long, conflicts_with = "monitor")]
    once: bool,
    /// Attest, then check the connection key on every following request.
    #[arg(long)]
    monitor: bool,
    /// Requests to issue in monitor mode.
    #[arg(long, default_value_t = 3)]
    requests: usize,
    #[arg(long, default_value_t = 0)]
    interval_ms: u64,
    /// Server address (host:port). Defaults to the deployment's first node.
    #[arg(long)]
    connect: Option<String>,
    /// KDS address (host:port).
    #[arg(long)]
    kds: Option<String>,
    /// Pinned ARK public key, hex.
    #[arg(long)]
    ark: Option<String>,
    /// deployment.json supplying defaults for --connect, --kds and --ark.
    #[arg(long)]
    deployment: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            revelio_cli::outln!("{}", json!({ "status": "Error", "details": format!("{e:#}") }));
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let manifest = cli.deployment.as_deref().map(DeploymentManifest::load).transpose()?;
    let server = match (&cli.connect, &manifest) {
        (Some(c), _) => Addr::from(c.clone()),
        (None, Some(m)) => m.nodes.first().cloned().context("deployment lists no nodes")?,
        (None, None) => anyhow::bail!("--connect or --deployment is required"),
    };
    let kds = match (&cli.kds, &manifest) {
        (Some(k), _) => Addr::from(k.clone()),
        (None, Some(m)) => m.kds.clone(),
        (None, None) => anyhow::bail!("--kds or --deployment is required"),
    };
    let ark = match (&cli.ark, &manifest) {
        (Some(a), _) => PublicKey::from_hex(a).map_err(|e| anyhow::anyhow!("--ark: {e}"))?,
        (None, Some(m)) => m.ark,
        (None, None) => anyhow::bail!("--ark or --deployment is required"),
    };
    let registry =
        TrustedRegistry::load(&cli.registry).with_context(|| format!("loading {}", cli.registry.display()))?;

    let http = HttpTransport::new(Duration::from_millis(cli.timeout_ms));
    let mut client = AttestingClient::new(&http, &registry, kds, ark, Clock::System);

    let first = match client.first_access(&cli.domain, &server) {
        Ok(v) => v,
        Err(e) => return Ok(no_verdict(&cli.domain, &server, &e)),
    };
    revelio_cli::outln!(
        "{}",
        json!({ "domain": cli.domain, "server": server, "request": 0, "verdict": first })
    );
    if !first.is_trusted() || !cli.monitor {
        return Ok(exit_for(first.is_trusted()));
    }

    let mut all_trusted = true;
    for i in 1..=cli.requests {
        std::thread::sleep(Duration::from_millis(cli.interval_ms));
        match client.request(&cli.domain, &server, Request::get(INDEX_PATH)) {
            Ok((v, resp)) => {
                revelio_cli::outln!(
                    "{}",
                    json!({ "domain": cli.domain, "server": server, "request": i, "status_code": resp.status, "verdict": v })
                );
                if !v.is_trusted() {
                    all_trusted = false;
                    break;
                }
            }
            Err(e) => return Ok(no_verdict(&cli.domain, &server, &e)),
        }
    }
    Ok(exit_for(all_trusted))
}

fn exit_for(trusted: bool) -> ExitCode {
    if trusted {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn no_verdict(domain: &str, server: &Addr, e: &VerifyError) -> ExitCode {
    let status = match e {
        VerifyError::UnregisteredDomain(_) => "Unregistered",
        VerifyError::NotAttested(_) => "NotAttested",
        VerifyError::Inconclusive(_) => "Inconclusive",
    };
    revelio_cli::outln!(
        "{}",
        json!({ "domain": domain, "server": server, "verdict": { "status": status, "details": e.to_string() } })
    );
    ExitCode::from(2)
}
