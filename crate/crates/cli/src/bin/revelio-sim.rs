// SPDX-License-Identifier: Apache-2.0

//! Scenario runner and local HTTP deployment.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use revelio_cli::manifest::DeploymentManifest;
use revelio_cli::write_atomic;
use revelio_core::clock::Clock;
use revelio_core::sim::{run_scenario, FleetOptions, ScenarioKind, ScenarioReport, Topology};
use revelio_net::LocalDeployment;

#[derive(Parser)]
#[command(
    name = "revelio-sim",
    version,
    about = "Run adversary scenarios or serve a local fleet"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List scenario names.
    List,
    /// Run one scenario (or `all`) and print the report as JSON.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        clients: usize,
        /// Write the message transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Serve a seeded fleet and KDS over HTTP until interrupted.
    Serve {
        #[arg(long, default_value_t = 3)]
        nodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Receives deployment.json and registry.txt.
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("revelio-sim: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::List => {
            for kind in ScenarioKind::ALL {
                revelio_cli::outln!("{:<28} {}", kind.name(), kind.description());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            scenario,
            seed,
            nodes,
            clients,
            transcript,
        } => {
            anyhow::ensure!(nodes >= 1, "--nodes must be at least 1");
            let topology = Topology { nodes, clients };
            let kinds: Vec<ScenarioKind> = if scenario == "all" {
                ScenarioKind::ALL.to_vec()
            } else {
                vec![scenario.parse().map_err(|e| anyhow::anyhow!("{e}"))?]
            };
            let reports: Vec<ScenarioReport> = kinds.into_iter().map(|k| run_scenario(topology, k, seed)).collect();
            if let Some(path) = transcript {
                let lines: String = reports.iter().map(ScenarioReport::transcript_jsonl).collect();
                fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
            }
            let json = match reports.as_slice() {
                [one] => serde_json::to_string_pretty(one)?,
                many => serde_json::to_string_pretty(many)?,
            };
            revelio_cli::outln!("{json}");
            Ok(if reports.iter().all(ScenarioReport::passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Serve { nodes, seed, host, dir } => serve(nodes, seed, &host, dir),
    }
}

fn serve(nodes: usize, seed: u64, host: &str, dir: PathBuf) -> Result<ExitCode> {
    anyhow::ensure!(nodes >= 1, "--nodes must be at least 1");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let d = LocalDeployment::launch(FleetOptions::new(nodes, seed), host, Clock::System).context("starting servers")?;
    let f = &d.fleet;
    let manifest = DeploymentManifest {
        domain: d.sp.domain.clone(),
        kds: d.kds_addr(),
        ark: f.ark,
        nodes: d.node_addrs(),
        approved_chips: f.policy.approved_chips.clone(),
        expected_measurements: f.policy.expected_measurements.clone(),
        revoked_measurements: f.policy.revoked_measurements.clone(),
        ca_root: f.ca_root,
        ca_key: hex::encode(f.ca_key.secret_bytes()),
        ca_credential: hex::encode(f.ca_credential),
        rate_limit: f
            .ca
            .lock()
            .map_err(|_| anyhow::anyhow!("ca lock poisoned"))?
            .rate_limit(),
    };
    write_atomic(&dir.join("registry.txt"), f.registry.to_text().as_bytes())?;
    manifest.save(&dir.join("deployment.json"))?;

    revelio_cli::outln!("kds   {}", manifest.kds);
    for n in &d.nodes {
        revelio_cli::outln!("node  {} {:?}", n.addr, n.phase);
    }
    revelio_cli::outln!("wrote {}", dir.join("deployment.json").display());
    loop {
        std::thread::park();
    }
}
