// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use revelio_core::clock::Clock;
use revelio_core::kds::{KdsError, VcekSource};
use revelio_core::protocol::Verdict;
use revelio_core::sim::fleet::{DOMAIN, EPOCH};
use revelio_core::sim::FleetOptions;
use revelio_core::transport::{Addr, Method, RemoteKds, Request, Transport, TransportError, CONN_KEY_HEADER};
use revelio_core::verification::{AttestingClient, VerdictStatus};
use revelio_core::wire::{INDEX_PATH, WELL_KNOWN_PATH};
use revelio_net::{bind, HttpTransport, LocalDeployment};

fn deploy(nodes: usize, seed: u64) -> LocalDeployment {
    LocalDeployment::launch(FleetOptions::new(nodes, seed), "127.0.0.1", Clock::manual(EPOCH)).unwrap()
}

#[test]
fn kds_facade_serves_the_same_chain() {
    let d = deploy(1, 1);
    let http = HttpTransport::default();
    let remote = RemoteKds {
        transport: &http,
        kds: d.kds_addr(),
    };
    let chip = d.fleet.chips[0].clone();
    let local = d
        .fleet
        .kds
        .borrow()
        .0
        .fetch_vcek(chip.chip_id(), chip.tcb_version())
        .unwrap();
    assert_eq!(remote.fetch_vcek(chip.chip_id(), chip.tcb_version()).unwrap(), local);
    assert!(matches!(
        remote.fetch_vcek(chip.chip_id(), chip.tcb_version() + 1),
        Err(KdsError::NotProvisioned { .. })
    ));
    let bad = http
        .call(&d.kds_addr(), Request::get("/vcek?chip_id=zz&tcb=1"))
        .unwrap();
    assert_eq!(bad.status, 400);
}

#[test]
fn round_and_client_attestation_over_http() {
    let d = deploy(3, 2);
    assert!(d.nodes.iter().all(|n| n.server.is_some()));
    let http = HttpTransport::default();
    let outcome = d.run_round(&http).unwrap();
    assert_eq!((outcome.validations, outcome.installs), (3, 3));
    assert_eq!(d.fleet.certificates_issued(), 1);

    let certs: Vec<_> = d
        .nodes
        .iter()
        .map(|n| n.node.lock().unwrap().certificate().unwrap().to_vec())
        .collect();
    assert!(certs.windows(2).all(|w| w[0] == w[1]));

    let mut client = AttestingClient::new(
        &http,
        &d.fleet.registry,
        d.kds_addr(),
        d.fleet.ark,
        d.fleet.clock.clone(),
    );
    for addr in d.node_addrs() {
        let v = client.first_access(DOMAIN, &addr).unwrap();
        assert_eq!(v.status, VerdictStatus::Trusted, "{v:?}");
        let (v, resp) = client.request(DOMAIN, &addr, Request::get(INDEX_PATH)).unwrap();
        assert!(v.is_trusted());
        assert_eq!(resp.status, 200);
        assert!(resp.header(CONN_KEY_HEADER).is_some());
    }
}

#[test]
fn well_known_json_shape() {
    let d = deploy(1, 3);
    let resp = HttpTransport::default()
        .call(&d.node_addrs()[0], Request::get(WELL_KNOWN_PATH))
        .unwrap();
    assert_eq!(resp.status, 200);
    assert_eq!(resp.header("content-type"), Some("application/json"));
    let v: serde_json::Value = serde_json::from_slice(&resp.body).unwrap();
    let report = &v["report"];
    for (field, hex_len) in [
        ("chip_id", 128),
        ("measurement", 96),
        ("report_data", 128),
        ("signature", 128),
    ] {
        let s = report[field]
            .as_str()
            .unwrap_or_else(|| panic!("{field} is not a string"));
        assert_eq!(s.len(), hex_len, "{field}");
        assert!(s.bytes().all(|b| b.is_ascii_hexdigit()));
    }
    assert!(report["tcb_version"].is_u64());
    assert_eq!(v["tls_public_key"].as_str().unwrap().len(), 64);
    assert_eq!(
        resp.header(CONN_KEY_HEADER),
        v["tls_public_key"].as_str(),
        "before any certificate the connection key is the node's own key"
    );
}

#[test]
fn no_management_surface() {
    let d = deploy(1, 4);
    let http = HttpTransport::default();
    let node = &d.node_addrs()[0];
    for path in ["/admin", "/shell", "/rootfs/write", "/"] {
        assert_eq!(http.call(node, Request::get(path)).unwrap().status, 404, "{path}");
    }
    let wrong = Request {
        method: Method::Delete,
        path: WELL_KNOWN_PATH.into(),
        body: Vec::new(),
    };
    assert_eq!(http.call(node, wrong).unwrap().status, 405);
    let put = Request {
        method: Method::Put,
        path: "/install-cert".into(),
        body: b"{}".to_vec(),
    };
    assert_eq!(http.call(node, put).unwrap().status, 405);
}

#[test]
fn unreachable_member_is_inconclusive() {
    let mut d = deploy(2, 5);
    let down = d.nodes[1].addr.clone();
    d.nodes[1].server.take().unwrap().shutdown().unwrap();
    let http = HttpTransport::new(Duration::from_secs(2));
    assert!(matches!(
        http.call(&down, Request::get(WELL_KNOWN_PATH)),
        Err(TransportError::Unreachable(_))
    ));
    let outcome = d.run_round(&http).unwrap();
    let verdict = outcome.verdicts.iter().find(|v| v.node == down).unwrap();
    assert!(matches!(verdict.verdict, Verdict::Inconclusive(_)), "{verdict:?}");
    assert_eq!(outcome.installs, 1);
}

#[test]
fn closed_port_is_unreachable() {
    let addr = bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = HttpTransport::default()
        .call(&Addr::new(addr.to_string()), Request::get(WELL_KNOWN_PATH))
        .unwrap_err();
    assert!(matches!(err, TransportError::Unreachable(_)), "{err}");
}
