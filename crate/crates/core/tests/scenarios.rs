// SPDX-License-Identifier: Apache-2.0

use revelio_core::node::NodePhase;
use revelio_core::protocol::{Check, Verdict};
use revelio_core::sim::{run_scenario, ScenarioKind, Topology};
use revelio_core::verification::VerdictStatus;

fn run(kind: ScenarioKind) -> revelio_core::sim::ScenarioReport {
    let r = run_scenario(Topology::default(), kind, 42);
    assert!(r.violations.is_empty(), "{kind}: {:#?}", r.violations);
    assert!(r.passed(), "{kind}: detections {:#?}", r.detections);
    r
}

fn client_statuses(r: &revelio_core::sim::ScenarioReport) -> Vec<VerdictStatus> {
    r.client_verdicts
        .iter()
        .filter_map(|v| v.verdict.as_ref().map(|v| v.status))
        .collect()
}

#[test]
fn every_scenario_passes() {
    for kind in ScenarioKind::ALL {
        let r = run(kind);
        println!(
            "{kind}: {} detections, {} messages",
            r.detections.len(),
            r.transcript_messages
        );
        for d in &r.detections {
            println!("    {d}");
        }
    }
}

#[test]
fn honest_run_is_fully_trusted() {
    let r = run(ScenarioKind::None);
    assert!(r.detections.is_empty());
    assert_eq!(r.certificates_issued, 1);
    assert!(r.key_secrecy.passed() && r.key_secrecy.secrets_checked >= 3);
    assert!(client_statuses(&r).iter().all(|s| *s == VerdictStatus::Trusted));
    assert!(r.rootfs_unchanged && r.consistent_tls_identity);
}

#[test]
fn boot_time_tampering_aborts_the_target() {
    for (kind, stage) in [
        (ScenarioKind::MaliciousKernel, "ovmf:kernel"),
        (ScenarioKind::MaliciousInitrd, "ovmf:initrd"),
        (ScenarioKind::MaliciousCmdline, "ovmf:cmdline"),
        (ScenarioKind::TamperedRootfs, "rootfs"),
    ] {
        let r = run(kind);
        match r.boots[0].phase {
            NodePhase::Failed(f) => assert_eq!(f.stage(), stage, "{kind}"),
            other => panic!("{kind}: target reached {other:?}"),
        }
        // the rest of the fleet still gets its certificate
        let round = r.round.as_ref().expect("round succeeds without the target");
        assert_eq!(round.installs, 2, "{kind}");
    }
}

#[test]
fn measured_attacks_fail_attestation() {
    for (kind, status) in [
        (ScenarioKind::MaliciousOvmf, VerdictStatus::MeasurementMismatch),
        (ScenarioKind::TamperedRoothash, VerdictStatus::MeasurementMismatch),
        (ScenarioKind::Rollback, VerdictStatus::RevokedMeasurement),
    ] {
        let r = run(kind);
        assert_eq!(r.boots[0].phase, NodePhase::Serving, "{kind}");
        let round = r.round.as_ref().unwrap();
        assert_eq!(round.verdicts[0].verdict, Verdict::Reject(Check::Measurement), "{kind}");
        assert_eq!(client_statuses(&r)[0], status, "{kind}");
    }
}

#[test]
fn impersonator_is_refused_by_sp_and_leader() {
    let r = run(ScenarioKind::ImpersonatorValidReport);
    assert_eq!(
        r.round.as_ref().unwrap().verdicts[0].verdict,
        Verdict::Reject(Check::ChipId)
    );
    assert!(r
        .detections
        .iter()
        .any(|d| d.contains("leader refused key request (reject: chip_id)")));
}

#[test]
fn redirect_is_caught_at_first_access_and_mid_session() {
    let r = run(ScenarioKind::CertRedirectMitm);
    let s = client_statuses(&r);
    assert_eq!(s[0], VerdictStatus::BindingMismatch);
    assert!(s.contains(&VerdictStatus::ConnectionReset));
    assert_eq!(r.certificates_issued, 2);
}

#[test]
fn followers_discard_key_from_rogue_leader() {
    let r = run(ScenarioKind::WrongMeasurementLeader);
    let rejected = r
        .detections
        .iter()
        .filter(|d| d.contains("rejected leader") && d.contains("reject: measurement"))
        .count();
    assert_eq!(rejected, 2);
}

#[test]
fn runtime_mutation_has_no_effect_on_the_verified_rootfs() {
    let r = run(ScenarioKind::RuntimeMutationAttempt);
    assert!(r.rootfs_unchanged);
    assert!(r.detections.iter().any(|d| d.contains("refused POST /admin with 404")));
    assert!(r.detections.iter().any(|d| d.contains("rootfs read failed")));
}
