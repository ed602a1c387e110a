// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use revelio_core::boot::{ovmf_verify, BootBundle, BootDecision, LaunchMeasurement};
use revelio_core::cert::{CertChain, Csr};
use revelio_core::crypto::{decrypt_with, encrypt_to, hash256, KeyPair};
use revelio_core::hrot::{AttestationReport, ChipState, ReportData, SealingKey};
use revelio_core::integrity::{
    build_image, build_merkle, compute_root, parse_image, seal_volume, unseal_volume, ImageManifest, MerkleDevice,
    SealedVolume, VerityMeta,
};
use revelio_core::kds::Kds;
use revelio_core::protocol::AttestationContext;
use revelio_core::verification::{attest_domain, TrustedRegistry, VerdictStatus};
use revelio_core::wire::WellKnownResponse;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn measurement() -> impl Strategy<Value = LaunchMeasurement> {
    vec(any::<u8>(), 48).prop_map(|v| LaunchMeasurement(v.try_into().unwrap()))
}

fn bundle() -> impl Strategy<Value = BootBundle> {
    (
        vec(any::<u8>(), 1..64),
        vec(any::<u8>(), 0..64),
        vec(any::<u8>(), 0..64),
        "[ -~]{0,40}",
    )
        .prop_map(|(fw, k, i, c)| BootBundle::assemble(fw, k, i, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn launch_digest_changes_on_any_byte(b in bundle(), which in 0usize..4, pos in any::<prop::sample::Index>(), delta in 1u8..) {
        let before = b.launch_measurement();
        let mut kernel = b.kernel.clone();
        let mut initrd = b.initrd.clone();
        let mut firmware = b.firmware.clone();
        let mut cmdline = b.cmdline.clone().into_bytes();
        let target = match which {
            0 => &mut firmware,
            1 => &mut kernel,
            2 => &mut initrd,
            _ => &mut cmdline,
        };
        if target.is_empty() {
            target.push(delta);
        } else {
            let p = pos.index(target.len());
            target[p] ^= delta;
        }
        // cmdline must stay a string; a lossy decode still changes it
        let cmdline = String::from_utf8_lossy(&cmdline).into_owned();
        prop_assume!(cmdline != b.cmdline || which != 3);
        let after = BootBundle::assemble(firmware, kernel, initrd, cmdline).launch_measurement();
        prop_assert_ne!(before, after);
    }

    #[test]
    fn firmware_check_catches_swapped_components(b in bundle(), extra in vec(any::<u8>(), 1..8), which in 0usize..3) {
        prop_assert_eq!(ovmf_verify(&b), BootDecision::Proceed);
        let mut swapped = b.clone();
        match which {
            0 => swapped.kernel.extend(&extra),
            1 => swapped.initrd.extend(&extra),
            _ => swapped.cmdline.push_str(" x"),
        }
        prop_assert!(matches!(ovmf_verify(&swapped), BootDecision::Abort(_)));
        // the measurement covers only firmware and the injected table
        prop_assert_eq!(swapped.launch_measurement(), b.launch_measurement());
    }

    #[test]
    fn reports_cannot_be_altered(seed in any::<u64>(), m in measurement(), data in vec(any::<u8>(), 64), pos in 0usize..248, delta in 1u8..) {
        let chip = ChipState::generate(&mut rng(seed), 1);
        let report = chip.issue_report(&m, &data).unwrap();
        prop_assert!(report.verify(&chip.vcek_public()));
        let bytes = report.to_bytes();
        prop_assert_eq!(AttestationReport::from_bytes(&bytes).unwrap(), report.clone());
        let mut bad = bytes.clone();
        let p = pos % bad.len();
        bad[p] ^= delta;
        if let Ok(parsed) = AttestationReport::from_bytes(&bad) {
            prop_assert!(!parsed.verify(&chip.vcek_public()));
        }
    }

    #[test]
    fn verity_roundtrip(blocks in 1usize..6, salt in vec(any::<u8>(), 0..24), seed in any::<u64>()) {
        let data = common::XorShift(seed | 1).bytes(blocks * common::BLOCK);
        let dev = build_merkle(data.clone(), &salt).unwrap();
        prop_assert_eq!(dev.root().0, common::merkle_root(&data, &salt));
        prop_assert_eq!(compute_root(&data, &salt).unwrap(), dev.root());
        let meta = dev.metadata();
        let parsed = VerityMeta::from_bytes(&meta.to_bytes()).unwrap();
        prop_assert_eq!(&parsed, &meta);
        let reopened = MerkleDevice::open(data.clone(), &parsed).unwrap();
        prop_assert_eq!(reopened.verified_read_all().unwrap(), data);
    }

    #[test]
    fn image_roundtrip(files in btree_map("[a-z]{1,8}(/[a-z]{1,8}){0,2}", (vec(any::<u8>(), 0..300), 0u16..0o1000), 1..12)) {
        let manifest = files
            .iter()
            .fold(ImageManifest::new(), |m, (p, (c, mode))| m.with_file(p, c.clone(), *mode));
        let image = build_image(&manifest).unwrap();
        prop_assert_eq!(image.len() % common::BLOCK, 0);
        let parsed = parse_image(&image).unwrap();
        let expected: Vec<_> = manifest.sorted().unwrap().into_iter().cloned().collect();
        prop_assert_eq!(parsed, expected);
        // insertion order does not matter
        let reversed = files
            .iter()
            .rev()
            .fold(ImageManifest::new(), |m, (p, (c, mode))| m.with_file(p, c.clone(), *mode));
        prop_assert_eq!(build_image(&reversed).unwrap(), image);
    }

    #[test]
    fn key_transport_roundtrip(seed in any::<u64>(), msg in vec(any::<u8>(), 0..128), pos in any::<prop::sample::Index>(), delta in 1u8..) {
        let mut r = rng(seed);
        let recipient = KeyPair::generate(&mut r);
        let other = KeyPair::generate(&mut r);
        let ct = encrypt_to(&recipient.public(), &msg, &mut r).unwrap();
        prop_assert_eq!(decrypt_with(&recipient, &ct).unwrap(), msg);
        prop_assert!(decrypt_with(&other, &ct).is_err());
        let mut bad = ct.clone();
        let p = pos.index(bad.len());
        bad[p] ^= delta;
        prop_assert!(decrypt_with(&recipient, &bad).is_err());
    }

    #[test]
    fn sealing_needs_the_exact_key(seed in any::<u64>(), msg in vec(any::<u8>(), 0..128), k1 in any::<[u8; 32]>(), k2 in any::<[u8; 32]>(), pos in any::<prop::sample::Index>(), delta in 1u8..) {
        let sealed = seal_volume(&msg, &SealingKey::from_bytes(k1), &mut rng(seed));
        let bytes = sealed.to_bytes();
        let parsed = SealedVolume::from_bytes(&bytes).unwrap();
        prop_assert_eq!(unseal_volume(&parsed, &SealingKey::from_bytes(k1)).unwrap(), msg);
        prop_assert_eq!(unseal_volume(&parsed, &SealingKey::from_bytes(k2)).is_ok(), k1 == k2);
        let mut bad = bytes;
        let p = pos.index(bad.len());
        bad[p] ^= delta;
        let tampered = SealedVolume::from_bytes(&bad).unwrap();
        prop_assert!(unseal_volume(&tampered, &SealingKey::from_bytes(k1)).is_err());
    }

    #[test]
    fn csr_roundtrip(seed in any::<u64>(), domain in "[a-z]{1,10}\\.[a-z]{2,5}") {
        let key = KeyPair::generate(&mut rng(seed));
        let csr = Csr::create(&domain, &key);
        let parsed = Csr::from_bytes(&csr.to_bytes()).unwrap();
        prop_assert!(parsed.verify_self_signature());
        prop_assert_eq!(parsed, csr);
    }

    #[test]
    fn cert_chain_roundtrip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut kds = Kds::generate(&mut r);
        let chip = ChipState::generate(&mut r, 2);
        kds.provision_chip(&chip);
        let chain = revelio_core::kds::VcekSource::fetch_vcek(&kds, chip.chip_id(), 2).unwrap();
        let parsed = CertChain::from_bytes(&chain.to_bytes()).unwrap();
        prop_assert_eq!(&parsed, &chain);
        prop_assert!(parsed.validate_anchored(&kds.ark_public(), 1_700_000_000).is_ok());
    }

    #[test]
    fn registry_roundtrip_and_revocation_is_final(
        entries in vec(("[a-z]{1,6}\\.test", measurement(), any::<bool>()), 0..10),
        pin in proptest::option::of(any::<u64>()),
    ) {
        let mut reg = TrustedRegistry::new();
        for (d, m, revoke) in &entries {
            if *revoke {
                reg.revoke(d, *m);
            } else {
                let _ = reg.accept(d, *m);
            }
        }
        if let (Some(seed), Some((d, _, _))) = (pin, entries.first()) {
            reg.pin(d, KeyPair::generate(&mut rng(seed)).public());
        }
        prop_assert_eq!(&TrustedRegistry::from_text(&reg.to_text()).unwrap(), &reg);
        prop_assert_eq!(&TrustedRegistry::from_json(&reg.to_json()).unwrap(), &reg);
        prop_assert_eq!(&TrustedRegistry::parse(&reg.to_json()).unwrap(), &reg);
        for (d, m, revoke) in &entries {
            let e = reg.get(d).unwrap();
            prop_assert!(e.accepted_measurements.is_disjoint(&e.revoked_measurements));
            if *revoke {
                prop_assert!(reg.clone().accept(d, *m).is_err());
            }
        }
    }

    #[test]
    fn pipeline_trusts_only_accepted_and_bound(
        seed in any::<u64>(),
        accepted in any::<bool>(),
        revoked in any::<bool>(),
        bind_served in any::<bool>(),
        conn_matches in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let mut kds = Kds::generate(&mut r);
        let chip = ChipState::generate(&mut r, 1);
        kds.provision_chip(&chip);
        let served = KeyPair::generate(&mut r).public();
        let other = KeyPair::generate(&mut r).public();
        let m = LaunchMeasurement(hash256(&seed.to_be_bytes()).0.repeat(2)[..48].try_into().unwrap());

        let mut reg = TrustedRegistry::new();
        reg.register("svc.test");
        if revoked {
            reg.revoke("svc.test", m);
        } else if accepted {
            reg.accept("svc.test", m).unwrap();
        }
        let bound = if bind_served { served } else { other };
        let report = chip.issue_report(&m, ReportData::bind(&hash256(bound.as_ref())).as_ref()).unwrap();
        let fetched = WellKnownResponse { report, tls_public_key: served };
        let conn = if conn_matches { served } else { other };
        let ctx = AttestationContext { kds: &kds, trusted_ark: kds.ark_public(), now: 1_700_000_000 };
        let v = attest_domain(&reg, &ctx, "svc.test", &fetched, &conn).unwrap();
        let should_trust = accepted && !revoked && bind_served && conn_matches;
        prop_assert_eq!(v.status == VerdictStatus::Trusted, should_trust, "{:?}", v);
        if revoked {
            prop_assert_eq!(v.status, VerdictStatus::RevokedMeasurement);
        }
    }
}
