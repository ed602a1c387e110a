// SPDX-License-Identifier: Apache-2.0

//! JSON bodies and paths of the node and KDS endpoints.

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;
use crate::hrot::AttestationReport;

pub const WELL_KNOWN_PATH: &str = "/.well-known/revelio-attestation";
pub const CSR_BUNDLE_PATH: &str = "/csr-bundle";
pub const INSTALL_CERT_PATH: &str = "/install-cert";
pub const KEY_REQUEST_PATH: &str = "/key-request";
pub const INDEX_PATH: &str = "/index";
pub const VCEK_PATH: &str = "/vcek";

/// `GET /.well-known/revelio-attestation`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellKnownResponse {
    pub report: AttestationReport,
    pub tls_public_key: PublicKey,
}

/// `POST /csr-bundle`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrBundleResponse {
    pub report: AttestationReport,
    #[serde(with = "crate::codec::hex_bytes")]
    pub csr: Vec<u8>,
}

/// `POST /install-cert`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallCertRequest {
    #[serde(with = "crate::codec::hex_bytes")]
    pub certificate: Vec<u8>,
    pub leader_ip: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallCertResponse {
    pub status: String,
}

/// `POST /key-request`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRequest {
    pub report: AttestationReport,
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyResponse {
    pub report: AttestationReport,
    #[serde(with = "crate::codec::hex_bytes")]
    pub encrypted_private_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
