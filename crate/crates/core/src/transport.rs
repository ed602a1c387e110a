// SPDX-License-Identifier: Apache-2.0

//! Request/response abstraction shared by the simulated network and the HTTP
//! facades. Services are synchronous state machines; a [`Transport`] is one
//! endpoint's view of the network.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cert::CertChain;
use crate::hrot::ChipId;
use crate::kds::{vcek_request_path, KdsError, VcekSource};

/// Every response carries the public key of the connection it was served
/// over, standing in for TLS introspection.
pub const CONN_KEY_HEADER: &str = "x-revelio-conn-key";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Addr(pub String);

impl Addr {
    pub fn new(s: impl Into<String>) -> Self {
        Addr(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Addr {
    fn from(s: &str) -> Self {
        Addr(s.to_owned())
    }
}

impl From<String> for Addr {
    fn from(s: String) -> Self {
        Addr(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    /// Path including any query string.
    pub path: String,
    pub body: Vec<u8>,
}

impl Request {
    pub fn get(path: impl Into<String>) -> Self {
        Request {
            method: Method::Get,
            path: path.into(),
            body: Vec::new(),
        }
    }

    pub fn post(path: impl Into<String>, body: Vec<u8>) -> Self {
        Request {
            method: Method::Post,
            path: path.into(),
            body,
        }
    }

    pub fn post_json<T: Serialize>(path: impl Into<String>, body: &T) -> Self {
        Self::post(path, serde_json::to_vec(body).expect("wire types serialize"))
    }

    pub fn path_only(&self) -> &str {
        self.path.split_once('?').map_or(&self.path, |(p, _)| p)
    }

    pub fn query(&self) -> &str {
        self.path.split_once('?').map_or("", |(_, q)| q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn new(status: u16, body: Vec<u8>) -> Self {
        Response {
            status,
            headers: BTreeMap::new(),
            body,
        }
    }

    pub fn json<T: Serialize>(status: u16, body: &T) -> Self {
        let mut r = Self::new(status, serde_json::to_vec(body).expect("wire types serialize"));
        r.headers.insert("content-type".into(), "application/json".into());
        r
    }

    pub fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &crate::wire::ErrorBody { error: message.into() })
    }

    pub fn not_found() -> Self {
        Self::error(404, "not found")
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn parse_json<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_slice(&self.body)
    }

    /// The `error` field of a JSON error body, if any.
    pub fn error_message(&self) -> Option<String> {
        self.parse_json::<crate::wire::ErrorBody>().ok().map(|e| e.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("{0} unreachable")]
    Unreachable(Addr),
    #[error("request to {0} timed out")]
    Timeout(Addr),
    #[error("transport failure: {0}")]
    Other(String),
}

pub trait Transport {
    fn call(&self, dst: &Addr, req: Request) -> Result<Response, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn call(&self, dst: &Addr, req: Request) -> Result<Response, TransportError> {
        (**self).call(dst, req)
    }
}

/// Resolves VCEK chains through the KDS HTTP facade over some transport.
pub struct RemoteKds<'a> {
    pub transport: &'a dyn Transport,
    pub kds: Addr,
}

impl VcekSource for RemoteKds<'_> {
    fn fetch_vcek(&self, chip_id: &ChipId, tcb_version: u64) -> Result<CertChain, KdsError> {
        let resp = self
            .transport
            .call(&self.kds, Request::get(vcek_request_path(chip_id, tcb_version)))
            .map_err(|e| KdsError::Unreachable(e.to_string()))?;
        match resp.status {
            200 => CertChain::from_bytes(&resp.body).map_err(|e| KdsError::Malformed(e.to_string())),
            404 => Err(KdsError::NotProvisioned {
                chip: chip_id.to_hex(),
                tcb: tcb_version,
            }),
            s => Err(KdsError::Unreachable(format!("status {s}"))),
        }
    }
}

/// Request handler for the KDS facade: `GET /vcek?chip_id=<hex>&tcb=<int>`
/// answers with the serialized chain.
pub fn serve_kds(kds: &dyn VcekSource, req: &Request) -> Response {
    if req.path_only() != crate::wire::VCEK_PATH {
        return Response::not_found();
    }
    if req.method != Method::Get {
        return Response::error(405, "method not allowed");
    }
    let Some((chip, tcb)) = crate::kds::parse_vcek_query(req.query()) else {
        return Response::error(400, "expected chip_id=<hex>&tcb=<int>");
    };
    match kds.fetch_vcek(&chip, tcb) {
        Ok(chain) => {
            let mut r = Response::new(200, chain.to_bytes());
            r.headers
                .insert("content-type".into(), "application/octet-stream".into());
            r
        }
        Err(e @ KdsError::NotProvisioned { .. }) => Response::error(404, e.to_string()),
        Err(e @ KdsError::Malformed(_)) => Response::error(500, e.to_string()),
        Err(e) => Response::error(503, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kds::Kds;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Direct<'a>(&'a Kds);
    impl Transport for Direct<'_> {
        fn call(&self, _dst: &Addr, req: Request) -> Result<Response, TransportError> {
            Ok(serve_kds(self.0, &req))
        }
    }

    #[test]
    fn remote_kds_matches_in_process_kds() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut kds = Kds::generate(&mut rng);
        let chip = crate::hrot::ChipState::generate(&mut rng, 2);
        kds.provision_chip(&chip);
        let t = Direct(&kds);
        let remote = RemoteKds {
            transport: &t,
            kds: "kds".into(),
        };
        assert_eq!(remote.fetch_vcek(chip.chip_id(), 2), kds.fetch_vcek(chip.chip_id(), 2));
        assert!(matches!(
            remote.fetch_vcek(chip.chip_id(), 3),
            Err(KdsError::NotProvisioned { .. })
        ));
    }

    #[test]
    fn kds_facade_rejects_bad_requests() {
        let kds = Kds::generate(&mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(serve_kds(&kds, &Request::get("/vcek?tcb=1")).status, 400);
        assert_eq!(serve_kds(&kds, &Request::get("/other")).status, 404);
        assert_eq!(serve_kds(&kds, &Request::post("/vcek", vec![])).status, 405);
    }

    #[test]
    fn headers_are_case_insensitive() {
        let r = Response::new(200, vec![]).with_header("X-Revelio-Conn-Key", "ab");
        assert_eq!(r.header(CONN_KEY_HEADER), Some("ab"));
        assert_eq!(r.header("X-REVELIO-CONN-KEY"), Some("ab"));
    }
}
