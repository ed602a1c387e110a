// SPDX-License-Identifier: Apache-2.0

use std::io::Read;
use std::time::Duration;

use revelio_core::transport::{Addr, Request, Response, Transport, TransportError};

const MAX_BODY: u64 = 16 << 20;

/// Blocking HTTP client. Addresses are `host:port`.
#[derive(Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(5))
    }
}

impl Transport for HttpTransport {
    fn call(&self, dst: &Addr, req: Request) -> Result<Response, TransportError> {
        let url = format!("http://{dst}{}", req.path);
        let call = self.agent.request(req.method.as_str(), &url);
        let result = if req.body.is_empty() {
            call.call()
        } else {
            call.set("content-type", "application/json").send_bytes(&req.body)
        };
        let resp = match result {
            Ok(r) | Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(t)) => {
                return Err(match t.kind() {
                    ureq::ErrorKind::ConnectionFailed | ureq::ErrorKind::Dns => {
                        TransportError::Unreachable(dst.clone())
                    }
                    _ if t.to_string().contains("timed out") => TransportError::Timeout(dst.clone()),
                    _ => TransportError::Other(t.to_string()),
                })
            }
        };
        let mut out = Response::new(resp.status(), Vec::new());
        for name in resp.headers_names() {
            if let Some(value) = resp.header(&name) {
                out.headers.insert(name.to_ascii_lowercase(), value.to_owned());
            }
        }
        resp.into_reader()
            .take(MAX_BODY)
            .read_to_end(&mut out.body)
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(out)
    }
}
