// SPDX-License-Identifier: Apache-2.0

//! Deterministic in-process network.
//!
//! Calls are delivered synchronously in program order, so the transcript is
//! totally ordered by `seq`. Adversary hooks see every message and may drop,
//! redirect, duplicate or rewrite it.

use std::cell::{Cell, Ref, RefCell};
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use serde::Serialize;

use crate::crypto::{hash256, Digest256};
use crate::transport::{Addr, Request, Response, Transport, TransportError};

/// A deterministic request handler reachable at one address.
pub trait Service {
    fn serve(&mut self, src: &Addr, req: &Request, net: &dyn Transport) -> Response;
}

impl Service for crate::node::Node {
    fn serve(&mut self, _src: &Addr, req: &Request, net: &dyn Transport) -> Response {
        self.handle(req, net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Request,
    Response,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimMessage {
    pub seq: u64,
    pub kind: MessageKind,
    pub src: Addr,
    pub dst: Addr,
    /// `METHOD path` for requests, the status code for responses.
    pub summary: String,
    pub headers: BTreeMap<String, String>,
    #[serde(with = "crate::codec::hex_bytes")]
    pub payload: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tampered_by: Option<String>,
}

pub type RequestRewrite = Rc<dyn Fn(&mut Request)>;
pub type ResponseRewrite = Rc<dyn Fn(&mut Response)>;

#[derive(Clone)]
pub enum HookAction {
    Drop,
    Redirect(Addr),
    /// Delivers the request twice; the caller sees the first response.
    Duplicate,
    RewriteRequest(RequestRewrite),
    RewriteResponse(ResponseRewrite),
}

impl fmt::Debug for HookAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HookAction::Drop => f.write_str("Drop"),
            HookAction::Redirect(a) => write!(f, "Redirect({a})"),
            HookAction::Duplicate => f.write_str("Duplicate"),
            HookAction::RewriteRequest(_) => f.write_str("RewriteRequest"),
            HookAction::RewriteResponse(_) => f.write_str("RewriteResponse"),
        }
    }
}

/// An interception rule. Unset matchers match everything.
#[derive(Debug, Clone)]
pub struct Hook {
    pub name: String,
    pub src: Option<Addr>,
    pub dst: Option<Addr>,
    pub path_prefix: Option<String>,
    pub action: HookAction,
    /// Remaining activations; `None` is unlimited.
    pub remaining: Option<usize>,
}

impl Hook {
    pub fn new(name: impl Into<String>, action: HookAction) -> Self {
        Hook {
            name: name.into(),
            src: None,
            dst: None,
            path_prefix: None,
            action,
            remaining: None,
        }
    }

    pub fn from(mut self, src: impl Into<Addr>) -> Self {
        self.src = Some(src.into());
        self
    }

    pub fn to(mut self, dst: impl Into<Addr>) -> Self {
        self.dst = Some(dst.into());
        self
    }

    pub fn path(mut self, prefix: impl Into<String>) -> Self {
        self.path_prefix = Some(prefix.into());
        self
    }

    pub fn times(mut self, n: usize) -> Self {
        self.remaining = Some(n);
        self
    }

    fn matches(&self, src: &Addr, dst: &Addr, req: &Request) -> bool {
        self.remaining != Some(0)
            && self.src.as_ref().is_none_or(|s| s == src)
            && self.dst.as_ref().is_none_or(|d| d == dst)
            && self
                .path_prefix
                .as_ref()
                .is_none_or(|p| req.path.starts_with(p.as_str()))
    }
}

#[derive(Default)]
pub struct SimNet {
    services: RefCell<BTreeMap<Addr, Rc<RefCell<dyn Service>>>>,
    hooks: RefCell<Vec<Hook>>,
    transcript: RefCell<Vec<SimMessage>>,
    seq: Cell<u64>,
}

impl SimNet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) the service at `addr`.
    pub fn add<S: Service + 'static>(&self, addr: impl Into<Addr>, service: S) -> Rc<RefCell<S>> {
        let handle = Rc::new(RefCell::new(service));
        self.add_shared(addr.into(), handle.clone());
        handle
    }

    pub fn add_shared(&self, addr: Addr, service: Rc<RefCell<dyn Service>>) {
        self.services.borrow_mut().insert(addr, service);
    }

    pub fn remove(&self, addr: &Addr) {
        self.services.borrow_mut().remove(addr);
    }

    pub fn is_up(&self, addr: &Addr) -> bool {
        self.services.borrow().contains_key(addr)
    }

    pub fn add_hook(&self, hook: Hook) {
        self.hooks.borrow_mut().push(hook);
    }

    pub fn clear_hooks(&self) {
        self.hooks.borrow_mut().clear();
    }

    /// This network as seen from `src`.
    pub fn endpoint(&self, src: impl Into<Addr>) -> Endpoint<'_> {
        Endpoint {
            net: self,
            src: src.into(),
        }
    }

    pub fn transcript(&self) -> Ref<'_, Vec<SimMessage>> {
        self.transcript.borrow()
    }

    /// SHA-256 over the JSON transcript.
    pub fn transcript_digest(&self) -> Digest256 {
        hash256(&serde_json::to_vec(&*self.transcript()).expect("transcript serializes"))
    }

    /// The transcript as JSON lines.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript()
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serializes") + "\n")
            .collect()
    }

    fn record_request(&self, kind: MessageKind, src: &Addr, dst: &Addr, req: &Request, tampered_by: Option<String>) {
        self.push(SimMessage {
            seq: 0,
            kind,
            src: src.clone(),
            dst: dst.clone(),
            summary: format!("{} {}", req.method, req.path),
            headers: BTreeMap::new(),
            payload: req.body.clone(),
            tampered_by,
        });
    }

    fn record_response(&self, src: &Addr, dst: &Addr, resp: &Response, tampered_by: Option<String>) {
        self.push(SimMessage {
            seq: 0,
            kind: MessageKind::Response,
            src: src.clone(),
            dst: dst.clone(),
            summary: resp.status.to_string(),
            headers: resp.headers.clone(),
            payload: resp.body.clone(),
            tampered_by,
        });
    }

    fn push(&self, mut msg: SimMessage) {
        msg.seq = self.seq.get();
        self.seq.set(msg.seq + 1);
        self.transcript.borrow_mut().push(msg);
    }

    /// Consumes one activation of every hook matching the request.
    fn matching_hooks(&self, src: &Addr, dst: &Addr, req: &Request) -> Vec<(String, HookAction)> {
        let mut hooks = self.hooks.borrow_mut();
        hooks
            .iter_mut()
            .filter(|h| h.matches(src, dst, req))
            .map(|h| {
                if let Some(n) = h.remaining.as_mut() {
                    *n -= 1;
                }
                (h.name.clone(), h.action.clone())
            })
            .collect()
    }

    fn deliver(&self, src: &Addr, dst: &Addr, mut req: Request) -> Result<Response, TransportError> {
        let mut dst = dst.clone();
        let mut tampered: Vec<String> = Vec::new();
        let mut duplicate = false;
        let mut response_rewrites = Vec::new();
        for (name, action) in self.matching_hooks(src, &dst, &req) {
            match action {
                HookAction::Drop => {
                    self.record_request(MessageKind::Dropped, src, &dst, &req, Some(name));
                    return Err(TransportError::Timeout(dst));
                }
                HookAction::Redirect(to) => {
                    dst = to;
                    tampered.push(name);
                }
                HookAction::Duplicate => {
                    duplicate = true;
                    tampered.push(name);
                }
                HookAction::RewriteRequest(f) => {
                    f(&mut req);
                    tampered.push(name);
                }
                HookAction::RewriteResponse(f) => response_rewrites.push((name, f)),
            }
        }
        let tag = (!tampered.is_empty()).then(|| tampered.join(","));
        self.record_request(MessageKind::Request, src, &dst, &req, tag.clone());
        let mut resp = self.invoke(src, &dst, &req)?;
        if duplicate {
            self.record_request(MessageKind::Request, src, &dst, &req, tag);
            let replay = self.invoke(src, &dst, &req)?;
            self.record_response(&dst, src, &replay, None);
        }
        let mut rewritten = Vec::new();
        for (name, f) in response_rewrites {
            f(&mut resp);
            rewritten.push(name);
        }
        let tag = (!rewritten.is_empty()).then(|| rewritten.join(","));
        self.record_response(&dst, src, &resp, tag);
        Ok(resp)
    }

    fn invoke(&self, src: &Addr, dst: &Addr, req: &Request) -> Result<Response, TransportError> {
        let service = self
            .services
            .borrow()
            .get(dst)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(dst.clone()))?;
        // a service calling back into itself would deadlock a real server
        let Ok(mut svc) = service.try_borrow_mut() else {
            return Err(TransportError::Unreachable(dst.clone()));
        };
        Ok(svc.serve(src, req, &self.endpoint(dst.clone())))
    }
}

/// One address's view of a [`SimNet`].
pub struct Endpoint<'a> {
    net: &'a SimNet,
    src: Addr,
}

impl Endpoint<'_> {
    pub fn addr(&self) -> &Addr {
        &self.src
    }
}

impl Transport for Endpoint<'_> {
    fn call(&self, dst: &Addr, req: Request) -> Result<Response, TransportError> {
        self.net.deliver(&self.src, dst, req)
    }
}
