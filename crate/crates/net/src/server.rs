// SPDX-License-Identifier: Apache-2.0

use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{self, StatusCode, Uri};
use axum::Router;
use tokio::sync::oneshot;

use revelio_core::kds::VcekSource;
use revelio_core::node::Node;
use revelio_core::transport::{serve_kds, Method, Request, Response, Transport};

type Handler = Arc<dyn Fn(Request) -> Response + Send + Sync>;

/// Binds a listener so the caller learns its address before building the
/// service that will run on it. Port 0 picks a free port.
pub fn bind(addr: &str) -> io::Result<TcpListener> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Serves the node's endpoints. Requests are handled one at a time; outbound
/// calls the node makes while handling (KDS, leader) go through `transport`.
pub fn node_router<T: Transport + Send + Sync + 'static>(node: Arc<Mutex<Node>>, transport: T) -> Router {
    router(Arc::new(move |req| {
        let mut node = node.lock().unwrap_or_else(|p| p.into_inner());
        node.handle(&req, &transport)
    }))
}

/// `GET /vcek?chip_id=<hex>&tcb=<int>`
pub fn kds_router<K: VcekSource + Send + Sync + 'static>(kds: K) -> Router {
    router(Arc::new(move |req| serve_kds(&kds, &req)))
}

fn router(handler: Handler) -> Router {
    Router::new().fallback(dispatch).with_state(handler)
}

async fn dispatch(State(handler): State<Handler>, method: http::Method, uri: Uri, body: Bytes) -> http::Response<Body> {
    let method = match method {
        http::Method::GET => Method::Get,
        http::Method::POST => Method::Post,
        http::Method::PUT => Method::Put,
        http::Method::DELETE => Method::Delete,
        _ => return into_http(Response::error(405, "method not allowed")),
    };
    let req = Request {
        method,
        path: uri
            .path_and_query()
            .map_or_else(|| uri.path().to_owned(), |pq| pq.as_str().to_owned()),
        body: body.to_vec(),
    };
    match tokio::task::spawn_blocking(move || handler(req)).await {
        Ok(resp) => into_http(resp),
        Err(_) => into_http(Response::error(500, "handler panicked")),
    }
}

fn into_http(resp: Response) -> http::Response<Body> {
    let mut out = http::Response::builder()
        .status(StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR));
    for (name, value) in &resp.headers {
        out = out.header(name, value);
    }
    out.body(Body::from(resp.body))
        .unwrap_or_else(|_| http::Response::new(Body::from("bad response header")))
}

/// A server running on its own runtime thread. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) -> io::Result<()> {
        self.stop.take();
        self.join()
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.join()
    }

    fn join(&mut self) -> io::Result<()> {
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(result)) => result,
            Some(Err(_)) => Err(io::Error::other("server thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = self.join();
    }
}

pub fn serve(listener: TcpListener, app: Router) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = std::thread::Builder::new()
        .name(format!("http-{addr}"))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        // a dropped sender means "run until the process exits"
                        if stopped.await.is_err() {
                            std::future::pending::<()>().await;
                        }
                    })
                    .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        thread: Some(thread),
    })
}
