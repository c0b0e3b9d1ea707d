//! Overpass API client with an on-disk cache keyed by boundary hash.

use super::Boundary;
use crate::error::{Error, Result};
use log::{debug, info, warn};
use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

pub const DEFAULT_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";
pub const CACHE_DIR_ENV: &str = "SYNGRID_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Minimal HTTP POST abstraction so tests can inject failures.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, body: &str) -> std::result::Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(300))
                .build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, body: &str) -> std::result::Result<HttpResponse, String> {
        let resp = match self
            .agent
            .post(url)
            .set("Content-Type", "application/x-www-form-urlencoded")
            .send_string(&format!("data={}", urlencode(body)))
        {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(e.to_string()),
        };
        let status = resp.status();
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

fn urlencode(s: &str) -> String {
    let mut out = String::with_capacity(s.len() * 3);
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

pub struct OverpassClient<T: Transport = UreqTransport> {
    endpoint: String,
    cache_dir: Option<PathBuf>,
    transport: T,
    max_attempts: u32,
    backoff: Duration,
}

impl OverpassClient<UreqTransport> {
    pub fn new(endpoint: impl Into<String>) -> Self {
        OverpassClient::with_transport(endpoint, UreqTransport::default())
    }
}

impl<T: Transport> OverpassClient<T> {
    pub fn with_transport(endpoint: impl Into<String>, transport: T) -> Self {
        OverpassClient {
            endpoint: endpoint.into(),
            cache_dir: None,
            transport,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Base delay; attempt k waits `backoff * 2^(k-1)` before retrying.
    pub fn backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn cache_path(&self, boundary: &Boundary) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.osm.xml", boundary.cache_key())))
    }

    pub fn fetch(&self, boundary: &Boundary) -> Result<Vec<u8>> {
        if let Some(path) = self.cache_path(boundary) {
            if path.exists() {
                debug!("overpass cache hit {}", path.display());
                return Ok(std::fs::read(&path)?);
            }
        }
        let query = overpass_query(boundary);
        let lock = endpoint_lock(&self.endpoint);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

        let mut last_err = String::new();
        for attempt in 1..=self.max_attempts {
            match self.transport.post(&self.endpoint, &query) {
                Ok(resp) if resp.status == 200 => {
                    if let Some(path) = self.cache_path(boundary) {
                        write_cache(&path, &resp.body)?;
                    }
                    info!("fetched {} bytes from {}", resp.body.len(), self.endpoint);
                    return Ok(resp.body);
                }
                Ok(resp) if resp.status == 429 => {
                    return Err(Error::Throttled {
                        endpoint: self.endpoint.clone(),
                    })
                }
                Ok(resp) if (400..500).contains(&resp.status) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message: format!("HTTP {}", resp.status),
                    })
                }
                Ok(resp) => last_err = format!("HTTP {}", resp.status),
                Err(e) => last_err = e,
            }
            warn!("overpass attempt {attempt}/{} failed: {last_err}", self.max_attempts);
            if attempt < self.max_attempts {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
        }
        Err(Error::Transport {
            attempts: self.max_attempts,
            message: last_err,
        })
    }
}

fn write_cache(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn endpoint_lock(endpoint: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|p| p.into_inner());
    map.entry(endpoint.to_string()).or_default().clone()
}

/// Overpass QL selecting highways and buildings inside the polygon.
pub fn overpass_query(boundary: &Boundary) -> String {
    let poly: Vec<String> = boundary
        .vertices()
        .iter()
        .map(|p| format!("{:.7} {:.7}", p.lat, p.lon))
        .collect();
    let poly = poly.join(" ");
    format!(
        "[out:xml][timeout:180];(way[\"highway\"](poly:\"{poly}\");way[\"building\"](poly:\"{poly}\");relation[\"building\"](poly:\"{poly}\"););(._;>;);out body;"
    )
}

/// Fetch with the default cache directory (`$SYNGRID_CACHE_DIR`, else `./cache`).
pub fn fetch_overpass(boundary: &Boundary, endpoint: &str) -> Result<Vec<u8>> {
    let dir = std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cache"));
    OverpassClient::new(endpoint).cache_dir(dir).fetch(boundary)
}
