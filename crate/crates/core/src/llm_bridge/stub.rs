//! Scripted local HTTP endpoint for offline runs and tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

use super::prompt::QUERY_MARKER;
use super::BridgeError;
use crate::blocksim::{parse_state_text, serialize_state_text, BlocksWorld, State};
use crate::model_iface::{oracle_affordance, AffordanceModel};

type Handler = dyn Fn(usize, &str) -> (u16, String) + Send + Sync;

/// Serves one request per connection on a background thread. The handler
/// receives the 0-based request index and the raw request body and returns a
/// status code and response body.
pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<String>>>,
    accept: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(usize, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().expect("local addr");
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let counter = Arc::new(AtomicUsize::new(0));
        let accept = {
            let (stop, requests) = (stop.clone(), requests.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (handler, requests, counter) = (handler.clone(), requests.clone(), counter.clone());
                    thread::spawn(move || {
                        let _ = serve(stream, &*handler, &requests, &counter);
                    });
                }
            })
        };
        Self {
            addr,
            stop,
            requests,
            accept: Some(accept),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Request bodies received so far, in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

fn serve(
    stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<String>>,
    counter: &AtomicUsize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    let mut first = true;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end();
        if line.is_empty() {
            if first {
                continue;
            }
            break;
        }
        first = false;
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let body = String::from_utf8_lossy(&body).into_owned();
    let index = counter.fetch_add(1, Ordering::SeqCst);
    requests.lock().unwrap().push(body.clone());
    let (status, reply) = handler(index, &body);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

/// Text of the state section that follows `label` in a prompt.
fn section_after<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    let start = prompt.find(label)? + label.len();
    let rest = prompt[start..].trim_start_matches('\n');
    let end = ["\n\n", "\nAction"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

/// A stand-in language model that answers bridge prompts with the simulator:
/// affordance prompts get the oracle affordances, dynamics prompts get the
/// true next state. Unrecognised prompts produce an error.
pub fn simulator_completion(world: BlocksWorld) -> impl Fn(&str) -> Result<String, BridgeError> + Send + Sync {
    move |prompt: &str| {
        let bad = || BridgeError::MalformedResponse("unrecognised prompt".into());
        if let Some(query) = prompt.split(QUERY_MARKER).nth(1) {
            let state_text = section_after(query, "State:\n").ok_or_else(bad)?;
            let state: State = parse_state_text(state_text).map_err(|_| bad())?;
            let action_line = query.lines().find_map(|l| l.strip_prefix("Action: ")).ok_or_else(bad)?;
            let action = super::parse_actions(action_line, &state)?.actions[0];
            Ok(serialize_state_text(&world.transition(&state, &action).next_state))
        } else {
            let state_text = section_after(prompt, "Current state:\n").ok_or_else(bad)?;
            let state = parse_state_text(state_text).map_err(|_| bad())?;
            let m = prompt
                .rsplit("exactly ")
                .next()
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse().ok())
                .ok_or_else(bad)?;
            let actions = oracle_affordance(world).afforded(&state, m);
            Ok(actions.iter().map(|a| format!("{a}\n")).collect())
        }
    }
}

/// Wraps [`simulator_completion`] as an HTTP handler speaking the bridge's
/// JSON contract.
pub fn simulator_handler(world: BlocksWorld) -> impl Fn(usize, &str) -> (u16, String) + Send + Sync {
    let complete = simulator_completion(world);
    move |_, body| {
        let prompt = serde_json::from_str::<Value>(body)
            .ok()
            .and_then(|v| v.get("prompt").and_then(Value::as_str).map(String::from));
        match prompt.map(|p| complete(&p)) {
            Some(Ok(text)) => (200, json!({ "completion": text }).to_string()),
            _ => (400, json!({ "error": "bad request" }).to_string()),
        }
    }
}
