//! TCP bridge exposing a [`Bus`] to out-of-process peers.
//!
//! On connect the server sends one handshake frame whose body is a JSON map
//! `topic -> schema`. After that it forwards every message on every topic
//! advertised at connect time, and accepts inbound message frames which are
//! republished on the bus (the inbound `seq` is ignored; the bus assigns its
//! own).

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde_json::Value;

use super::frame::{encode_body, read_body, read_frame, FrameError};
use super::{Bus, BusMessage, Schema, TopicName};

pub struct TcpBridge {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl TcpBridge {
    /// Binds `addr` and starts serving in background threads.
    pub fn spawn<A: ToSocketAddrs>(bus: Bus, addr: A) -> io::Result<TcpBridge> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let accept_stop = stop.clone();
        let accept = thread::Builder::new()
            .name("bus-bridge-accept".into())
            .spawn(move || {
                for stream in listener.incoming() {
                    if accept_stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(stream) => {
                            let bus = bus.clone();
                            thread::spawn(move || {
                                if let Err(e) = serve_peer(bus, stream) {
                                    log::warn!("bridge peer closed with error: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("bridge accept failed: {e}"),
                    }
                }
            })?;
        Ok(TcpBridge {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting new peers. Existing peers run until they disconnect.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for TcpBridge {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn serve_peer(bus: Bus, stream: TcpStream) -> Result<(), FrameError> {
    stream.set_nodelay(true)?;
    let schemas = bus.schemas();
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    {
        let body = serde_json::to_vec(&schemas).expect("schemas serialize");
        writer.lock().unwrap().write_all(&encode_body(&body))?;
    }

    for topic in schemas.keys() {
        let sub = match bus.subscribe(topic) {
            Ok(sub) => sub,
            Err(e) => {
                log::warn!("bridge could not subscribe to {topic}: {e}");
                continue;
            }
        };
        let writer = writer.clone();
        thread::spawn(move || {
            for msg in sub {
                let frame = super::encode_frame(&msg);
                if writer.lock().unwrap().write_all(&frame).is_err() {
                    break;
                }
            }
        });
    }

    let mut reader = stream;
    loop {
        match read_frame(&mut reader) {
            Ok(Some(msg)) => {
                if let Err(e) = bus.publish(&msg.topic, msg.payload) {
                    log::warn!("bridge rejected inbound message: {e}");
                }
            }
            Ok(None) => break,
            Err(FrameError::FrameMalformed(e)) => log::warn!("bridge skipped malformed frame: {e}"),
            Err(e) => {
                let _ = reader.shutdown(Shutdown::Both);
                return Err(e);
            }
        }
    }
    let _ = reader.shutdown(Shutdown::Both);
    Ok(())
}

/// Minimal client for the bridge protocol.
pub struct BridgeClient {
    stream: TcpStream,
    schemas: BTreeMap<TopicName, Schema>,
}

impl BridgeClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<BridgeClient, FrameError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let body = read_body(&mut stream)?.ok_or(FrameError::FrameTruncated {
            needed: 4,
            available: 0,
        })?;
        let schemas =
            serde_json::from_slice(&body).map_err(|e| FrameError::FrameMalformed(e.to_string()))?;
        Ok(BridgeClient { stream, schemas })
    }

    /// Schemas announced by the server at handshake.
    pub fn schemas(&self) -> &BTreeMap<TopicName, Schema> {
        &self.schemas
    }

    pub fn publish(&mut self, topic: &TopicName, payload: Value) -> Result<(), FrameError> {
        let msg = BusMessage {
            topic: topic.clone(),
            seq: 0,
            payload,
        };
        self.stream.write_all(&super::encode_frame(&msg))?;
        Ok(())
    }

    /// Blocks for the next forwarded message; `None` when the server hangs up.
    pub fn recv(&mut self) -> Result<Option<BusMessage>, FrameError> {
        read_frame(&mut self.stream)
    }

    pub fn set_read_timeout(&self, timeout: Option<std::time::Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(timeout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{advertise_gateway_topics, topics};
    use serde_json::json;
    use std::time::Duration;

    #[test]
    fn handshake_forward_and_inbound_publish() {
        let bus = Bus::new();
        advertise_gateway_topics(&bus).unwrap();
        let odom = TopicName::new(topics::BASE_ODOM).unwrap();
        let cmd = TopicName::new(topics::BASE_CMD_VEL).unwrap();
        bus.publish(&odom, json!({"x":0.0,"y":0.0,"theta":0.0,"theta_deg":0.0}))
            .unwrap();

        let bridge = TcpBridge::spawn(bus.clone(), "127.0.0.1:0").unwrap();
        let mut client = BridgeClient::connect(bridge.local_addr()).unwrap();
        client
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        assert_eq!(client.schemas().len(), 7);
        assert_eq!(client.schemas()[&cmd], Schema::velocity_command());

        // Latched odom arrives first.
        let first = client.recv().unwrap().unwrap();
        assert_eq!(first.topic, odom);

        let local = bus.subscribe(&cmd).unwrap();
        client
            .publish(&cmd, json!({"v_x":0.05,"omega":0.0,"duration":5.0}))
            .unwrap();
        let got = local.recv_timeout(Duration::from_secs(5)).unwrap().unwrap();
        assert_eq!(got.seq, 1);
        assert_eq!(got.payload["v_x"], json!(0.05));

        // The echo on cmd_vel comes back to the peer too.
        let echoed = client.recv().unwrap().unwrap();
        assert_eq!(echoed.topic, cmd);
        bridge.shutdown();
    }
}
