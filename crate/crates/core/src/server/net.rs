//! TCP serving and a blocking client.

use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread;

use log::{debug, info, warn};

use super::manifest::DatasetManifest;
use super::pipeline::{Pipeline, TileBatch, TileRecord, TileStream};
use super::protocol::{
    decode_batch, encode_batch, read_frame, write_error, write_frame, ErrorBody, Hello, ProtocolError,
    CODE_INTERNAL, CODE_PROTOCOL, CODE_SAMPLING, FRAME_BATCH, FRAME_ERROR, FRAME_HELLO, FRAME_NEXT,
    MAX_CLIENT_FRAME, MAX_SERVER_FRAME,
};
use super::{ServerError, StreamConfig};
use crate::par::Exec;
use crate::patcher::PatchError;

/// Counters shared by all connections of a server.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub connections: AtomicU64,
    /// Batches produced, including prefetched ones not yet sent.
    pub batches_generated: AtomicU64,
    pub batches_sent: AtomicU64,
}

impl ServerStats {
    pub fn generated(&self) -> u64 {
        self.batches_generated.load(Ordering::SeqCst)
    }

    pub fn sent(&self) -> u64 {
        self.batches_sent.load(Ordering::SeqCst)
    }
}

pub struct Server {
    listener: TcpListener,
    pipeline: Arc<Pipeline>,
    stats: Arc<ServerStats>,
}

/// A server running on a background thread.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub stats: Arc<ServerStats>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Debug, pipeline: Arc<Pipeline>) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServerError::Bind {
            addr: format!("{addr:?}"),
            source,
        })?;
        Ok(Server {
            listener,
            pipeline,
            stats: Arc::default(),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServerError> {
        Ok(self.listener.local_addr()?)
    }

    pub fn stats(&self) -> Arc<ServerStats> {
        Arc::clone(&self.stats)
    }

    /// Accepts connections forever, one thread per connection.
    pub fn run(self) -> Result<(), ServerError> {
        info!("serving tiles on {}", self.local_addr()?);
        for conn in self.listener.incoming() {
            let conn = match conn {
                Ok(c) => c,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let pipeline = Arc::clone(&self.pipeline);
            let stats = Arc::clone(&self.stats);
            stats.connections.fetch_add(1, Ordering::SeqCst);
            thread::spawn(move || {
                let peer = conn.peer_addr().ok();
                if let Err(e) = handle_connection(conn, &pipeline, &stats) {
                    debug!("connection {peer:?} ended: {e}");
                }
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle, ServerError> {
        let handle = ServerHandle {
            addr: self.local_addr()?,
            stats: self.stats(),
        };
        thread::spawn(move || self.run());
        Ok(handle)
    }
}

/// Builds the pipeline and serves it on `addr` until the process exits.
pub fn serve(config: StreamConfig, manifest: &DatasetManifest, addr: &str) -> Result<(), ServerError> {
    let pipeline = Arc::new(Pipeline::new(config, manifest, Exec::default())?);
    Server::bind(addr, pipeline)?.run()
}

fn error_code(e: &ServerError) -> &'static str {
    match e {
        ServerError::Patch(PatchError::MaxAttemptsExceeded { .. }) => CODE_SAMPLING,
        ServerError::Protocol(_) => CODE_PROTOCOL,
        _ => CODE_INTERNAL,
    }
}

/// Hands out batches, either generated on demand or prefetched by a
/// producer thread that never holds more than `depth` batches.
enum BatchSource {
    OnDemand(TileStream, Arc<ServerStats>),
    Prefetch(Receiver<Result<TileBatch, ServerError>>),
}

impl BatchSource {
    fn new(mut stream: TileStream, depth: usize, stats: Arc<ServerStats>) -> Self {
        if depth == 0 {
            return BatchSource::OnDemand(stream, stats);
        }
        // The producer holds one batch while blocked in `send`, so the
        // channel itself gets `depth - 1` slots.
        let (tx, rx) = sync_channel(depth - 1);
        thread::spawn(move || loop {
            let batch = stream.next_batch();
            stats.batches_generated.fetch_add(1, Ordering::SeqCst);
            let failed = batch.is_err();
            if tx.send(batch).is_err() || failed {
                break;
            }
        });
        BatchSource::Prefetch(rx)
    }

    fn next(&mut self) -> Result<TileBatch, ServerError> {
        match self {
            BatchSource::OnDemand(stream, stats) => {
                let b = stream.next_batch();
                stats.batches_generated.fetch_add(1, Ordering::SeqCst);
                b
            }
            BatchSource::Prefetch(rx) => rx
                .recv()
                .unwrap_or_else(|_| Err(ServerError::Config("batch producer stopped".into()))),
        }
    }
}

fn handle_connection(conn: TcpStream, pipeline: &Arc<Pipeline>, stats: &Arc<ServerStats>) -> Result<(), ServerError> {
    let _ = conn.set_nodelay(true);
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut writer = BufWriter::new(conn);

    let reject = |w: &mut BufWriter<TcpStream>, e: ProtocolError| -> Result<(), ServerError> {
        if !matches!(e, ProtocolError::Closed) {
            let _ = write_error(w, CODE_PROTOCOL, &e.to_string());
        }
        Err(e.into())
    };

    let hello = match read_frame(&mut reader, MAX_CLIENT_FRAME) {
        Ok((FRAME_HELLO, body)) => match Hello::decode(&body) {
            Ok(h) => h,
            Err(e) => return reject(&mut writer, e),
        },
        Ok((t, _)) => return reject(&mut writer, ProtocolError::Malformed(format!("expected HELLO, got frame type {t:#04x}"))),
        Err(e) => return reject(&mut writer, e),
    };
    let cfg = pipeline.config();
    let batch_size = if hello.batch_size == 0 { cfg.batch_size } else { hello.batch_size };
    let seed = hello.seed.unwrap_or(cfg.seed);
    write_frame(
        &mut writer,
        FRAME_HELLO,
        &Hello {
            batch_size,
            seed: Some(seed),
        }
        .encode(),
    )?;

    let mut source = BatchSource::new(pipeline.stream(seed, batch_size), cfg.prefetch_batches, Arc::clone(stats));
    loop {
        match read_frame(&mut reader, MAX_CLIENT_FRAME) {
            Ok((FRAME_NEXT, body)) if body.is_empty() => match source.next() {
                Ok(batch) => {
                    write_frame(&mut writer, FRAME_BATCH, &encode_batch(&batch.tiles))?;
                    stats.batches_sent.fetch_add(1, Ordering::SeqCst);
                }
                Err(e) => {
                    let _ = write_error(&mut writer, error_code(&e), &e.to_string());
                    return Err(e);
                }
            },
            Ok((FRAME_NEXT, _)) => return reject(&mut writer, ProtocolError::Malformed("NEXT carries no body".into())),
            Ok((t, _)) => return reject(&mut writer, ProtocolError::Malformed(format!("unexpected frame type {t:#04x}"))),
            Err(ProtocolError::Closed) => return Ok(()),
            Err(e) => return reject(&mut writer, e),
        }
    }
}

/// Blocking pull client. Validates batch sizes and index continuity.
pub struct TileClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    batch_size: u32,
    seed: u64,
    next_index: u64,
}

impl TileClient {
    pub fn connect(addr: impl ToSocketAddrs, batch_size: u32, seed: Option<u64>) -> Result<Self, ServerError> {
        let conn = TcpStream::connect(addr)?;
        let _ = conn.set_nodelay(true);
        let mut writer = conn.try_clone()?;
        let mut reader = BufReader::new(conn);
        write_frame(&mut writer, FRAME_HELLO, &Hello { batch_size, seed }.encode())?;
        let reply = match read_frame(&mut reader, MAX_CLIENT_FRAME) {
            Ok((FRAME_HELLO, body)) => Hello::decode(&body).map_err(|e| ServerError::Handshake(e.to_string()))?,
            Ok((FRAME_ERROR, body)) => return Err(remote_error(&body)),
            Ok((t, _)) => return Err(ServerError::Handshake(format!("reply has frame type {t:#04x}"))),
            Err(e) => return Err(ServerError::Handshake(e.to_string())),
        };
        let seed = reply
            .seed
            .ok_or_else(|| ServerError::Handshake("server did not report its seed".into()))?;
        if batch_size != 0 && reply.batch_size != batch_size {
            return Err(ServerError::Handshake(format!(
                "asked for batch size {batch_size}, server replied {}",
                reply.batch_size
            )));
        }
        Ok(TileClient {
            reader,
            writer,
            batch_size: reply.batch_size,
            seed,
            next_index: 0,
        })
    }

    pub fn batch_size(&self) -> u32 {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Requests and receives one batch.
    pub fn next_batch(&mut self) -> Result<Vec<TileRecord>, ServerError> {
        write_frame(&mut self.writer, FRAME_NEXT, &[])?;
        let tiles = match read_frame(&mut self.reader, MAX_SERVER_FRAME)? {
            (FRAME_BATCH, body) => decode_batch(&body)?,
            (FRAME_ERROR, body) => return Err(remote_error(&body)),
            (t, _) => return Err(ProtocolError::Malformed(format!("unexpected frame type {t:#04x}")).into()),
        };
        if tiles.len() != self.batch_size as usize {
            return Err(ProtocolError::Malformed(format!("batch of {} tiles, expected {}", tiles.len(), self.batch_size)).into());
        }
        for t in &tiles {
            if t.meta.tile_index != self.next_index {
                return Err(ProtocolError::Malformed(format!(
                    "tile index {} where {} was expected",
                    t.meta.tile_index, self.next_index
                ))
                .into());
            }
            self.next_index += 1;
        }
        Ok(tiles)
    }

    /// Writes raw bytes to the server. Used to exercise error handling.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ServerError> {
        self.writer.write_all(bytes)?;
        self.writer.flush()?;
        Ok(())
    }

    /// Reads the next frame as-is.
    pub fn read_raw_frame(&mut self) -> Result<(u8, Vec<u8>), ServerError> {
        Ok(read_frame(&mut self.reader, MAX_SERVER_FRAME)?)
    }
}

fn remote_error(body: &[u8]) -> ServerError {
    match serde_json::from_slice::<ErrorBody>(body) {
        Ok(e) => ServerError::Remote {
            code: e.code,
            message: e.message,
        },
        Err(e) => ProtocolError::Malformed(format!("undecodable ERROR body: {e}")).into(),
    }
}
