mod common;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};

use common::{car, kwh, money, owner, request, station};
use eav_core::protocol::{ChargeIntent, ProtocolMessage, SessionOutcome};
use eav_core::registry::RegistryStore;
use eav_core::station::{self, StationConfig, StationError, Transcript, TranscriptEntry};
use eav_core::vehicle::{self, SessionReport};
use eav_core::SharedRegistry;

fn registry(dir: &Path) -> SharedRegistry {
    let mut store = RegistryStore::load(dir).unwrap();
    store
        .register(owner("o1"), car("c1", "o1"), station("s1"))
        .unwrap();
    SharedRegistry::new(store)
}

fn config(dir: &Path) -> StationConfig {
    let mut c = StationConfig::new("s1", money("0.10"), dir);
    c.port = 0;
    c.id_seed = Some(1);
    c
}

fn charge(addr: SocketAddr, car_id: &str, amount: &str) -> SessionReport {
    vehicle::charge(&ChargeIntent {
        request: request("o1", car_id),
        file_name: "test.json".into(),
        kwh: kwh(amount),
        station: addr,
    })
    .unwrap()
}

/// A hand-driven vehicle for sending arbitrary frames.
struct RawClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RawClient {
    fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        Self {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
        }
    }

    fn send(&mut self, value: Value) {
        let mut line = serde_json::to_vec(&value).unwrap();
        line.push(b'\n');
        self.writer.write_all(&line).unwrap();
    }

    fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).unwrap();
    }

    fn recv(&mut self) -> Option<Value> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(serde_json::from_str(&line).unwrap()),
        }
    }

    fn recv_all(&mut self) -> Vec<Value> {
        std::iter::from_fn(|| self.recv()).collect()
    }
}

fn request_json() -> Value {
    serde_json::to_value(request("o1", "c1")).unwrap()
}

#[test]
fn happy_path_records_one_transaction() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();

    let report = charge(handle.local_addr(), "c1", "10");
    let SessionOutcome::Completed { transaction_id } = &report.outcome else {
        panic!("unexpected {:?}", report.outcome);
    };
    let bill = report.bill.as_ref().unwrap();
    assert_eq!(bill.total, money("1.00"));
    drop(handle.shutdown());

    let store = reg.read();
    let txs = store.list_transactions(None, None);
    assert_eq!(txs.len(), 1);
    assert_eq!(&txs[0].id, transaction_id);
    assert_eq!(txs[0].total, money("1.00"));
    assert_eq!(txs[0].bill_id, bill.bill_id);

    // The vehicle saw the station's closing frame too.
    let last = report.transcript.last().unwrap();
    assert_eq!(
        last.1,
        ProtocolMessage::Close {
            reason: "completed".into()
        }
    );
}

#[test]
fn transcript_mirrors_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let handle = station::spawn(config(dir.path()), registry(dir.path())).unwrap();
    let report = charge(handle.local_addr(), "c1", "2.5");
    drop(handle.shutdown());

    let transcripts = Transcript::read_all(dir.path()).unwrap();
    assert_eq!(transcripts.len(), 1);
    let t = &transcripts[0];
    assert_eq!(t.session_id(), Some("s1-000001"));
    assert_eq!(t.outcome(), Some(&report.outcome));
    assert!(matches!(
        t.entries.first(),
        Some(TranscriptEntry::Meta { .. })
    ));
    assert!(matches!(
        t.entries.last(),
        Some(TranscriptEntry::Outcome { .. })
    ));

    // Frames the vehicle sent are the station's inbound, in order, and vice versa.
    let sent: Vec<Value> = report
        .transcript
        .iter()
        .filter(|(s, _)| *s == eav_core::protocol::Sender::Vehicle)
        .map(|(_, m)| serde_json::to_value(m).unwrap())
        .collect();
    let received: Vec<Value> = report
        .transcript
        .iter()
        .filter(|(s, _)| *s == eav_core::protocol::Sender::Station)
        .map(|(_, m)| serde_json::to_value(m).unwrap())
        .collect();
    assert_eq!(t.inbound().into_iter().cloned().collect::<Vec<_>>(), sent);
    assert_eq!(
        t.outbound().into_iter().cloned().collect::<Vec<_>>(),
        received
    );
    assert!(t.started_at() <= t.finished_at());
}

#[test]
fn request_document_is_archived_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let handle = station::spawn(config(dir.path()), registry(dir.path())).unwrap();
    let mut client = RawClient::connect(handle.local_addr());
    client.send(json!({"type": "file_name", "name": "../../etc/test.json"}));
    // Unusual spacing and key order must survive archiving.
    let raw_request = r#"{ "owner_id":"o1","owner_name":"Ada Lovelace","owner_email":"ada@example.org","owner_phone":"+44 20 0000","car_id":"c1","car_model_name":"Model E","car_model_year":2019,"car_date_purchased":"2019-05-01" }"#;
    client
        .send_raw(format!("{{\"type\":\"file_content\",\"request\":{raw_request}}}\n").as_bytes());
    assert_eq!(client.recv().unwrap()["type"], "auth_ok");
    drop(client);
    drop(handle.shutdown());

    let archived = fs::read(dir.path().join("archive").join("s1-000001_etc_test.json")).unwrap();
    assert_eq!(archived, raw_request.as_bytes());
}

#[test]
fn denial_then_service_on_same_port() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
    let addr = handle.local_addr();

    let mut client = RawClient::connect(addr);
    client.send(json!({"type": "file_name", "name": "test.json"}));
    let mut unknown = request_json();
    unknown["car_id"] = json!("c404");
    client.send(json!({"type": "file_content", "request": unknown}));
    let frames = client.recv_all();
    let types: Vec<_> = frames.iter().map(|f| f["type"].as_str().unwrap()).collect();
    assert_eq!(types, ["auth_denied", "close"]);
    assert_eq!(frames[0]["reason"], "not-registered");
    assert_eq!(frames[1]["reason"], "denied");
    assert!(reg.read().list_transactions(None, None).is_empty());

    assert!(charge(addr, "c1", "1").is_completed());
    drop(handle.shutdown());
    assert_eq!(reg.read().list_transactions(None, None).len(), 1);
}

#[test]
fn detail_mismatch_is_denied() {
    let dir = tempfile::tempdir().unwrap();
    let handle = station::spawn(config(dir.path()), registry(dir.path())).unwrap();
    let mut client = RawClient::connect(handle.local_addr());
    client.send(json!({"type": "file_name", "name": "test.json"}));
    let mut altered = request_json();
    altered["car_model_name"] = json!("Model F");
    client.send(json!({"type": "file_content", "request": altered}));
    let frames = client.recv_all();
    assert_eq!(frames[0]["type"], "auth_denied");
    assert_eq!(frames[0]["reason"], "detail-mismatch");
}

#[test]
fn wrong_payment_is_rejected_without_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
    let mut client = RawClient::connect(handle.local_addr());
    client.send(json!({"type": "file_name", "name": "test.json"}));
    client.send(json!({"type": "file_content", "request": request_json()}));
    assert_eq!(client.recv().unwrap()["type"], "auth_ok");
    assert_eq!(client.recv().unwrap()["type"], "amount_request");
    client.send(json!({"type": "amount", "kwh": 10.0}));
    let bill = client.recv().unwrap();
    assert_eq!(bill["total"], json!(1.0));
    client.send(json!({"type": "payment", "bill_id": bill["bill_id"], "amount": 0.99}));
    let close = client.recv().unwrap();
    assert_eq!(
        close,
        json!({"type": "close", "reason": "payment_mismatch"})
    );
    drop(client);
    drop(handle.shutdown());
    assert!(reg.read().list_transactions(None, None).is_empty());
}

#[test]
fn garbage_closes_with_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
    let mut client = RawClient::connect(handle.local_addr());
    client.send_raw(b"not json\n");
    assert_eq!(
        client.recv().unwrap(),
        json!({"type": "close", "reason": "protocol_error"})
    );

    // Out of order: payment before anything else.
    let mut client = RawClient::connect(handle.local_addr());
    client.send(json!({"type": "payment", "bill_id": "b", "amount": 1.0}));
    assert_eq!(client.recv().unwrap()["reason"], "protocol_error");

    // Oversized frame.
    let mut client = RawClient::connect(handle.local_addr());
    client.send_raw(&vec![b'x'; 70_000]);
    client.send_raw(b"\n");
    assert_eq!(client.recv().unwrap()["reason"], "protocol_error");

    assert!(charge(handle.local_addr(), "c1", "1").is_completed());
    drop(handle.shutdown());
    assert_eq!(reg.read().list_transactions(None, None).len(), 1);
}

#[test]
fn idle_vehicle_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.session_timeout = Duration::from_millis(200);
    let handle = station::spawn(cfg, registry(dir.path())).unwrap();
    let mut client = RawClient::connect(handle.local_addr());
    client.send(json!({"type": "file_name", "name": "test.json"}));
    assert_eq!(
        client.recv().unwrap(),
        json!({"type": "close", "reason": "timeout"})
    );
    assert!(charge(handle.local_addr(), "c1", "1").is_completed());
    drop(handle.shutdown());

    let t = &Transcript::read_all(dir.path()).unwrap()[0];
    assert_eq!(
        t.outcome(),
        Some(&SessionOutcome::protocol_error("timeout"))
    );
}

#[test]
fn disconnect_mid_session_leaves_no_record() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
    {
        let mut client = RawClient::connect(handle.local_addr());
        client.send(json!({"type": "file_name", "name": "test.json"}));
        client.send(json!({"type": "file_content", "request": request_json()}));
        assert_eq!(client.recv().unwrap()["type"], "auth_ok");
        assert_eq!(client.recv().unwrap()["type"], "amount_request");
        client.send(json!({"type": "amount", "kwh": 3.0}));
        assert_eq!(client.recv().unwrap()["type"], "bill");
    }
    assert!(charge(handle.local_addr(), "c1", "1").is_completed());
    drop(handle.shutdown());
    let txs = reg.read().list_transactions(None, None);
    assert_eq!(txs.len(), 1);
    assert_eq!(txs[0].kwh, kwh("1"));

    let first = &Transcript::read_all(dir.path()).unwrap()[0];
    assert_eq!(
        first.outcome(),
        Some(&SessionOutcome::protocol_error("vehicle disconnected"))
    );
}

#[test]
fn every_record_has_a_completed_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
    let addr = handle.local_addr();
    for (car_id, amount) in [
        ("c1", "1"),
        ("c9", "2"),
        ("c1", "0.5"),
        ("c1", "1500"),
        ("c1", "3"),
    ] {
        charge(addr, car_id, amount);
    }
    drop(handle.shutdown());

    let completed: Vec<String> = Transcript::read_all(dir.path())
        .unwrap()
        .iter()
        .filter_map(|t| match t.outcome() {
            Some(SessionOutcome::Completed { transaction_id }) => Some(transaction_id.clone()),
            _ => None,
        })
        .collect();
    let ledger: Vec<String> = reg
        .read()
        .list_transactions(None, None)
        .into_iter()
        .map(|t| t.id)
        .collect();
    assert_eq!(completed, ledger);
    assert_eq!(ledger.len(), 3);
}

#[test]
fn restart_continues_session_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    for _ in 0..2 {
        let handle = station::spawn(config(dir.path()), reg.clone()).unwrap();
        charge(handle.local_addr(), "c1", "1");
        drop(handle.shutdown());
    }
    let ids: Vec<_> = Transcript::read_all(dir.path())
        .unwrap()
        .iter()
        .map(|t| t.session_id().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["s1-000001", "s1-000002"]);
}

#[test]
fn setup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let mut cfg = config(dir.path());
    cfg.station_id = "s404".into();
    assert!(matches!(
        station::spawn(cfg, reg.clone()),
        Err(StationError::UnknownStation(_))
    ));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg = config(dir.path());
    cfg.port = taken.local_addr().unwrap().port();
    assert!(matches!(
        station::spawn(cfg, reg.clone()),
        Err(StationError::BindError { .. })
    ));

    let mut cfg = config(dir.path());
    cfg.tariff = money("0");
    assert!(matches!(
        station::spawn(cfg, reg),
        Err(StationError::InvalidConfig(_))
    ));
}
