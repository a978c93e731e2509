use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use nses_core::dist::protocol::{read_frame, write_frame, Envelope, Message};
use nses_core::dist::{run_worker, Cluster, SequentialBackend, DEFAULT_DEADLINE};
use nses_core::es::NoiseTable;
use nses_core::experiment::{Run, RunConfig};
use nses_core::parallel::Execution;

fn small_run() -> (RunConfig, Arc<NoiseTable>) {
    let cfg = RunConfig::from_text("algorithm = nsr-es\niterations = 3\npop_pairs = 12\nseed = 4\nnoise_len = 200000\n").unwrap();
    let table = Arc::new(NoiseTable::build(cfg.noise_seed, cfg.noise_len));
    (cfg, table)
}

fn thetas(run: &Run) -> Vec<Vec<f64>> {
    run.coordinator.thetas().iter().map(|t| t.as_slice().to_vec()).collect()
}

fn inline_reference(cfg: &RunConfig, table: &Arc<NoiseTable>) -> Vec<Vec<f64>> {
    let mut run = Run::start(cfg, Some(table.clone()), Execution::Sequential).unwrap();
    let mut backend = SequentialBackend::new(run.coordinator.ctx.clone(), 1, Execution::Sequential);
    while !run.is_finished() {
        run.step(&mut backend).unwrap();
    }
    thetas(&run)
}

/// Completes the handshake and returns the stream; the caller decides how
/// badly to behave afterwards.
fn fake_worker(addr: String) -> TcpStream {
    let mut s = TcpStream::connect(addr).unwrap();
    write_frame(&mut s, &Envelope::new(Message::Hello { worker_id: None, setup: None })).unwrap();
    read_frame(&mut s).unwrap();
    s
}

#[test]
fn tcp_workers_match_inline_run() {
    let (cfg, table) = small_run();
    let reference = inline_reference(&cfg, &table);

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let mut run = Run::start(&cfg, Some(table), Execution::Sequential).unwrap();
    let workers: Vec<_> = (0..2)
        .map(|_| {
            let a = addr.clone();
            thread::spawn(move || run_worker(&a, Execution::Sequential))
        })
        .collect();
    let mut cluster = Cluster::listen(&listener, &run.setup(), 2, DEFAULT_DEADLINE).unwrap();
    while !run.is_finished() {
        let rec = run.step(&mut cluster).unwrap();
        assert!(rec.dropped.is_empty());
    }
    drop(cluster);
    for w in workers {
        w.join().unwrap().unwrap();
    }
    assert_eq!(thetas(&run), reference);
}

#[test]
fn crashed_worker_is_retired_and_its_pairs_dropped() {
    let (cfg, table) = small_run();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let mut run = Run::start(&cfg, Some(table), Execution::Sequential).unwrap();
    let a = addr.clone();
    let real = thread::spawn(move || run_worker(&a, Execution::Sequential));
    let crasher = thread::spawn(move || {
        let mut s = fake_worker(addr);
        // take the assignment, then vanish
        let _ = read_frame(&mut s);
    });
    let mut cluster = Cluster::listen(&listener, &run.setup(), 2, DEFAULT_DEADLINE).unwrap();

    let first = run.step(&mut cluster).unwrap();
    crasher.join().unwrap();
    assert_eq!(first.dropped.len(), 6, "{first:?}");
    let parity = first.dropped[0] % 2;
    assert!(first.dropped.iter().all(|p| p % 2 == parity));
    assert_eq!(first.pairs_used, 6);
    assert!(cluster.log.iter().any(|l| l.contains("retired")), "{:?}", cluster.log);

    let second = run.step(&mut cluster).unwrap();
    assert!(second.dropped.is_empty());
    assert_eq!(second.pairs_used, 12);
    drop(cluster);
    real.join().unwrap().unwrap();
}

#[test]
fn stragglers_are_dropped_at_the_deadline() {
    let (cfg, table) = small_run();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let mut run = Run::start(&cfg, Some(table), Execution::Sequential).unwrap();
    let a = addr.clone();
    let real = thread::spawn(move || run_worker(&a, Execution::Sequential));
    let (tx, rx) = std::sync::mpsc::channel::<()>();
    let silent = thread::spawn(move || {
        let mut s = fake_worker(addr);
        let mut seen = Vec::new();
        while let Ok(env) = read_frame(&mut s) {
            let done = matches!(env.message, Message::Shutdown);
            seen.push(env.message);
            if done {
                break;
            }
        }
        let _ = rx.recv_timeout(Duration::from_secs(1));
        seen
    });
    let mut cluster = Cluster::listen(&listener, &run.setup(), 2, Duration::from_millis(500)).unwrap();
    let rec = run.step(&mut cluster).unwrap();
    assert_eq!(rec.dropped.len(), 6);
    drop(cluster);
    tx.send(()).ok();
    let seen = silent.join().unwrap();
    assert!(seen.iter().any(|m| matches!(m, Message::Assign(_))));
    assert!(seen.iter().any(|m| matches!(m, Message::Drop { iteration: 1, .. })), "{seen:?}");
    real.join().unwrap().unwrap();
}

#[test]
fn thread_cluster_survives_worker_counts_above_pairs() {
    let (mut cfg, table) = small_run();
    let reference = inline_reference(&cfg, &table);
    cfg.workers = 16;
    let mut run = Run::start(&cfg, Some(table), Execution::Sequential).unwrap();
    let mut backend = run.backend(&nses_core::experiment::BackendChoice::Threads, Execution::Sequential).unwrap();
    while !run.is_finished() {
        run.step(backend.as_mut()).unwrap();
    }
    backend.shutdown().unwrap();
    assert_eq!(thetas(&run), reference);
}
