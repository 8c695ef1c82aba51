use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use aquafuse_cli::commands::cmd_fetch;
use aquafuse_cli::config::SubsetName;
use aquafuse_cli::dataset::{fetch_dataset, sha256_hex, DatasetManifest, HttpFetcher, ManifestEntry};

/// Minimal HTTP/1.1 file server over a shared path -> bytes table.
struct Server {
    base: String,
    hits: Arc<AtomicUsize>,
    files: Arc<Mutex<HashMap<String, Vec<u8>>>>,
}

impl Server {
    fn start(files: HashMap<String, Vec<u8>>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let files = Arc::new(Mutex::new(files));
        let (h, f) = (hits.clone(), files.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request = String::new();
                if reader.read_line(&mut request).is_err() {
                    continue;
                }
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                }
                h.fetch_add(1, Ordering::SeqCst);
                let path = request.split_whitespace().nth(1).unwrap_or("/").trim_start_matches('/').to_string();
                let body = f.lock().unwrap().get(&path).cloned();
                let _ = match body {
                    Some(b) => {
                        let _ = write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", b.len());
                        stream.write_all(&b)
                    }
                    None => stream.write_all(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"),
                };
            }
        });
        Self { base, hits, files }
    }

    fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn dataset() -> (HashMap<String, Vec<u8>>, Vec<ManifestEntry>) {
    let layout = [
        ("g1.png", SubsetName::Green),
        ("g2.png", SubsetName::Green),
        ("b1.png", SubsetName::Blue),
        ("h1.png", SubsetName::Haze),
        ("h2.png", SubsetName::Haze),
    ];
    let mut files = HashMap::new();
    let mut entries = Vec::new();
    for (i, (name, subset)) in layout.iter().enumerate() {
        let bytes = format!("image {i} bytes").into_bytes();
        let path = format!("{}/{name}", subset.dir());
        entries.push(ManifestEntry {
            file: name.to_string(),
            path: path.clone(),
            subset: *subset,
            sha256: sha256_hex(&bytes),
        });
        files.insert(path, bytes);
    }
    (files, entries)
}

fn manifest(base_url: &str, entries: Vec<ManifestEntry>) -> DatasetManifest {
    DatasetManifest {
        name: "Mini".into(),
        source: "test".into(),
        base_url: base_url.into(),
        expected_count: entries.len(),
        entries,
    }
}

fn count_installed(root: &Path) -> HashMap<&'static str, usize> {
    SubsetName::ALL
        .iter()
        .map(|s| (s.dir(), std::fs::read_dir(root.join(s.dir())).map(|d| d.count()).unwrap_or(0)))
        .collect()
}

#[test]
fn fetch_installs_verifies_and_then_hits_the_cache() {
    let (files, entries) = dataset();
    let server = Server::start(files);
    let m = manifest(&server.base, entries);
    let cache = tempfile::tempdir().unwrap();

    let first = fetch_dataset(&m, cache.path(), &HttpFetcher::default()).unwrap();
    assert!(first.is_complete());
    assert_eq!(first.downloaded.len(), 5);
    assert_eq!(server.hits(), 5);
    let counts = count_installed(&m.install_dir(cache.path()));
    assert_eq!((counts["green"], counts["blue"], counts["haze"]), (2, 1, 2));

    let second = fetch_dataset(&m, cache.path(), &HttpFetcher::default()).unwrap();
    assert_eq!(second.cached.len(), 5);
    assert_eq!(server.hits(), 5, "warm cache must not touch the network");
}

#[test]
fn tampered_download_is_quarantined_with_both_digests() {
    let (files, entries) = dataset();
    let server = Server::start(files);
    server.files.lock().unwrap().insert("blue/b1.png".into(), b"tampered".to_vec());
    let m = manifest(&server.base, entries.clone());
    let cache = tempfile::tempdir().unwrap();

    let outcome = cmd_fetch(&m, cache.path(), &HttpFetcher::default()).unwrap();
    assert!(!outcome.success());
    assert_eq!(outcome.file_errors.len(), 1);
    let (file, msg) = &outcome.file_errors[0];
    assert_eq!(file, "b1.png");
    let expected = &entries.iter().find(|e| e.file == "b1.png").unwrap().sha256;
    assert!(msg.contains(expected.as_str()) && msg.contains(&sha256_hex(b"tampered")));
    assert_eq!(std::fs::read(cache.path().join("quarantine/b1.png")).unwrap(), b"tampered");
    assert!(!m.install_dir(cache.path()).join("blue/b1.png").exists());
}

#[test]
fn corrupted_cache_file_is_fetched_again() {
    let (files, entries) = dataset();
    let server = Server::start(files);
    let m = manifest(&server.base, entries);
    let cache = tempfile::tempdir().unwrap();
    fetch_dataset(&m, cache.path(), &HttpFetcher::default()).unwrap();
    std::fs::write(m.install_dir(cache.path()).join("haze/h2.png"), b"bit rot").unwrap();
    let r = fetch_dataset(&m, cache.path(), &HttpFetcher::default()).unwrap();
    assert_eq!((r.cached.len(), r.downloaded.clone()), (4, vec!["h2.png".to_string()]));
}

#[test]
fn unreachable_host_with_cold_cache_lists_missing_files() {
    let (_, entries) = dataset();
    // Bind then drop to get a port with nothing listening.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let m = manifest(&format!("http://127.0.0.1:{port}"), entries);
    let cache = tempfile::tempdir().unwrap();
    let r = fetch_dataset(&m, cache.path(), &HttpFetcher::default()).unwrap();
    let missing: Vec<&str> = r.missing.iter().map(|(f, _)| f.as_str()).collect();
    assert_eq!(missing, ["g1.png", "g2.png", "b1.png", "h1.png", "h2.png"]);
}

#[test]
fn pinned_local_copy_round_trips_through_the_binary() {
    let (files, _) = dataset();
    let local = tempfile::tempdir().unwrap();
    for (path, bytes) in &files {
        let p = local.path().join(path);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }
    let server = Server::start(files);
    let cache = tempfile::tempdir().unwrap();
    let template = manifest(&server.base, vec![]);
    let template_path = cache.path().join("template.json");
    std::fs::write(&template_path, serde_json::to_string(&DatasetManifest { expected_count: 5, ..template }).unwrap()).unwrap();

    let bin = env!("CARGO_BIN_EXE_aquafuse");
    let st = std::process::Command::new(bin)
        .args(["fetch-u45", "--manifest"])
        .arg(&template_path)
        .arg("--cache")
        .arg(cache.path())
        .arg("--pin-from")
        .arg(local.path())
        .status()
        .unwrap();
    assert!(st.success());
    let pinned = cache.path().join("mini_manifest.json");
    let m = DatasetManifest::load(&pinned).unwrap();
    assert_eq!(m.entries.len(), 5);
    assert_eq!(m.subset_of("h1.png"), Some(SubsetName::Haze));

    let fetch = |extra: &[&str]| {
        std::process::Command::new(bin)
            .args(["fetch-u45", "--manifest"])
            .arg(&pinned)
            .env("AQUAFUSE_CACHE", cache.path())
            .args(extra)
            .status()
            .unwrap()
            .code()
    };
    // Offline with a cold cache fails; online fills it; offline then succeeds.
    assert_eq!(fetch(&["--offline"]), Some(1));
    assert_eq!(fetch(&[]), Some(0));
    let hits = server.hits();
    assert_eq!(fetch(&["--offline"]), Some(0));
    assert_eq!(server.hits(), hits);
}

#[test]
fn bundled_manifest_without_pins_is_a_clear_error() {
    let cache = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_aquafuse"))
        .args(["fetch-u45", "--offline", "--cache"])
        .arg(cache.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pin-from"));
}
