#![allow(dead_code)]

pub mod corpus;
pub mod hermetic;
pub mod intent;

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use treenas::config::{ArchNode, ArchTree, ConfigValue};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub const CONFIG_FIXTURES: [&str; 3] = ["imagenet16_120", "cifar10", "cifar100"];

const TYPES: [&str; 6] = ["Conv2d", "ReLU", "Block", "Identity", "X_2", "SequentialWithConfig"];
const KEYS: [&str; 8] = ["a", "in_channels", "act_cfg", "layers", "k_2", "_hidden", "dim", "topk"];

/// Random trees over the whole value grammar, including awkward strings and
/// floats drawn from raw bit patterns.
pub fn random_tree(seed: u64) -> ArchTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = random_node(&mut rng, 0, true);
    ArchTree::new(root).expect("generator builds module roots")
}

fn random_node(rng: &mut ChaCha8Rng, depth: usize, module: bool) -> ArchNode {
    let mut node = ArchNode::new();
    if module {
        node.insert("type", ConfigValue::Str(TYPES.choose(rng).unwrap().to_string()));
    }
    let n = rng.gen_range(0..=if depth > 3 { 2 } else { 5 });
    for i in 0..n {
        let key = format!("{}{}", KEYS.choose(rng).unwrap(), i);
        node.insert(key, random_value(rng, depth + 1));
    }
    node
}

fn random_value(rng: &mut ChaCha8Rng, depth: usize) -> ConfigValue {
    let leaf_only = depth > 4;
    match rng.gen_range(0..if leaf_only { 6 } else { 9 }) {
        0 => ConfigValue::Int(match rng.gen_range(0..3) {
            0 => rng.gen_range(-10..100),
            1 => rng.gen(),
            _ => *[i64::MIN, i64::MAX, 0].choose(rng).unwrap(),
        }),
        1 => ConfigValue::Float(random_float(rng)),
        2 => ConfigValue::Bool(rng.gen()),
        3 => ConfigValue::None,
        4 | 5 => ConfigValue::Str(random_string(rng)),
        6 => ConfigValue::List((0..rng.gen_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
        7 => ConfigValue::Tuple((0..rng.gen_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
        _ => {
            let module = rng.gen_bool(0.6);
            ConfigValue::Node(random_node(rng, depth, module))
        }
    }
}

fn random_float(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let f = match rng.gen_range(0..3) {
            0 => f64::from_bits(rng.gen()),
            1 => rng.gen_range(-1e3..1e3),
            _ => *[1e-5, 0.1, 1e16, 1e15, 5e-324, f64::MAX, -0.0].choose(rng).unwrap(),
        };
        if f.is_finite() {
            return f;
        }
    }
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = ["a", "conv", "'", "\"", "\\", "\n", "\t", "\r", " ", "é", "#", "<TODO>"];
    (0..rng.gen_range(0..6)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

/// The reference module zoo, mined in a fixed library order so suffixed
/// names match the reference configs.
pub fn zoo_db() -> treenas::miner::ModuleDb {
    use treenas::miner::{build_db, mine_paths, MineContext};
    let roots: Vec<PathBuf> = ["torch", "mmcv", "mmpretrain", "timm", "custom"]
        .iter()
        .map(|r| fixture("zoo").join(r))
        .collect();
    let (records, failures) = mine_paths(&roots, &MineContext::default()).expect("zoo mines");
    assert!(failures.is_empty(), "{failures:?}");
    build_db(records)
}

pub fn reference_config(name: &str) -> ArchTree {
    treenas::config::parse_config(&read_fixture(&format!("configs/{name}.py"))).expect("fixture parses")
}

/// The reference document with TeX escapes and text macros stripped.
pub fn reference_document() -> String {
    let raw = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../paper.md"))
        .expect("reference document");
    let mut s = raw
        .replace("\\\\", "")
        .replace("\\_", "_")
        .replace("\\{", "{")
        .replace("\\}", "}")
        .replace("\\#", "#")
        .replace("\\%", "%");
    let macros = regex::Regex::new(r"\\text(?:color\{[A-Za-z]+\}|bf|it)\{((?:[^{}]|\{(?:[^{}]|\{[^{}]*\})*\})*)\}").unwrap();
    for _ in 0..3 {
        s = macros.replace_all(&s, "$1").into_owned();
    }
    s
}

/// A captured HTTP request.
pub struct Captured {
    pub head: String,
    pub body: String,
}

/// Serves one canned `(status, body)` per connection, in order, and returns
/// the requests it saw.
pub fn http_stub(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<Captured>>) {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Captured {
                head,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}
