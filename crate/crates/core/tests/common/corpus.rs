//! The hand-derived miner corpus oracle.

use std::path::PathBuf;

use treenas::config::parse_expr;
use treenas::miner::*;

/// Hand-read expectations for the fixture corpus: name, origin, params
/// (`None` = TODO, otherwise the default in config syntax), arity.
pub type Expect = (&'static str, &'static str, &'static [(&'static str, Option<&'static str>)], usize, usize);

pub const CONV_BLOCK_PARAMS: &[(&str, Option<&str>)] = &[
    ("in_ch", None),
    ("out_ch", None),
    ("ratio", None),
    ("eps", Some("1e-05")),
    ("act", Some("'relu'")),
    ("shift", Some("-1")),
    ("dims", Some("[1, 2]")),
    ("pad", Some("(1, 1)")),
    ("norm", None),
];

pub const EXPECTED: &[Expect] = &[
    ("Base", "corpus.a_blocks.Base", &[("ch", None), ("k", Some("3"))], 1, 1),
    ("ConvBlock", "corpus.a_blocks.ConvBlock", CONV_BLOCK_PARAMS, 1, 2),
    ("Deep", "corpus.a_blocks.Deep", CONV_BLOCK_PARAMS, 1, 2),
    ("Outer", "corpus.a_blocks.Outer", &[("width", Some("64"))], 2, 1),
    (
        "Base_2",
        "corpus.b_heads.Base",
        &[("num_classes", Some("10")), ("loss", Some("None")), ("scale", Some("2.5")), ("flag", Some("True"))],
        3,
        1,
    ),
    ("Head", "corpus.b_heads.Head", &[("in_channels", None), ("topk", Some("(1, 5)"))], 0, 1),
    ("Silent", "corpus.b_heads.Silent", &[], 1, 1),
    ("ConvBlock_2", "corpus.b_heads.ConvBlock", &[("c", None)], 1, 1),
    ("Gate", "corpus.c_misc.Gate", &[("dim", None), ("big", None), ("name", Some("'g\\tate'"))], 1, 1),
    ("Later", "corpus.c_misc.Later", &[("r", Some("0.5"))], 2, 3),
    ("Earlier", "corpus.c_misc.Earlier", &[("p", Some("None")), ("q", Some("'s'"))], 2, 3),
    ("Router", "corpus.c_misc.Router", &[], 1, 1),
    ("Identity_2", "corpus.d_extra.Identity", &[], 1, 1),
    ("Async", "corpus.d_extra.Async", &[("k", Some("7"))], 1, 2),
    (
        "Fancy",
        "corpus.d_extra.Fancy",
        &[
            ("a", None),
            ("b", Some("-3")),
            ("c", Some("None")),
            ("d", Some("'x\\'y'")),
            ("e", Some("True")),
            ("f", Some("(1, [2.0, None])")),
        ],
        1,
        1,
    ),
];

pub fn corpus_dir() -> PathBuf {
    super::fixture("miner/corpus")
}

pub fn corpus_files(n: usize) -> Vec<PathBuf> {
    ["a_blocks.py", "b_heads.py", "c_misc.py", "d_extra.py"][..n]
        .iter()
        .map(|f| corpus_dir().join(f))
        .collect()
}

pub fn mine_corpus() -> ModuleDb {
    let (records, failures) = mine_paths(&[corpus_dir()], &MineContext::default()).unwrap();
    assert!(failures.is_empty());
    build_db(records)
}

pub fn expected_default(d: Option<&str>) -> ParamDefault {
    d.map_or(ParamDefault::Todo, |t| ParamDefault::Value(parse_expr(t).unwrap()))
}

/// Differences between the mined corpus and the hand-derived table.
pub fn corpus_mismatches(db: &ModuleDb) -> Vec<String> {
    let mut out = Vec::new();
    if db.records().len() != EXPECTED.len() {
        out.push(format!("{} records, expected {}", db.records().len(), EXPECTED.len()));
    }
    for (rec, (name, origin, params, i, o)) in db.records().iter().zip(EXPECTED) {
        let want: Vec<Param> = params
            .iter()
            .map(|(n, d)| Param { name: n.to_string(), default: expected_default(*d) })
            .collect();
        if rec.name != *name || rec.origin != *origin || rec.params != want || rec.arity() != (*i, *o) {
            out.push(format!("record {} differs from {name}", rec.name));
        }
    }
    out
}
