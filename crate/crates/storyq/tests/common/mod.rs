//! Small corpus, graph and config written to a temp directory, plus a
//! runner for the `storyq` binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const STORIES: &str = r#"{"sequence_id":"s1","images":[{"image_id":"s1-1","detections":[{"label":"dog","confidence":0.9},{"label":"beach","confidence":0.8}]},{"image_id":"s1-2","detections":[{"label":"ball","confidence":0.9},{"label":"dog","confidence":0.7}]},{"image_id":"s1-3","detections":[{"label":"man","confidence":0.9},{"label":"ball","confidence":0.6}]},{"image_id":"s1-4","detections":[{"label":"cake","confidence":0.9},{"label":"table","confidence":0.5}]},{"image_id":"s1-5","detections":[{"label":"house","confidence":0.9},{"label":"car","confidence":0.4}]}],"sentences":["The dog ran on the beach.","The dog found a ball.","A man threw the ball.","We ate cake at the table.","Then we drove home in the car."]}
{"sequence_id":"s2","images":[{"image_id":"s2-1","detections":[{"label":"bride","confidence":0.9},{"label":"groom","confidence":0.8}]},{"image_id":"s2-2","detections":[{"label":"church","confidence":0.9},{"label":"people","confidence":0.8}]},{"image_id":"s2-3","detections":[{"label":"cake","confidence":0.9}]},{"image_id":"s2-4","detections":[{"label":"friends","confidence":0.9},{"label":"party","confidence":0.6}]},{"image_id":"s2-5","detections":[{"label":"sky","confidence":0.9}]}],"sentences":["The bride met the groom at the church.","Many people came to the church.","The bride and groom ate cake.","Their friends danced at the party.","The night ended under the sky."]}
{"sequence_id":"s3","images":[{"image_id":"s3-1","detections":[{"label":"family","confidence":0.9},{"label":"lake","confidence":0.8}]},{"image_id":"s3-2","detections":[{"label":"boat","confidence":0.9},{"label":"water","confidence":0.8}]},{"image_id":"s3-3","detections":[{"label":"children","confidence":0.9},{"label":"sand","confidence":0.7}]},{"image_id":"s3-4","detections":[{"label":"sun","confidence":0.9},{"label":"sky","confidence":0.7}]},{"image_id":"s3-5","detections":[{"label":"dinner","confidence":0.9},{"label":"table","confidence":0.6}]}],"sentences":["The family visited the lake.","We took a boat on the water.","The children played in the sand.","The sun set in the sky.","We had dinner at the table."]}
"#;

pub const QA: &str = r#"{"context":"The dog ran on the beach. The dog found a ball.","questions":["What did the dog find?","Where did the dog run?"]}
{"context":"The bride met the groom at the church.","questions":["Who did the bride meet?"]}
{"context":"The family visited the lake.","questions":[]}
{"context":"We had dinner at the table.","questions":["Why did we have dinner?"]}
"#;

pub const FRAMES: &str = "# verb\tframe\nran\tself_motion\nate\tingestion\nplayed\tcompetition\n";

pub const TRIPLES: &str = "# subject\trelation\tobject
dog\tat_location\tbeach
dog\tdesires\tball
ball\tused_by\tman
man\tdesires\tcake
cake\tat_location\ttable
table\tpart_of\thouse
bride\tat_location\tchurch
church\tfull_of\tpeople
people\tdesires\tcake
cake\tserved_at\tparty
party\tunder\tsky
family\tat_location\tlake
lake\thas\twater
water\tcarries\tboat
boat\tnear\tsand
sand\tunder\tsun
sun\tin\tsky
table\tused_for\tdinner
";

pub const CONFIG: &str = r#"seed = 7

[paths]
stories = "stories.jsonl"
qa = "qa.jsonl"
frames = "frames.tsv"
triples = "triples.tsv"
rankings = "rankings.csv"
checkpoints = "ckpt"
output = "out"

[vocab]
min_count = 1

[terms.model]
hidden_size = 16
num_heads = 2
num_layers = 1
ffn_size = 32
max_positions = 128
dropout = 0.0
decoder_kind = "recurrent_with_attention"

[terms.train]
learning_rate = 0.003
epochs = 15
batch_size = 2

[story.model]
hidden_size = 16
num_heads = 2
num_layers = 1
ffn_size = 32
max_positions = 128
dropout = 0.0

[story.train]
learning_rate = 0.003
epochs = 15
batch_size = 2

[question.model]
hidden_size = 16
num_heads = 2
num_layers = 1
ffn_size = 32
max_positions = 128
dropout = 0.0

[question.train]
learning_rate = 0.003
epochs = 15
batch_size = 2
warmup_fraction = 0.0
schedule = "constant"

[lm]
order = 2
smoothing = 0.1

[generate]
top_objects = 5

[generate.beam]
beam_width = 2
max_sentence_tokens = 10
"#;

/// Writes the corpus, lexicon, graph and config into `dir` and returns the
/// config path.
pub fn write_fixture(dir: &Path) -> PathBuf {
    fs::write(dir.join("stories.jsonl"), STORIES).unwrap();
    fs::write(dir.join("qa.jsonl"), QA).unwrap();
    fs::write(dir.join("frames.tsv"), FRAMES).unwrap();
    fs::write(dir.join("triples.tsv"), TRIPLES).unwrap();
    let config = dir.join("storyq.toml");
    fs::write(&config, CONFIG).unwrap();
    config
}

/// Runs the binary with the output-dir variable cleared.
pub fn storyq(config: &Path, args: &[&str]) -> Output {
    storyq_env(config, args, &[])
}

pub fn storyq_env(config: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_storyq"));
    cmd.arg("--config").arg(config).args(args);
    cmd.env_remove("STORYQ_OUT_DIR").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn storyq")
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn train_all(config: &Path) {
    for target in ["terms", "lm", "story", "question"] {
        assert_ok(&storyq(config, &["train", target]));
    }
}

/// Splits per-method rank counts (`counts[m][r]`, every row and column
/// summing to the same total) into whole rankings by repeatedly taking a
/// permutation with positive support.
pub fn rankings_from_counts(counts: &[[usize; 3]; 3]) -> Vec<[u32; 3]> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut left = *counts;
    let mut out = Vec::new();
    while left.iter().any(|row| row.iter().any(|&c| c > 0)) {
        let perm = PERMS
            .iter()
            .find(|p| (0..3).all(|m| left[m][p[m]] > 0))
            .expect("doubly stochastic counts decompose");
        let take = (0..3).map(|m| left[m][perm[m]]).min().unwrap();
        for m in 0..3 {
            left[m][perm[m]] -= take;
        }
        for _ in 0..take {
            out.push([perm[0] as u32 + 1, perm[1] as u32 + 1, perm[2] as u32 + 1]);
        }
    }
    out
}

pub const TABLE1_METHODS: [&str; 3] = ["img2Q", "caption2Q", "story2Q"];

/// Rank-1, rank-2 and rank-3 counts over 1250 rankings. Ranks 1 and 3 are
/// printed in the table; rank 2 is what remains.
pub const TABLE1_COUNTS: [[usize; 3]; 3] = [[243, 383, 624], [447, 466, 337], [560, 401, 289]];

/// Long-format CSV: 250 sequences times 5 workers.
pub fn table1_csv() -> String {
    let mut text = String::from("sequence_id,worker_id,method,rank\n");
    for (i, ranks) in rankings_from_counts(&TABLE1_COUNTS).iter().enumerate() {
        for (m, r) in TABLE1_METHODS.iter().zip(ranks) {
            text.push_str(&format!("seq{},w{},{m},{r}\n", i / 5, i % 5));
        }
    }
    text
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
    out
}
