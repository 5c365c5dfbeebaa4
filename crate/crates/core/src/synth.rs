//! Synthetic flow records with a planted labelling rule.
//!
//! A row is an attack iff `flag == "bad"` or `src_bytes` exceeds the 80th
//! percentile of the generated `src_bytes` column. The other columns are
//! noise, with dashes standing in for missing numeric values.

use std::fmt::Write as _;

use rand::Rng;

use crate::data::{parse_csv, FeatureSchema, InstanceTable, SchemaFile};
use crate::error::Result;
use crate::seed::rng_from;

const PROTOS: [&str; 3] = ["tcp", "udp", "icmp"];
const FLAGS: [&str; 4] = ["ok", "bad", "ok", "warn"];
const PORTS: [u16; 8] = [22, 25, 53, 80, 123, 443, 3389, 8080];

pub fn schema_file() -> SchemaFile {
    SchemaFile {
        label: "label".into(),
        exclude: vec!["ts".into()],
        categorical: vec!["proto".into(), "flag".into(), "dst_port".into()],
        numerical: vec!["duration".into(), "src_bytes".into(), "dst_bytes".into()],
        missing: None,
    }
}

pub fn schema() -> FeatureSchema {
    FeatureSchema::from_file(&schema_file()).expect("built-in schema is valid")
}

/// Nearest-rank 80th percentile.
fn percentile_80(values: &[u64]) -> u64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((0.8 * v.len() as f64).ceil() as usize).max(1);
    v[rank - 1]
}

/// CSV text with header `ts,proto,flag,dst_port,duration,src_bytes,dst_bytes,label`.
pub fn synth_csv(rows: usize, seed: u64) -> String {
    let mut rng = rng_from(seed);
    struct Raw {
        proto: &'static str,
        flag: &'static str,
        port: u16,
        duration: Option<f64>,
        src_bytes: u64,
        dst_bytes: Option<u64>,
    }
    let raw: Vec<Raw> = (0..rows)
        .map(|_| {
            let p: f64 = rng.gen();
            Raw {
                proto: if p < 0.6 {
                    PROTOS[0]
                } else if p < 0.9 {
                    PROTOS[1]
                } else {
                    PROTOS[2]
                },
                flag: FLAGS[rng.gen_range(0..FLAGS.len())],
                port: PORTS[rng.gen_range(0..PORTS.len())],
                duration: (rng.gen::<f64>() >= 0.05).then(|| (rng.gen_range(0.0..10.0f64) * 100.0).round() / 100.0),
                src_bytes: rng.gen_range(0..100_000),
                dst_bytes: (rng.gen::<f64>() >= 0.10).then(|| rng.gen_range(0..50_000)),
            }
        })
        .collect();
    let cut = if rows == 0 {
        0
    } else {
        percentile_80(&raw.iter().map(|r| r.src_bytes).collect::<Vec<_>>())
    };

    let mut out = String::from("ts,proto,flag,dst_port,duration,src_bytes,dst_bytes,label\n");
    for (i, r) in raw.iter().enumerate() {
        let label = u8::from(r.flag == "bad" || r.src_bytes > cut);
        let duration = r.duration.map_or("-".to_string(), |d| format!("{d}"));
        let dst = r.dst_bytes.map_or("-".to_string(), |d| d.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            1_600_000_000 + i,
            r.proto,
            r.flag,
            r.port,
            duration,
            r.src_bytes,
            dst,
            label
        );
    }
    out
}

pub fn synth_table(rows: usize, seed: u64) -> Result<InstanceTable> {
    parse_csv(&synth_csv(rows, seed), &schema())
}
