//! Key-value reports, training logs and the sweep CSV.

use std::fmt::Write;

use nasa_core::gcn::GcnEpochLog;
use nasa_core::graph::CorruptionMode;
use nasa_core::linker::{EpochLog, PairReport};
use nasa_core::metrics::{FScoreReport, SweepRow};

pub fn nasa_log(log: &[EpochLog]) -> String {
    let mut s = String::new();
    for e in log {
        writeln!(
            s,
            "stage=nasa epoch={} lr={:?} loss={:?} accuracy={:?} margin={:?}",
            e.epoch, e.lr, e.loss, e.accuracy, e.margin
        )
        .expect("writing to a String");
    }
    s
}

pub fn gcn_log(log: &[GcnEpochLog]) -> String {
    let mut s = String::new();
    for e in log {
        writeln!(s, "stage=gcn epoch={} lr={:?} loss={:?} accuracy={:?}", e.epoch, e.lr, e.loss, e.accuracy)
            .expect("writing to a String");
    }
    s
}

pub fn fscores(pairwise: &FScoreReport, bcubed: &FScoreReport) -> String {
    let mut s = String::new();
    for (name, r) in [("pairwise", pairwise), ("bcubed", bcubed)] {
        writeln!(s, "{name}_precision={:.6}", r.precision).expect("writing to a String");
        writeln!(s, "{name}_recall={:.6}", r.recall).expect("writing to a String");
        writeln!(s, "{name}_f={:.6}", r.f).expect("writing to a String");
        if r.degenerate {
            writeln!(s, "{name}_degenerate=true").expect("writing to a String");
        }
    }
    s
}

pub fn pairs(r: &PairReport) -> String {
    format!(
        "pair_accuracy={:.6}\npair_precision={:.6}\npair_recall={:.6}\ntrue_pos={}\nfalse_pos={}\ntrue_neg={}\nfalse_neg={}\n",
        r.accuracy, r.precision, r.recall, r.true_pos, r.false_pos, r.true_neg, r.false_neg
    )
}

pub const SWEEP_HEADER: &str = "mode,level,subgraph_precision,subgraph_recall,pairwise_f,bcubed_f,singletons";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let mode = match r.mode {
            CorruptionMode::DropPrecision => "precision",
            CorruptionMode::DropRecall => "recall",
        };
        writeln!(
            s,
            "{mode},{},{:.6},{:.6},{:.6},{:.6},{}",
            r.level, r.subgraph_precision, r.subgraph_recall, r.pairwise.f, r.bcubed.f, r.singletons
        )
        .expect("writing to a String");
    }
    s
}

/// Parses `key=value` lines into pairs, skipping blanks.
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).collect()
}
