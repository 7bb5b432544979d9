//! Pipeline settings, dataset presets and a flat `section.key=value` text
//! form.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::cluster::DpcConfig;
use crate::features::SortOrder;
use crate::gcn::GcnConfig;
use crate::linker::{LinkerVariant, NasaConfig};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Ms1m,
    Ijbb,
    DeepFashion,
    /// Reduced widths and neighborhoods for desk-scale synthetic data.
    Synth,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ms1m, Preset::Ijbb, Preset::DeepFashion, Preset::Synth];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ms1m => "ms1m",
            Self::Ijbb => "ijbb",
            Self::DeepFashion => "deepfashion",
            Self::Synth => "synth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::param("preset", format!("unknown preset {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub seed: u64,
    pub nasa: NasaConfig,
    /// Neighbors kept per node when building the GCN subgraphs.
    pub k_gcn_train: usize,
    pub k_gcn_test: usize,
    pub t3_train: f64,
    pub t3_test: f64,
    pub gcn: GcnConfig,
    pub dpc_k: usize,
    pub dpc_sigma: f64,
    pub dpc_max_connections: usize,
    /// Falls back to `t3_test` when unset.
    pub dpc_link_threshold: Option<f64>,
}

fn nasa_base(seed: u64) -> NasaConfig {
    NasaConfig {
        t1: 0.8,
        t2: 0.0,
        k: 80,
        k1: 60,
        k2: 10,
        dist_max: 4.0,
        sort: SortOrder::Ascending,
        variant: LinkerVariant::Full,
        fd_hidden: vec![512, 512, 512, 512, 512, 256, 256, 40],
        nd_hidden: vec![661, 64, 20],
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 1e-4,
        batch_size: 128,
        epochs: 10,
        dropout: 0.1,
        seed,
        balance_classes: false,
    }
}

fn gcn_base(seed: u64) -> GcnConfig {
    GcnConfig {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 1e-4,
        batch_size: 512,
        epochs: 20,
        dropout: 0.1,
        scale: 40.0,
        margin: 0.25,
        seed,
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let seed = DEFAULT_SEED;
        let mut c = Self {
            preset,
            seed,
            nasa: nasa_base(seed),
            k_gcn_train: 80,
            k_gcn_test: 40,
            t3_train: 0.8,
            t3_test: 0.8,
            gcn: gcn_base(seed),
            dpc_k: 90,
            dpc_sigma: 0.1,
            dpc_max_connections: 1,
            dpc_link_threshold: None,
        };
        match preset {
            Preset::Ms1m => {}
            Preset::Ijbb => {
                c.nasa.t1 = 0.7;
                c.nasa.t2 = 0.7;
                c.nasa.dropout = 0.2;
                c.nasa.fd_hidden = vec![1024, 1024, 1024, 512, 256, 40];
                c.nasa.nd_hidden = vec![300, 64, 20];
                c.k_gcn_test = 80;
                c.t3_train = 0.9;
                c.gcn.epochs = 10;
                c.gcn.margin = 0.0;
                c.dpc_k = 80;
                c.dpc_max_connections = 80;
            }
            Preset::DeepFashion => {
                c.nasa.t1 = 0.925;
                c.nasa.t2 = 0.925;
                c.nasa.k = 10;
                c.nasa.k1 = 5;
                c.nasa.k2 = 3;
                c.nasa.batch_size = 256;
                c.nasa.epochs = 200;
                c.nasa.fd_hidden = vec![512, 512, 512, 256, 256, 40];
                c.nasa.nd_hidden = vec![21, 64, 20];
                c.k_gcn_train = 10;
                c.k_gcn_test = 10;
                c.t3_train = 0.4;
                c.t3_test = 0.4;
                c.gcn.batch_size = 256;
                c.gcn.epochs = 120;
                c.gcn.dropout = 0.2;
                c.gcn.margin = 0.0;
                c.dpc_k = 11;
                c.dpc_sigma = 0.02;
            }
            Preset::Synth => {
                c.nasa.t1 = 0.7;
                c.nasa.t2 = 0.0;
                c.nasa.k = 20;
                c.nasa.k1 = 8;
                c.nasa.k2 = 3;
                c.nasa.epochs = 10;
                c.nasa.batch_size = 128;
                c.nasa.fd_hidden = vec![128, 64, 40];
                c.nasa.nd_hidden = vec![32, 20];
                c.k_gcn_train = 20;
                c.k_gcn_test = 20;
                c.t3_train = 0.5;
                c.t3_test = 0.5;
                c.gcn.batch_size = 128;
                c.gcn.epochs = 10;
                c.gcn.margin = 0.25;
                c.dpc_k = 20;
                c.dpc_sigma = 0.1;
                c.dpc_max_connections = 1;
                c.dpc_link_threshold = Some(0.8);
            }
        }
        c
    }

    pub fn link_threshold(&self) -> f64 {
        self.dpc_link_threshold.unwrap_or(self.t3_test)
    }

    pub fn dpc(&self) -> DpcConfig {
        DpcConfig {
            k_density: self.dpc_k,
            sigma: self.dpc_sigma,
            max_connections: self.dpc_max_connections,
            link_threshold: self.link_threshold(),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.nasa.seed = seed;
        self.gcn.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.nasa.validate()?;
        self.gcn.validate()?;
        self.dpc().validate()?;
        if self.k_gcn_train < 1
            || self.k_gcn_train > self.nasa.k
            || self.k_gcn_test < 1
            || self.k_gcn_test > self.nasa.k
        {
            return Err(Error::param("gcn.k", "GCN neighbor counts must lie in [1, nasa.k]"));
        }
        Ok(())
    }

    /// Every setting as `key=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let n = &self.nasa;
        let g = &self.gcn;
        let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("preset", self.preset.name().to_string()),
            ("seed", self.seed.to_string()),
            ("nasa.t1", fmt_f64(n.t1)),
            ("nasa.t2", fmt_f64(n.t2)),
            ("nasa.k", n.k.to_string()),
            ("nasa.k1", n.k1.to_string()),
            ("nasa.k2", n.k2.to_string()),
            ("nasa.dist_max", fmt_f64(n.dist_max)),
            ("nasa.sort", sort_name(n.sort).to_string()),
            ("nasa.variant", variant_name(n.variant).to_string()),
            ("nasa.fd_hidden", list(&n.fd_hidden)),
            ("nasa.nd_hidden", list(&n.nd_hidden)),
            ("nasa.lr", fmt_f64(n.lr)),
            ("nasa.momentum", fmt_f64(n.momentum)),
            ("nasa.weight_decay", fmt_f64(n.weight_decay)),
            ("nasa.batch_size", n.batch_size.to_string()),
            ("nasa.epochs", n.epochs.to_string()),
            ("nasa.dropout", fmt_f64(n.dropout)),
            ("nasa.balance_classes", n.balance_classes.to_string()),
            ("gcn.k_train", self.k_gcn_train.to_string()),
            ("gcn.k_test", self.k_gcn_test.to_string()),
            ("gcn.t3_train", fmt_f64(self.t3_train)),
            ("gcn.t3_test", fmt_f64(self.t3_test)),
            ("gcn.lr", fmt_f64(g.lr)),
            ("gcn.momentum", fmt_f64(g.momentum)),
            ("gcn.weight_decay", fmt_f64(g.weight_decay)),
            ("gcn.batch_size", g.batch_size.to_string()),
            ("gcn.epochs", g.epochs.to_string()),
            ("gcn.dropout", fmt_f64(g.dropout)),
            ("gcn.scale", fmt_f64(g.scale)),
            ("gcn.margin", fmt_f64(g.margin)),
            ("dpc.k", self.dpc_k.to_string()),
            ("dpc.sigma", fmt_f64(self.dpc_sigma)),
            ("dpc.max_connections", self.dpc_max_connections.to_string()),
            ("dpc.link_threshold", self.dpc_link_threshold.map_or_else(|| "auto".to_string(), fmt_f64)),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Applies one `key=value` setting. Setting `preset` resets every other
    /// value to that preset's defaults while keeping the seed.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::param("config", format!("{key}: expected {what}, got {value:?}"));
        let f = || value.parse::<f64>().map_err(|_| bad("a number"));
        let u = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let list = || -> Result<Vec<usize>> {
            value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>().map_err(|_| bad("a comma-separated list of widths")))
                .collect()
        };
        match key.trim() {
            "preset" => {
                let seed = self.seed;
                *self = Self::preset(Preset::parse(value)?);
                self.set_seed(seed);
            }
            "seed" => self.set_seed(value.parse().map_err(|_| bad("an unsigned integer"))?),
            "nasa.t1" => self.nasa.t1 = f()?,
            "nasa.t2" => self.nasa.t2 = f()?,
            "nasa.k" => self.nasa.k = u()?,
            "nasa.k1" => self.nasa.k1 = u()?,
            "nasa.k2" => self.nasa.k2 = u()?,
            "nasa.dist_max" => self.nasa.dist_max = f()?,
            "nasa.sort" => {
                self.nasa.sort = match value {
                    "ascending" => SortOrder::Ascending,
                    "descending" => SortOrder::Descending,
                    _ => return Err(bad("ascending or descending")),
                }
            }
            "nasa.variant" => {
                self.nasa.variant = match value {
                    "pair" => LinkerVariant::PairOnly,
                    "enhanced" => LinkerVariant::Enhanced,
                    "order" => LinkerVariant::OrderLabels,
                    "full" => LinkerVariant::Full,
                    _ => return Err(bad("pair, enhanced, order or full")),
                }
            }
            "nasa.fd_hidden" => self.nasa.fd_hidden = list()?,
            "nasa.nd_hidden" => self.nasa.nd_hidden = list()?,
            "nasa.lr" => self.nasa.lr = f()?,
            "nasa.momentum" => self.nasa.momentum = f()?,
            "nasa.weight_decay" => self.nasa.weight_decay = f()?,
            "nasa.batch_size" => self.nasa.batch_size = u()?,
            "nasa.epochs" => self.nasa.epochs = u()?,
            "nasa.dropout" => self.nasa.dropout = f()?,
            "nasa.balance_classes" => self.nasa.balance_classes = value.parse().map_err(|_| bad("true or false"))?,
            "gcn.k_train" => self.k_gcn_train = u()?,
            "gcn.k_test" => self.k_gcn_test = u()?,
            "gcn.t3_train" => self.t3_train = f()?,
            "gcn.t3_test" => self.t3_test = f()?,
            "gcn.lr" => self.gcn.lr = f()?,
            "gcn.momentum" => self.gcn.momentum = f()?,
            "gcn.weight_decay" => self.gcn.weight_decay = f()?,
            "gcn.batch_size" => self.gcn.batch_size = u()?,
            "gcn.epochs" => self.gcn.epochs = u()?,
            "gcn.dropout" => self.gcn.dropout = f()?,
            "gcn.scale" => self.gcn.scale = f()?,
            "gcn.margin" => self.gcn.margin = f()?,
            "dpc.k" => self.dpc_k = u()?,
            "dpc.sigma" => self.dpc_sigma = f()?,
            "dpc.max_connections" => self.dpc_max_connections = u()?,
            "dpc.link_threshold" => self.dpc_link_threshold = if value == "auto" { None } else { Some(f()?) },
            other => return Err(Error::param("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped;
    /// a `preset` line is applied before the other keys.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut rest = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::param("config", format!("line {}: expected key=value", no + 1)))?;
            if k.trim() == "preset" {
                self.set(k, v)?;
            } else {
                rest.push((k, v));
            }
        }
        for (k, v) in rest {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::preset(Preset::Ms1m);
        c.apply_kv(text)?;
        Ok(c)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Ms1m)
    }
}

/// Shortest decimal that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn sort_name(s: SortOrder) -> &'static str {
    match s {
        SortOrder::Ascending => "ascending",
        SortOrder::Descending => "descending",
    }
}

fn variant_name(v: LinkerVariant) -> &'static str {
    match v {
        LinkerVariant::PairOnly => "pair",
        LinkerVariant::Enhanced => "enhanced",
        LinkerVariant::OrderLabels => "order",
        LinkerVariant::Full => "full",
    }
}
