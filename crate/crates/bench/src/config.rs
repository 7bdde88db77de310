//! Run configuration shared by the command-line tool and the tests.
//!
//! A config file holds `key = value` lines; `#` starts a comment. Keys are
//! the field names of [`RunConfig`].

use std::path::{Path, PathBuf};
use std::time::Duration;

use pageann::{BuildConfig, GraphParams, IoOptions, LayoutMode, RoutingParams, SearchParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub index: Option<PathBuf>,
    /// Read at most this many base vectors.
    pub limit: Option<usize>,
    pub page_size: usize,
    pub max_degree: usize,
    pub build_list: usize,
    pub alpha: f32,
    pub disk_chunks: usize,
    pub mem_chunks: usize,
    pub pq_sample: usize,
    pub hops: usize,
    pub max_nbrs: Option<usize>,
    pub memory_budget: u64,
    pub routing: bool,
    pub routing_bits: usize,
    pub sample_rate: f64,
    pub radius: usize,
    pub mode: LayoutMode,
    pub list_size: usize,
    pub k: usize,
    pub beam_width: usize,
    pub threads: usize,
    pub io_threads: usize,
    pub latency_us: u64,
    pub direct: bool,
    pub pipeline: bool,
    pub early_exit: bool,
    pub cache_pages: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BuildConfig::default();
        let s = SearchParams::default();
        let io = IoOptions::default();
        Self {
            base: None,
            queries: None,
            truth: None,
            index: None,
            limit: None,
            page_size: b.page_size,
            max_degree: b.graph.max_degree,
            build_list: b.graph.build_list,
            alpha: b.graph.alpha,
            disk_chunks: b.disk_chunks,
            mem_chunks: b.mem_chunks,
            pq_sample: b.pq_sample,
            hops: b.hops,
            max_nbrs: b.max_nbrs,
            memory_budget: b.memory_budget,
            routing: b.use_routing,
            routing_bits: b.routing.bits,
            sample_rate: b.routing.sample_rate,
            radius: s.radius,
            mode: b.mode,
            list_size: s.list_size,
            k: s.k,
            beam_width: s.beam_width,
            threads: 1,
            io_threads: io.io_threads,
            latency_us: 0,
            direct: io.direct,
            pipeline: s.pipeline,
            early_exit: s.early_exit,
            cache_pages: 0,
            seed: b.seed,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue { key: key.into(), value: value.into() }),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(value));
        match key {
            "base" => self.base = path(),
            "queries" => self.queries = path(),
            "truth" => self.truth = path(),
            "index" => self.index = path(),
            "limit" => self.limit = Some(parse(key, value)?),
            "page_size" => self.page_size = parse(key, value)?,
            "max_degree" => self.max_degree = parse(key, value)?,
            "build_list" => self.build_list = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "disk_chunks" => self.disk_chunks = parse(key, value)?,
            "mem_chunks" => self.mem_chunks = parse(key, value)?,
            "pq_sample" => self.pq_sample = parse(key, value)?,
            "hops" => self.hops = parse(key, value)?,
            "max_nbrs" => self.max_nbrs = Some(parse(key, value)?),
            "memory_budget" => self.memory_budget = parse(key, value)?,
            "routing" => self.routing = parse_bool(key, value)?,
            "routing_bits" => self.routing_bits = parse(key, value)?,
            "sample_rate" => self.sample_rate = parse(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "mode" => {
                self.mode = LayoutMode::from_name(value)
                    .ok_or_else(|| ConfigError::BadValue { key: key.into(), value: value.into() })?
            }
            "list_size" => self.list_size = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "beam_width" => self.beam_width = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "io_threads" => self.io_threads = parse(key, value)?,
            "latency_us" => self.latency_us = parse(key, value)?,
            "direct" => self.direct = parse_bool(key, value)?,
            "pipeline" => self.pipeline = parse_bool(key, value)?,
            "early_exit" => self.early_exit = parse_bool(key, value)?,
            "cache_pages" => self.cache_pages = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies every setting in a config text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            page_size: self.page_size,
            graph: GraphParams {
                max_degree: self.max_degree,
                build_list: self.build_list,
                alpha: self.alpha,
                seed: self.seed,
            },
            disk_chunks: self.disk_chunks,
            mem_chunks: self.mem_chunks,
            pq_sample: self.pq_sample,
            hops: self.hops,
            max_nbrs: self.max_nbrs,
            memory_budget: self.memory_budget,
            routing: RoutingParams {
                bits: self.routing_bits,
                radius: self.radius,
                sample_rate: self.sample_rate,
                seed: self.seed,
            },
            use_routing: self.routing,
            mode: self.mode,
            seed: self.seed,
        }
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            list_size: self.list_size,
            k: self.k,
            beam_width: self.beam_width,
            radius: self.radius,
            early_exit: self.early_exit,
            pipeline: self.pipeline,
            use_routing: self.routing,
            use_cache: self.cache_pages > 0,
            trace: false,
        }
    }

    pub fn io_options(&self) -> IoOptions {
        IoOptions {
            direct: self.direct,
            io_threads: self.io_threads,
            latency: (self.latency_us > 0).then(|| Duration::from_micros(self.latency_us)),
        }
    }
}
