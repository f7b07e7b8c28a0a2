//! Batch front end: run configuration, the function mini-grammar, one driver
//! per experiment writing CSV / JSON / `.dat` artifacts, and a content-hashed
//! cache for quadrature and Monte Carlo results.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymlab::{
    assemble_norm, closed_form_slope, composite_slopes, eval_appendix_integral_with, fit_asymptote,
    norm_ft_sq, norm_ft_sq_grid, target_slope, theorem11_from_breakdowns, AppendixIntegralId, FtKernelParams,
    MTermBreakdown, Q_SLOPE,
};
use crate::bvfunc::{BVFunction, ExpPolyTerm};
use crate::error::{Error, Result};
use crate::estim::{be_experiment, grid_size, moments, BESummary, SampleEngine};
use crate::fbmsim::derive_seed;
use crate::hinner::{inner_product, reference_battery, IPMethod};
use crate::quad::QuadConfig;
use crate::specfun::{alpha_h, ft_norm_slope, HurstParam, ModelParams};

pub const ARTIFACT_VERSION: &str = concat!("fbmlab-", env!("CARGO_PKG_VERSION"));

/// Environment variable overriding the default cache directory.
pub const CACHE_ENV: &str = "FBMLAB_CACHE_DIR";

const MAX_PANELS: usize = 4000;
const NODES_PER_PANEL: usize = 16;
const ORACLE_CELLS: usize = 512;

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub h: f64,
    pub theta: f64,
    pub sigma: f64,
    pub t_grid: Vec<f64>,
    pub delta: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// worker threads; 0 lets the pool pick
    pub threads: usize,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            h: 0.3,
            theta: 1.0,
            sigma: 1.0,
            t_grid: vec![25.0, 50.0, 100.0, 200.0],
            delta: 0.0625,
            n_reps: 20_000,
            seed: 20_240_601,
            tol_abs: 1e-11,
            tol_rel: 1e-10,
            threads: 0,
            cache_dir: PathBuf::from(".fbmlab-cache"),
            out: PathBuf::from("out"),
        }
    }
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    let x = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad_value(key, v))?;
            let b: f64 = b.trim().parse().map_err(|_| bad_value(key, v))?;
            a / b
        }
        None => v.parse().map_err(|_| bad_value(key, v))?,
    };
    if !x.is_finite() {
        return Err(bad_value(key, v));
    }
    Ok(x)
}

fn bad_value(key: &str, v: &str) -> Error {
    Error::Config(format!("cannot parse value '{v}' for key '{key}'"))
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then the cache-dir environment override, then the config
    /// file, then explicit overrides; validated at the end.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(dir) = std::env::var_os(CACHE_ENV) {
            cfg.cache_dir = PathBuf::from(dir);
        }
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            for (k, v) in parse_config_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().replace('-', "_");
        match k.as_str() {
            "h" => self.h = parse_real(&k, value)?,
            "theta" => self.theta = parse_real(&k, value)?,
            "sigma" => self.sigma = parse_real(&k, value)?,
            "delta" => self.delta = parse_real(&k, value)?,
            "tol_abs" => self.tol_abs = parse_real(&k, value)?,
            "tol_rel" => self.tol_rel = parse_real(&k, value)?,
            "t_grid" => {
                self.t_grid = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_real(&k, s))
                    .collect::<Result<_>>()?
            }
            "n_reps" => self.n_reps = value.trim().parse().map_err(|_| bad_value(&k, value))?,
            "seed" => self.seed = value.trim().parse().map_err(|_| bad_value(&k, value))?,
            "threads" => self.threads = value.trim().parse().map_err(|_| bad_value(&k, value))?,
            "cache_dir" => self.cache_dir = PathBuf::from(value.trim()),
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !(self.h > 0.0 && self.h < 0.5) {
            return cfg_err(format!("h must lie in (0, 1/2), got {}", self.h));
        }
        if !(self.theta > 0.0) {
            return cfg_err(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.sigma > 0.0) {
            return cfg_err(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.t_grid.is_empty() {
            return cfg_err("t_grid is empty".into());
        }
        if self.t_grid.iter().any(|&t| !(t > 0.0)) || self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return cfg_err("t_grid must be positive and strictly increasing".into());
        }
        if !(self.delta > 0.0) {
            return cfg_err(format!("delta must be positive, got {}", self.delta));
        }
        if self.n_reps < 2 {
            return cfg_err(format!("n_reps must be at least 2, got {}", self.n_reps));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return cfg_err("tolerances must be positive".into());
        }
        if self.threads > 4096 {
            return cfg_err(format!("threads = {} is not sensible", self.threads));
        }
        Ok(())
    }

    pub fn hurst(&self) -> Result<HurstParam> {
        HurstParam::new(self.h)
    }

    pub fn quad_cfg(&self) -> QuadConfig {
        QuadConfig { abs_tol: self.tol_abs, rel_tol: self.tol_rel, max_panels: MAX_PANELS, nodes_per_panel: NODES_PER_PANEL }
    }

    /// Every field as `(key, value)`, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let grid: Vec<String> = self.t_grid.iter().map(|&t| fmt_num(t)).collect();
        vec![
            ("h".into(), fmt_num(self.h)),
            ("theta".into(), fmt_num(self.theta)),
            ("sigma".into(), fmt_num(self.sigma)),
            ("t_grid".into(), grid.join(",")),
            ("delta".into(), fmt_num(self.delta)),
            ("n_reps".into(), self.n_reps.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("tol_abs".into(), fmt_num(self.tol_abs)),
            ("tol_rel".into(), fmt_num(self.tol_rel)),
            ("threads".into(), self.threads.to_string()),
            ("cache_dir".into(), self.cache_dir.display().to_string()),
            ("out".into(), self.out.display().to_string()),
        ]
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

// ---------------------------------------------------------------------------
// function mini-grammar: `c*s^p*exp(r*s)@[a,b] + ...`

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermSpec {
    pub term: ExpPolyTerm,
    pub a: f64,
    pub b: f64,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
            i += 1;
        }
        let digits_from = i;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i == digits_from {
            return self.err("expected a number");
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(x) => {
                self.pos = i;
                Ok(x)
            }
            Err(_) => self.err(format!("malformed number '{text}'")),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(kw.as_bytes()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    /// `[c] [*] s` inside `exp(...)`; returns the rate.
    fn exponent(&mut self) -> Result<f64> {
        let rate = match self.peek() {
            Some(b's') => 1.0,
            Some(b'-') if self.src.get(self.pos + 1) == Some(&b's') => {
                self.pos += 1;
                -1.0
            }
            Some(b'+') if self.src.get(self.pos + 1) == Some(&b's') => {
                self.pos += 1;
                1.0
            }
            _ => {
                let r = self.number()?;
                self.eat(b'*');
                r
            }
        };
        if !self.keyword("s") {
            return self.err("expected 's' in exponent");
        }
        Ok(rate)
    }

    fn factor(&mut self, term: &mut ExpPolyTerm) -> Result<()> {
        match self.peek() {
            Some(b's') => {
                self.pos += 1;
                let p = if self.eat(b'^') {
                    let at = self.pos;
                    let p = self.number()?;
                    if p < 0.0 {
                        self.pos = at;
                        return self.err("powers of s must be non-negative");
                    }
                    p
                } else {
                    1.0
                };
                term.power += p;
            }
            Some(b'e') if self.src[self.pos..].starts_with(b"exp") => {
                self.pos += 3;
                self.expect(b'(')?;
                term.rate += self.exponent()?;
                self.expect(b')')?;
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => term.coef *= self.number()?,
            Some(_) => return self.err("expected a number, 's' or 'exp('"),
            None => return self.err("unexpected end of input"),
        }
        Ok(())
    }

    fn term(&mut self, sign: f64) -> Result<TermSpec> {
        let mut term = ExpPolyTerm::new(sign, 0.0, 0.0);
        self.factor(&mut term)?;
        while self.eat(b'*') {
            self.factor(&mut term)?;
        }
        self.expect(b'@')?;
        self.expect(b'[')?;
        let open = self.pos - 1;
        let a = self.number()?;
        self.expect(b',')?;
        let b = self.number()?;
        self.expect(b']')?;
        if !(a < b) || a < 0.0 {
            return Err(Error::Parse { pos: open, msg: format!("interval [{a}, {b}] must satisfy 0 <= a < b") });
        }
        Ok(TermSpec { term, a, b })
    }
}

/// Parses a sum of terms `c*s^p*exp(r*s)@[a,b]`; every factor is optional
/// but at least one must be present. Errors carry a byte offset.
pub fn parse_terms(spec: &str) -> Result<Vec<TermSpec>> {
    if !spec.is_ascii() {
        let pos = spec.char_indices().find(|(_, c)| !c.is_ascii()).map_or(0, |(i, _)| i);
        return Err(Error::Parse { pos, msg: "non-ASCII character".into() });
    }
    let mut p = Parser { src: spec.as_bytes(), pos: 0 };
    let mut terms = Vec::new();
    let mut sign = if p.eat(b'-') {
        -1.0
    } else {
        p.eat(b'+');
        1.0
    };
    loop {
        terms.push(p.term(sign)?);
        match p.peek() {
            None => break,
            Some(b'+') => {
                p.pos += 1;
                sign = 1.0;
            }
            Some(b'-') => {
                p.pos += 1;
                sign = -1.0;
            }
            Some(_) => return p.err("expected '+', '-' or end of input"),
        }
    }
    Ok(terms)
}

pub fn build_function(terms: &[TermSpec], t_horizon: f64) -> Result<BVFunction> {
    let mut f = BVFunction::zero(t_horizon)?;
    for t in terms {
        f = f.add(&BVFunction::single(t.a, t.b, vec![t.term], t_horizon)?)?;
    }
    Ok(f)
}

/// Parses a function spec on `[0, t_horizon]`.
pub fn parse_function(spec: &str, t_horizon: f64) -> Result<BVFunction> {
    build_function(&parse_terms(spec)?, t_horizon)
}

// ---------------------------------------------------------------------------
// cache

#[derive(Serialize, Deserialize)]
struct CacheEntry<T> {
    version: String,
    op: String,
    key: String,
    value: T,
}

/// Content-addressed store: one JSON file per `(version, operation, numeric
/// inputs)` digest. Floats round-trip exactly.
pub struct Cache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Cache { dir, hits: AtomicUsize::new(0) }
    }

    pub fn disabled() -> Self {
        Cache::new(None)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn digest(op: &str, key: &str) -> String {
        let mut h = Sha256::new();
        h.update(ARTIFACT_VERSION.as_bytes());
        h.update([0]);
        h.update(op.as_bytes());
        h.update([0]);
        h.update(key.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, op: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.json", Cache::digest(op, key))))
    }

    pub fn lookup<T: DeserializeOwned>(&self, op: &str, key: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(op, key)?).ok()?;
        let e: CacheEntry<T> = serde_json::from_str(&text).ok()?;
        (e.version == ARTIFACT_VERSION && e.op == op && e.key == key).then_some(e.value)
    }

    pub fn store<T: Serialize>(&self, op: &str, key: &str, value: &T) -> Result<()> {
        let Some(path) = self.path(op, key) else { return Ok(()) };
        let dir = path.parent().expect("cache file has a parent");
        fs::create_dir_all(dir)?;
        let entry = CacheEntry { version: ARTIFACT_VERSION.to_string(), op: op.to_string(), key: key.to_string(), value };
        let text = serde_json::to_string(&entry).map_err(|e| Error::Io(e.to_string()))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn get_or_compute<T, F>(&self, op: &str, key: &str, f: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.lookup(op, key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        let v = f()?;
        self.store(op, key, &v)?;
        Ok(v)
    }
}

fn num_key(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

// ---------------------------------------------------------------------------
// output helpers

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultEnvelope<P> {
    pub version: String,
    pub operation: String,
    pub config: RunConfig,
    pub wall_clock_s: f64,
    pub cache_hits: usize,
    #[serde(flatten)]
    pub payload: P,
}

fn envelope<P>(op: &str, cfg: &RunConfig, start: Instant, cache: &Cache, payload: P) -> ResultEnvelope<P> {
    ResultEnvelope {
        version: ARTIFACT_VERSION.to_string(),
        operation: op.to_string(),
        config: cfg.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        cache_hits: cache.hits(),
        payload,
    }
}

fn meta_block(op: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = format!("# {ARTIFACT_VERSION}\n# operation = {op}\n");
    for (k, v) in cfg.echo() {
        let _ = writeln!(s, "# {k} = {v}");
    }
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `# key = value` metadata lines, then an RFC 4180 header and rows.
pub fn write_csv(path: &Path, meta: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(meta.as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Reads back a file produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let meta = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l[1..].split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let io = |e: csv::Error| Error::Io(e.to_string());
    let header = r.headers().map_err(io)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(io)?.iter().map(String::from).collect());
    }
    Ok(Table { meta, header, rows })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", cfg.out.display())))
}

fn cache_for(cfg: &RunConfig) -> Cache {
    Cache::new(Some(cfg.cache_dir.clone()))
}

// ---------------------------------------------------------------------------
// innerprod

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProdReport {
    pub h: f64,
    pub values: Vec<(String, f64)>,
    /// `(method a, method b, a - b)` for every pair
    pub deltas: Vec<(String, String, f64)>,
}

impl InnerProdReport {
    pub fn render(&self) -> String {
        let mut s = format!("H = {}\n", self.h);
        for (m, v) in &self.values {
            let _ = writeln!(s, "{m:<10} {v:.15e}");
        }
        if !self.deltas.is_empty() {
            s.push_str("deltas\n");
            for (a, b, d) in &self.deltas {
                let _ = writeln!(s, "{:<18} {d:+.3e}", format!("{a}-{b}"));
            }
        }
        s
    }
}

/// `method` is one method name, a comma list, or `all` (measure, window,
/// spectral and grid routes).
pub fn parse_methods(method: &str) -> Result<Vec<IPMethod>> {
    if method.trim() == "all" {
        return Ok(vec![IPMethod::JolisMeasure, IPMethod::WindowDecomposed, IPMethod::FourierSpectral, IPMethod::GridOracle]);
    }
    method.split(',').map(|m| IPMethod::parse(m.trim())).collect()
}

pub fn cmd_innerprod(cfg: &RunConfig, f_spec: &str, g_spec: &str, method: &str) -> Result<InnerProdReport> {
    let methods = parse_methods(method)?;
    let h = cfg.hurst()?;
    let ft = parse_terms(f_spec).map_err(|e| e.context("--f"))?;
    let gt = parse_terms(g_spec).map_err(|e| e.context("--g"))?;
    let horizon = ft.iter().chain(&gt).map(|t| t.b).fold(0.0, f64::max);
    let f = build_function(&ft, horizon)?;
    let g = build_function(&gt, horizon)?;
    let qc = cfg.quad_cfg();
    let values: Vec<(String, f64)> = cfg.pool()?.install(|| {
        methods
            .par_iter()
            .map(|&m| inner_product(&f, &g, h, m, &qc).map(|v| (m.name().to_string(), v)).map_err(|e| e.context(m.name())))
            .collect::<Result<_>>()
    })?;
    let mut deltas = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            deltas.push((values[i].0.clone(), values[j].0.clone(), values[i].1 - values[j].1));
        }
    }
    Ok(InnerProdReport { h: cfg.h, values, deltas })
}

// ---------------------------------------------------------------------------
// ftnorm / asymptote

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtNormRow {
    pub t: f64,
    pub breakdown: Option<MTermBreakdown>,
    /// `total - slope * T`
    pub residual: f64,
    pub oracle: Option<f64>,
    pub status: String,
}

fn integral_cached(cache: &Cache, cfg: &RunConfig, id: AppendixIntegralId, t: f64) -> Result<f64> {
    let key = format!("id={};T={};H={};tol={},{}", id.name(), num_key(t), num_key(cfg.h), num_key(cfg.tol_abs), num_key(cfg.tol_rel));
    cache.get_or_compute("appendix-integral", &key, || eval_appendix_integral_with(id, t, cfg.hurst()?, &cfg.quad_cfg()))
}

fn norm_cached(cache: &Cache, cfg: &RunConfig, t: f64) -> Result<MTermBreakdown> {
    let p = FtKernelParams::new(t, cfg.theta, cfg.hurst()?)?;
    let unit = p.unit_horizon();
    if unit < 2.0 {
        return Err(Error::InvalidParam(format!("theta * T must be at least 2, got {unit}")));
    }
    let vals: Vec<f64> = AppendixIntegralId::ALL
        .par_iter()
        .map(|&id| integral_cached(cache, cfg, id, unit).map_err(|e| e.context(id.name())))
        .collect::<Result<_>>()?;
    let arr: [f64; 10] = vals.try_into().expect("ten integrals");
    Ok(assemble_norm(&p, &arr))
}

fn ftnorm_rows(cfg: &RunConfig, cache: &Cache, oracle: bool) -> Result<Vec<FtNormRow>> {
    let h = cfg.hurst()?;
    let slope = target_slope(h, cfg.theta);
    let mut rows = Vec::new();
    for &t in &cfg.t_grid {
        let row = match norm_cached(cache, cfg, t) {
            Ok(b) => {
                let oracle = if oracle {
                    let p = FtKernelParams::new(t, cfg.theta, h)?;
                    Some(norm_ft_sq_grid(&p, ORACLE_CELLS)?)
                } else {
                    None
                };
                FtNormRow { t, breakdown: Some(b), residual: b.total - slope * t, oracle, status: "ok".into() }
            }
            Err(e) if e.is_user_error() && cfg.t_grid.len() == 1 => return Err(e),
            Err(e) => FtNormRow { t, breakdown: None, residual: f64::NAN, oracle: None, status: e.to_string() },
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtNormPayload {
    pub target_slope: f64,
    pub rows: Vec<FtNormRow>,
}

pub fn cmd_ftnorm(cfg: &RunConfig, oracle: bool) -> Result<ResultEnvelope<FtNormPayload>> {
    let start = Instant::now();
    prepare_out(cfg)?;
    let cache = cache_for(cfg);
    let rows = cfg.pool()?.install(|| ftnorm_rows(cfg, &cache, oracle))?;
    let mut header = vec!["T", "H", "theta", "m11", "m12", "m31", "m32", "m33", "total", "residual"];
    if oracle {
        header.push("oracle");
    }
    header.push("status");
    let nan = f64::NAN;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let b = r.breakdown.unwrap_or(MTermBreakdown { m11: nan, m12: nan, m31: nan, m32: nan, m33: nan, total: nan });
            let mut v: Vec<String> =
                [r.t, cfg.h, cfg.theta, b.m11, b.m12, b.m31, b.m32, b.m33, b.total, r.residual].iter().map(|&x| fmt_num(x)).collect();
            if oracle {
                v.push(fmt_num(r.oracle.unwrap_or(nan)));
            }
            v.push(r.status.clone());
            v
        })
        .collect();
    let slope = target_slope(cfg.hurst()?, cfg.theta);
    let meta = meta_block("ftnorm", cfg, &[("target_slope", fmt_num(slope))]);
    write_csv(&cfg.out.join("ftnorm.csv"), &meta, &header, &csv_rows)?;
    let env = envelope("ftnorm", cfg, start, &cache, FtNormPayload { target_slope: slope, rows });
    write_json(&cfg.out.join("ftnorm.json"), &env)?;
    Ok(env)
}

pub fn cmd_asymptote(cfg: &RunConfig) -> Result<ResultEnvelope<crate::asymlab::Theorem11Report>> {
    let start = Instant::now();
    prepare_out(cfg)?;
    let cache = cache_for(cfg);
    let h = cfg.hurst()?;
    if cfg.t_grid.len() < 4 || cfg.t_grid.last().copied().unwrap_or(0.0) < 100.0 {
        return Err(Error::Config("asymptote needs at least four horizons reaching T >= 100".into()));
    }
    let breakdowns = cfg.pool()?.install(|| {
        cfg.t_grid.iter().map(|&t| norm_cached(&cache, cfg, t).map(|b| (t, b))).collect::<Result<Vec<_>>>()
    })?;
    let report = theorem11_from_breakdowns(h, cfg.theta, breakdowns)?;
    let mut dat = meta_block("asymptote", cfg, &[]);
    dat.push_str("# T norm residual residual_over_T T^(2H-1) 1/T\n");
    for (k, s) in report.scaling.iter().enumerate() {
        let _ = writeln!(
            dat,
            "{} {} {} {} {} {}",
            s.t,
            report.breakdowns[k].1.total,
            report.residuals[k],
            s.residual_over_t,
            s.old_rate,
            s.new_rate
        );
    }
    fs::write(cfg.out.join("asymptote.dat"), dat)?;
    let env = envelope("asymptote", cfg, start, &cache, report);
    write_json(&cfg.out.join("asymptote.json"), &env)?;
    Ok(env)
}

// ---------------------------------------------------------------------------
// appendix

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub id: String,
    pub t: f64,
    pub value: f64,
    pub fitted_slope: f64,
    pub closed_slope: f64,
    pub rel_err: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixPayload {
    pub rows: Vec<AppendixRow>,
}

pub fn parse_ids(ids: &str) -> Result<Vec<AppendixIntegralId>> {
    if ids.trim() == "all" {
        return Ok(AppendixIntegralId::ALL.to_vec());
    }
    ids.split(',').map(|s| AppendixIntegralId::parse(s.trim())).collect()
}

fn appendix_rows(cfg: &RunConfig, cache: &Cache, ids: &[AppendixIntegralId]) -> Result<Vec<AppendixRow>> {
    let h = cfg.hurst()?;
    let mut rows = Vec::new();
    for &id in ids {
        let closed = closed_form_slope(id, h)?;
        let vals: Vec<(f64, Result<f64>)> =
            cfg.t_grid.par_iter().map(|&t| (t, integral_cached(cache, cfg, id, t))).collect();
        let ok: Vec<(f64, f64)> = vals.iter().filter_map(|(t, v)| v.as_ref().ok().map(|v| (*t, *v))).collect();
        let (fitted, fit_status) = match fit_asymptote(&ok) {
            Ok(f) => (f.slope, None),
            Err(e) => (f64::NAN, Some(format!("no slope fit: {e}"))),
        };
        let rel = (fitted - closed).abs() / closed.abs();
        for (t, v) in vals {
            let (value, status) = match v {
                Ok(v) => (v, fit_status.clone().unwrap_or_else(|| "ok".into())),
                Err(e) => (f64::NAN, e.to_string()),
            };
            rows.push(AppendixRow {
                id: id.name().to_string(),
                t,
                value,
                fitted_slope: fitted,
                closed_slope: closed,
                rel_err: rel,
                status,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_appendix(cfg: &RunConfig, ids: &[AppendixIntegralId]) -> Result<ResultEnvelope<AppendixPayload>> {
    let start = Instant::now();
    prepare_out(cfg)?;
    let cache = cache_for(cfg);
    let rows = cfg.pool()?.install(|| appendix_rows(cfg, &cache, ids))?;
    let header = ["id", "T", "value", "fitted_slope", "closed_slope", "rel_err", "status"];
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                fmt_num(r.t),
                fmt_num(r.value),
                fmt_num(r.fitted_slope),
                fmt_num(r.closed_slope),
                fmt_num(r.rel_err),
                r.status.clone(),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("appendix.csv"), &meta_block("appendix", cfg, &[]), &header, &csv_rows)?;
    let env = envelope("appendix", cfg, start, &cache, AppendixPayload { rows });
    write_json(&cfg.out.join("appendix.json"), &env)?;
    Ok(env)
}

// ---------------------------------------------------------------------------
// identity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityPayload {
    #[serde(rename = "H")]
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

/// Slope identity with the left side scaled by `lhs_factor` (1 in normal runs).
pub fn identity_payload(h: HurstParam, lhs_factor: f64) -> Result<IdentityPayload> {
    let c = composite_slopes(h)?;
    let a = alpha_h(h);
    let lhs = ft_norm_slope(h) * lhs_factor;
    let rhs = c.a3 + 2.0 * a * (a * c.a1 - c.a2);
    Ok(IdentityPayload { h: h.value(), lhs, rhs, rel_err: (lhs - rhs).abs() / lhs.abs(), a1: c.a1, a2: c.a2, a3: c.a3 })
}

pub fn cmd_identity(cfg: &RunConfig) -> Result<ResultEnvelope<IdentityPayload>> {
    let start = Instant::now();
    prepare_out(cfg)?;
    let cache = cache_for(cfg);
    let p = identity_payload(cfg.hurst()?, 1.0)?;
    let env = envelope("identity", cfg, start, &cache, p);
    write_json(&cfg.out.join("identity.json"), &env)?;
    Ok(env)
}

// ---------------------------------------------------------------------------
// be-rate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BePayload {
    pub summary: BESummary,
    pub beta_lse_flag: String,
    pub beta_mm_flag: String,
}

fn flag(reliable: bool) -> String {
    if reliable { "reliable" } else { "unreliable" }.to_string()
}

pub fn cmd_be_rate(cfg: &RunConfig) -> Result<ResultEnvelope<BePayload>> {
    let start = Instant::now();
    prepare_out(cfg)?;
    let cache = cache_for(cfg);
    let h = cfg.hurst()?;
    let grid: Vec<String> = cfg.t_grid.iter().map(|&t| num_key(t)).collect();
    let key = format!(
        "H={};theta={};sigma={};T={};delta={};reps={};seed={}",
        num_key(cfg.h),
        num_key(cfg.theta),
        num_key(cfg.sigma),
        grid.join(","),
        num_key(cfg.delta),
        cfg.n_reps,
        cfg.seed
    );
    let summary: BESummary = cfg.pool()?.install(|| {
        cache.get_or_compute("be-rate", &key, || {
            be_experiment(cfg.theta, cfg.sigma, h, &cfg.t_grid, cfg.n_reps, cfg.delta, cfg.seed)
        })
    })?;
    let header = ["T", "n_reps", "dk_lse", "dk_mm", "var_norm_lse", "var_norm_mm", "mc_floor", "status"];
    let mut rows: Vec<(f64, Vec<String>)> = summary
        .rows
        .iter()
        .map(|r| {
            let used = cfg.n_reps - r.failed_reps;
            let status = if r.failed_reps > 0 { format!("{} replications dropped", r.failed_reps) } else { "ok".into() };
            (
                r.t,
                vec![
                    fmt_num(r.t),
                    used.to_string(),
                    fmt_num(r.dk_lse),
                    fmt_num(r.dk_mm),
                    fmt_num(r.var_norm_lse),
                    fmt_num(r.var_norm_mm),
                    fmt_num(summary.mc_floor),
                    status,
                ],
            )
        })
        .collect();
    for (t, why) in &summary.failures {
        let nan = "NaN".to_string();
        rows.push((*t, vec![fmt_num(*t), "0".into(), nan.clone(), nan.clone(), nan.clone(), nan, fmt_num(summary.mc_floor), why.clone()]));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let extra = [
        ("beta_lse", fmt_num(summary.beta_lse.beta)),
        ("beta_lse_stderr", fmt_num(summary.beta_lse.stderr)),
        ("beta_lse_flag", flag(summary.beta_lse.reliable)),
        ("beta_mm", fmt_num(summary.beta_mm.beta)),
        ("beta_mm_stderr", fmt_num(summary.beta_mm.stderr)),
        ("beta_mm_flag", flag(summary.beta_mm.reliable)),
    ];
    let meta = meta_block("be-rate", cfg, &extra);
    let csv_rows: Vec<Vec<String>> = rows.into_iter().map(|r| r.1).collect();
    write_csv(&cfg.out.join("be.csv"), &meta, &header, &csv_rows)?;
    let mut dat = meta_block("be-rate", cfg, &[]);
    dat.push_str("# log_T log_dk_lse log_dk_mm\n");
    for r in &summary.rows {
        let _ = writeln!(dat, "{} {} {}", r.t.ln(), r.dk_lse.ln(), r.dk_mm.ln());
    }
    fs::write(cfg.out.join("be_rate.dat"), dat)?;
    let payload = BePayload {
        beta_lse_flag: flag(summary.beta_lse.reliable),
        beta_mm_flag: flag(summary.beta_mm.reliable),
        summary,
    };
    let env = envelope("be-rate", cfg, start, &cache, payload);
    write_json(&cfg.out.join("be.json"), &env)?;
    Ok(env)
}

// ---------------------------------------------------------------------------
// selftest

/// Fault injection knobs for the self test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    /// multiplies the asymptotic variance constant on the left of the identity
    pub sigma_h_factor: f64,
    /// multiplies both quadrature tolerances
    pub tol_factor: f64,
    /// replications for the chaos-variance check
    pub chaos_reps: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { sigma_h_factor: 1.0, tol_factor: 1.0, chaos_reps: 6000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

fn check(name: &str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name: name.into(), passed, detail },
        Err(e) => CheckResult { name: name.into(), passed: false, detail: format!("error: {e}") },
    }
}

fn check_methods(h: HurstParam, qc: &QuadConfig) -> Result<(bool, String)> {
    let mut worst = (0.0f64, 0.0f64);
    for (_, f, g) in reference_battery() {
        let j = inner_product(&f, &g, h, IPMethod::JolisMeasure, qc)?;
        let scale = j.abs().max(1.0);
        let w = inner_product(&f, &g, h, IPMethod::WindowDecomposed, qc)?;
        let fo = inner_product(&f, &g, h, IPMethod::FourierSpectral, qc)?;
        worst.0 = worst.0.max((j - w).abs() / scale);
        worst.1 = worst.1.max((j - fo).abs() / scale);
    }
    Ok((
        worst.0 <= 1e-6 && worst.1 <= 1e-5,
        format!("max scaled |measure - window| = {:.2e}, |measure - spectral| = {:.2e}", worst.0, worst.1),
    ))
}

fn check_identity(h: HurstParam, factor: f64) -> Result<(bool, String)> {
    let p = identity_payload(h, factor)?;
    Ok((p.rel_err <= 1e-4, format!("H = {}: lhs {:.10} rhs {:.10} rel_err {:.2e}", p.h, p.lhs, p.rhs, p.rel_err)))
}

fn check_q_slope(h: HurstParam, qc: &QuadConfig) -> Result<(bool, String)> {
    let id = AppendixIntegralId::Q;
    let samples = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .map(|&t| eval_appendix_integral_with(id, t, h, qc).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_asymptote(&samples)?;
    let closed = closed_form_slope(id, h)?;
    let exact = 6.0 * (-2.0f64).exp() + 2.0;
    let rel = (fit.slope - closed).abs() / closed;
    Ok((
        rel <= 0.01 && (closed - exact).abs() <= 1e-15 && Q_SLOPE == closed,
        format!("fitted {:.8} closed {:.8} rel_err {:.2e}", fit.slope, closed, rel),
    ))
}

/// Exact variance of `sigma/2 (z^T F z - tr FC)` is `sigma^2/2 tr((FC)^2)`.
fn check_chaos(cfg: &RunConfig, h: HurstParam, reps: usize) -> Result<(bool, String)> {
    let t = 10.0;
    let delta = 1.0 / 16.0;
    let params = ModelParams::new(1.0, 1.0, h, t)?;
    let n = grid_size(t, delta)?;
    let engine = SampleEngine::new(params, n)?;
    let nums: Vec<f64> = (0..reps)
        .into_par_iter()
        .map_init(|| engine.buffers(), |buf, i| match buf {
            Ok(b) => engine.draw_with(derive_seed(cfg.seed, i as u64), b).map(|s| s.numerator),
            Err(e) => Err(e.clone()),
        })
        .collect::<Result<_>>()?;
    let m = moments(&nums);
    let m4 = nums.iter().map(|x| (x - m.mean).powi(4)).sum::<f64>() / reps as f64;
    let se = ((m4 - m.var * m.var) / reps as f64).sqrt();
    let f = crate::fbmsim::ToeplitzKernel::exponential(n, delta, 1.0)?.operator().to_dense();
    let c = crate::hinner::grid_cov(h, n, delta)?.c.to_dense();
    let fc: Array2<f64> = f.dot(&c);
    let exact = 0.5 * (&fc * &fc.t()).sum();
    let half_norm = 0.5 * norm_ft_sq(&FtKernelParams::new(t, 1.0, h)?)?.total;
    let z = (m.var - exact) / se;
    let gap = (exact - half_norm).abs() / half_norm;
    Ok((
        z.abs() <= 5.0 && gap <= 0.05,
        format!("MC var {:.5} vs grid-exact {:.5} ({z:+.2} SE); half norm {:.5} (gap {:.2}%)", m.var, exact, half_norm, 100.0 * gap),
    ))
}

pub fn run_selftest(cfg: &RunConfig, opts: &SelftestOptions) -> Result<SelftestReport> {
    let h = cfg.hurst()?;
    let qc = cfg.quad_cfg().scaled(opts.tol_factor);
    let checks = cfg.pool()?.install(|| {
        vec![
            check("method agreement", check_methods(h, &qc)),
            check("slope identity", check_identity(h, opts.sigma_h_factor)),
            check("Q slope", check_q_slope(h, &qc)),
            check("chaos variance at T=10", check_chaos(cfg, h, opts.chaos_reps)),
        ]
    });
    Ok(SelftestReport { checks })
}

/// Process exit code for an error: 2 for bad input, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_user_error() {
        2
    } else {
        1
    }
}

pub const EXIT_ACCEPTANCE: i32 = 3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_single_terms() {
        let t = parse_terms("1@[0,1]").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].a, t[0].b, t[0].term.coef), (0.0, 1.0, 1.0));
        let t = parse_terms(" 2.5 * s^0.5 * exp(-2*s) @ [1, 3] - exp(s)@[0,0.5]").unwrap();
        assert_eq!(t[0].term, ExpPolyTerm::new(2.5, 0.5, -2.0));
        assert_eq!(t[1].term, ExpPolyTerm::new(-1.0, 0.0, 1.0));
        let t = parse_terms("s*s*exp(-s)@[0,2]").unwrap();
        assert_eq!(t[0].term, ExpPolyTerm::new(1.0, 2.0, -1.0));
        let t = parse_terms("-1e-1*exp(0.5s)@[0,2]").unwrap();
        assert_eq!(t[0].term, ExpPolyTerm::new(-0.1, 0.0, 0.5));
    }

    #[test]
    fn grammar_error_positions() {
        let pos = |s: &str| match parse_terms(s) {
            Err(Error::Parse { pos, .. }) => pos,
            other => panic!("{s}: {other:?}"),
        };
        assert_eq!(pos("1@[0,1"), 6);
        assert_eq!(pos("1@[2,1]"), 2);
        assert_eq!(pos("x@[0,1]"), 0);
        assert_eq!(pos("1@[0,1] 2@[1,2]"), 8);
        assert_eq!(pos("exp(-s@[0,1]"), 6);
        assert_eq!(pos("s^-1@[0,1]"), 2);
    }

    #[test]
    fn config_layers() {
        let mut c = RunConfig::default();
        for (k, v) in parse_config_text("h = 0.35\n# comment\n\ndelta = 1/32\nt_grid = 10, 20 ,40\n").unwrap() {
            c.set(&k, &v).unwrap();
        }
        c.set("n-reps", "500").unwrap();
        assert_eq!(c.h, 0.35);
        assert_eq!(c.delta, 1.0 / 32.0);
        assert_eq!(c.t_grid, vec![10.0, 20.0, 40.0]);
        assert_eq!(c.n_reps, 500);
        assert!(c.validate().is_ok());
        assert!(c.set("bogus", "1").is_err());
        assert!(parse_config_text("h 0.3").is_err());
        c.h = 0.5;
        assert!(c.validate().unwrap_err().is_user_error());
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("fbmlab-cache-unit-{}", std::process::id()));
        let cache = Cache::new(Some(dir.clone()));
        let x = vec![0.1 + 0.2, std::f64::consts::PI / 7.0, 1e-300, -2.5e17];
        let first: Vec<f64> = cache.get_or_compute("t", "k", || Ok(x.clone())).unwrap();
        let second: Vec<f64> = cache.get_or_compute("t", "k", || panic!("should hit")).unwrap();
        assert_eq!(cache.hits(), 1);
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_ne!(Cache::digest("t", "k"), Cache::digest("t", "k2"));
        fs::remove_dir_all(dir).ok();
    }
}
