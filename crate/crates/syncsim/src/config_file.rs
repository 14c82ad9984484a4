//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment, nested tables use dotted keys
//! (`lat.d1_hit = 1`, `energy_coeff.shared_mem_access = 20`). Keys that are
//! not given keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use syncsim_core::config::{
    default_config, Backend, Benchmark, RetryLimit, SemInitPolicy, SimConfig, Violation,
};
use syncsim_core::EnergyEventKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    Type {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Getter = Box<dyn Fn(&SimConfig) -> String>;
type Setter = Box<dyn Fn(&mut SimConfig, &str) -> Result<(), ()>>;

struct Field {
    key: String,
    expected: &'static str,
    get: Getter,
    set: Setter,
}

macro_rules! field {
    ($key:expr, $ty:ty, $expected:expr, |$c:ident| $place:expr) => {
        Field {
            key: $key.into(),
            expected: $expected,
            get: Box::new(|$c: &SimConfig| $place.to_string()),
            set: Box::new(|$c: &mut SimConfig, s: &str| {
                $place = s.parse::<$ty>().map_err(|_| ())?;
                Ok(())
            }),
        }
    };
}

const UINT: &str = "a nonnegative integer";

fn fields() -> Vec<Field> {
    let mut f = vec![
        field!("num_cores", usize, UINT, |c| c.num_cores),
        field!("d1_size_bytes", u64, UINT, |c| c.d1_size_bytes),
        field!("d1_line_bytes", u64, UINT, |c| c.d1_line_bytes),
        field!("tlb_entries", u64, UINT, |c| c.tlb_entries),
        field!("page_size_bytes", u64, UINT, |c| c.page_size_bytes),
        field!("private_mem_bytes", u64, UINT, |c| c.private_mem_bytes),
        field!("shared_mem_count", usize, UINT, |c| c.shared_mem_count),
        field!("shared_mem_bytes", u64, UINT, |c| c.shared_mem_bytes),
        field!("bus_cycles_per_transfer", u64, UINT, |c| c
            .bus_cycles_per_transfer),
        field!("lat.d1_hit", u64, UINT, |c| c.lat.d1_hit),
        field!("lat.d1_miss_penalty", u64, UINT, |c| c.lat.d1_miss_penalty),
        field!("lat.tlb_miss_walk", u64, UINT, |c| c.lat.tlb_miss_walk),
        field!("lat.private_access", u64, UINT, |c| c.lat.private_access),
        field!("lat.shared_access", u64, UINT, |c| c.lat.shared_access),
    ];
    for kind in EnergyEventKind::ALL {
        f.push(Field {
            key: format!("energy_coeff.{}", kind.name()),
            expected: "a number",
            get: Box::new(move |c: &SimConfig| c.energy_coeff.get(kind).to_string()),
            set: Box::new(move |c: &mut SimConfig, s: &str| {
                c.energy_coeff.set(kind, s.parse().map_err(|_| ())?);
                Ok(())
            }),
        });
    }
    f.extend([
        field!("backend", Backend, "lock, transaction or semaphore", |c| c
            .backend),
        field!(
            "sem_init_policy",
            SemInitPolicy,
            "one or num_processors",
            |c| c.sem_init_policy
        ),
        field!("spin_probe_interval", u64, UINT, |c| c.spin_probe_interval),
        field!("tx_retry_backoff_base", u64, UINT, |c| c
            .tx_retry_backoff_base),
        field!(
            "tx_max_retries",
            RetryLimit,
            "an integer or `unlimited`",
            |c| c.tx_max_retries
        ),
        field!("benchmark", Benchmark, "rbtree, fft or micro", |c| c
            .benchmark),
        field!("rbtree.ops_per_thread", u32, UINT, |c| c
            .rbtree
            .ops_per_thread),
        field!("rbtree.key_range", u64, UINT, |c| c.rbtree.key_range),
        field!("fft.n", u32, UINT, |c| c.fft.n),
        field!("micro.iters_per_thread", u32, UINT, |c| c
            .micro
            .iters_per_thread),
        field!("micro.num_regions", u32, UINT, |c| c.micro.num_regions),
        field!("seed", u64, UINT, |c| c.seed),
        field!("max_cycles", u64, UINT, |c| c.max_cycles),
    ]);
    f
}

/// Every accepted key, in serialization order.
pub fn keys() -> Vec<String> {
    fields().into_iter().map(|f| f.key).collect()
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(v)
}

/// Applies the settings in `text` on top of `base` without validating.
pub fn apply(base: SimConfig, text: &str) -> Result<SimConfig, ConfigError> {
    let fields = fields();
    let mut cfg = base;
    let mut seen = vec![false; fields.len()];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), unquote(value.trim()));
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        let idx =
            fields
                .iter()
                .position(|f| f.key == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                })?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
        let f = &fields[idx];
        (f.set)(&mut cfg, value).map_err(|()| ConfigError::Type {
            line,
            key: key.into(),
            value: value.into(),
            expected: f.expected,
        })?;
    }
    Ok(cfg)
}

/// Parses a configuration document over the defaults and validates it.
pub fn load_config(text: &str) -> Result<SimConfig, ConfigError> {
    let cfg = apply(default_config(), text)?;
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

pub fn load_config_file(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_config(&text)
}

/// Writes every key. `load_config(&serialize(c))` reproduces `c`.
pub fn serialize(cfg: &SimConfig) -> String {
    let mut out = String::new();
    for f in fields() {
        let _ = writeln!(out, "{} = {}", f.key, (f.get)(cfg));
    }
    out
}
