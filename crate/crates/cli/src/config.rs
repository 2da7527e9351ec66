//! Flat `key = value` scenario files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Kernel,
    Simulate,
    Break,
    Check,
    Decay,
    Soliton,
    Entropy,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Kernel,
        Command::Simulate,
        Command::Break,
        Command::Check,
        Command::Decay,
        Command::Soliton,
        Command::Entropy,
        Command::Sweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Simulate => "simulate",
            Command::Break => "break",
            Command::Check => "check",
            Command::Decay => "decay",
            Command::Soliton => "soliton",
            Command::Entropy => "entropy",
            Command::Sweep => "sweep",
        }
    }

    pub fn schema(&self) -> &'static [Key] {
        match self {
            Command::Kernel => KERNEL,
            Command::Simulate => SIMULATE,
            Command::Break => BREAK,
            Command::Check => CHECK,
            Command::Decay => DECAY,
            Command::Soliton => SOLITON,
            Command::Entropy => ENTROPY,
            Command::Sweep => &[],
        }
    }

    pub fn key(&self, name: &str) -> Option<&'static Key> {
        self.schema().iter().find(|k| k.name == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Real,
    /// Positive real.
    Positive,
    /// Real in `(0, 1)`.
    Fraction,
    Int,
    /// Integer >= 1.
    Count,
    Bool,
    Choice(&'static [&'static str]),
    Text,
}

/// A default, or `None` for a required key. `Auto` means "derive from the
/// other parameters".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(&'static str),
    Auto,
    Required,
}

#[derive(Debug)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Fallback,
}

const fn key(name: &'static str, kind: Kind, default: Fallback) -> Key {
    Key { name, kind, default }
}

use Fallback as D;
use Kind as K;

const U0_KINDS: &[&str] = &["gaussian", "sech2", "sine"];
const FV_U0_KINDS: &[&str] = &["gaussian", "sech2", "riemann"];
const THEOREMS: &[&str] = &["2.1", "2.2", "2.3", "2.4"];

const KERNEL: &[Key] = &[
    key("name", K::Text, D::Text("kernel")),
    key("s", K::Positive, D::Real(2.0)),
    key("xmin", K::Real, D::Real(-10.0)),
    key("xmax", K::Real, D::Real(10.0)),
    key("n", K::Count, D::Int(1001)),
    key("method", K::Choice(&["auto", "series", "quadrature"]), D::Text("auto")),
];

const SIMULATE: &[Key] = &[
    key("name", K::Text, D::Text("simulate")),
    key("s", K::Positive, D::Real(2.0)),
    key("p", K::Count, D::Int(1)),
    key("L", K::Positive, D::Real(30.0)),
    key("n", K::Count, D::Int(1024)),
    key("dt0", K::Positive, D::Real(1e-3)),
    key("cfl", K::Positive, D::Real(0.5)),
    key("t_end", K::Positive, D::Real(1.0)),
    key("slope_stop", K::Positive, D::Auto),
    key("sample_every", K::Count, D::Auto),
    key("dispersion", K::Bool, D::Bool(true)),
    key("energy", K::Bool, D::Bool(true)),
    key("snapshot", K::Bool, D::Bool(false)),
    key("u0.kind", K::Choice(U0_KINDS), D::Text("gaussian")),
    key("u0.lambda", K::Real, D::Real(1.0)),
    key("u0.width", K::Positive, D::Real(1.0)),
    key("u0.center", K::Real, D::Real(0.0)),
    key("u0.mode", K::Count, D::Int(1)),
];

const BREAK: &[Key] = &[
    key("name", K::Text, D::Text("break")),
    key("theorem", K::Choice(THEOREMS), D::Required),
    key("s", K::Positive, D::Real(0.5)),
    key("p", K::Count, D::Int(1)),
    key("delta", K::Fraction, D::Real(0.1)),
    key("c_univ", K::Positive, D::Real(1.0)),
    key("a", K::Positive, D::Auto),
    key("b", K::Positive, D::Auto),
    key("L", K::Positive, D::Real(8.0)),
    key("n", K::Count, D::Int(4096)),
    key("dt0", K::Positive, D::Real(1.0)),
    key("cfl", K::Positive, D::Real(0.5)),
    key("t_end", K::Positive, D::Auto),
    key("slope_stop", K::Positive, D::Auto),
    key("dispersion", K::Bool, D::Bool(true)),
    key("tracking", K::Bool, D::Bool(true)),
    key("u0.kind", K::Choice(U0_KINDS), D::Text("gaussian")),
    key("u0.lambda", K::Real, D::Real(1.0)),
    key("u0.width", K::Positive, D::Real(1.0)),
    key("u0.center", K::Real, D::Real(0.0)),
    key("u0.mode", K::Count, D::Int(1)),
];

const CHECK: &[Key] = &[
    key("name", K::Text, D::Text("check")),
    key("theorem", K::Choice(THEOREMS), D::Required),
    key("s", K::Positive, D::Real(0.5)),
    key("p", K::Count, D::Int(1)),
    key("delta", K::Fraction, D::Real(0.1)),
    key("c_univ", K::Positive, D::Real(1.0)),
    key("a", K::Positive, D::Auto),
    key("b", K::Positive, D::Auto),
    key("L", K::Positive, D::Real(20.0)),
    key("n", K::Count, D::Int(1024)),
    // run keys, accepted so that a break scenario can be checked as is
    key("dt0", K::Positive, D::Real(1.0)),
    key("cfl", K::Positive, D::Real(0.5)),
    key("t_end", K::Positive, D::Auto),
    key("slope_stop", K::Positive, D::Auto),
    key("dispersion", K::Bool, D::Bool(true)),
    key("tracking", K::Bool, D::Bool(true)),
    key("u0.kind", K::Choice(U0_KINDS), D::Text("gaussian")),
    key("u0.lambda", K::Real, D::Real(1.0)),
    key("u0.width", K::Positive, D::Real(1.0)),
    key("u0.center", K::Real, D::Real(0.0)),
    key("u0.mode", K::Count, D::Int(1)),
];

const DECAY: &[Key] = &[
    key("name", K::Text, D::Text("decay")),
    key("s", K::Positive, D::Real(0.5)),
    key("tmin", K::Positive, D::Real(1.0)),
    key("tmax", K::Positive, D::Real(200.0)),
    key("times", K::Count, D::Int(40)),
    key("L", K::Positive, D::Auto),
    key("n", K::Count, D::Auto),
    key("u0.kind", K::Choice(&["gaussian", "sech2"]), D::Text("gaussian")),
    key("u0.lambda", K::Real, D::Real(1.0)),
    key("u0.width", K::Positive, D::Real(1.0)),
    key("u0.center", K::Real, D::Real(0.0)),
];

const SOLITON: &[Key] = &[
    key("name", K::Text, D::Text("soliton")),
    key("s", K::Positive, D::Real(2.0)),
    key("p", K::Count, D::Int(1)),
    key("nu", K::Real, D::Real(-1.1)),
    key("sweep", K::Text, D::Text("")),
    key("L", K::Positive, D::Real(64.0)),
    key("n", K::Count, D::Int(1024)),
    key("tol", K::Positive, D::Real(1e-10)),
    key("max_iter", K::Count, D::Int(50)),
];

const ENTROPY: &[Key] = &[
    key("name", K::Text, D::Text("entropy")),
    key("s", K::Positive, D::Real(2.0)),
    key("cells", K::Count, D::Int(2000)),
    key("L", K::Positive, D::Real(20.0)),
    key("t_end", K::Positive, D::Real(2.0)),
    key("cfl", K::Positive, D::Real(0.45)),
    key("max_dt", K::Positive, D::Real(0.05)),
    key("flux", K::Choice(&["rusanov", "godunov"]), D::Text("rusanov")),
    key("source", K::Bool, D::Bool(true)),
    key("samples", K::Count, D::Int(20)),
    key("perturb", K::Real, D::Real(0.0)),
    key("u0.kind", K::Choice(FV_U0_KINDS), D::Text("gaussian")),
    key("u0.lambda", K::Real, D::Real(1.0)),
    key("u0.width", K::Positive, D::Real(1.0)),
    key("u0.center", K::Real, D::Real(0.0)),
    key("u0.left", K::Real, D::Real(1.0)),
    key("u0.right", K::Real, D::Real(0.0)),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Auto,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Text(t) => f.write_str(t),
            Value::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, or `None` for errors not tied to a line.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses `raw` as a value for `key`.
pub fn parse_value(key: &Key, raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    if raw == "auto" {
        return match key.default {
            D::Auto => Ok(Value::Auto),
            _ => Err(format!("'{}' does not accept auto", key.name)),
        };
    }
    let real = || {
        raw.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("'{}' expects a real number, got '{raw}'", key.name))
    };
    let int = || {
        raw.parse::<i64>()
            .map_err(|_| format!("'{}' expects an integer, got '{raw}'", key.name))
    };
    match key.kind {
        K::Real => real().map(Value::Real),
        K::Positive => match real()? {
            x if x > 0.0 => Ok(Value::Real(x)),
            x => Err(format!("'{}' must be > 0, got {x}", key.name)),
        },
        K::Fraction => match real()? {
            x if x > 0.0 && x < 1.0 => Ok(Value::Real(x)),
            x => Err(format!("'{}' must lie in (0, 1), got {x}", key.name)),
        },
        K::Int => int().map(Value::Int),
        K::Count => match int()? {
            i if i >= 1 => Ok(Value::Int(i)),
            i => Err(format!("'{}' must be >= 1, got {i}", key.name)),
        },
        K::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("'{}' expects true or false, got '{raw}'", key.name)),
        },
        K::Choice(options) => {
            if options.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(format!("'{}' must be one of {}, got '{raw}'", key.name, options.join("|")))
            }
        }
        K::Text => Ok(Value::Text(raw.to_string())),
    }
}

fn default_value(key: &Key) -> Option<Value> {
    match key.default {
        D::Real(x) => Some(Value::Real(x)),
        D::Int(i) => Some(Value::Int(i)),
        D::Bool(b) => Some(Value::Bool(b)),
        D::Text(t) => Some(Value::Text(t.to_string())),
        D::Auto => Some(Value::Auto),
        D::Required => None,
    }
}

/// A resolved run: every key of the command's schema has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub command: Command,
    pub parameters: BTreeMap<String, Value>,
    pub output_dir: PathBuf,
}

impl Scenario {
    pub fn real(&self, key: &str) -> f64 {
        match self.parameters.get(key) {
            Some(Value::Real(x)) => *x,
            Some(Value::Int(i)) => *i as f64,
            other => panic!("{key} is not a real: {other:?}"),
        }
    }

    pub fn opt_real(&self, key: &str) -> Option<f64> {
        match self.parameters.get(key) {
            Some(Value::Auto) => None,
            _ => Some(self.real(key)),
        }
    }

    pub fn int(&self, key: &str) -> i64 {
        match self.parameters.get(key) {
            Some(Value::Int(i)) => *i,
            other => panic!("{key} is not an integer: {other:?}"),
        }
    }

    pub fn opt_int(&self, key: &str) -> Option<i64> {
        match self.parameters.get(key) {
            Some(Value::Auto) => None,
            _ => Some(self.int(key)),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.parameters.get(key) {
            Some(Value::Bool(b)) => *b,
            other => panic!("{key} is not a bool: {other:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.parameters.get(key) {
            Some(Value::Text(t)) => t,
            other => panic!("{key} is not text: {other:?}"),
        }
    }

    /// Sets `key` from its textual form, as if it had appeared in the file.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let k = self
            .command
            .key(key)
            .ok_or_else(|| ConfigError::general(format!("unknown key '{key}' for {}", self.command)))?;
        let v = parse_value(k, raw).map_err(ConfigError::general)?;
        if key == "name" {
            self.name = v.to_string();
        }
        self.parameters.insert(key.to_string(), v);
        Ok(())
    }

    /// Checks that every required key has a value.
    pub fn complete(&self) -> Result<(), ConfigError> {
        for k in self.command.schema() {
            if !self.parameters.contains_key(k.name) {
                return Err(ConfigError::general(format!("missing required key '{}'", k.name)));
            }
        }
        Ok(())
    }

    /// The resolved configuration in the file format, keys in schema order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in self.command.schema() {
            if let Some(v) = self.parameters.get(k.name) {
                out.push_str(&format!("{} = {v}\n", k.name));
            }
        }
        out
    }
}

/// Parses a scenario file for `command`, filling defaults.
///
/// Required keys may be left unset here and supplied later with
/// [`Scenario::set`]; call [`Scenario::complete`] before running.
pub fn parse_config(text: &str, command: Command) -> Result<Scenario, ConfigError> {
    let mut parameters = BTreeMap::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(lineno, format!("expected 'key = value', got '{content}'")))?;
        let name = k.trim();
        let key = command
            .key(name)
            .ok_or_else(|| ConfigError::at(lineno, format!("unknown key '{name}' for {command}")))?;
        if let Some(prev) = seen.insert(key.name, lineno) {
            return Err(ConfigError::at(lineno, format!("duplicate key '{name}' (first on line {prev})")));
        }
        let value = parse_value(key, v).map_err(|m| ConfigError::at(lineno, m))?;
        parameters.insert(name.to_string(), value);
    }
    for k in command.schema() {
        if !parameters.contains_key(k.name) {
            if let Some(v) = default_value(k) {
                parameters.insert(k.name.to_string(), v);
            }
        }
    }
    let name = match parameters.get("name") {
        Some(v) => v.to_string(),
        None => command.name().to_string(),
    };
    Ok(Scenario {
        name,
        command,
        parameters,
        output_dir: PathBuf::from("."),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_kernel_file_takes_defaults() {
        let sc = parse_config("", Command::Kernel).unwrap();
        sc.complete().unwrap();
        assert_eq!(sc.real("s"), 2.0);
        assert_eq!(sc.int("n"), 1001);
        assert_eq!(sc.name, "kernel");
    }

    #[test]
    fn negative_order_rejected_with_line() {
        let e = parse_config("# c\ns = -1\n", Command::Kernel).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("> 0"), "{e}");
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let e = parse_config("s = 1\nfoo = 2\n", Command::Kernel).unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse_config("n = 1.5\n", Command::Kernel).unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = parse_config("s = 1\ns = 2\n", Command::Kernel).unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = parse_config("just text\n", Command::Kernel).unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn required_key_reported() {
        let sc = parse_config("s = 0.5\n", Command::Check).unwrap();
        let e = sc.complete().unwrap_err();
        assert!(e.message.contains("theorem"));
    }

    #[test]
    fn auto_only_where_allowed() {
        assert!(parse_config("slope_stop = auto\n", Command::Simulate).is_ok());
        assert!(parse_config("t_end = auto\n", Command::Simulate).is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut sc = parse_config("theorem = 2.1\ns = 0.3\nu0.lambda = 12.5 # scaled\n", Command::Break).unwrap();
        sc.set("delta", "0.2").unwrap();
        let again = parse_config(&sc.render(), Command::Break).unwrap();
        assert_eq!(again.parameters, sc.parameters);
    }
}
