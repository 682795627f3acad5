//! Effective configuration: built-in defaults, then an optional JSON config
//! file, then the flags given on the command line.

use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Dotted path into the config and the flag value to put there.
pub type Override = (String, Value);

pub fn given(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Collects `(prefix + path, value)` for every listed flag that was typed.
macro_rules! overrides {
    ($m:expr, $prefix:expr, $args:ident; $($field:ident => $path:literal),* $(,)?) => {{
        let mut out: Vec<$crate::config::Override> = Vec::new();
        $(
            if $crate::config::given($m, stringify!($field)) {
                let v = serde_json::to_value(&$args.$field).expect("flag values serialize");
                out.push((format!("{}{}", $prefix, $path), v));
            }
        )*
        out
    }};
}
pub(crate) use overrides;

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().expect("just made an object");
        if parts.peek().is_none() {
            obj.insert(key.to_string(), v);
            return;
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

/// Builds the effective config of type `T`.
pub fn layered<T>(file: Option<&Path>, flags: Vec<Override>) -> CliResult<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut v = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let user: Value =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if !user.is_object() {
            return Err(CliError::config(format!("{}: config must be a JSON object", path.display())));
        }
        merge(&mut v, user);
    }
    for (path, val) in flags {
        set_path(&mut v, &path, val);
    }
    serde_json::from_value(v).map_err(|e| CliError::config(format!("invalid configuration: {e}")))
}

/// Pretty JSON with a trailing newline.
pub fn snapshot<T: Serialize>(path: &Path, cfg: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(cfg).expect("configs serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Inner {
        a: f64,
        b: usize,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Outer {
        name: String,
        inner: Inner,
    }

    impl Default for Inner {
        fn default() -> Self {
            Self { a: 1.0, b: 2 }
        }
    }

    impl Default for Outer {
        fn default() -> Self {
            Self { name: "x".into(), inner: Inner::default() }
        }
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"inner": {"a": 5.0, "b": 7}}"#).unwrap();
        let cfg: Outer = layered(Some(&f), vec![("inner.b".into(), Value::from(9))]).unwrap();
        assert_eq!(cfg, Outer { name: "x".into(), inner: Inner { a: 5.0, b: 9 } });
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        fs::write(&f, r#"{"inner": {"c": 1}}"#).unwrap();
        let err = layered::<Outer>(Some(&f), vec![]).unwrap_err();
        assert_eq!(err.kind, salsr::ErrorKind::Config);
        let missing = layered::<Outer>(Some(&dir.path().join("nope.json")), vec![]).unwrap_err();
        assert_eq!(missing.kind, salsr::ErrorKind::Io);
    }
}
