use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde_json::Value;

use screwbif::Curve3;

/// Full double precision: 17 significant digits.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rounds to 12 significant digits for the JSON summaries.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Applies [`round12`] to every number in a JSON document.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            serde_json::Number::from_f64(round12(n.as_f64().unwrap())).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, x)| (k, round_json(x))).collect()),
        other => other,
    }
}

/// Writes a numeric CSV table preceded by `# ` provenance lines.
pub fn write_table(
    path: &Path,
    provenance: &[String],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    write_table_to(create(path)?, provenance, header, rows)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_table_to<W: Write>(
    mut out: W,
    provenance: &[String],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    for line in provenance {
        writeln!(out, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &Curve3, provenance: &[String]) -> anyhow::Result<()> {
    curve
        .write_csv(create(path)?, provenance)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json(path: &Path, value: Value) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &round_json(value))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(-6.0000000000004), -6.0);
        assert_eq!(round12(0.0), 0.0);
        let v = round_json(json!({"a": [2.0 / 3.0, 3], "b": {"c": 1e-20 / 3.0}}));
        assert_eq!(v["a"][0], json!(0.666666666667));
        assert_eq!(v["a"][1], json!(3));
        assert_eq!(v["b"]["c"], json!(3.33333333333e-21));
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [1.0 / 3.0, -2.0f64.sqrt() * 1e-7, 6.02214076e23] {
            assert_eq!(full(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn table_has_comments_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/t.csv");
        write_table(&path, &["k = 2".into()], &["a", "b"], [vec![full(1.0), full(2.0)]]).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# k = 2");
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines.len(), 3);
    }
}
