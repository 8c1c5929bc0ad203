//! Delimited-text outputs and score-list inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use midm::harness::CurvePoint;
use midm::{Error, Manifest, ScoreReport};

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// `# pmi` block of `index<TAB>pmi` rows, then a `# aggregate` block of
/// `key<TAB>value` rows.
pub fn score_report(report: &ScoreReport, epsilon: f64) -> String {
    let mut s = String::from("# pmi\nindex\tpmi\n");
    for (i, p) in report.pmi.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{}", num(*p));
    }
    s.push_str("# aggregate\n");
    let rows: [(&str, String); 7] = [
        ("mid", num(report.mid)),
        ("mi", num(report.mi)),
        ("mean_smd_x", num(report.mean_smd_x)),
        ("mean_smd_y", num(report.mean_smd_y)),
        ("mean_smd_z", num(report.mean_smd_z)),
        ("n", report.pmi.len().to_string()),
        ("epsilon", num(epsilon)),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k}\t{v}");
    }
    s
}

pub fn score_report_pretty(report: &ScoreReport, epsilon: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pairs        {}", report.pmi.len());
    let _ = writeln!(s, "MID          {:.6}", report.mid);
    let _ = writeln!(s, "MI (ref)     {:.6}", report.mi);
    let _ = writeln!(
        s,
        "mean SMD     x {:.4}  y {:.4}  z {:.4}",
        report.mean_smd_x, report.mean_smd_y, report.mean_smd_z
    );
    let _ = writeln!(s, "epsilon      {epsilon:e}");
    s
}

/// Per-item scores with an aggregate line.
pub fn item_scores(name: &str, scores: &[f64], aggregate: f64) -> String {
    let mut s = format!("# {name}\nindex\t{name}\n");
    for (i, v) in scores.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{}", num(*v));
    }
    let _ = writeln!(s, "# aggregate\nmean\t{}\nn\t{}", num(aggregate), scores.len());
    s
}

pub fn curve(points: &[CurvePoint]) -> String {
    let mut s = String::from("x\tvalue\tstderr\n");
    for p in points {
        let _ = writeln!(s, "{}\t{}\t{}", num(p.x), num(p.value), num(p.stderr));
    }
    s
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

pub fn write_sidecar(out: &Path, manifest: &Manifest) -> midm::Result<()> {
    manifest.save(sidecar_path(out))
}

/// Reads a score list: the last tab-separated field of each line. Lines
/// starting with `#` are skipped and a `# aggregate` marker ends the list, so
/// `mid` reports can be passed directly. A non-numeric first line is a header.
pub fn parse_scores(text: &str) -> midm::Result<Vec<f64>> {
    let mut scores = Vec::new();
    let mut seen_line = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with("# aggregate") {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit('\t').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => scores.push(v),
            Ok(_) => {
                return Err(Error::Format(format!("line {}: non-finite score '{field}'", lineno + 1)))
            }
            Err(_) if !seen_line => {}
            Err(_) => {
                return Err(Error::Format(format!("line {}: '{field}' is not a number", lineno + 1)))
            }
        }
        seen_line = true;
    }
    Ok(scores)
}

pub fn read_scores(path: &Path) -> midm::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    parse_scores(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_skip_headers_and_aggregate() {
        let r = ScoreReport {
            pmi: vec![0.5, -1.25],
            mid: -0.375,
            mean_smd_x: 1.0,
            mean_smd_y: 2.0,
            mean_smd_z: 3.0,
            mi: 0.1,
        };
        let text = score_report(&r, 5e-4);
        assert!(text.contains("# aggregate\nmid\t-0.375\n"));
        assert_eq!(parse_scores(&text).unwrap(), vec![0.5, -1.25]);
        assert_eq!(parse_scores("1\n2.5\n\n-3e-2\n").unwrap(), vec![1.0, 2.5, -0.03]);
        assert!(parse_scores("1\nfoo\n").is_err());
        assert!(parse_scores("1\nNaN\n").is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -0.375, 4.811067076167068e-6, 1e-15, 2.5e20, 0.1 + 0.2] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(5e-4), "0.0005");
        assert_eq!(num(1e-15), "1e-15");
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/m.mid")), PathBuf::from("out/m.mid.manifest.toml"));
    }
}
