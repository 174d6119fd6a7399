use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Dataset, SparseExample};

/// Parses an XC file: a header `N D C`, then `N` lines of
/// `l1,l2,... i1:v1 i2:v2 ...`.
pub fn parse_xc(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_xc_str(&text, path)
}

/// Like [`parse_xc`] on in-memory text; `origin` only labels errors.
pub fn parse_xc_str(text: &str, origin: impl AsRef<Path>) -> Result<Dataset> {
    let origin: PathBuf = origin.as_ref().to_path_buf();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.clone(),
        line,
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(1, format!("bad header: {e}")))?;
    let [n, d, c] = counts[..] else {
        return Err(err(1, format!("header needs 3 counts, found {}", counts.len())));
    };

    let mut examples = Vec::with_capacity(n.min(1 << 20));
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        if k >= n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(lineno, format!("more than {n} examples")));
        }
        examples.push(parse_line(line, d, c).map_err(|m| err(lineno, m))?);
    }
    if examples.len() != n {
        return Err(err(
            examples.len() + 2,
            format!("header promises {n} examples, found {}", examples.len()),
        ));
    }
    Ok(Dataset {
        num_features: d,
        num_labels: c,
        examples,
    })
}

fn parse_line(line: &str, d: usize, c: usize) -> std::result::Result<SparseExample, String> {
    let mut tokens = line.split_whitespace().peekable();
    let mut labels = Vec::new();
    if let Some(first) = tokens.peek() {
        if !first.contains(':') {
            for l in first.split(',').filter(|s| !s.is_empty()) {
                let y: u32 = l.parse().map_err(|_| format!("bad label {l:?}"))?;
                if y as usize >= c {
                    return Err(format!("label {y} >= {c}"));
                }
                labels.push(y);
            }
            tokens.next();
        }
    }
    let mut features: Vec<(u32, f32)> = Vec::new();
    for tok in tokens {
        let (i, v) = tok.split_once(':').ok_or_else(|| format!("bad feature {tok:?}"))?;
        let i: u32 = i.parse().map_err(|_| format!("bad feature index {i:?}"))?;
        let v: f32 = v.parse().map_err(|_| format!("bad feature value {v:?}"))?;
        if i as usize >= d {
            return Err(format!("feature index {i} >= {d}"));
        }
        if features.last().is_some_and(|&(prev, _)| prev >= i) {
            return Err(format!("feature indices not strictly increasing at {i}"));
        }
        features.push((i, v));
    }
    Ok(SparseExample { labels, features })
}

pub fn write_xc_string(data: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", data.len(), data.num_features, data.num_labels);
    for x in &data.examples {
        let labels: Vec<String> = x.labels.iter().map(u32::to_string).collect();
        out.push_str(&labels.join(","));
        for (i, v) in &x.features {
            let _ = write!(out, " {i}:{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_xc(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    std::fs::write(path, write_xc_string(data))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_examples() {
        let d = parse_xc_str("3 10 20\n5,10 3:0.5 7:1.2\n4\n 1:2\n", "t").unwrap();
        assert_eq!(d.examples[0].labels, vec![5, 10]);
        assert_eq!(d.examples[0].features, vec![(3, 0.5), (7, 1.2)]);
        assert_eq!(d.examples[1].nnz(), 0);
        assert!(d.examples[2].labels.is_empty());
        assert_eq!(parse_xc_str(&write_xc_string(&d), "t").unwrap(), d);
    }

    #[test]
    fn header_counts() {
        let d = parse_xc_str("0 101938 30938\n", "t").unwrap();
        assert_eq!((d.num_features, d.num_labels), (101938, 30938));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_xc_str("2 10 20\n1 3:0.5\n2 11:1\n", "f.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_xc_str("1 10 20\n1 3:x\n", "f.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_xc_str("2 10 20\n1 3:1\n", "f").is_err());
        assert!(parse_xc_str("1 10\n", "f").is_err());
    }
}
