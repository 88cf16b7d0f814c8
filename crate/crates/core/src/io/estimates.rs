use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{split_row_major, Pose};
use crate::io::layout::validate_id;

/// Rotations within this of orthonormal are snapped; others are rejected.
pub const ESTIMATE_TOLERANCE: f64 = 1e-3;

/// A localizer's answer for one query. `pose` is `None` for `FAILED` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub query_id: String,
    pub pose: Option<Pose>,
}

/// Parses an estimates file: `query_id r11 r12 r13 tx r21 .. tz` (row-major
/// `[R|t]`, camera-from-world) or `query_id FAILED` per line.
pub fn parse_estimates(text: &str) -> Result<Vec<Estimate>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = format!("line {line_no}");
        let mut toks = line.split_whitespace();
        let qid = toks.next().unwrap();
        validate_id(qid).map_err(|_| Error::parse(&loc, format!("invalid query id `{qid}`")))?;
        let rest: Vec<&str> = toks.collect();
        let pose = if rest == ["FAILED"] {
            None
        } else {
            if rest.len() != 12 {
                return Err(Error::parse(
                    &loc,
                    format!("expected 12 numbers or FAILED after the query id, found {} fields", rest.len()),
                ));
            }
            let mut vals = [0.0f64; 12];
            for (v, tok) in vals.iter_mut().zip(&rest) {
                *v = tok
                    .parse()
                    .map_err(|_| Error::parse(&loc, format!("`{tok}` is not a number")))?;
            }
            let (r, t) = split_row_major(&vals);
            Some(
                Pose::try_new_orthonormalized(r, t, ESTIMATE_TOLERANCE)
                    .map_err(|e| Error::parse(&loc, e.to_string()))?,
            )
        };
        if !seen.insert(qid.to_string()) {
            return Err(Error::parse(&loc, format!("duplicate estimate for `{qid}`")));
        }
        out.push(Estimate {
            query_id: qid.to_string(),
            pose,
        });
    }
    Ok(out)
}

pub fn read_estimates(path: impl AsRef<Path>) -> Result<Vec<Estimate>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_estimates(&text).map_err(|e| e.with_path(path))
}

/// Formats estimates in the file format read by [`parse_estimates`].
pub fn estimates_to_text(estimates: &[Estimate]) -> String {
    let mut s = String::new();
    for e in estimates {
        s.push_str(&e.query_id);
        match &e.pose {
            Some(p) => {
                for v in p.to_row_major() {
                    s.push(' ');
                    s.push_str(&crate::geom::fmt_exact(v));
                }
            }
            None => s.push_str(" FAILED"),
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_failed() {
        let e = parse_estimates("q0 1 0 0 0 0 1 0 0 0 0 1 0\nq7 FAILED\n").unwrap();
        assert_eq!(e[0].pose, Some(Pose::identity()));
        assert_eq!(e[1].query_id, "q7");
        assert_eq!(e[1].pose, None);
    }

    #[test]
    fn wrong_arity_names_line() {
        let err = parse_estimates("q0 FAILED\nq1 1 0 0 0 0 1 0 0 0 0 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicates_and_bad_rotation() {
        assert!(parse_estimates("q0 FAILED\nq0 FAILED\n").is_err());
        assert!(parse_estimates("q0 1.1 0 0 0 0 1 0 0 0 0 1 0\n").is_err());
        assert!(parse_estimates("q0 1 0 0 0 0 1 0 0 0 0 1 zz\n").is_err());
        let e = parse_estimates("q0 1.0004 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
        let r = e[0].pose.unwrap();
        assert!(crate::geom::orthonormality_deviation(r.rotation()) < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let est = vec![
            Estimate {
                query_id: "q1".into(),
                pose: Some(Pose::identity()),
            },
            Estimate {
                query_id: "q2".into(),
                pose: None,
            },
        ];
        assert_eq!(parse_estimates(&estimates_to_text(&est)).unwrap(), est);
    }
}
