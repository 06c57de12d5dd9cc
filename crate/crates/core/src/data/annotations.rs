//! Plain-text head annotations, one scene per line:
//! `id width height x1,y1 x2,y2 ...` with three fractional digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::density::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point>,
}

impl AnnotationRecord {
    fn check_bounds(&self) -> Result<()> {
        let (w, h) = (self.width as f64, self.height as f64);
        for p in &self.points {
            if !(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h) {
                return Err(Error::Validation(format!(
                    "{}: point ({}, {}) outside {}x{}",
                    self.id, p.x, p.y, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

pub fn format_annotations(records: &[AnnotationRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "{} {} {}", r.id, r.width, r.height);
        for p in &r.points {
            let _ = write!(s, " {:.3},{:.3}", p.x, p.y);
        }
        s.push('\n');
    }
    s
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut tok = line.split_whitespace();
        let id = tok.next().expect("non-empty line").to_string();
        let mut dim = |what: &str| -> Result<usize> {
            tok.next()
                .ok_or_else(|| err(format!("missing {what}")))?
                .parse()
                .map_err(|_| err(format!("bad {what}")))
        };
        let width = dim("width")?;
        let height = dim("height")?;
        let mut points = Vec::new();
        for t in tok {
            let (x, y) = t
                .split_once(',')
                .ok_or_else(|| err(format!("point '{t}' is not x,y")))?;
            let parse = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .ok_or_else(|| err(format!("bad coordinate '{v}'")))
            };
            points.push(Point::new(parse(x)?, parse(y)?));
        }
        let rec = AnnotationRecord {
            id,
            width,
            height,
            points,
        };
        rec.check_bounds()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    for r in records {
        if r.id.is_empty() || r.id.contains(char::is_whitespace) {
            return Err(Error::Validation(format!("scene id '{}' must be a single word", r.id)));
        }
        r.check_bounds()?;
    }
    std::fs::write(path, format_annotations(records)).map_err(|e| Error::io(path, e))
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}
