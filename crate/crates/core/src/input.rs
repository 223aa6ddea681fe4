//! Observation input: one decimal per line, or one column of a CSV file.
//!
//! Blank lines and lines starting with `#` are skipped. Every value must parse as a
//! finite float; failures report the 1-based line number.

use std::io::BufRead;

use crate::config::ColumnSel;
use crate::error::{Error, Result};

fn data_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        line,
        msg: msg.into(),
    }
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let f = field.trim();
    let v: f64 = f
        .parse()
        .map_err(|_| data_err(line, format!("'{f}' is not a number")))?;
    if !v.is_finite() {
        return Err(data_err(line, format!("'{f}' is not finite")));
    }
    Ok(v)
}

/// Line-level parser state: knows the column to pick and whether the header is done.
#[derive(Clone, Debug)]
pub struct LineParser {
    column: Option<ColumnSel>,
    index: Option<usize>,
}

impl LineParser {
    pub fn new(column: Option<ColumnSel>) -> Self {
        let index = match &column {
            Some(ColumnSel::Index(i)) => Some(*i),
            _ => None,
        };
        Self { column, index }
    }

    /// Parse one line. `Ok(None)` for skipped lines and the header.
    pub fn feed(&mut self, text: &str, line: usize) -> Result<Option<f64>> {
        let t = text.trim();
        if t.is_empty() || t.starts_with('#') {
            return Ok(None);
        }
        match (&self.column, self.index) {
            (None, _) => parse_value(t, line).map(Some),
            (Some(_), Some(i)) => {
                let field = t.split(',').nth(i).ok_or_else(|| {
                    data_err(line, format!("no column {i} (line has {} fields)", t.split(',').count()))
                })?;
                parse_value(field, line).map(Some)
            }
            (Some(ColumnSel::Name(name)), None) => {
                let i = t
                    .split(',')
                    .position(|h| h.trim().trim_matches('"') == name)
                    .ok_or_else(|| data_err(line, format!("header has no column named '{name}'")))?;
                self.index = Some(i);
                Ok(None)
            }
            (Some(ColumnSel::Index(_)), None) => unreachable!(),
        }
    }

    /// True once a named column has been resolved against its header.
    pub fn header_seen(&self) -> bool {
        self.index.is_some()
    }
}

/// Iterator over observations of a buffered reader, yielding errors in place.
pub struct Observations<R> {
    reader: R,
    parser: LineParser,
    line: usize,
    buf: String,
    done: bool,
}

impl<R: BufRead> Observations<R> {
    pub fn new(reader: R, column: Option<ColumnSel>) -> Self {
        Self {
            reader,
            parser: LineParser::new(column),
            line: 0,
            buf: String::new(),
            done: false,
        }
    }

    /// Lines read so far.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for Observations<R> {
    type Item = Result<f64>;

    fn next(&mut self) -> Option<Result<f64>> {
        while !self.done {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.line += 1;
                    match self.parser.feed(&self.buf, self.line) {
                        Ok(Some(v)) => return Some(Ok(v)),
                        Ok(None) => {}
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
                Err(e) => {
                    self.done = true;
                    let msg = if e.kind() == std::io::ErrorKind::InvalidData {
                        "input is not valid UTF-8".to_string()
                    } else {
                        e.to_string()
                    };
                    return Some(Err(data_err(self.line + 1, msg)));
                }
            }
        }
        None
    }
}

/// Parse a whole text buffer.
pub fn parse_observations(text: &str, column: Option<ColumnSel>) -> Result<Vec<f64>> {
    Observations::new(text.as_bytes(), column).collect()
}
