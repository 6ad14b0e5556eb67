//! Item id to semantic-ID table, stored as text: one line per item,
//! `item_id<TAB>index_1 index_2 ... index_L`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidTable {
    pub ids: Vec<String>,
    pub codes: Vec<Vec<usize>>,
}

impl SidTable {
    pub fn new(ids: Vec<String>, codes: Vec<Vec<usize>>) -> Result<Self> {
        if ids.len() != codes.len() {
            return Err(Error::Dimension(format!("{} ids for {} codes", ids.len(), codes.len())));
        }
        if let Some(first) = codes.first() {
            if let Some(bad) = codes.iter().position(|c| c.len() != first.len()) {
                return Err(Error::Dimension(format!(
                    "row {bad} has {} layers, expected {}",
                    codes[bad].len(),
                    first.len()
                )));
            }
        }
        Ok(Self { ids, codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, code) in self.ids.iter().zip(&self.codes) {
            out.push_str(id);
            out.push('\t');
            for (l, c) in code.iter().enumerate() {
                if l > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut codes: Vec<Vec<usize>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `item_id<TAB>indices`".into(),
            })?;
            let code = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid code index `{t}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if code.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "no code indices".into(),
                });
            }
            if let Some(first) = codes.first() {
                if first.len() != code.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("{} indices, expected {}", code.len(), first.len()),
                    });
                }
            }
            ids.push(id.to_string());
            codes.push(code);
        }
        Ok(Self { ids, codes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
