//! Plain-text manifest followed by raw little-endian `f32` arrays.
//!
//! ```text
//! SINGER-CONTAINER 1
//! kind <kind>
//! meta <key> <value...>
//! array <name> <rows> <cols>
//! end
//! <payload: arrays in declaration order, row-major, f32 LE>
//! ```
//!
//! Every header line is terminated by `\n`. The payload length must equal
//! `4 * sum(rows * cols)` exactly.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

const MAGIC: &str = "SINGER-CONTAINER 1";
const END: &str = "end";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "array buffer length mismatch");
        Self {
            name: name.into(),
            rows,
            cols,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
    source: Option<PathBuf>,
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: Vec::new(),
            arrays: Vec::new(),
            source: None,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.push_meta(key, value);
        self
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.contains(char::is_whitespace) && !value.contains('\n'),
            "manifest keys must be single tokens and values single-line"
        );
        self.meta.push((key.to_string(), value));
    }

    pub fn push_array(&mut self, array: NamedArray) {
        assert!(!array.name.contains(char::is_whitespace));
        self.arrays.push(array);
    }

    fn origin(&self) -> PathBuf {
        self.source.clone().unwrap_or_else(|| PathBuf::from("<memory>"))
    }

    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptManifest {
            path: self.origin(),
            reason: reason.into(),
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(self.corrupt(format!("expected kind `{kind}`, found `{}`", self.kind)))
        }
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.corrupt(format!("missing key `{key}`")))
    }

    pub fn meta<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta_str(key)?;
        raw.parse()
            .map_err(|_| self.corrupt(format!("unparseable value `{raw}` for key `{key}`")))
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| self.corrupt(format!("missing array `{name}`")))
    }

    /// Checks a declared array shape against what the caller's manifest keys imply.
    pub fn expect_array(&self, name: &str, rows: usize, cols: usize) -> Result<&NamedArray> {
        let arr = self.array(name)?;
        if arr.rows != rows || arr.cols != cols {
            return Err(Error::PayloadMismatch {
                path: self.origin(),
                expected: rows * cols * 4,
                found: arr.rows * arr.cols * 4,
            });
        }
        Ok(arr)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        header.push_str(&format!("kind {}\n", self.kind));
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for a in &self.arrays {
            header.push_str(&format!("array {} {} {}\n", a.name, a.rows, a.cols));
        }
        header.push_str(END);
        header.push('\n');

        let payload: usize = self.arrays.iter().map(|a| a.data.len() * 4).sum();
        let mut out = Vec::with_capacity(header.len() + payload);
        out.extend_from_slice(header.as_bytes());
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptManifest {
            path: origin.to_path_buf(),
            reason,
        };

        let mut pos = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt("unterminated header".into()))?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| corrupt("header is not valid UTF-8".into()))?;
            pos += nl + 1;
            Ok(line)
        };

        if next_line()? != MAGIC {
            return Err(corrupt("bad magic line".into()));
        }
        let kind = next_line()?
            .strip_prefix("kind ")
            .ok_or_else(|| corrupt("missing kind line".into()))?
            .to_string();

        let mut meta = Vec::new();
        let mut decls = Vec::new();
        loop {
            let line = next_line()?;
            if line == END {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("array ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(corrupt(format!("malformed array line `{line}`")));
                }
                let rows: usize = parts[1]
                    .parse()
                    .map_err(|_| corrupt(format!("bad row count in `{line}`")))?;
                let cols: usize = parts[2]
                    .parse()
                    .map_err(|_| corrupt(format!("bad column count in `{line}`")))?;
                decls.push((parts[0].to_string(), rows, cols));
            } else {
                return Err(corrupt(format!("unrecognized header line `{line}`")));
            }
        }

        let payload = &bytes[pos..];
        let expected: usize = decls
            .iter()
            .try_fold(0usize, |acc, (_, r, c)| {
                r.checked_mul(*c)
                    .and_then(|n| n.checked_mul(4))
                    .and_then(|n| acc.checked_add(n))
            })
            .ok_or_else(|| corrupt("declared array sizes overflow".into()))?;
        if payload.len() < expected {
            return Err(Error::Truncated {
                path: origin.to_path_buf(),
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::PayloadMismatch {
                path: origin.to_path_buf(),
                expected,
                found: payload.len(),
            });
        }

        let mut arrays = Vec::with_capacity(decls.len());
        let mut offset = 0;
        for (name, rows, cols) in decls {
            let n = rows * cols;
            let data = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            offset += 4 * n;
            arrays.push(NamedArray {
                name,
                rows,
                cols,
                data,
            });
        }

        Ok(Self {
            kind,
            meta,
            arrays,
            source: Some(origin.to_path_buf()),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
