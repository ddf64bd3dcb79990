//! Line-oriented text format for [`MilpInstance`].
//!
//! ```text
//! branchlab-milp 1
//! name <name>
//! size <n_vars> <n_cons> <nnz>
//! objective <c_0> ... <c_n-1>
//! lower <l_0> ...
//! upper <u_0> ...
//! integer <01 string>
//! row <i> <b_i> <col>:<a_ij> ...
//! end
//! ```
//!
//! Reals use the hexadecimal float encoding of [`super::hexfloat`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::hexfloat::{format_hex, parse_hex};
use super::{InstanceError, MilpInstance, SparseRows};

pub const FORMAT_MAGIC: &str = "branchlab-milp";
pub const FORMAT_VERSION: u32 = 1;

/// Canonical text of an instance. Identical instances give identical bytes.
pub fn to_text(inst: &MilpInstance) -> String {
    let mut out = String::new();
    let join = |vals: &[f64]| {
        vals.iter()
            .map(|&v| format_hex(v))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "name {}", inst.name);
    let _ = writeln!(
        out,
        "size {} {} {}",
        inst.n_vars(),
        inst.n_cons(),
        inst.nnz()
    );
    let _ = writeln!(out, "objective {}", join(&inst.objective));
    let _ = writeln!(out, "lower {}", join(&inst.lower));
    let _ = writeln!(out, "upper {}", join(&inst.upper));
    let flags: String = inst
        .is_integer
        .iter()
        .map(|&b| if b { '1' } else { '0' })
        .collect();
    let _ = writeln!(out, "integer {flags}");
    for i in 0..inst.n_cons() {
        let _ = write!(
            out,
            "row {i} {} {}",
            format_hex(inst.rhs[i]),
            inst.rows.row_len(i)
        );
        for (j, a) in inst.rows.row(i) {
            let _ = write!(out, " {j}:{}", format_hex(a));
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn save_instance(inst: &MilpInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    fs::write(path, to_text(inst))?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<MilpInstance, InstanceError> {
    from_text(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> InstanceError {
        InstanceError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next line, which must start with `keyword`; returns the remaining tokens.
    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>, InstanceError> {
        let (idx, text) = self
            .inner
            .next()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected '{keyword}'")))?;
        self.line = idx + 1;
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some(k) if k == keyword => Ok(tokens.collect()),
            other => Err(self.err(format!("expected '{keyword}', found {other:?}"))),
        }
    }

    fn reals(&self, tokens: &[&str], count: usize, what: &str) -> Result<Vec<f64>, InstanceError> {
        if tokens.len() != count {
            return Err(self.err(format!(
                "{what}: expected {count} values, found {}",
                tokens.len()
            )));
        }
        tokens
            .iter()
            .map(|t| parse_hex(t).map_err(|e| self.err(format!("{what}: {e}"))))
            .collect()
    }

    fn count(&self, token: Option<&&str>, what: &str) -> Result<usize, InstanceError> {
        token
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(format!("invalid {what}")))
    }
}

pub fn from_text(text: &str) -> Result<MilpInstance, InstanceError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.expect(FORMAT_MAGIC)?;
    let version: u32 = lines.count(header.first(), "format version")? as u32;
    if version != FORMAT_VERSION {
        return Err(InstanceError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let name = lines.expect("name")?;
    if name.len() != 1 {
        return Err(lines.err("name must be a single token"));
    }
    let name = name[0].to_string();
    let size = lines.expect("size")?;
    let n = lines.count(size.first(), "variable count")?;
    let m = lines.count(size.get(1), "constraint count")?;
    let nnz = lines.count(size.get(2), "nonzero count")?;
    let tokens = lines.expect("objective")?;
    let objective = lines.reals(&tokens, n, "objective")?;
    let tokens = lines.expect("lower")?;
    let lower = lines.reals(&tokens, n, "lower")?;
    let tokens = lines.expect("upper")?;
    let upper = lines.reals(&tokens, n, "upper")?;
    let flags = lines.expect("integer")?;
    let flags = flags.first().copied().unwrap_or("");
    if flags.len() != n || !flags.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(lines.err("integer flags must be a 0/1 string of length n"));
    }
    let is_integer = flags.bytes().map(|b| b == b'1').collect();
    let mut rows = SparseRows {
        row_start: vec![0],
        ..Default::default()
    };
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let tokens = lines.expect("row")?;
        if lines.count(tokens.first(), "row index")? != i {
            return Err(lines.err(format!("rows must appear in order, expected row {i}")));
        }
        let b = tokens
            .get(1)
            .ok_or_else(|| lines.err("missing rhs"))
            .and_then(|t| parse_hex(t).map_err(|e| lines.err(format!("rhs: {e}"))))?;
        let len = lines.count(tokens.get(2), "row length")?;
        if tokens.len() != 3 + len {
            return Err(lines.err(format!("row {i}: expected {len} entries")));
        }
        for entry in &tokens[3..] {
            let (col, val) = entry
                .split_once(':')
                .ok_or_else(|| lines.err(format!("malformed entry '{entry}'")))?;
            let col: usize = col
                .parse()
                .map_err(|_| lines.err(format!("bad column in '{entry}'")))?;
            let val = parse_hex(val).map_err(|e| lines.err(format!("row {i}: {e}")))?;
            rows.cols.push(col);
            rows.vals.push(val);
        }
        rows.row_start.push(rows.cols.len());
        rhs.push(b);
    }
    if rows.nnz() != nnz {
        return Err(lines.err(format!(
            "header declares {nnz} nonzeros, rows hold {}",
            rows.nnz()
        )));
    }
    lines.expect("end")?;
    let inst = MilpInstance {
        name,
        objective,
        rows,
        rhs,
        lower,
        upper,
        is_integer,
    };
    inst.validate()?;
    Ok(inst)
}
