//! Binary container for solved value and policy tables.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field        | type          |
//! |--------------|---------------|
//! | magic        | `b"CDACTBL1"` |
//! | version      | u32           |
//! | task kind    | u8 (0 simple, 1 peripheral) |
//! | k            | u32           |
//! | grid n       | u32           |
//! | fixations    | u32           |
//! | c, c_s       | f64, f64      |
//! | beta count   | u32, then that many f64 |
//! | values       | cells x fixations f64, cell-major |
//! | actions      | cells x fixations u8 action codes |

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::grid::SimplexGrid;
use crate::observation::{TaskKind, TaskModel};
use crate::solver::{Action, CostParams, PolicyTable, ValueTable};

pub const MAGIC: &[u8; 8] = b"CDACTBL1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a table file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {found}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: {field} mismatch (file {found}, requested {expected})")]
    Mismatch { path: PathBuf, field: &'static str, found: String, expected: String },
    #[error("{path}: corrupt table ({detail})")]
    Corrupt { path: PathBuf, detail: String },
    #[error("value and policy tables disagree in shape")]
    Shape,
}

/// Parameters recorded in the header.
#[derive(Debug, Clone, PartialEq)]
pub struct TableHeader {
    pub kind: TaskKind,
    pub k: usize,
    pub n: usize,
    pub fixations: usize,
    pub costs: CostParams,
    pub betas: Vec<f64>,
}

impl TableHeader {
    pub fn new(model: &TaskModel, costs: &CostParams, n: usize) -> Self {
        Self {
            kind: model.kind(),
            k: model.locations(),
            n,
            fixations: model.fixations(),
            costs: *costs,
            betas: model.betas(),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.kind {
            TaskKind::Simple => 0,
            TaskKind::Peripheral => 1,
        });
        for v in [self.k, self.n, self.fixations] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.costs.c.to_le_bytes());
        out.extend_from_slice(&self.costs.switch_cost.to_le_bytes());
        out.extend_from_slice(&(self.betas.len() as u32).to_le_bytes());
        for b in &self.betas {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
}

/// Serializes both tables into the container format.
pub fn encode_tables(
    model: &TaskModel,
    costs: &CostParams,
    values: &ValueTable,
    policy: &PolicyTable,
) -> Result<Vec<u8>, StoreError> {
    if values.grid() != policy.grid() || values.fixations() != policy.fixations() {
        return Err(StoreError::Shape);
    }
    if values.fixations() != model.fixations() || values.grid().k() != model.locations() {
        return Err(StoreError::Shape);
    }
    let header = TableHeader::new(model, costs, values.grid().n());
    let mut out = Vec::with_capacity(64 + values.as_slice().len() * 9);
    header.encode(&mut out);
    for v in values.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(policy.as_slice().iter().map(|a| a.code()));
    Ok(out)
}

pub fn save_tables(
    path: &Path,
    model: &TaskModel,
    costs: &CostParams,
    values: &ValueTable,
    policy: &PolicyTable,
) -> Result<(), StoreError> {
    let bytes = encode_tables(model, costs, values, policy)?;
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.flush().map_err(io)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            StoreError::Corrupt { path: self.path.to_path_buf(), detail: "truncated".into() }
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, StoreError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads only the header.
pub fn read_header(path: &Path) -> Result<TableHeader, StoreError> {
    let bytes = read_all(path)?;
    parse_header(&mut Cursor { bytes: &bytes, pos: 0, path })
}

fn read_all(path: &Path) -> Result<Vec<u8>, StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    Ok(bytes)
}

fn parse_header(cur: &mut Cursor) -> Result<TableHeader, StoreError> {
    let path = cur.path.to_path_buf();
    if cur.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err(StoreError::BadMagic { path });
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(StoreError::Version { path, found: version });
    }
    let kind = match cur.take(1)?[0] {
        0 => TaskKind::Simple,
        1 => TaskKind::Peripheral,
        b => return Err(StoreError::Corrupt { path, detail: format!("task kind {b}") }),
    };
    let k = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let fixations = cur.u32()? as usize;
    let c = cur.f64()?;
    let switch_cost = cur.f64()?;
    let nb = cur.u32()? as usize;
    if nb > 16 {
        return Err(StoreError::Corrupt { path, detail: format!("{nb} betas") });
    }
    let betas = (0..nb).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok(TableHeader { kind, k, n, fixations, costs: CostParams { c, switch_cost }, betas })
}

/// Loads tables saved for exactly `(model, costs, n)`; anything else is
/// refused.
pub fn load_tables(
    path: &Path,
    model: &TaskModel,
    costs: &CostParams,
    n: usize,
) -> Result<(ValueTable, PolicyTable), StoreError> {
    let bytes = read_all(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };
    let found = parse_header(&mut cur)?;
    let expected = TableHeader::new(model, costs, n);
    let mismatch = |field, f: String, e: String| StoreError::Mismatch {
        path: path.to_path_buf(),
        field,
        found: f,
        expected: e,
    };
    if found.kind != expected.kind {
        return Err(mismatch("task", format!("{:?}", found.kind), format!("{:?}", expected.kind)));
    }
    if found.n != expected.n {
        return Err(mismatch("grid n", found.n.to_string(), expected.n.to_string()));
    }
    if found.k != expected.k || found.fixations != expected.fixations {
        return Err(mismatch(
            "shape",
            format!("k={} fixations={}", found.k, found.fixations),
            format!("k={} fixations={}", expected.k, expected.fixations),
        ));
    }
    if found.costs.c.to_bits() != expected.costs.c.to_bits()
        || found.costs.switch_cost.to_bits() != expected.costs.switch_cost.to_bits()
    {
        return Err(mismatch(
            "costs",
            format!("c={} cs={}", found.costs.c, found.costs.switch_cost),
            format!("c={} cs={}", expected.costs.c, expected.costs.switch_cost),
        ));
    }
    let same_betas = found.betas.len() == expected.betas.len()
        && found.betas.iter().zip(&expected.betas).all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_betas {
        return Err(mismatch("betas", format!("{:?}", found.betas), format!("{:?}", expected.betas)));
    }

    let corrupt = |detail: String| StoreError::Corrupt { path: path.to_path_buf(), detail };
    let grid = Arc::new(SimplexGrid::new(found.k, found.n).map_err(|e| corrupt(e.to_string()))?);
    let len = grid.len() * found.fixations;
    let values = (0..len).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    let codes = cur.take(len)?;
    if cur.pos != bytes.len() {
        return Err(corrupt("trailing bytes".into()));
    }
    let max_code = 3 + found.fixations as u8;
    let mut actions = Vec::with_capacity(len);
    for &code in codes {
        if code >= max_code {
            return Err(corrupt(format!("action code {code}")));
        }
        actions.push(Action::from_code(code));
    }
    let values = ValueTable::from_values(grid.clone(), found.fixations, values)
        .map_err(|e| corrupt(e.to_string()))?;
    let policy = PolicyTable::from_actions(grid, found.fixations, actions)
        .map_err(|e| corrupt(e.to_string()))?;
    Ok((values, policy))
}
