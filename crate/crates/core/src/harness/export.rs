//! Policy-map export: CSV over the lattice and a binary PGM raster.
//!
//! Action codes (stable):
//!
//! | code | action |
//! |------|--------|
//! | 0, 1, 2 | stop and declare location 1, 2, 3 |
//! | 3 + j | fixate `j` (simple task: locations 1..3; peripheral: l1, l2, l3, l12, l23, l13, l123) |
//!
//! In the PGM the pixel at column `a1`, row `n - a2` holds the cell with
//! lattice coordinates `(a1, a2, n - a1 - a2)`; its gray level is
//! `25 * code`. Pixels outside the simplex are 255.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::solver::PolicyTable;

pub const GRAY_STEP: u8 = 25;
pub const BACKGROUND: u8 = 255;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("fixation {fixation} out of range (policy has {fixations})")]
    BadFixation { fixation: usize, fixations: usize },
    #[error("raster export needs three locations, policy has {0}")]
    NotTriangle(usize),
}

fn check_fixation(policy: &PolicyTable, fixation: usize) -> Result<(), ExportError> {
    if fixation >= policy.fixations() {
        return Err(ExportError::BadFixation { fixation, fixations: policy.fixations() });
    }
    Ok(())
}

/// CSV text: header `p1,p2,p3,action`, one row per cell in index order.
pub fn policy_map_csv(policy: &PolicyTable, fixation: usize) -> Result<String, ExportError> {
    check_fixation(policy, fixation)?;
    let grid = policy.grid();
    let mut out = String::with_capacity(grid.len() * 24);
    out.push_str("p1,p2,p3,action\n");
    for cell in 0..grid.len() {
        let p = grid.point(cell);
        let probs: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
        out.push_str(&probs.join(","));
        out.push(',');
        out.push_str(&policy.get(cell, fixation).code().to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Binary P5 image of the `(p1, p2)` projection.
pub fn policy_map_pgm(policy: &PolicyTable, fixation: usize) -> Result<Vec<u8>, ExportError> {
    check_fixation(policy, fixation)?;
    let grid = policy.grid();
    if grid.k() != 3 {
        return Err(ExportError::NotTriangle(grid.k()));
    }
    let n = grid.n();
    let side = n + 1;
    let mut pixels = vec![BACKGROUND; side * side];
    for cell in 0..grid.len() {
        let a = grid.coords(cell);
        let (x, y) = (a[0] as usize, n - a[1] as usize);
        pixels[y * side + x] = GRAY_STEP * policy.get(cell, fixation).code();
    }
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    let io = |source| ExportError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.flush().map_err(io)
}

pub fn export_policy_map(policy: &PolicyTable, fixation: usize, path: &Path) -> Result<(), ExportError> {
    write_file(path, policy_map_csv(policy, fixation)?.as_bytes())
}

pub fn export_policy_pgm(policy: &PolicyTable, fixation: usize, path: &Path) -> Result<(), ExportError> {
    write_file(path, &policy_map_pgm(policy, fixation)?)
}
