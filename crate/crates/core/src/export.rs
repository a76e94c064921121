//! Field snapshots: legacy VTK (ASCII, cell-averaged vectors) and a raw
//! little-endian blob with a JSON header.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{GridSpec, Staggering};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidField(format!("{}: {e}", path.display()))
}

/// Mean of component `c` over its samples on the closure of each cell,
/// laid out with x fastest as VTK expects.
fn cell_average(u: &VectorField, c: usize) -> Vec<f64> {
    let [nx, ny, nz] = u.grid().cells;
    let off = GridSpec::stagger_offset(u.staggering(), c);
    let shape = u.shape(c);
    let data = u.comp(c);
    // sampled directions contribute one index, the others both ends
    let span = |d: usize| if off[d] == 0.5 { 1 } else { 2 };
    let count = (span(0) * span(1) * span(2)) as f64;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut s = 0.0;
                for a in 0..span(0) {
                    for b in 0..span(1) {
                        for d in 0..span(2) {
                            s += data[shape.idx(i + a, j + b, k + d)];
                        }
                    }
                }
                out.push(s / count);
            }
        }
    }
    out
}

/// Legacy VTK structured-points file with the field averaged to cell centres.
pub fn write_vtk(u: &VectorField, name: &str, out: &mut impl Write) -> std::io::Result<()> {
    let g = u.grid();
    let [nx, ny, nz] = g.cells;
    let h = g.spacing();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{name}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1)?;
    writeln!(out, "ORIGIN {:e} {:e} {:e}", g.origin[0], g.origin[1], g.origin[2])?;
    writeln!(out, "SPACING {:e} {:e} {:e}", h[0], h[1], h[2])?;
    writeln!(out, "CELL_DATA {}", nx * ny * nz)?;
    writeln!(out, "VECTORS {name} double")?;
    let comps = [cell_average(u, 0), cell_average(u, 1), cell_average(u, 2)];
    for n in 0..nx * ny * nz {
        writeln!(out, "{:e} {:e} {:e}", comps[0][n], comps[1][n], comps[2][n])?;
    }
    Ok(())
}

pub fn write_vtk_file(u: &VectorField, name: &str, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_vtk(u, name, &mut buf).map_err(|e| io_err(path, e))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLayout {
    pub name: String,
    pub shape: [usize; 3],
    /// Byte offset into the blob.
    pub offset: usize,
}

/// JSON header describing a raw blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub dims: [usize; 3],
    pub box_lengths: [f64; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub staggering: Staggering,
    pub dtype: String,
    pub endianness: String,
    /// Components stored one after the other, each row-major with z fastest.
    pub components: Vec<ComponentLayout>,
}

/// Encodes `u` as a blob and its header.
pub fn to_raw(u: &VectorField) -> (Vec<u8>, RawHeader) {
    let g = u.grid();
    let mut blob = Vec::with_capacity(8 * u.len());
    let mut components = Vec::new();
    for (c, name) in ["x", "y", "z"].iter().enumerate() {
        components.push(ComponentLayout { name: name.to_string(), shape: u.shape(c).dims, offset: blob.len() });
        for x in u.comp(c) {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let header = RawHeader {
        dims: g.cells,
        box_lengths: g.box_lengths,
        origin: g.origin,
        spacing: g.spacing(),
        staggering: u.staggering(),
        dtype: "f64".into(),
        endianness: "little".into(),
        components,
    };
    (blob, header)
}

/// Decodes a blob described by `header`.
pub fn from_raw(blob: &[u8], header: &RawHeader) -> Result<VectorField> {
    if header.dtype != "f64" || header.endianness != "little" {
        return Err(Error::InvalidField(format!(
            "unsupported encoding {} / {}",
            header.dtype, header.endianness
        )));
    }
    let g = GridSpec::with_origin(header.box_lengths, header.dims, header.origin)?;
    if header.components.len() != 3 {
        return Err(Error::InvalidField("expected three components".into()));
    }
    let mut comps: [Vec<f64>; 3] = Default::default();
    for (c, layout) in header.components.iter().enumerate() {
        let n = layout.shape.iter().product::<usize>();
        let end = layout.offset + 8 * n;
        let bytes = blob
            .get(layout.offset..end)
            .ok_or_else(|| Error::InvalidField(format!("blob too short for component {}", layout.name)))?;
        comps[c] = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    }
    VectorField::from_components(&g, header.staggering, comps)
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn write_raw(u: &VectorField, dir: &Path, stem: &str) -> Result<()> {
    let (blob, header) = to_raw(u);
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    fs::write(&bin, blob).map_err(|e| io_err(&bin, e))?;
    let text = serde_json::to_string_pretty(&header).expect("header serialises");
    fs::write(&json, text).map_err(|e| io_err(&json, e))
}

pub fn read_raw(dir: &Path, stem: &str) -> Result<VectorField> {
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json).map_err(|e| io_err(&json, e))?;
    let header: RawHeader =
        serde_json::from_str(&text).map_err(|e| Error::InvalidField(format!("{}: {e}", json.display())))?;
    let blob = fs::read(&bin).map_err(|e| io_err(&bin, e))?;
    from_raw(&blob, &header)
}
