use std::path::Path;

use crate::interact::GeneMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Csv,
    /// Binary PPM raster.
    Image,
}

impl RenderFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RenderFormat::Csv),
            "image" | "ppm" => Ok(RenderFormat::Image),
            other => Err(Error::Config(format!("unknown render format '{other}'"))),
        }
    }
}

/// Re-emits a gene-map snapshot as CSV or as a raster with `cell` pixels per
/// gene.
pub fn render_gene_map(snapshot: &Path, out: &Path, format: RenderFormat, cell: usize) -> Result<()> {
    let map = GeneMap::read_csv(snapshot)?;
    match format {
        RenderFormat::Csv => map.write_csv(out),
        RenderFormat::Image => map.write_ppm(out, cell),
    }
}
