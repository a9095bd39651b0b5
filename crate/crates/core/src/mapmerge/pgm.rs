//! Binary (P5) and ASCII (P2) PGM reading and writing for occupancy grids.

use std::path::Path;

use super::{CellState, OccupancyGrid};
use crate::error::{Error, Result};

/// Gray-level thresholds on the 0..=255 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmThresholds {
    /// Values at or below this are occupied.
    pub occupied_max: u8,
    /// Values at or above this are free.
    pub free_min: u8,
}

impl Default for PgmThresholds {
    fn default() -> Self {
        Self {
            occupied_max: 64,
            free_min: 192,
        }
    }
}

impl PgmThresholds {
    pub fn classify(&self, gray: u8) -> CellState {
        if gray <= self.occupied_max {
            CellState::Occupied
        } else if gray >= self.free_min {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }
}

const OCCUPIED_GRAY: u8 = 0;
const UNKNOWN_GRAY: u8 = 128;
const FREE_GRAY: u8 = 254;

fn gray_of(state: CellState) -> u8 {
    match state {
        CellState::Occupied => OCCUPIED_GRAY,
        CellState::Unknown => UNKNOWN_GRAY,
        CellState::Free => FREE_GRAY,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<(usize, &str)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of file"));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, "non-ASCII header token"))?;
        Ok((start, tok))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let (at, tok) = self.token()?;
        tok.parse()
            .map_err(|_| Error::parse(at, format!("bad {what}: {tok:?}")))
    }
}

/// Decodes a PGM image; `resolution` is metres per cell (PGM carries none).
pub fn parse_pgm(bytes: &[u8], thresholds: &PgmThresholds, resolution: f64) -> Result<OccupancyGrid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (at, magic) = cur.token()?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::parse(at, format!("unsupported magic {other:?}"))),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(cur.pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(cur.pos, format!("maxval {maxval} out of range")));
    }
    let count = width * height;
    let to_gray = |v: usize| -> u8 {
        if maxval == 255 {
            v as u8
        } else {
            ((v * 255 + maxval / 2) / maxval) as u8
        }
    };

    let mut cells = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = cur.pos + 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        if bytes.len() < start + need {
            return Err(Error::parse(
                bytes.len(),
                format!("truncated raster: need {need} bytes after offset {start}"),
            ));
        }
        let raster = &bytes[start..start + need];
        for k in 0..count {
            let v = if wide {
                (raster[2 * k] as usize) << 8 | raster[2 * k + 1] as usize
            } else {
                raster[k] as usize
            };
            if v > maxval {
                return Err(Error::parse(start + k, format!("sample {v} exceeds maxval")));
            }
            cells.push(thresholds.classify(to_gray(v)));
        }
    } else {
        for _ in 0..count {
            let at = {
                cur.skip_space_and_comments();
                cur.pos
            };
            if at >= bytes.len() {
                return Err(Error::parse(at, "truncated ASCII raster"));
            }
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::parse(at, format!("sample {v} exceeds maxval")));
            }
            cells.push(thresholds.classify(to_gray(v)));
        }
    }
    OccupancyGrid::new(width, height, resolution, cells)
}

pub fn load_pgm(path: impl AsRef<Path>, thresholds: &PgmThresholds, resolution: f64) -> Result<OccupancyGrid> {
    let bytes = std::fs::read(path)?;
    parse_pgm(&bytes, thresholds, resolution)
}

/// Binary P5 encoding: occupied 0, unknown 128, free 254.
pub fn encode_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.cells().iter().map(|&c| gray_of(c)));
    out
}

/// ASCII P2 encoding with the same gray levels as [`encode_pgm`].
pub fn encode_pgm_ascii(grid: &OccupancyGrid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.width(), grid.height());
    for row in grid.cells().chunks(grid.width()) {
        let line: Vec<String> = row.iter().map(|&c| gray_of(c).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_pgm(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pgm(grid))?;
    Ok(())
}
