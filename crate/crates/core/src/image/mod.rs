//! Grayscale frames, frame sequences with target trajectories, and region slicing.

mod pgm;
mod synthetic;
mod targets;

use std::fs;
use std::path::Path;

pub use pgm::{decode_pgm, encode_pgm};
pub use synthetic::{generate_synthetic_sequence, SyntheticParams};
pub use targets::{format_targets, parse_targets};

use crate::error::{Error, Result};

/// Integer pixel coordinate. `x` is the column, `y` the row. States and
/// target locations are both region origins (top-left corners).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }

    pub fn squared_distance(self, other: Point) -> i64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl std::ops::Add for Point {
    type Output = Point;

    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("frame dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension { expected: width * height, actual: pixels.len() });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid(format!("pixel {i} = {} is outside [0, 1]", pixels[i])));
        }
        Ok(Frame { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// True when an `side x side` region with origin `p` lies inside the frame.
    pub fn fits_region(&self, p: Point, side: usize) -> bool {
        side >= 1
            && p.x >= 0
            && p.y >= 0
            && p.x as usize + side <= self.width
            && p.y as usize + side <= self.height
    }
}

/// Frames of identical size plus one target location per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSequence {
    frames: Vec<Frame>,
    targets: Vec<Point>,
}

impl ImageSequence {
    pub fn new(frames: Vec<Frame>, targets: Vec<Point>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let (width, height) = (first.width, first.height);
        if let Some(k) = frames.iter().position(|f| f.width != width || f.height != height) {
            return Err(Error::invalid(format!(
                "frame {} is {}x{}, expected {width}x{height}",
                k + 1,
                frames[k].width,
                frames[k].height
            )));
        }
        if targets.len() != frames.len() {
            return Err(Error::invalid(format!(
                "{} targets for {} frames",
                targets.len(),
                frames.len()
            )));
        }
        for (k, t) in targets.iter().enumerate() {
            if !first.contains(*t) {
                return Err(Error::TargetOutOfBounds { k: k + 1, x: t.x, y: t.y, width, height });
            }
        }
        Ok(ImageSequence { frames, targets })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Frame {
        &self.frames[k]
    }

    pub fn targets(&self) -> &[Point] {
        &self.targets
    }

    pub fn target(&self, k: usize) -> Point {
        self.targets[k]
    }

    /// Flattened `side x side` region of frame `k` (zero-based) with origin `origin`.
    pub fn extract_region(&self, k: usize, origin: Point, side: usize) -> Result<Region> {
        let frame = self.frames.get(k).ok_or_else(|| {
            Error::invalid(format!("frame index {k} out of range for {} frames", self.frames.len()))
        })?;
        Region::from_frame(frame, origin, side)
            .ok_or(Error::RegionOutOfBounds { k, x: origin.x, y: origin.y, side })
    }
}

/// An `a x a` block of pixels, flattened row-major to length `q = a^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub origin: Point,
    pub side: usize,
    pub data: Vec<f64>,
}

impl Region {
    pub fn from_frame(frame: &Frame, origin: Point, side: usize) -> Option<Region> {
        if !frame.fits_region(origin, side) {
            return None;
        }
        let (x0, y0) = (origin.x as usize, origin.y as usize);
        let mut data = Vec::with_capacity(side * side);
        for y in y0..y0 + side {
            let row = y * frame.width;
            data.extend_from_slice(&frame.pixels[row + x0..row + x0 + side]);
        }
        Some(Region { origin, side, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Splits the region into non-overlapping `patch_side` tiles in row-major
    /// tile order. Each tile is flattened row-major.
    pub fn tiles(&self, patch_side: usize) -> Result<Vec<Vec<f64>>> {
        if patch_side == 0 || self.side % patch_side != 0 {
            return Err(Error::invalid(format!(
                "region side {} is not divisible by patch side {patch_side}",
                self.side
            )));
        }
        let per_side = self.side / patch_side;
        let mut tiles = Vec::with_capacity(per_side * per_side);
        for ty in 0..per_side {
            for tx in 0..per_side {
                let mut tile = Vec::with_capacity(patch_side * patch_side);
                for y in 0..patch_side {
                    let start = (ty * patch_side + y) * self.side + tx * patch_side;
                    tile.extend_from_slice(&self.data[start..start + patch_side]);
                }
                tiles.push(tile);
            }
        }
        Ok(tiles)
    }

    /// Inverse of [`Region::tiles`].
    pub fn from_tiles(origin: Point, side: usize, patch_side: usize, tiles: &[Vec<f64>]) -> Result<Region> {
        if patch_side == 0 || side % patch_side != 0 {
            return Err(Error::invalid("region side not divisible by patch side"));
        }
        let per_side = side / patch_side;
        if tiles.len() != per_side * per_side {
            return Err(Error::Dimension { expected: per_side * per_side, actual: tiles.len() });
        }
        let mut data = vec![0.0; side * side];
        for (t, tile) in tiles.iter().enumerate() {
            if tile.len() != patch_side * patch_side {
                return Err(Error::Dimension { expected: patch_side * patch_side, actual: tile.len() });
            }
            let (ty, tx) = (t / per_side, t % per_side);
            for y in 0..patch_side {
                let start = (ty * patch_side + y) * side + tx * patch_side;
                data[start..start + patch_side]
                    .copy_from_slice(&tile[y * patch_side..(y + 1) * patch_side]);
            }
        }
        Ok(Region { origin, side, data })
    }
}

/// Loads binary PGM frames and a `k x y` target file into a validated sequence.
pub fn load_pgm_sequence<P: AsRef<Path>>(paths: &[P], targets_file: impl AsRef<Path>) -> Result<ImageSequence> {
    if paths.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        frames.push(decode_pgm(&bytes)?);
    }
    let targets_path = targets_file.as_ref();
    let text = fs::read_to_string(targets_path).map_err(|e| Error::io(targets_path, e))?;
    let entries = parse_targets(&text)?;
    let targets = targets::assemble(&entries, frames.len())?;
    ImageSequence::new(frames, targets)
}

/// Writes every frame as `frame_NNN.pgm` plus `targets.txt` into `dir`.
/// Returns the frame paths in order.
pub fn write_pgm_sequence(seq: &ImageSequence, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(seq.len());
    for (k, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(format!("frame_{:03}.pgm", k + 1));
        fs::write(&path, encode_pgm(frame)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    let targets_path = dir.join("targets.txt");
    fs::write(&targets_path, format_targets(seq.targets())).map_err(|e| Error::io(&targets_path, e))?;
    Ok(paths)
}
