//! Column-major operand layouts and the strided regions kernels touch.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::lines::LineSet;

/// The buffers a blocked algorithm works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Buffer {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "W")]
    W,
}

impl Buffer {
    pub fn name(self) -> &'static str {
        match self {
            Buffer::A => "A",
            Buffer::Tau => "tau",
            Buffer::W => "W",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "A" => Some(Buffer::A),
            "tau" => Some(Buffer::Tau),
            "W" => Some(Buffer::W),
            _ => None,
        }
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Placement of a column-major matrix in a flat byte address space.
///
/// Element `(i, j)` lives at `base + (j * ld + i) * elem`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatrixLayout {
    pub buffer: Buffer,
    pub base: u64,
    pub rows: u64,
    pub cols: u64,
    pub ld: u64,
    pub elem: u64,
}

impl MatrixLayout {
    /// Dense layout with `ld == rows` and 8-byte elements.
    pub fn dense(buffer: Buffer, base: u64, rows: u64, cols: u64) -> Self {
        Self {
            buffer,
            base,
            rows,
            cols,
            ld: rows.max(1),
            elem: 8,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.elem > 0 && self.ld >= self.rows && self.ld > 0
    }

    pub fn address(&self, row: u64, col: u64) -> u64 {
        self.base + (col * self.ld + row) * self.elem
    }

    /// One past the last byte of the last column.
    pub fn end(&self) -> u64 {
        if self.cols == 0 || self.rows == 0 {
            self.base
        } else {
            self.address(self.rows, self.cols - 1)
        }
    }

    /// `[base, end)`; the extent of the allocation including ld padding.
    pub fn byte_span(&self) -> (u64, u64) {
        (self.base, self.end())
    }

    pub fn full(&self) -> Region {
        Region::new(*self, 0, 0, self.rows, self.cols, Shape::Full)
    }

    pub fn lines(&self, line_size: u64) -> LineSet {
        self.full().lines(line_size)
    }
}

/// Which part of a rectangular block is referenced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Full,
    /// Diagonal and below.
    LowerTriangular,
    /// Diagonal and above.
    UpperTriangular,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Full => "full",
            Shape::LowerTriangular => "lower_triangular",
            Shape::UpperTriangular => "upper_triangular",
        }
    }
}

/// A rectangular (or triangular) block of a [`MatrixLayout`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub parent: MatrixLayout,
    pub row_off: u64,
    pub col_off: u64,
    pub rows: u64,
    pub cols: u64,
    pub shape: Shape,
}

impl Region {
    pub fn new(
        parent: MatrixLayout,
        row_off: u64,
        col_off: u64,
        rows: u64,
        cols: u64,
        shape: Shape,
    ) -> Self {
        Self {
            parent,
            row_off,
            col_off,
            rows,
            cols,
            shape,
        }
    }

    pub fn buffer(&self) -> Buffer {
        self.parent.buffer
    }

    pub fn is_within_parent(&self) -> bool {
        self.row_off + self.rows <= self.parent.rows && self.col_off + self.cols <= self.parent.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    /// Row range `[lo, hi)` (relative to the region) referenced in region column `c`.
    fn column_rows(&self, c: u64) -> (u64, u64) {
        match self.shape {
            Shape::Full => (0, self.rows),
            Shape::LowerTriangular => (c.min(self.rows), self.rows),
            Shape::UpperTriangular => (0, (c + 1).min(self.rows)),
        }
    }

    /// Number of referenced elements.
    pub fn elements(&self) -> u64 {
        (0..self.cols)
            .map(|c| {
                let (lo, hi) = self.column_rows(c);
                hi - lo
            })
            .sum()
    }

    pub fn bytes(&self) -> u64 {
        self.elements() * self.parent.elem
    }

    /// Disjoint, ascending byte intervals, one per column with contiguous
    /// neighbours merged.
    pub fn byte_intervals(&self) -> Vec<(u64, u64)> {
        let p = &self.parent;
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(self.cols as usize);
        for c in 0..self.cols {
            let (lo, hi) = self.column_rows(c);
            if lo >= hi {
                continue;
            }
            let col = self.col_off + c;
            let start = p.address(self.row_off + lo, col);
            let end = p.address(self.row_off + hi, col);
            match out.last_mut() {
                Some(last) if last.1 == start => last.1 = end,
                _ => out.push((start, end)),
            }
        }
        out
    }

    /// The exact set of cache lines touched by any referenced byte.
    pub fn lines(&self, line_size: u64) -> LineSet {
        LineSet::from_byte_intervals(self.byte_intervals(), line_size)
    }
}

/// See [`Region::lines`].
pub fn region_to_cache_lines(region: &Region, line_size: u64) -> LineSet {
    region.lines(line_size)
}
