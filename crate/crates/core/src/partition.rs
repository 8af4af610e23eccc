//! Random half-open box families over terminal-price space and the binary
//! cell encoding of the partition they generate.
//!
//! Box `i` is `(a_1, b_1] x ... x (a_d, b_d]`. Adding boxes one at a time and
//! splitting every existing cell into its part inside and outside the new box
//! yields a partition with up to `2^depth` cells. A point's cell is encoded as
//! the integer whose bit `i` says whether the point lies in box `i`, which
//! costs `depth * d` coordinate tests instead of materializing the cells.

use ndarray::ArrayView1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::AssetBounds;
use crate::rng::Rng;

/// Largest depth whose cell index fits in a `u64`.
pub const MAX_DEPTH: usize = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfOpenBox {
    /// Open lower corners `a_j`.
    pub lower: Vec<f64>,
    /// Closed upper corners `b_j`.
    pub upper: Vec<f64>,
}

impl HalfOpenBox {
    pub fn contains(&self, point: ArrayView1<'_, f64>) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(j, &x)| self.lower[j] < x && x <= self.upper[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub boxes: Vec<HalfOpenBox>,
    pub bounds: AssetBounds,
}

impl BoxPartition {
    pub fn new(boxes: Vec<HalfOpenBox>, bounds: AssetBounds) -> Result<Self> {
        if boxes.len() > MAX_DEPTH {
            return Err(Error::Config(format!(
                "partition depth {} exceeds {MAX_DEPTH}",
                boxes.len()
            )));
        }
        let d = bounds.dim();
        if let Some(b) = boxes
            .iter()
            .find(|b| b.lower.len() != d || b.upper.len() != d)
        {
            return Err(Error::ShapeMismatch(format!(
                "box of dimension {} in {d}-asset bounds",
                b.lower.len()
            )));
        }
        Ok(Self { boxes, bounds })
    }

    pub fn depth(&self) -> usize {
        self.boxes.len()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn n_cells(&self) -> u64 {
        1u64 << self.depth()
    }

    /// The partition generated by the first `depth` boxes.
    pub fn truncated(&self, depth: usize) -> Self {
        Self {
            boxes: self.boxes[..depth.min(self.depth())].to_vec(),
            bounds: self.bounds.clone(),
        }
    }

    fn check_in_bounds(&self, terminal: ArrayView1<'_, f64>) -> Result<()> {
        if terminal.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "terminal of dimension {} for {}-asset partition",
                terminal.len(),
                self.dim()
            )));
        }
        for (j, &x) in terminal.iter().enumerate() {
            let (lo, hi) = (self.bounds.lower[j], self.bounds.upper[j]);
            if !(lo <= x && x <= hi) {
                return Err(Error::OutOfBounds {
                    asset: j,
                    value: x,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    /// Cell of `terminal`: bit `i` is set iff the point lies in box `i`.
    pub fn cell_index(&self, terminal: ArrayView1<'_, f64>) -> Result<u64> {
        self.cell_index_counted(terminal).map(|(idx, _)| idx)
    }

    /// Like [`cell_index`](Self::cell_index), also returning the number of
    /// coordinate interval tests performed.
    pub fn cell_index_counted(&self, terminal: ArrayView1<'_, f64>) -> Result<(u64, usize)> {
        self.check_in_bounds(terminal)?;
        let mut index = 0u64;
        let mut tests = 0usize;
        for (i, b) in self.boxes.iter().enumerate() {
            let mut inside = true;
            for (j, &x) in terminal.iter().enumerate() {
                tests += 1;
                inside &= b.lower[j] < x && x <= b.upper[j];
            }
            index |= (inside as u64) << i;
        }
        Ok((index, tests))
    }
}

/// Sample `depth` boxes with `a_j ~ U[lower_j, upper_j]` and `b_j = upper_j`.
pub fn sample_boxes(rng: &mut Rng, bounds: &AssetBounds, depth: usize) -> Result<BoxPartition> {
    let boxes = (0..depth)
        .map(|_| {
            let lower = (0..bounds.dim())
                .map(|j| bounds.lower[j] + rng.random::<f64>() * bounds.width(j))
                .collect();
            HalfOpenBox {
                lower,
                upper: bounds.upper.clone(),
            }
        })
        .collect();
    BoxPartition::new(boxes, bounds.clone())
}

/// One nonempty cell of the explicitly constructed partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitCell {
    /// `inside[i]` is true for `E ∩ A_i`, false for `E ∩ A_i^c`.
    pub inside: Vec<bool>,
    /// Elementary grid cells making up this region, one interval index per asset.
    pub pieces: Vec<Vec<usize>>,
}

impl ExplicitCell {
    pub fn index(&self) -> u64 {
        self.inside
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &s)| acc | ((s as u64) << i))
    }
}

/// Per-asset elementary intervals: `{q_0}` then `(q_k, q_{k+1}]`.
#[derive(Debug, Clone)]
struct AxisGrid {
    breaks: Vec<f64>,
}

impl AxisGrid {
    fn n_intervals(&self) -> usize {
        self.breaks.len()
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let first = *self.breaks.first()?;
        if x == first {
            return Some(0);
        }
        (1..self.breaks.len()).find(|&k| self.breaks[k - 1] < x && x <= self.breaks[k])
    }

    /// A representative point and whether the interval lies in `(a, b]`.
    fn inside(&self, k: usize, a: f64, b: f64) -> bool {
        let rep = if k == 0 {
            self.breaks[0]
        } else {
            0.5 * (self.breaks[k - 1] + self.breaks[k])
        };
        a < rep && rep <= b
    }
}

/// The partition built by repeated intersection with boxes and their
/// complements, for small instances only.
#[derive(Debug, Clone)]
pub struct ExplicitPartition {
    grids: Vec<AxisGrid>,
    pub cells: Vec<ExplicitCell>,
}

impl ExplicitPartition {
    /// Index of the explicit cell containing `point`, if it lies in the bounds box.
    pub fn locate(&self, point: ArrayView1<'_, f64>) -> Option<u64> {
        let piece: Option<Vec<usize>> = point
            .iter()
            .zip(&self.grids)
            .map(|(&x, g)| g.locate(x))
            .collect();
        let piece = piece?;
        self.cells
            .iter()
            .find(|c| c.pieces.contains(&piece))
            .map(ExplicitCell::index)
    }
}

/// Enumerate the cells `E ∩ A_i`, `E ∩ A_i^c` explicitly, discarding empty ones.
///
/// Emptiness is decided on the product grid spanned by all box corners: each
/// elementary grid cell lies entirely inside or outside every box.
pub fn brute_force_cells(partition: &BoxPartition) -> Result<ExplicitPartition> {
    let d = partition.dim();
    if d > 3 || partition.depth() > 8 {
        return Err(Error::Guard(format!(
            "explicit construction limited to d <= 3 and depth <= 8, got d = {d}, depth = {}",
            partition.depth()
        )));
    }
    let bounds = &partition.bounds;
    let grids: Vec<AxisGrid> = (0..d)
        .map(|j| {
            let (lo, hi) = (bounds.lower[j], bounds.upper[j]);
            let mut breaks = vec![lo, hi];
            for b in &partition.boxes {
                breaks.extend([b.lower[j], b.upper[j]].into_iter().filter(|&v| lo < v && v < hi));
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            AxisGrid { breaks }
        })
        .collect();

    // all elementary grid cells
    let mut all_pieces: Vec<Vec<usize>> = vec![Vec::new()];
    for g in &grids {
        all_pieces = all_pieces
            .into_iter()
            .flat_map(|p| {
                (0..g.n_intervals()).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }

    let mut cells = vec![ExplicitCell {
        inside: Vec::new(),
        pieces: all_pieces,
    }];
    for b in &partition.boxes {
        let mut next = Vec::with_capacity(2 * cells.len());
        for cell in cells {
            let (inn, out): (Vec<_>, Vec<_>) = cell.pieces.into_iter().partition(|piece| {
                piece
                    .iter()
                    .enumerate()
                    .all(|(j, &k)| grids[j].inside(k, b.lower[j], b.upper[j]))
            });
            for (flag, pieces) in [(true, inn), (false, out)] {
                if !pieces.is_empty() {
                    let mut inside = cell.inside.clone();
                    inside.push(flag);
                    next.push(ExplicitCell { inside, pieces });
                }
            }
        }
        cells = next;
    }
    Ok(ExplicitPartition { grids, cells })
}
