use crate::model::ModelParams;

/// Gradient of one parameter block: a dense buffer plus the set of rows
/// that received a contribution. Untouched rows are zero and are skipped
/// by the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrad {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
    all: bool,
}

impl BlockGrad {
    fn zeros(rows: usize, cols: usize) -> Self {
        BlockGrad {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            marked: vec![false; rows],
            touched: Vec::new(),
            all: false,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Mutable row, recorded as touched.
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        if !self.all && !self.marked[r] {
            self.marked[r] = true;
            self.touched.push(r);
        }
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Whole buffer, recorded as dense.
    pub fn dense_mut(&mut self) -> &mut [f64] {
        self.all = true;
        &mut self.data
    }

    pub fn is_dense(&self) -> bool {
        self.all
    }

    /// Touched rows in ascending order.
    pub fn touched_rows(&self) -> Vec<usize> {
        if self.all {
            return (0..self.rows).collect();
        }
        let mut rows = self.touched.clone();
        rows.sort_unstable();
        rows
    }

    fn add(&mut self, other: &BlockGrad) {
        if other.all {
            for (a, b) in self.dense_mut().iter_mut().zip(&other.data) {
                *a += b;
            }
            return;
        }
        for &r in &other.touched {
            for (a, b) in self.row_mut(r).iter_mut().zip(other.row(r)) {
                *a += b;
            }
        }
    }
}

/// Gradients for every block of a [`ModelParams`], in block order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    blocks: Vec<BlockGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            blocks: model
                .blocks()
                .iter()
                .map(|m| BlockGrad::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[BlockGrad] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &BlockGrad {
        &self.blocks[b]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut BlockGrad {
        &mut self.blocks[b]
    }

    /// Adds `other` into `self`; shapes must match.
    pub fn merge(&mut self, other: &Gradients) {
        assert_eq!(self.blocks.len(), other.blocks.len(), "gradient block count");
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add(b);
        }
    }

    /// All entries concatenated in block order (dense view).
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.data.iter().copied()).collect()
    }
}
