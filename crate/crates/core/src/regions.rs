//! Per-pixel class maps and their 8-connected regions.

use std::collections::VecDeque;

use crate::error::{Result, SaversError};

/// Row-major `height x width` grid of class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<usize>) -> Result<Self> {
        if height * width != data.len() {
            return Err(SaversError::Dimension(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(LabelMap { height, width, data })
    }

    pub fn filled(height: usize, width: usize, class: usize) -> Self {
        LabelMap {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: usize) {
        self.data[row * self.width + col] = class;
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// A maximal 8-connected set of pixels sharing one non-zero class.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub class_id: usize,
    /// Pixels in the order they were visited; the first is the region's
    /// top-most, left-most pixel.
    pub pixels: Vec<(usize, usize)>,
}

impl Region {
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(r, c), &(pr, pc)| (r + pr as f64, c + pc as f64));
        (sr / n, sc / n)
    }
}

/// All regions of non-zero pixels, ordered by their first pixel in raster order.
pub fn regions(map: &LabelMap) -> Vec<Region> {
    let (h, w) = map.shape();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        let class_id = map.data[start];
        if class_id == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / w, idx % w);
            pixels.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let n = nr as usize * w + nc as usize;
                    if !seen[n] && map.data[n] == class_id {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        out.push(Region { class_id, pixels });
    }
    out
}
