//! Mode tables and FFT grids shared by every series of a given `(dim, order)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Mode table for series on `T^n` truncated at `|k|_1 <= K`.
///
/// Only the canonical half-space is stored: `k = 0` and every `k` whose first
/// nonzero component is positive.
pub struct Basis {
    dim: usize,
    order: usize,
    modes: Vec<Vec<i32>>,
    l1: Vec<u32>,
    lookup: Vec<i32>,
    grid: Arc<Grid>,
    grid_pos: Vec<usize>,
    grid_neg: Vec<usize>,
}

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Basis")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("modes", &self.modes.len())
            .finish()
    }
}

fn is_canonical(k: &[i32]) -> bool {
    match k.iter().find(|&&x| x != 0) {
        None => true,
        Some(&x) => x > 0,
    }
}

impl Basis {
    /// Shared basis for `(dim, order)`, built once per process.
    pub fn get(dim: usize, order: usize) -> Arc<Basis> {
        assert!(dim >= 1, "series dimension must be at least 1");
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("basis cache poisoned");
        map.entry((dim, order))
            .or_insert_with(|| Arc::new(Basis::build(dim, order)))
            .clone()
    }

    fn build(dim: usize, order: usize) -> Basis {
        let k = order as i32;
        let side = 2 * order + 1;
        let total = side.pow(dim as u32);
        let mut modes = Vec::new();
        let mut l1 = Vec::new();
        let mut lookup = vec![0i32; total];
        let mut idx = vec![-k; dim];
        // first pass: canonical modes in box order, 0 placed first
        let mut canon = Vec::new();
        for _ in 0..total {
            let norm: i32 = idx.iter().map(|x| x.abs()).sum();
            if norm <= k && is_canonical(&idx) {
                canon.push(idx.clone());
            }
            for a in 0..dim {
                idx[a] += 1;
                if idx[a] > k {
                    idx[a] = -k;
                } else {
                    break;
                }
            }
        }
        canon.sort_by_key(|m| (m.iter().map(|x| x.abs()).sum::<i32>(), m.clone()));
        for m in canon {
            let pos = box_index(&m, order);
            let neg: Vec<i32> = m.iter().map(|x| -x).collect();
            let npos = box_index(&neg, order);
            let id = modes.len() as i32 + 1;
            lookup[pos] = id;
            if npos != pos {
                lookup[npos] = -id;
            }
            l1.push(m.iter().map(|x| x.unsigned_abs()).sum());
            modes.push(m);
        }
        let size = (4 * order + 4).max(8);
        let grid = Grid::get(dim, size);
        let wrap = |x: i32| -> usize { x.rem_euclid(size as i32) as usize };
        let mut grid_pos = Vec::with_capacity(modes.len());
        let mut grid_neg = Vec::with_capacity(modes.len());
        for m in &modes {
            let mut p = 0usize;
            let mut q = 0usize;
            let mut stride = 1usize;
            for &x in m.iter() {
                p += wrap(x) * stride;
                q += wrap(-x) * stride;
                stride *= size;
            }
            grid_pos.push(p);
            grid_neg.push(q);
        }
        Basis { dim, order, modes, l1, lookup, grid, grid_pos, grid_neg }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored (half-space) modes.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Vec<i32>] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &[i32] {
        &self.modes[i]
    }

    pub fn l1(&self, i: usize) -> u32 {
        self.l1[i]
    }

    /// Locate `k`: `Some((index, conjugated))`, or `None` outside the truncation.
    pub fn find(&self, k: &[i32]) -> Option<(usize, bool)> {
        if k.len() != self.dim {
            return None;
        }
        let o = self.order as i32;
        if k.iter().map(|x| x.abs()).sum::<i32>() > o {
            return None;
        }
        let v = self.lookup[box_index(k, self.order)];
        match v {
            0 => None,
            v if v > 0 => Some((v as usize - 1, false)),
            v => Some(((-v) as usize - 1, true)),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub(crate) fn grid_pos(&self, i: usize) -> usize {
        self.grid_pos[i]
    }

    pub(crate) fn grid_neg(&self, i: usize) -> usize {
        self.grid_neg[i]
    }
}

fn box_index(k: &[i32], order: usize) -> usize {
    let side = 2 * order + 1;
    let mut p = 0usize;
    let mut stride = 1usize;
    for &x in k {
        p += (x + order as i32) as usize * stride;
        stride *= side;
    }
    p
}

/// Uniform tensor grid with cached FFT plans.
pub struct Grid {
    dim: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    pub fn get(dim: usize, size: usize) -> Arc<Grid> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Grid>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("grid cache poisoned");
        map.entry((dim, size))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Grid {
                    dim,
                    size,
                    fwd: planner.plan_fft_forward(size),
                    inv: planner.plan_fft_inverse(size),
                })
            })
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Angle vector of flat grid index `p` (axis 0 varies fastest).
    pub fn point(&self, mut p: usize) -> Vec<f64> {
        let h = 2.0 * std::f64::consts::PI / self.size as f64;
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push((p % self.size) as f64 * h);
            p /= self.size;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    pub(crate) fn transform(&self, data: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.fwd } else { &self.inv };
        let n = self.size;
        let mut stride = 1usize;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for _ in 0..self.dim {
            if stride == 1 {
                for chunk in data.chunks_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
            } else {
                let block = stride * n;
                for base in (0..data.len()).step_by(block) {
                    for off in 0..stride {
                        for (j, l) in line.iter_mut().enumerate() {
                            *l = data[base + off + j * stride];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for (j, l) in line.iter().enumerate() {
                            data[base + off + j * stride] = *l;
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}
