//! Ward agglomerative clustering via the nearest-neighbor chain.

use nalgebra::DMatrix;

/// Condensed symmetric distance storage over `n` slots.
struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    fn new(n: usize) -> Self {
        Condensed {
            n,
            data: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // Row-major upper triangle without the diagonal.
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

/// One merge step: slots `a < b` joined at `height`, result kept in slot `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Full Ward dendrogram of the rows of `rows` (indices into `points`).
///
/// Heights are Lance-Williams updated squared Euclidean distances.
/// Nearest-neighbor ties prefer the chain predecessor, then the lowest slot.
pub(crate) fn ward_dendrogram(points: &DMatrix<f64>, rows: &[usize]) -> Vec<Merge> {
    let n = rows.len();
    if n < 2 {
        return Vec::new();
    }
    let d = points.ncols();
    let mut dist = Condensed::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = (0..d)
                .map(|c| (points[(rows[i], c)] - points[(rows[j], c)]).powi(2))
                .sum();
            dist.set(i, j, sq);
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n - 1);

    while merges.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        let (a, b, h) = loop {
            let a = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|k| chain[k]);
            let mut best = f64::INFINITY;
            let mut best_j = usize::MAX;
            if let Some(p) = prev {
                best = dist.get(a, p);
                best_j = p;
            }
            for j in 0..n {
                if !active[j] || j == a {
                    continue;
                }
                let v = dist.get(a, j);
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            if Some(best_j) == prev {
                chain.pop();
                chain.pop();
                break (a, best_j, best);
            }
            chain.push(best_j);
        };
        let (lo, hi) = (a.min(b), a.max(b));
        let (n_lo, n_hi) = (size[lo] as f64, size[hi] as f64);
        for k in 0..n {
            if !active[k] || k == lo || k == hi {
                continue;
            }
            let n_k = size[k] as f64;
            let v = ((n_lo + n_k) * dist.get(k, lo) + (n_hi + n_k) * dist.get(k, hi)
                - n_k * h)
                / (n_lo + n_hi + n_k);
            dist.set(k, lo, v);
        }
        active[hi] = false;
        size[lo] += size[hi];
        merges.push(Merge {
            a: lo,
            b: hi,
            height: h,
        });
    }
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Cuts the Ward dendrogram of the selected rows into `k` clusters.
///
/// Labels are compact and numbered by first appearance in `rows` order.
pub(crate) fn ward_cut(points: &DMatrix<f64>, rows: &[usize], k: usize) -> Vec<usize> {
    let n = rows.len();
    assert!(k >= 1 && k <= n, "cut size {k} outside [1, {n}]");
    let mut merges = ward_dendrogram(points, rows);
    // Stable: equal heights keep chain order, which respects nesting.
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n - k) {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}
