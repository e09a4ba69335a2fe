use super::{BarrierMap, ImagePatch, MbdError, SeedSet};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

/// Largest patch (in pixels) accepted by the exact search.
pub const ORACLE_MAX_PIXELS: usize = 1024;
/// Largest number of distinct intensities per channel accepted by the exact search.
pub const ORACLE_MAX_LEVELS: usize = 16;

pub fn check_oracle_guard(patch: &ImagePatch) -> Result<(), MbdError> {
    let levels = patch.channel_levels();
    let max_levels = levels.into_iter().max().unwrap_or(0);
    if patch.len() > ORACLE_MAX_PIXELS || max_levels > ORACLE_MAX_LEVELS {
        return Err(MbdError::OracleScale {
            pixels: patch.len(),
            levels: max_levels,
        });
    }
    Ok(())
}

type State = (u8, u32, [u8; 3], [u8; 3]);

fn barrier(lo: &[u8; 3], hi: &[u8; 3]) -> u8 {
    (0..3).map(|c| hi[c] - lo[c]).max().unwrap_or(0)
}

fn dominated(settled: &[([u8; 3], [u8; 3])], lo: &[u8; 3], hi: &[u8; 3]) -> bool {
    settled
        .iter()
        .any(|(l, h)| (0..3).all(|c| l[c] >= lo[c] && h[c] <= hi[c]))
}

/// Exact seeded minimum barrier distance over 4-connected paths.
///
/// Ordered search over `(pixel, per-channel running min, per-channel running max)`.
/// The barrier of a path never shrinks as the path grows, so states pop in
/// nondecreasing cost and the first settled state of a pixel is optimal.
/// States whose intervals contain an already settled interval at the same
/// pixel are pruned.
pub fn exact_mbd(patch: &ImagePatch, seeds: &SeedSet) -> Result<BarrierMap, MbdError> {
    check_oracle_guard(patch)?;
    let (w, h) = (patch.width(), patch.height());
    let pixels = patch.pixels();

    let mut best: Vec<Option<u8>> = vec![None; w * h];
    let mut settled: Vec<Vec<([u8; 3], [u8; 3])>> = vec![Vec::new(); w * h];
    let mut queued: HashSet<(u32, [u8; 3], [u8; 3])> = HashSet::new();
    let mut heap: BinaryHeap<Reverse<State>> = BinaryHeap::new();

    for &(x, y) in seeds.positions() {
        let p = (y * w + x) as u32;
        let v = pixels[p as usize];
        if queued.insert((p, v, v)) {
            heap.push(Reverse((0, p, v, v)));
        }
    }

    while let Some(Reverse((cost, p, lo, hi))) = heap.pop() {
        let pi = p as usize;
        if dominated(&settled[pi], &lo, &hi) {
            continue;
        }
        settled[pi].push((lo, hi));
        best[pi].get_or_insert(cost);

        let (x, y) = (pi % w, pi / w);
        let mut neighbours = [usize::MAX; 4];
        if x > 0 {
            neighbours[0] = pi - 1;
        }
        if x + 1 < w {
            neighbours[1] = pi + 1;
        }
        if y > 0 {
            neighbours[2] = pi - w;
        }
        if y + 1 < h {
            neighbours[3] = pi + w;
        }
        for q in neighbours.into_iter().filter(|&q| q != usize::MAX) {
            let v = pixels[q];
            let mut nlo = lo;
            let mut nhi = hi;
            for c in 0..3 {
                nlo[c] = nlo[c].min(v[c]);
                nhi[c] = nhi[c].max(v[c]);
            }
            if dominated(&settled[q], &nlo, &nhi) {
                continue;
            }
            if queued.insert((q as u32, nlo, nhi)) {
                heap.push(Reverse((barrier(&nlo, &nhi), q as u32, nlo, nhi)));
            }
        }
    }

    Ok(BarrierMap {
        width: w,
        height: h,
        values: best
            .into_iter()
            .map(|b| b.expect("4-connected patch: every pixel reachable"))
            .collect(),
    })
}

/// Exact coupled cost `min_s [MBD(p, s) + alpha * |p - s|]`, one search per seed.
pub fn exact_coupled_distance(
    patch: &ImagePatch,
    seeds: &SeedSet,
    alpha: f64,
) -> Result<Vec<f64>, MbdError> {
    check_oracle_guard(patch)?;
    let (w, h) = (patch.width(), patch.height());
    let mut out = vec![f64::INFINITY; w * h];
    for &(sx, sy) in seeds.positions() {
        let single = SeedSet::new(vec![(sx, sy)], w, h)?;
        let mbd = exact_mbd(patch, &single)?;
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - sx as f64;
                let dy = y as f64 - sy as f64;
                let cost = mbd.get(x, y) as f64 + alpha * (dx * dx + dy * dy).sqrt();
                let slot = &mut out[y * w + x];
                if cost < *slot {
                    *slot = cost;
                }
            }
        }
    }
    Ok(out)
}
