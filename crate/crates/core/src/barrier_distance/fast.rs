use super::{BarrierMap, ImagePatch, SeedSet};

const UNREACHED: u16 = u16::MAX;

struct ScanState<'a> {
    pixels: &'a [[u8; 3]],
    cost: Vec<u16>,
    lo: Vec<[u8; 3]>,
    hi: Vec<[u8; 3]>,
}

impl ScanState<'_> {
    #[inline(always)]
    fn relax(&mut self, p: usize, q: usize) {
        if self.cost[q] == UNREACHED {
            return;
        }
        let v = self.pixels[p];
        let (lq, hq) = (self.lo[q], self.hi[q]);
        let mut lo = [0u8; 3];
        let mut hi = [0u8; 3];
        let mut cand = 0u8;
        for c in 0..3 {
            lo[c] = lq[c].min(v[c]);
            hi[c] = hq[c].max(v[c]);
            cand = cand.max(hi[c] - lo[c]);
        }
        if (cand as u16) < self.cost[p] {
            self.cost[p] = cand as u16;
            self.lo[p] = lo;
            self.hi[p] = hi;
        }
    }
}

/// Raster-scan minimum barrier distance.
///
/// Each pixel keeps the running per-channel min/max of the best path found
/// so far; a pass pair is one forward scan (relaxing from the left and upper
/// neighbours) followed by one backward scan (right and lower neighbours).
/// Updates require strict improvement. The result is an upper bound on
/// [`exact_mbd`](super::exact_mbd) and never increases with more passes.
pub fn fast_mbd(patch: &ImagePatch, seeds: &SeedSet, passes: usize) -> BarrierMap {
    let (w, h) = (patch.width(), patch.height());
    let pixels = patch.pixels();
    let mut st = ScanState {
        pixels,
        cost: vec![UNREACHED; w * h],
        lo: pixels.to_vec(),
        hi: pixels.to_vec(),
    };
    for &(x, y) in seeds.positions() {
        st.cost[y * w + x] = 0;
    }

    for _ in 0..passes {
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if x > 0 {
                    st.relax(p, p - 1);
                }
                if y > 0 {
                    st.relax(p, p - w);
                }
            }
        }
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                let p = y * w + x;
                if x + 1 < w {
                    st.relax(p, p + 1);
                }
                if y + 1 < h {
                    st.relax(p, p + w);
                }
            }
        }
    }

    BarrierMap {
        width: w,
        height: h,
        // a full pass pair reaches every pixel from any boundary seed
        values: st.cost.iter().map(|&c| c.min(255) as u8).collect(),
    }
}
