use super::SeedSet;

/// Squared distance transform of a sampled function along one line
/// (lower envelope of parabolas rooted at the finite samples).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k: Option<usize> = None;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let Some(mut kk) = k else {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            k = Some(0);
            continue;
        };
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[kk];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s > z[kk] {
                break;
            }
            // z[0] is -inf, so this never underflows
            kk -= 1;
        }
        kk += 1;
        v[kk] = q;
        z[kk] = s;
        z[kk + 1] = f64::INFINITY;
        k = Some(kk);
    }
    if k.is_none() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut kk = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[kk + 1] < q as f64 {
            kk += 1;
        }
        let p = v[kk];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact Euclidean distance from every pixel to its nearest seed.
pub fn euclid_dt(width: usize, height: usize, seeds: &SeedSet) -> Vec<f64> {
    let mut grid = vec![f64::INFINITY; width * height];
    for &(x, y) in seeds.positions() {
        grid[y * width + x] = 0.0;
    }
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(width: usize, height: usize, seeds: &SeedSet) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; width * height];
        for y in 0..height {
            for x in 0..width {
                for &(sx, sy) in seeds.positions() {
                    let dx = x as f64 - sx as f64;
                    let dy = y as f64 - sy as f64;
                    out[y * width + x] = out[y * width + x].min((dx * dx + dy * dy).sqrt());
                }
            }
        }
        out
    }

    #[test]
    fn three_four_five() {
        let seeds = SeedSet::new(vec![(0, 0)], 6, 6).unwrap();
        let d = euclid_dt(6, 6, &seeds);
        assert_eq!(d[4 * 6 + 3], 5.0);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn nearest_of_two() {
        let seeds = SeedSet::new(vec![(0, 0), (10, 0)], 11, 3).unwrap();
        let d = euclid_dt(11, 3, &seeds);
        assert_eq!(d[4], 4.0);
        assert_eq!(d[10], 0.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..14, h in 1usize..14, picks in proptest::collection::vec(0usize..1000, 1..8)) {
            let ring = super::super::seeds::perimeter(w, h);
            let mut pos: Vec<_> = picks.iter().map(|i| ring[i % ring.len()]).collect();
            pos.sort();
            pos.dedup();
            let seeds = SeedSet::new(pos, w, h).unwrap();
            prop_assert_eq!(euclid_dt(w, h, &seeds), brute(w, h, &seeds));
        }
    }
}
