//! Topology-preserving 3D thinning (26-connected foreground, 6-connected background).

use crate::volume::{BinaryMask, Grid3};

const CENTER: usize = 13;

fn cube_index(dz: isize, dy: isize, dx: isize) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

fn cube_coords(i: usize) -> [isize; 3] {
    [(i / 9) as isize - 1, ((i / 3) % 3) as isize - 1, (i % 3) as isize - 1]
}

struct Tables {
    /// 26-adjacency among the 26 non-centre cells.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacency among the 18 face/edge cells.
    adj6: Vec<Vec<usize>>,
    n18: [bool; 27],
    faces: [usize; 6],
}

fn tables() -> &'static Tables {
    static TABLES: std::sync::OnceLock<Tables> = std::sync::OnceLock::new();
    TABLES.get_or_init(|| {
        let mut n18 = [false; 27];
        for (i, slot) in n18.iter_mut().enumerate() {
            let c = cube_coords(i);
            let steps = c.iter().map(|v| v.abs()).sum::<isize>();
            *slot = (1..=2).contains(&steps);
        }
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        for a in 0..27 {
            for b in 0..27 {
                if a == b || a == CENTER || b == CENTER {
                    continue;
                }
                let (ca, cb) = (cube_coords(a), cube_coords(b));
                let d: Vec<isize> = (0..3).map(|k| (ca[k] - cb[k]).abs()).collect();
                if d.iter().all(|&v| v <= 1) {
                    adj26[a].push(b);
                    if d.iter().sum::<isize>() == 1 && n18[a] && n18[b] {
                        adj6[a].push(b);
                    }
                }
            }
        }
        let faces = [
            cube_index(-1, 0, 0),
            cube_index(1, 0, 0),
            cube_index(0, -1, 0),
            cube_index(0, 1, 0),
            cube_index(0, 0, -1),
            cube_index(0, 0, 1),
        ];
        Tables { adj26, adj6, n18, faces }
    })
}

fn neighbourhood(grid: &Grid3<u8>, z: usize, y: usize, x: usize) -> [bool; 27] {
    let [d, h, w] = grid.dims();
    let mut n = [false; 27];
    for (i, cell) in n.iter_mut().enumerate() {
        let [dz, dy, dx] = cube_coords(i);
        let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
        if nz >= 0 && ny >= 0 && nx >= 0 && (nz as usize) < d && (ny as usize) < h && (nx as usize) < w {
            *cell = grid.get(nz as usize, ny as usize, nx as usize) != 0;
        }
    }
    n
}

fn count_components(cells: &[bool; 27], adj: &[Vec<usize>], seeds: impl Iterator<Item = usize>) -> usize {
    let mut seen = [false; 27];
    let mut stack = Vec::with_capacity(27);
    let mut count = 0;
    for s in seeds {
        if !cells[s] || seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(c) = stack.pop() {
            for &n in &adj[c] {
                if cells[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    count
}

/// Whether deleting the centre voxel preserves local topology.
pub(crate) fn is_simple(n: &[bool; 27]) -> bool {
    let t = tables();
    let mut fg = *n;
    fg[CENTER] = false;
    if count_components(&fg, &t.adj26, 0..27) != 1 {
        return false;
    }
    let mut bg = [false; 27];
    for i in 0..27 {
        bg[i] = t.n18[i] && !n[i];
    }
    count_components(&bg, &t.adj6, t.faces.iter().copied()) == 1
}

fn foreground_neighbours(n: &[bool; 27]) -> usize {
    n.iter().enumerate().filter(|&(i, &v)| v && i != CENTER).count()
}

/// Thins `mask` to a one-voxel-wide skeleton. Curve endpoints are kept, so
/// tubes shrink to their centrelines rather than to points.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut grid = mask.grid().clone();
    let [_, h, w] = grid.dims();
    // x borders last: bars along x keep their length, others lose about one
    // voxel per end for every two voxels of half-width
    let directions: [(isize, isize, isize); 6] = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
    let mut active: Vec<usize> = (0..grid.len()).filter(|&i| grid.data()[i] != 0).collect();
    loop {
        let mut changed = false;
        for &(dz, dy, dx) in &directions {
            let nb = cube_index(dz, dy, dx);
            let mut candidates = Vec::new();
            for &i in &active {
                if grid.data()[i] == 0 {
                    continue;
                }
                let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
                let n = neighbourhood(&grid, z, y, x);
                if !n[nb] && foreground_neighbours(&n) > 1 && is_simple(&n) {
                    candidates.push(i);
                }
            }
            for i in candidates {
                let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
                let n = neighbourhood(&grid, z, y, x);
                if !n[nb] && foreground_neighbours(&n) > 1 && is_simple(&n) {
                    grid.set(z, y, x, 0);
                    changed = true;
                }
            }
        }
        active.retain(|&i| grid.data()[i] != 0);
        if !changed {
            break;
        }
    }
    BinaryMask::from_grid_unchecked(grid)
}

/// Skeleton voxel coordinates `(z, y, x)` in raster order.
pub fn centerline_of(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let skel = skeletonize(mask);
    let [_, h, w] = skel.dims();
    skel.data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| [i / (h * w), (i / w) % h, i % w])
        .collect()
}
