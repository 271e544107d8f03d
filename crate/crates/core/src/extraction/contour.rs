//! Suzuki–Abe border following over a freespace map.
//!
//! Free cells are 8-connected, background 4-connected. The map is padded by
//! one background cell on every side, so a free region touching the image
//! edge still gets a closed outer border.

use crate::freespace::FreespaceMap;

/// A closed border loop in pixel coordinates `(u, v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
    /// `true` for the border of a background hole inside a free region.
    pub is_hole: bool,
    /// Index of the enclosing contour, if any.
    pub parent: Option<usize>,
}

// Clockwise in image coordinates (rows grow downward), starting east.
const DIRS: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

fn dir_index(dr: i64, dc: i64) -> usize {
    DIRS.iter().position(|&d| d == (dr, dc)).expect("neighbour offset")
}

/// Traces every border in the map, in raster order of their start pixels.
pub fn extract_contours(map: &FreespaceMap) -> Vec<Contour> {
    let (w, h) = (map.width(), map.height());
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let pw = w + 2;
    let ph = h + 2;
    let mut f = vec![0i32; pw * ph];
    for v in 0..h {
        for u in 0..w {
            if map.is_free(u, v) {
                f[(v + 1) * pw + u + 1] = 1;
            }
        }
    }
    let idx = |r: i64, c: i64| r as usize * pw + c as usize;

    let mut contours: Vec<Contour> = Vec::new();
    // NBD of the frame (background) is 1; contour k has NBD k + 2.
    let mut nbd: i32 = 1;

    for r in 1..(ph - 1) as i64 {
        let mut lnbd: i32 = 1;
        for c in 1..(pw - 1) as i64 {
            let fij = f[idx(r, c)];
            if fij == 0 {
                continue;
            }
            let start = if fij == 1 && f[idx(r, c - 1)] == 0 {
                Some((false, (r, c - 1)))
            } else if fij >= 1 && f[idx(r, c + 1)] == 0 {
                if fij > 1 {
                    lnbd = fij;
                }
                Some((true, (r, c + 1)))
            } else {
                None
            };

            if let Some((is_hole, from)) = start {
                nbd += 1;
                let parent = parent_of(&contours, lnbd, is_hole);
                let points = follow(&mut f, pw, (r, c), from, nbd);
                contours.push(Contour {
                    points,
                    is_hole,
                    parent,
                });
            }

            let fij = f[idx(r, c)];
            if fij != 1 {
                lnbd = fij.abs();
            }
        }
    }
    contours
}

fn parent_of(contours: &[Contour], lnbd: i32, is_hole: bool) -> Option<usize> {
    if lnbd <= 1 {
        return None;
    }
    let last = (lnbd - 2) as usize;
    let last_is_hole = contours[last].is_hole;
    if is_hole == last_is_hole {
        contours[last].parent
    } else {
        Some(last)
    }
}

fn follow(f: &mut [i32], pw: usize, start: (i64, i64), from: (i64, i64), nbd: i32) -> Vec<(usize, usize)> {
    let at = |f: &[i32], p: (i64, i64)| f[p.0 as usize * pw + p.1 as usize];
    let to_map = |p: (i64, i64)| ((p.1 - 1) as usize, (p.0 - 1) as usize);

    // 3.1: clockwise from `from` for the first non-zero neighbour
    let d0 = dir_index(from.0 - start.0, from.1 - start.1);
    let first = (0..8).map(|k| (d0 + k) % 8).find_map(|d| {
        let p = (start.0 + DIRS[d].0, start.1 + DIRS[d].1);
        (at(f, p) != 0).then_some(p)
    });
    let Some(p1) = first else {
        f[start.0 as usize * pw + start.1 as usize] = -nbd;
        return vec![to_map(start)];
    };

    let mut points = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        points.push(to_map(p3));
        // 3.3: counter-clockwise from the successor of p2
        let d2 = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        let mut east_zero_examined = false;
        let mut p4 = p3;
        for k in 1..=8 {
            let d = (d2 + 8 - k) % 8;
            let q = (p3.0 + DIRS[d].0, p3.1 + DIRS[d].1);
            if at(f, q) != 0 {
                p4 = q;
                break;
            }
            if d == 0 {
                east_zero_examined = true;
            }
        }
        // 3.4
        let i3 = p3.0 as usize * pw + p3.1 as usize;
        if east_zero_examined {
            f[i3] = -nbd;
        } else if f[i3] == 1 {
            f[i3] = nbd;
        }
        // 3.5
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}
