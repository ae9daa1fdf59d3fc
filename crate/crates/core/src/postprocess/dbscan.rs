use std::collections::HashMap;

/// Cluster assignment per input point; `None` is noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub labels: Vec<Option<u32>>,
    pub n_clusters: usize,
}

impl Labels {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

type Cell = (i64, i64, i64);

struct Grid<'a> {
    points: &'a [[f32; 3]],
    eps: f64,
    cells: HashMap<Cell, Vec<u32>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f32; 3]], eps: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, eps)).or_default().push(i as u32);
        }
        Self { points, eps, cells }
    }

    /// Indices within `eps` of point `i`, including `i`.
    fn neighbors(&self, i: usize, out: &mut Vec<u32>) {
        out.clear();
        let p = &self.points[i];
        let (cx, cy, cz) = cell_of(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in members {
                        if dist2(p, &self.points[j as usize]) <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
    }
}

fn cell_of(p: &[f32; 3], eps: f64) -> Cell {
    (
        (p[0] as f64 / eps).floor() as i64,
        (p[1] as f64 / eps).floor() as i64,
        (p[2] as f64 / eps).floor() as i64,
    )
}

pub(crate) fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum()
}

/// Density-based clustering. A point is core when at least `min_pts` points,
/// itself included, lie within `eps`. Clusters are numbered in order of their
/// lowest-index core point; a border point joins the first cluster that
/// reaches it.
pub fn dbscan(points: &[[f32; 3]], eps: f64, min_pts: usize) -> Labels {
    let n = points.len();
    let grid = Grid::new(points, eps);
    let mut labels: Vec<Option<u32>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0usize;
    let mut nbrs = Vec::new();
    let mut inner = Vec::new();
    let mut queue = Vec::new();

    for i in 0..n {
        if visited[i] {
            continue;
        }
        grid.neighbors(i, &mut nbrs);
        if nbrs.len() < min_pts {
            continue;
        }
        visited[i] = true;
        let c = n_clusters as u32;
        n_clusters += 1;
        labels[i] = Some(c);
        queue.clear();
        queue.extend(nbrs.iter().copied().filter(|&j| j as usize != i));
        while let Some(j) = queue.pop() {
            let j = j as usize;
            if labels[j].is_none() {
                labels[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbors(j, &mut inner);
            if inner.len() >= min_pts {
                queue.extend(inner.iter().copied().filter(|&k| !visited[k as usize]));
            }
        }
    }
    Labels { labels, n_clusters }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: [f32; 3], n: usize, spacing: f32) -> Vec<[f32; 3]> {
        let side = (n as f64).cbrt().ceil() as usize;
        let mut out = Vec::new();
        'fill: for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    if out.len() == n {
                        break 'fill;
                    }
                    out.push([
                        center[0] + x as f32 * spacing,
                        center[1] + y as f32 * spacing,
                        center[2] + z as f32 * spacing,
                    ]);
                }
            }
        }
        out
    }

    #[test]
    fn separated_blobs_form_two_clusters() {
        let mut pts = blob([0.0, 0.0, 0.0], 100, 0.02);
        pts.extend(blob([0.6, 0.0, 0.0], 100, 0.02));
        let l = dbscan(&pts, 0.1, 4);
        assert_eq!(l.n_clusters, 2);
        assert_eq!(l.noise_count(), 0);
        assert!(l.labels[..100].iter().all(|&x| x == Some(0)));
        assert!(l.labels[100..].iter().all(|&x| x == Some(1)));
    }

    #[test]
    fn lone_point_is_noise() {
        let l = dbscan(&[[0.0, 0.0, 0.0]], 0.1, 4);
        assert_eq!(l.n_clusters, 0);
        assert_eq!(l.labels, vec![None]);
    }

    #[test]
    fn min_pts_one_makes_every_point_core() {
        let l = dbscan(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]], 0.1, 1);
        assert_eq!(l.n_clusters, 2);
    }

    #[test]
    fn border_point_joins_cluster() {
        // Four points in a tight clump plus one at distance exactly eps from
        // a single member.
        let pts = [
            [0.0, 0.0, 0.0],
            [0.01, 0.0, 0.0],
            [0.0, 0.01, 0.0],
            [0.0, 0.0, 0.01],
            [-0.25, 0.0, 0.0],
        ];
        let l = dbscan(&pts, 0.25, 4);
        assert_eq!(l.n_clusters, 1);
        assert_eq!(l.labels[4], Some(0));
    }

    #[test]
    fn negative_coordinates_bin_correctly() {
        let pts = [[-0.05, 0.0, 0.0], [0.04, 0.0, 0.0], [-0.01, 0.0, 0.0], [0.0, 0.02, 0.0]];
        assert_eq!(dbscan(&pts, 0.1, 4).n_clusters, 1);
    }
}
