//! Two-pass connected component labeling with a union-find forest.

/// One connected foreground region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blob {
    /// Label in the owning [`Labeling`], starting at 1.
    pub label: u32,
    pub area: usize,
    /// Half-open bounding rectangle in pixels.
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Label plane plus per-blob statistics. Label 0 is background; foreground
/// labels are numbered in raster order of each blob's first pixel.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub blobs: Vec<Blob>,
}

impl Labeling {
    pub fn blob(&self, label: u32) -> &Blob {
        &self.blobs[label as usize - 1]
    }

    /// Pixel coordinates belonging to `label`, in raster order.
    pub fn pixels(&self, label: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = *self.blob(label);
        let w = self.width;
        (b.y0..b.y1)
            .flat_map(move |y| (b.x0..b.x1).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.labels[(y * w + x) as usize] == label)
    }
}

struct Forest {
    parent: Vec<u32>,
}

impl Forest {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn root(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.root(a), self.root(b));
        if ra != rb {
            // smaller id becomes the root, keeping roots stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the 8-connected components of a binary plane (`true` =
/// foreground), row-major with the given dimensions.
pub fn connected_components(plane: &[bool], width: u32, height: u32) -> Labeling {
    let (w, h) = (width as usize, height as usize);
    assert_eq!(plane.len(), w * h, "plane does not match {width}x{height}");

    let mut labels = vec![0u32; w * h];
    let mut forest = Forest { parent: vec![0] };

    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            if !plane[row + x] {
                continue;
            }
            let mut current = 0u32;
            let mut join = |l: u32, forest: &mut Forest| {
                if l == 0 {
                    return;
                }
                if current == 0 {
                    current = l;
                } else if current != l {
                    forest.union(current, l);
                }
            };
            if x > 0 {
                join(labels[row + x - 1], &mut forest);
            }
            if y > 0 {
                let up = row - w;
                if x > 0 {
                    join(labels[up + x - 1], &mut forest);
                }
                join(labels[up + x], &mut forest);
                if x + 1 < w {
                    join(labels[up + x + 1], &mut forest);
                }
            }
            labels[row + x] = if current == 0 { forest.make() } else { current };
        }
    }

    let mut final_of = vec![0u32; forest.parent.len()];
    let mut blobs: Vec<Blob> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let root = forest.root(labels[i]) as usize;
            if final_of[root] == 0 {
                blobs.push(Blob {
                    label: blobs.len() as u32 + 1,
                    area: 0,
                    x0: x as u32,
                    y0: y as u32,
                    x1: x as u32 + 1,
                    y1: y as u32 + 1,
                });
                final_of[root] = blobs.len() as u32;
            }
            let label = final_of[root];
            labels[i] = label;
            let b = &mut blobs[label as usize - 1];
            b.area += 1;
            b.x0 = b.x0.min(x as u32);
            b.x1 = b.x1.max(x as u32 + 1);
            b.y1 = y as u32 + 1;
        }
    }

    Labeling {
        width,
        height,
        labels,
        blobs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Breadth-first flood fill in raster order; shares no code with the
    /// union-find labeler.
    fn flood_fill(plane: &[bool], w: usize, h: usize) -> Vec<u32> {
        let mut labels = vec![0u32; w * h];
        let mut next = 0;
        for start in 0..w * h {
            if !plane[start] || labels[start] != 0 {
                continue;
            }
            next += 1;
            labels[start] = next;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if plane[j] && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        labels
    }

    #[test]
    fn empty_plane_has_no_blobs() {
        assert!(connected_components(&[false; 64], 8, 8).blobs.is_empty());
    }

    #[test]
    fn diagonal_neighbors_join() {
        let plane = [true, false, false, true];
        let l = connected_components(&plane, 2, 2);
        assert_eq!(l.blobs.len(), 1);
        assert_eq!(l.blobs[0].area, 2);
    }

    #[test]
    fn u_shape_merges_late() {
        #[rustfmt::skip]
        let plane = [
            true,  false, true,
            true,  false, true,
            true,  true,  true,
        ];
        let l = connected_components(&plane, 3, 3);
        assert_eq!(l.blobs.len(), 1);
        assert_eq!(l.blobs[0].area, 7);
        assert_eq!(l.pixels(1).count(), 7);
    }

    #[test]
    fn matches_flood_fill_on_random_16x16() {
        for seed in 0..1000u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let density = rng.random_range(0.1..0.7);
            let plane: Vec<bool> = (0..256).map(|_| rng.random_bool(density)).collect();
            let l = connected_components(&plane, 16, 16);
            assert_eq!(l.labels, flood_fill(&plane, 16, 16), "seed {seed}");
            let total: usize = l.blobs.iter().map(|b| b.area).sum();
            assert_eq!(total, plane.iter().filter(|&&p| p).count());
        }
    }
}
