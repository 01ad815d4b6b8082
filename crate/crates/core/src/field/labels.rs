use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Integer label per pixel; 0 is background, components are `1..=count`
/// numbered in raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl LabelField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        parent[a as usize] = parent[parent[a as usize] as usize];
        a = parent[a as usize];
    }
    a
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller provisional label as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling.
pub fn connected_components(m: &BinaryMask, connectivity: Connectivity) -> LabelField {
    let (w, h) = m.dims();
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    // Already-visited neighbours in raster order.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };

    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let mut label = 0u32;
            for &(dx, dy) in back {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize {
                    continue;
                }
                let n = provisional[ny as usize * w + nx as usize];
                if n == 0 {
                    continue;
                }
                if label == 0 {
                    label = n;
                } else {
                    union(&mut parent, label, n);
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[y * w + x] = label;
        }
    }

    // Roots are the smallest provisional label of their set, and provisional
    // labels increase in raster order, so numbering roots by first encounter
    // in a raster scan yields raster-first-occurrence labels.
    let mut final_label = vec![0u32; parent.len()];
    let mut count = 0u32;
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        let p = provisional[i];
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p);
        if final_label[root as usize] == 0 {
            count += 1;
            final_label[root as usize] = count;
        }
        labels[i] = final_label[root as usize];
    }
    LabelField {
        width: w,
        height: h,
        labels,
        count: count as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use std::collections::VecDeque;

    /// Independent BFS flood fill in raster order.
    fn flood_fill(m: &BinaryMask, eight: bool) -> Vec<u32> {
        let (w, h) = m.dims();
        let mut labels = vec![0u32; w * h];
        let mut next = 0;
        for start in 0..w * h {
            if m.data()[start] == 0 || labels[start] != 0 {
                continue;
            }
            next += 1;
            labels[start] = next;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if m.data()[j] == 1 && labels[j] == 0 {
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
    fn diagonal_pair() {
        let m = BinaryMask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
    }

    #[test]
    fn random_mask_matches_flood_fill() {
        let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(7);
        let m = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.4));
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let labels = connected_components(&m, conn);
            let oracle = flood_fill(&m, eight);
            assert_eq!(labels.labels(), oracle.as_slice());
            assert_eq!(labels.count() as u32, oracle.iter().copied().max().unwrap());
        }
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms that only join on the last row
        let m = BinaryMask::new(3, 3, vec![1, 0, 1, 1, 0, 1, 1, 1, 1]).unwrap();
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.count(), 1);
        assert!(l.labels().iter().all(|&v| v <= 1));
    }

    proptest::proptest! {
        #[test]
        fn labels_match_flood_fill_and_transpose_count(w in 1usize..20, h in 1usize..20, seed: u64, eight: bool) {
            let mut rng = rand::rngs::Xoshiro256PlusPlus::seed_from_u64(seed);
            let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.45));
            let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
            let labels = connected_components(&m, conn);
            let oracle = flood_fill(&m, eight);
            proptest::prop_assert_eq!(labels.labels(), oracle.as_slice());
            proptest::prop_assert_eq!(labels.count(), connected_components(&m.transpose(), conn).count());
        }
    }
}
