//! Lower convex hull of a height field over a square integer grid, by beneath-beyond insertion
//! of the deepest point below each face. All orientation decisions use exact predicates on the
//! given heights, so membership is exact for the lifted values as rounded.

use std::collections::HashMap;

use robust::{orient2d, orient3d, Coord, Coord3D};

struct Face {
    v: [u32; 3],
    /// Points strictly below the face plane, with their orientation value as depth.
    outside: Vec<(u32, f64)>,
    /// Points exactly on the face plane.
    on: Vec<u32>,
    alive: bool,
}

struct Cloud<'a> {
    side: usize,
    z: &'a [f64],
}

impl Cloud<'_> {
    fn p2(&self, p: u32) -> Coord<f64> {
        let p = p as usize;
        Coord { x: (p % self.side) as f64, y: (p / self.side) as f64 }
    }

    fn p3(&self, p: u32) -> Coord3D<f64> {
        let c = self.p2(p);
        Coord3D { x: c.x, y: c.y, z: self.z[p as usize] }
    }

    fn contains(&self, v: &[u32; 3], q: u32) -> bool {
        let (a, b, c, q) = (self.p2(v[0]), self.p2(v[1]), self.p2(v[2]), self.p2(q));
        orient2d(a, b, q) >= 0.0 && orient2d(b, c, q) >= 0.0 && orient2d(c, a, q) >= 0.0
    }

    /// Positive when `q` lies strictly below the plane of `v`.
    fn depth(&self, v: &[u32; 3], q: u32) -> f64 {
        orient3d(self.p3(v[0]), self.p3(v[1]), self.p3(v[2]), self.p3(q))
    }
}

struct Hull<'a> {
    cloud: Cloud<'a>,
    faces: Vec<Face>,
    edges: HashMap<(u32, u32), usize>,
    stamp: Vec<u32>,
    visible: Vec<bool>,
    round: u32,
}

impl<'a> Hull<'a> {
    fn add_face(&mut self, v: [u32; 3]) -> usize {
        let id = self.faces.len();
        for k in 0..3 {
            self.edges.insert((v[k], v[(k + 1) % 3]), id);
        }
        self.faces.push(Face { v, outside: Vec::new(), on: Vec::new(), alive: true });
        self.stamp.push(0);
        self.visible.push(false);
        id
    }

    fn classify(&mut self, face: usize, q: u32) {
        let d = self.cloud.depth(&self.faces[face].v, q);
        if d > 0.0 {
            self.faces[face].outside.push((q, d));
        } else if d == 0.0 {
            self.faces[face].on.push(q);
        }
    }

    fn insert(&mut self, start: usize, p: u32) -> Vec<usize> {
        self.round += 1;
        let round = self.round;
        let mut gone = vec![start];
        let mut todo = vec![start];
        self.stamp[start] = round;
        self.visible[start] = true;
        let mut horizon = Vec::new();
        while let Some(f) = todo.pop() {
            let v = self.faces[f].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                match self.edges.get(&(b, a)).copied() {
                    None => horizon.push((a, b)),
                    Some(nb) if self.stamp[nb] == round => {
                        if !self.visible[nb] {
                            horizon.push((a, b));
                        }
                    }
                    Some(nb) => {
                        self.stamp[nb] = round;
                        let seen = self.cloud.depth(&self.faces[nb].v, p) > 0.0;
                        self.visible[nb] = seen;
                        if seen {
                            gone.push(nb);
                            todo.push(nb);
                        } else {
                            horizon.push((a, b));
                        }
                    }
                }
            }
        }

        let mut orphans = Vec::new();
        let mut old_vertices = Vec::new();
        for &f in &gone {
            let face = &mut self.faces[f];
            face.alive = false;
            orphans.extend(face.outside.drain(..).map(|(q, _)| q).filter(|&q| q != p));
            orphans.append(&mut face.on);
            old_vertices.extend_from_slice(&face.v);
            let v = face.v;
            for k in 0..3 {
                self.edges.remove(&(v[k], v[(k + 1) % 3]));
            }
        }
        old_vertices.sort_unstable();
        old_vertices.dedup();
        let mut rim: Vec<u32> = horizon.iter().flat_map(|&(a, b)| [a, b]).collect();
        rim.sort_unstable();
        rim.dedup();
        orphans.extend(old_vertices.into_iter().filter(|v| rim.binary_search(v).is_err()));

        let mut fresh = Vec::with_capacity(horizon.len());
        for (a, b) in horizon {
            // p on the square's boundary sees that boundary edge edge-on
            if orient2d(self.cloud.p2(a), self.cloud.p2(b), self.cloud.p2(p)) > 0.0 {
                fresh.push(self.add_face([a, b, p]));
            }
        }
        for q in orphans {
            if let Some(&f) = fresh.iter().find(|&&f| self.cloud.contains(&self.faces[f].v, q)) {
                self.classify(f, q);
            }
        }
        fresh
    }
}

/// Whether each node of the `side × side` height field lies on its lower convex hull, i.e.
/// admits an affine function below all heights that touches it.
pub fn lower_hull_membership(side: usize, z: &[f64]) -> Vec<bool> {
    assert!(side >= 2 && z.len() == side * side);
    let last = side - 1;
    let id = |i: usize, j: usize| (j * side + i) as u32;
    let (c00, c10, c11, c01) = (id(0, 0), id(last, 0), id(last, last), id(0, last));
    let mut hull = Hull {
        cloud: Cloud { side, z },
        faces: Vec::new(),
        edges: HashMap::new(),
        stamp: Vec::new(),
        visible: Vec::new(),
        round: 0,
    };
    let pair = if hull.cloud.depth(&[c00, c10, c11], c01) <= 0.0 {
        [[c00, c10, c11], [c00, c11, c01]]
    } else {
        [[c00, c10, c01], [c10, c11, c01]]
    };
    let first = hull.add_face(pair[0]);
    let second = hull.add_face(pair[1]);
    for q in 0..(side * side) as u32 {
        if [c00, c10, c11, c01].contains(&q) {
            continue;
        }
        let f = if hull.cloud.contains(&pair[0], q) { first } else { second };
        hull.classify(f, q);
    }

    let mut stack = vec![first, second];
    while let Some(f) = stack.pop() {
        if !hull.faces[f].alive || hull.faces[f].outside.is_empty() {
            continue;
        }
        let p = hull.faces[f]
            .outside
            .iter()
            .fold((u32::MAX, f64::NEG_INFINITY), |best, &(q, d)| if d > best.1 { (q, d) } else { best })
            .0;
        for g in hull.insert(f, p) {
            if !hull.faces[g].outside.is_empty() {
                stack.push(g);
            }
        }
    }

    let mut member = vec![false; side * side];
    for face in hull.faces.iter().filter(|f| f.alive) {
        for &v in &face.v {
            member[v as usize] = true;
        }
        for &q in &face.on {
            member[q as usize] = true;
        }
    }
    member
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// A node is off the hull iff some triangle or segment of other nodes covering it in
    /// projection interpolates strictly below it.
    fn brute_force(side: usize, z: &[f64]) -> Vec<bool> {
        let n = side * side;
        let xy = |p: usize| ((p % side) as f64, (p / side) as f64);
        (0..n)
            .map(|p| {
                let (px, py) = xy(p);
                for a in 0..n {
                    for b in a + 1..n {
                        for c in b + 1..n {
                            if [a, b, c].contains(&p) {
                                continue;
                            }
                            let ((ax, ay), (bx, by), (cx, cy)) = (xy(a), xy(b), xy(c));
                            let det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
                            if det == 0.0 {
                                continue;
                            }
                            let l1 = ((bx - px) * (cy - py) - (cx - px) * (by - py)) / det;
                            let l2 = ((cx - px) * (ay - py) - (ax - px) * (cy - py)) / det;
                            let l3 = 1.0 - l1 - l2;
                            if l1 < -1e-12 || l2 < -1e-12 || l3 < -1e-12 {
                                continue;
                            }
                            if l1 * z[a] + l2 * z[b] + l3 * z[c] < z[p] - 1e-9 {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_fields() {
        for trial in 0..12 {
            let mut rng = crate::rng::indexed_stream(9, "hull", trial);
            let side = 5 + (trial as usize % 3);
            let curvature = [0.0, 0.05, 0.3][trial as usize % 3];
            let z: Vec<f64> = (0..side * side)
                .map(|p| {
                    let (x, y) = ((p % side) as f64, (p / side) as f64);
                    curvature * (x * x + y * y) + rng.gen::<f64>()
                })
                .collect();
            assert_eq!(lower_hull_membership(side, &z), brute_force(side, &z), "trial {trial}");
        }
    }

    #[test]
    fn flat_and_convex_fields_are_fully_on_the_hull() {
        let side = 9;
        let flat: Vec<f64> = (0..81).map(|p| 0.5 * (p % side) as f64 - 2.0 * (p / side) as f64).collect();
        assert!(lower_hull_membership(side, &flat).iter().all(|&m| m));
        let bowl: Vec<f64> = (0..81)
            .map(|p| {
                let (x, y) = ((p % side) as f64, (p / side) as f64);
                x * x + y * y
            })
            .collect();
        assert!(lower_hull_membership(side, &bowl).iter().all(|&m| m));
    }

    #[test]
    fn concave_fields_keep_only_the_corners() {
        let side = 8;
        let cap: Vec<f64> = (0..64)
            .map(|p| {
                let (x, y) = ((p % side) as f64, (p / side) as f64);
                -(x * x + y * y)
            })
            .collect();
        let m = lower_hull_membership(side, &cap);
        assert_eq!(m.iter().filter(|&&v| v).count(), 4);
        assert!(m[0] && m[7] && m[56] && m[63]);
    }
}
