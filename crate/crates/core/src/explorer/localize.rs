use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scene::{Aabb, Observation, Scene, Vec3, STRUCTURE};

/// Label votes accumulated from back-projected pixels on a voxel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
    pub num_categories: usize,
    /// Per voxel: hit count and position sum for every label.
    votes: BTreeMap<usize, (Vec<u32>, Vec<Vec3>)>,
}

impl SemanticMap {
    pub fn new(bounds: &Aabb, voxel: f64, num_categories: usize) -> Self {
        let e = bounds.extent();
        let dims = [0, 1, 2].map(|a| ((e[a] / voxel).ceil() as usize).max(1));
        Self {
            origin: bounds.min,
            voxel,
            dims,
            num_categories,
            votes: BTreeMap::new(),
        }
    }

    pub fn voxel_of(&self, p: &Vec3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0])
    }

    pub fn center(&self, i: usize) -> Vec3 {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel
    }

    /// Adds one vote per pixel with finite depth. Points are pulled back
    /// along the ray by 1 µm so surface points land on the observed side.
    pub fn add(&mut self, obs: &Observation) {
        let t = obs.pose.translation;
        for i in 0..obs.pixel_count() {
            let d = obs.depth[i];
            let label = obs.category[i] as usize;
            if !d.is_finite() || label >= self.num_categories {
                continue;
            }
            let p = t + obs.ray_dir(i) * (d - 1e-6);
            if let Some(v) = self.voxel_of(&p) {
                let c = self.num_categories;
                let e = self
                    .votes
                    .entry(v)
                    .or_insert_with(|| (vec![0; c], vec![Vec3::zeros(); c]));
                e.0[label] += 1;
                e.1[label] += p;
            }
        }
    }

    /// Majority label of every voxel with votes, ties to the lower label.
    pub fn labels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.votes.iter().map(|(&v, (counts, _))| {
            let mut best = 0;
            for (l, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = l;
                }
            }
            (v, best)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}

/// Density-based clustering. Returns a cluster id per point, `None` for
/// noise. `min_pts` counts the point itself.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (points[i] - points[j]).norm() <= eps)
            .collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        label[i] = Some(id);
        let mut queue = nb;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if label[j].is_none() {
                label[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbors(j);
            if nj.len() >= min_pts {
                queue.extend(nj);
            }
        }
    }
    label
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectEstimate {
    pub centroid: [f64; 3],
    pub label: u16,
    pub voxels: usize,
}

/// Clusters the non-structure voxels of each label; the centroid is the mean
/// of that label's points over the cluster.
pub fn localize_objects(map: &SemanticMap, eps: f64, min_pts: usize) -> Vec<ObjectEstimate> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, l) in map.labels() {
        if l != STRUCTURE as usize {
            by_label.entry(l).or_default().push(v);
        }
    }
    let mut out = Vec::new();
    for (label, voxels) in by_label {
        let centers: Vec<Vec3> = voxels.iter().map(|&v| map.center(v)).collect();
        let ids = dbscan(&centers, eps, min_pts);
        let k = ids.iter().flatten().max().map_or(0, |m| m + 1);
        for id in 0..k {
            let mut sum = Vec3::zeros();
            let mut count = 0u64;
            let mut nvox = 0;
            for (v, _) in voxels.iter().zip(&ids).filter(|(_, c)| **c == Some(id)) {
                let (counts, sums) = &map.votes[v];
                sum += sums[label];
                count += counts[label] as u64;
                nvox += 1;
            }
            let c = sum / count as f64;
            out.push(ObjectEstimate {
                centroid: [c.x, c.y, c.z],
                label: label as u16,
                voxels: nvox,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub estimate: usize,
    /// Instance id of the ground-truth object.
    pub instance: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub localized: usize,
    pub total: usize,
    pub matches: Vec<Match>,
}

/// Greedy nearest same-label matching of estimates to object box centers
/// within `radius`; each object and each estimate is used at most once.
pub fn score_localization(estimates: &[ObjectEstimate], scene: &Scene, radius: f64) -> Localization {
    let objects: Vec<_> = scene.objects().collect();
    let mut pairs = Vec::new();
    for (ei, e) in estimates.iter().enumerate() {
        let c = Vec3::from(e.centroid);
        for (oi, o) in objects.iter().enumerate() {
            if o.category != e.label {
                continue;
            }
            let d = (o.bounds.center() - c).norm();
            if d < radius {
                pairs.push((d, ei, oi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimates.len()];
    let mut used_o = vec![false; objects.len()];
    let mut matches = Vec::new();
    for (d, ei, oi) in pairs {
        if !used_e[ei] && !used_o[oi] {
            used_e[ei] = true;
            used_o[oi] = true;
            matches.push(Match {
                estimate: ei,
                instance: objects[oi].instance,
                distance: d,
            });
        }
    }
    Localization {
        localized: matches.len(),
        total: objects.len(),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Primitive, Z_PLAN};

    fn scene_with(objects: &[(Aabb, u16)]) -> Scene {
        let mut primitives = vec![Primitive {
            bounds: Aabb::new(Vec3::new(-1.0, -1.0, -0.2), Vec3::new(11.0, 11.0, 0.0)),
            color: [0.5; 3],
            category: 0,
            instance: 0,
        }];
        for (i, (b, c)) in objects.iter().enumerate() {
            primitives.push(Primitive {
                bounds: *b,
                color: [0.2, 0.3, 0.4],
                category: *c,
                instance: i as u32 + 1,
            });
        }
        Scene {
            seed: 0,
            bounds: Aabb::new(Vec3::new(-1.0, -1.0, -0.2), Vec3::new(11.0, 11.0, 3.0)),
            num_categories: 8,
            z_plan: Z_PLAN,
            primitives,
            rooms: vec![],
            doorways: vec![],
            held_out: vec![],
        }
    }

    fn cube(x: f64, y: f64) -> Aabb {
        Aabb::new(Vec3::new(x, y, 0.0), Vec3::new(x + 0.5, y + 0.5, 0.5))
    }

    #[test]
    fn separated_clusters_and_noise() {
        let mut pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 * 0.2, 0.0, 0.0)).collect();
        pts.extend((0..4).map(|i| Vec3::new(5.0 + i as f64 * 0.2, 0.0, 0.0)));
        pts.push(Vec3::new(2.5, 3.0, 0.0));
        let ids = dbscan(&pts, 0.3, 3);
        assert!(ids[..5].iter().all(|&c| c == Some(0)));
        assert!(ids[5..9].iter().all(|&c| c == Some(1)));
        assert_eq!(ids[9], None);
        assert!(dbscan(&[Vec3::zeros()], 0.3, 3)[0].is_none());
    }

    #[test]
    fn matching_rules() {
        let scene = scene_with(&[(cube(1.0, 1.0), 2), (cube(6.0, 1.0), 3)]);
        let at = |b: Aabb, l| ObjectEstimate {
            centroid: b.center().into(),
            label: l,
            voxels: 5,
        };
        let perfect = [at(cube(1.0, 1.0), 2), at(cube(6.0, 1.0), 3)];
        assert_eq!(score_localization(&perfect, &scene, 0.5).localized, 2);
        let far = ObjectEstimate {
            centroid: [1.85, 1.25, 0.25],
            label: 2,
            voxels: 5,
        };
        assert_eq!(score_localization(&[far], &scene, 0.5).localized, 0);
        let wrong_label = at(cube(1.0, 1.0), 3);
        assert_eq!(score_localization(&[wrong_label], &scene, 0.5).localized, 0);
        let twins = [at(cube(1.0, 1.0), 2), at(cube(1.1, 1.0), 2)];
        let s = score_localization(&twins, &scene, 0.5);
        assert_eq!(s.localized, 1);
        assert_eq!(s.matches[0].estimate, 0);
    }

    #[test]
    fn empty_map_has_no_objects() {
        let m = SemanticMap::new(&Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)), 0.2, 8);
        assert!(m.is_empty());
        assert!(localize_objects(&m, 0.3, 3).is_empty());
    }
}
