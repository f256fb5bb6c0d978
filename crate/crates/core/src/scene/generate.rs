use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, Primitive, Scene, SceneError, Vec3, ViewPoint, STRUCTURE, Z_PLAN};

const WALL: f64 = 0.2;
const ROOM_HEIGHT: f64 = 3.0;
const DOOR_HEIGHT: f64 = 2.2;
const WALL_MARGIN: f64 = 0.3;
/// Minimum horizontal gap between two objects.
const OBJECT_GAP: f64 = 0.6;
const DOOR_KEEPOUT: f64 = 1.0;
const MAX_ATTEMPTS: usize = 400;
const MAX_LAYOUTS: usize = 20;
const FLOOD_CELL: f64 = 0.2;

/// Parameters of the procedural scene generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub rooms: usize,
    pub objects: usize,
    pub categories: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            rooms: 2,
            objects: 8,
            categories: 8,
        }
    }
}

/// Builds a row of box rooms joined by doorways and scatters objects on the
/// floors. Deterministic in `seed`.
pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<Scene, SceneError> {
    if spec.rooms == 0 {
        return Err(SceneError::InvalidSpec("need at least one room".into()));
    }
    if spec.categories < 2 {
        return Err(SceneError::InvalidSpec("need at least two categories".into()));
    }
    if spec.categories > u16::MAX as usize {
        return Err(SceneError::InvalidSpec("too many categories".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let depth_y = rng.random_range(3.6..4.4);
    let mut rooms = Vec::with_capacity(spec.rooms);
    let mut x = 0.0;
    for _ in 0..spec.rooms {
        let len = rng.random_range(3.6..4.4);
        rooms.push(Aabb::new(
            Vec3::new(x, 0.0, 0.0),
            Vec3::new(x + len, depth_y, ROOM_HEIGHT),
        ));
        x += len + WALL;
    }
    let x_end = x - WALL;
    let bounds = Aabb::new(
        Vec3::new(-WALL, -WALL, -WALL),
        Vec3::new(x_end + WALL, depth_y + WALL, ROOM_HEIGHT + WALL),
    );

    let mut prims = Vec::new();
    let mut structure = |b: Aabb, color: [f64; 3]| {
        prims.push(Primitive {
            bounds: b,
            color,
            category: STRUCTURE,
            instance: 0,
        })
    };
    let (lo, hi) = (bounds.min, bounds.max);
    structure(
        Aabb::new(lo, Vec3::new(hi.x, hi.y, 0.0)),
        [0.45, 0.36, 0.28],
    );
    structure(
        Aabb::new(Vec3::new(lo.x, lo.y, ROOM_HEIGHT), hi),
        [0.92, 0.92, 0.90],
    );
    let wall_color = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(0.6..0.9),
            rng.random_range(0.6..0.9),
            rng.random_range(0.6..0.9),
        ]
    };
    let side_walls = [
        Aabb::new(Vec3::new(lo.x, lo.y, 0.0), Vec3::new(hi.x, 0.0, ROOM_HEIGHT)),
        Aabb::new(
            Vec3::new(lo.x, depth_y, 0.0),
            Vec3::new(hi.x, hi.y, ROOM_HEIGHT),
        ),
        Aabb::new(Vec3::new(lo.x, 0.0, 0.0), Vec3::new(0.0, depth_y, ROOM_HEIGHT)),
        Aabb::new(
            Vec3::new(x_end, 0.0, 0.0),
            Vec3::new(hi.x, depth_y, ROOM_HEIGHT),
        ),
    ];
    let mut wall_boxes: Vec<(Aabb, [f64; 3])> = side_walls
        .into_iter()
        .map(|b| (b, wall_color(&mut rng)))
        .collect();

    let mut doorways = Vec::new();
    for pair in rooms.windows(2) {
        let (x0, x1) = (pair[0].max.x, pair[1].min.x);
        let width = rng.random_range(1.0..1.2);
        let y0 = rng.random_range(0.4..depth_y - 0.4 - width);
        let color = wall_color(&mut rng);
        let door = Aabb::new(Vec3::new(x0, y0, 0.0), Vec3::new(x1, y0 + width, DOOR_HEIGHT));
        wall_boxes.push((
            Aabb::new(Vec3::new(x0, 0.0, 0.0), Vec3::new(x1, y0, ROOM_HEIGHT)),
            color,
        ));
        wall_boxes.push((
            Aabb::new(
                Vec3::new(x0, y0 + width, 0.0),
                Vec3::new(x1, depth_y, ROOM_HEIGHT),
            ),
            color,
        ));
        wall_boxes.push((
            Aabb::new(
                Vec3::new(x0, y0, DOOR_HEIGHT),
                Vec3::new(x1, y0 + width, ROOM_HEIGHT),
            ),
            color,
        ));
        doorways.push(door);
    }
    for (b, c) in wall_boxes {
        structure(b, c);
    }
    let structure_count = prims.len();

    let keepouts: Vec<Aabb> = doorways
        .iter()
        .map(|d| {
            Aabb::new(
                Vec3::new(d.min.x - DOOR_KEEPOUT, d.min.y - 0.2, 0.0),
                Vec3::new(d.max.x + DOOR_KEEPOUT, d.max.y + 0.2, DOOR_HEIGHT),
            )
        })
        .collect();

    let mut layout_ok = false;
    for _ in 0..MAX_LAYOUTS {
        prims.truncate(structure_count);
        for index in 0..spec.objects {
            let room = rooms[index % rooms.len()];
            let obj = place_object(&mut rng, &room, &prims, &keepouts, index, spec.categories)?;
            prims.push(obj);
        }
        let probe = Scene {
            seed,
            bounds,
            num_categories: spec.categories,
            z_plan: Z_PLAN,
            primitives: prims.clone(),
            rooms: rooms.clone(),
            doorways: doorways.clone(),
            held_out: Vec::new(),
        };
        if rooms_connected(&probe) {
            layout_ok = true;
            break;
        }
    }
    if !layout_ok {
        return Err(SceneError::PlacementFailure {
            index: spec.objects,
            attempts: MAX_LAYOUTS,
        });
    }

    let mut scene = Scene {
        seed,
        bounds,
        num_categories: spec.categories,
        z_plan: Z_PLAN,
        primitives: prims,
        rooms,
        doorways,
        held_out: Vec::new(),
    };
    scene.held_out = held_out_views(&scene);
    Ok(scene)
}

fn place_object(
    rng: &mut ChaCha8Rng,
    room: &Aabb,
    placed: &[Primitive],
    keepouts: &[Aabb],
    index: usize,
    categories: usize,
) -> Result<Primitive, SceneError> {
    for _ in 0..MAX_ATTEMPTS {
        let w = rng.random_range(0.3..0.6);
        let d = rng.random_range(0.3..0.6);
        let h = rng.random_range(0.3..1.6);
        let xmin = room.min.x + WALL_MARGIN;
        let xmax = room.max.x - WALL_MARGIN - w;
        let ymin = room.min.y + WALL_MARGIN;
        let ymax = room.max.y - WALL_MARGIN - d;
        if xmax <= xmin || ymax <= ymin {
            break;
        }
        let x = rng.random_range(xmin..xmax);
        let y = rng.random_range(ymin..ymax);
        let b = Aabb::new(Vec3::new(x, y, 0.0), Vec3::new(x + w, y + d, h));
        let clearance = b.expanded(OBJECT_GAP);
        let clash = placed
            .iter()
            .filter(|p| p.is_object())
            .any(|p| p.bounds.overlaps(&clearance))
            || keepouts.iter().any(|k| k.overlaps(&b));
        if clash {
            continue;
        }
        let category = rng.random_range(1..categories) as u16;
        let color = [
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
        ];
        return Ok(Primitive {
            bounds: b,
            color,
            category,
            instance: index as u32 + 1,
        });
    }
    Err(SceneError::PlacementFailure {
        index,
        attempts: MAX_ATTEMPTS,
    })
}

/// Flood fill over free cells of the planning plane, starting in the first
/// room; true if every room interior is reached.
pub(crate) fn rooms_connected(scene: &Scene) -> bool {
    let b = &scene.bounds;
    let nx = (b.extent().x / FLOOD_CELL).ceil() as usize;
    let ny = (b.extent().y / FLOOD_CELL).ceil() as usize;
    let center = |i: usize, j: usize| {
        Vec3::new(
            b.min.x + (i as f64 + 0.5) * FLOOD_CELL,
            b.min.y + (j as f64 + 0.5) * FLOOD_CELL,
            scene.z_plan,
        )
    };
    let free: Vec<bool> = (0..nx * ny)
        .map(|k| {
            let p = center(k % nx, k / nx);
            b.contains(&p) && !scene.is_inside_solid(&p)
        })
        .collect();
    let Some(start) = (0..nx * ny).find(|&k| {
        free[k] && scene.room_of(&center(k % nx, k / nx)) == Some(0)
    }) else {
        return false;
    };
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut reached = vec![false; scene.rooms.len()];
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k % nx, k / nx);
        if let Some(r) = scene.room_of(&center(i, j)) {
            reached[r] = true;
        }
        let nbrs = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (a, c) in nbrs {
            if a < nx && c < ny {
                let n = c * nx + a;
                if free[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    reached.into_iter().all(|r| r)
}

/// Four level views per room at the quadrant centers, facing the room
/// center, nudged away from objects.
fn held_out_views(scene: &Scene) -> Vec<ViewPoint> {
    let mut views = Vec::new();
    for room in &scene.rooms {
        let c = room.center();
        let e = room.extent();
        for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            let mut p = Vec3::new(c.x + sx * e.x / 4.0, c.y + sy * e.y / 4.0, scene.z_plan);
            if !clear_of_objects(scene, &p, 0.4) {
                p = nearest_clear(scene, room, p, 0.4).unwrap_or(p);
            }
            let yaw = (c.y - p.y).atan2(c.x - p.x);
            views.push(ViewPoint { position: p, yaw });
        }
    }
    views
}

pub(crate) fn clear_of_objects(scene: &Scene, p: &Vec3, clearance: f64) -> bool {
    !scene
        .primitives
        .iter()
        .any(|prim| prim.bounds.expanded(clearance).contains(p))
}

fn nearest_clear(scene: &Scene, room: &Aabb, p: Vec3, clearance: f64) -> Option<Vec3> {
    let step = 0.1;
    for ring in 1..40 {
        let r = ring as f64 * step;
        for k in 0..(8 * ring) {
            let a = k as f64 / (8 * ring) as f64 * std::f64::consts::TAU;
            let q = Vec3::new(p.x + r * a.cos(), p.y + r * a.sin(), p.z);
            if room.contains(&q) && clear_of_objects(scene, &q, clearance) {
                return Some(q);
            }
        }
    }
    None
}

impl Scene {
    /// Uniform random level position inside `room` at the planning height,
    /// at least `clearance` away from every primitive.
    pub fn random_free_position<R: Rng>(
        &self,
        room: usize,
        clearance: f64,
        rng: &mut R,
    ) -> Option<Vec3> {
        let r = self.rooms.get(room)?;
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(r.min.x..r.max.x),
                rng.random_range(r.min.y..r.max.y),
                self.z_plan,
            );
            if clear_of_objects(self, &p, clearance) {
                return Some(p);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_single_room() {
        let s = generate_scene(
            0,
            &SceneSpec {
                rooms: 1,
                objects: 0,
                categories: 8,
            },
        )
        .unwrap();
        assert!(s.primitives.iter().all(|p| p.category == STRUCTURE));
        assert_eq!(s.rooms.len(), 1);
        assert!(s.doorways.is_empty());
        assert_eq!(s.held_out.len(), 4);
    }

    #[test]
    fn deterministic() {
        let spec = SceneSpec::default();
        assert_eq!(generate_scene(3, &spec).unwrap(), generate_scene(3, &spec).unwrap());
        assert_ne!(generate_scene(3, &spec).unwrap(), generate_scene(4, &spec).unwrap());
    }

    #[test]
    fn two_rooms_five_objects() {
        let s = generate_scene(
            7,
            &SceneSpec {
                rooms: 2,
                objects: 5,
                categories: 8,
            },
        )
        .unwrap();
        let objs: Vec<_> = s.objects().collect();
        assert_eq!(objs.len(), 5);
        let mut ids: Vec<u32> = objs.iter().map(|o| o.instance).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        assert_eq!(s.doorways.len(), 1);
        let d = s.doorways[0];
        assert!(d.extent().y >= 0.8);
        assert!(rooms_connected(&s));
        for o in &objs {
            assert_eq!(o.bounds.min.z, 0.0);
            assert!(s.bounds.contains_box(&o.bounds));
            assert!((o.category as usize) < s.num_categories);
        }
        for (i, a) in objs.iter().enumerate() {
            for b in &objs[i + 1..] {
                assert!(!a.bounds.overlaps(&b.bounds));
            }
        }
        for v in &s.held_out {
            assert!(!s.is_inside_solid(&v.position));
        }
    }

    #[test]
    fn infeasible_spec_reports_placement_failure() {
        let err = generate_scene(
            1,
            &SceneSpec {
                rooms: 1,
                objects: 60,
                categories: 8,
            },
        )
        .unwrap_err();
        assert!(matches!(err, SceneError::PlacementFailure { .. }));
    }

    #[test]
    fn bad_spec() {
        let s = SceneSpec {
            rooms: 0,
            objects: 0,
            categories: 8,
        };
        assert!(generate_scene(0, &s).is_err());
        let s = SceneSpec {
            rooms: 1,
            objects: 0,
            categories: 1,
        };
        assert!(generate_scene(0, &s).is_err());
    }
}
