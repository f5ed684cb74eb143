//! Simulated pedestrians and sensors.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{PathEnd, PedKind, PedestrianSpec, SensorSpec};
use crate::grid::{GridIndex, OccupancyGrid};
use crate::pomdp::{sensor_covers, Awareness, TransitionParams};
use crate::tracker::{Detection, SensorSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPed {
    pub id: u32,
    pub pos: GridIndex,
    pub g_true: Awareness,
    pub kind: PedKind,
    pub gaze_script: Option<Vec<(u32, bool)>>,
    pub speed: f64,
    /// Manual gaze setting; replaces scripted and synthesized gaze.
    pub gaze_override: Option<bool>,
    /// Manual destination; replaces the pedestrian's own motion.
    pub target: Option<GridIndex>,
    pub exited: bool,
    residue: f64,
    script_pos: usize,
    script_dir: i8,
}

impl SimPed {
    pub fn new(id: u32, spec: &PedestrianSpec, g_true: Awareness) -> Self {
        Self {
            id,
            pos: spec.start,
            g_true,
            kind: spec.kind.clone(),
            gaze_script: spec.gaze_script.clone(),
            speed: spec.speed_cells_per_tick,
            gaze_override: None,
            target: None,
            exited: false,
            residue: 0.0,
            script_pos: 0,
            script_dir: 1,
        }
    }

    /// Gaze intent before sensor noise.
    pub fn gaze_now(&self, tick: u32) -> bool {
        if let Some(g) = self.gaze_override {
            return g;
        }
        if !self.g_true.is_aware() {
            return false;
        }
        match &self.gaze_script {
            Some(script) => script
                .iter()
                .filter(|(t, _)| *t <= tick)
                .max_by_key(|(t, _)| *t)
                .map_or(false, |(_, g)| *g),
            None => true,
        }
    }
}

/// What a pedestrian needs to know about the robot and the others to move.
pub struct MoveContext<'a> {
    pub grid: &'a OccupancyGrid,
    pub robot: GridIndex,
    pub robot_next: GridIndex,
    pub occupied: &'a [GridIndex],
    pub rules: &'a TransitionParams,
}

impl MoveContext<'_> {
    fn open(&self, c: GridIndex) -> bool {
        self.grid.is_free(c) && !self.occupied.contains(&c)
    }

    /// Cells an aware pedestrian at `from` refuses to enter.
    fn excluded_for_aware(&self, from: GridIndex, c: GridIndex) -> bool {
        if !self.rules.aware_avoidance {
            return false;
        }
        if c == self.robot || c == self.robot_next {
            return true;
        }
        let gap = |x: GridIndex| x.cell_distance(self.robot).min(x.cell_distance(self.robot_next));
        self.rules.aware_keep_distance && gap(c) < gap(from) - 1e-12
    }
}

fn neighbors(c: GridIndex) -> impl Iterator<Item = GridIndex> {
    (-1..=1)
        .flat_map(|dj| (-1..=1).map(move |di| (di, dj)))
        .filter(|&d| d != (0, 0))
        .map(move |(di, dj)| c.offset(di, dj))
}

/// First step of a shortest 8-connected route from `from` to `to` over open
/// cells, if any.
fn step_toward(ctx: &MoveContext<'_>, from: GridIndex, to: GridIndex) -> Option<GridIndex> {
    if from == to {
        return None;
    }
    let w = ctx.grid.width() as i32;
    let h = ctx.grid.height() as i32;
    let key = |c: GridIndex| (c.j * w + c.i) as usize;
    let mut seen = vec![false; (w * h) as usize];
    let mut queue = VecDeque::from([to]);
    seen[key(to)] = true;
    // search backwards from the target so the first hit gives the next step
    while let Some(c) = queue.pop_front() {
        for n in neighbors(c) {
            if !ctx.grid.in_bounds(n) || seen[key(n)] {
                continue;
            }
            if n == from {
                return Some(c);
            }
            if ctx.open(n) {
                seen[key(n)] = true;
                queue.push_back(n);
            }
        }
    }
    None
}

/// Advances one pedestrian by at most one cell.
pub fn pedestrian_step<R: Rng + ?Sized>(ped: &mut SimPed, ctx: &MoveContext<'_>, rng: &mut R) {
    if ped.exited {
        return;
    }
    let u_move: f64 = rng.random();
    let u_pick: f64 = rng.random();
    ped.residue = (ped.residue + ped.speed).min(1.0);
    if ped.residue < 1.0 - 1e-12 {
        return;
    }
    ped.residue -= 1.0;
    let aware = ped.g_true.is_aware();
    let allowed = |c: GridIndex| ctx.open(c) && !(aware && ctx.excluded_for_aware(ped.pos, c));

    if let Some(target) = ped.target {
        if let Some(next) = step_toward(ctx, ped.pos, target) {
            if allowed(next) {
                ped.pos = next;
            }
        }
        return;
    }
    match &ped.kind {
        PedKind::RandomWalk { stay_prob, may_exit } => {
            if u_move < *stay_prob {
                return;
            }
            let candidates: Vec<GridIndex> = neighbors(ped.pos)
                .filter(|&c| allowed(c) || (*may_exit && !ctx.grid.in_bounds(c)))
                .collect();
            if candidates.is_empty() {
                return;
            }
            let k = ((u_pick * candidates.len() as f64) as usize).min(candidates.len() - 1);
            let next = candidates[k];
            if ctx.grid.in_bounds(next) {
                ped.pos = next;
            } else {
                ped.exited = true;
            }
        }
        PedKind::ScriptedPath { path, end } => {
            let last = path.len() - 1;
            let at_end = (ped.script_dir > 0 && ped.script_pos == last) || (ped.script_dir < 0 && ped.script_pos == 0);
            if at_end {
                match end {
                    PathEnd::Stop => return,
                    PathEnd::Exit => {
                        ped.exited = true;
                        return;
                    }
                    PathEnd::Reverse if last > 0 => ped.script_dir = -ped.script_dir,
                    PathEnd::Reverse => return,
                }
            }
            let next_pos = (ped.script_pos as isize + ped.script_dir as isize) as usize;
            let next = path[next_pos];
            if allowed(next) {
                ped.pos = next;
                ped.script_pos = next_pos;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorFrame {
    pub vision: Vec<Detection>,
    pub laser: Vec<Detection>,
    /// Gaze flag per vision detection.
    pub gaze: Vec<bool>,
    /// Pedestrian id behind each vision detection.
    pub vision_ids: Vec<u32>,
}

/// One sensing pass from the robot cell with the given heading.
pub fn sense<R: Rng + ?Sized>(
    peds: &[SimPed],
    robot: GridIndex,
    heading: (f64, f64),
    grid: &OccupancyGrid,
    sensors: &SensorSpec,
    tick: u32,
    time: f64,
    rng: &mut R,
) -> SensorFrame {
    let res = grid.resolution();
    let vision_noise = Normal::new(0.0, sensors.vision_sigma_m).expect("nonnegative sigma");
    let laser_noise = Normal::new(0.0, sensors.laser_sigma_m).expect("nonnegative sigma");
    let mut frame = SensorFrame::default();
    for ped in peds {
        if ped.exited {
            continue;
        }
        let draws: [f64; 4] = std::array::from_fn(|k| if k < 2 { vision_noise.sample(rng) } else { laser_noise.sample(rng) });
        let u_gaze: f64 = rng.random();
        if !sensor_covers(robot, heading, ped.pos, res, sensors.fov_deg, sensors.range_m) {
            continue;
        }
        let (cx, cy) = grid.grid_to_world(ped.pos);
        frame.vision.push(Detection::new(SensorSource::Vision, (cx + draws[0], cy + draws[1]), time));
        frame.laser.push(Detection::new(SensorSource::Laser, (cx + draws[2], cy + draws[3]), time));
        frame.gaze.push(ped.gaze_now(tick) && u_gaze >= sensors.gaze_false_neg);
        frame.vision_ids.push(ped.id);
    }
    if sensors.clutter_rate > 0.0 {
        let n = Poisson::new(sensors.clutter_rate).expect("positive rate").sample(rng) as usize;
        let (rx, ry) = grid.grid_to_world(robot);
        for _ in 0..n {
            // uniform over the sensing disc
            let r = sensors.range_m * rng.random::<f64>().sqrt();
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            frame
                .laser
                .push(Detection::new(SensorSource::Laser, (rx + r * th.cos(), ry + r * th.sin()), time));
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::GTrueSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn walker(start: (i32, i32), g: Awareness, stay: f64) -> SimPed {
        let spec = PedestrianSpec {
            kind: PedKind::RandomWalk {
                stay_prob: stay,
                may_exit: false,
            },
            g_true: GTrueSpec::Fixed(g),
            gaze_script: None,
            start: start.into(),
            speed_cells_per_tick: 1.0,
        };
        SimPed::new(0, &spec, g)
    }

    #[test]
    fn boxed_in_walker_stays() {
        let grid: OccupancyGrid = "3 3 0.75\n###\n#.#\n###\n".parse().unwrap();
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(-5, -5),
            robot_next: GridIndex::new(-5, -5),
            occupied: &[],
            rules: &rules,
        };
        let mut p = walker((1, 1), Awareness::Unaware, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            pedestrian_step(&mut p, &ctx, &mut rng);
            assert_eq!(p.pos, GridIndex::new(1, 1));
        }
    }

    #[test]
    fn aware_walker_never_enters_robot_cell() {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(4, 4),
            robot_next: GridIndex::new(5, 4),
            occupied: &[],
            rules: &rules,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let mut p = walker((4, 5), Awareness::Aware, 0.0);
            pedestrian_step(&mut p, &ctx, &mut rng);
            assert_ne!(p.pos, ctx.robot);
            assert_ne!(p.pos, ctx.robot_next);
        }
    }

    #[test]
    fn unaware_walker_can_step_onto_robot() {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(4, 4),
            robot_next: GridIndex::new(5, 4),
            occupied: &[],
            rules: &rules,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits = (0..8000)
            .filter(|_| {
                let mut p = walker((4, 5), Awareness::Unaware, 0.0);
                pedestrian_step(&mut p, &ctx, &mut rng);
                p.pos == ctx.robot
            })
            .count();
        // one of eight neighbors: 1000 expected, sd about 30
        assert!((850..1150).contains(&hits), "{hits}");
    }

    #[test]
    fn scripted_exit_removes_pedestrian() {
        let grid = OccupancyGrid::new(5, 5, 0.75).unwrap();
        let spec = PedestrianSpec {
            kind: PedKind::ScriptedPath {
                path: vec![(2, 2).into(), (3, 2).into(), (4, 2).into()],
                end: PathEnd::Exit,
            },
            g_true: GTrueSpec::Fixed(Awareness::Unaware),
            gaze_script: None,
            start: (2, 2).into(),
            speed_cells_per_tick: 1.0,
        };
        let mut p = SimPed::new(3, &spec, Awareness::Unaware);
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(0, 0),
            robot_next: GridIndex::new(1, 0),
            occupied: &[],
            rules: &rules,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            pedestrian_step(&mut p, &ctx, &mut rng);
        }
        assert!(p.exited);
        let frame = sense(&[p], GridIndex::new(0, 2), (1.0, 0.0), &grid, &SensorSpec::default(), 0, 0.0, &mut rng);
        assert!(frame.vision.is_empty() && frame.laser.is_empty());
    }

    #[test]
    fn fractional_speed_moves_on_overflow() {
        let grid = OccupancyGrid::new(6, 3, 0.75).unwrap();
        let spec = PedestrianSpec {
            kind: PedKind::ScriptedPath {
                path: (0..6).map(|i| GridIndex::new(i, 1)).collect(),
                end: PathEnd::Stop,
            },
            g_true: GTrueSpec::Fixed(Awareness::Unaware),
            gaze_script: None,
            start: (0, 1).into(),
            speed_cells_per_tick: 0.5,
        };
        let mut p = SimPed::new(0, &spec, Awareness::Unaware);
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(0, 0),
            robot_next: GridIndex::new(0, 0),
            occupied: &[],
            rules: &rules,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<i32> = (0..6)
            .map(|_| {
                pedestrian_step(&mut p, &ctx, &mut rng);
                p.pos.i
            })
            .collect();
        assert_eq!(xs, vec![0, 1, 1, 2, 2, 3]);
    }

    #[test]
    fn target_walks_shortest_route() {
        let grid: OccupancyGrid = "5 3 0.75\n.....\n.###.\n.....\n".parse().unwrap();
        let mut p = walker((0, 0), Awareness::Unaware, 0.0);
        p.target = Some(GridIndex::new(4, 0));
        let rules = TransitionParams::default();
        let ctx = MoveContext {
            grid: &grid,
            robot: GridIndex::new(0, 2),
            robot_next: GridIndex::new(1, 2),
            occupied: &[],
            rules: &rules,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            pedestrian_step(&mut p, &ctx, &mut rng);
        }
        assert_eq!(p.pos, GridIndex::new(4, 0));
    }

    #[test]
    fn behind_robot_is_not_sensed() {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let p = walker((2, 5), Awareness::Aware, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = sense(&[p.clone()], GridIndex::new(4, 5), (1.0, 0.0), &grid, &SensorSpec::default(), 0, 0.0, &mut rng);
        assert!(f.vision.is_empty());
        let f = sense(&[p], GridIndex::new(0, 5), (1.0, 0.0), &grid, &SensorSpec::default(), 0, 0.0, &mut rng);
        assert_eq!(f.vision.len(), 1);
    }

    #[test]
    fn noiseless_detections_are_exact() {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let p = walker((3, 4), Awareness::Aware, 0.5);
        let s = SensorSpec {
            vision_sigma_m: 0.0,
            laser_sigma_m: 0.0,
            gaze_false_neg: 0.0,
            ..SensorSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = sense(&[p], GridIndex::new(1, 4), (1.0, 0.0), &grid, &s, 0, 0.0, &mut rng);
        assert_eq!(f.vision[0].pos, grid.grid_to_world(GridIndex::new(3, 4)));
        assert_eq!(f.laser[0].pos, grid.grid_to_world(GridIndex::new(3, 4)));
        assert_eq!(f.gaze, vec![true]);
    }

    #[test]
    fn clutter_is_poisson() {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let s = SensorSpec {
            clutter_rate: 2.0,
            ..SensorSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let total: usize = (0..n)
            .map(|_| sense(&[], GridIndex::new(5, 5), (1.0, 0.0), &grid, &s, 0, 0.0, &mut rng).laser.len())
            .sum();
        let mean = total as f64 / n as f64;
        // Poisson variance equals the rate
        let sd = (2.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * sd, "{mean}");
    }

    #[test]
    fn gaze_script_latest_entry_wins() {
        let mut p = walker((0, 0), Awareness::Aware, 0.5);
        p.gaze_script = Some(vec![(0, false), (3, true), (6, false)]);
        let g: Vec<bool> = (0..8).map(|t| p.gaze_now(t)).collect();
        assert_eq!(g, vec![false, false, false, true, true, true, false, false]);
        let u = walker((0, 0), Awareness::Unaware, 0.5);
        assert!(!u.gaze_now(0));
    }
}
