use std::collections::VecDeque;
use std::path::Path;

use apt_lab::environments::{
    load_layout, EnvState, Environment, GridSpec, GridWorld, LayoutTag, ObsMode, PointMass, PointMassSpec, StartMode,
    TaskSpec,
};
use apt_lab::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layout_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("layouts").join(name)
}

/// BFS over the raw characters of a layout file, independent of the parser.
fn reachable_from_text(text: &str) -> Vec<usize> {
    let rows: Vec<Vec<char>> = text.lines().filter(|l| !l.is_empty()).map(|l| l.chars().collect()).collect();
    let (h, w) = (rows.len(), rows[0].len());
    let start = (0..h * w).find(|&c| rows[c / w][c % w] == 'S').unwrap();
    let mut seen = vec![false; h * w];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let (x, y) = ((c % w) as i64, (c / w) as i64);
        for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let n = ny as usize * w + nx as usize;
            if rows[ny as usize][nx as usize] != '#' && !seen[n] {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    (0..h * w).filter(|&c| seen[c]).collect()
}

#[test]
fn enumerated_states_match_bfs_over_the_layout_file() {
    for name in ["four_rooms.txt", "open_10x10.txt"] {
        let path = layout_path(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let layout = load_layout(&path, LayoutTag::Custom, 100).unwrap();
        let world = GridWorld::new(layout.spec, ObsMode::OneHot, None).unwrap();
        assert_eq!(world.enumerate_states(), reachable_from_text(&text), "{name}");
    }
}

#[test]
fn four_rooms_file_equals_built_in_layout() {
    let layout = load_layout(&layout_path("four_rooms.txt"), LayoutTag::FourRooms, 100).unwrap();
    assert_eq!(layout.spec, GridSpec::four_rooms(11, 100).unwrap());
    assert_eq!(layout.goals, vec![120]);
    assert_eq!(layout.spec.doorways().len(), 4);
}

#[test]
fn wall_bump_and_goal_step() {
    let spec = GridSpec::open_room(3, 3, 10);
    let env = Environment::Grid(GridWorld::new(spec, ObsMode::OneHot, Some(TaskSpec::reach(1))).unwrap());
    let (s, _) = env.reset(&mut ChaCha8Rng::seed_from_u64(0));
    let up = env.step(&s, 0).unwrap();
    assert_eq!(env.state_id(&up.state), 0);
    assert_eq!(up.reward, Some(0.0));
    let right = env.step(&s, 3).unwrap();
    assert_eq!(right.reward, Some(1.0));
    assert!(right.terminated && right.done());
}

#[test]
fn observation_encodings() {
    let world = GridWorld::new(GridSpec::open_room(3, 3, 10), ObsMode::OneHot, None).unwrap();
    let mut e4 = vec![0.0; 9];
    e4[4] = 1.0;
    assert_eq!(world.observe_cell(4), e4);
    let world = GridWorld::new(GridSpec::open_room(10, 10, 10), ObsMode::Coords, None).unwrap();
    assert_eq!(world.observe_cell(99), vec![1.0, 1.0]);
    assert_eq!(world.observe_cell(0), vec![0.0, 0.0]);
    let spec = GridSpec::four_rooms(11, 10).unwrap();
    let occ = GridWorld::new(spec.clone(), ObsMode::Occupancy, None).unwrap();
    assert_eq!(occ.obs_dim(), 121);
    let one_hot = GridWorld::new(spec, ObsMode::OneHot, None).unwrap();
    assert_eq!(one_hot.obs_dim(), 104);
}

#[test]
fn unreachable_goal_is_rejected() {
    let spec = GridSpec::four_rooms(11, 10).unwrap();
    let wall = spec.cell(5, 0);
    assert!(GridWorld::new(spec, ObsMode::Coords, Some(TaskSpec::reach(wall))).is_err());
}

#[test]
fn stepping_after_done_errors() {
    let env = Environment::Grid(GridWorld::new(GridSpec::open_room(2, 1, 1), ObsMode::Coords, None).unwrap());
    let (s, _) = env.reset(&mut ChaCha8Rng::seed_from_u64(0));
    let out = env.step(&s, 3).unwrap();
    assert!(out.truncated && !out.terminated);
    assert!(matches!(env.step(&out.state, 3), Err(Error::EpisodeFinished)));
}

#[test]
fn uniform_start_covers_free_cells() {
    let mut spec = GridSpec::four_rooms(11, 10).unwrap();
    spec.start = StartMode::UniformFree;
    let world = GridWorld::new(spec.clone(), ObsMode::Coords, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = vec![false; 121];
    for _ in 0..5000 {
        let (EnvState::Grid { cell, .. }, _) = world.reset(&mut rng) else { unreachable!() };
        assert!(spec.is_free(cell));
        seen[cell] = true;
    }
    assert_eq!(seen.iter().filter(|s| **s).count(), 104);
}

proptest! {
    #[test]
    fn random_walks_respect_invariants(seed in any::<u64>(), actions in prop::collection::vec(0usize..4, 1..200)) {
        let spec = GridSpec::four_rooms(11, 150).unwrap();
        let world = GridWorld::new(spec.clone(), ObsMode::OneHot, None).unwrap();
        let (mut s, _) = world.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        for a in actions {
            if s.is_done() {
                break;
            }
            let out = world.step(&s, a).unwrap();
            let EnvState::Grid { cell, steps, .. } = out.state else { unreachable!() };
            prop_assert!(spec.is_free(cell));
            prop_assert!(steps <= spec.episode_length);
            prop_assert_eq!(out.obs.iter().sum::<f64>(), 1.0);
            s = out.state;
        }
    }

    #[test]
    fn point_mass_stays_in_the_box(seed in any::<u64>(), actions in prop::collection::vec(0usize..5, 1..100)) {
        let pm = PointMass::new(PointMassSpec::default(), None).unwrap();
        let (mut s, _) = pm.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        for a in actions {
            let out = pm.step(&s, a).unwrap();
            prop_assert!(out.obs.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(pm.bin([out.obs[0], out.obs[1]]) < pm.num_states());
            s = out.state;
        }
    }
}

#[test]
fn point_mass_has_no_enumeration() {
    let env = Environment::PointMass(PointMass::new(PointMassSpec::default(), None).unwrap());
    assert!(matches!(env.enumerate_states(), Err(Error::Unsupported(_))));
}
