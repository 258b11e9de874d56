use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrloop::armsim::fatigue::{fatigue_step, FatigueParams, FatigueState};
use vrloop::armsim::ACTUATORS;
use vrloop::bridge::{Application, EpisodeConfig, Hello, Pose, StateUpdateMsg};
use vrloop::tools::stats::kolmogorov_tail;
use vrloop::whacapp::*;

fn game(difficulty: Difficulty, seed: u64) -> Game {
    let cfg = GameConfig {
        difficulty,
        seed,
        ..GameConfig::default()
    };
    Game::new(cfg, CurriculumState::new(Curriculum::Uniform))
}

/// One-sample KS statistic and asymptotic p-value against U(0, hi).
fn ks_uniform(mut xs: Vec<f64>, hi: f64) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = x / hi;
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    (d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d))
}

#[test]
fn spawn_intervals_are_uniform_and_caps_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for difficulty in Difficulty::ALL {
        let mut g = game(difficulty, 1);
        let cap = difficulty.max_targets();
        let mut intervals = Vec::new();
        let mut peak = 0;
        let dt = 0.05;
        for _ in 0..(100_000.0 / dt) as usize {
            let r = g.spawn_update(dt);
            intervals.extend(r.interval);
            // Hit a random active target now and then to keep spawns flowing.
            if rng.random_bool(0.1) && !g.active().is_empty() {
                let p = g.active()[rng.random_range(0..g.active().len())].position;
                let fast = g.frame.hit_axis() * 2.0;
                g.check_hit(&p, &fast);
            }
            assert!(g.active().len() <= cap, "{difficulty:?}: {} active", g.active().len());
            peak = peak.max(g.active().len());
        }
        assert_eq!(peak, cap, "{difficulty:?} never reached its cap");
        assert!(intervals.iter().all(|x| (0.0..0.5).contains(x)));
        let (d, p) = ks_uniform(intervals.clone(), 0.5);
        assert!(p > 0.01, "{difficulty:?}: KS D={d} p={p} over {} intervals", intervals.len());
    }
}

#[test]
fn ks_helper_rejects_non_uniform_samples() {
    let xs: Vec<f64> = (0..10_000).map(|i| 0.5 * ((i as f64 + 0.5) / 10_000.0).powi(2)).collect();
    assert!(ks_uniform(xs, 0.5).1 < 1e-6);
}

/// Independent statement of the sampling rule.
fn expected_distribution(spawns: &[u64; 9], misses: &[u64; 9]) -> [f64; 9] {
    let rates: Vec<f64> = (0..9).map(|c| misses[c] as f64 / spawns[c].max(1) as f64).collect();
    let total: f64 = rates.iter().sum();
    std::array::from_fn(|c| if total == 0.0 { 1.0 / 9.0 } else { 0.5 / 9.0 + 0.5 * rates[c] / total })
}

#[test]
fn curriculum_frequencies_within_three_sigma() {
    let spawns = [6, 7, 5, 6, 8, 6, 7, 6, 5];
    let misses = [0, 3, 5, 1, 0, 2, 7, 0, 1];
    let state = CurriculumState::with_counts(Curriculum::Adaptive, spawns, misses);
    let p = expected_distribution(&spawns, &misses);
    let got = state.distribution();
    for c in 0..9 {
        assert!((got[c] - p[c]).abs() < 1e-15);
        assert!(got[c] >= 0.5 / 9.0 - 1e-15);
    }
    let n = 1_000_000;
    let mut counts = [0u64; 9];
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..n {
        counts[state.sample(&mut rng, &[true; 9]).unwrap()] += 1;
    }
    for c in 0..9 {
        let mean = n as f64 * p[c];
        let sigma = (n as f64 * p[c] * (1.0 - p[c])).sqrt();
        assert!((counts[c] as f64 - mean).abs() <= 3.0 * sigma, "cell {c}: {} vs {mean}±{sigma}", counts[c]);
    }
}

proptest! {
    #[test]
    fn curriculum_distribution_is_normalized(
        spawns in prop::array::uniform9(0u64..50),
        extra in prop::array::uniform9(0u64..50),
    ) {
        let misses: [u64; 9] = std::array::from_fn(|c| extra[c].min(spawns[c]));
        let d = CurriculumState::with_counts(Curriculum::Adaptive, spawns, misses).distribution();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.iter().all(|p| *p >= 0.5 / 9.0 - 1e-15));
    }
}

/// Three-compartment model with rest recovery, written out from its
/// definition and integrated with classical RK4.
fn oracle_rhs(p: &FatigueParams, tl: f64, [r, a, f]: [f64; 3]) -> [f64; 3] {
    let c = if a < tl && r > tl - a {
        p.activation_drive * (tl - a)
    } else if a < tl {
        p.activation_drive * r
    } else {
        p.deactivation_drive * (tl - a)
    };
    let rr = if a > tl || tl == 0.0 { p.rest_multiplier * p.recovery_rate } else { p.recovery_rate };
    [-c + rr * f, c - p.fatigue_rate * a, p.fatigue_rate * a - rr * f]
}

fn oracle_step(p: &FatigueParams, tl: f64, y: [f64; 3], h: f64) -> [f64; 3] {
    let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    let k1 = oracle_rhs(p, tl, y);
    let k2 = oracle_rhs(p, tl, add(y, k1, h / 2.0));
    let k3 = oracle_rhs(p, tl, add(y, k2, h / 2.0));
    let k4 = oracle_rhs(p, tl, add(y, k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[test]
fn sustained_load_matches_fine_rk4_oracle() {
    let p = FatigueParams::default();
    let h = 0.005;
    let loads: [f64; ACTUATORS] = [30.0, 0.0, 60.0, 0.0, 90.0, 10.0];
    let mut s = FatigueState::rested(p);
    let mut oracle = [[100.0, 0.0, 0.0]; ACTUATORS];
    let mut worst = 0.0f64;
    // Two minutes of sustained load, then one of rest.
    for k in 0..36_000 {
        let tl = if k < 24_000 { loads } else { [0.0; ACTUATORS] };
        s = fatigue_step(&s, &tl, h);
        for i in 0..ACTUATORS {
            for _ in 0..100 {
                oracle[i] = oracle_step(&p, tl[i], oracle[i], h / 100.0);
            }
            let got = [s.m_r[i], s.m_a[i], s.m_f[i]];
            for c in 0..3 {
                worst = worst.max((got[c] - oracle[i][c]).abs());
            }
        }
    }
    assert!(worst < 1e-4, "max deviation {worst}");
    assert!(s.m_f[4] > 1.0);
}

#[test]
fn compartments_conserved_over_random_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = FatigueState::rested(FatigueParams::default());
    for _ in 0..100_000 {
        let tl: [f64; ACTUATORS] = std::array::from_fn(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..100.0) });
        s = fatigue_step(&s, &tl, rng.random_range(0.001..0.05));
        for i in 0..ACTUATORS {
            assert!((s.total(i) - 100.0).abs() < 1e-9);
            assert!(s.m_r[i] >= 0.0 && s.m_a[i] >= 0.0 && s.m_f[i] >= 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Hit,
    Slow,
    Miss,
}

/// Drive the hammer head along the placement's hit axis through the first
/// target at `speed`, retreating after a hit, and log per-step events.
fn scripted_approach(placement: Placement, constrained: bool, speed: f64) -> Vec<(usize, Ev)> {
    let cfg = GameConfig {
        placement,
        constrained,
        difficulty: Difficulty::Easy,
        ..GameConfig::default()
    };
    let offset = Vector3::from(cfg.hammer_offset);
    let mut app = WhacApp::new(cfg).unwrap();
    app.hello(&Hello {
        channel_mask: 0,
        ..Hello::default()
    })
    .unwrap();
    app.reset(&EpisodeConfig::new().with("seed", 21)).unwrap();
    let target = app.game().active()[0].position;
    let axis = app.game().frame.hit_axis();
    let start = target - axis * 0.1;
    let parked = target - axis * 0.4;
    let mut events = Vec::new();
    let (mut hits, mut slow, mut misses) = (0.0, 0.0, 0.0);
    let mut retreat = false;
    for k in 0..16 {
        let tip = if retreat { parked } else { start + axis * (speed * 0.05 * k as f64) };
        let update = StateUpdateMsg {
            t_current: k as f64 * 0.05,
            t_next: (k + 1) as f64 * 0.05,
            hmd: Pose::identity(),
            controllers: vec![Pose::from_position(tip - offset)],
            extras: vec![],
        };
        let obs = app.step(&update).unwrap();
        let (h, s, m) = (obs.log("hits").unwrap(), obs.log("slow_contacts").unwrap(), obs.log("misses").unwrap());
        for (now, before, ev) in [(h, hits, Ev::Hit), (s, slow, Ev::Slow), (m, misses, Ev::Miss)] {
            for _ in 0..(now - before) as usize {
                events.push((k, ev));
            }
        }
        retreat |= h > hits;
        (hits, slow, misses) = (h, s, m);
    }
    events
}

/// First step whose head position lies within contact range of the target.
fn contact_step(speed: f64) -> usize {
    let reach = GameConfig::default().target_radius + GameConfig::default().hammer_radius;
    (0..).find(|&k| (0.1 - speed * 0.05 * k as f64).abs() <= reach).unwrap()
}

#[test]
fn scripted_trajectories_give_expected_event_sequences() {
    for placement in Placement::ALL {
        for speed in [0.5, 0.79, 0.81, 1.0, 2.0] {
            let k = contact_step(speed);
            let fast = speed >= 0.8;
            assert_eq!(
                scripted_approach(placement, true, speed),
                vec![(k, if fast { Ev::Hit } else { Ev::Slow })],
                "{placement:?} constrained at {speed} m/s"
            );
            assert_eq!(
                scripted_approach(placement, false, speed),
                vec![(k, Ev::Hit)],
                "{placement:?} unconstrained at {speed} m/s"
            );
        }
    }
}

#[test]
fn untouched_target_expires_after_its_lifespan() {
    let mut g = game(Difficulty::Easy, 2);
    let steps: Vec<usize> = (0..60).filter(|_| !g.spawn_update(0.05).expired.is_empty()).collect();
    assert_eq!(steps, vec![19, 39, 59]);
}
