//! Acceptance run: every criterion prints one PASS/FAIL line, then the test
//! fails if any of them did.
//!
//! Each oracle here is written from the definitions, not from the library code
//! it checks.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use driveforge::annotator::{annotate_log, AnnotatorConfig, QAGraph, QANode, Stage, Templates};
use driveforge::expert::{PdmLite, Proposal};
use driveforge::fixtures;
use driveforge::labels::{
    behavior_label, cumulative, detokenize, fit_token_bins, interval_deltas, tokenize, BehaviorLabel, BinMode, BinThresholds,
    SpeedBin, SteerBin, TokenBins, TokenError, Trajectory, EOT, NUM_BINS, SOT,
};
use driveforge::metrics::{
    ade, behavior_accuracy, collision_rate, fde, gpt_score, parse_score, score_batch, user_prompt, JudgeError, JudgeItem,
    MockJudge, ReplayCache, ReplayJudge, RetryPolicy, SceneFutures, JUDGE_SYSTEM_PROMPT,
};
use driveforge::pipeline::{run_pipeline, PipelineStage, RunConfig, ScenarioSource};
use driveforge::runtime::{check_runnable, run_graph, teacher_forcing_pairs, ContextPolicy, OracleAnswerer, RuntimeError};
use driveforge::scene::obb_intersects;
use driveforge::sim::{run_scenario, RolloutLog};
use driveforge::{OrientedBox, Pose2D, Vec2D};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn simulate(sc: &driveforge::sim::Scenario) -> Result<RolloutLog, String> {
    run_scenario(sc, &mut PdmLite::default()).map_err(|e| e.to_string())
}

fn ego_collisions(log: &RolloutLog) -> usize {
    log.records
        .iter()
        .filter(|r| r.world.actors.iter().any(|a| obb_intersects(&r.world.ego.bbox(), &a.bbox())))
        .count()
}

// IDM constants as tabulated for the expert.
const IDM_A: f64 = 24.0;
const IDM_DELTA: f64 = 4.0;
const VEHICLE_S0: f64 = 4.0;
const VEHICLE_T: f64 = 0.25;
const LIGHT_S0: f64 = 6.0;
const TARGET_FRACTION: f64 = 0.72;

fn c1_free_road() -> Check {
    let log = simulate(&fixtures::straight_road(30.0))?;
    let target = TARGET_FRACTION * fixtures::SPEED_LIMIT;
    let v = log.records.last().unwrap().world.ego.speed;
    ensure!((v - target).abs() <= 0.1, "final speed {v:.4}, want {target} ± 0.1");
    Ok(())
}

fn c2_red_light() -> Check {
    let log = simulate(&fixtures::red_light_hold())?;
    let last = log.records.last().unwrap();
    let ego = &last.world.ego;
    ensure!(ego.speed < 0.1, "final speed {:.4}", ego.speed);
    let light = last.world.controls.iter().find(|c| c.id == "tl_1").ok_or("no light")?;
    let lane = log.header.lane_graph.lane(&light.lane_id).ok_or("light lane missing")?;
    let s = lane.project(ego.pose.position()).s;
    let gap = light.stop_line_s - s - ego.size.length / 2.0;
    ensure!(
        (0.5 * LIGHT_S0..=3.0 * LIGHT_S0).contains(&gap),
        "bumper gap {gap:.3} outside [{}, {}]",
        0.5 * LIGHT_S0,
        3.0 * LIGHT_S0
    );
    let hits = ego_collisions(&log);
    ensure!(hits == 0, "{hits} ticks with box intersections");
    Ok(())
}

fn c3_pedestrians() -> Check {
    let mut flipped = 0;
    for seed in 0..100 {
        let log = simulate(&fixtures::pedestrian_crossing(seed))?;
        let hits = ego_collisions(&log);
        ensure!(hits == 0, "seed {seed}: {hits} ticks in collision");
        if log.records.iter().any(|r| r.proposal == Proposal::Zero) {
            flipped += 1;
        }
    }
    ensure!(flipped >= 95, "zero proposal chosen in {flipped}/100 runs");
    Ok(())
}

/// IDM acceleration for a follower at `v` behind a leader at the same speed,
/// so the closing-speed term vanishes.
fn idm_accel(v: f64, v0: f64, gap: f64) -> f64 {
    let s_star = VEHICLE_S0 + v * VEHICLE_T;
    IDM_A * (1.0 - (v / v0).powf(IDM_DELTA) - (s_star / gap).powi(2))
}

/// Gap at which the acceleration vanishes, by bisection.
fn equilibrium_gap(v: f64, v0: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if idm_accel(v, v0, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c4_car_following() -> Check {
    let log = simulate(&fixtures::car_following())?;
    let v0 = TARGET_FRACTION * fixtures::SPEED_LIMIT;
    let want = equilibrium_gap(5.0, v0);
    // Average the last 5 s to smooth controller ripple.
    let tail = &log.records[log.records.len() - 100..];
    let mut sum = 0.0;
    for r in tail {
        let ego = &r.world.ego;
        let lead = r.world.actors.iter().find(|a| a.id.as_str() == "lead").ok_or("lead missing")?;
        sum += lead.pose.x - ego.pose.x - (lead.size.length + ego.size.length) / 2.0;
    }
    let gap = sum / tail.len() as f64;
    ensure!((gap - want).abs() <= 0.2 * want, "steady gap {gap:.3}, oracle {want:.3}");
    let v = log.records.last().unwrap().world.ego.speed;
    ensure!((v - 5.0).abs() < 0.1, "ego speed {v:.3} does not match the leader");
    Ok(())
}

fn traj(points: Vec<(f64, f64)>) -> Trajectory<f64> {
    Trajectory::new(points.into_iter().map(|(x, y)| Vec2D::new(x, y)).collect(), 0.5)
}

fn oracle_speed(th: &BinThresholds, v: f64) -> SpeedBin {
    // Count edges passed; the middle bin keeps both of its edges.
    let e = th.speed_edges;
    let passed = (v >= e[0]) as usize + (v >= e[1]) as usize + (v > e[2]) as usize + (v > e[3]) as usize;
    [SpeedBin::Slow2, SpeedBin::Slow1, SpeedBin::Moderate, SpeedBin::Fast1, SpeedBin::Fast2][passed]
}

fn oracle_steer(th: &BinThresholds, v: f64) -> SteerBin {
    let e = th.steer_edges;
    let passed = (v >= e[0]) as usize + (v >= e[1]) as usize + (v > e[2]) as usize + (v > e[3]) as usize;
    [SteerBin::Right2, SteerBin::Right1, SteerBin::Straight, SteerBin::Left1, SteerBin::Left2][passed]
}

fn c5_labels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Offsets on a 1/256 grid: every sum and difference is exact in f64.
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let pts = (0..n)
            .map(|_| (rng.gen_range(-8192..8192) as f64 / 256.0, rng.gen_range(-8192..8192) as f64 / 256.0))
            .collect();
        let t = traj(pts);
        let d = interval_deltas(&t);
        ensure!(d.len() == t.len(), "{} deltas for {} points", d.len(), t.len());
        ensure!(d[0] == t.offsets[0], "first delta is not measured from the origin");
        ensure!(cumulative(&d) == t.offsets, "prefix sum does not invert deltas for {:?}", t.offsets);
        ensure!(interval_deltas(&traj_from(cumulative(&d))) == d, "deltas do not invert prefix sum");
    }

    let th = BinThresholds::default();
    let zero = behavior_label(&traj(vec![(0.0, 0.0); 6]), &th);
    ensure!(
        zero == BehaviorLabel { speed: SpeedBin::Slow2, steer: SteerBin::Straight },
        "zero trajectory labelled {zero:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for i in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let pts: Vec<(f64, f64)> = if i % 10 == 0 {
            // Constant steps on or next to an edge.
            let sx = th.speed_edges[rng.gen_range(0..4)];
            let sy = th.steer_edges[rng.gen_range(0..4)];
            (1..=n).map(|k| (sx * k as f64, sy * k as f64)).collect()
        } else {
            let mut p = (0.0, 0.0);
            (0..n)
                .map(|_| {
                    p.0 += rng.gen_range(-1.0..6.0);
                    p.1 += rng.gen_range(-1.6..1.6);
                    p
                })
                .collect()
        };
        let t = traj(pts.clone());
        // Mean step straight from the points.
        let (mut sx, mut sy, mut prev) = (0.0, 0.0, (0.0, 0.0));
        for &(x, y) in &pts {
            sx += x - prev.0;
            sy += y - prev.1;
            prev = (x, y);
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let got = behavior_label(&t, &th);
        let want = BehaviorLabel {
            speed: oracle_speed(&th, mx),
            steer: oracle_steer(&th, my),
        };
        ensure!(got == want, "mean ({mx}, {my}): got {got:?}, oracle {want:?}");

        let m = behavior_label(&t.mirrored(), &th);
        ensure!(
            m.speed == got.speed && m.steer == got.steer.mirrored(),
            "mirror of {got:?} gave {m:?}"
        );
    }
    Ok(())
}

fn traj_from(offsets: Vec<Vec2D>) -> Trajectory<f64> {
    Trajectory::new(offsets, 0.5)
}

/// Bin index and bounds by scanning the full edge list.
fn containing_bin(lo: f64, edges: &[f64], hi: f64, v: f64) -> Option<(usize, f64, f64)> {
    let all: Vec<f64> = std::iter::once(lo).chain(edges.iter().copied()).chain([hi]).collect();
    (0..all.len() - 1).find(|&k| all[k] <= v && v < all[k + 1]).map(|k| (k, all[k], all[k + 1]))
}

fn round_trip(bins: &TokenBins, labels: &[Trajectory<f64>]) -> Check {
    for t in labels {
        let tokens = tokenize(t, bins).map_err(|e| e.to_string())?;
        ensure!(tokens.len() == 2 * t.len() + 2, "{} tokens for {} points", tokens.len(), t.len());
        ensure!(tokens[0] == SOT && tokens[tokens.len() - 1] == EOT, "bad framing {tokens:?}");
        let back = detokenize(&tokens, bins).map_err(|e| e.to_string())?;
        ensure!(back.len() == t.len(), "length changed");
        for (i, (p, q)) in t.offsets.iter().zip(&back.offsets).enumerate() {
            for (axis, v, r, tok, ab) in [('x', p.x, q.x, tokens[1 + 2 * i], &bins.x), ('y', p.y, q.y, tokens[2 + 2 * i], &bins.y)] {
                let (k, a, b) = containing_bin(ab.lo, &ab.edges, ab.hi, v).ok_or(format!("{axis}={v} outside the bins"))?;
                ensure!(tok as usize == k, "{axis}={v}: token {tok}, containing bin {k}");
                ensure!((v - r).abs() <= (b - a) / 2.0 + 1e-12, "{axis}={v}: decoded {r}, bin [{a}, {b})");
            }
        }
    }
    Ok(())
}

fn parse_pos(r: Result<Trajectory<f64>, TokenError>) -> Option<usize> {
    match r {
        Err(TokenError::Parse { position, .. }) => Some(position),
        _ => None,
    }
}

fn c6_tokenizer() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let random = |rng: &mut ChaCha8Rng, n: usize| {
        traj((0..n).map(|_| (rng.gen_range(0.0..30.0), rng.gen_range(-4.0..4.0))).collect())
    };
    let corpus: Vec<_> = (0..200).map(|_| random(&mut rng, 6)).collect();
    let labels: Vec<_> = (0..1000)
        .map(|_| {
            let n = rng.gen_range(1..=10);
            // Stay strictly inside the fitted range.
            traj((0..n).map(|_| (rng.gen_range(1.0..29.0), rng.gen_range(-3.5..3.5))).collect())
        })
        .collect();
    for mode in [BinMode::Uniform, BinMode::Quantile] {
        let bins = fit_token_bins(&corpus, mode).map_err(|e| e.to_string())?;
        ensure!(bins.x.edges.len() == NUM_BINS - 1, "{} interior edges", bins.x.edges.len());
        round_trip(&bins, &labels).map_err(|e| format!("{mode:?}: {e}"))?;
    }

    let bins = fit_token_bins(&corpus, BinMode::Uniform).map_err(|e| e.to_string())?;
    let cases: [(&[u32], usize); 7] = [
        (&[], 0),
        (&[3, 4, 5, EOT], 0),
        (&[SOT, 3, 4], 3),
        (&[SOT, 3, SOT, EOT], 2),
        (&[SOT, 3, 4, 999, 7, EOT], 3),
        (&[SOT, 3, 4, 5, EOT], 4),
        (&[SOT, EOT], 1),
    ];
    for (seq, want) in cases {
        let got = parse_pos(detokenize(seq, &bins));
        ensure!(got == Some(want), "{seq:?}: error position {got:?}, want {want}");
    }
    Ok(())
}

/// Corners of a box from its definition.
fn corners(b: &OrientedBox) -> [Vec2D; 4] {
    let (c, s) = (b.center.yaw.cos(), b.center.yaw.sin());
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(u, v)| Vec2D::new(b.center.x + c * u - s * v, b.center.y + s * u + c * v))
}

fn inside(p: Vec2D, poly: &[Vec2D; 4]) -> bool {
    // Counter-clockwise corners: inside means left of (or on) every edge.
    (0..4).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % 4]);
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    })
}

fn segments_cross(a: Vec2D, b: Vec2D, c: Vec2D, d: Vec2D) -> bool {
    let orient = |p: Vec2D, q: Vec2D, r: Vec2D| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Polygon overlap by containment and edge crossing.
fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let (pa, pb) = (corners(a), corners(b));
    pa.iter().any(|&p| inside(p, &pb))
        || pb.iter().any(|&p| inside(p, &pa))
        || (0..4).any(|i| (0..4).any(|j| segments_cross(pa[i], pa[(i + 1) % 4], pb[j], pb[(j + 1) % 4])))
}

fn c7_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let walk = |rng: &mut ChaCha8Rng| {
        let mut p = (0.0, 0.0);
        traj(
            (0..6)
                .map(|_| {
                    p.0 += rng.gen_range(0.5..4.0);
                    p.1 += rng.gen_range(-0.8..0.8);
                    p
                })
                .collect(),
        )
    };
    // Points at 1, 2 and 3 s for six points 0.5 s apart.
    let horizon = [1usize, 3, 5];
    for _ in 0..1000 {
        let (p, g) = (walk(&mut rng), walk(&mut rng));
        let dist = |i: usize| ((p.offsets[i].x - g.offsets[i].x).powi(2) + (p.offsets[i].y - g.offsets[i].y).powi(2)).sqrt();
        let want_ade = horizon.iter().map(|&i| dist(i)).sum::<f64>() / 3.0;
        let got = ade(&p, &g).map_err(|e| e.to_string())?;
        ensure!((got - want_ade).abs() <= 1e-12, "ade {got} vs {want_ade}");
        let got = fde(&p, &g).map_err(|e| e.to_string())?;
        ensure!((got - dist(5)).abs() <= 1e-12, "fde {got} vs {}", dist(5));
    }

    let ego_size = (4.5, 2.0);
    let mut preds = Vec::new();
    let mut scenes = Vec::new();
    for _ in 0..50 {
        let p = walk(&mut rng);
        let boxes = [0, 1, 2].map(|h| {
            let at = p.offsets[horizon[h]];
            (0..rng.gen_range(0..4))
                .map(|_| {
                    let pose = Pose2D::new(
                        at.x + rng.gen_range(-6.0..6.0),
                        at.y + rng.gen_range(-4.0..4.0),
                        rng.gen_range(-3.1..3.1),
                    );
                    OrientedBox::new(pose, rng.gen_range(0.5..5.0), rng.gen_range(0.5..2.0))
                })
                .collect::<Vec<_>>()
        });
        preds.push(p);
        scenes.push(Some(SceneFutures { boxes }));
    }
    let mut hits = [0usize; 3];
    for (p, s) in preds.iter().zip(&scenes) {
        let s = s.as_ref().unwrap();
        for h in 0..3 {
            let i = horizon[h];
            let prev = if i == 0 { Vec2D::new(0.0, 0.0) } else { p.offsets[i - 1] };
            let at = p.offsets[i];
            let yaw = (at.y - prev.y).atan2(at.x - prev.x);
            let ego = OrientedBox::new(Pose2D::new(at.x, at.y, yaw), ego_size.0, ego_size.1);
            if s.boxes[h].iter().any(|b| boxes_overlap(&ego, b)) {
                hits[h] += 1;
            }
        }
    }
    ensure!(hits.iter().any(|&k| k > 0) && hits.iter().any(|&k| k < 50), "fixture is degenerate: {hits:?}");
    let want = hits.map(|k| k as f64 / 50.0);
    let got = collision_rate(&preds, &scenes, ego_size).map_err(|e| e.to_string())?;
    ensure!(got.per_horizon == want, "per horizon {:?}, oracle {want:?}", got.per_horizon);
    ensure!((got.rate - want.iter().sum::<f64>() / 3.0).abs() < 1e-12, "rate {}", got.rate);

    let l = |speed, steer| BehaviorLabel { speed, steer };
    let gt = vec![l(SpeedBin::Moderate, SteerBin::Straight); 10];
    let mut pred = gt.clone();
    pred[6].steer = SteerBin::Left1;
    pred[7].speed = SpeedBin::Fast1;
    pred[8].speed = SpeedBin::Slow1;
    pred[9] = l(SpeedBin::Fast2, SteerBin::Right2);
    let acc = behavior_accuracy(&pred, &gt).map_err(|e| e.to_string())?;
    ensure!((acc.overall, acc.speed, acc.steer) == (0.6, 0.7, 0.8), "hand-counted case gave {acc:?}");

    let speeds = [SpeedBin::Slow2, SpeedBin::Slow1, SpeedBin::Moderate, SpeedBin::Fast1, SpeedBin::Fast2];
    let steers = [SteerBin::Right2, SteerBin::Right1, SteerBin::Straight, SteerBin::Left1, SteerBin::Left2];
    let pick = |rng: &mut ChaCha8Rng| l(speeds[rng.gen_range(0..5)], steers[rng.gen_range(0..5)]);
    let preds: Vec<_> = (0..1000).map(|_| pick(&mut rng)).collect();
    let gts: Vec<_> = (0..1000).map(|_| pick(&mut rng)).collect();
    let acc = behavior_accuracy(&preds, &gts).map_err(|e| e.to_string())?;
    ensure!(acc.overall <= acc.speed.min(acc.steer), "overall above an axis: {acc:?}");
    for (p, g) in preds.iter().zip(&gts) {
        let one = behavior_accuracy(&[*p], &[*g]).map_err(|e| e.to_string())?;
        ensure!(one.overall <= one.speed.min(one.steer), "pair {p:?}/{g:?}: {one:?}");
    }
    Ok(())
}

fn fixture_graphs() -> Result<Vec<(String, QAGraph)>, String> {
    let mut out = Vec::new();
    for sc in fixtures::standard_set() {
        let log = simulate(&sc)?;
        let qa = annotate_log(&log, &AnnotatorConfig::default(), &Templates::default()).map_err(|e| e.to_string())?;
        ensure!(!qa.frames.is_empty(), "{}: no keyframes", sc.name);
        out.extend(qa.frames.into_iter().map(|f| (sc.name.clone(), f.graph)));
    }
    Ok(out)
}

fn c8_runtime() -> Check {
    let graphs = fixture_graphs()?;
    let oracle = OracleAnswerer::from_graphs(graphs.iter().map(|(_, g)| g));
    for (scenario, g) in &graphs {
        for policy in ContextPolicy::ALL {
            let r = run_graph(g, &oracle, policy).map_err(|e| e.to_string())?;
            ensure!(r.failed.is_empty(), "{scenario}/{}: failed {:?}", g.frame_id, r.failed);
            ensure!(r.answers.len() == g.nodes.len(), "{}: {} of {} answered", g.frame_id, r.answers.len(), g.nodes.len());
            ensure!(
                r.answers.iter().all(|(id, a)| *a == g.nodes[id].answer),
                "{}: oracle answer differs from ground truth",
                g.frame_id
            );
            let pos: BTreeMap<&str, usize> = r.trace.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            ensure!(pos.len() == g.nodes.len() && r.trace.len() == g.nodes.len(), "{}: trace {:?}", g.frame_id, r.trace);
            for (p, c) in &g.edges {
                ensure!(pos[p.as_str()] < pos[c.as_str()], "{}: {c} ran before its parent {p}", g.frame_id);
            }
            let stages: Vec<Stage> = r.trace.iter().map(|id| g.nodes[id].stage).collect();
            ensure!(stages.windows(2).all(|w| w[0] <= w[1]), "{}: stages out of order {stages:?}", g.frame_id);
        }
        let pairs = teacher_forcing_pairs(g);
        ensure!(pairs.len() == g.nodes.len(), "{}: {} pairs for {} nodes", g.frame_id, pairs.len(), g.nodes.len());
    }

    let (_, g) = &graphs[0];
    let p1 = g.nodes_in(Stage::P1).next().ok_or("no P1 node")?.id.clone();
    let mut cyclic = g.clone();
    cyclic.add_edge("b", &p1).map_err(|e| e.to_string())?;
    let rejected = |g: &QAGraph, what: &str| match run_graph(g, &oracle, ContextPolicy::Graph) {
        Err(RuntimeError::InvalidGraph { violations, .. }) if violations.iter().any(|v| v.contains(what)) => Ok(()),
        other => Err(format!("{what} injection not rejected: {other:?}")),
    };
    rejected(&cyclic, "cycle")?;

    // A backwards edge into a fresh leaf: no cycle, only stage order.
    let mut backwards = g.clone();
    backwards
        .add_node(QANode::new("late_p1", Stage::P1, "What is ahead?", "Nothing."))
        .map_err(|e| e.to_string())?;
    backwards.add_edge("m", "late_p1").map_err(|e| e.to_string())?;
    ensure!(check_runnable(&backwards).is_err(), "stage-order edge accepted by check_runnable");
    rejected(&backwards, "earlier stage")?;
    Ok(())
}

fn artifacts_equal(a: &Path, b: &Path) -> Check {
    let config = RunConfig::default();
    let source = ScenarioSource::Fixture("red_light".into());
    let la = run_pipeline(&source, &config, Some(11), 2, a, None).map_err(|e| e.to_string())?;
    let lb = run_pipeline(&source, &config, Some(11), 2, b, None).map_err(|e| e.to_string())?;
    for stage in [PipelineStage::Simulate, PipelineStage::Annotate, PipelineStage::Rungraph, PipelineStage::Evaluate] {
        let x = std::fs::read(la.artifact(stage)).map_err(|e| e.to_string())?;
        let y = std::fs::read(lb.artifact(stage)).map_err(|e| e.to_string())?;
        ensure!(!x.is_empty(), "{}: empty artifact", stage.as_str());
        ensure!(x == y, "{} artifact differs between runs", stage.as_str());
    }
    Ok(())
}

fn c9_determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    artifacts_equal(a.path(), b.path())
}

const NO_WAIT: RetryPolicy = RetryPolicy {
    retries: 2,
    backoff_ms: 0,
};

fn c10_judge() -> Check {
    let (gt, pred) = ("The ego vehicle should stop", "Keep going");
    let want = format!(
        "Rate my answer based on the correct answer out of 100, with higher scores indicating that the answer is closer to the correct answer, and you should be accurate to single digits like 62, 78, 41, etc. This is the correct answer: {gt}. This is my answer: {pred}."
    );
    ensure!(user_prompt(gt, pred) == want, "prompt text differs:\n{}", user_prompt(gt, pred));
    let mock = MockJudge::scripted(["62"]);
    let s = gpt_score("q", gt, pred, &mock, None, NO_WAIT).map_err(|e| e.to_string())?;
    ensure!(s == 62, "score {s}");
    ensure!(
        mock.calls() == vec![(JUDGE_SYSTEM_PROMPT.to_string(), want.clone())],
        "sent {:?}",
        mock.calls()
    );

    for (reply, want) in [("78", Some(78)), ("I would say 41/100.", Some(41)), ("-5, no: 7", Some(7)), ("250 then 99", Some(99)), ("n/a", None)] {
        ensure!(parse_score(reply) == want, "parse {reply:?} gave {:?}", parse_score(reply));
    }

    let mock = MockJudge::with_results([Err(JudgeError::Transport("reset".into())), Ok("great".into()), Ok("88".into())]);
    let s = gpt_score("q", gt, pred, &mock, None, NO_WAIT).map_err(|e| e.to_string())?;
    ensure!(s == 88 && mock.calls().len() == 3, "retry gave {s} after {} calls", mock.calls().len());
    let mock = MockJudge::scripted(["no", "no", "no", "55"]);
    match gpt_score("q", gt, pred, &mock, None, NO_WAIT) {
        Err(JudgeError::Exhausted { attempts: 3, .. }) => {}
        other => return Err(format!("expected exhaustion after 3 attempts, got {other:?}")),
    }

    let items: Vec<JudgeItem> = (0..12)
        .map(|i| JudgeItem {
            id: format!("f/{i}"),
            question: format!("q{i}"),
            gt: format!("slow down for object {i}"),
            pred: if i % 3 == 0 { "slow down".into() } else { format!("accelerate past {i}") },
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("cache.json");
    let cache = ReplayCache::open(&path).map_err(|e| e.to_string())?;
    let first = score_batch(&items, &MockJudge::new(), Some(&cache), NO_WAIT, 4);
    cache.save().map_err(|e| e.to_string())?;
    let saved = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure!(cache.len() == items.len(), "{} cache entries", cache.len());

    let replay = ReplayCache::open(&path).map_err(|e| e.to_string())?;
    let second = score_batch(&items, &ReplayJudge, Some(&replay), NO_WAIT, 3);
    ensure!(first == second, "replay differs: {first:?} vs {second:?}");
    replay.save().map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&path).map_err(|e| e.to_string())? == saved, "cache file changed on replay");

    let again = ReplayCache::in_memory();
    score_batch(&items, &MockJudge::new(), Some(&again), NO_WAIT, 1);
    ensure!(again.to_json().as_bytes() == saved.strip_suffix(b"\n").unwrap_or(&saved), "cache content depends on scheduling");
    let missing = gpt_score("q", "never", "seen", &ReplayJudge, Some(&replay), NO_WAIT);
    ensure!(missing == Err(JudgeError::NotCached), "uncached replay gave {missing:?}");
    Ok(())
}

fn c11_throughput() -> Check {
    let sc = fixtures::busy_road(7);
    ensure!(sc.initial.actors.len() == 20, "{} actors", sc.initial.actors.len());
    ensure!(sc.duration >= 60.0, "duration {}", sc.duration);
    let log = simulate(&sc)?;
    ensure!(log.records.len() >= 1200, "{} ticks", log.records.len());
    ensure!((log.header.tick_rate - 20.0).abs() < 1e-9, "tick rate {}", log.header.tick_rate);
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Check, Option<u64>); 11] = [
        (1, "free-road convergence", c1_free_road, Some(2)),
        (2, "red-light stop", c2_red_light, Some(2)),
        (3, "pedestrian-crossing safety", c3_pedestrians, Some(60)),
        (4, "car-following equilibrium", c4_car_following, Some(5)),
        (5, "deltas and behavior bins", c5_labels, Some(5)),
        (6, "trajectory tokenizer", c6_tokenizer, Some(5)),
        (7, "metric oracles", c7_metrics, Some(10)),
        (8, "graph runtime", c8_runtime, Some(10)),
        (9, "pipeline determinism", c9_determinism, Some(30)),
        (10, "judge client", c10_judge, Some(5)),
        (11, "throughput", c11_throughput, Some(5)),
    ];
    let mut failed = Vec::new();
    for (n, name, check, limit) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(()), Some(s)) = (&result, limit) {
            if elapsed > Duration::from_secs(s) {
                result = Err(format!("took {elapsed:.2?}, limit {s} s"));
            }
        }
        match &result {
            Ok(()) => println!("PASS [{n:>2}] {name} ({elapsed:.2?})"),
            Err(e) => {
                println!("FAIL [{n:>2}] {name} ({elapsed:.2?}): {e}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
