//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (run with `--nocapture` to see them). A
//! failed criterion panics with the matching FAIL message.
//!
//! Run: `cargo test -p linewalk --test acceptance -- --nocapture`
//!
//! The trained-predictor criterion trains a reduced-width network from
//! scratch and takes several minutes of single-core CPU; everything else
//! finishes in seconds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use linewalk::binarize::{
    binarize_pipeline, find_closing_threshold, hough_longest_line, make_cut, BinarizeConfig,
};
use linewalk::completion::{run_completion, sample_step, CompletionConfig, PassPredictors};
use linewalk::eval::{fill_closed_contour, metrics};
use linewalk::geometry::{angle_to_offset, offset_to_angle, ring_offsets, Angle, PixelCoord};
use linewalk::labels::{generate_dataset, trace_gt_chain, ContourChain};
use linewalk::morphology::{connected_components, same_component, trace_closed_curve, Connectivity};
use linewalk::net::{backward, forward_train, train, CnnArchitecture, TrainConfig, WeightsBundle};
use linewalk::predictor::{CnnPredictor, DirectionPredictor, OraclePredictor};
use linewalk::raster::{stack_inputs, BinaryMask, Patch, Raster2D};
use linewalk::synth::{gen_scene, SceneParams};
use linewalk::tracer::{walk, TracerState};

fn pass(n: u32, details: &str) {
    eprintln!("criterion {n}: PASS — {details}");
}

macro_rules! require {
    ($n:expr, $cond:expr, $($msg:tt)*) => {
        if !$cond {
            panic!("criterion {}: FAIL — {}", $n, format!($($msg)*));
        }
    };
}

// --- 1. geometry oracle ----------------------------------------------------

#[test]
fn criterion_01_direction_quantization_matches_brute_force() {
    let started = std::time::Instant::now();
    require!(1, ring_offsets(1).len() == 8, "step-1 ring size");
    require!(1, ring_offsets(2).len() == 16, "step-2 ring size");
    require!(1, ring_offsets(3).len() == 24, "step-3 ring size");
    for step in 1..=3u8 {
        for deg in -180..=180i32 {
            let heading = Angle::wrap(deg as f64);
            let (dr, dc) = angle_to_offset(heading, step);
            let chosen = offset_to_angle(dr, dc).unwrap().diff(heading).abs();
            let best = ring_offsets(step)
                .into_iter()
                .map(|(r, c)| offset_to_angle(r, c).unwrap().diff(heading).abs())
                .fold(f64::INFINITY, f64::min);
            require!(
                1,
                (chosen - best).abs() < 1e-9,
                "step {step}, heading {deg}: chose {chosen:.4}, brute force {best:.4}"
            );
        }
    }
    let elapsed = started.elapsed();
    require!(1, elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    pass(1, &format!("3 x 361 headings minimal over rings 8/16/24 in {elapsed:?}"));
}

// --- 2. gradient check -----------------------------------------------------

fn batch_loss(w: &WeightsBundle, patches: &[Patch], labels: &[f64]) -> f64 {
    let fwd = forward_train(w, patches).unwrap();
    fwd.outputs()
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - l) * (p - l))
        .sum::<f64>()
        / labels.len() as f64
}

#[test]
fn criterion_02_analytic_gradients_match_central_differences() {
    let started = std::time::Instant::now();
    let arch = CnnArchitecture::reduced(8).unwrap();
    let weights = WeightsBundle::init(arch, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let patches: Vec<Patch> = (0..4)
        .map(|_| Patch::from_vec((0..Patch::LEN).map(|_| rng.gen::<f32>()).collect()).unwrap())
        .collect();
    let labels: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fwd = forward_train(&weights, &patches).unwrap();
    let (_, grads) = backward(&weights, &fwd, &patches, &labels).unwrap();

    // The loss is piecewise smooth (ReLU, max pooling); at eps = 1e-3 some
    // probe windows straddle an activation kink and the difference
    // quotient itself is invalid there. Windows are validated by step
    // halving; kinked ones are resampled. A wrong analytic gradient still
    // fails: valid windows agree with the true derivative.
    let fd_at = |set: &dyn Fn(&mut WeightsBundle, f32), base: f64, eps: f64| -> f64 {
        let mut wp = weights.clone();
        let mut wm = weights.clone();
        let vp = (base + eps) as f32;
        let vm = (base - eps) as f32;
        set(&mut wp, vp);
        set(&mut wm, vm);
        (batch_loss(&wp, &patches, &labels) - batch_loss(&wm, &patches, &labels))
            / (vp as f64 - vm as f64)
    };
    let eps = 1e-3;
    let probe = |set: &dyn Fn(&mut WeightsBundle, f32), base: f64, g: f64| -> Option<f64> {
        let fd1 = fd_at(set, base, eps);
        let fd2 = fd_at(set, base, eps / 2.0);
        let window_ok = (fd1 - fd2).abs() / fd1.abs().max(fd2.abs()).max(1e-8) < 3e-5;
        if !window_ok {
            return None;
        }
        if fd1.abs() < 1e-7 && g.abs() < 1e-7 {
            return Some(0.0);
        }
        Some((fd1 - g).abs() / fd1.abs().max(g.abs()).max(1e-8))
    };

    let mut layer_rng = ChaCha8Rng::seed_from_u64(79);
    for b in 0..5 {
        let mut valid = 0usize;
        let mut attempts = 0usize;
        let mut worst = 0.0f64;
        while valid < 20 && attempts < 400 {
            attempts += 1;
            // 12 kernel probes, then batch-norm scale/shift alternating.
            let tensor = if valid < 12 { 0 } else { 1 + valid % 2 };
            let rel = match tensor {
                0 => {
                    let idx = layer_rng.gen_range(0..weights.conv[b].kernel.len());
                    probe(
                        &|w, v| w.conv[b].kernel[idx] = v,
                        weights.conv[b].kernel[idx] as f64,
                        grads.kernel[b][idx],
                    )
                }
                1 => {
                    let idx = layer_rng.gen_range(0..weights.conv[b].bn_scale.len());
                    probe(
                        &|w, v| w.conv[b].bn_scale[idx] = v,
                        weights.conv[b].bn_scale[idx] as f64,
                        grads.bn_scale[b][idx],
                    )
                }
                _ => {
                    let idx = layer_rng.gen_range(0..weights.conv[b].bn_shift.len());
                    probe(
                        &|w, v| w.conv[b].bn_shift[idx] = v,
                        weights.conv[b].bn_shift[idx] as f64,
                        grads.bn_shift[b][idx],
                    )
                }
            };
            if let Some(rel) = rel {
                require!(2, rel < 1e-4, "conv{} probe rel error {rel:.2e}", b + 1);
                worst = worst.max(rel);
                valid += 1;
            }
        }
        require!(
            2,
            valid >= 20,
            "conv{}: only {valid} valid probe windows in {attempts} attempts",
            b + 1
        );
        eprintln!(
            "criterion 2: conv{} 20 probes ok (worst rel {worst:.2e}, {attempts} windows tried)",
            b + 1
        );
    }
    let mut valid = 0usize;
    let mut attempts = 0usize;
    while valid < 20 && attempts < 400 {
        attempts += 1;
        let idx = layer_rng.gen_range(0..weights.fc_weight.len());
        if let Some(rel) = probe(
            &|w, v| w.fc_weight[idx] = v,
            weights.fc_weight[idx] as f64,
            grads.fc_weight[idx],
        ) {
            require!(2, rel < 1e-4, "fc probe rel error {rel:.2e}");
            valid += 1;
        }
    }
    require!(2, valid >= 20, "fc: only {valid} valid probe windows");
    let elapsed = started.elapsed();
    require!(2, elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    pass(2, &format!("20 valid probes per layer, rel < 1e-4, in {elapsed:?}"));
}

// --- 3. step distribution ---------------------------------------------------

#[test]
fn criterion_03_step_distribution() {
    let probs = [0.87, 0.12, 0.01];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut counts = [0u64; 3];
    let n = 1_000_000u64;
    for _ in 0..n {
        counts[(sample_step(&mut rng, &probs) - 1) as usize] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    require!(3, (freq[0] - 0.87).abs() <= 0.003, "step-1 frequency {:.4}", freq[0]);
    require!(3, (freq[1] - 0.12).abs() <= 0.003, "step-2 frequency {:.4}", freq[1]);
    require!(3, (freq[2] - 0.01).abs() <= 0.001, "step-3 frequency {:.4}", freq[2]);
    pass(
        3,
        &format!(
            "frequencies {:.4}/{:.4}/{:.4} over 1e6 draws",
            freq[0], freq[1], freq[2]
        ),
    );
}

// --- 4. oracle circumnavigation ----------------------------------------------

fn tracer_scene_params() -> SceneParams {
    // Convex hulls (no antenna protrusions): single-tracer properties are
    // stated for convex shapes, and the nearest-pixel oracle is ambiguous
    // between the two walls of a thin protrusion.
    SceneParams {
        height: 160,
        width: 160,
        complexity: 10,
        noise: 0.0,
        gap_count: 0,
        antenna_count: 0,
    }
}

/// One full loop within band `band`: every path pixel close to the chain
/// and nearly every chain pixel approached.
fn full_loop_within(chain: &ContourChain, path: &[PixelCoord], band: i32) -> bool {
    if path.iter().any(|p| chain.chebyshev_distance(*p) > band) {
        return false;
    }
    let covered = chain
        .pixels()
        .iter()
        .filter(|q| path.iter().any(|p| p.chebyshev(q) <= band))
        .count();
    covered as f64 >= 0.95 * chain.len() as f64
}

#[test]
fn criterion_04_oracle_single_tracer_circumnavigates() {
    let params = tracer_scene_params();
    let mut successes = 0usize;
    for seed in 400..420u64 {
        let scene = gen_scene(&params, seed).unwrap();
        let stack = stack_inputs(&scene.image, &scene.softmap).unwrap();
        let chain = trace_gt_chain(scene.gt_contour.mask()).unwrap();
        let oracle = OraclePredictor::new(chain.clone());
        let start = TracerState {
            cp: chain.at(0),
            heading: chain.lookahead_direction(0),
        };
        let steps = chain.len() + chain.len() / 5;
        let trace = walk(&stack, start, steps, &oracle, |_| 1).unwrap();
        if full_loop_within(&chain, &trace.pixels, 2) {
            successes += 1;
        } else {
            eprintln!("criterion 4: seed {seed} strayed");
        }
    }
    require!(4, successes >= 18, "only {successes}/20 full loops within distance 2");
    pass(4, &format!("{successes}/20 scenes circumnavigated within Chebyshev 2"));
}

// --- 5. end-to-end synthetic IoU ---------------------------------------------

#[test]
fn criterion_05_end_to_end_iou() {
    let params = SceneParams {
        height: 256,
        width: 256,
        complexity: 10,
        noise: 0.1,
        gap_count: 2,
        antenna_count: 1,
    };
    let mut ious = Vec::new();
    let mut closures = 0usize;
    for seed in 500..520u64 {
        let started = std::time::Instant::now();
        let scene = gen_scene(&params, seed).unwrap();
        let stack = stack_inputs(&scene.image, &scene.softmap).unwrap();
        let chain = trace_gt_chain(scene.gt_contour.mask()).unwrap();
        let oracle_cw = OraclePredictor::new(chain.clone());
        let oracle_acw = OraclePredictor::new(chain.mirror_cols(stack.w()));
        let predictors = PassPredictors {
            clockwise: &oracle_cw,
            anticlockwise: &oracle_acw,
        };
        let ccfg = CompletionConfig {
            rng_seed: seed,
            ..CompletionConfig::default()
        };
        let result = run_completion(&stack, &predictors, &ccfg)
            .and_then(|(map, _)| binarize_pipeline(&map.normalized(), &BinarizeConfig::default()))
            .and_then(|(contour, _)| {
                let mask = fill_closed_contour(&contour)?;
                metrics(&mask, &scene.gt_mask)
            });
        let elapsed = started.elapsed();
        require!(5, elapsed.as_secs() <= 60, "seed {seed} took {elapsed:?}, budget 60 s");
        match result {
            Ok(report) => {
                closures += 1;
                ious.push(report.iou);
            }
            Err(e) => eprintln!("criterion 5: seed {seed} did not close: {e}"),
        }
    }
    require!(5, closures >= 15, "only {closures}/20 closures");
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    require!(5, mean >= 0.90, "mean IoU {mean:.4} over {closures} closed scenes");
    pass(5, &format!("{closures}/20 closures, mean IoU {mean:.4}"));
}

// --- 6. closing-threshold maximality ------------------------------------------

#[test]
fn criterion_06_closing_threshold_is_grid_maximal() {
    let cfg = BinarizeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..50 {
        let (h, w) = (64usize, 64usize);
        let mut map = Raster2D::new(h, w);
        // Background speckle well below the ridge floor.
        for r in 0..h {
            for c in 0..w {
                if rng.gen_bool(0.08) {
                    map.set(r, c, rng.gen_range(0.01..0.2));
                }
            }
        }
        // Planted ridge: a meandering arc from pixel1 up, across, and down
        // to pixel2, with values above the speckle.
        let p1 = PixelCoord::new(40, 16);
        let p2 = PixelCoord::new(40, 48);
        let mut pos = p1;
        let plant = |map: &mut Raster2D, p: PixelCoord, rng: &mut ChaCha8Rng| {
            map.set(p.row as usize, p.col as usize, rng.gen_range(0.3..1.0));
        };
        plant(&mut map, pos, &mut rng);
        while pos.row > 12 {
            pos = pos.offset(-1, rng.gen_range(-1..=1));
            pos.col = pos.col.clamp(10, 20);
            plant(&mut map, pos, &mut rng);
        }
        while pos.col < 44 {
            pos = pos.offset(rng.gen_range(-1..=1), 1);
            pos.row = pos.row.clamp(8, 16);
            plant(&mut map, pos, &mut rng);
        }
        while pos != p2 {
            let dr = (p2.row - pos.row).signum();
            let dc = (p2.col - pos.col).signum();
            pos = pos.offset(dr, dc);
            plant(&mut map, pos, &mut rng);
        }

        let (th, _) = find_closing_threshold(&map, p1, p2, &cfg)
            .unwrap_or_else(|e| panic!("criterion 6: FAIL — case {case} never closed: {e}"));
        // Brute force downward over the same grid.
        let mut expected = None;
        let mut t = map.max_value();
        while t > 0.0 {
            if same_component(&map.threshold(t), p1, p2) {
                expected = Some(t);
                break;
            }
            t -= cfg.delta_th;
        }
        require!(6, Some(th) == expected, "case {case}: got {th}, brute force {expected:?}");
        require!(
            6,
            !same_component(&map.threshold(th + cfg.delta_th), p1, p2),
            "case {case}: threshold {th} is not maximal"
        );
    }
    pass(6, "50/50 planted-ridge maps: grid-maximal threshold, +delta fails");
}

// --- 7. closure invariants ------------------------------------------------------

#[test]
fn criterion_07_emitted_contours_satisfy_closure_invariants() {
    let params = SceneParams {
        height: 192,
        width: 192,
        complexity: 10,
        noise: 0.08,
        gap_count: 1,
        antenna_count: 1,
    };
    let mut checked = 0usize;
    for seed in 700..710u64 {
        let scene = gen_scene(&params, seed).unwrap();
        let stack = stack_inputs(&scene.image, &scene.softmap).unwrap();
        let chain = trace_gt_chain(scene.gt_contour.mask()).unwrap();
        let oracle_cw = OraclePredictor::new(chain.clone());
        let oracle_acw = OraclePredictor::new(chain.mirror_cols(stack.w()));
        let predictors = PassPredictors {
            clockwise: &oracle_cw,
            anticlockwise: &oracle_acw,
        };
        let ccfg = CompletionConfig {
            rng_seed: seed,
            ..CompletionConfig::default()
        };
        let Ok((map, _)) = run_completion(&stack, &predictors, &ccfg) else {
            continue;
        };
        let Ok((contour, _)) = binarize_pipeline(&map.normalized(), &BinarizeConfig::default())
        else {
            continue;
        };
        let mask = contour.mask();
        // Zero endpoint pixels.
        for p in mask.iter_set() {
            let n = mask.neighbor_count(p);
            require!(7, n >= 2, "seed {seed}: endpoint pixel at ({}, {})", p.row, p.col);
        }
        // Exactly one component.
        let comps = connected_components(mask, Connectivity::Eight);
        require!(7, comps.count == 1, "seed {seed}: {} components", comps.count);
        // Zero branch pixels: a single simple cycle passes through every
        // pixel exactly once. (At axis-aligned corners a pixel of a valid
        // cycle sees a third, diagonally redundant neighbor, so the cycle
        // test—not a literal neighbor count—is the exact branch-freedom
        // assertion.)
        let cycle = trace_closed_curve(mask)
            .unwrap_or_else(|e| panic!("criterion 7: FAIL — seed {seed}: {e}"));
        require!(7, cycle.len() == mask.count(), "seed {seed}: cycle misses pixels");
        checked += 1;
    }
    require!(7, checked >= 8, "only {checked}/10 contours emitted to check");
    pass(7, &format!("{checked} emitted contours: no endpoints, one component, single simple cycle"));
}

// --- 8. trained-network sanity ----------------------------------------------------

#[test]
fn criterion_08_trained_predictor_tracks_contours() {
    let started = std::time::Instant::now();
    let params = SceneParams {
        height: 192,
        width: 192,
        complexity: 10,
        noise: 0.0,
        gap_count: 0,
        antenna_count: 0,
    };
    let mut scenes = Vec::new();
    for seed in 800..810u64 {
        let s = gen_scene(&params, seed).unwrap();
        let stack = stack_inputs(&s.image, &s.softmap).unwrap();
        scenes.push((stack, s.gt_contour.mask().clone()));
    }
    let dataset = generate_dataset(&scenes, 1000, 842, true).unwrap();
    require!(8, dataset.failures.is_empty(), "label generation failed on some scenes");
    require!(
        8,
        dataset.split.train.len() == 9000 && dataset.split.val.len() == 1000,
        "expected 9000/1000 split, got {}/{}",
        dataset.split.train.len(),
        dataset.split.val.len()
    );

    let cfg = TrainConfig {
        learning_rate: 0.01,
        momentum: 0.9,
        batch_size: 64,
        epochs: 15,
        width_divisor: 8,
        seed: 8,
        ..TrainConfig::default()
    };
    let outcome = train(&dataset.split.train, &dataset.split.val, &cfg).unwrap();
    let first = outcome.curve[0].val_loss;
    let best = outcome
        .curve
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    require!(
        8,
        best < 0.3 * first,
        "validation MSE only fell from {first:.5} to {best:.5} in {} epochs",
        outcome.curve.len()
    );

    let cnn = CnnPredictor::new(outcome.weights, cfg.label_scale);
    let mut cnn_mean = 0.0f64;
    let mut oracle_mean = 0.0f64;
    for seed in 900..905u64 {
        let s = gen_scene(&params, seed).unwrap();
        let stack = stack_inputs(&s.image, &s.softmap).unwrap();
        let chain = trace_gt_chain(s.gt_contour.mask()).unwrap();
        let oracle = OraclePredictor::new(chain.clone());
        let start = TracerState {
            cp: chain.at(0),
            heading: chain.lookahead_direction(0),
        };
        let steps = chain.len();
        let mean_of = |pred: &dyn DirectionPredictor| -> f64 {
            let trace = walk(&stack, start, steps, pred, |_| 1).unwrap();
            trace
                .pixels
                .iter()
                .map(|p| chain.chebyshev_distance(*p) as f64)
                .sum::<f64>()
                / trace.pixels.len() as f64
        };
        let c = mean_of(&cnn);
        let o = mean_of(&oracle);
        eprintln!("criterion 8: held-out seed {seed}: cnn {c:.3}, oracle {o:.3}");
        cnn_mean += c / 5.0;
        oracle_mean += o / 5.0;
    }
    require!(
        8,
        cnn_mean <= 2.0 * oracle_mean,
        "trained mean distance {cnn_mean:.3} vs oracle {oracle_mean:.3}"
    );
    let elapsed = started.elapsed();
    require!(8, elapsed.as_secs() <= 1800, "took {elapsed:?}, budget 30 min");
    pass(
        8,
        &format!(
            "val MSE {first:.5} -> {best:.5} ({:.2}x); tracking {cnn_mean:.3} vs oracle {oracle_mean:.3} px; {elapsed:?}",
            best / first
        ),
    );
}

// --- 9. determinism ------------------------------------------------------------

#[test]
fn criterion_09_pipeline_is_byte_deterministic() {
    let params = SceneParams {
        height: 192,
        width: 192,
        complexity: 10,
        noise: 0.1,
        gap_count: 2,
        antenna_count: 1,
    };
    let run = |dir: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let scene = gen_scene(&params, 909).unwrap();
        linewalk::synth::save_scene(&scene, dir.join("scene")).unwrap();
        let loaded = linewalk::synth::load_scene(dir.join("scene")).unwrap();
        let stack = stack_inputs(&loaded.image, &loaded.softmap).unwrap();
        let chain = trace_gt_chain(loaded.gt_contour.mask()).unwrap();
        let oracle_cw = OraclePredictor::new(chain.clone());
        let oracle_acw = OraclePredictor::new(chain.mirror_cols(stack.w()));
        let predictors = PassPredictors {
            clockwise: &oracle_cw,
            anticlockwise: &oracle_acw,
        };
        let ccfg = CompletionConfig {
            rng_seed: 909,
            ..CompletionConfig::default()
        };
        let (map, _) = run_completion(&stack, &predictors, &ccfg).unwrap();
        linewalk::io::save_gray(dir.join("accumulation.png"), &map.normalized()).unwrap();
        let reloaded = linewalk::io::load_gray(dir.join("accumulation.png")).unwrap();
        let (contour, report) = binarize_pipeline(&reloaded, &BinarizeConfig::default()).unwrap();
        linewalk::io::save_mask(dir.join("contour.png"), contour.mask()).unwrap();
        let mask = fill_closed_contour(&contour).unwrap();
        linewalk::io::save_mask(dir.join("mask.png"), &mask).unwrap();
        std::fs::write(dir.join("report.json"), serde_json::to_string(&report).unwrap()).unwrap();
        ["scene/image.png", "scene/softmap.png", "accumulation.png", "contour.png", "mask.png", "report.json"]
            .iter()
            .map(|name| {
                (
                    name.to_string(),
                    std::fs::read(dir.join(name)).unwrap(),
                )
            })
            .collect()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run(dir_a.path());
    let b = run(dir_b.path());
    for ((name, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
        require!(9, bytes_a == bytes_b, "{name} differs between runs");
    }
    pass(9, &format!("{} artifacts byte-identical across two runs", a.len()));
}

// --- 10. cut property ------------------------------------------------------------

#[test]
fn criterion_10_column_cut_disconnects_crossing_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (h, w) = (48usize, 72usize);
    let cut_col = 36usize;
    for case in 0..100 {
        let mut mask = BinaryMask::new(h, w);
        let mut row = rng.gen_range(4..h as i32 - 4);
        for col in 0..w as i32 {
            mask.set(row as usize, col as usize, true);
            // Occasional vertical wiggle keeps the curve 8-connected.
            row = (row + rng.gen_range(-1..=1)).clamp(1, h as i32 - 2);
        }
        let left = (0..cut_col as i32)
            .find_map(|c| {
                (0..h as i32).find_map(|r| {
                    mask.get(r as usize, c as usize)
                        .then_some(PixelCoord::new(r, c))
                })
            })
            .unwrap();
        let right = ((cut_col as i32 + 1)..w as i32)
            .find_map(|c| {
                (0..h as i32).find_map(|r| {
                    mask.get(r as usize, c as usize)
                        .then_some(PixelCoord::new(r, c))
                })
            })
            .unwrap();
        require!(10, same_component(&mask, left, right), "case {case}: setup not connected");
        for r in 0..h {
            mask.set(r, cut_col, false);
        }
        require!(
            10,
            !same_component(&mask, left, right),
            "case {case}: still connected after zeroing the column"
        );
    }
    pass(10, "100/100 random crossing curves disconnected by a zeroed column");
}

// --- sanity: the binarize pipeline is exercised against the cut used above ---

#[test]
fn cut_in_pipeline_severs_only_near_the_line() {
    // Keeps the acceptance suite honest about the limited-height cut: a
    // contour crossing the cut column far from the detected line survives.
    let mut map = Raster2D::new(90, 90);
    for (r0, r1, c0, c1, v) in [
        (20usize, 22usize, 15usize, 75usize, 0.9f32),
        (60, 62, 10, 80, 1.0),
        (20, 62, 15, 17, 0.8),
        (20, 62, 73, 75, 0.8),
    ] {
        for r in r0..=r1 {
            for c in c0..=c1 {
                map.set(r, c, map.get(r, c).max(v));
            }
        }
    }
    let cfg = BinarizeConfig::default();
    let seg = hough_longest_line(&map, &cfg).unwrap();
    assert_eq!(seg.theta_degrees, 90.0);
    let (open, cut) = make_cut(&map, &seg, &cfg).unwrap();
    // The top band still crosses the cut column.
    let top_left = PixelCoord::new(21, 20);
    let top_right = PixelCoord::new(21, 70);
    assert!(same_component(&open.threshold(cfg.th_low), top_left, top_right));
    let (th, _) = find_closing_threshold(&open, cut.pixel1, cut.pixel2, &cfg).unwrap();
    assert!(th >= 0.75, "closing threshold {th}");
}
