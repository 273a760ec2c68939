//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion.
//!
//! Criterion 9 compares the three priors on the desk profile. Its
//! line is printed but it only fails the run when
//! `LATENTFLOW_STRICT_ACCEPTANCE=1` is set. `LATENTFLOW_ACCEPTANCE_ONLY=3,4`
//! restricts the run to the listed criteria.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use latentflow::autodiff::{gradient_check, GradCheckOptions, Graph, ParamId, ParamSet, Tensor};
use latentflow::eval::{
    avg_min_distance, calibrate, min_distance_distribution, min_distances, nearest_neighbor_counts,
    ModelTag, SampleSet, HISTOGRAM_BINS,
};
use latentflow::lbm::{
    dominant_frequency, strouhal_number, total_mass, CylinderChannel, DistributionField, Lattice,
    LatticeConfig, ObstacleMask,
};
use latentflow::lstm::LstmParams;
use latentflow::pipeline::{artifacts, Command, Pipeline, PipelineConfig};
use latentflow::qcbm::{
    train_dimension, GaussianBinner, MmdKernel, QcbmConfig, DEFAULT_BANDWIDTHS, N_BINS,
};
use latentflow::qsim::{parameter_shift_jacobian, LayeredAnsatz};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn pass_if(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, t: Instant, outcome: Outcome) -> Outcome {
    let elapsed = t.elapsed();
    let stamp = |d: String| {
        format!(
            "{d}; {:.1} s of {} s budget",
            elapsed.as_secs_f64(),
            budget.as_secs()
        )
    };
    match outcome {
        Ok(d) if elapsed <= budget => Ok(stamp(d)),
        Ok(d) => Err(stamp(format!("{d}; over time budget"))),
        Err(d) => Err(stamp(d)),
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

// 1. Closed box: total mass drift over 1000 steps.
fn criterion_1() -> Outcome {
    let (nx, ny) = (128, 32);
    let config = LatticeConfig::enclosed(nx, ny, 0.6, ObstacleMask::closed_box(nx, ny))
        .map_err(|e| e.to_string())?;
    let mut f = DistributionField::zeros(nx, ny);
    for y in 0..ny {
        for x in 0..nx {
            let rho = 1.0 + 0.01 * (((x * 7 + y * 3) % 11) as f64 / 11.0);
            let u = [0.04 * (y as f64 * 0.3).sin(), 0.03 * (x as f64 * 0.2).cos()];
            let feq = latentflow::lbm::compute_equilibrium(rho, u).map_err(|e| e.to_string())?;
            f.set_node(x, y, feq);
        }
    }
    let mut lattice = Lattice::with_populations(config, f).map_err(|e| e.to_string())?;
    let m0 = total_mass(lattice.populations());
    lattice.run(1000).map_err(|e| e.to_string())?;
    let drift = (total_mass(lattice.populations()) - m0).abs() / m0;
    pass_if(
        drift < 1e-12,
        format!("relative mass drift {drift:.3e} (< 1e-12)"),
    )
}

// 2. Poiseuille profile and cylinder shedding frequency.
fn criterion_2() -> Outcome {
    let (nx, ny, tau, force) = (4, 34, 0.8, 1e-6);
    let walls = ObstacleMask::from_fn(nx, ny, |_, y| y == 0 || y == ny - 1);
    let config = LatticeConfig::enclosed(nx, ny, tau, walls)
        .map_err(|e| e.to_string())?
        .with_body_force([force, 0.0]);
    let mut lattice = Lattice::new(config).map_err(|e| e.to_string())?;
    lattice.run(20_000).map_err(|e| e.to_string())?;
    let m = lattice.macroscopics().map_err(|e| e.to_string())?;
    let nu = (tau - 0.5) / 3.0;
    let (lo, hi) = (0.5, ny as f64 - 1.5);
    let exact = |y: f64| force / (2.0 * nu) * (y - lo) * (hi - y);
    let peak = exact(0.5 * (lo + hi));
    let profile_err = (1..ny - 1)
        .map(|y| (m.ux[y * nx] - exact(y as f64)).abs() / peak)
        .fold(0.0f64, f64::max);

    let setup = CylinderChannel::reference();
    let mut lattice =
        Lattice::new(LatticeConfig::cylinder_channel(setup).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    lattice.run(10_000).map_err(|e| e.to_string())?;
    let probe = (setup.ny / 2) * setup.nx + (setup.nx as f64 / 4.0 + 3.0 * setup.radius) as usize;
    let mut series = Vec::with_capacity(20_000);
    for _ in 0..20_000 {
        lattice.step().map_err(|e| e.to_string())?;
        series.push(lattice.macroscopics().map_err(|e| e.to_string())?.uy[probe]);
    }
    let st = dominant_frequency(&series)
        .map(|f| strouhal_number(f, setup.diameter(), setup.u_inlet))
        .unwrap_or(f64::NAN);
    pass_if(
        profile_err < 0.02 && (0.15..=0.30).contains(&st),
        format!("Poiseuille max relative error {profile_err:.3e} (< 2e-2); cylinder St {st:.4} (in [0.15, 0.30])"),
    )
}

fn check(
    name: &str,
    tol: f64,
    ps: &ParamSet,
    build: impl Fn(
        &mut Graph<'_>,
        &[ParamId],
    ) -> Result<latentflow::autodiff::Var, latentflow::autodiff::AutodiffError>,
    worst: &mut Vec<String>,
) -> bool {
    let ids: Vec<ParamId> = ps.ids().collect();
    match gradient_check(ps, |g| build(g, &ids), &GradCheckOptions::default()) {
        Ok(r) => {
            let e = r.max_error();
            worst.push(format!("{name} {e:.1e}"));
            e < tol
        }
        Err(e) => {
            worst.push(format!("{name} error {e}"));
            false
        }
    }
}

// 3. Gradient checks per layer type.
fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut notes = Vec::new();
    let mut ok = true;

    let mut ps = ParamSet::new();
    ps.add("x", rand_tensor(&[3, 5], &mut rng));
    ps.add("w", rand_tensor(&[4, 5], &mut rng));
    ps.add("b", rand_tensor(&[4], &mut rng));
    let t = rand_tensor(&[3, 4], &mut rng);
    ok &= check(
        "linear",
        1e-6,
        &ps,
        |g, p| {
            let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
            let y = g.linear(x, w, Some(b))?;
            let t = g.input(t.clone());
            g.mse(y, t)
        },
        &mut notes,
    );

    let mut ps = ParamSet::new();
    ps.add("x", rand_tensor(&[2, 2, 8, 6], &mut rng));
    ps.add("w", rand_tensor(&[3, 2, 4, 4], &mut rng));
    ps.add("b", rand_tensor(&[3], &mut rng));
    let t = rand_tensor(&[2, 3, 4, 3], &mut rng);
    ok &= check(
        "conv2d",
        1e-4,
        &ps,
        |g, p| {
            let y = {
                let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                g.conv2d(x, w, Some(b), 2, 1)?
            };
            let t = g.input(t.clone());
            g.mse(y, t)
        },
        &mut notes,
    );

    let mut ps = ParamSet::new();
    ps.add("x", rand_tensor(&[2, 3, 4, 3], &mut rng));
    ps.add("w", rand_tensor(&[3, 2, 4, 4], &mut rng));
    ps.add("b", rand_tensor(&[2], &mut rng));
    let t = rand_tensor(&[2, 2, 8, 6], &mut rng);
    ok &= check(
        "conv_transpose2d",
        1e-4,
        &ps,
        |g, p| {
            let y = {
                let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                g.conv_transpose2d(x, w, Some(b), 2, 1)?
            };
            let t = g.input(t.clone());
            g.mse(y, t)
        },
        &mut notes,
    );

    let mut ps = ParamSet::new();
    ps.add("x", rand_tensor(&[4, 3, 2, 2], &mut rng));
    ps.add("gamma", rand_tensor(&[3], &mut rng));
    ps.add("beta", rand_tensor(&[3], &mut rng));
    let t = rand_tensor(&[4, 3, 2, 2], &mut rng);
    ok &= check(
        "batch_norm(train)",
        1e-4,
        &ps,
        |g, p| {
            let (y, _) = {
                let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                g.batch_norm_train(x, w, b, 1e-5)?
            };
            let t = g.input(t.clone());
            g.mse(y, t)
        },
        &mut notes,
    );
    let (mean, var) = (vec![0.1, -0.2, 0.3], vec![0.5, 1.5, 2.0]);
    ok &= check(
        "batch_norm(eval)",
        1e-4,
        &ps,
        |g, p| {
            let y = {
                let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                g.batch_norm_eval(x, w, b, &mean, &var, 1e-5)?
            };
            let t = g.input(t.clone());
            g.mse(y, t)
        },
        &mut notes,
    );

    let mut ps = ParamSet::new();
    ps.add(
        "a",
        Tensor::from_fn(&[8], |i| {
            if i % 2 == 0 {
                0.3 + 0.1 * i as f64
            } else {
                -0.4 - 0.1 * i as f64
            }
        }),
    );
    let target = Tensor::new(&[8], vec![1.0, 0.0, 1.0, 0.0, 0.2, 0.9, 0.5, 1.0])
        .map_err(|e| e.to_string())?;
    for name in ["relu", "sigmoid", "tanh"] {
        ok &= check(
            name,
            1e-4,
            &ps,
            |g, p| {
                let a = g.param(p[0]);
                let y = match name {
                    "relu" => g.relu(a),
                    "sigmoid" => g.sigmoid(a),
                    _ => g.tanh(a),
                };
                let t = g.input(target.clone());
                g.mse(y, t)
            },
            &mut notes,
        );
    }
    ok &= check(
        "bce",
        1e-4,
        &ps,
        |g, p| {
            let a = g.param(p[0]);
            let y = g.sigmoid(a);
            let t = g.input(target.clone());
            g.bce(y, t)
        },
        &mut notes,
    );

    let mut ps = ParamSet::new();
    ps.add("table", rand_tensor(&[5, 3], &mut rng));
    ps.add("z", rand_tensor(&[2, 3], &mut rng));
    ok &= check(
        "gather_rows",
        1e-4,
        &ps,
        |g, p| {
            let (table, z) = (g.param(p[0]), g.param(p[1]));
            let e = g.gather_rows(table, &[3, 1])?;
            g.mse(e, z)
        },
        &mut notes,
    );
    let st_err = straight_through_error(&ps).map_err(|e| e.to_string())?;
    notes.push(format!("straight-through {st_err:.1e}"));
    ok &= st_err < 1e-12;

    let lstm = LstmParams::new(6, 1.0, &mut rng);
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let x0: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ps = lstm.params.clone();
    ok &= check(
        "lstm(7 steps)",
        1e-4,
        &ps,
        |g, _| {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            lstm.teacher_forced_loss(g, &refs, &x0)
        },
        &mut notes,
    );

    pass_if(
        ok,
        format!("max relative error per layer: {}", notes.join(", ")),
    )
}

// z + stop_gradient(e - z): value e, gradient identity in z, none in the table.
fn straight_through_error(ps: &ParamSet) -> Result<f64, latentflow::autodiff::AutodiffError> {
    let ids: Vec<ParamId> = ps.ids().collect();
    let mut g = Graph::new(ps);
    let (table, z) = (g.param(ids[0]), g.param(ids[1]));
    let e = g.gather_rows(table, &[3, 1])?;
    let diff = g.sub(e, z)?;
    let sg = g.stop_gradient(diff);
    let zq = g.add(z, sg)?;
    let sq = g.mul(zq, zq)?;
    let loss = g.sum(sq);
    let grads = g.backward(loss)?;
    let tv = ps.get(ids[0]).data();
    let mut err = 0.0f64;
    let gz = grads
        .param(ids[1])
        .map(|t| t.data().to_vec())
        .unwrap_or_default();
    for (k, &row) in [3usize, 1].iter().enumerate() {
        for c in 0..3 {
            let expect = 2.0 * tv[row * 3 + c];
            err = err.max((gz.get(k * 3 + c).copied().unwrap_or(f64::NAN) - expect).abs());
        }
    }
    if let Some(gt) = grads.param(ids[0]) {
        err = err.max(gt.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    Ok(err)
}

// 4. Parameter-shift Jacobian of an 8-qubit, 7-layer circuit.
fn criterion_4() -> Outcome {
    let a = LayeredAnsatz::new(8, 7).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta: Vec<f64> = (0..a.n_params())
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let j = parameter_shift_jacobian(&a, &theta).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let (mut max_err, mut max_col) = (0.0f64, 0.0f64);
    for p in 0..a.n_params() {
        let mut t = theta.clone();
        t[p] += h;
        let plus = a.probabilities(&t).map_err(|e| e.to_string())?;
        t[p] -= 2.0 * h;
        let minus = a.probabilities(&t).map_err(|e| e.to_string())?;
        for k in 0..plus.len() {
            max_err = max_err.max((j.get(k, p) - (plus[k] - minus[k]) / (2.0 * h)).abs());
        }
        max_col = max_col.max((0..plus.len()).map(|k| j.get(k, p)).sum::<f64>().abs());
    }
    pass_if(
        max_err < 1e-6 && max_col < 1e-10,
        format!("max |shift - finite difference| {max_err:.2e} (< 1e-6); max |column sum| {max_col:.2e} (< 1e-10)"),
    )
}

// 5. QCBM trainability on a discretized standard normal and a one-hot target.
fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<f64> = (0..1999).map(|_| rng.sample(StandardNormal)).collect();
    let binner = GaussianBinner::fit(&values).map_err(|e| e.to_string())?;
    let q = binner
        .target_distribution(&values)
        .map_err(|e| e.to_string())?;
    let kernel = MmdKernel::new(&DEFAULT_BANDWIDTHS);
    let cfg = QcbmConfig::default();
    let fit = train_dimension(&q, &kernel, &cfg, &mut ChaCha8Rng::seed_from_u64(50))
        .map_err(|e| e.to_string())?;
    let initial = fit.history[0];
    let mut onehot = vec![0.0; N_BINS];
    onehot[0] = 1.0;
    let hot = train_dimension(&onehot, &kernel, &cfg, &mut ChaCha8Rng::seed_from_u64(51))
        .map_err(|e| e.to_string())?;
    pass_if(
        fit.final_mmd2 < initial / 10.0 && hot.final_mmd2 < 1e-3,
        format!(
            "normal target MMD² {initial:.3e} -> {:.3e} (< initial/10) after {} iterations at lr {}; one-hot MMD² {:.3e} (< 1e-3)",
            fit.final_mmd2, cfg.iters, cfg.lr, hot.final_mmd2
        ),
    )
}

// 6. Binner round trip and monotonicity.
fn criterion_6() -> Outcome {
    let binners = [
        GaussianBinner {
            mu: 0.0,
            sigma: 1.0,
        },
        GaussianBinner {
            mu: -0.37,
            sigma: 2.9,
        },
        GaussianBinner {
            mu: 5.0,
            sigma: 1e-3,
        },
    ];
    let mut round_trip_failures = 0;
    for b in &binners {
        for bin in 0..N_BINS {
            let v = b.dequantize(bin).map_err(|e| e.to_string())?;
            round_trip_failures += usize::from(b.quantize(v) != bin);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut xs: Vec<f64> = (0..100_000)
        .map(|_| 4.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    xs.sort_by(f64::total_cmp);
    let b = binners[0];
    let violations = xs
        .windows(2)
        .filter(|w| b.quantize(w[0]) > b.quantize(w[1]))
        .count();
    pass_if(
        round_trip_failures == 0 && violations == 0,
        format!("{round_trip_failures} round-trip failures over 3x256 bins; {violations} monotonicity violations over 1e5 values"),
    )
}

fn naive_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s.sqrt()
}

// 7. Distance metrics against quadratic reimplementations.
fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut count_mismatch = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let mut rows = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..7).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        };
        let reference = rows(200);
        let sets: Vec<SampleSet> = ModelTag::ALL
            .iter()
            .map(|&t| SampleSet::new(t, rows(200)))
            .collect();

        let mut per_model = Vec::new();
        for s in &sets {
            let avg = avg_min_distance(&s.rows, &reference).map_err(|e| e.to_string())?;
            let naive_avg = s
                .rows
                .iter()
                .map(|a| {
                    reference
                        .iter()
                        .map(|b| naive_dist(a, b))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / s.rows.len() as f64;
            worst = worst.max((avg - naive_avg).abs());
            let mins = min_distances(&s.rows, &reference).map_err(|e| e.to_string())?;
            for (r, m) in reference.iter().zip(&mins) {
                let naive = s
                    .rows
                    .iter()
                    .map(|a| naive_dist(a, r))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max((m - naive).abs());
            }
            per_model.push((s.tag, mins));
        }
        let nn = nearest_neighbor_counts(&sets, &reference).map_err(|e| e.to_string())?;
        let mut expect = [0usize; 3];
        for r in &reference {
            let mut best = (f64::INFINITY, 0);
            for (k, s) in sets.iter().enumerate() {
                for a in &s.rows {
                    let d = naive_dist(a, r);
                    if d < best.0 {
                        best = (d, k);
                    }
                }
            }
            expect[best.1] += 1;
        }
        for (k, t) in ModelTag::ALL.iter().enumerate() {
            count_mismatch += usize::from(nn.get(*t) != expect[k]);
        }
        let hist = min_distance_distribution(&per_model).map_err(|e| e.to_string())?;
        let (lo, hi) = (hist.edges[0], hist.edges[HISTOGRAM_BINS]);
        for ((_, counts), (_, mins)) in hist.counts.iter().zip(&per_model) {
            let mut naive = vec![0usize; HISTOGRAM_BINS];
            for &m in mins {
                let mut b = ((m - lo) / (hi - lo) * HISTOGRAM_BINS as f64) as usize;
                b = b.min(HISTOGRAM_BINS - 1);
                naive[b] += 1;
            }
            count_mismatch += usize::from(&naive != counts);
        }
    }
    pass_if(
        worst <= 1e-12 && count_mismatch == 0,
        format!("max distance deviation {worst:.2e} (<= 1e-12); {count_mismatch} count mismatches over 5 random 200x7 instances"),
    )
}

// 8. t-SNE perplexity calibration.
fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..1000)
        .map(|i| {
            (0..7)
                .map(|k| if k == i % 4 { 4.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let cal = calibrate(&rows, 100.0, 1e-5).map_err(|e| e.to_string())?;
    let target = 100f64.ln();
    let worst = (0..cal.n)
        .map(|i| {
            let h: f64 = -cal
                .row(i)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>();
            (h - target).abs()
        })
        .fold(0.0f64, f64::max);
    pass_if(
        worst < 1e-4,
        format!("max |H - ln 100| {worst:.2e} over 1000 points (< 1e-4)"),
    )
}

fn desk_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf");
    PipelineConfig::load(Some(&path), &[]).expect("desk profile parses")
}

fn run_desk(dir: &Path) -> Result<(), String> {
    Pipeline::new(desk_config(), dir)
        .run(Command::All)
        .map_err(|e| e.to_string())
}

// 9. Comparative study on the desk profile.
fn criterion_9(dir: &Path) -> Outcome {
    run_desk(dir)?;
    let text = fs::read_to_string(dir.join(artifacts::METRICS)).map_err(|e| e.to_string())?;
    let table = latentflow::eval::parse_metrics_csv(&text).map_err(|e| e.to_string())?;
    let row = |t: ModelTag| table.rows.iter().find(|r| r.tag == t).expect("model row");
    let (q, g, l) = (
        row(ModelTag::Qcbm),
        row(ModelTag::Qgan),
        row(ModelTag::Lstm),
    );
    let ordering =
        q.avg_min_distance < g.avg_min_distance && g.avg_min_distance < l.avg_min_distance;
    let majority = 2 * q.nn_wins > table.reference_count;
    pass_if(
        ordering && majority,
        format!(
            "avg min distance qcbm {:.4}, qgan {:.4}, lstm {:.4} (ordering {}); NN wins qcbm {}, qgan {}, lstm {} of {} (majority {})",
            q.avg_min_distance,
            g.avg_min_distance,
            l.avg_min_distance,
            if ordering { "holds" } else { "violated" },
            q.nn_wins,
            g.nn_wins,
            l.nn_wins,
            table.reference_count,
            if majority { "holds" } else { "violated" }
        ),
    )
}

// 10. Determinism: a second desk run reproduces the metrics byte for byte.
fn criterion_10(first: &Path, second: &Path) -> Outcome {
    if !first.join(artifacts::METRICS).is_file() {
        run_desk(first)?;
    }
    run_desk(second)?;
    let mut differing = Vec::new();
    let report = first.join(artifacts::REPORT_DIR);
    let mut names: Vec<String> = fs::read_dir(&report)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    for n in &names {
        let a = fs::read(report.join(n)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(artifacts::REPORT_DIR).join(n)).map_err(|e| e.to_string())?;
        if a != b {
            differing.push(n.clone());
        }
    }
    pass_if(
        differing.is_empty() && !names.is_empty(),
        format!(
            "{} report CSVs compared, differing: {:?}",
            names.len(),
            differing
        ),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let strict = std::env::var("LATENTFLOW_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    let tmp = tempfile::tempdir().expect("temp dir");
    let (first, second) = (tmp.path().join("desk-a"), tmp.path().join("desk-b"));
    let secs = Duration::from_secs;

    let criteria: Vec<(u32, &str, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "LBM mass conservation", secs(10), Box::new(criterion_1)),
        (2, "LBM physics", secs(600), Box::new(criterion_2)),
        (
            3,
            "autodiff gradient checks",
            secs(30),
            Box::new(criterion_3),
        ),
        (
            4,
            "parameter-shift exactness",
            secs(60),
            Box::new(criterion_4),
        ),
        (5, "QCBM trainability", secs(300), Box::new(criterion_5)),
        (6, "binner", secs(5), Box::new(criterion_6)),
        (7, "metric oracles", secs(5), Box::new(criterion_7)),
        (8, "t-SNE calibration", secs(120), Box::new(criterion_8)),
        (
            9,
            "comparative study (desk profile)",
            secs(7200),
            Box::new(|| criterion_9(&first)),
        ),
        (
            10,
            "determinism of `all`",
            secs(7200),
            Box::new(|| criterion_10(&first, &second)),
        ),
    ];

    let only: Option<Vec<u32>> = std::env::var("LATENTFLOW_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut fatal = Vec::new();
    for (n, name, budget, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let outcome = within(budget, t, f());
        let reported_only = n == 9 && !strict;
        match &outcome {
            Ok(d) => println!("criterion {n} ({name}): PASS: {d}"),
            Err(d) if reported_only => {
                println!("criterion {n} ({name}): FAIL (reported, not fatal): {d}")
            }
            Err(d) => println!("criterion {n} ({name}): FAIL: {d}"),
        }
        if outcome.is_err() && !reported_only {
            fatal.push(n);
        }
    }
    if !fatal.is_empty() {
        eprintln!("failing criteria: {fatal:?}");
        std::process::exit(1);
    }
}
