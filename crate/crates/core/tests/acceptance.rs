//! Acceptance suite: one test per acceptance criterion, each printing a
//! single `[PASS]`/`[FAIL]` line. The heavier criteria train real flows; the
//! whole suite is sized for a desktop CPU.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};

use isoriem_core::analysis::{
    self, geodesic_rel_rmse, low_rank_rel_rmse, m_matrix_diagnostic, tangent_rank_r, Variant,
};
use isoriem_core::data;
use isoriem_core::diffeo::{Diffeomorphism, Identity, ModeledDoubleGaussian, QuadraticShear};
use isoriem_core::flow::{build_flow, FlowConfig, FlowModel, VectorCouplingSpec};
use isoriem_core::geometry;
use isoriem_core::iso;
use isoriem_core::linalg::{self, dist, norm, Matrix};
use isoriem_core::train::{self, loss_and_grad, TrainConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Run `body`, then print exactly one pass/fail line for the criterion.
fn criterion<F: FnOnce()>(number: usize, description: &str, body: F) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match outcome {
        Ok(()) => println!("[PASS] criterion {number}: {description}"),
        Err(payload) => {
            println!("[FAIL] criterion {number}: {description}");
            resume_unwind(payload);
        }
    }
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// The three reference architectures: they jointly exercise every layer type
/// (actnorm, Householder stack, fixed-filter and feed-forward vector
/// couplings, masked invertible convolutions, convolutional couplings).
fn reference_configs() -> Vec<FlowConfig> {
    vec![
        FlowConfig::Vector {
            dim: 2,
            blocks: 2,
            coupling: VectorCouplingSpec::FixedFilter {
                activation_order: 2,
            },
            householder_reflections: 2,
            actnorm_data_init: false,
        },
        FlowConfig::Vector {
            dim: 4,
            blocks: 3,
            coupling: VectorCouplingSpec::FeedForward {
                hidden_widths: vec![8],
                activation_order: 3,
            },
            householder_reflections: 3,
            actnorm_data_init: false,
        },
        FlowConfig::Image {
            channels: 1,
            height: 6,
            width: 6,
            blocks: 2,
            coupling_channels: vec![4],
            activation_order: 2,
            kernel_size: 3,
            actnorm_data_init: false,
        },
    ]
}

/// A reference flow with all parameters perturbed away from the (near
/// identity) initialization, so invertibility is tested off the easy point.
fn perturbed_flow(config: &FlowConfig, seed: u64) -> FlowModel {
    let mut model = build_flow(config, seed).unwrap();
    model.set_actnorm_initialized(true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut params = model.params();
    for p in params.iter_mut() {
        *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    model.set_params(&params).unwrap();
    model
}

#[test]
fn criterion_1_invertibility_and_constant_determinant() {
    criterion(
        1,
        "round trip < 1e-10 and log-det constancy < 1e-10 over 1000 inputs per architecture",
        || {
            for (c, config) in reference_configs().iter().enumerate() {
                let model = perturbed_flow(config, 40 + c as u64);
                let d = config.dim();
                let mut rng = ChaCha8Rng::seed_from_u64(100 + c as u64);
                let mut min_ld = f64::INFINITY;
                let mut max_ld = f64::NEG_INFINITY;
                for _ in 0..1000 {
                    let x = randn(&mut rng, d);
                    let y = model.forward_slice(&x).unwrap();
                    let back = model.inverse_slice(&y).unwrap();
                    let err = dist(&x, &back);
                    assert!(err < 1e-10, "round-trip error {err} (architecture {c})");
                    let ld = model.log_abs_det_slice(&x).unwrap();
                    min_ld = min_ld.min(ld);
                    max_ld = max_ld.max(ld);
                }
                assert!(
                    max_ld - min_ld < 1e-10,
                    "log-det varies by {} (architecture {c})",
                    max_ld - min_ld
                );
            }
        },
    );
}

#[test]
fn criterion_2_gradient_suite() {
    criterion(
        2,
        "flow VJP and batch loss gradient match central finite differences < 1e-4",
        || {
            for (c, config) in reference_configs().iter().enumerate() {
                let model = perturbed_flow(config, 7 + c as u64);
                let d = config.dim();
                let n_params = model.param_count();
                let mut rng = ChaCha8Rng::seed_from_u64(200 + c as u64);
                let h = 1e-5;

                // VJP of u . phi(x) + c_ld * logdet against parameter
                // perturbations on a random index subset, plus the input
                // gradient against input perturbations.
                let x = randn(&mut rng, d);
                let u = randn(&mut rng, d);
                let c_ld = rng.sample::<f64, _>(StandardNormal);
                let mut grad = vec![0.0; n_params];
                let grad_x = model.vjp(&x, &u, c_ld, &mut grad).unwrap();

                let scalar = |m: &FlowModel, x: &[f64]| -> f64 {
                    let y = m.forward_slice(x).unwrap();
                    linalg::dot(&u, &y) + c_ld * m.log_abs_det_slice(x).unwrap()
                };
                let base_params = model.params();
                let mut indices: Vec<usize> = (0..n_params).collect();
                indices.shuffle(&mut rng);
                indices.truncate(40);
                let mut analytic = Vec::new();
                let mut fd = Vec::new();
                let mut probe = model.clone();
                for &i in &indices {
                    let mut p = base_params.clone();
                    p[i] += h;
                    probe.set_params(&p).unwrap();
                    let plus = scalar(&probe, &x);
                    p[i] = base_params[i] - h;
                    probe.set_params(&p).unwrap();
                    let minus = scalar(&probe, &x);
                    analytic.push(grad[i]);
                    fd.push((plus - minus) / (2.0 * h));
                }
                let rel = dist(&analytic, &fd) / norm(&fd).max(1e-8);
                assert!(rel < 1e-4, "param VJP rel error {rel} (architecture {c})");

                let mut fd_x = Vec::new();
                for i in 0..d {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let plus = scalar(&model, &xp);
                    xp[i] = x[i] - h;
                    let minus = scalar(&model, &xp);
                    fd_x.push((plus - minus) / (2.0 * h));
                }
                let rel = dist(&grad_x, &fd_x) / norm(&fd_x).max(1e-8);
                assert!(rel < 1e-4, "input VJP rel error {rel} (architecture {c})");

                // Batch NLL gradient on the same index subset.
                let batch: Vec<Vec<f64>> = (0..4).map(|_| randn(&mut rng, d)).collect();
                let (_, g) = loss_and_grad(&model, &batch).unwrap();
                let mut analytic = Vec::new();
                let mut fd = Vec::new();
                for &i in &indices {
                    let mut p = base_params.clone();
                    p[i] += h;
                    probe.set_params(&p).unwrap();
                    let plus = loss_and_grad(&probe, &batch).unwrap().0;
                    p[i] = base_params[i] - h;
                    probe.set_params(&p).unwrap();
                    let minus = loss_and_grad(&probe, &batch).unwrap().0;
                    analytic.push(g[i]);
                    fd.push((plus - minus) / (2.0 * h));
                }
                let rel = dist(&analytic, &fd) / norm(&fd).max(1e-8);
                assert!(rel < 1e-4, "loss grad rel error {rel} (architecture {c})");
            }
        },
    );
}

/// Random pairs in the strip shared by both closed-form geometries.
fn test_pairs(seed: u64, count: usize) -> Vec<([f64; 2], [f64; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-0.9..0.9)];
        let y = [rng.gen_range(-1.5..1.5), rng.gen_range(-0.9..0.9)];
        if dist(&x, &y) > 0.3 {
            out.push((x, y));
        }
    }
    out
}

#[test]
fn criterion_3_iso_geometry_property_suite() {
    criterion(
        3,
        "iso-geodesics have constant speed (CV < 2%), exp/log round trips < 1e-2 and shrink with resolution, endpoint identities hold, transport preserves speed < 1e-2",
        || {
            let geometries: Vec<Box<dyn Diffeomorphism<f64>>> = vec![
                Box::new(ModeledDoubleGaussian),
                Box::new(QuadraticShear),
            ];
            for (gi, d) in geometries.iter().enumerate() {
                let d = d.as_ref();
                let pairs = test_pairs(300 + gi as u64, 10);

                // Constant speed: sample the reparametrized geodesic uniformly
                // and check the coefficient of variation of segment lengths.
                for (x, y) in &pairs {
                    let g = iso::discretize_geodesic(d, x, y, 1000).unwrap();
                    let n = 100;
                    let pts: Vec<Vec<f64>> = (0..=n)
                        .map(|k| {
                            let t = k as f64 / n as f64;
                            g.eval(d, g.time_change(t)).unwrap()
                        })
                        .collect();
                    let seg: Vec<f64> =
                        pts.windows(2).map(|w| dist(&w[0], &w[1])).collect();
                    let mean = seg.iter().sum::<f64>() / seg.len() as f64;
                    let var = seg.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                        / seg.len() as f64;
                    let cv = var.sqrt() / mean;
                    assert!(cv < 0.02, "speed CV {cv} (geometry {gi})");
                }

                // Round trips at two resolutions: error < 1e-2 relative and
                // not growing as the discretization refines.
                let mut worst = [0.0f64; 2];
                for (x, y) in &pairs {
                    for (ri, res) in [1000usize, 10_000].into_iter().enumerate() {
                        let v = iso::iso_log(d, x, y, res).unwrap();
                        let (back, _) = iso::iso_exp(d, x, &v, res).unwrap();
                        let e1 = dist(&back, y) / dist(x, y);
                        let w = iso::iso_log(d, x, &iso::iso_exp(d, x, &v, res).unwrap().0, res)
                            .unwrap();
                        let e2 = dist(&w, &v) / norm(&v);
                        worst[ri] = worst[ri].max(e1).max(e2);
                    }
                }
                assert!(worst[0] < 1e-2, "round-trip error {} at M=1e3", worst[0]);
                assert!(
                    worst[1] < worst[0] + 1e-6,
                    "round-trip error grew with resolution: {} -> {}",
                    worst[0],
                    worst[1]
                );

                // Endpoint and length identities.
                for (x, y) in &pairs {
                    let res = 1000;
                    let g0 = iso::iso_geodesic(d, x, y, 0.0, res).unwrap();
                    let g1 = iso::iso_geodesic(d, x, y, 1.0, res).unwrap();
                    assert!(dist(&g0, x) < 1e-9);
                    assert!(dist(&g1, y) < 1e-9);
                    let v = iso::iso_log(d, x, y, res).unwrap();
                    let l: f64 = iso::iso_distance(d, x, y, res).unwrap();
                    assert!((norm(&v) - l).abs() < 1e-12);
                }

                // Transporting the iso-geodesic's initial velocity preserves
                // its norm up to discretization error.
                for (x, y) in &pairs {
                    let res = 1000;
                    let h = 1.0 / res as f64;
                    let g = iso::discretize_geodesic(d, x, y, res).unwrap();
                    let a = g.eval(d, g.time_change(0.0)).unwrap();
                    let b = g.eval(d, g.time_change(h)).unwrap();
                    let v0: Vec<f64> =
                        b.iter().zip(&a).map(|(p, q)| (p - q) / h).collect();
                    let moved = iso::iso_parallel_transport(d, x, y, &v0).unwrap();
                    let rel = (norm(&moved) - norm(&v0)).abs() / norm(&v0);
                    assert!(rel < 1e-2, "transport norm change {rel} (geometry {gi})");
                }
            }
        },
    );
}

#[test]
fn criterion_4_modeled_geometry_iso_improvement() {
    criterion(
        4,
        "modeled geometry: iso rank-1 rel-RMSE < plain rank-1 rel-RMSE, geodesic rel-RMSE > 0.1",
        || {
            let d = ModeledDoubleGaussian;
            let points = data::sample_bimodal_gaussian(100, 17);
            let p = geometry::barycentre(&d, &points).unwrap();
            let res = 100;
            let plain = tangent_rank_r(&d, &points, &p, 1, Variant::Plain, res).unwrap();
            let iso_r = tangent_rank_r(&d, &points, &p, 1, Variant::Iso, res).unwrap();
            let e_plain = low_rank_rel_rmse(&points, &plain.reconstructions, &p).unwrap();
            let e_iso = low_rank_rel_rmse(&points, &iso_r.reconstructions, &p).unwrap();
            assert!(
                e_iso < e_plain,
                "iso rank-1 {e_iso} not below plain rank-1 {e_plain}"
            );
            let geo = geodesic_rel_rmse(&d, &points, &p, 10, res).unwrap();
            assert!(geo > 0.1, "geodesic rel-RMSE {geo} <= 0.1");
        },
    );
}

#[test]
fn criterion_5_learned_double_gaussian() {
    criterion(
        5,
        "learned double Gaussian: NLL decreases, geodesic rel-RMSE < 0.1, iso rank-1 <= plain rank-1",
        || {
            let train_data = data::sample_bimodal_gaussian(256, 21);
            let valid = data::sample_bimodal_gaussian(100, 22);
            let config = FlowConfig::Vector {
                dim: 2,
                blocks: 2,
                coupling: VectorCouplingSpec::FixedFilter {
                    activation_order: 2,
                },
                householder_reflections: 2,
                actnorm_data_init: true,
            };
            let mut model = build_flow(&config, 23).unwrap();
            let tc = TrainConfig {
                epochs: 500,
                batch_size: 16,
                learning_rate: 1e-3,
                weight_decay: 0.2,
                seed: 24,
            };
            let report = train::train(&mut model, &train_data, &tc).unwrap();
            assert!(
                report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap(),
                "loss did not decrease: {:?} -> {:?}",
                report.epoch_losses.first(),
                report.epoch_losses.last()
            );

            let p = geometry::barycentre(&model, &valid).unwrap();
            let res = 100;
            let geo = geodesic_rel_rmse(&model, &valid, &p, 10, res).unwrap();
            assert!(geo < 0.1, "learned geodesic rel-RMSE {geo} >= 0.1");
            let plain = tangent_rank_r(&model, &valid, &p, 1, Variant::Plain, res).unwrap();
            let iso_r = tangent_rank_r(&model, &valid, &p, 1, Variant::Iso, res).unwrap();
            let e_plain = low_rank_rel_rmse(&valid, &plain.reconstructions, &p).unwrap();
            let e_iso = low_rank_rel_rmse(&valid, &iso_r.reconstructions, &p).unwrap();
            assert!(
                e_iso <= e_plain,
                "iso rank-1 {e_iso} not <= plain rank-1 {e_plain}"
            );
        },
    );
}

#[test]
fn criterion_6_hemisphere() {
    criterion(
        6,
        "hemisphere: iso rank-2 rel-RMSE < plain rank-2 rel-RMSE, geodesic rel-RMSE < 0.15",
        || {
            let train_data = data::sample_hemisphere(256, 31, 0.01);
            let valid = data::sample_hemisphere(100, 32, 0.01);
            let config = FlowConfig::Vector {
                dim: 3,
                blocks: 3,
                coupling: VectorCouplingSpec::FeedForward {
                    hidden_widths: vec![16],
                    activation_order: 2,
                },
                householder_reflections: 3,
                actnorm_data_init: true,
            };
            let mut model = build_flow(&config, 33).unwrap();
            let tc = TrainConfig {
                epochs: 500,
                batch_size: 16,
                learning_rate: 1e-3,
                weight_decay: 0.02,
                seed: 34,
            };
            let report = train::train(&mut model, &train_data, &tc).unwrap();
            assert!(report.final_loss.is_finite());

            let p = geometry::barycentre(&model, &valid).unwrap();
            let res = 100;
            let plain = tangent_rank_r(&model, &valid, &p, 2, Variant::Plain, res).unwrap();
            let iso_r = tangent_rank_r(&model, &valid, &p, 2, Variant::Iso, res).unwrap();
            let e_plain = low_rank_rel_rmse(&valid, &plain.reconstructions, &p).unwrap();
            let e_iso = low_rank_rel_rmse(&valid, &iso_r.reconstructions, &p).unwrap();
            assert!(
                e_iso < e_plain,
                "iso rank-2 {e_iso} not below plain rank-2 {e_plain}"
            );
            let geo = geodesic_rel_rmse(&model, &valid, &p, 10, res).unwrap();
            assert!(geo < 0.15, "geodesic rel-RMSE {geo} >= 0.15");
        },
    );
}

#[test]
fn criterion_7_reduced_mnist_smoke() {
    criterion(
        7,
        "reduced MNIST smoke: NLL decreases, finite geodesic, plain and iso rank-20 rel-RMSE < 1",
        || {
            // Real IDX files can be supplied via MNIST_IMAGES / MNIST_LABELS;
            // the default run exercises the same loader on synthetic digits.
            let dir = tempfile::tempdir().unwrap();
            let (images_path, labels_path) = match (
                std::env::var("MNIST_IMAGES"),
                std::env::var("MNIST_LABELS"),
            ) {
                (Ok(i), Ok(l)) => (std::path::PathBuf::from(i), std::path::PathBuf::from(l)),
                _ => {
                    let (digits, labels) = data::synthetic_digits(4000, 41);
                    let ip = dir.path().join("images-idx3-ubyte");
                    let lp = dir.path().join("labels-idx1-ubyte");
                    data::write_mnist_idx(&ip, &lp, &digits, &labels).unwrap();
                    (ip, lp)
                }
            };
            let (images, _labels) =
                data::load_mnist_idx(&images_path, &labels_path, 4000).unwrap();
            assert_eq!(images.len(), 4000);
            let (train_data, valid) = data::train_validation_split(&images, 0.975, 42);

            let config = FlowConfig::Image {
                channels: 1,
                height: 28,
                width: 28,
                blocks: 2,
                coupling_channels: vec![16],
                activation_order: 2,
                kernel_size: 3,
                actnorm_data_init: true,
            };
            let mut model = build_flow(&config, 43).unwrap();
            let tc = TrainConfig {
                epochs: 5,
                batch_size: 128,
                learning_rate: 1e-3,
                weight_decay: 0.0,
                seed: 44,
            };
            let report = train::train(&mut model, &train_data, &tc).unwrap();
            assert!(
                report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap(),
                "loss did not decrease: {:?}",
                report.epoch_losses
            );

            // A geodesic midpoint between two validation digits stays finite.
            let mid = geometry::geodesic(&model, &valid[0], &valid[1], 0.5).unwrap();
            assert!(mid.iter().all(|c| c.is_finite()));

            // Rank-20 reconstruction on a validation subset, both variants,
            // with a coarse geodesic discretization to keep the runtime down.
            let subset = &valid[..32];
            let p = geometry::barycentre(&model, subset).unwrap();
            let res = 20;
            let plain = tangent_rank_r(&model, subset, &p, 20, Variant::Plain, res).unwrap();
            let iso_r = tangent_rank_r(&model, subset, &p, 20, Variant::Iso, res).unwrap();
            let e_plain = low_rank_rel_rmse(subset, &plain.reconstructions, &p).unwrap();
            let e_iso = low_rank_rel_rmse(subset, &iso_r.reconstructions, &p).unwrap();
            assert!(e_plain < 1.0, "plain rank-20 rel-RMSE {e_plain} >= 1");
            assert!(e_iso < 1.0, "iso rank-20 rel-RMSE {e_iso} >= 1");
        },
    );
}

/// Rank-r PCA reconstruction via power iteration with deflation.
fn pca_reconstruct(points: &[Vec<f64>], rank: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = points.iter().map(|p| linalg::sub(p, &mean)).collect();
    let mut cov: Matrix<f64> = Matrix::zeros(d, d);
    for c in &centered {
        for i in 0..d {
            for j in 0..d {
                cov.set(i, j, cov.get(i, j) + c[i] * c[j]);
            }
        }
    }
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut work = cov.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..rank {
        let mut v = randn(&mut rng, d);
        for _ in 0..10_000 {
            let mut next = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    next[i] += work.get(i, j) * v[j];
                }
            }
            let nn = norm(&next);
            v = linalg::scale(1.0 / nn, &next);
        }
        let mut lambda = 0.0;
        for i in 0..d {
            for j in 0..d {
                lambda += v[i] * work.get(i, j) * v[j];
            }
        }
        for i in 0..d {
            for j in 0..d {
                work.set(i, j, work.get(i, j) - lambda * v[i] * v[j]);
            }
        }
        components.push(v);
    }
    centered
        .iter()
        .map(|c| {
            let mut r = mean.clone();
            for v in &components {
                linalg::axpy(linalg::dot(c, v), v, &mut r);
            }
            r
        })
        .collect()
}

#[test]
fn criterion_8_oracle_equivalences() {
    criterion(
        8,
        "identity low-rank == PCA (1e-8), barycentre == grid minimizer, iso quantities match quadrature oracle (1e-3)",
        || {
            // Identity geometry reduces the tangent-space approximation to PCA.
            let mut rng = ChaCha8Rng::seed_from_u64(51);
            let points: Vec<Vec<f64>> = (0..20)
                .map(|_| {
                    let a = rng.sample::<f64, _>(StandardNormal);
                    let b = rng.sample::<f64, _>(StandardNormal);
                    let c = 0.05 * rng.sample::<f64, _>(StandardNormal);
                    vec![a + b, a - 0.5 * b, c]
                })
                .collect();
            let id = Identity { dim: 3 };
            let p = geometry::barycentre(&id, &points).unwrap();
            let res = tangent_rank_r(&id, &points, &p, 2, Variant::Plain, 100).unwrap();
            let pca = pca_reconstruct(&points, 2);
            for (a, b) in res.reconstructions.iter().zip(&pca) {
                assert!(dist(a, b) < 1e-8, "PCA mismatch {}", dist(a, b));
            }

            // Barycentre against a brute-force grid minimizer of the summed
            // squared distances under the quadratic geometry.
            let q = QuadraticShear;
            let cloud = vec![
                vec![0.3, 0.4],
                vec![-0.5, 0.2],
                vec![0.8, -0.3],
                vec![-0.1, 0.9],
            ];
            let bary = geometry::barycentre(&q, &cloud).unwrap();
            let step = 0.01;
            let mut best = (f64::INFINITY, vec![0.0, 0.0]);
            let mut gx = -2.0;
            while gx <= 2.0 {
                let mut gy = -2.0;
                while gy <= 2.0 {
                    let cand = vec![gx, gy];
                    let cost: f64 = cloud
                        .iter()
                        .map(|x| {
                            let d: f64 = geometry::distance(&q, &cand, x).unwrap();
                            d * d
                        })
                        .sum();
                    if cost < best.0 {
                        best = (cost, cand);
                    }
                    gy += step;
                }
                gx += step;
            }
            assert!(
                dist(&bary, &best.1) < 2.0 * step,
                "barycentre {bary:?} vs grid minimizer {:?}",
                best.1
            );

            // Quadrature oracle values for the quadratic geometry at M=1e4.
            let x = [0.0, 0.0];
            let y = [1.0, 1.0];
            let l: f64 = iso::iso_distance(&q, &x, &y, 10_000).unwrap();
            assert!((l - 1.478943).abs() < 1e-3, "arc length {l}");
            let v = iso::iso_log(&q, &x, &y, 10_000).unwrap();
            assert!(
                dist(&v, &[0.661404, 1.322808]) < 1e-3,
                "iso-log {v:?}"
            );
        },
    );
}

#[test]
fn criterion_9_m_matrix_identity() {
    criterion(
        9,
        "identity geometry with the identity transform yields M^i = I within 1e-6",
        || {
            let id = Identity { dim: 3 };
            let mut rng = ChaCha8Rng::seed_from_u64(61);
            let points: Vec<Vec<f64>> = (0..8).map(|_| randn(&mut rng, 3)).collect();
            let p = vec![0.0; 3];
            let diag = m_matrix_diagnostic(
                &id,
                &points,
                &p,
                Variant::Plain,
                100,
                analysis::M_MATRIX_FD_STEP,
            )
            .unwrap();
            for (i, dev) in diag.identity_deviations.iter().enumerate() {
                assert!(*dev < 1e-6, "M-matrix {i} deviates from identity by {dev}");
            }
        },
    );
}
