//! Tangent-space rank-r approximation (plain and isometrized), the
//! evaluation metrics of the experiments, and the Gram-matrix diagnostic for
//! the low-rank approximation error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::Diffeomorphism;
use crate::error::{Error, Result};
use crate::geometry;
use crate::iso;
use crate::linalg::{self, Matrix, Svd};

/// Which family of mappings a rank-r approximation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Iso,
}

/// Result of a tangent-space rank-r approximation at a base point.
#[derive(Debug, Clone)]
pub struct RankRResult {
    pub variant: Variant,
    pub base: Vec<f64>,
    /// Tangent matrix with columns `log_p(x^i)` (or the iso-logs), `d x l`.
    pub tangent: Matrix<f64>,
    pub u: Matrix<f64>,
    pub sigma: Vec<f64>,
    pub v: Matrix<f64>,
    /// Rank-r truncated tangent vectors `xi = U_r S_r V_r^T`, `d x l`.
    pub xi: Matrix<f64>,
    /// Reconstructions `exp_p(xi^i)` (or iso-exps), one per data column.
    pub reconstructions: Vec<Vec<f64>>,
    pub rank: usize,
}

/// Run per-column closures in parallel, collecting either the results in
/// index order or the indices of every failing column.
fn per_column<T: Send>(
    count: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
    message: &str,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..count).into_par_iter().map(f).collect();
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_err())
        .map(|(i, _)| i)
        .collect();
    if !failed.is_empty() {
        let first = results
            .into_iter()
            .find_map(|r| r.err())
            .expect("at least one error");
        return Err(Error::Columns {
            indices: failed,
            message: format!("{message}: {first}"),
        });
    }
    results.into_iter().map(|r| Ok(r.unwrap())).collect()
}

/// Tangent-space rank-r approximation: map the data into the tangent space at
/// `p`, truncate with an SVD, and map back.
pub fn tangent_rank_r<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    data: &[Vec<f64>],
    p: &[f64],
    rank: usize,
    variant: Variant,
    resolution: usize,
) -> Result<RankRResult> {
    let l = data.len();
    assert!(l >= 1, "rank-r approximation needs data");
    let dim = p.len();
    assert!(
        (1..=dim.min(l)).contains(&rank),
        "rank must satisfy 1 <= r <= min(d, l)"
    );

    let logs = per_column(
        l,
        |i| match variant {
            Variant::Plain => geometry::log(d, p, &data[i]),
            Variant::Iso => iso::iso_log(d, p, &data[i], resolution),
        },
        "tangent log failed",
    )?;
    let tangent = Matrix::from_columns(&logs)?;
    let svd = linalg::svd(&tangent)?;
    let xi = svd.truncated(rank);
    let reconstructions = per_column(
        l,
        |i| match variant {
            Variant::Plain => geometry::exp(d, p, xi.column(i)),
            Variant::Iso => Ok(iso::iso_exp(d, p, xi.column(i), resolution)?.0),
        },
        "reconstruction exp failed",
    )?;
    let Svd { u, sigma, v } = svd;
    Ok(RankRResult {
        variant,
        base: p.to_vec(),
        tangent,
        u,
        sigma,
        v,
        xi,
        reconstructions,
        rank,
    })
}

/// Relative reconstruction RMSE:
/// `sqrt(sum ||x^i - recon^i||^2 / sum ||x^i - p||^2)`.
pub fn low_rank_rel_rmse(
    data: &[Vec<f64>],
    reconstructions: &[Vec<f64>],
    p: &[f64],
) -> Result<f64> {
    assert_eq!(data.len(), reconstructions.len());
    let num: f64 = data
        .iter()
        .zip(reconstructions)
        .map(|(x, r)| linalg::dist(x, r).powi(2))
        .sum();
    let den: f64 = data.iter().map(|x| linalg::dist(x, p).powi(2)).sum();
    if den <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok((num / den).sqrt())
}

/// Per-point squared discrepancy between the plain and iso geodesics from `p`
/// to `x`, averaged over `m + 1` uniform parameters. Reuses one geodesic
/// discretization per point.
fn geodesic_discrepancy_sq<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    p: &[f64],
    x: &[f64],
    m: usize,
    resolution: usize,
) -> Result<f64> {
    let g = iso::discretize_geodesic(d, p, x, resolution)?;
    let mut acc = 0.0;
    for k in 0..=m {
        let t = k as f64 / m as f64;
        let plain = g.eval(d, t)?;
        let iso_pt = g.eval(d, g.time_change(t))?;
        acc += linalg::dist(&plain, &iso_pt).powi(2);
    }
    Ok(acc / (m + 1) as f64)
}

/// Relative RMS discrepancy between plain and iso geodesics from `p` to each
/// data point, sampled at `m + 1` uniform parameters and normalized by the
/// RMS `l2` distance to `p`. Zero exactly when geodesics already have
/// constant speed.
pub fn geodesic_rel_rmse<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    data: &[Vec<f64>],
    p: &[f64],
    m: usize,
    resolution: usize,
) -> Result<f64> {
    assert!(m >= 1);
    let sq = per_column(
        data.len(),
        |i| geodesic_discrepancy_sq(d, p, &data[i], m, resolution),
        "geodesic sampling failed",
    )?;
    let num: f64 = sq.iter().sum();
    let den: f64 = data.iter().map(|x| linalg::dist(x, p).powi(2)).sum();
    if den <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok((num / den).sqrt())
}

/// The two diagnostic point clouds, one `(distance to base, value)` pair per
/// data point:
/// cloud 1 pairs the distance with the per-point plain-vs-iso geodesic RMS
/// discrepancy, cloud 2 with the difference between plain and iso
/// reconstruction errors (positive when iso reconstructs better).
pub fn error_point_clouds<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    data: &[Vec<f64>],
    p: &[f64],
    plain: &RankRResult,
    iso_result: &RankRResult,
    m: usize,
    resolution: usize,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    assert_eq!(plain.variant, Variant::Plain);
    assert_eq!(iso_result.variant, Variant::Iso);
    assert_eq!(plain.reconstructions.len(), data.len());
    assert_eq!(iso_result.reconstructions.len(), data.len());
    let geo = per_column(
        data.len(),
        |i| {
            Ok(geodesic_discrepancy_sq(d, p, &data[i], m, resolution)?.sqrt())
        },
        "geodesic sampling failed",
    )?;
    let cloud1 = data
        .iter()
        .zip(&geo)
        .map(|(x, &g)| (linalg::dist(x, p), g))
        .collect();
    let cloud2 = data
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let ep = linalg::dist(x, &plain.reconstructions[i]);
            let ei = linalg::dist(x, &iso_result.reconstructions[i]);
            (linalg::dist(x, p), ep - ei)
        })
        .collect();
    Ok((cloud1, cloud2))
}

/// Per-point Gram matrices of the finite-difference differential of
/// `w -> exp_p(rho_p(w))`, with deviation-from-identity norms.
#[derive(Debug, Clone)]
pub struct MMatrixDiagnostic {
    pub matrices: Vec<Matrix<f64>>,
    pub identity_deviations: Vec<f64>,
}

pub const M_MATRIX_FD_STEP: f64 = 1e-4;

/// Gram-matrix diagnostic of the low-rank approximation error: for each data
/// point, evaluate the central-difference Jacobian of `F = exp_p . rho_p` at
/// `w^i = rho_p^{-1}(log_p x^i)` and form `M^i = J^T J`.
pub fn m_matrix_diagnostic<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    data: &[Vec<f64>],
    p: &[f64],
    variant: Variant,
    resolution: usize,
    fd_step: f64,
) -> Result<MMatrixDiagnostic> {
    assert!(fd_step > 0.0);
    let dim = p.len();
    let eval_f = |w: &[f64]| -> Result<Vec<f64>> {
        let rho_w = match variant {
            Variant::Plain => iso::rho_id(w),
            Variant::Iso => iso::rho_iso(d, p, w, resolution)?,
        };
        geometry::exp(d, p, &rho_w)
    };
    let matrices = per_column(
        data.len(),
        |i| -> Result<Matrix<f64>> {
            let lg = geometry::log(d, p, &data[i])?;
            let w = match variant {
                Variant::Plain => iso::rho_id_inverse(&lg),
                Variant::Iso => iso::iso_log(d, p, &data[i], resolution)?,
            };
            // central-difference Jacobian columns J e_j
            let mut jac = Matrix::zeros(dim, dim);
            for j in 0..dim {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += fd_step;
                wm[j] -= fd_step;
                let fp = eval_f(&wp)?;
                let fm = eval_f(&wm)?;
                for r in 0..dim {
                    jac.set(r, j, (fp[r] - fm[r]) / (2.0 * fd_step));
                }
            }
            Ok(jac.transpose().matmul(&jac))
        },
        "M-matrix finite differences failed",
    )?;
    let identity_deviations = matrices
        .iter()
        .map(|m| {
            let mut dev = m.clone();
            for j in 0..dim {
                dev.set(j, j, dev.get(j, j) - 1.0);
            }
            dev.frobenius_norm()
        })
        .collect();
    Ok(MMatrixDiagnostic {
        matrices,
        identity_deviations,
    })
}

/// Full evaluation metrics for one base point and data set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rank: usize,
    /// Geodesic sampling density `m`.
    pub m: usize,
    /// Geodesic discretization resolution `M`.
    pub resolution: usize,
    pub count: usize,
    pub rel_rmse_plain: f64,
    pub rel_rmse_iso: f64,
    pub geodesic_rel_rmse: f64,
    /// `(distance to base, geodesic RMS discrepancy)` per point.
    pub cloud_geodesic: Vec<(f64, f64)>,
    /// `(distance to base, plain error - iso error)` per point.
    pub cloud_reconstruction: Vec<(f64, f64)>,
}

/// Compute every evaluation metric in one pass: both rank-r variants, the
/// geodesic rel-RMSE and the two point clouds.
pub fn compute_metrics<D: Diffeomorphism<f64> + ?Sized>(
    d: &D,
    data: &[Vec<f64>],
    p: &[f64],
    rank: usize,
    m: usize,
    resolution: usize,
) -> Result<MetricsReport> {
    let plain = tangent_rank_r(d, data, p, rank, Variant::Plain, resolution)?;
    let iso_result = tangent_rank_r(d, data, p, rank, Variant::Iso, resolution)?;
    let rel_rmse_plain = low_rank_rel_rmse(data, &plain.reconstructions, p)?;
    let rel_rmse_iso = low_rank_rel_rmse(data, &iso_result.reconstructions, p)?;
    let geo = geodesic_rel_rmse(d, data, p, m, resolution)?;
    let (cloud_geodesic, cloud_reconstruction) =
        error_point_clouds(d, data, p, &plain, &iso_result, m, resolution)?;
    Ok(MetricsReport {
        rank,
        m,
        resolution,
        count: data.len(),
        rel_rmse_plain,
        rel_rmse_iso,
        geodesic_rel_rmse: geo,
        cloud_geodesic,
        cloud_reconstruction,
    })
}

/// Write a point cloud as CSV with header `dist_to_barycentre,value`.
pub fn write_cloud_csv(path: &std::path::Path, cloud: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dist_to_barycentre", "value"])?;
    for (a, b) in cloud {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
