//! Subcommand implementations: thin orchestration over the library plus
//! serialization of the results.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use mslca::{
    fit_robust_mslca, if_bound, if_rho, if_scatter, if_t, null_model, s_estimate, sample,
    BlockStructure, Contamination, Dataset, Family, InfluenceContext, KappaMode, LossSpec,
    ModelSpec, SConfig, compute_constants, if_alpha, noncorrelation_test_with,
};

use crate::io::{
    emit_json, io_err, matrix_rows, read_csv_matrix, read_json, read_point_file, rows_to_matrix,
    write_csv_matrix, ModelFile,
};
use crate::{CliError, Command, FamilyArg, IfWhat, SimMode};

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Constants { dim, breakdown, out } => constants(dim, breakdown, out.as_deref()),
        Command::Generate { blocks, family, df, n, seed, contaminate, out } => {
            generate(blocks, family, df, n, seed, contaminate, &out)
        }
        Command::Estimate { input, breakdown, seed, subsamples, keep_best, out } => {
            estimate(&input, breakdown, seed, subsamples, keep_best, out.as_deref())
        }
        Command::Mslca { input, blocks, breakdown, seed, subsamples, keep_best, out } => {
            mslca_cmd(&input, blocks, breakdown, seed, subsamples, keep_best, out.as_deref())
        }
        Command::Influence { model, x, j, what, bound, out } => {
            influence_cmd(&model, x, j, what, bound, out.as_deref())
        }
        Command::Test { input, blocks, breakdown, seed, subsamples, keep_best, kappa_raw, out } => {
            test_cmd(&input, blocks, breakdown, seed, subsamples, keep_best, kappa_raw, out.as_deref())
        }
        Command::Simulate {
            mode,
            blocks,
            n,
            reps,
            seed,
            breakdown,
            subsamples,
            keep_best,
            threads,
            out,
        } => simulate(mode, blocks, n, reps, seed, breakdown, subsamples, keep_best, threads, &out),
    }
}

fn domain(stage: &'static str) -> impl Fn(mslca::Error) -> CliError {
    move |e| CliError::Domain(format!("{stage}: {e}"))
}

fn fit_config(subsamples: usize, keep_best: usize, seed: u64) -> SConfig {
    SConfig { n_subsamples: subsamples, keep_best, seed, ..SConfig::default() }
}

#[derive(Serialize)]
struct ConstantsOut {
    c: f64,
    b0: f64,
    gamma1: f64,
    gamma2: f64,
    beta3: f64,
}

fn constants(dim: usize, breakdown: f64, out: Option<&Path>) -> Result<(), CliError> {
    let spec = LossSpec::tune(dim, breakdown).map_err(domain("tune"))?;
    let k = compute_constants(&spec).map_err(domain("constants"))?;
    emit_json(
        out,
        &ConstantsOut {
            c: spec.cutoff(),
            b0: spec.b0(),
            gamma1: k.gamma1,
            gamma2: k.gamma2,
            beta3: k.beta3,
        },
    )
}

fn generate(
    blocks: Vec<usize>,
    family: FamilyArg,
    df: Option<f64>,
    n: usize,
    seed: u64,
    contaminate: Option<String>,
    out: &Path,
) -> Result<(), CliError> {
    let blocks = BlockStructure::new(blocks).map_err(domain("blocks"))?;
    let family = match (family, df) {
        (FamilyArg::Gaussian, None) => Family::Gaussian,
        (FamilyArg::Gaussian, Some(_)) => {
            return Err(CliError::Io("--df is only meaningful with --family student".into()))
        }
        (FamilyArg::Student, Some(df)) => Family::Student { df },
        (FamilyArg::Student, None) => {
            return Err(CliError::Io("--family student requires --df".into()))
        }
    };
    let contamination = match contaminate {
        None => None,
        Some(arg) => {
            let (eps, file) = arg
                .split_once(',')
                .ok_or_else(|| CliError::Io("--contaminate wants `eps,point-file`".into()))?;
            let epsilon: f64 = eps
                .trim()
                .parse()
                .map_err(|_| CliError::Io(format!("--contaminate: not a number: {eps:?}")))?;
            let point = read_point_file(Path::new(file.trim()))?;
            Some(Contamination::Point { epsilon, point: DVector::from_vec(point) })
        }
    };
    let model = match contamination {
        None => null_model(&blocks, family).map_err(domain("model"))?,
        Some(c) => {
            let q = blocks.q();
            ModelSpec::new(DMatrix::identity(q, q), blocks, family, Some(c))
                .map_err(domain("model"))?
        }
    };
    let data = sample(&model, n, seed).map_err(domain("sample"))?;
    write_csv_matrix(out, data.matrix())
}

#[derive(Serialize)]
struct EstimateOut {
    mu: Vec<f64>,
    v: Vec<Vec<f64>>,
    det: f64,
    iterations: usize,
    converged: bool,
    constraint_residual: f64,
}

fn estimate(
    input: &Path,
    breakdown: f64,
    seed: u64,
    subsamples: usize,
    keep_best: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let m = read_csv_matrix(input)?;
    let q = m.ncols();
    let blocks = BlockStructure::new(vec![q]).map_err(domain("blocks"))?;
    let data = Dataset::new(m, blocks).map_err(domain("ingest"))?;
    let spec = LossSpec::tune(q, breakdown).map_err(domain("tune"))?;
    let est = s_estimate(&data, &spec, &fit_config(subsamples, keep_best, seed))
        .map_err(domain("fit"))?;
    emit_json(
        out,
        &EstimateOut {
            mu: est.mu.iter().copied().collect(),
            v: matrix_rows(&est.v),
            det: est.det,
            iterations: est.iterations,
            converged: est.converged,
            constraint_residual: est.constraint_residual,
        },
    )
}

#[derive(Serialize)]
struct SolutionOut {
    phi: Vec<Vec<f64>>,
    t_matrix: Vec<Vec<f64>>,
    rho: Vec<f64>,
    /// Row j is the j-th eigenvector β.
    beta: Vec<Vec<f64>>,
    /// Row j is the j-th coefficient direction α.
    alpha: Vec<Vec<f64>>,
}

fn checked_blocks(blocks: Vec<usize>, ncols: usize) -> Result<BlockStructure, CliError> {
    let blocks = BlockStructure::new(blocks).map_err(domain("blocks"))?;
    if blocks.q() != ncols {
        return Err(CliError::Io(format!(
            "--blocks sums to {} but the data has {ncols} columns",
            blocks.q()
        )));
    }
    Ok(blocks)
}

fn mslca_cmd(
    input: &Path,
    blocks: Vec<usize>,
    breakdown: f64,
    seed: u64,
    subsamples: usize,
    keep_best: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let m = read_csv_matrix(input)?;
    let blocks = checked_blocks(blocks, m.ncols())?;
    let q = blocks.q();
    let data = Dataset::new(m, blocks).map_err(domain("ingest"))?;
    let spec = LossSpec::tune(q, breakdown).map_err(domain("tune"))?;
    let (_, sol) = fit_robust_mslca(&data, &spec, &fit_config(subsamples, keep_best, seed))
        .map_err(domain("fit"))?;
    emit_json(
        out,
        &SolutionOut {
            phi: matrix_rows(&sol.phi),
            t_matrix: matrix_rows(&sol.t_matrix),
            rho: sol.rho.iter().copied().collect(),
            beta: matrix_rows(&sol.beta.transpose()),
            alpha: matrix_rows(&sol.alpha.transpose()),
        },
    )
}

#[derive(Serialize)]
struct MatrixIfOut {
    what: &'static str,
    value: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ScalarIfOut {
    what: &'static str,
    j: usize,
    value: f64,
}

#[derive(Serialize)]
struct VectorIfOut {
    what: &'static str,
    j: usize,
    value: Vec<f64>,
}

#[derive(Serialize)]
struct BoundOut {
    bound: f64,
}

fn influence_cmd(
    model: &Path,
    x: Option<String>,
    j: usize,
    what: IfWhat,
    bound: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let file: ModelFile = read_json(model)?;
    let v = rows_to_matrix(&file.v)?;
    let blocks = BlockStructure::new(file.blocks).map_err(domain("model"))?;
    if v.nrows() != blocks.q() {
        return Err(CliError::Io(format!(
            "model: scatter is {}x{} but the blocks span {}",
            v.nrows(),
            v.ncols(),
            blocks.q()
        )));
    }
    let q = blocks.q();
    let spec = LossSpec::tune(q, file.breakdown).map_err(domain("tune"))?;
    let ctx = InfluenceContext::new(v, blocks, spec).map_err(domain("model"))?;

    if bound {
        return emit_json(out, &BoundOut { bound: if_bound(&ctx) });
    }
    let x = x.ok_or_else(|| CliError::Io("influence needs --x or --bound".into()))?;
    let coords: Vec<f64> = x
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Io(format!("--x: not a number: {tok:?}")))
        })
        .collect::<Result<_, _>>()?;
    if coords.len() != q {
        return Err(CliError::Io(format!("--x has {} coordinates, expected {q}", coords.len())));
    }
    let xv = DVector::from_vec(coords);

    match what {
        IfWhat::T => {
            let m = if_t(&xv, &ctx).map_err(domain("influence"))?;
            emit_json(out, &MatrixIfOut { what: "T", value: matrix_rows(&m) })
        }
        IfWhat::V => {
            let m = if_scatter(&xv, &ctx).map_err(domain("influence"))?;
            emit_json(out, &MatrixIfOut { what: "V", value: matrix_rows(&m) })
        }
        IfWhat::Rho => {
            let jj = one_based(j, q)?;
            let value = if_rho(&xv, jj, &ctx).map_err(domain("influence"))?;
            emit_json(out, &ScalarIfOut { what: "rho", j, value })
        }
        IfWhat::Alpha => {
            let jj = one_based(j, q)?;
            let a = if_alpha(&xv, jj, &ctx).map_err(domain("influence"))?;
            emit_json(out, &VectorIfOut { what: "alpha", j, value: a.iter().copied().collect() })
        }
    }
}

/// CLI component indices are 1-based; the library is 0-based.
fn one_based(j: usize, q: usize) -> Result<usize, CliError> {
    if j == 0 || j > q {
        return Err(CliError::Io(format!("--j must be in 1..={q} (1-based)")));
    }
    Ok(j - 1)
}

#[derive(Serialize)]
struct TestOut {
    statistic: f64,
    s_tilde: f64,
    kappa0_hat: f64,
    df: usize,
    p_value: f64,
    n: usize,
}

#[allow(clippy::too_many_arguments)]
fn test_cmd(
    input: &Path,
    blocks: Vec<usize>,
    breakdown: f64,
    seed: u64,
    subsamples: usize,
    keep_best: usize,
    kappa_raw: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let m = read_csv_matrix(input)?;
    let blocks = checked_blocks(blocks, m.ncols())?;
    let q = blocks.q();
    let data = Dataset::new(m, blocks).map_err(domain("ingest"))?;
    let spec = LossSpec::tune(q, breakdown).map_err(domain("tune"))?;
    let mode = if kappa_raw { KappaMode::RawMoment } else { KappaMode::Consistent };
    let r = noncorrelation_test_with(&data, &spec, &fit_config(subsamples, keep_best, seed), mode)
        .map_err(domain("test"))?;
    emit_json(
        out,
        &TestOut {
            statistic: r.statistic,
            s_tilde: r.s_tilde,
            kappa0_hat: r.kappa0_hat,
            df: r.df,
            p_value: r.p_value,
            n: r.n,
        },
    )
}

/// Distinct per-purpose streams from the master seed (splitmix64 over a
/// golden-ratio keyed counter).
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    mode: SimMode,
    blocks: Vec<usize>,
    n: usize,
    reps: usize,
    seed: u64,
    breakdown: f64,
    subsamples: usize,
    keep_best: usize,
    threads: Option<usize>,
    out: &PathBuf,
) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::Domain("simulate: at least one replicate is required".into()));
    }
    let blocks = BlockStructure::new(blocks).map_err(domain("blocks"))?;
    if blocks.k() < 2 {
        return Err(CliError::Domain("simulate: at least two blocks are required".into()));
    }
    let q = blocks.q();
    let mut v = DMatrix::identity(q, q);
    if let SimMode::Power = mode {
        // canonical correlation 0.8 between the first coordinates of the
        // first two blocks
        let (a, b) = (blocks.offset(0), blocks.offset(1));
        v[(a, b)] = 0.8;
        v[(b, a)] = 0.8;
    }
    let model = ModelSpec::new(v, blocks, Family::Gaussian, None).map_err(domain("model"))?;
    let spec = LossSpec::tune(q, breakdown).map_err(domain("tune"))?;

    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("MSLCA_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Io(format!("MSLCA_THREADS: not a number: {s:?}")))?,
            ),
            Err(_) => None,
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| io_err("thread pool", e))?;

    // Replicate r draws its data and fit seeds from disjoint counters, so
    // results are independent of scheduling and thread count.
    let outcomes: Vec<Result<(f64, f64), mslca::Error>> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let data = sample(&model, n, derive_seed(seed, 2 * r as u64))?;
                let config = fit_config(subsamples, keep_best, derive_seed(seed, 2 * r as u64 + 1));
                let result = noncorrelation_test_with(
                    &data,
                    &spec,
                    &config,
                    KappaMode::Consistent,
                )?;
                Ok((result.statistic, result.p_value))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(reps);
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let (stat, p) = outcome
            .map_err(|e| CliError::Domain(format!("simulate: replicate {}: {e}", r + 1)))?;
        rows.push((stat, p));
    }

    let mut writer =
        csv::Writer::from_path(out).map_err(|e| io_err(&format!("write {}", out.display()), e))?;
    writer
        .write_record(["replicate", "statistic", "p_value"])
        .map_err(|e| io_err("write: header", e))?;
    for (r, (stat, p)) in rows.iter().enumerate() {
        writer
            .write_record([(r + 1).to_string(), stat.to_string(), p.to_string()])
            .map_err(|e| io_err("write: row", e))?;
    }
    for level in [0.01, 0.05, 0.10] {
        let rate =
            rows.iter().filter(|(_, p)| *p <= level).count() as f64 / reps as f64;
        writer
            .write_record([format!("rejection_at_{level:.2}"), rate.to_string(), String::new()])
            .map_err(|e| io_err("write: summary", e))?;
    }
    writer.flush().map_err(|e| io_err("write: flush", e))
}
