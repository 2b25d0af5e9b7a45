//! The `generate`, `run` and `eval` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use spsu_core::metrics::{argmax_columns, evaluate, summarize_clusters};
use spsu_core::model::eval_smooth;
use spsu_core::synth::synthesize_scene;
use spsu_core::{
    extract_patches, initialize, solve, FactorState, Matrix, PanchromaticImage, ProblemSpec,
    Ranks, SolverConfig, SyntheticSceneSpec, Variant, Weights,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{quantize, read_matrix, write_matrix, write_pgm};

pub const CUBE: &str = "cube.spsu";
pub const PAN: &str = "pan.spsu";
pub const ENDMEMBERS: &str = "endmembers.spsu";
pub const ABUNDANCES: &str = "abundances.spsu";
pub const LABELS: &str = "labels.spsu";
pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.csv";
pub const EVAL: &str = "eval.csv";

/// Seeds to process. A single seed reads and writes directly in the given
/// directories; a range uses one `seed-N` subdirectory per seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Seeds {
    Single(u64),
    Range(Vec<u64>),
}

impl Seeds {
    /// Parses `N..M` (end excluded) or `N..=M` (end included).
    pub fn parse_range(text: &str) -> CliResult<Seeds> {
        let bad = || CliError::usage(format!("seed range `{text}` is not N..M or N..=M"));
        let (start, end, inclusive) = if let Some((a, b)) = text.split_once("..=") {
            (a, b, true)
        } else if let Some((a, b)) = text.split_once("..") {
            (a, b, false)
        } else {
            return Err(bad());
        };
        let start: u64 = start.trim().parse().map_err(|_| bad())?;
        let end: u64 = end.trim().parse().map_err(|_| bad())?;
        let seeds: Vec<u64> = if inclusive {
            (start..=end).collect()
        } else {
            (start..end).collect()
        };
        if seeds.is_empty() {
            return Err(CliError::usage(format!("seed range `{text}` is empty")));
        }
        Ok(Seeds::Range(seeds))
    }

    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Single(s) => vec![*s],
            Seeds::Range(v) => v.clone(),
        }
    }

    pub fn dir(&self, root: &Path, seed: u64) -> PathBuf {
        match self {
            Seeds::Single(_) => root.to_path_buf(),
            Seeds::Range(_) => root.join(seed_dir_name(seed)),
        }
    }
}

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("SPSU_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("SPSU_THREADS must be a positive integer, got `{value}`")))?;
        if n == 0 {
            return Err(CliError::usage("SPSU_THREADS must be a positive integer, got `0`"));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker threads: {e}")))
}

fn labels_matrix(labels: &[usize], height: usize, width: usize) -> Matrix {
    Matrix::from_shape_fn((height, width), |(r, c)| labels[r * width + c] as f64)
}

/// Writes one synthetic scene per seed.
pub fn cmd_generate(cfg: &RunConfig, out: &Path, seeds: &Seeds) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for seed in seeds.list() {
        let dir = seeds.dir(out, seed);
        create_dir(&dir)?;
        let mut spec = SyntheticSceneSpec::standard(
            cfg.height,
            cfg.width,
            cfg.regions,
            cfg.bands,
            cfg.r1,
            cfg.psi_mix,
            seed,
        )?;
        if let Some(path) = &cfg.endmember_file {
            let m = read_matrix(path)?;
            if m.dim() != (cfg.bands, cfg.r1) {
                return Err(CliError::data(format!(
                    "{}: expected {} x {} endmembers, found {} x {}",
                    path.display(),
                    cfg.bands,
                    cfg.r1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            spec.endmembers = m;
        }
        spec.potts_beta = cfg.potts_beta;
        spec.potts_sweeps = cfg.potts_sweeps;
        let scene = synthesize_scene(&spec)?;

        let pan = Matrix::from_shape_vec((cfg.height, cfg.width), scene.pan.values.clone())
            .expect("pan has height x width values");
        write_matrix(&dir.join(CUBE), &scene.cube.data)?;
        write_matrix(&dir.join(PAN), &pan)?;
        write_matrix(&dir.join(ENDMEMBERS), &spec.endmembers)?;
        write_matrix(&dir.join(ABUNDANCES), &scene.abundances)?;
        write_matrix(&dir.join(LABELS), &labels_matrix(&scene.labels, cfg.height, cfg.width))?;
        write_pgm(&dir.join("pan.pgm"), cfg.width, cfg.height, &quantize(&scene.pan.values).0)?;
        let labels: Vec<f64> = scene.labels.iter().map(|&l| l as f64).collect();
        write_pgm(&dir.join("labels.pgm"), cfg.width, cfg.height, &quantize(&labels).0)?;
        let mut snapshot = cfg.clone();
        snapshot.seed = seed;
        write_text(&dir.join("scene.cfg"), &snapshot.to_text())?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Input data of one run.
pub struct SceneData {
    pub y: Matrix,
    pub pan: PanchromaticImage,
    pub truth: Option<(Matrix, Matrix)>,
}

pub fn load_scene(dir: &Path) -> CliResult<SceneData> {
    let y = read_matrix(&dir.join(CUBE))?;
    let pan = read_matrix(&dir.join(PAN))?;
    if pan.len() != y.ncols() {
        return Err(CliError::data(format!(
            "{}: panchromatic image has {} pixels, cube has {}",
            dir.display(),
            pan.len(),
            y.ncols()
        )));
    }
    let (height, width) = pan.dim();
    let pan = PanchromaticImage {
        height,
        width,
        values: pan.iter().copied().collect(),
    };
    let truth = if dir.join(ENDMEMBERS).exists() && dir.join(ABUNDANCES).exists() {
        Some((read_matrix(&dir.join(ENDMEMBERS))?, read_matrix(&dir.join(ABUNDANCES))?))
    } else {
        None
    };
    Ok(SceneData { y, pan, truth })
}

/// Metrics of one seed. `asam` and `rmse` need ground truth in the data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub re: f64,
    pub asam: Option<f64>,
    pub rmse: Option<f64>,
    /// Matched estimate index for each reference endmember.
    pub permutation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SeedRow>,
    pub aggregate: Aggregate,
    /// Per seed, per PGM file: the `[min, max]` values mapped to 0 and 255.
    pub map_scales: BTreeMap<String, BTreeMap<String, [f64; 2]>>,
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn aggregate(rows: &[SeedRow]) -> Aggregate {
    let mut columns: Vec<(&str, Vec<f64>)> = vec![
        ("iterations", rows.iter().map(|r| r.iterations as f64).collect()),
        ("final_objective", rows.iter().map(|r| r.final_objective).collect()),
        ("re", rows.iter().map(|r| r.re).collect()),
    ];
    if rows.iter().all(|r| r.asam.is_some()) {
        columns.push(("asam", rows.iter().filter_map(|r| r.asam).collect()));
        columns.push(("rmse", rows.iter().filter_map(|r| r.rmse).collect()));
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (name, values) in columns {
        let (m, s) = mean_std(&values);
        mean.insert(name.to_string(), m);
        std.insert(name.to_string(), s);
    }
    Aggregate { mean, std }
}

/// Everything a single-seed run produces.
pub struct RunOutcome {
    pub row: SeedRow,
    pub state: FactorState,
    pub trace: Vec<f64>,
    pub wall_time: Duration,
    pub map_scales: BTreeMap<String, [f64; 2]>,
}

/// Initializes and solves one problem; wall time covers both.
pub fn run_seed(cfg: &RunConfig, data: &SceneData, seed: u64) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let s = if cfg.method.uses_spatial() {
        Some(extract_patches(&data.pan, cfg.patch)?)
    } else {
        None
    };
    let weights = Weights::renormalized(
        cfg.lambda0,
        cfg.lambda1,
        cfg.lambda2,
        cfg.lambda_z,
        &data.y,
        s.as_ref(),
    );
    let spec = ProblemSpec::new(
        data.y.clone(),
        s,
        Ranks::new(cfg.r1, cfg.r2, cfg.k),
        weights,
        cfg.method,
        cfg.constraint,
    )?;
    let solver = SolverConfig {
        alpha: cfg.alpha,
        rel_tol: cfg.rel_tol,
        max_iters: cfg.max_iters,
        trace_every: cfg.trace_every,
        seed,
    };
    solver.validate()?;
    let st0 = initialize(&spec, seed)?;
    let (state, trace, iterations, converged) = if cfg.method == Variant::Fcls {
        let f = eval_smooth(&spec, &st0)?;
        (st0, vec![f], 0, true)
    } else {
        let result = solve(&spec, &st0, &solver)?;
        (result.state, result.objective_trace, result.iterations, result.converged)
    };
    let wall_time = start.elapsed();

    let (asam, rmse, permutation) = match &data.truth {
        Some((m_ref, a_ref)) => {
            let report = evaluate(&data.y, m_ref, a_ref, &state.m, &state.a, wall_time)?;
            (Some(report.asam), Some(report.rmse), Some(report.permutation))
        }
        None => (None, None, None),
    };
    let re = spsu_core::reconstruction_error(&data.y, &state.m, &state.a)?;
    Ok(RunOutcome {
        row: SeedRow {
            seed,
            iterations,
            converged,
            final_objective: *trace.last().expect("trace is non-empty"),
            re,
            asam,
            rmse,
            permutation,
        },
        state,
        trace,
        wall_time,
        map_scales: BTreeMap::new(),
    })
}

fn write_map(
    dir: &Path,
    name: &str,
    width: usize,
    height: usize,
    values: &[f64],
    scales: &mut BTreeMap<String, [f64; 2]>,
) -> CliResult<()> {
    let (bytes, (lo, hi)) = quantize(values);
    write_pgm(&dir.join(name), width, height, &bytes)?;
    scales.insert(name.to_string(), [lo, hi]);
    Ok(())
}

fn write_outcome(dir: &Path, cfg: &RunConfig, pan: &PanchromaticImage, out: &mut RunOutcome) -> CliResult<()> {
    create_dir(dir)?;
    let st = &out.state;
    for (name, block) in [
        ("M", &st.m),
        ("A", &st.a),
        ("D", &st.d),
        ("U", &st.u),
        ("B", &st.b),
        ("Z", &st.z),
    ] {
        if !block.is_empty() {
            write_matrix(&dir.join(format!("{name}.spsu")), block)?;
        }
    }
    let trace: String = std::iter::once("iteration,objective\n".to_string())
        .chain(out.trace.iter().enumerate().map(|(i, f)| format!("{i},{f}\n")))
        .collect();
    write_text(&dir.join("objective_trace.csv"), &trace)?;

    let (h, w) = (pan.height, pan.width);
    let mut scales = BTreeMap::new();
    for (r, row) in st.a.rows().into_iter().enumerate() {
        let values: Vec<f64> = row.to_vec();
        write_map(dir, &format!("abundance-{r}.pgm"), w, h, &values, &mut scales)?;
    }

    if cfg.method.uses_clustering() {
        let labels: Vec<f64> = argmax_columns(&st.z).iter().map(|&l| l as f64).collect();
        write_map(dir, "clusters.pgm", w, h, &labels, &mut scales)?;
        let clusters = summarize_clusters(st)?;
        let mut table = String::from("rank,cluster,population\n");
        let mut spectra = Matrix::zeros((st.m.nrows(), clusters.len()));
        for (rank, c) in clusters.iter().enumerate() {
            table.push_str(&format!("{rank},{},{}\n", c.index, c.population));
            for (b, v) in c.spectral.iter().enumerate() {
                spectra[[b, rank]] = *v;
            }
            if let Some(spatial) = &c.spatial {
                if spatial.len() == cfg.patch * cfg.patch {
                    let name = format!("cluster-{rank}-spatial.pgm");
                    write_map(dir, &name, cfg.patch, cfg.patch, spatial, &mut scales)?;
                }
            }
        }
        write_text(&dir.join("clusters.csv"), &table)?;
        write_matrix(&dir.join("cluster-spectra.spsu"), &spectra)?;
    }
    out.map_scales = scales;
    Ok(())
}

/// Runs the configured method on every seed's data and writes results and
/// the manifest. Wall times go to a separate `timing.csv` so that all other
/// outputs are reproducible byte for byte.
pub fn cmd_run(cfg: &RunConfig, data: &Path, out: &Path, seeds: &Seeds) -> CliResult<RunManifest> {
    create_dir(out)?;
    let list = seeds.list();
    let pool = thread_pool()?;
    let outcomes: Vec<CliResult<(u64, RunOutcome)>> = pool.install(|| {
        list.par_iter()
            .map(|&seed| {
                let scene = load_scene(&seeds.dir(data, seed))?;
                let mut outcome = run_seed(cfg, &scene, seed)?;
                write_outcome(&seeds.dir(out, seed), cfg, &scene.pan, &mut outcome)?;
                Ok((seed, outcome))
            })
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut timing = String::from("seed,wall_time_s\n");
    let mut rows = Vec::new();
    let mut map_scales = BTreeMap::new();
    for (seed, outcome) in outcomes {
        timing.push_str(&format!("{seed},{}\n", outcome.wall_time.as_secs_f64()));
        map_scales.insert(seed.to_string(), outcome.map_scales);
        rows.push(outcome.row);
    }
    let mut config_snapshot: BTreeMap<String, String> = cfg.pairs().into_iter().collect();
    config_snapshot.remove("seed");
    let manifest = RunManifest {
        config: config_snapshot,
        seeds: list,
        aggregate: aggregate(&rows),
        rows,
        map_scales,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::data(format!("cannot serialize manifest: {e}")))?;
    write_text(&out.join(MANIFEST), &(json + "\n"))?;
    write_text(&out.join(TIMING), &timing)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub seed: Option<u64>,
    pub asam: f64,
    pub re: f64,
    pub rmse: f64,
    pub time: Option<f64>,
}

fn read_timing(result: &Path) -> BTreeMap<u64, f64> {
    let Ok(text) = fs::read_to_string(result.join(TIMING)) else {
        return BTreeMap::new();
    };
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let (s, t) = l.split_once(',')?;
            Some((s.trim().parse().ok()?, t.trim().parse().ok()?))
        })
        .collect()
}

/// Seed subdirectories `seed-N` of `dir`, sorted by seed.
pub fn seed_subdirs(dir: &Path) -> CliResult<Vec<u64>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut seeds: Vec<u64> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed-")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    Ok(seeds)
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Scores the estimates in `result` against the ground truth in `truth`.
/// Writes `eval.csv` into `result`: one row per seed, then `mean` and `std`.
pub fn cmd_eval(truth: &Path, result: &Path) -> CliResult<Vec<EvalRow>> {
    let subdirs = seed_subdirs(result)?;
    let pairs: Vec<(Option<u64>, PathBuf, PathBuf)> = if subdirs.is_empty() {
        vec![(None, truth.to_path_buf(), result.to_path_buf())]
    } else {
        subdirs
            .iter()
            .map(|&s| {
                let name = seed_dir_name(s);
                (Some(s), truth.join(&name), result.join(&name))
            })
            .collect()
    };
    let timing = read_timing(result);
    let mut rows = Vec::new();
    for (seed, tdir, rdir) in pairs {
        let y = read_matrix(&tdir.join(CUBE))?;
        let m_ref = read_matrix(&tdir.join(ENDMEMBERS))?;
        let a_ref = read_matrix(&tdir.join(ABUNDANCES))?;
        let m = read_matrix(&rdir.join("M.spsu"))?;
        let a = read_matrix(&rdir.join("A.spsu"))?;
        let report = evaluate(&y, &m_ref, &a_ref, &m, &a, Duration::ZERO)
            .map_err(|e| CliError::from(e).context(&rdir))?;
        let time = match seed {
            Some(s) => timing.get(&s).copied(),
            None => timing.values().next().copied(),
        };
        rows.push(EvalRow {
            seed,
            asam: report.asam,
            re: report.re,
            rmse: report.rmse,
            time,
        });
    }

    let mut csv = String::from("seed,asam,re,rmse,time_s\n");
    for r in &rows {
        let seed = r.seed.map_or_else(String::new, |s| s.to_string());
        csv.push_str(&format!("{seed},{},{},{},{}\n", r.asam, r.re, r.rmse, format_opt(r.time)));
    }
    let column = |f: fn(&EvalRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    let (asam, re, rmse) = (column(|r| r.asam), column(|r| r.re), column(|r| r.rmse));
    let times: Option<Vec<f64>> = rows.iter().map(|r| r.time).collect();
    let time = times.map(|t| mean_std(&t));
    csv.push_str(&format!(
        "mean,{},{},{},{}\n",
        asam.0,
        re.0,
        rmse.0,
        format_opt(time.map(|t| t.0))
    ));
    csv.push_str(&format!(
        "std,{},{},{},{}\n",
        asam.1,
        re.1,
        rmse.1,
        format_opt(time.map(|t| t.1))
    ));
    write_text(&result.join(EVAL), &csv)?;
    Ok(rows)
}
