//! Convergence studies: run one manufactured problem over a refinement
//! family in a chosen solver mode, collect absolute L²/H¹ errors per mesh,
//! fit log-log slopes, and emit CSV files and SVG plots. CSV bytes are
//! deterministic for fixed seeds when runtimes are suppressed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::geometry::families::{
    generate_mesh, HtmParams, MeshFamily, RdqmParams, VmParams,
};
use crate::geometry::mesh::Mesh;
use crate::io::load_model;
use crate::problems::{test1, test2, test3, ProblemSpec};
use crate::solver::{
    navem_errors, solve_navem, solve_navem_newton, BasisMode, ModelSet, SolverContext,
};
use crate::vem::{solve_vem, solve_vem_newton, vem_errors};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    Test1,
    Test2,
    Test3,
}

impl ProblemId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "test1" => Ok(ProblemId::Test1),
            "test2" => Ok(ProblemId::Test2),
            "test3" => Ok(ProblemId::Test3),
            _ => Err(Error::Format(format!(
                "unknown problem {s:?}; expected test1, test2 or test3"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ProblemId::Test1 => "test1",
            ProblemId::Test2 => "test2",
            ProblemId::Test3 => "test3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Vem,
    NavemOracle,
    Navem,
}

impl SolveMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vem" => Ok(SolveMode::Vem),
            "navem-oracle" => Ok(SolveMode::NavemOracle),
            "navem" => Ok(SolveMode::Navem),
            _ => Err(Error::Format(format!(
                "unknown mode {s:?}; expected vem, navem or navem-oracle"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SolveMode::Vem => "vem",
            SolveMode::NavemOracle => "navem-oracle",
            SolveMode::Navem => "navem",
        }
    }
}

/// A refinement family: the level index scales the base resolution. Quad
/// and triangle grids double n per level; Voronoi quadruples the seed count
/// so h still halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyConfig {
    Rdqm { base_n: usize, distortion: f64 },
    Vm { base_seeds: usize, lloyd: usize },
    Htm { base_n: usize, edge_probability: f64, max_hanging: usize },
}

impl FamilyConfig {
    pub fn label(&self) -> &'static str {
        match self {
            FamilyConfig::Rdqm { .. } => "rdqm",
            FamilyConfig::Vm { .. } => "vm",
            FamilyConfig::Htm { .. } => "htm",
        }
    }

    pub fn at_level(&self, level: usize) -> MeshFamily {
        match *self {
            FamilyConfig::Rdqm { base_n, distortion } => MeshFamily::Rdqm(RdqmParams {
                n: base_n << level,
                distortion,
            }),
            FamilyConfig::Vm { base_seeds, lloyd } => MeshFamily::Vm(VmParams {
                seeds: base_seeds << (2 * level),
                lloyd_iterations: lloyd,
            }),
            FamilyConfig::Htm {
                base_n,
                edge_probability,
                max_hanging,
            } => MeshFamily::Htm(HtmParams {
                n: base_n << level,
                edge_probability,
                max_hanging,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    /// Diffusion parameter of the nonlinear problem; ignored elsewhere.
    pub lambda: f64,
    pub family: FamilyConfig,
    pub refinements: usize,
    pub mode: SolveMode,
    /// Model files for network mode, one per polygon class.
    pub models: Vec<PathBuf>,
    pub seed: u64,
    /// When false the runtime column is written as zero so CSV bytes are
    /// reproducible.
    pub include_runtime: bool,
}

impl ExperimentConfig {
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        match self.problem {
            ProblemId::Test1 => Ok(test1()),
            ProblemId::Test2 => Ok(test2()),
            ProblemId::Test3 => {
                if !self.lambda.is_finite() || self.lambda <= 0.0 {
                    return Err(Error::Format(format!(
                        "lambda must be positive, got {}",
                        self.lambda
                    )));
                }
                Ok(test3(self.lambda))
            }
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}",
            self.problem.label(),
            self.family.label(),
            self.mode.label()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    pub err0: f64,
    pub err1: f64,
    pub dofs: usize,
    pub runtime: f64,
    pub newton_iters: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub label: String,
    pub rows: Vec<StudyRow>,
    pub slope0: f64,
    pub slope1: f64,
}

/// Least-squares slope of log(err) against log(h).
pub fn fit_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    assert!(hs.len() >= 2, "a slope needs at least two meshes");
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn load_model_set(paths: &[PathBuf]) -> Result<ModelSet> {
    let mut set = ModelSet::new();
    for p in paths {
        let (pair, _meta) = load_model(p)?;
        set.insert(pair);
    }
    Ok(set)
}

fn solve_on_mesh(
    mesh: &Mesh,
    problem: &ProblemSpec,
    cfg: &ExperimentConfig,
    ctx: Option<&SolverContext>,
    models: Option<&ModelSet>,
) -> Result<(f64, f64, Option<usize>)> {
    let nonlinear = problem.nonlinear.is_some();
    match cfg.mode {
        SolveMode::Vem => {
            if nonlinear {
                let sol = solve_vem_newton(mesh, problem)?;
                let (e0, e1) = vem_errors(mesh, &sol.dofs, problem)?;
                Ok((e0, e1, Some(sol.iterations)))
            } else {
                let dofs = solve_vem(mesh, problem)?;
                let (e0, e1) = vem_errors(mesh, &dofs, problem)?;
                Ok((e0, e1, None))
            }
        }
        SolveMode::NavemOracle | SolveMode::Navem => {
            let ctx = ctx.ok_or(Error::UnsupportedVariant(
                "NAVEM modes need an approximation-space context",
            ))?;
            let mode = match cfg.mode {
                SolveMode::NavemOracle => BasisMode::Oracle,
                _ => BasisMode::Network(models.ok_or(Error::UnsupportedVariant(
                    "network mode needs trained models",
                ))?),
            };
            if nonlinear {
                let sol = solve_navem_newton(mesh, problem, mode, ctx, 100)?;
                let (e0, e1) = navem_errors(mesh, &sol.dofs, problem, mode, ctx)?;
                Ok((e0, e1, Some(sol.iterations)))
            } else {
                let dofs = solve_navem(mesh, problem, mode, ctx)?;
                let (e0, e1) = navem_errors(mesh, &dofs, problem, mode, ctx)?;
                Ok((e0, e1, None))
            }
        }
    }
}

/// Run the configured family bottom-up. Meshes are seeded per level so the
/// whole study is reproducible from one seed.
pub fn run_convergence_study(
    cfg: &ExperimentConfig,
    ctx: Option<&SolverContext>,
) -> Result<StudyResult> {
    if cfg.refinements < 2 {
        return Err(Error::Format(
            "a convergence study needs at least two refinement levels".into(),
        ));
    }
    let problem = cfg.problem_spec()?;
    let models = if cfg.mode == SolveMode::Navem {
        Some(load_model_set(&cfg.models)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(cfg.refinements);
    for level in 0..cfg.refinements {
        let mesh = generate_mesh(&cfg.family.at_level(level), cfg.seed + level as u64)?;
        let start = Instant::now();
        let (err0, err1, newton_iters) =
            solve_on_mesh(&mesh, &problem, cfg, ctx, models.as_ref())?;
        let runtime = if cfg.include_runtime {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        rows.push(StudyRow {
            h: mesh.h(),
            err0,
            err1,
            dofs: mesh.n_vertices(),
            runtime,
            newton_iters,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let slope0 = fit_slope(&hs, &rows.iter().map(|r| r.err0).collect::<Vec<_>>());
    let slope1 = fit_slope(&hs, &rows.iter().map(|r| r.err1).collect::<Vec<_>>());
    Ok(StudyResult {
        label: cfg.label(),
        rows,
        slope0,
        slope1,
    })
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Fixed column order; the trailing `slopes` row repeats the fitted rates
/// so a CSV file is self-contained.
pub fn study_csv(result: &StudyResult) -> String {
    let newton = result.rows.iter().any(|r| r.newton_iters.is_some());
    let mut out = String::from("h,err0,err1,dofs,runtime");
    if newton {
        out.push_str(",newton_iters");
    }
    out.push('\n');
    for r in &result.rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt(r.h),
            fmt(r.err0),
            fmt(r.err1),
            r.dofs,
            fmt(r.runtime)
        );
        if newton {
            let _ = write!(out, ",{}", r.newton_iters.unwrap_or(0));
        }
        out.push('\n');
    }
    let _ = write!(out, "slopes,{},{},,", fmt(result.slope0), fmt(result.slope1));
    if newton {
        out.push(',');
    }
    out.push('\n');
    out
}

/// Parse a study CSV back. Tolerates both row widths and ignores the
/// trailing slopes row apart from returning it.
pub fn parse_study_csv(text: &str) -> Result<(Vec<StudyRow>, f64, f64)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?;
    if !header.starts_with("h,err0,err1,dofs,runtime") {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut slopes = None;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.is_empty() || line.trim().is_empty() {
            continue;
        }
        if cells[0] == "slopes" {
            let s0: f64 = cells
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format("bad slopes row".into()))?;
            let s1: f64 = cells
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format("bad slopes row".into()))?;
            slopes = Some((s0, s1));
            continue;
        }
        if cells.len() < 5 {
            return Err(Error::Format(format!("short CSV row {line:?}")));
        }
        let num = |i: usize| -> Result<f64> {
            cells[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad number in CSV row {line:?}")))
        };
        rows.push(StudyRow {
            h: num(0)?,
            err0: num(1)?,
            err1: num(2)?,
            dofs: cells[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad dof count in {line:?}")))?,
            runtime: num(4)?,
            newton_iters: match cells.get(5) {
                Some(s) if !s.is_empty() => Some(
                    s.parse()
                        .map_err(|_| Error::Format(format!("bad iteration count in {line:?}")))?,
                ),
                _ => None,
            },
        });
    }
    let (s0, s1) = slopes.ok_or_else(|| Error::Format("CSV has no slopes row".into()))?;
    Ok((rows, s0, s1))
}

/// Log-log convergence plot with both error series and dashed reference
/// slopes anchored at the coarsest mesh.
pub fn study_svg(result: &StudyResult) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 50.0);
    let xs: Vec<f64> = result.rows.iter().map(|r| r.h.log10()).collect();
    let mut ys: Vec<f64> = Vec::new();
    for r in &result.rows {
        ys.push(r.err0.max(1e-300).log10());
        ys.push(r.err1.max(1e-300).log10());
    }
    let pad = 0.3;
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min) - pad;
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad;
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min) - pad;
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad;
    let px = |x: f64| ml + (x - x_min) / (x_max - x_min) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y_min) / (y_max - y_min) * (h - mb - mt);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\">{} (slopes {:.2}, {:.2})</text>",
        w / 2.0,
        result.label,
        result.slope0,
        result.slope1
    );
    // Axes and decade ticks.
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    let mut d = x_min.ceil() as i64;
    while (d as f64) <= x_max {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>",
            h - mb,
            h - mb + 6.0,
            h - mb + 22.0
        );
        d += 1;
    }
    let mut d = y_min.ceil() as i64;
    while (d as f64) <= y_max {
        let y = py(d as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{ml}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{d}</text>",
            ml - 6.0,
            ml - 10.0,
            y + 4.0
        );
        d += 1;
    }
    let series = |svg: &mut String, pick: &dyn Fn(&StudyRow) -> f64, color: &str, name: &str| {
        let pts: Vec<String> = result
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.h.log10()), py(pick(r).max(1e-300).log10())))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        for p in &pts {
            let xy: Vec<&str> = p.split(',').collect();
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                xy[0], xy[1]
            );
        }
        let last = result.rows.last().unwrap();
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{name}</text>",
            px(last.h.log10()) + 8.0,
            py(pick(last).max(1e-300).log10())
        );
    };
    series(&mut svg, &|r| r.err0, "#1f4e9c", "L2");
    series(&mut svg, &|r| r.err1, "#b03030", "H1");
    // Reference triangles for slopes 2 and 1 anchored at the coarsest mesh.
    for (slope, pick, color) in [
        (2.0, &(|r: &StudyRow| r.err0) as &dyn Fn(&StudyRow) -> f64, "#1f4e9c"),
        (1.0, &|r: &StudyRow| r.err1, "#b03030"),
    ] {
        let r0 = &result.rows[0];
        let x0 = r0.h.log10();
        let y0 = pick(r0).max(1e-300).log10() + 0.15;
        let x1 = x0 - 0.3;
        let y1 = y0 - 0.3 * slope;
        let _ = writeln!(
            svg,
            "<path d=\"M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z\" fill=\"none\" \
             stroke=\"{color}\" stroke-dasharray=\"4 3\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{slope:.0}</text>",
            px(x0),
            py(y0),
            px(x1),
            py(y0),
            px(x1),
            py(y1),
            px(x1) - 16.0,
            (py(y0) + py(y1)) / 2.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">h</text></svg>",
        (ml + w - mr) / 2.0,
        h - 12.0
    );
    svg
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Aggregate previously written study CSVs: one summary row per file with
/// slopes recomputed from the rows (and checked against the stored ones),
/// plus one SVG plot per file.
pub fn emit_report(csvs: &[PathBuf], outdir: &Path) -> Result<ReportPaths> {
    if csvs.is_empty() {
        return Err(Error::Format("report needs at least one study CSV".into()));
    }
    std::fs::create_dir_all(outdir)?;
    let mut summary = String::from("study,meshes,finest_h,err0,err1,slope0,slope1\n");
    let mut plots = Vec::new();
    for path in csvs {
        let text = std::fs::read_to_string(path)?;
        let (rows, s0, s1) = parse_study_csv(&text)?;
        if rows.is_empty() {
            return Err(Error::Format(format!("{} has no data rows", path.display())));
        }
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let r0 = fit_slope(&hs, &rows.iter().map(|r| r.err0).collect::<Vec<_>>());
        let r1 = fit_slope(&hs, &rows.iter().map(|r| r.err1).collect::<Vec<_>>());
        // The stored slopes are bit-recomputable from the rounded CSV
        // values only approximately.
        if (r0 - s0).abs() > 1e-6 || (r1 - s1).abs() > 1e-6 {
            return Err(Error::Format(format!(
                "{}: stored slopes ({s0:.4}, {s1:.4}) disagree with the rows ({r0:.4}, {r1:.4})",
                path.display()
            )));
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("study")
            .to_string();
        let last = rows.last().unwrap();
        let _ = writeln!(
            summary,
            "{stem},{},{},{},{},{},{}",
            rows.len(),
            fmt(last.h),
            fmt(last.err0),
            fmt(last.err1),
            fmt(s0),
            fmt(s1)
        );
        let result = StudyResult {
            label: stem.clone(),
            rows,
            slope0: s0,
            slope1: s1,
        };
        let plot = outdir.join(format!("{stem}.svg"));
        std::fs::write(&plot, study_svg(&result))?;
        plots.push(plot);
    }
    let summary_path = outdir.join("summary.csv");
    std::fs::write(&summary_path, summary)?;
    Ok(ReportPaths {
        summary: summary_path,
        plots,
    })
}
