use crate::summary::{RunSummary, SimulationSummary};
use anyhow::{bail, Context, Result};
use fabseq::config::{InitialField, RunConfig, Setup};
use fabseq::io::{export_fields, ExportFormat, VoxelField, VtkField};
use fabseq::optimizer::{run_with, RunLog};
use fabseq::process::{self, simulate_binary};
use fabseq::projection::{binary_layer, stage_densities, ProjectionParams};
use fabseq::sensitivity::{check_gradient, objective, perturb_field, CheckOptions};
use fabseq::timefield::{FieldLayout, TimeField};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

fn load(config: &Path) -> Result<RunConfig> {
    RunConfig::load(config).with_context(|| format!("loading {}", config.display()))
}

fn field_or_planar(setup: &Setup, field: Option<&Path>) -> Result<(TimeField, String)> {
    Ok(match field {
        Some(p) => (
            setup.read_field(p).with_context(|| format!("reading {}", p.display()))?,
            p.display().to_string(),
        ),
        None => (setup.planar_field(), "planar".to_string()),
    })
}

fn write_field(setup: &Setup, field: &TimeField, path: &Path) -> Result<()> {
    VoxelField::from_time_field(*setup.grid.shape(), field)?.write(path)?;
    Ok(())
}

/// Cell fields describing the layers of `field`.
fn layer_fields(setup: &Setup, field: &TimeField, beta: f64) -> Vec<VtkField> {
    let shape = setup.grid.shape();
    let times = field.element_times(shape);
    let mut out = vec![
        VtkField::CellScalar { name: "time".into(), values: times.clone() },
        VtkField::CellScalar {
            name: "layer".into(),
            values: (0..times.len())
                .map(|e| {
                    if setup.grid.is_active(e) {
                        binary_layer(times[e], setup.layers) as f64
                    } else {
                        0.0
                    }
                })
                .collect(),
        },
    ];
    let sd = stage_densities(&times, &setup.grid, &ProjectionParams::new(setup.layers, beta));
    for j in 1..=setup.layers {
        out.push(VtkField::CellScalar { name: format!("increment_{j:02}"), values: sd.increment(j) });
    }
    out
}

pub fn optimize(config: &Path, out: Option<&Path>, max_iters: Option<usize>) -> Result<ExitCode> {
    let mut cfg = load(config)?;
    if let Some(n) = max_iters {
        cfg.optimizer.max_iters = n;
    }
    let out: PathBuf = match (out, &cfg.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set `output` in the config"),
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let setup = cfg.build()?;
    let name = cfg.name.clone().unwrap_or_else(|| "run".into());
    let initial = setup.initial_field()?;
    write_field(&setup, &initial, &out.join("initial_field.txt"))?;
    let planar_binary = objective(&setup.process(), &setup.planar_field(), None, &setup.measure)?;
    log::info!(
        "{name}: {} active cells, {} layers, {} design variables, planar objective {planar_binary:.6e}",
        setup.grid.n_active(),
        setup.layers,
        FieldLayout::new(&setup.grid, initial.mode()).n_free()
    );

    let log_path = out.join("log.csv");
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log_file, "{}", RunLog::CSV_HEADER)?;
    let clock = Instant::now();
    let problem = setup.problem();
    let result = run_with(&problem, &initial, |r| {
        let _ = writeln!(log_file, "{}", RunLog::csv_row(r));
        let _ = log_file.flush();
        if r.iteration % 25 == 0 || r.iteration == 1 {
            log::info!("iter {:4} objective {:.6e} g0 {:.3e} beta {}", r.iteration, r.objective, r.g0, r.beta);
        }
    });
    drop(log_file);
    let report = match result {
        Ok(r) => r,
        Err(abort) => {
            log::error!("partial log of {} iterations kept in {}", abort.log.len(), log_path.display());
            return Err(abort.into());
        }
    };
    let seconds = clock.elapsed().as_secs_f64();
    let planar = objective(&setup.process(), &setup.planar_field(), Some(report.final_beta), &setup.measure)?;

    write_field(&setup, &report.field, &out.join("time_field.txt"))?;
    let mut resolved = cfg.clone();
    resolved.initial = InitialField::File(out.join("initial_field.txt").canonicalize()?);
    resolved.output = Some(out.canonicalize()?);
    std::fs::write(out.join("config.toml"), resolved.to_toml())?;

    let shape = *setup.grid.shape();
    export_fields(&shape, &layer_fields(&setup, &report.field, report.final_beta), ExportFormat::Vtk, &out.join("layers.vtk"))?;
    let smooth = process::simulate(&setup.process(), &report.field, report.final_beta, false)?;
    let binary = simulate_binary(&setup.process(), &report.field)?;
    export_fields(
        &shape,
        &[
            VtkField::PointVector { name: "displacement".into(), values: smooth.u.clone() },
            VtkField::PointVector { name: "displacement_binary".into(), values: binary.u.clone() },
        ],
        ExportFormat::Vtk,
        &out.join("displacement.vtk"),
    )?;

    let summary = RunSummary {
        name: name.clone(),
        layers: setup.layers,
        iterations: report.log.len(),
        design_variables: FieldLayout::new(&setup.grid, initial.mode()).n_free(),
        planar_objective: planar,
        planar_binary_objective: planar_binary,
        initial_objective: report.initial_objective,
        final_objective: report.final_objective,
        final_beta: report.final_beta,
        binary_objective: report.binary_objective,
        reduction: report.final_objective / planar,
        binary_reduction: report.binary_objective / planar_binary,
        g0: report.g0,
        volume_constraints: report.volumes.clone(),
        feasible: report.is_feasible(),
        violations: report.violations.clone(),
        min_max_count: report.min_max.len(),
        layer_min_max_count: report.layer_min_max.len(),
        restorations: report.restorations,
        selected_iteration: report.selected_iteration.unwrap_or(0),
        seconds,
    };
    std::fs::write(out.join("summary.toml"), toml::to_string(&summary)?)?;
    println!(
        "{name}: objective {:.6e} -> {:.6e} (planar {:.6e}, ratio {:.3e}); binary {:.6e} (planar {:.6e}); feasible {}; min/max extrema {} ({} in layers); {:.1} s",
        summary.initial_objective,
        summary.final_objective,
        summary.planar_objective,
        summary.reduction,
        summary.binary_objective,
        summary.planar_binary_objective,
        summary.feasible,
        summary.min_max_count,
        summary.layer_min_max_count,
        seconds
    );
    println!("artifacts in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(config: &Path, field: Option<&Path>, beta: Option<f64>, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load(config)?;
    let setup = cfg.build()?;
    let (t, label) = field_or_planar(&setup, field)?;
    let beta = beta.unwrap_or(cfg.optimizer.continuation.max);
    let p = setup.process();
    let smooth = objective(&p, &t, Some(beta), &setup.measure)?;
    let binary = objective(&p, &t, None, &setup.measure)?;
    let summary = SimulationSummary {
        name: cfg.name.clone().unwrap_or_else(|| "run".into()),
        field: label,
        layers: setup.layers,
        beta,
        objective: smooth,
        binary_objective: binary,
    };
    println!(
        "{}: field {} objective {:.10e} (beta {}), binary {:.10e}",
        summary.name, summary.field, summary.objective, summary.beta, summary.binary_objective
    );
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("simulation.toml"), toml::to_string(&summary)?)?;
        let sim = simulate_binary(&p, &t)?;
        export_fields(
            setup.grid.shape(),
            &[VtkField::PointVector { name: "displacement_binary".into(), values: sim.u }],
            ExportFormat::Vtk,
            &out.join("simulation.vtk"),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(config: &Path, full: bool) -> Result<ExitCode> {
    let cfg = load(config)?;
    let g = cfg.gradcheck.clone();
    let cfg = if full { cfg } else { cfg.shrunk(g.resolution.clone(), g.layers) };
    let setup = cfg.build()?;
    let base = setup.initial_field()?;
    let layout = FieldLayout::new(&setup.grid, base.mode());
    let field = perturb_field(&base, &layout, g.perturbation, g.seed);
    let opts = CheckOptions {
        beta: g.beta,
        step: g.step,
        components: g.components,
        directions: g.directions,
        seed: g.seed,
        ..Default::default()
    };
    let check = check_gradient(&setup.process(), &field, &setup.measure, &opts)?;
    for e in &check.entries {
        let what = e.index.map(|i| format!("entry {i}")).unwrap_or_else(|| "direction".into());
        println!(
            "{what:>14}: adjoint {:+.10e} fd {:+.10e} rel {:.2e}",
            e.adjoint, e.finite_difference, e.relative_error
        );
    }
    let worst = check.max_relative_error();
    println!(
        "grid {:?}, {} layers, objective {:.6e}: max relative error {worst:.3e} (tolerance {:.1e})",
        setup.grid.shape().extents(),
        setup.layers,
        check.objective,
        g.tolerance
    );
    Ok(if worst <= g.tolerance { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn export(config: &Path, field: Option<&Path>, vtk: bool, out: &Path, stages: bool) -> Result<ExitCode> {
    let cfg = load(config)?;
    let setup = cfg.build()?;
    let (t, _) = field_or_planar(&setup, field)?;
    let beta = cfg.optimizer.continuation.max;
    let mut fields = layer_fields(&setup, &t, beta);
    let sim = simulate_binary(&setup.process(), &t)?;
    if stages {
        for j in 1..=setup.layers {
            fields.push(VtkField::PointVector { name: format!("displacement_{j:02}"), values: sim.accumulated(j) });
        }
    } else {
        fields.push(VtkField::PointVector { name: "displacement".into(), values: sim.u });
    }
    let format = if vtk { ExportFormat::Vtk } else { ExportFormat::Voxel };
    export_fields(setup.grid.shape(), &fields, format, out)?;
    println!("wrote {} fields to {}", fields.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
