//! Command-line driver: eigenvalue runs with guaranteed lower bounds on
//! built-in or user-supplied meshes, single-triangle stability constants,
//! Legendre growth-ratio tables, and mesh inspection.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hho2d::adapt::{adaptive_loop, write_history_csv, RefineMode};
use hho2d::domains;
use hho2d::hho::Params;
use hho2d::legendre;
use hho2d::mesh::{parse_mesh, Mesh};
use hho2d::stabconst::{angle_sweep, compute_mp_with, FemConfig, Poisson};
use std::fs;
use std::io::Write;

#[derive(Parser)]
#[command(name = "hho2d", version, about = "Guaranteed lower bounds for Dirichlet Laplace eigenvalues on polygons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solve-estimate-refine eigenvalue loop
    Solve(SolveArgs),
    /// Stability constants of a single triangle
    Stabconst(StabArgs),
    /// Legendre derivative/function norm growth ratios
    Legendre(LegendreArgs),
    /// Print mesh statistics for a domain or mesh file
    MeshInfo(MeshInfoArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Built-in domain name (triangle, square2, square, lshape,
    /// isospectral, dumbbell) or path to a mesh file
    #[arg(long)]
    domain: String,
    /// Face polynomial degree
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=4))]
    p: u8,
    /// Refinement mode: uniform or adaptive
    #[arg(long, default_value = "adaptive")]
    mode: String,
    /// Bulk-marking fraction for adaptive refinement
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Weight splitting the gradient term of the discrete form
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Stability constant of the cellwise energy projection
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    c_st2: f64,
    /// Poincare constant of the initial triangles
    #[arg(long, default_value_t = 1.0 / (std::f64::consts::SQRT_2 * std::f64::consts::PI))]
    c_p: f64,
    /// Stabilization weight; defaults to the largest certified value
    #[arg(long)]
    beta: Option<f64>,
    /// Eigenvalue index (1-based)
    #[arg(long, default_value_t = 1)]
    target_index: usize,
    /// Stop once the number of unknowns reaches this budget
    #[arg(long, default_value_t = 50_000)]
    max_ndof: usize,
    /// Reference eigenvalue for the error column (overrides the built-in
    /// table)
    #[arg(long)]
    reference_lambda: Option<f64>,
    /// History CSV path (stdout if omitted)
    #[arg(long)]
    output: Option<String>,
    /// Seed for the iterative eigensolver's starting block
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StabArgs {
    /// Smallest degree in the table
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=8))]
    p_min: u8,
    /// Largest degree in the table
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(0..=8))]
    p_max: u8,
    /// Triangle vertices as x0,y0,x1,y1,x2,y2 (default right-isosceles)
    #[arg(long, value_delimiter = ',', num_args = 6)]
    triangle: Option<Vec<f64>>,
    /// Instead of a table over p, sweep the apex angle (degrees) of the
    /// isosceles triangle conv{(0,0),(1,0),(cos w,sin w)} at degree p_max
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// Lagrange degree of the inverse-Laplacian discretization
    #[arg(long, default_value_t = 4)]
    fem_degree: usize,
    /// Uniform refinement levels of the inverse-Laplacian discretization
    #[arg(long, default_value_t = 6)]
    fem_refines: usize,
    /// CSV path (stdout if omitted)
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct LegendreArgs {
    #[arg(long, default_value_t = 1)]
    p_min: usize,
    #[arg(long, default_value_t = 20)]
    p_max: usize,
}

#[derive(Args)]
struct MeshInfoArgs {
    /// Built-in domain name or path to a mesh file
    #[arg(long)]
    domain: String,
}

fn load_domain(spec: &str) -> Result<Mesh> {
    if domains::NAMES.contains(&spec) {
        return Ok(domains::builtin(spec)?);
    }
    let text = fs::read_to_string(spec)
        .with_context(|| format!("{spec:?} is neither a built-in domain nor a readable file"))?;
    Ok(parse_mesh(&text)?)
}

fn open_output(path: &Option<String>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot create {p}"))?),
        None => Box::new(std::io::stdout()),
    })
}

fn run_solve(args: &SolveArgs) -> Result<()> {
    let mesh = load_domain(&args.domain)?;
    let mode: RefineMode = args.mode.parse::<RefineMode>()?;
    let mut params = Params::new(args.alpha, args.c_p, args.c_st2)?;
    if let Some(beta) = args.beta {
        params = params.with_beta(beta)?;
    }
    println!(
        "domain {} | p = {} | mode = {} | j = {} | theta = {}",
        args.domain, args.p, args.mode, args.target_index, args.theta
    );
    println!(
        "alpha = {} | sigma2^2 = {:.6} | beta = {:.6}",
        params.alpha, params.sigma2_sq, params.beta
    );
    let (hist, final_mesh) = adaptive_loop(
        mesh,
        args.p as usize,
        &params,
        args.target_index,
        args.max_ndof,
        mode,
        args.theta,
        args.seed,
    )?;
    let mut out = open_output(&args.output)?;
    write_history_csv(&hist, &mut out)?;
    out.flush()?;
    if let Some(path) = &args.output {
        println!("history written to {path} ({} rows)", hist.rows.len());
    }
    let last = hist.rows.last().context("empty history")?;
    let reference = args
        .reference_lambda
        .or_else(|| domains::reference_lambda(&args.domain, args.target_index));
    println!(
        "final mesh: {} triangles, h_max = {:.6e}",
        final_mesh.triangles.len(),
        final_mesh.h_max
    );
    println!("ndof      = {}", last.ndof);
    println!("lambda_h  = {:.16e}", last.lambda_h);
    if last.glb > 0.0 {
        println!("GLB       = {:.16e} (certified)", last.glb);
    } else {
        println!("GLB       = not certified at this resolution");
    }
    println!("eta^2     = {:.16e}", last.eta_sq);
    if let Some(lam) = reference {
        println!("reference = {:.16e}", lam);
        println!("lambda_h - reference = {:.6e}", last.lambda_h - lam);
        if last.glb > 0.0 {
            println!("reference - GLB      = {:.6e}", lam - last.glb);
        }
    }
    println!(
        "flux identity residuals: A1 = {:.3e}, A2 = {:.3e}",
        hist.a1_rel_max, hist.a2_rel_max
    );
    Ok(())
}

fn parse_triangle(v: &Option<Vec<f64>>) -> [[f64; 2]; 3] {
    match v {
        Some(c) => [[c[0], c[1]], [c[2], c[3]], [c[4], c[5]]],
        None => [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    }
}

fn run_stabconst(args: &StabArgs) -> Result<()> {
    let cfg = FemConfig {
        degree: args.fem_degree,
        refines: args.fem_refines,
    };
    let mut out = open_output(&args.output)?;
    if let Some(sweep) = &args.sweep {
        let omegas: Vec<f64> = sweep.iter().map(|d| d.to_radians()).collect();
        let table = angle_sweep(&omegas, args.p_max as usize, cfg)?;
        writeln!(out, "omega_deg,m_p_sq")?;
        for (deg, (_, m)) in sweep.iter().zip(&table) {
            writeln!(out, "{deg},{m:.16e}")?;
        }
        return Ok(out.flush()?);
    }
    if args.p_min > args.p_max {
        bail!("p_min exceeds p_max");
    }
    let verts = parse_triangle(&args.triangle);
    // one discretization of the inverse Laplacian serves every degree
    let poisson = if args.p_max >= 1 {
        Some(Poisson::new(&verts, cfg)?)
    } else {
        None
    };
    writeln!(
        out,
        "p,m_p_sq,c_st2_upper,lower_c_st1,lower_c_st2,fem_degree,fem_refines"
    )?;
    for p in args.p_min..=args.p_max {
        let r = compute_mp_with(&verts, p as usize, poisson.as_ref(), cfg)?;
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.p, r.m_p_sq, r.c_st2_upper, r.lower_c_st1, r.lower_c_st2, r.fem_degree, r.fem_refines
        )?;
    }
    Ok(out.flush()?)
}

fn run_legendre(args: &LegendreArgs) -> Result<()> {
    if args.p_min == 0 || args.p_min > args.p_max {
        bail!("need 1 <= p_min <= p_max");
    }
    println!("{:>4} {:>18} {:>18}", "p", "ratio", "ratio/sqrt(p)");
    for p in args.p_min..=args.p_max {
        let r = legendre::growth_ratio(p);
        println!("{:>4} {:>18.12} {:>18.12}", p, r, r / (p as f64).sqrt());
    }
    Ok(())
}

fn run_mesh_info(args: &MeshInfoArgs) -> Result<()> {
    let mesh = load_domain(&args.domain)?;
    let n_bnd = mesh.edges.iter().filter(|e| e.is_boundary).count();
    println!("vertices  = {}", mesh.vertices.len());
    println!("triangles = {}", mesh.triangles.len());
    println!(
        "edges     = {} ({} boundary, {} interior)",
        mesh.edges.len(),
        n_bnd,
        mesh.edges.len() - n_bnd
    );
    println!("area      = {:.16e}", mesh.total_area());
    println!("h_max     = {:.16e}", mesh.h_max);
    println!("min angle = {:.12} rad", mesh.min_angle());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Stabconst(a) => run_stabconst(a),
        Command::Legendre(a) => run_legendre(a),
        Command::MeshInfo(a) => run_mesh_info(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
