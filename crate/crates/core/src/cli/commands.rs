use serde::Serialize;

use super::{CliError, Context, Provenance};
use crate::fmt_num;
use crate::mech::{
    cyclic_monotonicity_check, full_surplus, ic_audit, regularity_report, revenue_report, solve_thresholds,
    uniform_gamma_grid, upfront_t1, MechError, RevenueReport, ThresholdMechanism,
};
use crate::model::{FamilySpec, IdentitySummary, JointModel, ModelError};
use crate::numerics::{uniform_draws, RngStream};
use crate::oracle::{
    compare_instance, discretize, DiscreteInstance, GapTrends, LevelResult, OracleError, Regime, SolveReport,
};

const SAMPLE_STREAM: u64 = 11;
const CYCLE_STREAM: u64 = 12;
const IDENTITY_STREAM: u64 = 13;
const REGULARITY_POINTS: usize = 64;

fn build(family: &FamilySpec) -> Result<JointModel, CliError> {
    family.build().map_err(|e| CliError::Config(format!("{}: {e}", family.label())))
}

fn solver<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Solver(e.to_string())
}

fn mech_err(e: MechError) -> CliError {
    match e {
        MechError::RegularityViolation(m) => CliError::Tolerance(m),
        MechError::Parse(m) | MechError::InvalidGrid(m) => CliError::Config(m),
        other => solver(other),
    }
}

/// Thresholds and fees on the configured grid, after checking regularity.
fn solve_mechanism(ctx: &Context, model: &JointModel) -> Result<ThresholdMechanism, CliError> {
    let grid = uniform_gamma_grid(model, ctx.cfg.gamma_points);
    let reg = regularity_report(model, &grid, REGULARITY_POINTS).map_err(mech_err)?;
    if !reg.passes() {
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: Provenance,
            regularity: &'a crate::mech::RegularityReport,
        }
        let path = ctx.write_json("regularity.json", &Out { provenance: ctx.provenance(), regularity: &reg })?;
        return Err(CliError::Tolerance(format!("regularity violated, report at {}", path.display())));
    }
    let mut mech = solve_thresholds(model, &grid).map_err(mech_err)?;
    upfront_t1(model, &mut mech, &ctx.cfg.quadrature).map_err(mech_err)?;
    Ok(mech)
}

pub(crate) fn cmd_solve(ctx: &Context) -> Result<(), CliError> {
    let model = build(&ctx.cfg.family)?;
    let mech = solve_mechanism(ctx, &model)?;
    let revenue = revenue_report(&model, &mech, &ctx.cfg.quadrature).map_err(mech_err)?;
    let surplus = full_surplus(&model, &ctx.cfg.quadrature).map_err(mech_err)?;
    #[derive(Serialize)]
    struct Out {
        provenance: Provenance,
        gamma_points: usize,
        full_surplus: f64,
        revenue: RevenueReport,
    }
    let csv = ctx.write("mechanism.csv", &mech.to_csv(&model))?;
    let json = ctx.write_json(
        "revenue.json",
        &Out { provenance: ctx.provenance(), gamma_points: ctx.cfg.gamma_points, full_surplus: surplus, revenue: revenue.clone() },
    )?;
    ctx.say(&format!("revenue {:.10} (direct), wrote {} and {}", revenue.direct, csv.display(), json.display()));
    Ok(())
}

#[derive(Serialize)]
struct AuditOut {
    provenance: Provenance,
    mechanism: String,
    full_surplus: f64,
    max_gain: f64,
    gain_limit: f64,
    worst_true: f64,
    worst_report: f64,
    min_ir_slack: f64,
    utility_at_lowest: f64,
    utility_max_decrease: f64,
    cycles: usize,
    cycle_length: usize,
    max_cycle_sum: f64,
    passes: bool,
}

pub(crate) fn cmd_audit(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg.audit;
    let opts = &ctx.cfg.quadrature;
    let model = build(&ctx.cfg.family)?;
    let (mech, source) = match &cfg.mechanism {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut mech = ThresholdMechanism::from_csv(&model, &text).map_err(mech_err)?;
            if mech.upfront.is_empty() {
                upfront_t1(&model, &mut mech, opts).map_err(mech_err)?;
            }
            (mech, path.display().to_string())
        }
        None => (solve_mechanism(ctx, &model)?, "solved inline".to_string()),
    };
    let types = uniform_gamma_grid(&model, cfg.true_types);
    let ic = ic_audit(&model, &mech, &types, opts).map_err(mech_err)?;
    let surplus = full_surplus(&model, opts).map_err(mech_err)?;

    let n = model.dim();
    let (glo, ghi) = model.gamma_range();
    let draws = uniform_draws(RngStream::new(ctx.cfg.seed, CYCLE_STREAM), cfg.cycles, 1 + cfg.cycle_length * n);
    let max_cycle_sum = draws
        .iter()
        .map(|d| {
            let gamma = glo + (ghi - glo) * d[0];
            let support = model.support(gamma);
            let cycle: Vec<Vec<f64>> = d[1..]
                .chunks(n)
                .map(|z| z.iter().zip(&support).map(|(&u, &(lo, hi))| lo + (hi - lo) * u).collect())
                .collect();
            cyclic_monotonicity_check(&mech, gamma, &[cycle])
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let gain_limit = cfg.gain_tol * surplus;
    let utility_at_lowest = ic.curve.utility[0];
    let utility_max_decrease = ic.curve.max_decrease();
    let passes = ic.max_gain <= gain_limit
        && ic.min_ir >= -cfg.ir_tol
        && utility_at_lowest.abs() <= cfg.ir_tol
        && utility_max_decrease <= cfg.ir_tol
        && max_cycle_sum <= cfg.cycle_tol;
    ctx.write("utility.csv", &ic.curve.to_csv())?;
    let out = AuditOut {
        provenance: ctx.provenance(),
        mechanism: source,
        full_surplus: surplus,
        max_gain: ic.max_gain,
        gain_limit,
        worst_true: ic.worst_true,
        worst_report: ic.worst_report,
        min_ir_slack: ic.min_ir,
        utility_at_lowest,
        utility_max_decrease,
        cycles: cfg.cycles,
        cycle_length: cfg.cycle_length,
        max_cycle_sum,
        passes,
    };
    let path = ctx.write_json("audit.json", &out)?;
    if !passes {
        return Err(CliError::Tolerance(format!("audit failed, report at {}", path.display())));
    }
    ctx.say(&format!("max gain {:e}, min IR slack {:e}, wrote {}", ic.max_gain, ic.min_ir, path.display()));
    Ok(())
}

#[derive(Serialize)]
struct FamilyIdentity {
    family: String,
    invariant: bool,
    summary: IdentitySummary,
    within_tolerance: bool,
}

pub(crate) fn cmd_identity(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg.identity;
    let mut rows = Vec::new();
    for family in std::iter::once(&ctx.cfg.family).chain(&cfg.families) {
        let model = build(family)?;
        let summary = IdentitySummary::compute(&model, cfg.points, RngStream::new(ctx.cfg.seed, IDENTITY_STREAM))
            .map_err(|e: ModelError| solver(format!("{}: {e}", family.label())))?;
        let within_tolerance = summary.divergence_max <= cfg.divergence_tol
            && summary.boundary_max <= cfg.boundary_tol
            && summary.invariance <= cfg.invariance_tol;
        rows.push(FamilyIdentity { family: family.label(), invariant: model.invariant_flag, summary, within_tolerance });
    }
    #[derive(Serialize)]
    struct Out<'a> {
        provenance: Provenance,
        points: usize,
        families: &'a [FamilyIdentity],
    }
    let path = ctx.write_json("identity.json", &Out { provenance: ctx.provenance(), points: cfg.points, families: &rows })?;
    let failed: Vec<&str> = rows.iter().filter(|r| r.invariant && !r.within_tolerance).map(|r| r.family.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Tolerance(format!("{} exceed tolerance, report at {}", failed.join(", "), path.display())));
    }
    ctx.say(&format!("{} families checked, wrote {}", rows.len(), path.display()));
    Ok(())
}

fn write_mechanisms(ctx: &Context, level: usize, reports: &[SolveReport]) -> Result<(), CliError> {
    for r in reports {
        if let Some(m) = &r.mechanism {
            ctx.write(&format!("mechanism_{}_{level}.csv", r.regime.name()), &m.to_csv())?;
        }
    }
    Ok(())
}

pub(crate) fn cmd_oracle(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg.oracle;
    let instances: Vec<DiscreteInstance> = match &cfg.instance {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            vec![DiscreteInstance::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?]
        }
        None => {
            if cfg.ladder.is_empty() {
                return Err(CliError::Config("oracle.ladder or oracle.instance is required".into()));
            }
            let refines = cfg.ladder.windows(2).all(|w| {
                w[1].gamma_cells >= w[0].gamma_cells
                    && w[1].theta_cells.len() == w[0].theta_cells.len()
                    && w[1].theta_cells.iter().zip(&w[0].theta_cells).all(|(b, a)| b >= a)
            });
            if !refines {
                return Err(CliError::Config("oracle.ladder must be increasing".into()));
            }
            let model = build(&ctx.cfg.family)?;
            let mut v = Vec::new();
            for spec in &cfg.ladder {
                let mut inst = discretize(&model, spec).map_err(|e| match e {
                    OracleError::InvalidInstance(m) => CliError::Config(m),
                    other => solver(other),
                })?;
                if let Some(l) = inst.lineage.as_mut() {
                    l.family = Some(ctx.cfg.family.clone());
                }
                v.push(inst);
            }
            v
        }
    };
    let mut levels: Vec<LevelResult> = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        ctx.write(&format!("instance_{k}.json"), &(inst.to_json() + "\n"))?;
        match compare_instance(inst, &cfg.options) {
            Ok(level) => {
                write_mechanisms(ctx, k, &level.reports)?;
                levels.push(level);
            }
            Err(e) => {
                let path = ctx.write("failed_instance.json", &(inst.to_json() + "\n"))?;
                return Err(CliError::Solver(format!("level {k}: {e}; instance dumped to {}", path.display())));
            }
        }
    }
    let trend = |gap: fn(&LevelResult) -> f64| levels.windows(2).all(|w| gap(&w[1]) <= gap(&w[0]) + 1e-9);
    let gaps_nonincreasing = GapTrends {
        sim_separate: trend(|l| l.gap_sim_separate),
        seq_sim: trend(|l| l.gap_seq_sim),
        relaxed_sim: trend(|l| l.gap_relaxed_sim),
    };
    let orderings_hold = levels.iter().all(|l| l.orderings_hold);
    #[derive(Serialize)]
    struct Iterations {
        simultaneous: usize,
        sequential: usize,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        provenance: Provenance,
        levels: &'a [LevelResult],
        iterations: Vec<Iterations>,
        gaps_nonincreasing: GapTrends,
        orderings_hold: bool,
    }
    let iterations = levels
        .iter()
        .map(|l| {
            let its = |r: Regime| l.reports.iter().find(|x| x.regime == r).map_or(0, |x| x.iterations);
            Iterations { simultaneous: its(Regime::Simultaneous), sequential: its(Regime::Sequential) }
        })
        .collect();
    let path = ctx.write_json(
        "oracle.json",
        &Out { provenance: ctx.provenance(), levels: &levels, iterations, gaps_nonincreasing, orderings_hold },
    )?;
    if !orderings_hold {
        return Err(CliError::Tolerance(format!("regime ordering violated, report at {}", path.display())));
    }
    ctx.say(&format!("{} levels solved, wrote {}", levels.len(), path.display()));
    Ok(())
}

/// Kolmogorov-Smirnov distance of a sample from the uniform law on `[0,1]`.
fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

pub(crate) fn cmd_sample(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg.sample;
    let model = build(&ctx.cfg.family)?;
    let n = model.dim();
    let draws = uniform_draws(RngStream::new(ctx.cfg.seed, SAMPLE_STREAM), cfg.count, 1 + n);
    let mut csv = String::from("gamma");
    for j in 1..=n {
        csv.push_str(&format!(",z_{j}"));
    }
    for j in 1..=n {
        csv.push_str(&format!(",theta_{j}"));
    }
    csv.push('\n');
    let mut ranks = vec![Vec::with_capacity(cfg.count); n];
    for (k, d) in draws.iter().enumerate() {
        let gamma = model.prior.quantile(d[0]);
        let z: Vec<f64> = if cfg.corners {
            (0..n).map(|j| ((k >> j) & 1) as f64).collect()
        } else {
            d[1..].to_vec()
        };
        let theta = model.sample_theta(gamma, &z).map_err(solver)?;
        for j in 0..n {
            ranks[j].push(model.marginals[j].cdf(theta[j], gamma));
        }
        let row: Vec<String> = std::iter::once(gamma).chain(z).chain(theta).map(fmt_num).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let ks: Option<Vec<f64>> = (!cfg.corners).then(|| ranks.into_iter().map(ks_uniform).collect());
    #[derive(Serialize)]
    struct Out {
        provenance: Provenance,
        count: usize,
        corners: bool,
        /// Per good, of `F^j(theta^j | gamma)` against the uniform law.
        ks: Option<Vec<f64>>,
    }
    let data = ctx.write("draws.csv", &csv)?;
    let path = ctx.write_json("ks.json", &Out { provenance: ctx.provenance(), count: cfg.count, corners: cfg.corners, ks })?;
    ctx.say(&format!("wrote {} and {}", data.display(), path.display()));
    Ok(())
}
