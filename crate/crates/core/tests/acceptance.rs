//! Acceptance gate. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};

use dragtrack::certify::{expm2, lyapunov_residual, solve_lyapunov_2x2, verify_linear_iss_bound};
use dragtrack::config::ScenarioConfig;
use dragtrack::dynamics::EntryState;
use dragtrack::guidance::GuidanceConfig;
use dragtrack::io::to_json_pretty;
use dragtrack::models::DispersionSet;
use dragtrack::montecarlo::{run_batch, run_batch_sequential, MCStats};
use dragtrack::reference::{generate_reference, propagate_open_loop, OpenLoopTrace, ReferenceProfile};
use dragtrack::sim::{run_closed_loop, GuidanceMode, RunConfig, TrajectoryLog};

const LYAPUNOV_RESIDUAL_MAX: f64 = 1e-10;

const LINEARITY_REL_MAX: f64 = 1e-4;
const LINEARITY_WINDOW: f64 = 50.0;
const LINEARITY_DT: f64 = 1e-3;
/// Start of the linearity and convergence runs on the reference clock [s]
const OFFSET_START: f64 = 100.0;
/// Altitude offset from the reference trajectory at that start [m]
const OFFSET_ALTITUDE: f64 = 100.0;

const CHAIN_DT: f64 = 1e-2;
const DRAG_RATE_REL_MAX: f64 = 1e-3;
const DRAG_ACCEL_REL_MAX: f64 = 1e-2;

const ISS_DISTURBANCES: [f64; 3] = [0.0, 0.1, 1.0];
const ISS_INITIAL: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
const ISS_HORIZON: f64 = 100.0;

const NOMINAL_DOWNRANGE_MAX_KM: f64 = 0.5;

const RECOVERY_EPS: [f64; 3] = [1.0, 0.481, 0.2];
const RECOVERY_EPS_NOMINAL: f64 = 0.481;
const RECOVERY_DOWNRANGE_GAP_MAX_KM: f64 = 0.2;

const CONVERGENCE_EPS: f64 = 0.481;
const CONVERGENCE_HORIZON: f64 = 60.0;
const CONVERGENCE_RATE_RATIO_MIN: f64 = 1.5;

const MC_RUNS: usize = 1000;
const MC_MEAN_MAX_KM: f64 = 10.0;
const MC_STD_MAX_KM: f64 = 20.0;

const DETERMINISM_RUNS: usize = 200;
const DETERMINISM_THREADS: [usize; 3] = [1, 2, 4];

struct Fixture {
    scenario: ScenarioConfig,
    profile: Arc<ReferenceProfile>,
    trace: OpenLoopTrace,
}

impl Fixture {
    fn new() -> Self {
        let scenario = ScenarioConfig::default();
        let spec = scenario.reference_spec().expect("default scenario");
        let profile = generate_reference(&spec).expect("reference generation");
        let schedule = profile.schedule.expect("generated profiles carry their schedule");
        let trace = propagate_open_loop(
            &spec.world,
            &DispersionSet::NOMINAL,
            &spec.initial,
            &schedule,
            spec.dt,
            spec.max_time,
            spec.v_f,
        )
        .expect("open-loop replay");
        Fixture {
            scenario,
            profile: Arc::new(profile),
            trace,
        }
    }

    fn run(&self, mode: GuidanceMode) -> RunConfig {
        self.scenario
            .run_config(mode, self.profile.clone())
            .expect("run config")
    }

    /// Reference state at `t0` lifted by `dh`.
    fn offset_state(&self, t0: f64, dh: f64) -> EntryState {
        let k = self
            .trace
            .t
            .iter()
            .position(|&t| (t - t0).abs() < 1e-9)
            .expect("start time on the reference grid");
        let mut s = self.trace.states[k];
        s.r += dh;
        s
    }

    fn offset_run(&self, mode: GuidanceMode, horizon: f64) -> RunConfig {
        RunConfig {
            initial: self.offset_state(OFFSET_START, OFFSET_ALTITUDE),
            t0: OFFSET_START,
            dt: LINEARITY_DT,
            max_time: horizon,
            ..self.run(mode)
        }
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn lyapunov_exactness(_: &Fixture) -> Verdict {
    let half = solve_lyapunov_2x2(&(-Matrix2::identity())).unwrap();
    let exact_half = half == Matrix2::identity() * 0.5;
    let unit = GuidanceConfig {
        a: 1.0,
        b: 1.0,
        ..GuidanceConfig::default()
    };
    let cases = [
        (unit.scaled_closed_loop_matrix(), Matrix2::new(1.5, 0.5, 0.5, 1.0)),
        (
            GuidanceConfig::default().observer_error_matrix(),
            Matrix2::new(0.5, -0.5, -0.5, 1.5),
        ),
    ];
    let mut worst_res: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    for (a, expected) in cases {
        let p = solve_lyapunov_2x2(&a).unwrap();
        worst_res = worst_res.max(lyapunov_residual(&p, &a));
        worst_dev = worst_dev.max((p - expected).amax());
    }
    let pass = exact_half && worst_res <= LYAPUNOV_RESIDUAL_MAX && worst_dev <= LYAPUNOV_RESIDUAL_MAX;
    verdict(
        pass,
        format!("P(-I) exact = {exact_half}, max residual {worst_res:.1e}, max deviation {worst_dev:.1e}"),
    )
}

fn closed_loop_linearity(fx: &Fixture) -> Verdict {
    let cfg = fx.offset_run(GuidanceMode::StateFeedback, LINEARITY_WINDOW);
    let (log, _) = run_closed_loop(&cfg).unwrap();
    let f = cfg.guidance.closed_loop_matrix();
    let first = &log.records[0];
    let x0 = Vector2::new(first.x1, first.x2);
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for r in &log.records {
        let exact = expm2(&f, r.t - cfg.t0) * x0;
        err = err.max((Vector2::new(r.x1, r.x2) - exact).norm());
        scale = scale.max(exact.norm());
    }
    let limited = log.records.iter().filter(|r| r.saturated || r.held).count();
    let rel = err / scale;
    let span = log.last().unwrap().t - cfg.t0;
    verdict(
        limited == 0 && rel <= LINEARITY_REL_MAX && span >= LINEARITY_WINDOW - 1e-9,
        format!(
            "relative sup error {rel:.2e} over {span:.1} s, x0 = ({:.3e}, {:.3e}), limited steps {limited}",
            x0[0], x0[1]
        ),
    )
}

fn drag_chain_oracles(fx: &Fixture) -> Verdict {
    let cfg = RunConfig {
        dt: CHAIN_DT,
        ..fx.run(GuidanceMode::OpenLoopNominal)
    };
    let (log, _) = run_closed_loop(&cfg).unwrap();
    let r = &log.records;
    let h = CHAIN_DT;
    let (mut rate_err, mut rate_scale, mut acc_err, mut acc_scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut points = 0;
    for k in 1..r.len() - 1 {
        let uniform = ((r[k + 1].t - r[k].t) - h).abs() < 1e-9 && ((r[k].t - r[k - 1].t) - h).abs() < 1e-9;
        if !uniform {
            continue;
        }
        points += 1;
        let centered = (r[k + 1].drag - r[k - 1].drag) / (2.0 * h);
        rate_err = rate_err.max((r[k].drag_rate - centered).abs());
        rate_scale = rate_scale.max(r[k].drag_rate.abs());
        let second = (r[k + 1].drag - 2.0 * r[k].drag + r[k - 1].drag) / (h * h);
        // the command is held over each step, so the stencil sees both
        let model = r[k].f + r[k].g0 * 0.5 * (r[k - 1].u + r[k].u);
        acc_err = acc_err.max((second - model).abs());
        acc_scale = acc_scale.max(model.abs());
    }
    let (rate_rel, acc_rel) = (rate_err / rate_scale, acc_err / acc_scale);
    verdict(
        rate_rel <= DRAG_RATE_REL_MAX && acc_rel <= DRAG_ACCEL_REL_MAX && points > 1000,
        format!("drag rate rel {rate_rel:.2e}, f + g0 u rel {acc_rel:.2e} over {points} points"),
    )
}

fn iss_bound(_: &Fixture) -> Verdict {
    let gains = GuidanceConfig::default();
    let mut worst = f64::INFINITY;
    let mut pass = true;
    let mut points = 0;
    for d in ISS_DISTURBANCES {
        for x0 in ISS_INITIAL {
            let c = verify_linear_iss_bound(&gains, d, x0, ISS_HORIZON).unwrap();
            pass &= c.pass;
            worst = worst.min(c.worst_margin);
            points += c.points;
        }
    }
    verdict(pass, format!("6 cases, {points} grid points, worst margin {worst:.3e}"))
}

fn nominal_tracking(fx: &Fixture) -> Verdict {
    let (_, s) = run_closed_loop(&fx.run(GuidanceMode::StateFeedback)).unwrap();
    let km = s.downrange_error / 1000.0;
    verdict(
        s.terminated && km.abs() <= NOMINAL_DOWNRANGE_MAX_KM,
        format!(
            "downrange error {km:.5} km, altitude error {:.4} km, s_target {:.3} km",
            s.altitude_error / 1000.0,
            fx.profile.s_target / 1000.0
        ),
    )
}

fn sup_gap(a: &TrajectoryLog, b: &TrajectoryLog) -> f64 {
    a.records
        .iter()
        .zip(&b.records)
        .take_while(|(x, y)| x.t == y.t)
        .map(|(x, y)| (x.x1 - y.x1).abs())
        .fold(0.0, f64::max)
}

fn observer_recovery(fx: &Fixture) -> Verdict {
    // The gap is measured from the offset start: on the nominal run the state
    // is almost zero once the bank leaves saturation, so step error would
    // dominate the comparison.
    let (sf_log, _) = run_closed_loop(&fx.offset_run(GuidanceMode::StateFeedback, LINEARITY_WINDOW)).unwrap();
    let mut gaps = Vec::new();
    for eps in RECOVERY_EPS {
        let mut cfg = fx.offset_run(GuidanceMode::OutputFeedback, LINEARITY_WINDOW);
        cfg.guidance.eps = eps;
        gaps.push(sup_gap(&sf_log, &run_closed_loop(&cfg).unwrap().0));
    }
    let (_, sf) = run_closed_loop(&fx.run(GuidanceMode::StateFeedback)).unwrap();
    let mut of_cfg = fx.run(GuidanceMode::OutputFeedback);
    of_cfg.guidance.eps = RECOVERY_EPS_NOMINAL;
    let (_, of) = run_closed_loop(&of_cfg).unwrap();
    let nominal_gap_km = (of.downrange_error - sf.downrange_error).abs() / 1000.0;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    verdict(
        decreasing && nominal_gap_km <= RECOVERY_DOWNRANGE_GAP_MAX_KM,
        format!(
            "sup |x1 gap| {:.3e} > {:.3e} > {:.3e}; terminal downrange gap {:.4} km",
            gaps[0], gaps[1], gaps[2], nominal_gap_km
        ),
    )
}

/// Least-squares slope of `ln y` against `t`.
fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (st, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y.ln()));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - mt) * (y.ln() - my), b + (t - mt) * (t - mt))
    });
    num / den
}

struct Convergence {
    total_slope: f64,
    observer_slope: f64,
    observer_points: usize,
}

fn convergence_fit(fx: &Fixture, eps: f64) -> Convergence {
    let mut cfg = fx.offset_run(GuidanceMode::OutputFeedback, CONVERGENCE_HORIZON);
    cfg.guidance.eps = eps;
    let (log, _) = run_closed_loop(&cfg).unwrap();
    let err: Vec<(f64, f64, f64)> = log
        .records
        .iter()
        .map(|r| {
            let (e1, e2) = (r.x1 - r.xhat1, r.x2 - r.xhat2);
            (r.t, e1.hypot(e2), (r.x1 * r.x1 + e1 * e1 + e2 * e2).sqrt())
        })
        .collect();

    // whole error vector, from its peak on
    let peak = (0..err.len()).max_by(|&i, &j| err[i].2.total_cmp(&err[j].2)).unwrap();
    let total: Vec<(f64, f64)> = err[peak..].iter().map(|&(t, _, z)| (t, z)).collect();

    // observer error, between half and one percent of its peak
    let opeak = (0..err.len()).max_by(|&i, &j| err[i].1.total_cmp(&err[j].1)).unwrap();
    let top = err[opeak].1;
    let observer: Vec<(f64, f64)> = err[opeak..]
        .iter()
        .take_while(|e| e.1 >= 1e-2 * top)
        .filter(|e| e.1 <= 0.5 * top)
        .map(|&(t, e, _)| (t, e))
        .collect();
    Convergence {
        total_slope: log_slope(&total),
        observer_slope: log_slope(&observer),
        observer_points: observer.len(),
    }
}

fn exponential_convergence(fx: &Fixture) -> Verdict {
    let base = convergence_fit(fx, CONVERGENCE_EPS);
    let fast = convergence_fit(fx, 0.5 * CONVERGENCE_EPS);
    let ratio = fast.observer_slope / base.observer_slope;
    let pass = base.total_slope < 0.0
        && fast.total_slope < 0.0
        && base.observer_slope < 0.0
        && base.observer_points >= 10
        && fast.observer_points >= 10
        && ratio >= CONVERGENCE_RATE_RATIO_MIN;
    verdict(
        pass,
        format!(
            "log-norm slope {:.4}/s; observer decay {:.3}/s at eps {}, {:.3}/s at eps {} (x{ratio:.2})",
            base.total_slope,
            -base.observer_slope,
            CONVERGENCE_EPS,
            -fast.observer_slope,
            0.5 * CONVERGENCE_EPS
        ),
    )
}

fn monte_carlo(fx: &Fixture) -> Verdict {
    let base = fx.scenario.mc_run_config(fx.profile.clone()).unwrap();
    let mut opts = fx.scenario.batch_options(false);
    opts.n_runs = MC_RUNS;
    let (stats, _) = run_batch(&base, &fx.scenario.dispersion_spec(), &opts).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&to_json_pretty(&stats).unwrap()).unwrap();
    let shaped = ["downrange_error_km", "altitude_error_km"].iter().all(|m| {
        ["minimum", "maximum", "average", "standard_deviation"]
            .iter()
            .all(|row| json[m][row].as_f64().is_some_and(f64::is_finite))
    });
    let (Some(dr), Some(alt)) = (stats.downrange_error_km, stats.altitude_error_km) else {
        return verdict(false, format!("no completed runs ({} failures)", stats.failures));
    };
    let pass = stats.failures == 0
        && stats.non_finite_values == 0
        && shaped
        && dr.average.abs() <= MC_MEAN_MAX_KM
        && dr.standard_deviation <= MC_STD_MAX_KM;
    verdict(
        pass,
        format!(
            "{} runs, {} failures, {} non-finite; downrange mean {:.3} km std {:.3} km (max {MC_STD_MAX_KM}), \
             range [{:.2}, {:.2}]; altitude mean {:.3} km std {:.3} km",
            stats.runs,
            stats.failures,
            stats.non_finite_values,
            dr.average,
            dr.standard_deviation,
            dr.minimum,
            dr.maximum,
            alt.average,
            alt.standard_deviation
        ),
    )
}

fn determinism(fx: &Fixture) -> Verdict {
    let base = fx.scenario.mc_run_config(fx.profile.clone()).unwrap();
    let spec = fx.scenario.dispersion_spec();
    let mut opts = fx.scenario.batch_options(false);
    opts.n_runs = DETERMINISM_RUNS;
    let bytes = |stats: &MCStats| to_json_pretty(stats).unwrap();
    let reference = bytes(&run_batch_sequential(&base, &spec, &opts).unwrap().0);
    let mut identical = 0;
    let mut total = 0;
    for threads in DETERMINISM_THREADS {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        for _ in 0..2 {
            let stats = pool.install(|| run_batch(&base, &spec, &opts).unwrap().0);
            total += 1;
            identical += (bytes(&stats) == reference) as usize;
        }
    }
    verdict(
        identical == total,
        format!("{identical}/{total} parallel batches byte-identical to the sequential JSON ({DETERMINISM_RUNS} runs)"),
    )
}

type Criterion = (u32, &'static str, fn(&Fixture) -> Verdict);

const CRITERIA: [Criterion; 9] = [
    (1, "lyapunov exactness", lyapunov_exactness),
    (2, "closed-loop linearity", closed_loop_linearity),
    (3, "drag-chain oracles", drag_chain_oracles),
    (4, "ISS envelope", iss_bound),
    (5, "nominal tracking", nominal_tracking),
    (6, "observer recovery", observer_recovery),
    (7, "exponential convergence", exponential_convergence),
    (8, "monte carlo", monte_carlo),
    (9, "determinism", determinism),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let fixture = Fixture::new();
    let mut failed = Vec::new();
    for (id, name, check) in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = check(&fixture);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} {name}: {status} ({}) [{:.2?}]",
            v.detail,
            start.elapsed()
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
