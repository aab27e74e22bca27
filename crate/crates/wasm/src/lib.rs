//! Browser bindings for the ghostgame solver and simulator.
//!
//! Every export returns plain JSON text or a flat `Vec<f64>` so the page
//! needs no generated glue beyond `wasm-bindgen` itself. Failures come back
//! as `{"error": "..."}`.

use ghostgame::simulate::{simulate_belief_path, ControlPolicy, Level, SimConfig, StrategyProfile};
use ghostgame::solver::residuals;
use ghostgame::{solve_equilibrium, validate, ModelParams, SolverOpts, ThresholdPair};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 4001;
const MAX_PATHS: usize = 200;
const MAX_STEPS: usize = 2_000_000;

fn reply(res: Result<Value, String>) -> String {
    match res {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Solves for the threshold pair and samples both value functions on
/// `n_points` evenly spaced beliefs in `[0, 1]`.
#[wasm_bindgen]
pub fn equilibrium_curves(lambda_hi: f64, lambda_lo: f64, c: f64, r: f64, n_points: usize) -> String {
    reply(curves_inner(ModelParams::new(lambda_hi, lambda_lo, c, r), n_points))
}

fn curves_inner(params: ModelParams, n_points: usize) -> Result<Value, String> {
    let n = n_points.clamp(2, MAX_POINTS);
    let report = validate(&params);
    let cert = solve_equilibrium(&params, &SolverOpts::default()).map_err(|e| e.to_string())?;
    let curves = cert.curves(&params).map_err(|e| e.to_string())?;
    let mut p = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        p.push(x);
        u.push(curves.u(x).map_err(|e| e.to_string())?);
        v.push(curves.v(x).map_err(|e| e.to_string())?);
    }
    Ok(json!({
        "b1": cert.b1_star,
        "b2": cert.b2_star,
        "certified": cert.certified,
        "conditions_ok": report.all_ok(),
        "residual_f": cert.residual_f,
        "residual_g": cert.residual_g,
        "p": p,
        "u": u,
        "v": v,
    }))
}

/// Simulates `n_paths` belief paths under the threshold profile `(b1, b2)`.
/// With `shirk` set the controller always exerts low effort while the
/// stopper still filters as if the threshold policy were played. Paths
/// alternate between an active (`theta = 1`) and a passive controller.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn belief_paths(
    lambda_hi: f64,
    lambda_lo: f64,
    c: f64,
    r: f64,
    b1: f64,
    b2: f64,
    p0: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    shirk: bool,
) -> String {
    let params = ModelParams::new(lambda_hi, lambda_lo, c, r);
    reply(paths_inner(params, b1, b2, p0, horizon, dt, n_paths, seed, shirk))
}

#[allow(clippy::too_many_arguments)]
fn paths_inner(
    params: ModelParams,
    b1: f64,
    b2: f64,
    p0: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    shirk: bool,
) -> Result<Value, String> {
    let tp = ThresholdPair::new(b1, b2).map_err(|e| e.to_string())?;
    let profile = StrategyProfile::thresholds(tp.b1, tp.b2);
    let deviation = if shirk { ControlPolicy::constant(Level::Low) } else { profile.control_policy.clone() };
    let cfg = SimConfig { dt, horizon, p0, seed, n_paths: n_paths.max(2), ..SimConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let steps = cfg.n_steps();
    if steps > MAX_STEPS {
        return Err(format!("{steps} steps per path is too many for the browser"));
    }
    let stride = (steps / 500).max(1);
    let mut out = Vec::new();
    for i in 0..n_paths.min(MAX_PATHS) {
        let theta = u8::from(i % 2 == 0);
        let path = simulate_belief_path(&params, &profile, &deviation, theta, &cfg, i, stride)
            .map_err(|e| e.to_string())?;
        out.push(json!({
            "theta": path.theta,
            "t": path.t,
            "p": path.p,
            "stopped_at": path.stopped_at,
            "stopper_payoff": path.stopper_payoff.last(),
            "controller_payoff": path.controller_payoff.last(),
        }));
    }
    Ok(json!({ "paths": out }))
}

/// Residuals of the two indifference conditions on an `n x n` grid over
/// `(b1, b2)` in `(0, 1)^2`, row-major with `b1` along rows. The first
/// `n * n` entries hold `f`, the next `n * n` hold `g`. Cells with
/// `b1 >= b2` or where the closed form fails are `NaN`.
#[wasm_bindgen]
pub fn residual_grid(lambda_hi: f64, lambda_lo: f64, c: f64, r: f64, n: usize) -> Vec<f64> {
    let params = ModelParams::new(lambda_hi, lambda_lo, c, r);
    let n = n.clamp(2, 400);
    let mut f = vec![f64::NAN; n * n];
    let mut g = vec![f64::NAN; n * n];
    let at = |i: usize| (i as f64 + 0.5) / n as f64;
    for i in 0..n {
        for j in i + 1..n {
            let Ok(tp) = ThresholdPair::new(at(i), at(j)) else { continue };
            if let Ok(res) = residuals(&params, tp) {
                f[i * n + j] = res.f_val;
                g[i * n + j] = res.g_val;
            }
        }
    }
    f.extend(g);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn reference_curves() {
        let v = parse(&equilibrium_curves(2.2, 1.4, 1.0, 0.2, 101));
        assert!((v["b1"].as_f64().unwrap() - 0.1248).abs() < 1e-3);
        assert!((v["b2"].as_f64().unwrap() - 0.6184).abs() < 1e-3);
        assert_eq!(v["certified"], Value::Bool(true));
        let u = v["u"].as_array().unwrap();
        let vv = v["v"].as_array().unwrap();
        assert_eq!(u.len(), 101);
        assert!((u[100].as_f64().unwrap() - 2.0).abs() < 1e-9);
        assert!((vv[100].as_f64().unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(u[0].as_f64(), Some(0.0));
    }

    #[test]
    fn invalid_parameters_report_an_error() {
        let v = parse(&equilibrium_curves(1.0, 1.4, 1.0, 0.2, 11));
        assert!(v["error"].is_string());
        let v = parse(&belief_paths(2.2, 1.4, 1.0, 0.2, 0.6, 0.3, 0.5, 1.0, 0.01, 4, 1, false));
        assert!(v["error"].is_string());
    }

    #[test]
    fn paths_are_seeded() {
        let run = |seed| belief_paths(2.2, 1.4, 1.0, 0.2, 0.125, 0.618, 0.5, 5.0, 0.01, 6, seed, false);
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        let v = parse(&run(3));
        let paths = v["paths"].as_array().unwrap();
        assert_eq!(paths.len(), 6);
        for path in paths {
            let p = path["p"].as_array().unwrap();
            assert_eq!(p[0].as_f64(), Some(0.5));
            assert!(p.iter().all(|x| (0.0..=1.0).contains(&x.as_f64().unwrap())));
        }
    }

    #[test]
    fn residual_grid_layout() {
        let n = 20;
        let grid = residual_grid(2.2, 1.4, 1.0, 0.2, n);
        assert_eq!(grid.len(), 2 * n * n);
        assert!(grid[n * n + 5 * n + 2].is_nan());
        assert!(grid[3 * n + 10].is_finite() && grid[n * n + 3 * n + 10].is_finite());
        // f changes sign across the grid near the solution
        let f = &grid[..n * n];
        let finite: Vec<f64> = f.iter().copied().filter(|x| x.is_finite()).collect();
        assert!(finite.iter().any(|&x| x > 0.0) && finite.iter().any(|&x| x < 0.0));
    }
}
