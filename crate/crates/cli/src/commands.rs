//! One function per subcommand. Each writes its files through
//! [`RunOutput`] and returns a JSON summary for the manifest.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde_json::{json, Value};
use sqm_core::analysis::calibration::{calibrate_eta, gamma_from_ramsey, ramsey_decay};
use sqm_core::analysis::disturbance::{commutator_bound, disturbance_at, variance_form, ZERO_THRESHOLD};
use sqm_core::analysis::tomography::{simulate_tomography, tomo_validate, TomoSimulation, ONE_SIGMA_COVERAGE};
use sqm_core::analysis::{disturbance_map, DisturbanceGrid};
use sqm_core::cavity::{
    filter_vs_joint, lo_leakage_effect, ringup_check, simulate_effective_hamiltonian, simulate_joint_trajectory,
    CavityParams,
};
use sqm_core::ensemble::{trajectory_seed, try_par_map};
use sqm_core::fokker_planck::pde::propagate_pde_series;
use sqm_core::fokker_planck::{
    angular_diffusion_constant, angular_variance_series, propagate_mc, tv_from_uniform, BlochDistribution, Grid,
    InitialCondition, McConfig, PolarDensity, PolarGrid,
};
use sqm_core::retrodiction::{composite_map, mle_with_grid, LikelihoodResult, TransferMap};
use sqm_core::{
    filter, simulate_decimated, simulate_trajectory, Bloch, MeasChannel, QubitState,
};

use crate::config::{bloch, hz, Config, InitialConfig};
use crate::error::CliError;
use crate::io::{f, read_maps, read_record, RunOutput};

fn per_us(rate: f64) -> f64 {
    rate * 1e-6
}

fn to_hz(rate: f64) -> f64 {
    rate / TAU
}

fn arr(b: Bloch) -> [f64; 3] {
    b.to_array()
}

pub fn simulate(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let ch = cfg.channels()?;
    let imp = cfg.imperfections.to_params();
    let s = &cfg.simulate;
    let initial = QubitState::from_vector(bloch(s.initial))?;
    let runs = try_par_map(s.n_traj, |i| {
        simulate_decimated(&initial, &ch, s.duration_s, s.dt_s, s.decimation, trajectory_seed(cfg.seed, i as u64), &imp)
    })?;
    for (i, (traj, rec)) in runs.iter().enumerate() {
        out.record(&format!("record_{i:04}"), rec)?;
        out.trajectory(&format!("trajectory_{i:04}.csv"), traj)?;
    }
    let steps = runs.first().map_or(0, |r| r.1.len());
    Ok(json!({
        "n_traj": s.n_traj,
        "record_steps": steps,
        "internal_steps": steps * s.decimation,
        "internal_dt": s.dt_s / s.decimation as f64,
    }))
}

pub fn filter_cmd(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let path = cfg.filter.record.as_ref().ok_or_else(|| CliError::Config("filter.record is required".into()))?;
    let record = read_record(path)?;
    let initial = QubitState::from_vector(bloch(cfg.filter.initial))?;
    let traj = filter(&initial, &record, &cfg.imperfections.to_params())?;
    out.trajectory("trajectory_filtered.csv", &traj)?;
    Ok(json!({ "steps": record.len(), "final": arr(traj.final_state().bloch()) }))
}

fn write_distribution(out: &mut RunOutput, name: &str, d: &BlochDistribution) -> Result<(), CliError> {
    let planar = matches!(d.grid, Grid::Planar { .. });
    let rows = d.probs.iter().enumerate().map(|(i, &p)| {
        let c = d.grid.bin_center(i);
        if planar {
            vec![f(c[0]), f(c[1]), f(p)]
        } else {
            vec![f(c[0]), f(c[1]), f(c[2]), f(p)]
        }
    });
    if planar {
        out.csv(name, &["x", "y", "p"], rows)
    } else {
        out.csv(name, &["x", "y", "z", "p"], rows)
    }
}

/// Mean radius and peak of the radial marginal, from bin centers.
fn radial_summary(d: &BlochDistribution) -> (f64, f64) {
    let mut mean = 0.0;
    for (i, p) in d.probs.iter().enumerate() {
        let c = d.grid.bin_center(i);
        mean += p * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    }
    let bins = 50;
    let marg = d.radial_marginal(bins);
    let k = marg.iter().enumerate().fold(0, |best, (k, &v)| if v > marg[best] { k } else { best });
    (mean, (k as f64 + 0.5) / bins as f64)
}

pub fn distributions(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let ch = cfg.channels()?;
    let d = &cfg.distributions;
    let grid = if d.ball { Grid::Ball { n: d.bins } } else { Grid::Planar { n: d.bins } };
    let polar = PolarGrid::new(d.pde_nr, d.pde_nphi)?;
    let (initial, density) = match &d.initial {
        InitialConfig::Point(p) => {
            let b = bloch(*p);
            QubitState::from_vector(b)?;
            let dens = (b.norm() == 0.0).then(|| PolarDensity::origin_point(polar));
            (InitialCondition::Point(b), dens)
        }
        InitialConfig::Gaussian(sigma) => {
            if !sigma.is_finite() || *sigma <= 0.0 {
                return Err(CliError::Config("distributions.initial.gaussian must be positive".into()));
            }
            let s2 = 2.0 * sigma * sigma;
            let dens = PolarDensity::from_fn(polar, |x, y| (-(x * x + y * y) / s2).exp())?;
            (InitialCondition::density(&dens), Some(dens))
        }
    };
    let mc_cfg = McConfig { dt: d.dt_s, n_traj: d.n_traj, seed: cfg.seed, imperfections: cfg.imperfections.to_params() };
    let mc = propagate_mc(&initial, &ch, &d.times_s, &mc_cfg, grid)?;
    let pde = if d.pde && !d.ball {
        let dens = density.ok_or_else(|| {
            CliError::Config("the PDE needs a gaussian start or a point start at the origin".into())
        })?;
        Some(propagate_pde_series(&dens, &ch, &d.times_s, d.dt_pde_s)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (k, dist) in mc.iter().enumerate() {
        write_distribution(out, &format!("dist_mc_{k:03}.csv"), dist)?;
        let (mean_r, peak_r) = radial_summary(dist);
        let mut row = json!({
            "t": dist.time,
            "mass": dist.mass(),
            "mean_radius": mean_r,
            "radial_peak": peak_r,
            "azimuthal_tv_from_uniform": tv_from_uniform(&dist.azimuthal_marginal(36)),
        });
        if let Some(series) = &pde {
            let cart = series[k].to_cartesian(d.bins);
            write_distribution(out, &format!("dist_pde_{k:03}.csv"), &cart)?;
            row["pde_mass"] = json!(series[k].mass());
            row["tv_pde_mc"] = json!(cart.total_variation(dist)?);
        }
        rows.push(row);
    }
    Ok(json!({ "times": rows }))
}

pub fn diffusion(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let ch = cfg.channels()?;
    let d = &cfg.diffusion;
    let start = Bloch::in_plane(d.start_radius, d.start_angle_deg.to_radians());
    let mc_cfg = McConfig { dt: d.dt_s, n_traj: d.n_traj, seed: cfg.seed, imperfections: cfg.imperfections.to_params() };
    let res = angular_variance_series(&ch, d.ring_inner, d.ring_outer, start, &d.times_s, &mc_cfg)?;
    let rows = res.times.iter().zip(&res.variances).filter(|(_, v)| v.is_finite()).map(|(t, v)| vec![f(*t), f(*v)]);
    out.csv("variance.csv", &["t", "variance"], rows)?;
    let theory = angular_diffusion_constant(&ch, d.ring_inner, d.ring_outer);
    let summary = json!({
        "slope": res.slope,
        "slope_per_us": per_us(res.slope),
        "intercept": res.intercept,
        "r_squared": res.r_squared,
        "diffusive": res.diffusive,
        "theory_slope": theory,
        "theory_slope_per_us": per_us(theory),
        "relative_error": res.slope / theory - 1.0,
        "counts": res.counts,
        "ring": [d.ring_inner, d.ring_outer],
    });
    out.json("slope.json", &summary)?;
    Ok(summary)
}

pub fn disturbance(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let ch = cfg.channels()?;
    let d = &cfg.disturbance;
    let grids = [
        ("sphere", DisturbanceGrid::Sphere { n_theta: d.sphere_n_theta, n_phi: d.sphere_n_phi }),
        ("disk", DisturbanceGrid::Disk { n: d.disk_n }),
        ("ball", DisturbanceGrid::Ball { n: d.ball_n }),
    ];
    let mut summary = json!({ "dt": d.dt_s });
    for (name, grid) in grids {
        let field = disturbance_map(&ch, grid, d.dt_s);
        let rows = field.points.iter().zip(&field.values).map(|(p, v)| vec![f(p.x), f(p.y), f(p.z), f(*v)]);
        out.csv(&format!("disturbance_{name}.csv"), &["x", "y", "z", "d"], rows)?;
        summary[name] = json!({
            "points": field.points.len(),
            "max": field.max(),
            "min": field.min(),
            "zeros": field.zeros(ZERO_THRESHOLD).iter().map(|b| arr(*b)).collect::<Vec<_>>(),
        });
    }
    // Pure-state identity and bound over the sphere grid.
    let (mut identity, mut slack) = (0.0f64, f64::INFINITY);
    for p in grids[0].1.points(&ch) {
        let s = QubitState::from_vector(p)?;
        let lhs = disturbance_at(&s, &ch, d.dt_s);
        identity = identity.max((lhs - variance_form(&s, &ch, d.dt_s)).abs());
        slack = slack.min(lhs - commutator_bound(&s, &ch, d.dt_s));
    }
    summary["max_identity_error"] = json!(identity);
    summary["min_bound_slack"] = json!(slack);
    out.json("disturbance.json", &summary)?;
    Ok(summary)
}

fn mle_report(res: &LikelihoodResult) -> Value {
    json!({
        "mle": arr(res.mle),
        "loglik": res.log_likelihood,
        "region_boundary": res.region_boundary.iter().map(|b| arr(*b)).collect::<Vec<_>>(),
        "n_records": res.n_records,
        "degenerate": res.degenerate,
        "iterations": res.iterations,
    })
}

/// Composite maps of `n` records simulated from `prep`.
pub fn simulate_maps(
    prep: Bloch,
    channels: &[MeasChannel],
    duration: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<TransferMap>, CliError> {
    let initial = QubitState::from_vector(prep)?;
    let none = Default::default();
    Ok(try_par_map(n, |i| {
        let (_, rec) = simulate_trajectory(&initial, channels, duration, dt, trajectory_seed(seed, i as u64), &none)?;
        composite_map(&rec, &none)
    })?)
}

pub fn mle(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let m = &cfg.mle;
    if let Some(path) = &m.maps {
        let maps = read_maps(path)?;
        let res = mle_with_grid(&maps, m.region_grid)?;
        let report = mle_report(&res);
        out.json("mle.json", &report)?;
        return Ok(report);
    }
    let ch = cfg.channels()?;
    let mut results = Vec::new();
    let mut inside = 0;
    for (k, &p) in m.preparations.iter().enumerate() {
        let truth = bloch(p);
        let maps = simulate_maps(truth, &ch, m.duration_s, m.dt_s, m.n_traj, trajectory_seed(cfg.seed, k as u64))?;
        if m.write_maps {
            out.maps(&format!("maps_{k:02}.csv"), &maps)?;
        }
        let res = mle_with_grid(&maps, m.region_grid)?;
        let contains = res.region_contains(&maps, &truth)?;
        inside += usize::from(contains);
        let mut report = mle_report(&res);
        report["truth"] = json!(p);
        report["truth_in_region"] = json!(contains);
        out.json(&format!("mle_{k:02}.json"), &report)?;
        results.push(json!({ "truth": p, "mle": arr(res.mle), "truth_in_region": contains }));
    }
    Ok(json!({ "preparations": results, "inside": inside, "total": m.preparations.len() }))
}

pub fn calibrate(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let ch = cfg.channels()?;
    let c = &cfg.calibrate;
    let mut eta = Vec::new();
    let mut ramsey = Vec::new();
    for (i, channel) in ch.iter().enumerate() {
        let seed = trajectory_seed(cfg.seed, i as u64);
        if channel.eta > 0.0 && !channel.dephasing_only {
            let e = calibrate_eta(channel, c.tau_s, c.dt_s, c.n_records, seed)?;
            eta.push(json!({
                "channel": i,
                "eta_true": channel.eta,
                "eta_estimate": e.eta,
                "relative_error": e.eta / channel.eta - 1.0,
                "mean_up": e.mean_up,
                "mean_down": e.mean_down,
                "sigma": e.sigma,
            }));
        }
        let mc_cfg = McConfig { dt: c.ramsey_dt_s, n_traj: c.ramsey_n_traj, seed, imperfections: Default::default() };
        let data = ramsey_decay(std::slice::from_ref(channel), &c.ramsey_times_s, &mc_cfg)?;
        out.csv(
            &format!("ramsey_{i}.csv"),
            &["t", "mean"],
            data.times.iter().zip(&data.means).map(|(t, m)| [f(*t), f(*m)]),
        )?;
        let g = gamma_from_ramsey(&data)?;
        ramsey.push(json!({
            "channel": i,
            "gamma_true_hz_2pi": to_hz(channel.gamma),
            "gamma_estimate_hz_2pi": to_hz(g),
            "relative_error": g / channel.gamma - 1.0,
        }));
    }
    let mut summary = json!({ "eta": eta, "ramsey": ramsey });
    if c.tomography {
        let filter_channels =
            ch.iter().map(|x| MeasChannel { gamma: x.gamma * c.tomo_filter_gamma_scale, ..*x }).collect();
        let sim = TomoSimulation {
            initial: bloch(c.tomo_initial),
            channels: ch.clone(),
            filter_channels,
            duration: c.tomo_duration_s,
            dt: c.tomo_dt_s,
            n_traj: c.tomo_n_traj,
            seed: cfg.seed,
            readout_fidelity: c.readout_fidelity,
        };
        let samples = simulate_tomography(&sim)?;
        let cmp = tomo_validate(&samples, c.tomo_voxels, c.tomo_min_count)?;
        let rows = cmp.rows.iter().map(|r| {
            vec![
                r.voxel[0].to_string(),
                r.voxel[1].to_string(),
                r.voxel[2].to_string(),
                ["x", "y", "z"][r.component].to_string(),
                f(r.predicted),
                f(r.measured),
                f(r.err),
                r.count.to_string(),
            ]
        });
        out.csv(
            "tomography.csv",
            &["voxel_ix", "voxel_iy", "voxel_iz", "component", "predicted", "measured", "err", "count"],
            rows,
        )?;
        let test = cmp.binomial_test(ONE_SIGMA_COVERAGE, 0.99);
        summary["tomography"] = json!({
            "rows": test.total,
            "within": test.within,
            "fraction_within": test.fraction,
            "expected": test.expected,
            "p_value": test.p_value,
            "pass": test.pass,
            "flagged": cmp.flagged,
            "filter_gamma_scale": c.tomo_filter_gamma_scale,
        });
    }
    out.json("calibration.json", &summary)?;
    Ok(summary)
}

pub fn cavity_params(cfg: &Config) -> Result<CavityParams, CliError> {
    let o = &cfg.oracle;
    Ok(CavityParams::for_rate(
        hz(o.chi_hz_2pi),
        hz(o.kappa_hz_2pi),
        hz(o.gamma_hz_2pi),
        o.delta_deg.to_radians(),
        o.fock_dim,
        o.eta,
    )?)
}

pub fn oracle(cfg: &Config, out: &mut RunOutput) -> Result<Value, CliError> {
    let o = &cfg.oracle;
    let p = cavity_params(cfg)?;
    let fit = simulate_effective_hamiltonian(&p, o.duration_s, o.dt_s)?;
    let mut result = json!({
        "gamma_fit": to_hz(fit.gamma_fit),
        "gamma_target": to_hz(fit.gamma_target),
        "axis_fit_deg": fit.axis_fit.to_degrees(),
        "truncation_max_pop": fit.truncation_max_pop,
        "n_bar0": p.abar0 * p.abar0,
        "g_tilde": p.g_tilde(),
        "units": "gamma_fit and gamma_target in Hz/2pi, g_tilde in rad/s",
    });
    if o.ringup {
        let windows = ringup_check(&p, o.ringup_duration_s, o.ringup_window_s, o.dt_s)?;
        let rows = windows.iter().map(|w| vec![f(w.t_start), f(w.t_end), f(to_hz(w.rate)), f(to_hz(w.expected))]);
        out.csv("ringup.csv", &["t_start", "t_end", "rate", "expected"], rows)?;
        let worst = windows.iter().skip(1).map(|w| (w.rate / w.expected - 1.0).abs()).fold(0.0, f64::max);
        result["ringup_max_relative_error"] = json!(worst);
    }
    if let Some(a) = o.lo_leak {
        let l = lo_leakage_effect(&p, a, o.compare_duration_s, o.dt_s)?;
        result["lo_leak"] = json!({
            "amplitude": a,
            "rate_fit": l.rate_fit,
            "rate_expected": l.rate_expected,
            "units": "rad/s",
        });
    }
    if o.compare_traj > 0 {
        let initial = QubitState::from_vector(Bloch::in_plane(1.0, p.delta + FRAC_PI_2))?;
        let c = filter_vs_joint(&p, &initial, o.compare_duration_s, o.dt_s, o.record_dt_s, o.compare_traj, cfg.seed)?;
        result["filter_comparison"] = json!({
            "mean_trace_distance": c.mean_trace_distance,
            "max_trace_distance": c.max_trace_distance,
            "min_cavity_purity": c.min_cavity_purity,
            "max_top_population": c.max_top_population,
            "n_traj": c.n_traj,
        });
        let jt = simulate_joint_trajectory(&p, &initial, o.compare_duration_s, o.dt_s, o.record_dt_s, cfg.seed)?;
        out.record("joint_record", &jt.record)?;
        result["joint_record_note"] =
            json!("filter joint_record.csv with imperfections.ringup_kappa_hz_2pi equal to oracle.kappa_hz_2pi");
    }
    out.json("oracle.json", &result)?;
    Ok(result)
}
