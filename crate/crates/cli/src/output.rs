//! CSV and JSON writers. Floats use the shortest decimal that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gasnet_core::control::{ControlSchedule, GridSearchResult};
use gasnet_core::fv_solver::{Sample, Trajectory};
use gasnet_core::network::Network;
use gasnet_core::stabilization::LyapunovReport;
use gasnet_core::steady_state::SteadyProfile;
use gasnet_core::PressureLaw;
use serde::Serialize;

/// Shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn trajectory_csv(traj: &Trajectory, network: &Network) -> Result<String> {
    let mut out = String::from("t,pipe_id,cell_index,x,rho,q,p\n");
    for s in &traj.samples {
        write_sample(&mut out, s, network)?;
    }
    Ok(out)
}

fn write_sample(out: &mut String, s: &Sample, network: &Network) -> Result<()> {
    let t = num(s.state.time);
    for (grid, pipe) in s.state.grids.iter().zip(&network.pipes) {
        for (i, c) in grid.cells.iter().enumerate() {
            let p = pipe.law.pressure(c.rho)?;
            writeln!(
                out,
                "{t},{},{i},{},{},{},{}",
                grid.pipe_id,
                num(pipe.cell_center(i)),
                num(c.rho),
                num(c.q),
                num(p)
            )?;
        }
    }
    Ok(())
}

/// One row per junction edge, traces in vertex-outgoing orientation.
pub fn junctions_csv(traj: &Trajectory) -> Result<String> {
    let mut out = String::from("t,junction_id,edge,rho_trace,q_trace,entropy_flux_balance\n");
    for s in &traj.samples {
        let t = num(s.state.time);
        for log in &s.junctions {
            for (e, g) in log.traces.iter().enumerate() {
                writeln!(
                    out,
                    "{t},{},{e},{},{},{}",
                    log.junction_id,
                    num(g.rho),
                    num(g.q),
                    num(log.entropy_flux_balance)
                )?;
            }
        }
    }
    Ok(out)
}

pub fn lyapunov_csv(report: &LyapunovReport) -> Result<String> {
    let mut out = String::from("m,t,L,bound\n");
    for (m, ((t, l), b)) in report.times.iter().zip(&report.l_series).zip(report.bound_series()).enumerate() {
        writeln!(out, "{m},{},{},{}", num(*t), num(*l), num(b))?;
    }
    Ok(out)
}

pub fn distance_csv(times: &[f64], distances: &[f64]) -> Result<String> {
    let mut out = String::from("t,l2_distance\n");
    for (t, d) in times.iter().zip(distances) {
        writeln!(out, "{},{}", num(*t), num(*d))?;
    }
    Ok(out)
}

pub fn steady_csv(profiles: &[(String, SteadyProfile)], laws: &[PressureLaw]) -> Result<String> {
    let mut out = String::from("pipe_id,cell_index,x,rho,q,p\n");
    for ((id, prof), law) in profiles.iter().zip(laws) {
        for (i, (x, r)) in prof.x.iter().zip(&prof.rho).enumerate() {
            writeln!(out, "{id},{i},{},{},{},{}", num(*x), num(*r), num(prof.q), num(law.pressure(*r)?))?;
        }
    }
    Ok(out)
}

pub fn schedule_csv(schedule: &ControlSchedule) -> Result<String> {
    let mut out = String::from("k,t,u\n");
    for (k, u) in schedule.samples.iter().enumerate() {
        writeln!(out, "{k},{},{}", num(k as f64 * schedule.interval), num(*u))?;
    }
    Ok(out)
}

pub fn costs_csv(values: &[f64], result: &GridSearchResult) -> Result<String> {
    let mut out = String::from("candidate,u,tv,tracking,total,feasible\n");
    for (k, (u, c)) in values.iter().zip(&result.costs).enumerate() {
        match c {
            Some(c) => writeln!(out, "{k},{},{},{},{},true", num(*u), num(c.tv), num(c.tracking), num(c.total))?,
            None => writeln!(out, "{k},{},,,,false", num(*u))?,
        }
    }
    Ok(out)
}

pub fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes every file after all of them have been produced.
pub fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
