//! Trajectory CSV: one row per (step, agent) with columns
//! `t,agent,px,py,vx,vy,ux,uy`.

use std::fmt::Write as _;

use ndarray::Array2;

use super::dynamics::SwarmState;
use crate::error::{Error, Result};

pub const HEADER: &str = "t,agent,px,py,vx,vy,ux,uy";

pub fn write_states_csv(states: &[SwarmState]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (t, s) in states.iter().enumerate() {
        for i in 0..s.n_agents() {
            let (p, v, u) = (s.positions.row(i), s.velocities.row(i), s.accelerations.row(i));
            writeln!(
                out,
                "{t},{i},{:?},{:?},{:?},{:?},{:?},{:?}",
                p[0], p[1], v[0], v[1], u[0], u[1]
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

pub fn read_states_csv(text: &str) -> Result<Vec<SwarmState>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err(Error::parse("trajectory csv", format!("expected header {HEADER:?}")));
    }
    let mut rows: Vec<(usize, usize, [f64; 6])> = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse("trajectory csv", format!("line {}: {msg}", no + 2));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let t = fields[0].parse().map_err(|_| bad("bad step index"))?;
        let i = fields[1].parse().map_err(|_| bad("bad agent index"))?;
        let mut vals = [0.0; 6];
        for (v, f) in vals.iter_mut().zip(&fields[2..]) {
            *v = f.parse().map_err(|_| bad("bad number"))?;
        }
        rows.push((t, i, vals));
    }
    let n_steps = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n_agents = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n_steps * n_agents {
        return Err(Error::parse(
            "trajectory csv",
            format!("{} rows do not form a {n_steps}×{n_agents} grid", rows.len()),
        ));
    }
    let mut grid = vec![None; rows.len()];
    for (t, i, vals) in rows {
        let slot = &mut grid[t * n_agents + i];
        if slot.is_some() {
            return Err(Error::parse(
                "trajectory csv",
                format!("duplicate row for t={t}, agent={i}"),
            ));
        }
        *slot = Some(vals);
    }
    (0..n_steps)
        .map(|t| {
            let at = |i: usize, c: usize| grid[t * n_agents + i].expect("grid is full")[c];
            let mut s = SwarmState::new(
                Array2::from_shape_fn((n_agents, 2), |(i, c)| at(i, c)),
                Array2::from_shape_fn((n_agents, 2), |(i, c)| at(i, 2 + c)),
            )?;
            s.accelerations = Array2::from_shape_fn((n_agents, 2), |(i, c)| at(i, 4 + c));
            if s.accelerations.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "trajectory csv".into(),
                });
            }
            Ok(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let mut a = SwarmState::new(
            array![[0.1, 1.0 / 3.0], [-2.5, 1e-300]],
            array![[3.0, -0.7], [0.2, 0.3]],
        )
        .unwrap();
        a.accelerations = array![[10.0, -10.0], [std::f64::consts::PI, 0.0]];
        let states = vec![a.clone(), a];
        let text = write_states_csv(&states);
        assert!(text.starts_with("t,agent,px,py,vx,vy,ux,uy\n0,0,"));
        assert_eq!(read_states_csv(&text).unwrap(), states);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_states_csv("a,b\n").is_err());
        assert!(read_states_csv(&format!("{HEADER}\n0,0,1,2,3,4,5\n")).is_err());
        assert!(read_states_csv(&format!(
            "{HEADER}\n0,0,1,2,3,4,5,6\n0,1,1,2,3,4,5,6\n1,0,1,2,3,4,5,6\n"
        ))
        .is_err());
        assert!(read_states_csv(&format!("{HEADER}\n0,0,1,2,3,4,5,x\n")).is_err());
    }
}
