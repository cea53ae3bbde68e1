//! CSV renderings of analysis results.

use std::fmt::Write;

use crate::ctmc::Ctmc;
use crate::sim::{Summary, Trace};

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `time, <m>_mean, <m>_sd, <m>_ci95 ..., deadlocked`
pub fn summary_csv(s: &Summary) -> String {
    let mut out = String::from("time");
    for m in &s.measures {
        let m = csv_field(m);
        write!(out, ",{m}_mean,{m}_sd,{m}_ci95").unwrap();
    }
    out.push_str(",deadlocked\n");
    for (g, t) in s.grid.iter().enumerate() {
        write!(out, "{}", num(*t)).unwrap();
        for m in 0..s.measures.len() {
            write!(out, ",{},{},{}", num(s.mean[g][m]), num(s.sd[g][m]), num(s.ci[g][m])).unwrap();
        }
        writeln!(out, ",{}", s.deadlocked_by[g]).unwrap();
    }
    out
}

/// `time, <m> ...` for one replication.
pub fn trace_csv(grid: &[f64], measures: &[String], t: &Trace) -> String {
    let mut out = String::from("time");
    for m in measures {
        write!(out, ",{}", csv_field(m)).unwrap();
    }
    out.push('\n');
    for (g, time) in grid.iter().enumerate() {
        write!(out, "{}", num(*time)).unwrap();
        for x in &t.samples[g] {
            write!(out, ",{}", num(*x)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `state, summary, exit_rate`
pub fn states_csv(c: &Ctmc) -> String {
    let mut out = String::from("state,summary,exit_rate\n");
    for (i, s) in c.states.iter().enumerate() {
        writeln!(out, "{i},{},{}", csv_field(&s.to_string()), num(c.exit_rate(i))).unwrap();
    }
    out
}

/// `source, target, rate, labels`
pub fn transitions_csv(c: &Ctmc) -> String {
    let mut out = String::from("source,target,rate,labels\n");
    for (i, row) in c.transitions.iter().enumerate() {
        for t in row {
            writeln!(out, "{i},{},{},{}", t.target, num(t.rate), csv_field(&t.labels.join(" ; "))).unwrap();
        }
    }
    out
}

/// `state, summary, probability`
pub fn transient_csv(c: &Ctmc, probs: &[f64]) -> String {
    let mut out = String::from("state,summary,probability\n");
    for (i, p) in probs.iter().enumerate() {
        writeln!(out, "{i},{},{}", csv_field(&c.states[i].to_string()), num(*p)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
        assert_eq!(csv_field("plain"), "plain");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, 0.1, 1.9287498479639228e-22, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn summary_layout() {
        let s = Summary {
            grid: vec![0.0, 1.5],
            measures: vec!["a".into()],
            replications: 2,
            mean: vec![vec![1.0], vec![2.5]],
            sd: vec![vec![0.0], vec![0.5]],
            ci: vec![vec![0.0], vec![0.25]],
            deadlocked: 1,
            deadlocked_by: vec![0, 1],
        };
        assert_eq!(summary_csv(&s), "time,a_mean,a_sd,a_ci95,deadlocked\n0.0,1.0,0.0,0.0,0\n1.5,2.5,0.5,0.25,1\n");
    }
}
