//! CSV and text serialization. Column order is part of the file contract.
//!
//! Reals are printed with 9 significant digits in `%g` style: trailing zeros
//! dropped, scientific notation outside `1e-4 <= |x| < 1e9`.

use std::fmt::Write as _;

use crate::analysis::BoundTable;
use crate::experiment::AggregateResult;
use crate::mechanism::RoundRecord;

pub const TRAJECTORY_HEADER: &str =
    "t,chosen,greedy,compensated,compensation,drift,raw_reward,feedback,cum_regret,cum_compensation";

pub const SWEEP_HEADER: &str =
    "policy,l,regret_mean,regret_std,comp_mean,comp_std,comp_rounds_mean,arm1_err_mean";

pub const CURVES_HEADER: &str = "policy,l,t,cum_regret_mean,cum_compensation_mean";

/// Formats `x` with 9 significant digits, like C's `%.9g`.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_fraction(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn trajectory_row(r: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.chosen,
        r.greedy,
        u8::from(r.compensated),
        fmt_real(r.compensation),
        fmt_real(r.drift),
        fmt_real(r.raw_reward),
        fmt_real(r.feedback),
        fmt_real(r.cum_regret),
        fmt_real(r.cum_compensation),
    )
}

pub fn trajectory_csv<'a>(records: impl IntoIterator<Item = &'a RoundRecord>) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&trajectory_row(r));
        out.push('\n');
    }
    out
}

/// One row per `(policy, l)` cell.
pub fn sweep_csv(result: &AggregateResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for cell in &result.cells {
        let s = &cell.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            cell.policy,
            fmt_real(cell.l),
            fmt_real(s.regret.mean),
            fmt_real(s.regret.std),
            fmt_real(s.compensation.mean),
            fmt_real(s.compensation.std),
            fmt_real(s.comp_rounds.mean),
            fmt_real(s.arm1_rel_error.mean),
        )
        .unwrap();
    }
    out
}

/// Long-format mean curves, or `None` when no cell captured curves.
pub fn curves_csv(result: &AggregateResult) -> Option<String> {
    if result.cells.iter().all(|c| c.curves.is_none()) {
        return None;
    }
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for cell in &result.cells {
        let Some(curves) = &cell.curves else { continue };
        for ((t, reg), comp) in curves.rounds.iter().zip(&curves.cum_regret).zip(&curves.cum_compensation) {
            writeln!(
                out,
                "{},{},{},{},{}",
                cell.policy,
                fmt_real(cell.l),
                t,
                fmt_real(*reg),
                fmt_real(*comp)
            )
            .unwrap();
        }
    }
    Some(out)
}

/// Gnuplot script drawing regret and compensation curves from `curves_file`.
pub fn gnuplot_script(result: &AggregateResult, curves_file: &str) -> String {
    let mut out = String::new();
    out.push_str("set datafile separator ','\nset key left top\nset xlabel 't'\nset terminal pngcairo size 900,600\n");
    for (column, name) in [(4, "regret"), (5, "compensation")] {
        writeln!(out, "set output 'cum_{name}.png'\nset ylabel 'cumulative {name}'").unwrap();
        let lines: Vec<String> = result
            .cells
            .iter()
            .filter(|c| c.curves.is_some())
            .map(|c| {
                let (p, l) = (c.policy.to_string(), fmt_real(c.l));
                format!(
                    "'{curves_file}' using 3:((strcol(1) eq \"{p}\" && strcol(2) eq \"{l}\") ? ${column} : 1/0) with lines title '{p} l={l}'"
                )
            })
            .collect();
        writeln!(out, "plot {}", lines.join(", \\\n     ")).unwrap();
    }
    out
}

/// Labeled bound table, one `name value` pair per line.
pub fn bounds_text(table: &BoundTable) -> String {
    let mut out = String::new();
    for (name, value) in table.rows() {
        writeln!(out, "{name:<34}{}", fmt_real(value)).unwrap();
    }
    out
}
