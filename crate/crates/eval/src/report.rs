//! Text and CSV renderings of a metrics table.

use std::fmt::Write;

use crate::metrics::{MetricsTable, RewardMeans};

pub fn text_table(table: &MetricsTable) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<28}{:>6}", "scenario", "n");
    for c in RewardMeans::COLUMNS {
        let _ = write!(out, "{c:>10}");
    }
    let _ = writeln!(out, "{:>8}{:>5}{:>5}", "steps", "p50", "p90");
    for (s, m) in &table.scenarios {
        let _ = write!(out, "{:<28}{:>6}", s.as_str(), m.episodes);
        for v in m.rewards.values() {
            let _ = write!(out, "{v:>10.4}");
        }
        let _ = writeln!(out, "{:>8.2}{:>5}{:>5}", m.mean_steps, m.p50_steps, m.p90_steps);
    }
    let label = if table.complete { "overall" } else { "overall (partial)" };
    let _ = write!(out, "{:<28}{:>6}", label, table.scenarios.values().map(|m| m.episodes).sum::<usize>());
    for v in table.overall.values() {
        let _ = write!(out, "{v:>10.4}");
    }
    out.push('\n');
    out
}

pub fn metrics_csv(table: &MetricsTable) -> String {
    let mut out = format!("scenario,episodes,{},mean_steps,p50_steps,p90_steps,max_steps\n", RewardMeans::COLUMNS.join(","));
    for (s, m) in &table.scenarios {
        let values: Vec<String> = m.rewards.values().iter().map(f64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.as_str(),
            m.episodes,
            values.join(","),
            m.mean_steps,
            m.p50_steps,
            m.p90_steps,
            m.max_steps
        );
    }
    let values: Vec<String> = table.overall.values().iter().map(f64::to_string).collect();
    let _ = writeln!(out, "overall,{},{},,,,", table.scenarios.values().map(|m| m.episodes).sum::<usize>(), values.join(","));
    out
}

pub fn step_histogram_csv(table: &MetricsTable) -> String {
    let mut out = String::from("scenario,steps,episodes\n");
    for (s, m) in &table.scenarios {
        for (steps, n) in &m.step_histogram {
            let _ = writeln!(out, "{},{steps},{n}", s.as_str());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use shopsim_core::reward::RewardBreakdown;
    use shopsim_core::tasks::Scenario;

    #[test]
    fn csv_has_row_per_scenario_plus_overall() {
        let r = RewardBreakdown { r_succ: 1.0, ..Default::default() };
        let t = MetricsTable::from_episodes([(Scenario::SingleTurn, &r, 4), (Scenario::MultiTurn, &r, 9)]);
        let csv = metrics_csv(&t);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("overall,2,"));
        assert_eq!(step_histogram_csv(&t).lines().count(), 3);
        assert!(text_table(&t).contains("overall (partial)"));
    }
}
