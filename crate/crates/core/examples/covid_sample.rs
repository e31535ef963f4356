//! Writes the synthetic COVID-format sample shipped in `data/`.
//!
//! Four variables (restriction, mobility, searches, new_cases), 27 units and
//! 20 days from a lag-1 SVAR with a random contemporaneous DAG. The values
//! are simulated; they only match the layout of the real data.
//!
//! cargo run -p dyncausal --example covid_sample -- data/covid_sample.csv

use std::path::PathBuf;

use dyncausal::datagen::{simulate_svar, Scenario, ScenarioSpec, StrengthFn};
use dyncausal::io::write_panel_csv;

fn main() -> dyncausal::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("data/covid_sample.csv"), PathBuf::from);
    let spec = ScenarioSpec {
        p: 4,
        m: 27,
        t_len: 20,
        ..ScenarioSpec::new(Scenario::Svar2, StrengthFn::Cosine, 2020)
    };
    let (data, _) = simulate_svar(&spec)?;
    let names = ["restriction", "mobility", "searches", "new_cases"];
    let data = data.with_names(names.iter().map(|s| s.to_string()).collect())?;
    write_panel_csv(&out, &data)
}
