// Running a TOML scenario and writing its report files.

use thermocount::scenario::{emit_report, run_scenario, ReportFormat, Scenario};

const SCENARIO: &str = r#"
task = "count"

[f]
depth = 1
values = { "0" = 1.0, "1" = 1.4142135623730951 }

[g]
depth = 1
values = { "0" = 1.7320508075688772, "1" = 1.0 }

[count]
m = "star"
xi = 0.5
t_from = 8.0
t_to = 14.0
t_step = 0.5

[run]
out_dir = "scenario-out"
"#;

pub fn run_example() -> thermocount::Result<()> {
    let s = Scenario::from_toml(SCENARIO)?;
    let outcome = run_scenario(&s)?;
    let dir = std::env::temp_dir().join(format!("thermocount-example-{}", std::process::id()));
    for path in emit_report(&outcome, &s.to_toml(), &dir, ReportFormat::CsvAndJson)? {
        println!("wrote {}", path.display());
    }
    for (k, v) in &outcome.scalars {
        println!("{k} = {v}");
    }
    println!("status {:?} (exit code {})", outcome.status, outcome.status.exit_code());

    match Scenario::from_toml("[count]\nxi = -1.0\n").and_then(|s| s.validate()) {
        Err(e) => println!("rejected: {e}"),
        Ok(()) => println!("negative xi accepted?"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> thermocount::Result<()> {
    run_example()
}
