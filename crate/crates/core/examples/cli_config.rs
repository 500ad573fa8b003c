//! Drive the batch front end from a JSON config, as the `dyndev` binary does.

use std::path::PathBuf;

const CONFIG: &str = r#"{
    "lattice": {"horizon": 1.0, "steps": 3, "noise": {"brownian_dim": 1, "jumps": {"marks": [[1.0]], "intensities": [0.4]}}},
    "payoffs": {"a": {"expr": "w0 * w0 * w0 + 0.7 * c0"}, "b": {"expr": "math::exp(0.5 * w0) - c0 * c0"}},
    "drivers": {"v": {"kind": "variance", "alpha": 1.0}, "n": {"kind": "norm_cd", "c": 1.0, "d": 1.0}},
    "deviation": {"payoff": "a", "driver": "n", "partition": [0, 2, 3]},
    "share": {"x_a": "a", "x_b": "b", "driver_a": "n", "driver_b": "v"},
    "check_driver": {"driver": {"kind": "cvar_jump", "a": 0.2}}
}"#;

pub fn run_example() -> std::io::Result<Vec<(String, i32)>> {
    let dir = std::env::temp_dir().join(format!("dyndev-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("run.json");
    std::fs::write(&config, CONFIG)?;
    let mut codes = Vec::new();
    for command in ["build", "deviation", "share", "check-driver"] {
        let out: PathBuf = dir.join(command);
        let code = dyndev::cli::run([
            "dyndev",
            command,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        let mut files: Vec<String> = std::fs::read_dir(&out)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        files.sort();
        println!("{command}: exit {code}, wrote {files:?}");
        codes.push((command.to_string(), code));
    }
    print!("{}", std::fs::read_to_string(dir.join("share").join("summary.json"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(codes)
}

#[allow(dead_code)]
fn main() -> std::io::Result<()> {
    run_example().map(|_| ())
}
