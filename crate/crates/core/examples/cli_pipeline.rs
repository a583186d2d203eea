// The command-line pipeline driven in-process: write a config, then run
// `equilibrium`, `sweep` and `verify` into a scratch directory.

use sizestruct::cli;
use sizestruct::config::RunConfig;

pub fn run_example() -> sizestruct::Result<()> {
    let dir = std::env::temp_dir().join(format!("sizestruct-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("baseline.json");
    let mut cfg = RunConfig::baseline(200);
    cfg.output.directory = dir.join("out").to_string_lossy().into_owned();
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).expect("config serializes"))?;
    let config = config.to_string_lossy().into_owned();

    let code = cli::run(["sizestruct", "equilibrium", "--config", &config]);
    println!("equilibrium exit code {code}");
    let code = cli::run([
        "sizestruct", "sweep", "--config", &config, "--param", "model.beta.beta1.params.a", "--values", "2.718281828459045,20.085536923187668",
    ]);
    println!("sweep exit code {code}");
    print!("{}", std::fs::read_to_string(dir.join("out/sweep.csv"))?);
    let code = cli::run(["sizestruct", "verify", "--config", &config]);
    println!("verify exit code {code}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> sizestruct::Result<()> {
    run_example()
}
