// Drive the experiment harness from a config string and compare two
// methods, as the `fedgm run` and `fedgm compare` subcommands do.

use fedgm::harness::{compare, run, ExperimentConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("fedgm-harness-example-{}", std::process::id()));
    let mut dirs = Vec::new();
    for method in ["fedgm", "fedavg"] {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&format!(
            "# quick run on the 60-node graph\n\
             dataset = sbm:tiny\n\
             clients = 3\n\
             method = {method}\n\
             seeds = 0,1\n\
             stage1-epochs = 50\n\
             rounds = 5\n\
             hidden = 32\n\
             final-epochs = 100\n"
        ))?;
        cfg.output = root.join(method);
        let report = run(&cfg, true)?;
        println!(
            "{method}: finals {:?}, csv {}",
            report.summary.finals,
            report.seeds[0].csv.display()
        );
        dirs.push(cfg.output);
    }
    print!("{}", compare(&dirs)?.to_text());
    std::fs::remove_dir_all(&root)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
