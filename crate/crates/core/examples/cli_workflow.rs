// The command-line workflow end to end in a scratch directory: generate a
// corpus, train a planner and a plan-guided simplifier, simplify, evaluate,
// time the systems and replay a run from its manifest.

use docsimp::cli::main_with;
use std::fs;
use std::path::PathBuf;

fn docsimp(args: &[&str]) -> docsimp::Result<()> {
    println!("$ docsimp {}", args.join(" "));
    match main_with(std::iter::once("docsimp").chain(args.iter().copied())) {
        0 => Ok(()),
        code => Err(docsimp::Error::Usage(format!("{} exited with {code}", args[0]))),
    }
}

pub fn run_example() -> docsimp::Result<()> {
    let root: PathBuf = std::env::temp_dir().join(format!("docsimp-cli-{}", std::process::id()));
    fs::create_dir_all(&root)?;
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let tiny = ["--epochs", "8", "--d-model", "32", "--heads", "2", "--layers", "1", "--ffn", "64", "--d-ctx", "32", "--radius", "3", "--lr", "1e-3", "--max-len", "128"];

    let result = (|| {
        docsimp(&["generate-data", "--out", &p("data"), "--docs", "200", "--min-sentences", "3", "--max-sentences", "6", "--seed", "5"])?;
        let data = p("data");
        let mut planner = vec!["train", "--corpus", &data, "--kind", "planner", "--out", &p("planner.ckpt")].into_iter().map(String::from).collect::<Vec<_>>();
        planner.extend(tiny.iter().map(|s| s.to_string()));
        docsimp(&planner.iter().map(String::as_str).collect::<Vec<_>>())?;
        let mut guided = vec!["train", "--corpus", &data, "--task", "plan", "--out", &p("guided.ckpt")].into_iter().map(String::from).collect::<Vec<_>>();
        guided.extend(tiny.iter().map(|s| s.to_string()));
        docsimp(&guided.iter().map(String::as_str).collect::<Vec<_>>())?;

        docsimp(&[
            "simplify", "--corpus", &data, "--strategy", "pipeline", "--model", &p("guided.ckpt"), "--planner", &p("planner.ckpt"),
            "--beam", "2", "--max-len", "40", "--out", &p("pipeline.jsonl"),
        ])?;
        docsimp(&[
            "evaluate", "--corpus", &data, "--system", &format!("pipeline={}", p("pipeline.jsonl")), "--system", "reference=references",
            "--system", "input=source", "--out", &p("eval.csv"),
        ])?;
        print!("{}", fs::read_to_string(p("eval.csv"))?);

        let system = format!("name=pipeline,model={},planner={},plan=predicted", p("guided.ckpt"), p("planner.ckpt"));
        docsimp(&["bench", "--corpus", &data, "--system", &system, "--beam", "1", "--max-len", "32", "--out", &p("bench.csv")])?;
        print!("{}", fs::read_to_string(p("bench.csv"))?);

        let before = fs::read(p("pipeline.jsonl"))?;
        docsimp(&["rerun-from-manifest", "--manifest", &p("pipeline.jsonl.manifest.json")])?;
        println!("rerun reproduced the outputs byte for byte: {}", before == fs::read(p("pipeline.jsonl"))?);
        Ok(())
    })();
    fs::remove_dir_all(&root)?;
    result
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
