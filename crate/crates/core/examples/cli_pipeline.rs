//! The full mock pipeline through the `forge` command surface, in-process:
//! generate, clean, compile thinker and talker sequences, then print stats.

use std::error::Error;

fn forge(args: &[&str]) -> Result<String, Box<dyn Error>> {
    let argv = std::iter::once("forge").chain(args.iter().copied());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = forge::cli::run_with(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("{} exited {code}: {}", args[0], String::from_utf8_lossy(&err)).into());
    }
    Ok(String::from_utf8(out)?)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("forge-cli-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    forge(&["generate", "--out", &p("raw.jsonl"), "--seed", "1", "--dialogues", "40"])?;
    forge(&["validate", "--corpus", &p("raw.jsonl")])?;
    let clean = forge(&[
        "clean",
        "--corpus",
        &p("raw.jsonl"),
        "--out",
        &p("clean.jsonl"),
        "--seed",
        "1",
    ])?;
    println!("clean: {clean}");
    let thinker = forge(&[
        "build-thinker",
        "--corpus",
        &p("clean.jsonl"),
        "--out",
        &p("thinker.jsonl"),
        "--seed",
        "1",
    ])?;
    println!("build-thinker: {thinker}");
    let talker = forge(&[
        "build-talker",
        "--corpus",
        &p("clean.jsonl"),
        "--out",
        &p("talker.jsonl"),
        "--seed",
        "1",
    ])?;
    println!("build-talker: {talker}");
    forge(&["stats", "--corpus", &p("clean.jsonl"), "--out", &p("stats.json")])?;
    println!("{}", std::fs::read_to_string(p("thinker.jsonl.manifest.json"))?);

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
