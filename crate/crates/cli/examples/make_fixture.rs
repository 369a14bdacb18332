//! Regenerate the bundled demo study.
//!
//! cargo run -p xplat-cli --example make_fixture -- crates/cli/fixtures/demo

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use xplat::synth::{fixture, fixture_embeddings, FixtureUser, MESSAGING_APP};

const USERS: usize = 20;
const SEED: u64 = 2024;

fn main() -> Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/fixtures/demo".into()));
    fs::create_dir_all(&dir)?;
    let fx = fixture(USERS, SEED);

    let mut keys = String::new();
    for e in &fx.keystrokes {
        keys.push_str(&serde_json::to_string(e)?);
        keys.push('\n');
    }
    fs::write(dir.join("sms_keystrokes.jsonl"), keys)?;

    let mut fb = String::new();
    for (user, text) in &fx.facebook {
        fb.push_str(&serde_json::to_string(&serde_json::json!({ "user_id": user, "text": text }))?);
        fb.push('\n');
    }
    fs::write(dir.join("facebook.jsonl"), fb)?;

    let mut w = csv::Writer::from_path(dir.join("outcomes.csv"))?;
    let mut header = vec!["user_id".to_string()];
    header.extend(FixtureUser::OUTCOMES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for u in &fx.users {
        let mut row = vec![u.user_id.clone()];
        row.extend(FixtureUser::OUTCOMES.iter().map(|o| u.outcome(o).unwrap().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut lex = Vec::new();
    for (i, m) in fx.lexica.iter().enumerate() {
        let mut one = Vec::new();
        m.write_csv(&mut one)?;
        let start = if i == 0 { 0 } else { one.iter().position(|&b| b == b'\n').unwrap() + 1 };
        lex.extend_from_slice(&one[start..]);
    }
    fs::write(dir.join("lexica.csv"), lex)?;

    fs::write(dir.join("dictionary.txt"), &fx.dictionary)?;

    let dims = 24;
    let mut w = csv::Writer::from_path(dir.join("embeddings.csv"))?;
    let mut header = vec!["user_id".to_string(), "platform".to_string()];
    header.extend((0..dims).map(|j| format!("e{j}")));
    w.write_record(&header)?;
    for (user, platform, v) in fixture_embeddings(&fx.users, dims, SEED + 1) {
        let mut row = vec![user, platform.to_string()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let config = format!(
        r#"# Demo study: {USERS} synthetic participants.
seed = 42
output_dir = "out"

[inputs]
keystrokes = "sms_keystrokes.jsonl"
facebook = "facebook.jsonl"
outcomes = "outcomes.csv"
dictionary = "dictionary.txt"
lexica = "lexica.csv"
embeddings = "embeddings.csv"

[thresholds]
min_words = 500
min_group_frequency = 0.05
fdr_alpha = 0.05

[redaction]
timeout_ms = 60000
apps = ["{MESSAGING_APP}"]

[modeling]
ridge_alpha = 1.0
binary_outcomes = ["gender"]
bootstrap_iterations = 10000
cross_domain = "leave_one_user_out"
ngram_orders = [1, 2, 3]
nmf_k = 8
nmf_iterations = 300
"#
    );
    fs::write(dir.join("config.toml"), config)?;
    println!("wrote {}", dir.display());
    Ok(())
}
