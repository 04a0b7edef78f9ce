//! Runs the baseline / GAFL / re-weighting / full ablation on synthetic data
//! and prints test Dice per arm.
//!
//! Usage: `cargo run --release -p noisyseg --example ablation -- [study.json]`

use noisyseg::data::{SynthDatasetConfig, SyntheticSceneConfig};
use noisyseg::harness::study::{run_study, StudyConfig};
use noisyseg::harness::{Ablation, OptimizerConfig, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let study: StudyConfig = match std::env::args().nth(1) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => StudyConfig {
            data: SynthDatasetConfig {
                scenes: 40,
                scene: SyntheticSceneConfig::default(),
                num_experts: 3,
                profiles: None,
                seed: 0,
            },
            run: RunConfig {
                optimizer: OptimizerConfig {
                    learning_rate: 0.01,
                    momentum: 0.9,
                },
                ..RunConfig::default()
            },
            seeds: vec![0, 1, 2],
            arms: vec![
                Ablation::BASELINE,
                Ablation::GAFL_ONLY,
                Ablation::REWEIGHTING_ONLY,
                Ablation::FULL,
            ],
        },
    };
    let start = std::time::Instant::now();
    let results = run_study(&study)?;
    for r in &results {
        let per_class: Vec<String> = r
            .record
            .final_test
            .per_class
            .iter()
            .map(|d| d.map_or("-".into(), |d| format!("{d:.3}")))
            .collect();
        println!(
            "seed {} {:<12} test mean {:.4}  per class [{}]  best iter {}",
            r.seed,
            r.ablation.label(),
            r.test_mean(),
            per_class.join(", "),
            r.record.best.iter
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
