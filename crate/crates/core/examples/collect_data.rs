//! Collect random-policy trajectories, save them, and inspect the normalizer.

use deep_koopman::datagen::{collect, split, Dataset, Normalizer};
use deep_koopman::dynamics::Environment;

fn main() {
    let env = Environment::by_name("cartpole").unwrap();
    let data = collect(&env, 200, 15, 7).unwrap();
    println!(
        "{} trajectories, {} transitions, {:.1} simulated seconds",
        data.len(),
        data.transitions(),
        data.duration_seconds()
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cartpole.kpds");
    data.save(&path).unwrap();
    let reloaded = Dataset::load(&path).unwrap();
    println!("saved {} bytes; reload identical: {}", std::fs::metadata(&path).unwrap().len(), reloaded == data);

    let (train, test) = split(&data, 0.2, 1).unwrap();
    println!("split: {} train / {} test", train.len(), test.len());

    let norm = Normalizer::fit(&train);
    println!("state offset {:.3?}", norm.offset);
    println!("state scale  {:.3?}", norm.scale);

    for line in data.to_csv().lines().take(4) {
        println!("{line}");
    }
}
