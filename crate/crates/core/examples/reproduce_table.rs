//! Regenerate a reduced prediction table through the same code path as `koopman reproduce table1`.

use deep_koopman::cli::{table1, ExperimentConfig, TABLE_STEP};
use deep_koopman::eval::{table1_csv, Method};

fn main() {
    let mut config = ExperimentConfig::default();
    config.data.n_traj = 500;
    config.data.test_traj = 100;
    config.model.hidden = vec![32, 32];
    config.model.train.epochs = 10;
    config.reproduce.envs = vec!["damping_pendulum".into(), "mountaincar".into()];
    config.reproduce.methods = vec![Method::Dkuc, Method::Dkac, Method::Krbf];
    config.reproduce.seeds = 2;
    config.validate().unwrap();

    let table = table1(&config).unwrap();
    print!("{}", table1_csv(&table.reports, TABLE_STEP));
    for report in &table.reports {
        let flagged: usize = report.methods.iter().map(|m| m.flagged_count()).sum();
        println!("{}: {} trajectories scored, {flagged} flagged as diverging", report.env, report.trajectories);
    }
}
