use proptest::prelude::*;

use qaoa_rl::formats::{load_checkpoint, load_instance, load_schedule, save_checkpoint, save_instance, save_schedule};
use qaoa_rl_core::chain::{ChainSpec, Schedule};
use qaoa_rl_core::env::{ObsMode, RewardMode, ACTION_MAX};
use qaoa_rl_core::neural::{GaussianPolicy, Mlp, ValueNet};
use qaoa_rl_core::ppo::{CheckpointMeta, PolicyCheckpoint};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..1e3, -1e-300f64..1e-300, Just(0.0), Just(-0.0), Just(f64::MAX / 2.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoints_round_trip_exactly(
        policy in prop::collection::vec(finite(), 2 * 32 + 32 + 32 * 16 + 16 + 16 * 2 + 2),
        value in prop::collection::vec(finite(), 2 * 32 + 32 + 32 * 16 + 16 + 16 + 1),
        log_std in (-5.0f64..1.0, -5.0f64..1.0),
        normalized in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let ck = PolicyCheckpoint {
            policy: GaussianPolicy { mean_net: Mlp::from_params(&[2, 32, 16, 2], policy).unwrap(), log_std: [log_std.0, log_std.1] },
            value: ValueNet { net: Mlp::from_params(&[2, 32, 16, 1], value).unwrap() },
            obs_mode: ObsMode::Intensive,
            reward_mode: if normalized { RewardMode::Normalized } else { RewardMode::Raw },
            append_time: false,
            p_steps: 5,
            action_bounds: [0.0, ACTION_MAX],
            meta: CheckpointMeta { n_sites: 128, master_seed: seed, epochs: 1024, episodes_per_epoch: 100 },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        for (a, b) in back.policy.mean_net.params().iter().zip(ck.policy.mean_net.params()) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn instances_and_schedules_round_trip(
        couplings in prop::collection::vec(0.0f64..=1.0, 2..20).prop_map(|mut c| { if c.len() % 2 == 1 { c.pop(); } c }),
        seed in prop::option::of(any::<u64>()),
        angles in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..16),
    ) {
        prop_assume!(couplings.len() >= 4);
        let dir = tempfile::tempdir().unwrap();
        let spec = ChainSpec::new(couplings, 0.0, seed).unwrap();
        save_instance(&dir.path().join("i.json"), &spec).unwrap();
        prop_assert_eq!(load_instance(&dir.path().join("i.json")).unwrap(), spec);

        let (g, b): (Vec<f64>, Vec<f64>) = angles.into_iter().unzip();
        let s = Schedule::new(g, b).unwrap();
        save_schedule(&dir.path().join("s.json"), &s).unwrap();
        prop_assert_eq!(load_schedule(&dir.path().join("s.json")).unwrap(), s);
    }
}
