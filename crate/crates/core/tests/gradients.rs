use interpnet::data::{synthesize, ChannelStats, LabelMode, SynthConfig, Task};
use interpnet::model::{Model, ModelSpec};
use interpnet::predict::BaselineMode;
use interpnet::interp::ChannelSelection;
use interpnet::train::{check_gradient, grad_check, random_instance, GradInstance, LossWeights};

#[test]
fn composite_gradient_matches_finite_differences() {
    for seed in 0..4 {
        for task in [Task::Classification, Task::Regression] {
            let inst = random_instance(seed, task, 3, 10, 8, 8, 4).unwrap();
            let r = grad_check(&inst, &LossWeights::default(), 1e-5).unwrap();
            assert!(r.max_error < 1e-4, "seed {seed} {task}: {:?}", r.groups);
            assert_eq!(r.groups[0].0, "interp.log_alpha");
        }
    }
}

#[test]
fn heavier_penalties_and_subsets() {
    let w = LossWeights {
        delta_i: 0.3,
        delta_p: 0.05,
        delta_r: 2.5,
    };
    for label in ["si", "t", "i,t", "si,i"] {
        let mut inst = random_instance(11, Task::Classification, 2, 7, 5, 6, 3).unwrap();
        if let interpnet::model::FrontEnd::Interp { selection, .. } = &mut inst.model.front {
            *selection = ChannelSelection::parse(label).unwrap();
        }
        // the GRU input width follows the subset
        let spec = ModelSpec {
            task: Task::Classification,
            num_channels: 2,
            hidden: 5,
            refs: 7,
            kappa: 10.0,
            selection: ChannelSelection::parse(label).unwrap(),
            baseline: None,
            bins: 7,
        };
        let fresh = Model::new(&spec, ChannelStats::identity(2), 11).unwrap();
        inst.model.gru = fresh.gru;
        let r = grad_check(&inst, &w, 1e-5).unwrap();
        assert!(r.max_error < 1e-4, "{label}: {:?}", r.groups);
    }
}

#[test]
fn baseline_front_ends() {
    let ds = synthesize(
        &SynthConfig {
            num_samples: 4,
            label_mode: LabelMode::Transient,
            rates: [6.0, 6.0],
            ..SynthConfig::default()
        },
        3,
    )
    .unwrap();
    for mode in [BaselineMode::M, BaselineMode::F, BaselineMode::S] {
        for task in [Task::Classification, Task::Regression] {
            let spec = ModelSpec {
                task,
                num_channels: 3,
                hidden: 6,
                refs: 10,
                kappa: 10.0,
                selection: ChannelSelection::ALL,
                baseline: Some(mode),
                bins: 5,
            };
            let model = Model::new(&spec, ChannelStats::identity(3), 2).unwrap();
            let inputs = ds.samples.iter().map(|s| model.encode(s).unwrap()).collect();
            let inst = GradInstance {
                model,
                inputs,
                targets: ds.samples.iter().map(|s| s.target).collect(),
                masks: vec![None; ds.len()],
            };
            let r = grad_check(&inst, &LossWeights::default(), 1e-5).unwrap();
            assert!(r.max_error < 1e-4, "{mode:?} {task}: {:?}", r.groups);
        }
    }
}

#[test]
fn difference_error_shrinks_quadratically() {
    // f(x) = exp(sin x): the central-difference error is O(eps^2)
    let f = |x: &[f64]| x[0].sin().exp();
    let x = [0.7f64];
    let g = [x[0].cos() * x[0].sin().exp()];
    let e1 = check_gradient(f, &x, &g, 1e-2)[0];
    let e2 = check_gradient(f, &x, &g, 5e-3)[0];
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
}
