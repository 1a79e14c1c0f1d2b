use neuroflap::snn::{
    fire, inject_input, readout, step_membrane, step_synaptic_current, ControllerVariant,
    LayerState, Mode, Network, NetworkSpec, SubNetwork, SubRuntime, Topology, IMU_DIM, REF_DIM,
};
use neuroflap::train::{init_subnetwork, InitConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec(seed: u64, variant: ControllerVariant) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = InitConfig {
        input_gain: 3.0,
        recurrent_gain: 1.0,
        ..InitConfig::default()
    };
    let mut estimator = init_subnetwork(&Topology::estimator(16, 12), &cfg, &mut rng);
    estimator.input_scale = (0..IMU_DIM).map(|_| rng.random_range(0.5..2.0)).collect();
    estimator.output_scale = vec![0.1, 0.05, 0.02];
    let mut controller = init_subnetwork(&Topology::controller(10, variant), &cfg, &mut rng);
    controller.output_scale = vec![0.2; variant.outputs()];
    NetworkSpec {
        estimator,
        controller,
        variant,
        mode: Mode::Dense,
    }
}

fn random_inputs(seed: u64, steps: usize) -> Vec<([f32; IMU_DIM], [f32; REF_DIM])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| {
            let mut imu = [0.0f32; IMU_DIM];
            let mut refs = [0.0f32; REF_DIM];
            imu.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
            refs.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
            (imu, refs)
        })
        .collect()
}

type Trace = Vec<(Vec<f32>, Vec<f32>, Vec<usize>)>;

fn run(net: &mut Network, inputs: &[([f32; IMU_DIM], [f32; REF_DIM])]) -> Trace {
    inputs
        .iter()
        .map(|(imu, refs)| {
            let (s, u) = net.step(imu, refs).unwrap();
            let (s, u) = (s.to_vec(), u.to_vec());
            (s, u, net.spike_counts())
        })
        .collect()
}

#[test]
fn quiescent_under_zero_input() {
    let spec = small_spec(1, ControllerVariant::Pwm);
    for mode in [Mode::Dense, Mode::EventDriven] {
        let mut net = Network::with_mode(&spec, mode).unwrap();
        for _ in 0..300 {
            let (s, u) = net.step(&[0.0; IMU_DIM], &[0.0; REF_DIM]).unwrap();
            assert!(s.iter().chain(u).all(|&v| v == 0.0));
            assert!(net.spike_counts().iter().all(|&c| c == 0));
        }
    }
}

#[test]
fn dense_and_event_driven_traces_identical() {
    for seed in 0..5 {
        let spec = small_spec(seed, ControllerVariant::Pwm);
        let inputs = random_inputs(100 + seed, 1000);
        let dense = run(&mut Network::with_mode(&spec, Mode::Dense).unwrap(), &inputs);
        let event = run(&mut Network::with_mode(&spec, Mode::EventDriven).unwrap(), &inputs);
        let active: usize = dense.iter().map(|t| t.2.iter().sum::<usize>()).sum();
        assert!(active > 0, "test network never fired");
        for (d, e) in dense.iter().zip(&event) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&d.0), bits(&e.0));
            assert_eq!(bits(&d.1), bits(&e.1));
            assert_eq!(d.2, e.2);
        }
    }
}

#[test]
fn reset_then_rerun_is_identical() {
    let spec = small_spec(7, ControllerVariant::PitchOffset);
    let inputs = random_inputs(8, 400);
    let mut net = Network::new(&spec).unwrap();
    let a = run(&mut net, &inputs);
    net.reset_state();
    let b = run(&mut net, &inputs);
    assert_eq!(a, b);
    net.reset_state();
    assert!(net
        .estimator()
        .layer_states()
        .chain(net.controller().layer_states())
        .all(|s| s.syn_current.iter().chain(&s.membrane).chain(&s.spikes).all(|&v| v == 0.0)));
    let (s, u) = net.step(&[0.0; IMU_DIM], &[0.0; REF_DIM]).unwrap();
    assert!(s.iter().chain(u).all(|&v| v == 0.0));
}

#[test]
fn mid_sequence_reset_matches_fresh_network() {
    let spec = small_spec(9, ControllerVariant::YawOffset);
    let inputs = random_inputs(10, 600);
    let mut net = Network::new(&spec).unwrap();
    run(&mut net, &inputs[..250]);
    net.reset_state();
    let resumed = run(&mut net, &inputs[250..]);
    let fresh = run(&mut Network::new(&spec).unwrap(), &inputs[250..]);
    assert_eq!(resumed, fresh);
}

#[test]
fn outputs_are_causal() {
    let spec = small_spec(11, ControllerVariant::Pwm);
    let a_inputs = random_inputs(12, 300);
    let mut b_inputs = a_inputs.clone();
    for (k, step) in b_inputs.iter_mut().enumerate().skip(150) {
        step.0[k % IMU_DIM] += 5.0;
    }
    let a = run(&mut Network::new(&spec).unwrap(), &a_inputs);
    let b = run(&mut Network::new(&spec).unwrap(), &b_inputs);
    assert_eq!(a[..150], b[..150]);
    assert_ne!(a[150..], b[150..]);
}

#[test]
fn controller_sees_same_tick_estimate() {
    let spec = small_spec(13, ControllerVariant::Pwm);
    let mut net = Network::new(&spec).unwrap();
    for (imu, refs) in random_inputs(14, 100) {
        let est = net.step(&imu, &refs).unwrap().0.to_vec();
        let x = net.controller_input();
        assert_eq!(&x[..REF_DIM], &refs);
        assert_eq!(&x[REF_DIM..], est.as_slice());
    }
}

/// Composes the per-equation operations into one tick of a subnetwork.
struct ReferenceSub {
    net: SubNetwork<f32>,
    states: Vec<LayerState<f32>>,
}

impl ReferenceSub {
    fn new(net: &SubNetwork<f32>) -> Self {
        Self {
            states: net.layers.iter().map(|l| LayerState::zeros(l.size())).collect(),
            net: net.clone(),
        }
    }

    fn step(&mut self, x: &[f32]) -> Vec<f32> {
        let scaled: Vec<f32> = x.iter().zip(&self.net.input_scale).map(|(v, c)| v * c).collect();
        let mut below: Option<Vec<f32>> = None;
        for (layer, st) in self.net.layers.iter().zip(self.states.iter_mut()) {
            let v = step_membrane(st, layer).unwrap();
            let rec = layer.w_rec.as_ref().map(|_| st.spikes.clone());
            let i = match &below {
                None => {
                    let u = inject_input(&layer.w_in, &scaled).unwrap();
                    step_synaptic_current(st, None, rec.as_deref(), Some(&u), layer).unwrap()
                }
                Some(s) => step_synaptic_current(st, Some(s), rec.as_deref(), None, layer).unwrap(),
            };
            let s = fire(&v, &layer.params.theta).unwrap();
            st.membrane = v;
            st.syn_current = i;
            st.spikes = s.clone();
            below = Some(s);
        }
        readout(&self.net.readout.w_out, below.as_ref().unwrap())
            .unwrap()
            .iter()
            .zip(&self.net.output_scale)
            .map(|(y, c)| y / c)
            .collect()
    }
}

#[test]
fn runtime_matches_operation_composition() {
    let spec = small_spec(15, ControllerVariant::Pwm);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for mode in [Mode::Dense, Mode::EventDriven] {
        let mut rt = SubRuntime::new(&spec.estimator, mode).unwrap();
        let mut reference = ReferenceSub::new(&spec.estimator);
        for _ in 0..500 {
            let x: Vec<f32> = (0..IMU_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
            let want = reference.step(&x);
            assert_eq!(rt.step(&x).unwrap(), want.as_slice());
            for (a, b) in rt.layer_states().zip(&reference.states) {
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn spec_serialization_round_trip() {
    let spec = small_spec(17, ControllerVariant::YawOffset);
    let text = spec.to_text();
    let back = NetworkSpec::from_text(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.content_hash(), spec.content_hash());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    spec.save(&path).unwrap();
    assert_eq!(NetworkSpec::load(&path).unwrap(), spec);

    let mut other = spec.clone();
    other.controller.readout.w_out.set(0, 0, 0.125);
    assert_ne!(other.content_hash(), spec.content_hash());
}

#[test]
fn rejects_bad_refs_width() {
    let spec = small_spec(18, ControllerVariant::Pwm);
    let mut net = Network::new(&spec).unwrap();
    assert!(net.step(&[0.0; IMU_DIM], &[0.0; 3]).is_err());
    assert!(net.step(&[0.0; 4], &[0.0; REF_DIM]).is_err());
}

fn one_layer_net(n: usize, alpha: f32, beta: f32, theta: f32, w: f32) -> SubNetwork<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = init_subnetwork(
        &Topology {
            inputs: 1,
            layers: vec![(neuroflap::snn::LayerKind::Recurrent, n)],
            outputs: 1,
        },
        &InitConfig::default(),
        &mut rng,
    );
    let l = &mut net.layers[0];
    l.params.alpha = vec![alpha; n];
    l.params.beta = vec![beta; n];
    l.params.theta = vec![theta; n];
    l.w_in = neuroflap::Matrix::from_fn(n, 1, |_, _| w);
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leak_decay_is_geometric(alpha in 0.01f64..0.99, beta in 0.01f64..0.99, i0 in -5.0f64..5.0, v0 in -5.0f64..5.0) {
        let layer = neuroflap::snn::SpikingLayer {
            kind: neuroflap::snn::LayerKind::Feedforward,
            w_in: neuroflap::Matrix::zeros(1, 1),
            w_rec: None,
            params: neuroflap::snn::NeuronParams { alpha: vec![alpha], beta: vec![beta], theta: vec![1e9] },
        };
        let mut st = LayerState::zeros(1);
        st.syn_current[0] = i0;
        st.membrane[0] = v0;
        let i1 = step_synaptic_current(&st, Some(&[0.0]), None, Some(&[0.0]), &layer).unwrap()[0];
        prop_assert_eq!(i1, alpha * i0);
        st.syn_current[0] = 0.0;
        let v1 = step_membrane(&st, &layer).unwrap()[0];
        prop_assert_eq!(v1, beta * v0);
    }

    #[test]
    fn hard_reset_forgets_membrane(beta in 0.01f64..0.99, va in -10.0f64..10.0, vb in -10.0f64..10.0, i in -3.0f64..3.0) {
        let layer = neuroflap::snn::SpikingLayer {
            kind: neuroflap::snn::LayerKind::Feedforward,
            w_in: neuroflap::Matrix::zeros(1, 1),
            w_rec: None,
            params: neuroflap::snn::NeuronParams { alpha: vec![0.5], beta: vec![beta], theta: vec![0.0] },
        };
        let mut st = LayerState::zeros(1);
        st.spikes[0] = 1.0;
        st.syn_current[0] = i;
        st.membrane[0] = va;
        let a = step_membrane(&st, &layer).unwrap();
        st.membrane[0] = vb;
        let b = step_membrane(&st, &layer).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn spikes_stay_binary(seed in 0u64..1000, n in 1usize..20, theta in -1.0f32..2.0) {
        let net = one_layer_net(n, 0.9, 0.9, theta, 1.3);
        let mut rt = SubRuntime::new(&net, Mode::EventDriven).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            rt.step(&[rng.random_range(-3.0..3.0)]).unwrap();
            for st in rt.layer_states() {
                prop_assert!(st.spikes.iter().all(|&s| s == 0.0 || s == 1.0));
                for (&s, (&v, &th)) in st.spikes.iter().zip(st.membrane.iter().zip(&net.layers[0].params.theta)) {
                    prop_assert_eq!(s == 1.0, v >= th);
                }
            }
        }
    }

    #[test]
    fn quiescence_for_positive_thresholds(seed in 0u64..1000, theta in 0.001f32..5.0) {
        let mut spec = small_spec(seed, ControllerVariant::Pwm);
        for l in spec.estimator.layers.iter_mut().chain(spec.controller.layers.iter_mut()) {
            l.params.theta = vec![theta; l.size()];
        }
        let mut net = Network::with_mode(&spec, Mode::EventDriven).unwrap();
        for _ in 0..30 {
            let (s, u) = net.step(&[0.0; IMU_DIM], &[0.0; REF_DIM]).unwrap();
            prop_assert!(s.iter().chain(u).all(|&v| v == 0.0));
        }
    }
}
